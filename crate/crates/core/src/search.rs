//! Bounded scalar minimization: a coarse grid locates the basin, then
//! golden-section search refines inside the neighbouring grid cells.
//!
//! Ties (exactly equal objective values) go to the smallest `|x|`, then to
//! the smallest `x`. Only the ordering of objective values matters, so
//! scaling the objective by a positive constant leaves the result alone.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineMin {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

fn ties(a: f64, b: f64) -> bool {
    a == b
}

/// Whether `(x, v)` should replace the incumbent `(bx, bv)`.
fn improves(x: f64, v: f64, bx: f64, bv: f64) -> bool {
    if v.is_nan() {
        return false;
    }
    if bv.is_nan() {
        return true;
    }
    if ties(v, bv) {
        x.abs() < bx.abs() || (x.abs() == bx.abs() && x < bx)
    } else {
        v < bv
    }
}

/// Minimize `f` over `[lo, hi]` with `grid_points` evenly spaced samples
/// (endpoints included, plus `x = 0` when it lies inside) followed by
/// `refine_iters` golden-section iterations.
pub fn minimize<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    grid_points: usize,
    refine_iters: usize,
) -> LineMin {
    assert!(lo <= hi && lo.is_finite() && hi.is_finite(), "bad search bracket [{lo}, {hi}]");
    let mut evals = 0usize;
    let mut eval = |x: f64| {
        evals += 1;
        f(x)
    };

    if lo == hi {
        let value = eval(lo);
        return LineMin {
            x: lo,
            value,
            evaluations: 1,
        };
    }

    let n = grid_points.max(2);
    let grid: Vec<f64> = (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect();

    let mut best_i = 0;
    let mut bx = grid[0];
    let mut bv = eval(bx);
    for (i, &x) in grid.iter().enumerate().skip(1) {
        let v = eval(x);
        if improves(x, v, bx, bv) {
            best_i = i;
            bx = x;
            bv = v;
        }
    }
    if lo < 0.0 && hi > 0.0 && !grid.contains(&0.0) {
        let v = eval(0.0);
        if improves(0.0, v, bx, bv) {
            bx = 0.0;
            bv = v;
        }
    }

    if refine_iters > 0 {
        let mut a = grid[best_i.saturating_sub(1)];
        let mut b = grid[(best_i + 1).min(n - 1)];
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = eval(c);
        let mut fd = eval(d);
        for _ in 0..refine_iters {
            for (x, v) in [(c, fc), (d, fd)] {
                if improves(x, v, bx, bv) {
                    bx = x;
                    bv = v;
                }
            }
            if fc < fd || (ties(fc, fd) && c.abs() <= d.abs()) {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = eval(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = eval(d);
            }
        }
        for (x, v) in [(c, fc), (d, fd)] {
            if improves(x, v, bx, bv) {
                bx = x;
                bv = v;
            }
        }
    }

    LineMin {
        x: bx,
        value: bv,
        evaluations: evals,
    }
}
