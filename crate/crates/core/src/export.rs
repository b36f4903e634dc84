//! CSV and JSON artifacts: traces, cdf grids, feasibility maps, trajectory
//! dumps and the figure data sets.
//!
//! Reals are written with 17 significant digits so that any IEEE double
//! round-trips exactly. Every CSV has a header row.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::Measure1D;
use crate::montecarlo::Trajectories;
use crate::propagation::{propagate_step, AffinePolicy, PropagationTrace, SystemModel};
use crate::sets::RandomSetSpec;
use crate::synthesis::FeasibilityGrid;
use crate::transport::target_reference_cdf;

pub fn fmt_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("cannot write {}: {e}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| io_err(path, e))
}

fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Pretty-printed JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(path, e))?;
    w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

/// `points` evenly spaced values, both endpoints included.
pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2 && lo < hi, "bad grid [{lo}, {hi}] with {points} points");
    (0..points)
        .map(|i| {
            if i == points - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (points - 1) as f64
            }
        })
        .collect()
}

/// Window covering every atom and four stddevs around every Gaussian of
/// `measures`, plus the finite endpoints of the given sets, padded by half
/// a unit on each side.
pub fn auto_window(measures: &[&Measure1D], sets: &[&RandomSetSpec]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for m in measures {
        let (a, b) = m.bracket(4.0);
        lo = lo.min(a);
        hi = hi.max(b);
    }
    for s in sets {
        for b in s.branches() {
            for iv in b.region.intervals() {
                for e in [iv.lo(), iv.hi()] {
                    if e.is_finite() {
                        lo = lo.min(e);
                        hi = hi.max(e);
                    }
                }
            }
        }
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return (-1.0, 1.0);
    }
    (lo - 0.5, hi + 0.5)
}

/// `step, component_index, weight, mean, stddev`.
pub fn write_trace_components(path: &Path, trace: &PropagationTrace) -> Result<()> {
    let rows = trace.measures.iter().enumerate().flat_map(|(k, m)| {
        m.components().iter().enumerate().map(move |(i, c)| {
            vec![
                k.to_string(),
                i.to_string(),
                fmt_real(c.weight),
                fmt_real(c.mean),
                fmt_real(c.stddev),
            ]
        })
    });
    write_rows(
        path,
        &strings(&["step", "component_index", "weight", "mean", "stddev"]),
        rows,
    )
}

/// `step, grid_x, cdf_value` for every measure of the trace.
pub fn write_trace_cdf(path: &Path, trace: &PropagationTrace, grid: &[f64]) -> Result<()> {
    let rows = trace.measures.iter().enumerate().flat_map(|(k, m)| {
        grid.iter()
            .map(move |&x| vec![k.to_string(), fmt_real(x), fmt_real(m.cdf(x))])
    });
    write_rows(path, &strings(&["step", "grid_x", "cdf_value"]), rows)
}

/// `trajectory_id, step, x`.
pub fn write_trajectories(path: &Path, traj: &Trajectories) -> Result<()> {
    let rows = traj.rows().enumerate().flat_map(|(i, row)| {
        row.iter()
            .enumerate()
            .map(move |(k, &x)| vec![i.to_string(), k.to_string(), fmt_real(x)])
    });
    write_rows(path, &strings(&["trajectory_id", "step", "x"]), rows)
}

/// One row per cell: up to two `(weight, mean, stddev)` triples, the label,
/// the residual, the first certificate and the first policy step.
pub fn write_feasibility_grid(path: &Path, grid: &FeasibilityGrid) -> Result<()> {
    let header = strings(&[
        "cell_index",
        "weight_1",
        "mean_1",
        "stddev_1",
        "weight_2",
        "mean_2",
        "stddev_2",
        "label",
        "residual",
        "certificate_kind",
        "certificate_step",
        "gain_0",
        "feedforward_0",
    ]);
    let rows = grid.cells.iter().map(|cell| {
        let mut row = vec![cell.index.to_string()];
        for j in 0..2 {
            match cell.components.get(j) {
                Some(&(w, m, s)) => row.extend([fmt_real(w), fmt_real(m), fmt_real(s)]),
                None => row.extend([String::new(), String::new(), String::new()]),
            }
        }
        row.push(
            match cell.label {
                crate::synthesis::CellLabel::Feasible => "feasible",
                crate::synthesis::CellLabel::Infeasible => "infeasible",
            }
            .into(),
        );
        row.push(fmt_real(cell.residual));
        match &cell.certificate {
            Some(c) => row.extend([c.kind.to_string(), c.step.to_string()]),
            None => row.extend([String::new(), String::new()]),
        }
        match cell.policy.steps.first() {
            Some(s) => row.extend([fmt_real(s.gain), fmt_real(s.feedforward)]),
            None => row.extend([String::new(), String::new()]),
        }
        row
    });
    write_rows(path, &header, rows)
}

/// `Σ_j p_j · 1[x ∈ region_j]`, the indicator-valued measure of a random set
/// evaluated at `x`.
pub fn random_set_indicator(s: &RandomSetSpec, x: f64) -> f64 {
    s.branches()
        .iter()
        .filter(|b| b.region.contains(x))
        .map(|b| b.weight)
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// Inputs of a figure export.
pub struct FigureInputs<'a> {
    /// Exact (atomic) initial measure.
    pub init: &'a Measure1D,
    pub policy: &'a AffinePolicy,
    /// Policy for the same problem with the input bounds removed, if any.
    pub unbounded_policy: Option<&'a AffinePolicy>,
    pub sys: &'a SystemModel,
    pub avoid: &'a RandomSetSpec,
    pub target: &'a RandomSetSpec,
}

fn propagate_all(init: &Measure1D, policy: &AffinePolicy, sys: &SystemModel) -> Result<Vec<Measure1D>> {
    let mut out = vec![init.clone()];
    for (k, step) in policy.steps.iter().enumerate() {
        let next = propagate_step(&out[k], step, sys, k)?;
        out.push(next);
    }
    Ok(out)
}

/// File name of the cdf export for one display σ.
pub fn sigma_file_name(sigma: f64) -> String {
    format!("cdf_sigma_{sigma}.csv")
}

/// Write `reference.csv` (atom-limit curves and set indicators) and one
/// `cdf_sigma_<σ>.csv` per requested σ, where the initial atoms are replaced
/// by Gaussians of that stddev. Returns the files written.
pub fn export_figure_data(
    inputs: &FigureInputs<'_>,
    sigmas: &[f64],
    window: Option<(f64, f64)>,
    points: usize,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let sys = inputs.sys;
    let unbounded_sys = sys.with_input_bounds(f64::NEG_INFINITY, f64::INFINITY)?;
    let n = sys.horizon();

    let curves = |init: &Measure1D| -> Result<(Vec<Measure1D>, Option<Measure1D>)> {
        let bounded = propagate_all(init, inputs.policy, sys)?;
        let unbounded = match inputs.unbounded_policy {
            Some(p) => propagate_all(init, p, &unbounded_sys)?.pop(),
            None => None,
        };
        Ok((bounded, unbounded))
    };

    let atom = curves(inputs.init)?;
    let per_sigma = sigmas
        .iter()
        .map(|&s| curves(&inputs.init.with_stddev(s)?))
        .collect::<Result<Vec<_>>>()?;

    let (lo, hi) = window.unwrap_or_else(|| {
        let mut ms: Vec<&Measure1D> = atom.0.iter().collect();
        ms.extend(atom.1.iter());
        auto_window(&ms, &[inputs.avoid, inputs.target])
    });
    let grid = uniform_grid(lo, hi, points);

    let step_names = |suffix: &str| -> Vec<String> {
        (0..=n).map(|k| format!("x{k}_{suffix}")).collect()
    };
    let mut written = Vec::new();

    let mut header = strings(&["grid_x", "tube_measure", "target_measure", "target_reference"]);
    header.extend(step_names("atom_cdf"));
    if atom.1.is_some() {
        header.push(format!("x{n}_unbounded_atom_cdf"));
    }
    let path = out_dir.join("reference.csv");
    let tube = inputs.avoid.complement();
    write_rows(
        &path,
        &header,
        grid.iter().map(|&x| {
            let mut row = vec![
                fmt_real(x),
                fmt_real(random_set_indicator(&tube, x)),
                fmt_real(random_set_indicator(inputs.target, x)),
                fmt_real(target_reference_cdf(inputs.target, x)),
            ];
            row.extend(atom.0.iter().map(|m| fmt_real(m.cdf(x))));
            row.extend(atom.1.iter().map(|m| fmt_real(m.cdf(x))));
            row
        }),
    )?;
    written.push(path);

    for (&sigma, (bounded, unbounded)) in sigmas.iter().zip(&per_sigma) {
        let mut header = vec!["grid_x".to_string()];
        header.extend(step_names("cdf"));
        if unbounded.is_some() {
            header.push(format!("x{n}_unbounded_cdf"));
        }
        let path = out_dir.join(sigma_file_name(sigma));
        write_rows(
            &path,
            &header,
            grid.iter().map(|&x| {
                let mut row = vec![fmt_real(x)];
                row.extend(bounded.iter().map(|m| fmt_real(m.cdf(x))));
                row.extend(unbounded.iter().map(|m| fmt_real(m.cdf(x))));
                row
            }),
        )?;
        written.push(path);
    }
    Ok(written)
}
