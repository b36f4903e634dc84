//! Scenario runner behind the `mreach` binary.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use mreach_core::export::{self, FigureInputs};
use mreach_core::montecarlo::{validate_with_estimate, SimulationReport};
use mreach_core::propagation::verify_policy;
use mreach_core::scenario::{Initial, Mode};
use mreach_core::synthesis::{feasible_initial_set, synthesize_policy, SynthesisReport};
use mreach_core::{AffinePolicy, Scenario, SynthesisConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CERTIFICATE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] mreach_core::Error),
}

/// What a successful run found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    Certified,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Clean => EXIT_OK,
            Outcome::Certified => EXIT_CERTIFICATE,
        }
    }

    fn from_certified(certified: bool) -> Self {
        if certified {
            Outcome::Certified
        } else {
            Outcome::Clean
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mreach", version, about = "Almost-sure reach-avoid analysis over 1-D probability measures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Monte Carlo seed (overrides the scenario).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo trajectory count (overrides the scenario).
    #[arg(long)]
    pub n: Option<u64>,
    /// Constraint tolerance (overrides the scenario).
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Propagate the state measure and write trace CSVs.
    Propagate(Common),
    /// Check the constraint schedule and write the verification report.
    Verify(Common),
    /// Synthesize a policy and write the synthesis report and trace CSVs.
    Synthesize(Common),
    /// Classify a grid of initial measures.
    FeasibleSet(Common),
    /// Simulate trajectories, estimate the reach-avoid probability and
    /// validate the analytic trace.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write every trajectory to trajectories.csv.
        #[arg(long)]
        dump_trajectories: bool,
    },
    /// Write cdf grids for figure rendering.
    ExportFigures {
        #[command(flatten)]
        common: Common,
        /// Comma-separated display stddevs; an empty value exports only the
        /// atom-limit curves. Defaults to the scenario's list.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        sigmas: Option<Vec<f64>>,
    },
}

struct Loaded {
    scenario: Scenario,
    out: PathBuf,
}

fn load(common: &Common) -> Result<Loaded, CliError> {
    let mut scenario = Scenario::load(&common.scenario).map_err(|e| {
        CliError::Usage(format!("{}: {e}", common.scenario.display()))
    })?;
    if let Some(seed) = common.seed {
        scenario.monte_carlo.seed = seed;
    }
    if let Some(n) = common.n {
        scenario.monte_carlo.n = usize::try_from(n)
            .map_err(|_| CliError::Usage(format!("--n {n} is too large")))?;
    }
    if let Some(tol) = common.tol {
        scenario.tol = tol;
    }
    scenario
        .validate()
        .map_err(|e| CliError::Usage(format!("{}: {e}", common.scenario.display())))?;
    std::fs::create_dir_all(&common.out).map_err(|e| {
        CliError::Usage(format!("cannot create {}: {e}", common.out.display()))
    })?;
    Ok(Loaded {
        scenario,
        out: common.out.clone(),
    })
}

fn synthesis_config(s: &Scenario) -> SynthesisConfig {
    let mut cfg = s.synthesis.clone().unwrap_or_default();
    cfg.tol = s.tol;
    cfg
}

fn synthesize(s: &Scenario) -> Result<SynthesisReport, CliError> {
    let init = s.initial_measure()?;
    Ok(synthesize_policy(
        init,
        &s.system,
        &s.avoid,
        &s.target,
        s.waypoints.as_deref(),
        &synthesis_config(s),
    )?)
}

/// The scenario's fixed policy, or a freshly synthesized one.
fn resolve_policy(s: &Scenario) -> Result<AffinePolicy, CliError> {
    match (s.mode(), &s.policy) {
        (Mode::Verify, Some(p)) => Ok(p.clone()),
        (Mode::Synthesize, _) => Ok(synthesize(s)?.policy),
        _ => Err(CliError::Usage(
            "this command needs a scenario with `policy` or `synthesis`, not `initial.grid`".into(),
        )),
    }
}

fn write_trace(out: &Path, s: &Scenario, trace: &mreach_core::PropagationTrace) -> Result<(), CliError> {
    export::write_trace_components(&out.join("trace_components.csv"), trace)?;
    let (lo, hi) = window(s, &trace.measures.iter().collect::<Vec<_>>());
    let grid = export::uniform_grid(lo, hi, s.export.points);
    export::write_trace_cdf(&out.join("trace_cdf.csv"), trace, &grid)?;
    Ok(())
}

fn window(s: &Scenario, measures: &[&mreach_core::Measure1D]) -> (f64, f64) {
    let (lo, hi) = export::auto_window(measures, &[&s.avoid, &s.target]);
    let lo = s.export.x_min.unwrap_or(lo);
    let hi = s.export.x_max.unwrap_or(hi);
    if lo < hi {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    }
}

fn print_certificates(certs: &[mreach_core::Certificate]) {
    for c in certs {
        println!("certificate: {c}");
    }
}

fn cmd_propagate(common: &Common) -> Result<Outcome, CliError> {
    let Loaded { scenario: s, out } = load(common)?;
    let policy = resolve_policy(&s)?;
    let v = verify_policy(s.initial_measure()?, &policy, &s.system, &s.avoid, &s.target, s.tol)?;
    write_trace(&out, &s, &v.trace)?;
    println!(
        "propagated {} steps; terminal mean {:.6}, variance {:.6}",
        s.system.horizon(),
        v.trace.measures.last().map_or(f64::NAN, |m| m.mean()),
        v.trace.measures.last().map_or(f64::NAN, |m| m.variance()),
    );
    Ok(Outcome::Clean)
}

fn cmd_verify(common: &Common) -> Result<Outcome, CliError> {
    let Loaded { scenario: s, out } = load(common)?;
    let policy = resolve_policy(&s)?;
    let v = verify_policy(s.initial_measure()?, &policy, &s.system, &s.avoid, &s.target, s.tol)?;
    export::write_json(
        &out.join("verification.json"),
        &json!({
            "scenario": s.name,
            "tol": s.tol,
            "policy": policy,
            "passed": v.passed(),
            "certificate": v.certificate(),
            "certificates": v.certificates,
            "trace": v.trace,
        }),
    )?;
    write_trace(&out, &s, &v.trace)?;
    if v.passed() {
        println!("verified: every constraint holds at tol {:e}", s.tol);
    }
    print_certificates(&v.certificates);
    Ok(Outcome::from_certified(!v.passed()))
}

fn cmd_synthesize(common: &Common) -> Result<Outcome, CliError> {
    let Loaded { scenario: s, out } = load(common)?;
    if s.mode() == Mode::FeasibleSet {
        return Err(CliError::Usage(
            "`synthesize` needs a single initial measure; use `feasible-set` for grids".into(),
        ));
    }
    let report = synthesize(&s)?;
    export::write_json(&out.join("synthesis_report.json"), &report)?;
    write_trace(&out, &s, &report.trace)?;
    for (k, (step, sat)) in report.policy.steps.iter().zip(&report.saturated).enumerate() {
        println!(
            "step {k}: h = {}, v = {}{}",
            step.gain,
            step.feedforward,
            if *sat { " (saturated)" } else { "" }
        );
    }
    print_certificates(&report.certificates);
    Ok(Outcome::from_certified(!report.passed()))
}

fn cmd_feasible_set(common: &Common) -> Result<Outcome, CliError> {
    let Loaded { scenario: s, out } = load(common)?;
    let Initial::Grid(grid) = &s.initial else {
        return Err(CliError::Usage(
            "`feasible-set` needs a scenario with `initial.grid`".into(),
        ));
    };
    let mut cfg = grid.synthesis.clone();
    cfg.tol = s.tol;
    let result = feasible_initial_set(&s.system, &s.avoid, &s.target, &grid.axes, &cfg)?;
    export::write_json(&out.join("feasible_set.json"), &result)?;
    export::write_feasibility_grid(&out.join("feasible_set.csv"), &result)?;
    let feasible = result.feasible_cells().count();
    println!("{feasible} of {} cells feasible", result.cells.len());
    Ok(Outcome::from_certified(feasible == 0))
}

fn cmd_simulate(common: &Common, dump: bool) -> Result<Outcome, CliError> {
    let Loaded { scenario: s, out } = load(common)?;
    let policy = resolve_policy(&s)?;
    let v = verify_policy(s.initial_measure()?, &policy, &s.system, &s.avoid, &s.target, s.tol)?;
    let mc = &s.monte_carlo;
    let (report, traj): (SimulationReport, _) = validate_with_estimate(
        &v.trace,
        &s.system,
        &policy,
        &s.avoid,
        &s.target,
        mc.n,
        mc.seed,
        mc.alpha,
        mc.couple_random_sets,
    )?;
    export::write_json(
        &out.join("simulation_report.json"),
        &json!({
            "scenario": s.name,
            "report": report,
            "certificates": v.certificates,
        }),
    )?;
    if dump {
        export::write_trajectories(&out.join("trajectories.csv"), &traj)?;
    }
    println!(
        "reach-avoid estimate {} over {} trajectories (seed {})",
        report.reach_avoid_estimate.unwrap_or(f64::NAN),
        report.n,
        report.seed
    );
    if report.flagged {
        eprintln!(
            "warning: a per-step KS distance exceeds the DKW bound {:.6}",
            report.dkw_bound
        );
    }
    print_certificates(&v.certificates);
    Ok(Outcome::from_certified(!v.passed()))
}

fn cmd_export_figures(common: &Common, sigmas: Option<&[f64]>) -> Result<Outcome, CliError> {
    let Loaded { scenario: s, out } = load(common)?;
    let sigmas = sigmas.unwrap_or(&s.export.sigmas).to_vec();
    if let Some(bad) = sigmas.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(CliError::Usage(format!("--sigmas: {bad} is not a positive stddev")));
    }
    let policy = resolve_policy(&s)?;
    let init = s.initial_measure()?;
    let unbounded_sys = s
        .system
        .with_input_bounds(f64::NEG_INFINITY, f64::INFINITY)?;
    let unbounded = synthesize_policy(
        init,
        &unbounded_sys,
        &s.avoid,
        &s.target,
        s.waypoints.as_deref(),
        &synthesis_config(&s),
    )?
    .policy;
    let inputs = FigureInputs {
        init,
        policy: &policy,
        unbounded_policy: Some(&unbounded),
        sys: &s.system,
        avoid: &s.avoid,
        target: &s.target,
    };
    let window = match (s.export.x_min, s.export.x_max) {
        (Some(lo), Some(hi)) => Some((lo, hi)),
        _ => None,
    };
    let files = export::export_figure_data(&inputs, &sigmas, window, s.export.points, &out)?;
    export::write_json(
        &out.join("figures.json"),
        &json!({
            "scenario": s.name,
            "sigmas": sigmas,
            "policy": policy,
            "unbounded_policy": unbounded,
            "files": files.iter().map(|p| p.file_name().unwrap().to_string_lossy()).collect::<Vec<_>>(),
        }),
    )?;
    for f in &files {
        println!("wrote {}", f.display());
    }
    Ok(Outcome::Clean)
}

/// Cap rayon's worker count from `MREACH_THREADS`.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("MREACH_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Usage(format!("MREACH_THREADS={raw} is not a positive integer")))?;
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    configure_threads()?;
    match &cli.command {
        Command::Propagate(c) => cmd_propagate(c),
        Command::Verify(c) => cmd_verify(c),
        Command::Synthesize(c) => cmd_synthesize(c),
        Command::FeasibleSet(c) => cmd_feasible_set(c),
        Command::Simulate {
            common,
            dump_trajectories,
        } => cmd_simulate(common, *dump_trajectories),
        Command::ExportFigures { common, sigmas } => cmd_export_figures(common, sigmas.as_deref()),
    }
}

/// Parse `args`, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
