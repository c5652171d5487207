//! Command-line front end. Every command reads one JSON run config and
//! writes its results into an output directory.
//!
//! Exit codes: 0 success, 2 bad config or arguments, 3 simulation failure,
//! 4 optimization found no feasible shape.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::error::{OptError, SimError, StageError};
use crate::model::{validate_shape, ShapeCheck, DEFAULT_NX};
use crate::multistage::{run_protocol, sweep_stage_ratios};
use crate::optim::multistart;
use crate::sim::{initial_state, run, Mode};

use config::{shape_from, Payload, RunConfig};
use output::{OptimizeReport, RunSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SIMULATION: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "memsep",
    version,
    about = "Membrane pore-shape simulation and design"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Overrides the optimizer seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for multistart and sweeps.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Also write pore radius snapshots.
    #[arg(long, global = true)]
    pub emit_profile: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Simulate one fixed shape.
    Simulate,
    /// Search for an optimal shape.
    Optimize,
    /// Run a staged separation protocol.
    Multistage,
    /// Rank stage-ratio candidates.
    Sweep,
    /// Check a shape against the radius bounds.
    Feasibility,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("simulation: {0}")]
    Simulation(String),
    #[error("no feasible shape: {0}")]
    Infeasible(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Simulation(_) => EXIT_SIMULATION,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("output: {e}"))
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) => CliError::Config(e.to_string()),
            other => CliError::Simulation(other.to_string()),
        }
    }
}

impl From<OptError> for CliError {
    fn from(e: OptError) -> Self {
        match e {
            OptError::Sim(s) => s.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<StageError> for CliError {
    fn from(e: StageError) -> Self {
        match e {
            StageError::Sim(s) => s.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("memsep: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let cfg = RunConfig::parse(&text).map_err(CliError::Config)?;
    std::fs::create_dir_all(&cli.out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| dispatch(cli, &cfg))
}

fn mismatch(command: Command) -> CliError {
    CliError::Config(format!("config payload does not match command {command:?}"))
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> Result<(), CliError> {
    let feed = cfg.feed.build().map_err(CliError::Config)?;
    let mut sim = cfg.sim.build().map_err(CliError::Config)?;
    let payload = cfg.payload().map_err(CliError::Config)?;
    let out = cli.out.as_path();
    match (cli.command, payload) {
        (Command::Simulate, Payload::Simulate(s)) => {
            let shape = shape_from(&s.shape).map_err(CliError::Config)?;
            sim.record_profiles = cli.emit_profile;
            let record = run(&shape, &feed, &sim)?;
            write_run(&record, out, "timeseries.csv", cli.emit_profile)?;
            output::write_json(&RunSummary::from_record(&record), &out.join("summary.json"))?;
            Ok(())
        }
        (Command::Optimize, Payload::Optimize(o)) => {
            let problem = o
                .problem(feed.clone(), sim.clone())
                .map_err(CliError::Config)?;
            let search = o.search(cli.seed);
            let clock = Instant::now();
            let result = multistart(&problem, &search)?;
            eprintln!(
                "memsep: {} local searches, {} evaluations in {:.1} s",
                result.local_optima.len() + result.survey.len(),
                result.evaluations,
                clock.elapsed().as_secs_f64()
            );
            let mut best_sim = sim.clone();
            best_sim.record_profiles = cli.emit_profile;
            let record = run(&result.best_shape(), &feed, &best_sim).ok();
            if let Some(r) = &record {
                write_run(r, out, "optimum_timeseries.csv", cli.emit_profile)?;
            }
            let report = OptimizeReport::new(
                o.problem.as_str().into(),
                o.method.as_str().into(),
                search.n_starts,
                &result,
                record.as_ref().map(RunSummary::from_record),
            );
            output::write_json(&report, &out.join("optimum.json"))?;
            if result.feasible {
                Ok(())
            } else {
                Err(CliError::Infeasible(format!(
                    "best violation {:.3e}",
                    result.evaluation.feasibility.violation
                )))
            }
        }
        (Command::Multistage, Payload::Multistage(m)) => {
            let shape = shape_from(&m.shape).map_err(CliError::Config)?;
            let plan = m.plan().map_err(CliError::Config)?;
            let result = run_protocol(&plan, &shape, &feed, &sim)?;
            output::write_protocol(
                m.design_removal,
                &result,
                output::create(&out.join("multistage.csv"))?,
            )?;
            output::write_ledger([(None, &result)], output::create(&out.join("ledger.csv"))?)?;
            Ok(())
        }
        (Command::Sweep, Payload::Sweep(s)) => {
            let shape = shape_from(&s.shape).map_err(CliError::Config)?;
            let candidates: Vec<_> = s.candidates.iter().map(|c| c.build()).collect();
            let rows = sweep_stage_ratios(&candidates, s.design_removal, &shape, &feed, &sim)?;
            output::write_sweep(&rows, output::create(&out.join("sweep.csv"))?)?;
            output::write_ledger(
                rows.iter().map(|r| (Some(r.candidate), &r.result)),
                output::create(&out.join("sweep_ledger.csv"))?,
            )?;
            Ok(())
        }
        (Command::Feasibility, _) => {
            let coeffs = cfg
                .shape()
                .ok_or_else(|| CliError::Config("payload carries no shape".into()))?;
            let shape = shape_from(coeffs).map_err(CliError::Config)?;
            let report = feasibility_report(&shape, &feed, &sim)?;
            println!(
                "{}",
                if report.feasible {
                    "feasible"
                } else {
                    "infeasible"
                }
            );
            output::write_json(&report, &out.join("feasibility.json"))?;
            Ok(())
        }
        (command, _) => Err(mismatch(command)),
    }
}

fn write_run(
    record: &crate::sim::SimRecord,
    out: &Path,
    name: &str,
    profiles: bool,
) -> Result<(), CliError> {
    output::write_time_series(record, output::create(&out.join(name))?)?;
    if profiles {
        output::write_profiles(record, output::create(&out.join("profiles.csv"))?)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct FeasibilityReport {
    feasible: bool,
    violation_x: Option<f64>,
    violation_value: Option<f64>,
    initial_flux: Option<f64>,
    initial_removal: Option<Vec<f64>>,
    inlet_pressure: Option<f64>,
}

fn feasibility_report(
    shape: &crate::model::ShapeFunction,
    feed: &crate::model::FeedSpec,
    sim: &crate::sim::SimConfig,
) -> Result<FeasibilityReport, CliError> {
    let check = validate_shape(shape, DEFAULT_NX.max(sim.n_x))
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(match check {
        ShapeCheck::Violation { x, value } => FeasibilityReport {
            feasible: false,
            violation_x: Some(x),
            violation_value: Some(value),
            initial_flux: None,
            initial_removal: None,
            inlet_pressure: None,
        },
        ShapeCheck::Feasible => {
            let state = initial_state(shape, feed, sim).ok();
            let flux = state.as_ref().map(|s| s.flux);
            let pressure = flux
                .filter(|_| sim.mode == Mode::ConstantFlux)
                .map(|u| 1.0 / u);
            FeasibilityReport {
                feasible: pressure.is_none_or(|p| p <= sim.p_init_max),
                violation_x: None,
                violation_value: None,
                initial_flux: flux,
                initial_removal: state.map(|s| s.removal),
                inlet_pressure: pressure,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::output::read_numeric_csv;

    fn write_config(dir: &Path, text: &str) -> PathBuf {
        let p = dir.join("run.json");
        std::fs::write(&p, text).unwrap();
        p
    }

    fn invoke(command: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
        let mut args = vec![
            "memsep".to_string(),
            command.to_string(),
            "--config".into(),
            config.display().to_string(),
            "--out".into(),
            out.display().to_string(),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        run_cli(args)
    }

    const SIMULATE: &str = r#"{
        "feed": {"xi": [0.9, 0.1], "beta": [1, 0.1]},
        "simulate": {"shape": [1.0, -0.6]}
    }"#;

    #[test]
    fn simulate_writes_series_summary_and_profiles() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), SIMULATE);
        let out = dir.path().join("out");
        assert_eq!(invoke("simulate", &cfg, &out, &["--emit-profile"]), EXIT_OK);
        let series =
            read_numeric_csv(std::fs::File::open(out.join("timeseries.csv")).unwrap()).unwrap();
        assert_eq!(series.header[4], "c_ins_1");
        assert!(series.rows.len() > 10);
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap())
                .unwrap();
        assert_eq!(summary["stop"], "flux_threshold");
        let j = summary["throughput"].as_f64().unwrap();
        assert!((series.rows.last().unwrap()[2] - j).abs() <= 1e-8 * j);
        let profiles =
            read_numeric_csv(std::fs::File::open(out.join("profiles.csv")).unwrap()).unwrap();
        assert_eq!(profiles.rows.len(), 201);
        assert!(profiles.rows.iter().all(|r| r[3] <= r[1]));
    }

    #[test]
    fn bad_configs_exit_with_code_2() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let unknown = write_config(
            dir.path(),
            r#"{"feed": {"xi": [1], "beta": [1]}, "simulate": {"shape": [1]}, "extra": 0}"#,
        );
        assert_eq!(invoke("simulate", &unknown, &out, &[]), EXIT_CONFIG);
        let cfg = write_config(dir.path(), SIMULATE);
        assert_eq!(invoke("optimize", &cfg, &out, &[]), EXIT_CONFIG);
        assert_eq!(run_cli(["memsep", "simulate"]), EXIT_CONFIG);
        assert_eq!(run_cli(["memsep", "launch"]), EXIT_CONFIG);
        let missing = dir.path().join("absent.json");
        assert_eq!(invoke("simulate", &missing, &out, &[]), EXIT_CONFIG);
    }

    #[test]
    fn pore_closure_exits_with_code_3() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(
            dir.path(),
            r#"{"feed": {"xi": [1], "beta": [1]}, "sim": {"mode": "constant_flux", "steps": 10}, "simulate": {"shape": [0.05]}}"#,
        );
        assert_eq!(
            invoke("simulate", &cfg, &dir.path().join("o"), &[]),
            EXIT_SIMULATION
        );
    }

    #[test]
    fn unreachable_removal_exits_with_code_4() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(
            dir.path(),
            r#"{"feed": {"species": [{"xi": 1, "lambda": 0, "beta": 1}]},
                "optimize": {"problem": "weighted_throughput", "weights": [1, 0], "method": "fast", "n_starts": 2}}"#,
        );
        let out = dir.path().join("o");
        assert_eq!(invoke("optimize", &cfg, &out, &[]), EXIT_INFEASIBLE);
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("optimum.json")).unwrap())
                .unwrap();
        assert_eq!(report["feasible"], false);
    }

    #[test]
    fn optimize_output_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(
            dir.path(),
            r#"{"feed": {"xi": [0.5, 0.5], "beta": [1, 0.1]},
                "optimize": {"problem": "yield", "method": "fast", "n_starts": 6, "seed": 3}}"#,
        );
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        assert_eq!(invoke("optimize", &cfg, &a, &["--threads", "1"]), EXIT_OK);
        assert_eq!(invoke("optimize", &cfg, &b, &["--threads", "3"]), EXIT_OK);
        for name in ["optimum.json", "optimum_timeseries.csv"] {
            assert_eq!(
                std::fs::read(a.join(name)).unwrap(),
                std::fs::read(b.join(name)).unwrap(),
                "{name}"
            );
        }
        let c = dir.path().join("c");
        assert_eq!(invoke("optimize", &cfg, &c, &["--seed", "4"]), EXIT_OK);
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(c.join("optimum.json")).unwrap())
                .unwrap();
        assert_eq!(report["seed"], 4);
    }

    #[test]
    fn multistage_and_sweep_tables() {
        let dir = tempfile::tempdir().unwrap();
        let feed = r#""feed": {"xi": [0.9, 0.1], "beta": [1, 0.1]}"#;
        let ms = write_config(
            dir.path(),
            &format!(
                r#"{{{feed}, "multistage": {{"shape": [1, 0], "design_removal": 0.5, "stages": [1, 1]}}}}"#
            ),
        );
        let out = dir.path().join("ms");
        assert_eq!(invoke("multistage", &ms, &out, &[]), EXIT_OK);
        let table = std::fs::read_to_string(out.join("multistage.csv")).unwrap();
        let mut lines = table.lines();
        assert!(lines
            .next()
            .unwrap()
            .starts_with("design_removal,stage_filters,stage_uses,M,"));
        assert!(lines
            .next()
            .unwrap()
            .starts_with("5.00000000e-1,1;1,1;4,2,"));
        let ledger = std::fs::read_to_string(out.join("ledger.csv")).unwrap();
        assert_eq!(ledger.lines().count(), 3);

        let sw = write_config(
            dir.path(),
            &format!(
                r#"{{{feed}, "sweep": {{"shape": [1, 0], "design_removal": 0.5, "candidates": [[1, 1], [2, 1]]}}}}"#
            ),
        );
        let out = dir.path().join("sw");
        assert_eq!(invoke("sweep", &sw, &out, &[]), EXIT_OK);
        let table = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
        assert_eq!(table.lines().count(), 3);
        assert!(table.lines().nth(1).unwrap().starts_with("1,"));
    }

    #[test]
    fn feasibility_reports_bound_violations() {
        let dir = tempfile::tempdir().unwrap();
        let bad = write_config(
            dir.path(),
            r#"{"feed": {"xi": [1], "beta": [1]}, "simulate": {"shape": [1, 0.5]}}"#,
        );
        let out = dir.path().join("f");
        assert_eq!(invoke("feasibility", &bad, &out, &[]), EXIT_OK);
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("feasibility.json")).unwrap())
                .unwrap();
        assert_eq!(report["feasible"], false);
        assert!(report["violation_value"].as_f64().unwrap() > 1.0);

        let good = write_config(dir.path(), SIMULATE);
        assert_eq!(invoke("feasibility", &good, &out, &[]), EXIT_OK);
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("feasibility.json")).unwrap())
                .unwrap();
        assert_eq!(report["feasible"], true);
        assert!(report["initial_removal"][0].as_f64().unwrap() > 0.9);
    }
}
