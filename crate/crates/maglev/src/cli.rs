//! Command-line frontend: the `simulate`, `compare`, and `stability`
//! subcommands, configuration loading, and override plumbing.
//!
//! Exit codes: 0 on success, 2 for configuration problems, 3 for
//! simulation or certification failures.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{self, ExperimentConfig};
use crate::feedback::{self, LyapunovConfig, PidController};
use crate::feedforward::MethodKind;
use crate::report::{self, MetricsRow, StabilityTrace};
use crate::sim::{
    error_metrics, run_closed_loop, run_open_loop, FeedbackLaw, FeedforwardEngine, Scenario,
    SimulationRecord,
};
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "maglev",
    version,
    about = "Feedforward comparison and stability analysis for a levitated planar actuator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the scenario x method grid; write one record CSV per run plus
    /// the combined metrics.
    Simulate(CommonArgs),
    /// Run the grid and additionally emit the comparison table and
    /// per-scenario plot data.
    Compare(CommonArgs),
    /// Certify closed-loop stability along the mismatch run and emit the
    /// Lyapunov trace.
    Stability(CommonArgs),
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// Experiment configuration (TOML); defaults are used when omitted.
    #[arg(long, env = "MAGLEV_CONFIG")]
    config: Option<PathBuf>,
    /// Feedforward methods to run, comma separated.
    #[arg(long, value_delimiter = ',')]
    method: Vec<String>,
    /// Scenarios to run, comma separated.
    #[arg(long, value_delimiter = ',')]
    scenario: Vec<String>,
    /// Initial-condition offsets, e.g. chi=5urad,x=1mm.
    #[arg(long, value_delimiter = ',')]
    mismatch: Vec<String>,
    /// Keep only the disturbed (on) or undisturbed (off) scenarios.
    #[arg(long, value_enum)]
    disturbance: Option<Toggle>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Toggle {
    On,
    Off,
}

/// Parses arguments, runs the selected command, and returns the process
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Simulate(args) => load(&args).and_then(|cfg| {
            let files = cmd_simulate(&cfg)?;
            println!("wrote {} files under {}", files.len(), cfg.run.out.display());
            Ok(())
        }),
        Command::Compare(args) => load(&args).and_then(|cfg| {
            let files = cmd_compare(&cfg)?;
            println!("wrote {} files under {}", files.len(), cfg.run.out.display());
            Ok(())
        }),
        Command::Stability(args) => load(&args).and_then(|cfg| {
            let outcome = cmd_stability(&cfg)?;
            println!("{}", outcome.verdict);
            Ok(())
        }),
    };
    match outcome {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Config(_) => 2,
                _ => 3,
            }
        }
    }
}

/// Loads the configuration and applies the command-line overrides.
fn load(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if !args.method.is_empty() {
        cfg.run.methods =
            args.method.iter().map(|m| m.parse()).collect::<Result<Vec<MethodKind>>>()?;
    }
    if !args.scenario.is_empty() {
        cfg.run.scenarios =
            args.scenario.iter().map(|s| s.parse()).collect::<Result<Vec<Scenario>>>()?;
    }
    for entry in &args.mismatch {
        let (index, value) = config::parse_mismatch_entry(entry)?;
        cfg.sim.mismatch[index] = value;
    }
    if let Some(toggle) = args.disturbance {
        let keep = toggle == Toggle::On;
        cfg.run.scenarios.retain(|s| s.disturbed() == keep);
        if cfg.run.scenarios.is_empty() {
            return Err(Error::Config(
                "the disturbance filter removed every scenario".into(),
            ));
        }
    }
    if let Some(out) = &args.out {
        cfg.run.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one scenario/method combination of a configuration.
pub fn run_one(
    cfg: &ExperimentConfig,
    scenario: Scenario,
    method: MethodKind,
) -> Result<SimulationRecord> {
    let mut ff = FeedforwardEngine::new(method, &cfg.plant)?;
    if scenario.closed_loop() {
        let mut fb = FeedbackLaw::Pid(PidController::new(cfg.feedback));
        let dist = scenario.disturbed().then_some(&cfg.disturbance);
        run_closed_loop(&cfg.sim, &cfg.plant, &mut ff, &mut fb, &cfg.trajectory, dist, scenario)
    } else {
        run_open_loop(&cfg.sim, &cfg.plant, &mut ff, &cfg.trajectory, scenario)
    }
}

fn execute(cfg: &ExperimentConfig, with_plots: bool) -> Result<Vec<PathBuf>> {
    let out = &cfg.run.out;
    let mut files = Vec::new();
    let mut rows = Vec::new();
    for &scenario in &cfg.run.scenarios {
        let mut records = Vec::new();
        for &method in &cfg.run.methods {
            let record = run_one(cfg, scenario, method)?;
            files.push(report::write_text(
                out,
                &report::record_file_name(scenario, method),
                &report::record_csv(&record),
            )?);
            rows.push(MetricsRow { scenario, method, metrics: error_metrics(&record)? });
            if with_plots {
                records.push(record);
            }
        }
        if with_plots {
            let refs: Vec<&SimulationRecord> = records.iter().collect();
            files.push(report::write_text(
                out,
                &report::plot_file_name(scenario),
                &report::plot_csv(&refs)?,
            )?);
        }
    }
    files.push(report::write_text(out, "metrics.csv", &report::metrics_csv(&rows))?);
    if with_plots {
        files.push(report::write_text(out, "metrics.txt", &report::metrics_table(&rows))?);
    }
    files.push(report::write_text(out, "manifest.json", &report::manifest_json(cfg)?)?);
    Ok(files)
}

/// Record CSVs plus combined metrics for the configured grid.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    execute(cfg, false)
}

/// The full grid plus the comparison table and plot data.
pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    execute(cfg, true)
}

/// Result of the stability command.
pub struct StabilityOutcome {
    /// Largest certified interconnection gain.
    pub epsilon: f64,
    pub trace: StabilityTrace,
    /// V > 0 at every sample away from equilibrium.
    pub value_positive: bool,
    /// Vdot <= 0 at every sample.
    pub rate_nonpositive: bool,
    pub verdict: String,
    pub files: Vec<PathBuf>,
}

/// File-free part of the stability command: the certified epsilon and the
/// per-sample Lyapunov trace.
pub struct StabilityAnalysis {
    pub epsilon: f64,
    pub trace: StabilityTrace,
    pub value_positive: bool,
    pub rate_nonpositive: bool,
    pub verdict: String,
}

/// Runs the mismatch scenario closed loop under the input-computation
/// feedforward and the stability controller, then searches for the largest
/// certifiable epsilon.
pub fn stability_analysis(cfg: &ExperimentConfig) -> Result<StabilityAnalysis> {
    let lyap = cfg.stability.lyapunov(&cfg.plant);
    lyap.validate()?;
    let mut ff = FeedforwardEngine::new(MethodKind::LpvGlobalIc, &cfg.plant)?;
    let mut fb = FeedbackLaw::Proportional(lyap.clone());
    let record = run_closed_loop(
        &cfg.sim,
        &cfg.plant,
        &mut ff,
        &mut fb,
        &cfg.trajectory,
        None,
        Scenario::ClMismatch,
    )?;

    // The certificates see the closed-loop damping, so any rate feedback
    // is folded into the plant friction before the search.
    let mut folded = cfg.plant.clone();
    if let Some(kv) = &lyap.kv {
        for i in 0..6 {
            folded.friction[i] += kv[(i, i)];
        }
    }
    let samples = record.stability_samples();
    let epsilon = feedback::find_epsilon(&samples, &lyap.kp, &folded)?;

    let certified = LyapunovConfig { epsilon, ..lyap };
    let mut trace = StabilityTrace::default();
    let mut value_positive = true;
    let mut rate_nonpositive = true;
    for k in 0..record.len() {
        let e = record.e[k];
        let edot = record.qd[k] - record.rd[k];
        let state = crate::dynamics::GeneralizedState::new(record.q[k], record.qd[k]);
        let value = feedback::lyapunov_value(&e, &edot, &record.q[k], &certified, &cfg.plant)?;
        let rate = feedback::lyapunov_rate(&e, &edot, &state, &certified, &cfg.plant)?;
        let (value_pd, rate_pd) =
            feedback::certificates_hold(&samples[k], &lyap.kp, &folded, epsilon)?;
        if e != crate::Vector6::zeros() || edot != crate::Vector6::zeros() {
            value_positive &= value > 0.0;
        }
        rate_nonpositive &= rate <= 0.0;
        trace.t.push(record.t[k]);
        trace.value.push(value);
        trace.rate.push(rate);
        trace.value_pd.push(value_pd);
        trace.rate_pd.push(rate_pd);
    }

    let verdict = if rate_nonpositive {
        format!("stable: ε* = {epsilon}, V̇ ≤ 0 at all samples")
    } else {
        format!("inconclusive: ε* = {epsilon}, but V̇ > 0 at some sample")
    };
    Ok(StabilityAnalysis { epsilon, trace, value_positive, rate_nonpositive, verdict })
}

/// Runs the stability analysis and writes the trace and manifest.
pub fn cmd_stability(cfg: &ExperimentConfig) -> Result<StabilityOutcome> {
    let StabilityAnalysis { epsilon, trace, value_positive, rate_nonpositive, verdict } =
        stability_analysis(cfg)?;
    let out = &cfg.run.out;
    let files = vec![
        report::write_text(out, "stability.csv", &report::stability_csv(&trace))?,
        report::write_text(out, "manifest.json", &report::manifest_json(cfg)?)?,
    ];
    Ok(StabilityOutcome { epsilon, trace, value_positive, rate_nonpositive, verdict, files })
}
