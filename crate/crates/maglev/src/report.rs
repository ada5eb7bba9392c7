//! Result emission: record and metrics CSVs, comparison tables, plot
//! data, and the run manifest.
//!
//! All numbers are written with Rust's shortest round-trip float
//! formatting, so emitted files are byte-stable across identical runs and
//! parse back to the exact binary values.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::feedforward::MethodKind;
use crate::sim::{ErrorMetrics, Scenario, SimulationRecord};
use crate::{Error, Result};

/// Table entries smaller than this print as an exact 0.
///
/// Ten times the integrator's per-run error scale (about 1e-13 for the
/// reference experiment), so only values indistinguishable from numerical
/// noise are collapsed. CSVs always keep the raw value.
pub const DISPLAY_ZERO_THRESHOLD: f64 = 1e-12;

/// Pinned record CSV header.
pub const RECORD_HEADER: &str = "t,q1,q2,q3,q4,q5,q6,r1,r2,r3,r4,r5,r6,\
e1,e2,e3,e4,e5,e6,uff1,uff2,uff3,uff4,uff5,uff6,\
ufb1,ufb2,ufb3,ufb4,ufb5,ufb6,d1,d2,d3,d4,d5,d6";

/// One scenario/method entry of the comparison grid.
#[derive(Clone, Copy, Debug)]
pub struct MetricsRow {
    pub scenario: Scenario,
    pub method: MethodKind,
    pub metrics: ErrorMetrics,
}

/// File name for one run's record.
pub fn record_file_name(scenario: Scenario, method: MethodKind) -> String {
    format!("run_{}_{}.csv", scenario.name(), method.name())
}

/// Serializes a record with the pinned header, one row per sample.
pub fn record_csv(record: &SimulationRecord) -> String {
    let mut out = String::with_capacity(64 * (record.len() + 1));
    out.push_str(RECORD_HEADER);
    out.push('\n');
    for k in 0..record.len() {
        let _ = write!(out, "{}", record.t[k]);
        for block in [&record.q, &record.r, &record.e, &record.u_ff, &record.u_fb, &record.d] {
            for i in 0..6 {
                let _ = write!(out, ",{}", block[k][i]);
            }
        }
        out.push('\n');
    }
    out
}

/// Long-form metrics CSV with raw values.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("scenario,method,coordinate,l2,linf\n");
    for row in rows {
        for i in 0..6 {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                row.scenario.name(),
                row.method.name(),
                crate::config::COORDINATE_NAMES[i],
                row.metrics.l2[i],
                row.metrics.linf[i],
            );
        }
    }
    out
}

fn table_value(v: f64) -> String {
    if v.abs() < DISPLAY_ZERO_THRESHOLD {
        "0".into()
    } else {
        format!("{v:.4e}")
    }
}

/// Fixed-width comparison table: per scenario, methods as rows and
/// coordinates as columns, one block per norm.
pub fn metrics_table(rows: &[MetricsRow]) -> String {
    let mut out = String::new();
    let mut scenarios: Vec<Scenario> = rows.iter().map(|r| r.scenario).collect();
    scenarios.dedup();
    for scenario in scenarios {
        let _ = writeln!(out, "scenario: {scenario}");
        for (norm, pick) in [
            ("l2", (|m: &ErrorMetrics, i: usize| m.l2[i]) as fn(&ErrorMetrics, usize) -> f64),
            ("linf", |m: &ErrorMetrics, i: usize| m.linf[i]),
        ] {
            let _ = write!(out, "  {norm:<18}");
            for name in crate::config::COORDINATE_NAMES {
                let _ = write!(out, "{name:>12}");
            }
            out.push('\n');
            for row in rows.iter().filter(|r| r.scenario == scenario) {
                let _ = write!(out, "  {:<18}", row.method.name());
                for i in 0..6 {
                    let _ = write!(out, "{:>12}", table_value(pick(&row.metrics, i)));
                }
                out.push('\n');
            }
        }
        out.push('\n');
    }
    out
}

/// File name for one scenario's plot data.
pub fn plot_file_name(scenario: Scenario) -> String {
    format!("plot_{}.csv", scenario.name())
}

/// Error traces of several methods over one scenario, aligned on the
/// shared sample grid.
pub fn plot_csv(records: &[&SimulationRecord]) -> Result<String> {
    let first = records.first().ok_or(Error::EmptyRecord)?;
    let mut out = String::from("t");
    for rec in records {
        for i in 1..=6 {
            let _ = write!(out, ",{}_e{}", rec.method.name(), i);
        }
    }
    out.push('\n');
    for k in 0..first.len() {
        let _ = write!(out, "{}", first.t[k]);
        for rec in records {
            if rec.len() != first.len() {
                return Err(Error::Config("plot records have different lengths".into()));
            }
            for i in 0..6 {
                let _ = write!(out, ",{}", rec.e[k][i]);
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Per-sample Lyapunov trace of a stability run.
#[derive(Clone, Debug, Default)]
pub struct StabilityTrace {
    pub t: Vec<f64>,
    pub value: Vec<f64>,
    pub rate: Vec<f64>,
    pub value_pd: Vec<bool>,
    pub rate_pd: Vec<bool>,
}

pub fn stability_csv(trace: &StabilityTrace) -> String {
    let mut out = String::from("t,V,Vdot,value_pd,rate_pd\n");
    for k in 0..trace.t.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            trace.t[k], trace.value[k], trace.rate[k], trace.value_pd[k] as u8, trace.rate_pd[k] as u8,
        );
    }
    out
}

#[derive(Serialize)]
struct Manifest<'a> {
    package: &'a str,
    version: &'a str,
    config_sha256: String,
    determinism: &'a str,
}

/// Manifest written next to every batch output. Content-addressed by the
/// config digest; deliberately carries no timestamps so reruns are
/// byte-identical.
pub fn manifest_json(cfg: &ExperimentConfig) -> Result<String> {
    let manifest = Manifest {
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: cfg.digest()?,
        determinism: "fixed-step integration, no randomness; identical configs reproduce \
                      byte-identical outputs",
    };
    serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(format!("manifest: {e}")))
}

/// Writes text to `dir/name`, creating the directory if needed.
pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, text)?;
    Ok(path)
}
