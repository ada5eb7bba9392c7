//! Experiment configuration: TOML parsing, validation, overrides, and a
//! content digest for the run manifest.
//!
//! Every section has a complete default, so an empty file is a valid
//! configuration describing the reference experiment. Serialization
//! materializes all defaults, and `serialize(parse(file))` parses back to
//! the same configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::PlantParams;
use crate::feedback::{LyapunovConfig, PidGains};
use crate::feedforward::MethodKind;
use crate::lpv::SchedulingStrategy;
use crate::sim::{Scenario, SimConfig};
use crate::trajectory::{DisturbanceProfile, MotionProfile};
use crate::{Error, Result};

/// Stability-analysis setup; gains derive from the plant by loop shaping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilitySection {
    /// Target crossover of the proportional loop [rad/s].
    pub crossover: f64,
    /// Adds a derivative gain so undamped plants still admit a
    /// certificate.
    pub rate_feedback: bool,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self { crossover: 2.0 * std::f64::consts::PI * 20.0, rate_feedback: true }
    }
}

impl StabilitySection {
    pub fn lyapunov(&self, params: &PlantParams) -> LyapunovConfig {
        LyapunovConfig::loop_shaped(params, self.crossover, self.rate_feedback)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.crossover > 0.0) || !self.crossover.is_finite() {
            return Err(Error::Config("stability crossover must be positive".into()));
        }
        Ok(())
    }
}

/// Scheduling choices for the model builders.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LpvSection {
    pub scheduling: SchedulingStrategy,
}

/// Which runs the batch commands execute and where results go.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub methods: Vec<MethodKind>,
    pub scenarios: Vec<Scenario>,
    pub out: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            methods: MethodKind::COMPARISON.to_vec(),
            scenarios: Scenario::ALL.to_vec(),
            out: PathBuf::from("out"),
        }
    }
}

impl RunSection {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("method list is empty".into()));
        }
        if self.scenarios.is_empty() {
            return Err(Error::Config("scenario list is empty".into()));
        }
        Ok(())
    }
}

/// Complete experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub plant: PlantParams,
    #[serde(default = "MotionProfile::default_experiment")]
    pub trajectory: MotionProfile,
    pub disturbance: DisturbanceProfile,
    pub feedback: PidGains,
    pub stability: StabilitySection,
    pub lpv: LpvSection,
    pub sim: SimConfig,
    pub run: RunSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            plant: PlantParams::default(),
            trajectory: MotionProfile::default_experiment(),
            disturbance: DisturbanceProfile::default(),
            feedback: PidGains::default(),
            stability: StabilitySection::default(),
            lpv: LpvSection::default(),
            sim: SimConfig::default(),
            run: RunSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Serializes with every default materialized.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("config encode: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.trajectory.validate()?;
        self.disturbance.validate()?;
        self.feedback.validate()?;
        self.stability.validate()?;
        self.sim.validate_against(&self.trajectory)?;
        self.run.validate()?;
        Ok(())
    }

    /// Hex SHA-256 of the materialized configuration, recorded in the run
    /// manifest so outputs can be matched to their exact inputs.
    pub fn digest(&self) -> Result<String> {
        let text = self.to_toml_string()?;
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let out = hasher.finalize();
        Ok(out.iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// Coordinate names accepted by CLI overrides, in state order.
pub const COORDINATE_NAMES: [&str; 6] = ["x", "y", "z", "chi", "psi", "zeta"];

/// Index of a coordinate by its CLI name.
pub fn coordinate_index(name: &str) -> Result<usize> {
    COORDINATE_NAMES
        .iter()
        .position(|n| *n == name)
        .ok_or_else(|| Error::Config(format!("unknown coordinate '{name}'")))
}

/// Parses a number with an optional SI unit suffix.
///
/// Accepted suffixes: `m`, `mm`, `um`/`µm`, `rad`, `mrad`, `urad`/`µrad`.
/// A bare number is taken in base units (meters or radians).
pub fn parse_quantity(text: &str) -> Result<f64> {
    // Divisors are exact powers of ten, so integer-mantissa inputs like
    // 5urad land on the same float as the literal 5e-6.
    const UNITS: [(&str, f64); 8] = [
        ("µrad", 1e6),
        ("urad", 1e6),
        ("mrad", 1e3),
        ("rad", 1.0),
        ("µm", 1e6),
        ("um", 1e6),
        ("mm", 1e3),
        ("m", 1.0),
    ];
    let text = text.trim();
    let (number, divisor) = UNITS
        .iter()
        .find_map(|(suffix, divisor)| text.strip_suffix(suffix).map(|head| (head, *divisor)))
        .unwrap_or((text, 1.0));
    let value: f64 = number
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse quantity '{text}'")))?;
    if !value.is_finite() {
        return Err(Error::Config(format!("quantity '{text}' is not finite")));
    }
    Ok(value / divisor)
}

/// Parses one `coord=value` mismatch override.
pub fn parse_mismatch_entry(text: &str) -> Result<(usize, f64)> {
    let (name, value) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("mismatch override '{text}' is not coord=value")))?;
    Ok((coordinate_index(name.trim())?, parse_quantity(value)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        // Defaults are materialized in the serialized form.
        assert!(text.contains("sample_time"));
        assert!(text.contains("crossover"));
        assert!(text.contains("methods"));
    }

    #[test]
    fn empty_file_is_the_default_experiment() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.run.methods.len(), 5);
        assert_eq!(cfg.run.scenarios.len(), 6);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("[plant]\nweight = 10.0\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[typo]\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[sim]\nstep = 1e-5\n").is_err());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = ExperimentConfig::from_toml_str("[sim]\nhorizon = 2.0\n").unwrap();
        assert_eq!(cfg.sim.horizon, 2.0);
        assert_eq!(cfg.sim.sample_time, 65e-6);
        assert_eq!(cfg.plant.mass, 10.0);
    }

    #[test]
    fn validation_rejects_inconsistent_setups() {
        assert!(ExperimentConfig::from_toml_str("[sim]\nhorizon = 0.3\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[run]\nmethods = []\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[plant]\nmass = -1.0\n").is_err());
    }

    #[test]
    fn quantities_understand_unit_suffixes() {
        assert_eq!(parse_quantity("5urad").unwrap(), 5e-6);
        assert_eq!(parse_quantity("5µrad").unwrap(), 5e-6);
        assert_eq!(parse_quantity("1.5mm").unwrap(), 1.5e-3);
        assert_eq!(parse_quantity("2m").unwrap(), 2.0);
        approx::assert_relative_eq!(parse_quantity("0.3mrad").unwrap(), 0.3e-3, max_relative = 1e-15);
        assert_eq!(parse_quantity("7µm").unwrap(), 7e-6);
        assert_eq!(parse_quantity("42e-3").unwrap(), 42e-3);
        assert_eq!(parse_quantity(" 1 mrad ").unwrap(), 1e-3);
        assert!(parse_quantity("5kg").is_err());
        assert!(parse_quantity("abc").is_err());
    }

    #[test]
    fn mismatch_overrides_parse() {
        assert_eq!(parse_mismatch_entry("chi=5urad").unwrap(), (3, 5e-6));
        assert_eq!(parse_mismatch_entry("x=1mm").unwrap(), (0, 1e-3));
        assert_eq!(parse_mismatch_entry("zeta = 2e-6").unwrap(), (5, 2e-6));
        assert!(parse_mismatch_entry("w=1").is_err());
        assert!(parse_mismatch_entry("chi").is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = ExperimentConfig::default();
        b.sim.horizon = 2.0;
        let da = a.digest().unwrap();
        assert_eq!(da, a.digest().unwrap());
        assert_ne!(da, b.digest().unwrap());
        assert_eq!(da.len(), 64);
    }
}
