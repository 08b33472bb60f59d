//! Scenario drivers: each one wires profile + fibres + grid into a scripted
//! run, writes CSV/SVG artifacts, and grades itself with explicit verdicts.

mod families;
mod output;
mod scenarios;

pub use families::InitialData;
pub use output::{line_plot, write_csv, write_svg, Series};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::ExperimentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[clap(rename_all = "kebab-case")]
pub enum Scenario {
    /// Build the stationary profile and check its defining identities.
    StationaryValidate,
    /// Constant per-fibre mass: the ensemble must converge to one profile.
    ConvergeConstantM0,
    /// Modulated per-fibre mass: periodic orbit, no single-shift limit.
    Oscillate,
    /// Amplitude quotient and stability of the profile family.
    Uniqueness,
    /// Fibre integrator against the direct space-time grid.
    OracleCompare,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::StationaryValidate,
        Scenario::ConvergeConstantM0,
        Scenario::Oscillate,
        Scenario::Uniqueness,
        Scenario::OracleCompare,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::StationaryValidate => "stationary-validate",
            Scenario::ConvergeConstantM0 => "converge-constant-m0",
            Scenario::Oscillate => "oscillate",
            Scenario::Uniqueness => "uniqueness",
            Scenario::OracleCompare => "oracle-compare",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_horizon() -> f64 {
    30.0
}

fn default_fibres() -> usize {
    64
}

fn default_dt_max() -> f64 {
    1.0 / 256.0
}

fn default_dx() -> f64 {
    1.0 / 256.0
}

fn default_profile_dx() -> f64 {
    1.0 / 1024.0
}

/// Everything a scenario needs, deserializable from a JSON config file.
/// CLI flags may override gamma, horizon, and fibres after loading.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Scenario the file is written for; `run` rejects a mismatch.
    #[serde(default)]
    pub scenario: Option<Scenario>,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_fibres")]
    pub fibres: usize,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    /// Grid spacing for the oracle scenario (finest level).
    #[serde(default = "default_dx")]
    pub dx: f64,
    /// Table spacing for the stationary profile.
    #[serde(default = "default_profile_dx")]
    pub profile_dx: f64,
    /// Initial data family; scenarios fall back to their own default.
    #[serde(default)]
    pub initial: Option<InitialData>,
    /// Integrate the conservative variables instead of phi directly.
    #[serde(default)]
    pub rho_mode: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: None,
            gamma: 0.0,
            horizon: default_horizon(),
            fibres: default_fibres(),
            dt_max: default_dt_max(),
            dx: default_dx(),
            profile_dx: default_profile_dx(),
            initial: None,
            rho_mode: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !(self.gamma < 1.0) {
            return Err(ExperimentError::Config(format!(
                "gamma must be < 1, got {}",
                self.gamma
            )));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(ExperimentError::Config(format!(
                "horizon must be finite and nonnegative, got {}",
                self.horizon
            )));
        }
        if self.fibres == 0 {
            return Err(ExperimentError::Config("fibres must be >= 1".into()));
        }
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return Err(ExperimentError::Config(format!(
                "dt_max must be positive, got {}",
                self.dt_max
            )));
        }
        if !(self.dx > 0.0 && self.dx <= 1.0) {
            return Err(ExperimentError::Config(format!(
                "dx must lie in (0, 1], got {}",
                self.dx
            )));
        }
        if !(self.profile_dx > 0.0 && self.profile_dx <= 0.25) {
            return Err(ExperimentError::Config(format!(
                "profile_dx must lie in (0, 0.25], got {}",
                self.profile_dx
            )));
        }
        if let Some(family) = &self.initial {
            family.validate().map_err(ExperimentError::Config)?;
        }
        Ok(())
    }
}

/// One graded check: `pass` is `value cmp threshold` with cmp in {<, >}.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
    pub cmp: &'static str,
    pub note: String,
}

impl Verdict {
    pub fn less(name: &str, value: f64, threshold: f64, note: &str) -> Self {
        Verdict {
            name: name.into(),
            pass: value < threshold,
            value,
            threshold,
            cmp: "<",
            note: note.into(),
        }
    }

    pub fn greater(name: &str, value: f64, threshold: f64, note: &str) -> Self {
        Verdict {
            name: name.into(),
            pass: value > threshold,
            value,
            threshold,
            cmp: ">",
            note: note.into(),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "[{}] {:<34} {:>13.6e} {} {:.3e}  ({})",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.cmp,
            self.threshold,
            self.note
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub scenario: String,
    pub gamma: f64,
    pub horizon: f64,
    pub fibres: usize,
    pub passed: bool,
    pub verdicts: Vec<Verdict>,
    pub stats: BTreeMap<String, f64>,
    pub files: Vec<String>,
}

impl ExperimentReport {
    fn new(scenario: Scenario, cfg: &ExperimentConfig) -> Self {
        ExperimentReport {
            scenario: scenario.name().into(),
            gamma: cfg.gamma,
            horizon: cfg.horizon,
            fibres: cfg.fibres,
            passed: true,
            verdicts: Vec::new(),
            stats: BTreeMap::new(),
            files: Vec::new(),
        }
    }

    fn push(&mut self, v: Verdict) {
        self.passed &= v.pass;
        self.verdicts.push(v);
    }

    fn stat(&mut self, name: &str, value: f64) {
        self.stats.insert(name.into(), value);
    }

    fn file(&mut self, name: &str) {
        self.files.push(name.into());
    }

    /// Serialize to `report.json` in the output directory.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, ExperimentError> {
        let path = dir.join("report.json");
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

/// Run one scenario end to end, writing artifacts under `out_dir`.
pub fn run(
    scenario: Scenario,
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    if let Some(declared) = cfg.scenario {
        if declared != scenario {
            return Err(ExperimentError::Config(format!(
                "config declares scenario {declared}, asked to run {scenario}"
            )));
        }
    }
    std::fs::create_dir_all(out_dir)?;
    let mut report = match scenario {
        Scenario::StationaryValidate => scenarios::stationary_validate(cfg, out_dir)?,
        Scenario::ConvergeConstantM0 => scenarios::converge_constant_m0(cfg, out_dir)?,
        Scenario::Oscillate => scenarios::oscillate(cfg, out_dir)?,
        Scenario::Uniqueness => scenarios::uniqueness(cfg, out_dir)?,
        Scenario::OracleCompare => scenarios::oracle_compare(cfg, out_dir)?,
    };
    report.write(out_dir)?;
    report.file("report.json");
    Ok(report)
}
