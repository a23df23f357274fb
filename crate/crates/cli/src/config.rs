//! Experiment configuration files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use optiloop::engine::LoopConfig;
use optiloop::equations::{FredholmProblem, OdeProblem, PoissonProblem};
use optiloop::hardware::{CalibrationSet, DetectionMode, MziCalibration, NoiseConfig};
use optiloop::{fixtures, Matrix, Sign};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Invert,
    Add,
    Multiply,
    SolveIe,
    SolveOde,
    SolvePde,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Invert => "invert",
            Command::Add => "add",
            Command::Multiply => "multiply",
            Command::SolveIe => "solve-ie",
            Command::SolveOde => "solve-ode",
            Command::SolvePde => "solve-pde",
            Command::Sweep => "sweep",
        }
    }
}

/// A matrix given inline as rows, or by fixture name (`"A1"`, `"A2"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Named(String),
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn resolve(&self) -> Result<Matrix, CliError> {
        match self {
            MatrixSpec::Named(name) => fixtures::by_name(name)
                .ok_or_else(|| CliError::Config(format!("unknown matrix fixture {name:?}"))),
            MatrixSpec::Rows(rows) => Matrix::try_from(rows.clone()).map_err(CliError::from),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignSpec {
    #[default]
    Plus,
    Minus,
}

impl From<SignSpec> for Sign {
    fn from(s: SignSpec) -> Self {
        match s {
            SignSpec::Plus => Sign::Plus,
            SignSpec::Minus => Sign::Minus,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LoopSection {
    pub omega: Option<f64>,
    pub tap_ratio: f64,
    pub loop_time: f64,
    pub tol: f64,
    pub max_circulations: usize,
    pub detection: DetectionMode,
    pub accept_unconverged: bool,
}

impl Default for LoopSection {
    fn default() -> Self {
        let d = LoopConfig::default();
        Self {
            omega: d.omega,
            tap_ratio: d.tap_ratio,
            loop_time: d.loop_time,
            tol: d.tol,
            max_circulations: d.max_circulations,
            detection: d.detection,
            accept_unconverged: d.accept_unconverged,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub sigma_weight: f64,
    pub sigma_ase: f64,
    pub gain_mismatch_delta: f64,
}

/// How weights are turned into voltages.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Hardware {
    /// Weights are realized exactly.
    #[default]
    Exact,
    /// Every element uses the stock unipolar curve.
    Default { v_step: Option<f64> },
    /// Every element uses a curve spanning `[−1, 1]` over `[0, v_max]`.
    Bipolar {
        #[serde(default = "default_v_max")]
        v_max: f64,
        #[serde(default = "default_v_step")]
        v_step: f64,
    },
    /// Per-element calibration table; relative paths resolve against the
    /// config file's directory.
    File { path: PathBuf, v_step: Option<f64> },
}

fn default_v_max() -> f64 {
    MziCalibration::default().v_max()
}

fn default_v_step() -> f64 {
    MziCalibration::default().v_step()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    SigmaAse,
    SigmaWeight,
    GainMismatchDelta,
    VStep,
    Omega,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::SigmaAse => "sigma_ase",
            SweepParameter::SigmaWeight => "sigma_weight",
            SweepParameter::GainMismatchDelta => "gain_mismatch_delta",
            SweepParameter::VStep => "v_step",
            SweepParameter::Omega => "omega",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
}

fn default_seeds() -> usize {
    20
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub matrix: Option<MatrixSpec>,
    /// Second operand of `add` and `multiply`.
    #[serde(default)]
    pub operand: Option<MatrixSpec>,
    #[serde(default)]
    pub sign: SignSpec,
    #[serde(default)]
    pub fredholm: Option<FredholmProblem>,
    #[serde(default)]
    pub ode: Option<OdeProblem>,
    #[serde(default)]
    pub poisson: Option<PoissonProblem>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default, rename = "loop")]
    pub loop_params: LoopSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub hardware: Hardware,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Largest accepted `‖A·R − I‖_F` for block inversions; `null` skips
    /// the check.
    #[serde(default = "default_verify")]
    pub verify_threshold: Option<f64>,
    #[serde(default)]
    pub diagnostics: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_verify() -> Option<f64> {
    Some(1e-4)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            command: None,
            matrix: None,
            operand: None,
            sign: SignSpec::Plus,
            fredholm: None,
            ode: None,
            poisson: None,
            sweep: None,
            loop_params: LoopSection::default(),
            noise: NoiseSection::default(),
            hardware: Hardware::Exact,
            seed: None,
            verify_threshold: default_verify(),
            diagnostics: false,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config and resolves a relative calibration path against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Hardware::File { path: cal, .. } = &mut cfg.hardware {
            if cal.is_relative() {
                if let Some(dir) = path.parent() {
                    *cal = dir.join(&*cal);
                }
            }
        }
        Ok(cfg)
    }

    /// Zero noise, exact weights, unity round-trip gain.
    pub fn force_ideal(&mut self) {
        self.noise = NoiseSection::default();
        self.hardware = Hardware::Exact;
    }

    /// Checks that the payload fits `command`.
    pub fn validate_for(&self, command: Command) -> Result<(), CliError> {
        if let Some(c) = self.command {
            if c != command {
                return Err(CliError::Config(format!(
                    "config is for `{}`, not `{}`",
                    c.name(),
                    command.name()
                )));
            }
        }
        let need = |present: bool, what: &str| {
            if present {
                Ok(())
            } else {
                Err(CliError::Config(format!(
                    "`{}` needs `{what}`",
                    command.name()
                )))
            }
        };
        match command {
            Command::Invert => need(self.matrix.is_some(), "matrix")?,
            Command::Add | Command::Multiply => {
                need(self.matrix.is_some(), "matrix")?;
                need(self.operand.is_some(), "operand")?;
            }
            Command::SolveIe => need(self.fredholm.is_some(), "fredholm")?,
            Command::SolveOde => need(self.ode.is_some(), "ode")?,
            Command::SolvePde => need(self.poisson.is_some(), "poisson")?,
            Command::Sweep => {
                need(self.matrix.is_some(), "matrix")?;
                let sweep = self.sweep.as_ref();
                need(sweep.is_some(), "sweep")?;
                let sweep = sweep.unwrap();
                if sweep.values.is_empty() || sweep.seeds == 0 {
                    return Err(CliError::Config("sweep needs values and seeds >= 1".into()));
                }
            }
        }
        let noisy = self.noise.sigma_weight != 0.0 || self.noise.sigma_ase != 0.0;
        let sweeps_noise = matches!(
            self.sweep.as_ref().map(|s| s.parameter),
            Some(SweepParameter::SigmaAse | SweepParameter::SigmaWeight)
        );
        if (noisy || (command == Command::Sweep && sweeps_noise)) && self.seed.is_none() {
            return Err(CliError::Config("noisy runs need a `seed`".into()));
        }
        self.loop_config()?.validate()?;
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn calibration(&self) -> Result<Option<CalibrationSet>, CliError> {
        let set = match &self.hardware {
            Hardware::Exact => return Ok(None),
            Hardware::Default { v_step } => {
                let base = MziCalibration::default();
                CalibrationSet::uniform(match v_step {
                    Some(s) => base.with_step(*s)?,
                    None => base,
                })
            }
            Hardware::Bipolar { v_max, v_step } => {
                CalibrationSet::uniform(MziCalibration::bipolar(*v_max, *v_step)?)
            }
            Hardware::File { path, v_step } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                let set = CalibrationSet::from_json(&text)?;
                match v_step {
                    Some(s) => set.with_step(*s)?,
                    None => set,
                }
            }
        };
        Ok(Some(set))
    }

    pub fn loop_config(&self) -> Result<LoopConfig, CliError> {
        let l = &self.loop_params;
        Ok(LoopConfig {
            omega: l.omega,
            tap_ratio: l.tap_ratio,
            loop_time: l.loop_time,
            tol: l.tol,
            max_circulations: l.max_circulations,
            noise: NoiseConfig {
                sigma_weight: self.noise.sigma_weight,
                sigma_ase: self.noise.sigma_ase,
                gain_mismatch_delta: self.noise.gain_mismatch_delta,
                rng_seed: self.seed(),
            },
            detection: l.detection,
            calibration: self.calibration()?,
            accept_unconverged: l.accept_unconverged,
        })
    }

    /// First 16 hex digits of the SHA-256 of the effective config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}
