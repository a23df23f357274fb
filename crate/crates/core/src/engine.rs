//! Circulation protocols of the recursive loop.
//!
//! Inversion encodes `M = I − ωA` in the bank and re-injects `ω·e_j` every
//! circulation, so the tapped output follows the Richardson recurrence
//! `x⁽ᵏ⁺¹⁾ = M·x⁽ᵏ⁾ + ω·e_j` towards column `j` of `A⁻¹`. Addition and
//! multiplication use exactly two circulations.

use rayon::prelude::*;

use crate::error::{Error, Result, Violation};
use crate::hardware::{
    apply_loop_transfer, detect, encodability_violations, encode_weight_bank, CalibrationSet,
    DetectionMode, NoiseConfig, WeightBank, TILE,
};
use crate::linalg::{matadd, spectral_radius_estimate, ColumnVector, Matrix, Sign};
use crate::rng::{StreamKey, StreamRng};

/// Power count used for spectral-radius checks during ω selection.
pub const OMEGA_RHO_ITERS: usize = 100;
/// ω = 1 is kept when the estimated radius of `I − A` is below this.
pub const NEAR_IDENTITY_RHO: f64 = 0.95;
const MAX_OMEGA_HALVINGS: usize = 40;
/// Output norm treated as divergence.
pub const DIVERGENCE_NORM: f64 = 1e6;

/// Loop parameters shared by every protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    /// Richardson relaxation; `None` picks one with [`select_omega`].
    pub omega: Option<f64>,
    /// Output tap fraction. Folded into the calibrated loop gain; kept for
    /// power-budget reporting.
    pub tap_ratio: f64,
    /// Seconds per circulation.
    pub loop_time: f64,
    /// Relative-change stop threshold.
    pub tol: f64,
    pub max_circulations: usize,
    pub noise: NoiseConfig,
    pub detection: DetectionMode,
    /// `None` encodes weights exactly.
    pub calibration: Option<CalibrationSet>,
    /// Return the last output instead of `NotConverged` when the circulation
    /// budget runs out (fixed-length runs on a noisy loop).
    pub accept_unconverged: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            omega: None,
            tap_ratio: 0.5,
            loop_time: 130e-9,
            tol: 1e-4,
            max_circulations: 1000,
            noise: NoiseConfig::default(),
            detection: DetectionMode::Coherent,
            calibration: None,
            accept_unconverged: false,
        }
    }
}

impl LoopConfig {
    /// Noise-free, exactly encoded loop with coherent readout.
    pub fn ideal(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(w) = self.omega {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidConfig(format!("omega must be > 0, got {w}")));
            }
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tol must lie in (0, 1), got {}",
                self.tol
            )));
        }
        if !(self.tap_ratio > 0.0 && self.tap_ratio < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tap_ratio must lie in (0, 1), got {}",
                self.tap_ratio
            )));
        }
        if !(self.loop_time > 0.0 && self.loop_time.is_finite()) {
            return Err(Error::InvalidConfig("loop_time must be positive".into()));
        }
        if self.max_circulations == 0 {
            return Err(Error::InvalidConfig("max_circulations must be >= 1".into()));
        }
        self.noise.validate()
    }

    /// Encodes `m` into a bank with this loop's calibration and noise.
    pub fn encode(&self, m: &Matrix, key: StreamKey) -> Result<WeightBank> {
        encode_weight_bank(m, self.calibration.as_ref(), &self.noise, key)
    }
}

/// Record of one column solve.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    /// Injected vector `x⁽⁰⁾ = ω·e_j`.
    pub initial: ColumnVector,
    /// `x⁽ᵏ⁾` for `k = 1..=circulations_used`.
    pub outputs: Vec<ColumnVector>,
    /// `‖x⁽ᵏ⁾ − x⁽ᵏ⁻¹⁾‖₂ / ‖x⁽ᵏ⁻¹⁾‖₂` for each circulation.
    pub relative_changes: Vec<f64>,
    pub circulations_used: usize,
    pub converged: bool,
}

impl IterationTrace {
    pub fn last_output(&self) -> &ColumnVector {
        self.outputs.last().unwrap_or(&self.initial)
    }
}

/// Detected column plus its trace.
#[derive(Debug, Clone)]
pub struct ColumnSolve {
    pub values: ColumnVector,
    pub trace: IterationTrace,
    pub sign_ambiguity: bool,
}

pub fn check_encodable(m: &Matrix) -> std::result::Result<(), Vec<Violation>> {
    let v = encodability_violations(m);
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

fn loop_matrix(a: &Matrix, omega: f64) -> Matrix {
    matadd(&Matrix::identity(a.rows()), &a.scale(omega), Sign::Minus).expect("square")
}

/// Picks ω with `ρ(I − ωA) < 1` and an encodable `I − ωA`.
///
/// Near-identity operands keep ω = 1. Otherwise start from
/// `2 / (‖A‖∞ + ‖A‖₁)` and halve until both conditions hold.
pub fn select_omega(a: &Matrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::ShapeMismatch {
            op: "select_omega",
            left: a.shape(),
            right: a.shape(),
        });
    }
    let accept = |omega: f64, rho_limit: f64| {
        let m = loop_matrix(a, omega);
        spectral_radius_estimate(&m, OMEGA_RHO_ITERS) < rho_limit && check_encodable(&m).is_ok()
    };
    if accept(1.0, NEAR_IDENTITY_RHO) {
        return Ok(1.0);
    }
    let denom = a.norm_inf() + a.norm_one();
    if denom == 0.0 {
        return Err(Error::NoConvergentOmega);
    }
    let mut omega = 2.0 / denom;
    for _ in 0..=MAX_OMEGA_HALVINGS {
        if accept(omega, 1.0) {
            return Ok(omega);
        }
        omega /= 2.0;
    }
    Err(Error::NoConvergentOmega)
}

/// Runs the Richardson circulation for column `j` on a bank holding
/// `I − ωA`.
pub fn richardson_invert_column(
    bank: &WeightBank,
    j: usize,
    omega: f64,
    cfg: &LoopConfig,
    rng: &mut StreamRng,
) -> Result<ColumnSolve> {
    let n = bank.realized().rows();
    assert!(j < n, "column index {j} out of range");
    let inject = ColumnVector::unit(n, j).scale(omega);
    let mut trace = IterationTrace {
        initial: inject.clone(),
        outputs: Vec::new(),
        relative_changes: Vec::new(),
        circulations_used: 0,
        converged: false,
    };
    let mut x = inject.clone();
    for _ in 0..cfg.max_circulations {
        let next = apply_loop_transfer(bank, &x, &cfg.noise, rng).axpy(1.0, &inject);
        let change = next.distance(&x) / x.norm2().max(1e-30);
        let norm = next.norm2();
        trace.circulations_used += 1;
        trace.relative_changes.push(change);
        trace.outputs.push(next.clone());
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(Error::Diverged {
                column: j,
                trace: Box::new(trace),
            });
        }
        x = next;
        if change <= cfg.tol {
            trace.converged = true;
            break;
        }
    }
    if !trace.converged && !cfg.accept_unconverged {
        return Err(Error::NotConverged {
            column: j,
            trace: Box::new(trace),
        });
    }
    let detected = detect(&x, cfg.detection, cfg.noise.sigma_ase);
    Ok(ColumnSolve {
        values: detected.values,
        trace,
        sign_ambiguity: detected.sign_ambiguity,
    })
}

/// Result of a full 4×4 inversion.
#[derive(Debug, Clone)]
pub struct Inversion {
    pub inverse: Matrix,
    pub omega: f64,
    pub traces: Vec<IterationTrace>,
    pub sign_ambiguity: bool,
}

impl Inversion {
    /// Slowest column, which bounds the time to the full inverse.
    pub fn max_circulations(&self) -> usize {
        self.traces
            .iter()
            .map(|t| t.circulations_used)
            .max()
            .unwrap_or(0)
    }
}

/// Inverts a 4×4 operand column by column. Column `j` draws its loop noise
/// from `key.child(j)`, so parallel and sequential runs agree bit for bit.
pub fn invert_matrix(a: &Matrix, cfg: &LoopConfig, key: StreamKey) -> Result<Inversion> {
    if a.shape() != (TILE, TILE) {
        return Err(Error::ShapeMismatch {
            op: "invert_matrix",
            left: a.shape(),
            right: (TILE, TILE),
        });
    }
    cfg.validate()?;
    let omega = match cfg.omega {
        Some(w) => w,
        None => select_omega(a)?,
    };
    let bank = cfg.encode(&loop_matrix(a, omega), key)?;
    let columns = (0..TILE)
        .into_par_iter()
        .map(|j| {
            let mut rng = key.child(j as u64).rng();
            richardson_invert_column(&bank, j, omega, cfg, &mut rng)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut inverse = Matrix::zeros(TILE, TILE);
    for (j, c) in columns.iter().enumerate() {
        inverse.set_column(j, &c.values);
    }
    Ok(Inversion {
        inverse,
        omega,
        sign_ambiguity: columns.iter().any(|c| c.sign_ambiguity),
        traces: columns.into_iter().map(|c| c.trace).collect(),
    })
}

/// Injects `first`, lets it pass the bank once, adds `second` and taps the
/// result: `(1 + δ)·Ŵ·first + second`.
fn two_circulations(
    bank: &WeightBank,
    first: &ColumnVector,
    second: &ColumnVector,
    cfg: &LoopConfig,
    rng: &mut StreamRng,
) -> ColumnVector {
    let out = apply_loop_transfer(bank, first, &cfg.noise, rng).axpy(1.0, second);
    detect(&out, cfg.detection, cfg.noise.sigma_ase).values
}

fn check_operand(bank: &WeightBank, b: &Matrix, op: &'static str) -> Result<()> {
    if b.shape() != bank.realized().shape() {
        return Err(Error::ShapeMismatch {
            op,
            left: bank.realized().shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

/// `A ± B` with `A` held in the bank: circulation 1 injects `e_j`,
/// circulation 2 adds `±b_j` (subtraction is a π phase shift on the input).
pub fn loop_add(
    bank: &WeightBank,
    b: &Matrix,
    sign: Sign,
    cfg: &LoopConfig,
    key: StreamKey,
) -> Result<Matrix> {
    check_operand(bank, b, "loop_add")?;
    let n = b.rows();
    let columns: Vec<ColumnVector> = (0..b.cols())
        .into_par_iter()
        .map(|j| {
            let mut rng = key.child(j as u64).rng();
            let second = b.column(j).scale(sign.as_f64());
            two_circulations(bank, &ColumnVector::unit(n, j), &second, cfg, &mut rng)
        })
        .collect();
    Matrix::from_columns(&columns)
}

/// `A·B` with `A` held in the bank: circulation 1 injects `b_j`, the
/// circulation 2 output is `A·b_j`.
pub fn loop_multiply(
    bank: &WeightBank,
    b: &Matrix,
    cfg: &LoopConfig,
    key: StreamKey,
) -> Result<Matrix> {
    check_operand(bank, b, "loop_multiply")?;
    let n = b.rows();
    let columns: Vec<ColumnVector> = (0..b.cols())
        .into_par_iter()
        .map(|j| {
            let mut rng = key.child(j as u64).rng();
            two_circulations(bank, &b.column(j), &ColumnVector::zeros(n), cfg, &mut rng)
        })
        .collect();
    Matrix::from_columns(&columns)
}

/// Column solves per second for a loop of the given period.
pub fn throughput(trace: &IterationTrace, loop_time: f64) -> f64 {
    throughput_for(trace.circulations_used, loop_time)
}

pub fn throughput_for(circulations: usize, loop_time: f64) -> f64 {
    assert!(
        circulations >= 1,
        "throughput needs at least one circulation"
    );
    1.0 / (circulations as f64 * loop_time)
}
