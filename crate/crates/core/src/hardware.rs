//! Physical model of the MZI weight bank and the optical loop.
//!
//! Each weight is one MZI whose amplitude transmission is
//! `t(V) = cos((φ₀ + βV²)/2)`: the heater phase grows with electrical power,
//! so with `V²`. Negative weights sit past the first null (phase > π). The
//! heater DAC only produces voltages on a `v_step` grid, which bounds how
//! close a realized weight can get to its target.
//!
//! Fan-out/fan-in splitting, insertion loss and amplifier gain are lumped
//! into one round-trip amplitude factor calibrated to `1 + δ`.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::linalg::{ColumnVector, Matrix};
use crate::rng::{StreamKey, StreamRng};

/// Native dimension of the weight bank.
pub const TILE: usize = 4;

/// Stream id used for static encoding errors under a bank's key.
const WEIGHT_STREAM: u64 = u64::MAX;

/// Best-voltage residuals above this multiple of the quantization bound are
/// reported as unreachable.
const UNREACHABLE_FACTOR: f64 = 10.0;

/// Transmission-vs-voltage calibration of one MZI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCalibration", into = "RawCalibration")]
pub struct MziCalibration {
    phase_offset: f64,
    volt_to_phase: f64,
    v_max: f64,
    v_step: f64,
    quantization_bound: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawCalibration {
    phase_offset: f64,
    volt_to_phase: f64,
    v_max: f64,
    v_step: f64,
}

impl TryFrom<RawCalibration> for MziCalibration {
    type Error = Error;

    fn try_from(r: RawCalibration) -> Result<Self> {
        MziCalibration::new(r.phase_offset, r.volt_to_phase, r.v_max, r.v_step)
    }
}

impl From<MziCalibration> for RawCalibration {
    fn from(c: MziCalibration) -> Self {
        RawCalibration {
            phase_offset: c.phase_offset,
            volt_to_phase: c.volt_to_phase,
            v_max: c.v_max,
            v_step: c.v_step,
        }
    }
}

impl Default for MziCalibration {
    /// Null at 36 V, 43.7 mV DAC step: weights in `[0, 1]`.
    fn default() -> Self {
        Self::new(0.0, PI / (36.0 * 36.0), 36.0, 0.0437).expect("valid default")
    }
}

impl MziCalibration {
    pub fn new(phase_offset: f64, volt_to_phase: f64, v_max: f64, v_step: f64) -> Result<Self> {
        let all_finite = [phase_offset, volt_to_phase, v_max, v_step]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidConfig(
                "calibration values must be finite".into(),
            ));
        }
        if volt_to_phase <= 0.0 {
            return Err(Error::InvalidConfig(
                "volt_to_phase must be positive".into(),
            ));
        }
        if v_step <= 0.0 || v_max <= v_step {
            return Err(Error::InvalidConfig(format!(
                "need 0 < v_step < v_max, got v_step={v_step}, v_max={v_max}"
            )));
        }
        let mut cal = Self {
            phase_offset,
            volt_to_phase,
            v_max,
            v_step,
            quantization_bound: 0.0,
        };
        cal.quantization_bound = cal.max_slope() * v_step / 2.0;
        Ok(cal)
    }

    /// Same curve as `self` with a different DAC step.
    pub fn with_step(&self, v_step: f64) -> Result<Self> {
        Self::new(self.phase_offset, self.volt_to_phase, self.v_max, v_step)
    }

    /// Curve spanning the full `[-1, 1]` range: phase reaches 2π at `v_max`.
    pub fn bipolar(v_max: f64, v_step: f64) -> Result<Self> {
        Self::new(0.0, TAU / (v_max * v_max), v_max, v_step)
    }

    pub fn phase_offset(&self) -> f64 {
        self.phase_offset
    }

    pub fn volt_to_phase(&self) -> f64 {
        self.volt_to_phase
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn v_step(&self) -> f64 {
        self.v_step
    }

    /// `max |dt/dV| · v_step / 2` over `[0, v_max]`.
    pub fn quantization_bound(&self) -> f64 {
        self.quantization_bound
    }

    fn phase(&self, volts: f64) -> f64 {
        self.phase_offset + self.volt_to_phase * volts * volts
    }

    fn t(&self, volts: f64) -> f64 {
        (self.phase(volts) / 2.0).cos()
    }

    pub fn transmission(&self, volts: f64) -> Result<f64> {
        if !(0.0..=self.v_max).contains(&volts) {
            return Err(Error::VoltageOutOfRange {
                volts,
                v_max: self.v_max,
            });
        }
        Ok(self.t(volts))
    }

    /// Number of DAC voltages: `k·v_step` for every `k·v_step ≤ v_max`, plus
    /// `v_max` itself when it is not a grid multiple.
    pub fn grid_len(&self) -> usize {
        let n = self.last_regular_index();
        if (self.v_max - n as f64 * self.v_step) > 1e-12 * self.v_max {
            n + 2
        } else {
            n + 1
        }
    }

    pub fn grid_voltage(&self, k: usize) -> f64 {
        (k as f64 * self.v_step).min(self.v_max)
    }

    fn last_regular_index(&self) -> usize {
        (self.v_max / self.v_step + 1e-9).floor() as usize
    }

    fn max_slope(&self) -> f64 {
        // |dt/dV| = |sin(θ/2)|·β·V; dense sampling plus a local refine.
        const SAMPLES: usize = 20_000;
        let slope = |v: f64| (self.phase(v) / 2.0).sin().abs() * self.volt_to_phase * v;
        let dv = self.v_max / SAMPLES as f64;
        let (best_i, mut best) = (0..=SAMPLES)
            .map(|i| (i, slope(i as f64 * dv)))
            .fold((0, 0.0), |acc, (i, s)| if s > acc.1 { (i, s) } else { acc });
        let lo = (best_i as f64 - 1.0).max(0.0) * dv;
        let hi = ((best_i as f64 + 1.0) * dv).min(self.v_max);
        for k in 0..=200 {
            best = best.max(slope(lo + (hi - lo) * k as f64 / 200.0));
        }
        best
    }

    /// Grid voltage whose transmission is closest to `weight`.
    ///
    /// Candidates come from inverting the curve on every branch inside the
    /// phase range (plus the curve's extrema and the range ends), each
    /// snapped to its two neighbouring grid voltages. Ties go to the lower
    /// voltage.
    pub fn voltage_for_weight(&self, weight: f64) -> Result<f64> {
        let limit = UNREACHABLE_FACTOR * self.quantization_bound;
        if !weight.is_finite() || weight.abs() > 1.0 {
            return Err(Error::UnreachableWeight {
                weight,
                residual: (weight.abs() - 1.0).max(0.0),
                limit,
            });
        }
        let theta_lo = self.phase(0.0);
        let theta_hi = self.phase(self.v_max);
        let half_angle = weight.acos();

        let mut phases = vec![theta_lo, theta_hi];
        let m_lo = ((theta_lo - TAU) / TAU).floor() as i64;
        let m_hi = ((theta_hi + TAU) / TAU).ceil() as i64;
        for m in m_lo..=m_hi {
            let base = TAU * m as f64;
            // extrema of cos(θ/2) at θ = 2πm
            phases.push(base);
            if m % 2 == 0 {
                phases.push(base + 2.0 * half_angle);
                phases.push(base - 2.0 * half_angle);
            }
        }

        let last = self.grid_len() - 1;
        let mut best: Option<(usize, f64)> = None;
        for theta in phases {
            if theta < theta_lo || theta > theta_hi {
                continue;
            }
            let v = ((theta - self.phase_offset) / self.volt_to_phase)
                .max(0.0)
                .sqrt();
            let k = ((v / self.v_step).floor() as usize).min(last);
            for idx in [k.saturating_sub(1), k, (k + 1).min(last), last] {
                let residual = (self.t(self.grid_voltage(idx)) - weight).abs();
                best = match best {
                    Some((bi, br)) if br < residual || (br == residual && bi <= idx) => {
                        Some((bi, br))
                    }
                    _ => Some((idx, residual)),
                };
            }
        }
        let (idx, residual) = best.expect("at least the range ends are candidates");
        if residual > limit {
            return Err(Error::UnreachableWeight {
                weight,
                residual,
                limit,
            });
        }
        Ok(self.grid_voltage(idx))
    }
}

/// Calibrations for all 16 MZIs of the bank, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    cals: Vec<MziCalibration>,
}

/// One entry of the calibration file.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub row: usize,
    pub col: usize,
    pub phase_offset_rad: f64,
    #[serde(rename = "volt_to_phase_rad_per_V2")]
    pub volt_to_phase_rad_per_v2: f64,
    #[serde(rename = "v_max_V")]
    pub v_max_v: f64,
    #[serde(rename = "v_step_V")]
    pub v_step_v: f64,
}

impl Default for CalibrationSet {
    fn default() -> Self {
        Self::uniform(MziCalibration::default())
    }
}

impl CalibrationSet {
    pub fn uniform(cal: MziCalibration) -> Self {
        Self {
            cals: vec![cal; TILE * TILE],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> &MziCalibration {
        &self.cals[row * TILE + col]
    }

    pub fn iter(&self) -> impl Iterator<Item = &MziCalibration> {
        self.cals.iter()
    }

    /// Same curves with every DAC step replaced.
    pub fn with_step(&self, v_step: f64) -> Result<Self> {
        Ok(Self {
            cals: self
                .cals
                .iter()
                .map(|c| c.with_step(v_step))
                .collect::<Result<_>>()?,
        })
    }

    /// Largest quantization bound over the bank.
    pub fn quantization_bound(&self) -> f64 {
        self.cals
            .iter()
            .map(MziCalibration::quantization_bound)
            .fold(0.0, f64::max)
    }

    pub fn from_entries(entries: &[CalibrationEntry]) -> Result<Self> {
        if entries.len() != TILE * TILE {
            return Err(Error::InvalidConfig(format!(
                "calibration needs {} entries, got {}",
                TILE * TILE,
                entries.len()
            )));
        }
        let mut slots: Vec<Option<MziCalibration>> = vec![None; TILE * TILE];
        for e in entries {
            if e.row >= TILE || e.col >= TILE {
                return Err(Error::InvalidConfig(format!(
                    "calibration index ({}, {}) outside the {TILE}x{TILE} bank",
                    e.row, e.col
                )));
            }
            let slot = &mut slots[e.row * TILE + e.col];
            if slot.is_some() {
                return Err(Error::InvalidConfig(format!(
                    "duplicate calibration for ({}, {})",
                    e.row, e.col
                )));
            }
            *slot = Some(MziCalibration::new(
                e.phase_offset_rad,
                e.volt_to_phase_rad_per_v2,
                e.v_max_v,
                e.v_step_v,
            )?);
        }
        Ok(Self {
            cals: slots
                .into_iter()
                .map(|s| s.expect("all 16 filled"))
                .collect(),
        })
    }

    pub fn entries(&self) -> Vec<CalibrationEntry> {
        self.cals
            .iter()
            .enumerate()
            .map(|(i, c)| CalibrationEntry {
                row: i / TILE,
                col: i % TILE,
                phase_offset_rad: c.phase_offset,
                volt_to_phase_rad_per_v2: c.volt_to_phase,
                v_max_v: c.v_max,
                v_step_v: c.v_step,
            })
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let entries: Vec<CalibrationEntry> = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("calibration file: {e}")))?;
        Self::from_entries(&entries)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries()).expect("serializable")
    }
}

/// Imperfections of the loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Static per-element encoding error (std).
    pub sigma_weight: f64,
    /// Additive amplitude noise per circulation (std), after filtering.
    pub sigma_ase: f64,
    /// Round-trip amplitude factor is `1 + gain_mismatch_delta`.
    pub gain_mismatch_delta: f64,
    pub rng_seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_weight: 0.0,
            sigma_ase: 0.0,
            gain_mismatch_delta: 0.0,
            rng_seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_weight >= 0.0 && self.sigma_weight.is_finite()) {
            return Err(Error::InvalidConfig("sigma_weight must be >= 0".into()));
        }
        if !(self.sigma_ase >= 0.0 && self.sigma_ase.is_finite()) {
            return Err(Error::InvalidConfig("sigma_ase must be >= 0".into()));
        }
        if self.gain_mismatch_delta.is_nan() || self.gain_mismatch_delta.abs() >= 1.0 {
            return Err(Error::InvalidConfig(
                "gain_mismatch_delta must satisfy |delta| < 1".into(),
            ));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma_weight == 0.0 && self.sigma_ase == 0.0 && self.gain_mismatch_delta == 0.0
    }

    pub fn gain(&self) -> f64 {
        1.0 + self.gain_mismatch_delta
    }
}

/// Elements with `|m| > 1`, which a passive MZI cannot realize.
pub fn encodability_violations(m: &Matrix) -> Vec<Violation> {
    let mut out = Vec::new();
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let value = m[(i, j)];
            if value.abs() > 1.0 {
                out.push(Violation {
                    row: i,
                    col: j,
                    value,
                });
            }
        }
    }
    out
}

/// A 4×4 bank programmed with a target matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBank {
    target: Matrix,
    realized: Matrix,
    voltages: Option<Matrix>,
}

impl WeightBank {
    pub fn target(&self) -> &Matrix {
        &self.target
    }

    /// Weights actually applied by the loop.
    pub fn realized(&self) -> &Matrix {
        &self.realized
    }

    /// Heater voltages; `None` for an ideally encoded bank.
    pub fn voltages(&self) -> Option<&Matrix> {
        self.voltages.as_ref()
    }
}

/// Programs `m` into a bank.
///
/// With `cals = None` the weights are realized exactly (the `v_step → 0`
/// limit); otherwise every element goes through the calibration lookup and
/// the DAC grid. Static encoding noise is drawn from the `key` stream.
pub fn encode_weight_bank(
    m: &Matrix,
    cals: Option<&CalibrationSet>,
    noise: &NoiseConfig,
    key: StreamKey,
) -> Result<WeightBank> {
    if m.shape() != (TILE, TILE) {
        return Err(Error::ShapeMismatch {
            op: "encode_weight_bank",
            left: m.shape(),
            right: (TILE, TILE),
        });
    }
    noise.validate()?;
    let violations = encodability_violations(m);
    if !violations.is_empty() {
        return Err(Error::NotEncodable {
            tile: None,
            violations,
        });
    }

    let mut realized = m.clone();
    let mut voltages = None;
    if let Some(cals) = cals {
        let mut volts = Matrix::zeros(TILE, TILE);
        for i in 0..TILE {
            for j in 0..TILE {
                let cal = cals.get(i, j);
                let v = cal.voltage_for_weight(m[(i, j)])?;
                volts[(i, j)] = v;
                realized[(i, j)] = cal.transmission(v)?;
            }
        }
        voltages = Some(volts);
    }
    if noise.sigma_weight > 0.0 {
        let mut rng = key.child(WEIGHT_STREAM).rng();
        for i in 0..TILE {
            for j in 0..TILE {
                let z: f64 = rng.sample(StandardNormal);
                realized[(i, j)] = (realized[(i, j)] + noise.sigma_weight * z).clamp(-1.0, 1.0);
            }
        }
    }
    Ok(WeightBank {
        target: m.clone(),
        realized,
        voltages,
    })
}

/// One pass through the bank, amplifier and filter:
/// `y = (1 + δ)·Ŵ·x + ε`, `ε ~ N(0, σ_ase²)` per channel.
pub fn apply_loop_transfer(
    bank: &WeightBank,
    x: &ColumnVector,
    noise: &NoiseConfig,
    rng: &mut StreamRng,
) -> ColumnVector {
    let mut y = bank
        .realized
        .matvec(x)
        .expect("loop input has bank dimension")
        .scale(noise.gain());
    if noise.sigma_ase > 0.0 {
        for v in y.as_mut_slice() {
            let z: f64 = rng.sample(StandardNormal);
            *v += noise.sigma_ase * z;
        }
    }
    y
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionMode {
    /// Photodetection of power: the sign of each amplitude is lost.
    Direct,
    /// Signed amplitude readout.
    #[default]
    Coherent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detected {
    pub values: ColumnVector,
    /// Set when direct detection discarded a clearly negative amplitude.
    pub sign_ambiguity: bool,
}

/// Reads out the tapped amplitudes.
pub fn detect(amplitudes: &ColumnVector, mode: DetectionMode, sigma_ase: f64) -> Detected {
    match mode {
        DetectionMode::Coherent => Detected {
            values: amplitudes.clone(),
            sign_ambiguity: false,
        },
        DetectionMode::Direct => {
            let threshold = -3.0 * sigma_ase;
            Detected {
                values: ColumnVector::new(amplitudes.iter().map(|v| v.abs()).collect())
                    .expect("finite amplitudes"),
                sign_ambiguity: amplitudes.iter().any(|&v| v < threshold),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan_oracle(cal: &MziCalibration, w: f64) -> (f64, f64) {
        (0..cal.grid_len())
            .map(|k| {
                let v = cal.grid_voltage(k);
                (v, (cal.transmission(v).unwrap() - w).abs())
            })
            .fold((f64::NAN, f64::INFINITY), |best, c| {
                if c.1 < best.1 {
                    c
                } else {
                    best
                }
            })
    }

    #[test]
    fn transmission_examples() {
        let cal = MziCalibration::default();
        assert_eq!(cal.transmission(0.0).unwrap(), 1.0);
        assert!(cal.transmission(36.0).unwrap().abs() < 1e-15);
        let t = cal.transmission(18.0).unwrap();
        assert!((t - (PI / 8.0).cos()).abs() < 1e-15);
        assert!((t - 0.92388).abs() < 1e-5);
        assert!(matches!(
            cal.transmission(36.5),
            Err(Error::VoltageOutOfRange { .. })
        ));
        assert!(cal.transmission(-0.1).is_err());
    }

    #[test]
    fn transmission_null_with_offset() {
        let cal = MziCalibration::new(PI / 2.0, PI / (2.0 * 25.0), 10.0, 0.01).unwrap();
        // phase = π/2 + (π/50)·V² reaches π at V = 5
        assert!(cal.transmission(5.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn calibration_validation() {
        assert!(MziCalibration::new(0.0, 1.0, 1.0, 0.0).is_err());
        assert!(MziCalibration::new(0.0, 1.0, 1.0, 2.0).is_err());
        assert!(MziCalibration::new(0.0, 0.0, 1.0, 0.1).is_err());
        assert!(MziCalibration::new(f64::NAN, 1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn default_grid_covers_full_range() {
        let cal = MziCalibration::default();
        // 824 multiples of 43.7 mV below 36 V, plus the 36 V end point
        assert_eq!(cal.grid_len(), 825);
        assert!((cal.grid_voltage(823) - 35.9651).abs() < 1e-9);
        assert_eq!(cal.grid_voltage(824), 36.0);
        let exact = MziCalibration::new(0.0, 1e-3, 1.0, 0.25).unwrap();
        assert_eq!(exact.grid_len(), 5);
    }

    #[test]
    fn quantization_bound_default() {
        let cal = MziCalibration::default();
        // steepest point is the null at 36 V: β·36 = π/36
        let expected = PI / 36.0 * 0.0437 / 2.0;
        assert!((cal.quantization_bound() - expected).abs() < 1e-12);
    }

    #[test]
    fn voltage_for_unit_weight_is_zero() {
        assert_eq!(
            MziCalibration::default().voltage_for_weight(1.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn voltage_for_zero_weight_hits_null() {
        let cal = MziCalibration::default();
        let v = cal.voltage_for_weight(0.0).unwrap();
        let (ov, oresid) = scan_oracle(&cal, 0.0);
        assert_eq!(v, ov);
        assert!(oresid <= cal.quantization_bound());
    }

    #[test]
    fn voltage_for_half_matches_exhaustive_scan() {
        let cal = MziCalibration::default();
        let v = cal.voltage_for_weight(0.5).unwrap();
        let (ov, _) = scan_oracle(&cal, 0.5);
        assert_eq!(v, ov);
        // continuous solution is V = 36·sqrt(2/3)
        assert!((v - 36.0 * (2.0f64 / 3.0).sqrt()).abs() <= cal.v_step() / 2.0 + 1e-12);
    }

    #[test]
    fn voltage_search_matches_scan_on_many_weights() {
        let cals = [
            MziCalibration::default(),
            MziCalibration::bipolar(36.0, 0.0437).unwrap(),
            MziCalibration::new(0.3, 0.01, 30.0, 0.1).unwrap(),
        ];
        for cal in &cals {
            let lo = cal
                .transmission(0.0)
                .unwrap()
                .min(cal.transmission(cal.v_max()).unwrap());
            for i in 0..=400 {
                let w = -1.0 + 2.0 * i as f64 / 400.0;
                let (_, oresid) = scan_oracle(cal, w);
                match cal.voltage_for_weight(w) {
                    Ok(v) => {
                        let r = (cal.transmission(v).unwrap() - w).abs();
                        assert!(r <= oresid + 1e-15, "w={w} r={r} oracle={oresid}");
                    }
                    Err(Error::UnreachableWeight { .. }) => {
                        assert!(oresid > 10.0 * cal.quantization_bound(), "w={w} lo={lo}");
                    }
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }

    #[test]
    fn negative_weight_unreachable_on_unipolar_curve() {
        let err = MziCalibration::default()
            .voltage_for_weight(-0.5)
            .unwrap_err();
        assert!(matches!(err, Error::UnreachableWeight { .. }));
        assert!(MziCalibration::default().voltage_for_weight(1.2).is_err());
    }

    #[test]
    fn bipolar_curve_reaches_minus_one() {
        let cal = MziCalibration::bipolar(36.0, 0.0437).unwrap();
        let v = cal.voltage_for_weight(-1.0).unwrap();
        assert_eq!(v, 36.0);
        let v = cal.voltage_for_weight(-0.3).unwrap();
        assert!((cal.transmission(v).unwrap() + 0.3).abs() <= cal.quantization_bound());
    }

    #[test]
    fn encode_examples() {
        let cals = CalibrationSet::default();
        let q = cals.quantization_bound();
        let noise = NoiseConfig::default();
        let key = StreamKey::root(1);

        let bank = encode_weight_bank(&Matrix::zeros(4, 4), Some(&cals), &noise, key).unwrap();
        assert!(bank.realized().max_abs() <= q);

        let target = Matrix::identity(4).scale(0.9);
        let bank = encode_weight_bank(&target, Some(&cals), &noise, key).unwrap();
        for i in 0..4 {
            let (_, oresid) = scan_oracle(cals.get(i, i), 0.9);
            let err = (bank.realized()[(i, i)] - 0.9).abs();
            assert!(err <= q);
            assert!((err - oresid).abs() < 1e-15);
        }
        assert!(bank.voltages().is_some());

        let mut bad = Matrix::zeros(4, 4);
        bad[(2, 1)] = 1.3;
        match encode_weight_bank(&bad, Some(&cals), &noise, key) {
            Err(Error::NotEncodable { violations, .. }) => {
                assert_eq!(
                    violations,
                    vec![Violation {
                        row: 2,
                        col: 1,
                        value: 1.3
                    }]
                );
            }
            other => panic!("{other:?}"),
        }
        assert!(encode_weight_bank(&Matrix::zeros(3, 3), None, &noise, key).is_err());
    }

    #[test]
    fn ideal_encoding_is_exact() {
        let m = crate::linalg::matadd(
            &Matrix::identity(4),
            &crate::fixtures::a2(),
            crate::linalg::Sign::Minus,
        )
        .unwrap();
        let bank =
            encode_weight_bank(&m, None, &NoiseConfig::default(), StreamKey::root(0)).unwrap();
        assert_eq!(bank.realized(), &m);
        assert!(bank.voltages().is_none());
    }

    #[test]
    fn weight_noise_is_seeded_and_clamped() {
        let noise = NoiseConfig {
            sigma_weight: 0.5,
            ..NoiseConfig::default()
        };
        let m = Matrix::identity(4).scale(0.95);
        let a = encode_weight_bank(&m, None, &noise, StreamKey::root(9)).unwrap();
        let b = encode_weight_bank(&m, None, &noise, StreamKey::root(9)).unwrap();
        let c = encode_weight_bank(&m, None, &noise, StreamKey::root(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.realized(), c.realized());
        assert!(a.realized().max_abs() <= 1.0);
    }

    #[test]
    fn loop_transfer_examples() {
        let noise = NoiseConfig::default();
        let mut rng = StreamKey::root(0).rng();
        let x = ColumnVector::new(vec![0.3, -0.2, 0.7, 1.5]).unwrap();

        let zero =
            encode_weight_bank(&Matrix::zeros(4, 4), None, &noise, StreamKey::root(0)).unwrap();
        assert_eq!(
            apply_loop_transfer(&zero, &x, &noise, &mut rng),
            ColumnVector::zeros(4)
        );

        let id =
            encode_weight_bank(&Matrix::identity(4), None, &noise, StreamKey::root(0)).unwrap();
        assert_eq!(apply_loop_transfer(&id, &x, &noise, &mut rng), x);

        let w = Matrix::from_fn(4, 4, |i, j| ((i * 4 + j) as f64 * 0.37).sin());
        let bank = encode_weight_bank(&w, None, &noise, StreamKey::root(0)).unwrap();
        let y = apply_loop_transfer(&bank, &x, &noise, &mut rng);
        let oracle =
            crate::linalg::matmul(&w, &Matrix::new(4, 1, x.as_slice().to_vec()).unwrap()).unwrap();
        for i in 0..4 {
            assert!((y[i] - oracle[(i, 0)]).abs() < 1e-15);
        }
    }

    #[test]
    fn loop_transfer_gain_and_noise() {
        let id = encode_weight_bank(
            &Matrix::identity(4),
            None,
            &NoiseConfig::default(),
            StreamKey::root(0),
        )
        .unwrap();
        let x = ColumnVector::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let gain = NoiseConfig {
            gain_mismatch_delta: 0.01,
            ..NoiseConfig::default()
        };
        let y = apply_loop_transfer(&id, &x, &gain, &mut StreamKey::root(0).rng());
        assert!((y[3] - 4.04).abs() < 1e-12);

        let noisy = NoiseConfig {
            sigma_ase: 0.1,
            ..NoiseConfig::default()
        };
        let y1 = apply_loop_transfer(&id, &x, &noisy, &mut StreamKey::root(4).rng());
        let y2 = apply_loop_transfer(&id, &x, &noisy, &mut StreamKey::root(4).rng());
        assert_eq!(y1, y2);
        assert_ne!(y1, x);
    }

    #[test]
    fn detect_examples() {
        let v = ColumnVector::new(vec![0.5, -0.3]).unwrap();
        let c = detect(&v, DetectionMode::Coherent, 0.0);
        assert_eq!(c.values, v);
        assert!(!c.sign_ambiguity);

        let d = detect(&v, DetectionMode::Direct, 0.0);
        assert_eq!(d.values.as_slice(), &[0.5, 0.3]);
        assert!(d.sign_ambiguity);

        let p = ColumnVector::new(vec![0.5, 0.0, 0.2]).unwrap();
        let d = detect(&p, DetectionMode::Direct, 0.0);
        assert_eq!(d.values, p);
        assert!(!d.sign_ambiguity);

        // small negatives within the noise floor are not flagged
        let n = ColumnVector::new(vec![0.5, -0.01]).unwrap();
        assert!(!detect(&n, DetectionMode::Direct, 0.01).sign_ambiguity);
    }

    #[test]
    fn noise_validation() {
        let bad = NoiseConfig {
            gain_mismatch_delta: 1.0,
            ..NoiseConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = NoiseConfig {
            sigma_ase: -1.0,
            ..NoiseConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn calibration_file_round_trip() {
        let set = CalibrationSet::default();
        let parsed = CalibrationSet::from_json(&set.to_json()).unwrap();
        assert_eq!(parsed, set);
        let text = set.to_json();
        assert!(text.contains("\"volt_to_phase_rad_per_V2\""));
        assert!(text.contains("\"v_step_V\""));
    }

    #[test]
    fn calibration_file_rejects_bad_layout() {
        let mut entries = CalibrationSet::default().entries();
        entries[3].row = 0;
        entries[3].col = 0;
        assert!(CalibrationSet::from_entries(&entries).is_err());
        assert!(CalibrationSet::from_entries(&entries[..15]).is_err());
        entries[3].row = 7;
        assert!(CalibrationSet::from_entries(&entries).is_err());
    }
}
