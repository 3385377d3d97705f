//! Threshold calibration procedures.
//!
//! * [`single_detector_scan`] feeds one detector straight from the source and
//!   records outcome-class rates per threshold. Doubles vanish from 0.5 up
//!   while single detections peak there, which singles out 0.5 as the
//!   calibrated threshold for unit-amplitude pulses.
//! * [`sequential_visibility_calibration`] fixes A at 0.5 and tunes B while
//!   watching the correlation curve.
//! * [`morph_scan`] walks B's threshold away from 0.5 and records how the
//!   statistics move from classical through quantum to super-quantum.
//! * [`check_rotational_invariance`] repeats a sweep with A rotated.
//!
//! All scans reuse the experiment seed at every grid point (common random
//! numbers): two thresholds see the same pulses, gates and noise draws, so
//! differences between grid points come from the threshold alone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{detect, emit_pair, DetectionOutcome, DetectorConfig, Side, SourceConfig, StationRng};
use crate::rng::{derive_seed, Role, RngStream};
use crate::runner::{check_grid, par_trials, sweep, SweepConfig};
use crate::stats::{
    fit_visibility, measure_chsh, rotational_variance, visibility, ChshSettings, CorrelationCurve,
};


#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScanPoint {
    pub threshold: f64,
    pub rate_up: f64,
    pub rate_down: f64,
    pub rate_double: f64,
    /// Not observable in a real experiment, where the emission count is
    /// unknown.
    pub rate_miss: f64,
    pub trials: u64,
}

impl ThresholdScanPoint {
    pub fn rate_single(&self) -> f64 {
        self.rate_up + self.rate_down
    }
}

#[derive(Default, Clone, Copy)]
struct OutcomeCounts([u64; 4]);

impl OutcomeCounts {
    fn add(mut self, o: DetectionOutcome) -> Self {
        self.0[o as usize] += 1;
        self
    }

    fn merge(mut self, o: Self) -> Self {
        for (a, b) in self.0.iter_mut().zip(o.0) {
            *a += b;
        }
        self
    }
}

/// One detector at analyzer angle 0 fed by `theta1` of each emitted pair.
pub fn single_detector_scan(
    det: &DetectorConfig,
    src: &SourceConfig,
    thresholds: &[f64],
    trials: u64,
    seed: u64,
) -> Result<Vec<ThresholdScanPoint>> {
    check_grid(thresholds, "threshold grid")?;
    src.validate()?;
    thresholds
        .iter()
        .map(|&threshold| {
            let cfg = DetectorConfig {
                threshold,
                analyzer_angle: 0.0,
                ..*det
            };
            cfg.validate()?;
            let OutcomeCounts(c) = par_trials(
                trials,
                OutcomeCounts::default,
                |acc, i| {
                    let pair = emit_pair(src, &mut RngStream::for_role(seed, 0, i, Role::Source));
                    let mut rng = StationRng::new(seed, 0, i, Side::A);
                    *acc = acc.add(detect(&cfg, pair.theta1, &mut rng));
                },
                OutcomeCounts::merge,
            );
            let n = trials.max(1) as f64;
            Ok(ThresholdScanPoint {
                threshold,
                rate_up: c[DetectionOutcome::Up as usize] as f64 / n,
                rate_down: c[DetectionOutcome::Down as usize] as f64 / n,
                rate_double: c[DetectionOutcome::Double as usize] as f64 / n,
                rate_miss: c[DetectionOutcome::Miss as usize] as f64 / n,
                trials,
            })
        })
        .collect()
}

/// Default threshold grid: 0.00 to 1.00 in steps of 0.01.
pub fn default_threshold_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Default morph grid for B: 0.50 to 0.95 in steps of 0.01.
pub fn default_morph_grid() -> Vec<f64> {
    (50..=95).map(|i| i as f64 / 100.0).collect()
}

pub const DEFAULT_DOUBLE_EPSILON: f64 = 1e-4;

/// Smallest double-free threshold lying within one grid step of the
/// threshold that maximizes single detections.
///
/// "Double-free" means a double rate at or below `epsilon`.
pub fn recommend_threshold(scan: &[ThresholdScanPoint], epsilon: f64) -> Result<f64> {
    if scan.is_empty() {
        return Err(Error::EmptyGrid("threshold scan"));
    }
    let step = scan
        .windows(2)
        .map(|w| (w[1].threshold - w[0].threshold).abs())
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let step = if step.is_finite() { step } else { 0.0 };
    let admissible: Vec<&ThresholdScanPoint> = scan.iter().filter(|p| p.rate_double <= epsilon).collect();
    let best = admissible
        .iter()
        .copied()
        .reduce(|best, p| if p.rate_single() > best.rate_single() { p } else { best })
        .ok_or(Error::NoAdmissibleThreshold { epsilon })?;
    // half-ulp slack so a spacing of exactly one step is accepted
    let tol = step * (1.0 + 1e-9);
    Ok(admissible
        .iter()
        .filter(|p| (p.threshold - best.threshold).abs() <= tol)
        .map(|p| p.threshold)
        .fold(f64::INFINITY, f64::min))
}

fn require_calibrated_a(cfg: &SweepConfig) -> Result<()> {
    if cfg.experiment.station_a.threshold != 0.5 {
        return Err(Error::InvalidConfig(format!(
            "station A threshold must be calibrated to 0.5, got {}",
            cfg.experiment.station_a.threshold
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityRow {
    pub threshold_b: f64,
    pub fitted_visibility: f64,
    pub fit_std_error: f64,
    pub extrema_visibility: f64,
    /// Fitted visibility within the quantum bound of 1.
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialCalibration {
    pub best_threshold_b: f64,
    pub table: Vec<VisibilityRow>,
}

/// Tunes B's threshold for the most visible curve that is still quantum.
///
/// A threshold is admissible when the least-squares visibility of its curve
/// does not exceed 1; past that point the curve is super-quantum. Among
/// admissible thresholds the highest extrema visibility wins, and exact ties
/// go to the threshold nearest 0.5.
pub fn sequential_visibility_calibration(cfg: &SweepConfig, thresholds_b: &[f64]) -> Result<SequentialCalibration> {
    require_calibrated_a(cfg)?;
    check_grid(thresholds_b, "threshold_b grid")?;
    let mut table = Vec::with_capacity(thresholds_b.len());
    for &t in thresholds_b {
        let mut c = cfg.clone();
        c.experiment.station_b.threshold = t;
        let curve = CorrelationCurve::from_sweep(&sweep(&c)?)?;
        let fit = fit_visibility(&curve)?;
        table.push(VisibilityRow {
            threshold_b: t,
            fitted_visibility: fit.visibility,
            fit_std_error: fit.std_error,
            extrema_visibility: visibility(&curve)?,
            admissible: fit.visibility <= 1.0,
        });
    }
    let best = pick_least_perturbed(
        table.iter().filter(|r| r.admissible).map(|r| (r.threshold_b, r.extrema_visibility)),
    )
    .ok_or_else(|| Error::InvalidConfig("every threshold_b yields a super-quantum curve".into()))?;
    Ok(SequentialCalibration {
        best_threshold_b: best,
        table,
    })
}

/// Argmax of `score`; ties within 1e-12 go to the threshold closest to 0.5,
/// then to the lower threshold.
fn pick_least_perturbed(rows: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    const TIE: f64 = 1e-12;
    rows.fold(None, |best: Option<(f64, f64)>, (t, score)| match best {
        None => Some((t, score)),
        Some((bt, bs)) => {
            let closer = (t - 0.5).abs() < (bt - 0.5).abs()
                || ((t - 0.5).abs() == (bt - 0.5).abs() && t < bt);
            if score > bs + TIE || ((score - bs).abs() <= TIE && closer) {
                Some((t, score))
            } else {
                Some((bt, bs))
            }
        }
    })
    .map(|(t, _)| t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorphScanPoint {
    pub threshold_b: f64,
    /// Least-squares visibility of the sweep curve.
    pub visibility: f64,
    pub visibility_se: f64,
    pub chsh_s: f64,
    pub chsh_sigma: f64,
    pub rotational_variance: f64,
    /// Total side-B singles over total side-A singles across the sweep.
    pub singles_ratio: f64,
}

/// Full sweep plus CHSH at each B threshold, A held at 0.5.
pub fn morph_scan(cfg: &SweepConfig, thresholds_b: &[f64]) -> Result<Vec<MorphScanPoint>> {
    require_calibrated_a(cfg)?;
    check_grid(thresholds_b, "threshold_b grid")?;
    thresholds_b
        .iter()
        .map(|&t| {
            let mut c = cfg.clone();
            c.experiment.station_b.threshold = t;
            let result = sweep(&c)?;
            let curve = CorrelationCurve::from_sweep(&result)?;
            let fit = fit_visibility(&curve)?;
            let chsh = measure_chsh(&c.experiment, ChshSettings::canonical())?;
            let total = result.total();
            Ok(MorphScanPoint {
                threshold_b: t,
                visibility: fit.visibility,
                visibility_se: fit.std_error,
                chsh_s: chsh.s,
                chsh_sigma: chsh.sigma,
                rotational_variance: rotational_variance(&curve)?,
                singles_ratio: if total.singles_a() == 0 {
                    0.0
                } else {
                    total.singles_b() as f64 / total.singles_a() as f64
                },
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvarianceRow {
    pub theta: f64,
    pub offset: f64,
    pub delta_p: f64,
    /// `|ΔP|` in units of the combined binomial standard error.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub offsets: Vec<f64>,
    pub curves: Vec<CorrelationCurve>,
    /// Each nonzero offset compared against the first.
    pub rows: Vec<InvarianceRow>,
    pub max_sigma: f64,
    pub rotational_variance: Vec<f64>,
    pub rv_limit: f64,
    pub rv_flagged: Vec<bool>,
}

pub const DEFAULT_RV_LIMIT: f64 = 0.02;

/// Repeats the sweep with station A at each offset, keeping the grid of
/// angle differences fixed. Every offset gets its own derived seed.
pub fn check_rotational_invariance(cfg: &SweepConfig, offsets: &[f64], rv_limit: f64) -> Result<InvarianceReport> {
    if cfg.experiment.trials_per_point == 0 {
        return Err(Error::InvalidConfig("rotational invariance check needs trials_per_point > 0".into()));
    }
    if offsets.is_empty() {
        return Err(Error::EmptyGrid("offsets"));
    }
    let thetas: Vec<f64> = cfg.angle_b_grid.iter().map(|b| b - cfg.angle_a).collect();
    let mut curves = Vec::with_capacity(offsets.len());
    for (k, &offset) in offsets.iter().enumerate() {
        let mut c = cfg.clone();
        c.experiment.seed = derive_seed(cfg.experiment.seed, k as u64);
        c.angle_a = offset;
        c.angle_b_grid = thetas.iter().map(|t| offset + t).collect();
        curves.push(CorrelationCurve::from_sweep(&sweep(&c)?)?);
    }
    let mut rows = Vec::new();
    for (k, curve) in curves.iter().enumerate().skip(1) {
        for (p0, pk) in curves[0].points.iter().zip(&curve.points) {
            let delta = pk.p_match - p0.p_match;
            let se = (p0.p_se().powi(2) + pk.p_se().powi(2)).sqrt();
            rows.push(InvarianceRow {
                theta: p0.theta,
                offset: offsets[k],
                delta_p: delta.abs(),
                sigma: if se > 0.0 {
                    delta.abs() / se
                } else if delta == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                },
            });
        }
    }
    let rotational_variance = curves.iter().map(rotational_variance).collect::<Result<Vec<_>>>()?;
    Ok(InvarianceReport {
        offsets: offsets.to_vec(),
        max_sigma: rows.iter().map(|r| r.sigma).fold(0.0, f64::max),
        rv_flagged: rotational_variance.iter().map(|&rv| rv > rv_limit).collect(),
        rotational_variance,
        rv_limit,
        curves,
        rows,
    })
}
