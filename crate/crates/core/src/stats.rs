//! Correlation statistics and reference curves.
//!
//! The correlation metric is the match probability
//! `P = matches / (matches + mismatches)`. It maps to the expectation value
//! through `E = 1 − 2P`, so the singlet prediction `P = cos²θ` reads
//! `E = −cos 2θ`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runner::{check_grid, run_block_at, ExperimentConfig, SweepResult, TallyBlock};

pub fn match_probability(t: &TallyBlock) -> Result<f64> {
    if t.coincidences == 0 {
        return Err(Error::UndefinedStatistic("match probability with zero coincidences"));
    }
    Ok(t.matches as f64 / t.coincidences as f64)
}

/// Binomial standard error of a proportion `p` estimated from `n` samples.
pub fn binomial_se(p: f64, n: u64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

#[inline]
pub fn expectation(p: f64) -> f64 {
    1.0 - 2.0 * p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPoint {
    pub theta: f64,
    pub p_match: f64,
    pub e: f64,
    pub coincidences: u64,
    pub tally: TallyBlock,
}

impl CorrelationPoint {
    pub fn from_tally(theta: f64, tally: TallyBlock) -> Result<Self> {
        let p = match_probability(&tally)?;
        Ok(Self {
            theta,
            p_match: p,
            e: expectation(p),
            coincidences: tally.coincidences,
            tally,
        })
    }

    /// Standard error of `p_match`; zero for exact reference points.
    pub fn p_se(&self) -> f64 {
        if self.coincidences == 0 {
            0.0
        } else {
            binomial_se(self.p_match, self.coincidences)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    pub points: Vec<CorrelationPoint>,
}

impl CorrelationCurve {
    /// Fails if any grid point has no coincidences.
    pub fn from_sweep(sweep: &SweepResult) -> Result<Self> {
        let points = sweep
            .points
            .iter()
            .map(|p| CorrelationPoint::from_tally(p.theta, p.tally))
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }

    pub fn new(points: Vec<CorrelationPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyGrid("correlation curve"));
        }
        if let Some(i) = points.windows(2).position(|w| !(w[1].theta > w[0].theta)) {
            return Err(Error::UnorderedGrid { index: i + 1 });
        }
        Ok(Self { points })
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.theta).collect()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.p_match).collect()
    }
}

/// Contrast `(p_max − p_min) / (p_max + p_min)` of the sampled curve.
pub fn visibility(c: &CorrelationCurve) -> Result<f64> {
    let (lo, hi) = c
        .points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.p_match), hi.max(p.p_match)));
    if !(hi + lo > 0.0) {
        return Err(Error::UndefinedStatistic("visibility of an all-zero curve"));
    }
    Ok((hi - lo) / (hi + lo))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityFit {
    pub visibility: f64,
    /// Propagated from the binomial errors of the points.
    pub std_error: f64,
    pub rms_residual: f64,
}

/// Least-squares fit of `P(θ) = (1 + V cos 2θ) / 2`.
///
/// The model is linear in `V`, so the fit is closed form:
/// `V = 2 Σ (Pᵢ − ½) cᵢ / Σ cᵢ²` with `cᵢ = cos 2θᵢ`.
pub fn fit_visibility(c: &CorrelationCurve) -> Result<VisibilityFit> {
    let cs: Vec<f64> = c.points.iter().map(|p| (2.0 * p.theta).cos()).collect();
    let norm: f64 = cs.iter().map(|x| x * x).sum();
    if norm < 1e-12 {
        return Err(Error::UndefinedStatistic("visibility fit on a grid where cos 2θ vanishes"));
    }
    let v = 2.0 * c.points.iter().zip(&cs).map(|(p, ci)| (p.p_match - 0.5) * ci).sum::<f64>() / norm;
    let var: f64 = c.points.iter().zip(&cs).map(|(p, ci)| ci * ci * p.p_se().powi(2)).sum();
    let rss: f64 = c
        .points
        .iter()
        .zip(&cs)
        .map(|(p, ci)| (p.p_match - 0.5 * (1.0 + v * ci)).powi(2))
        .sum();
    Ok(VisibilityFit {
        visibility: v,
        std_error: 2.0 * var.sqrt() / norm,
        rms_residual: (rss / cs.len() as f64).sqrt(),
    })
}

/// `(max − min) / mean` of the coincidence counts across the curve.
pub fn rotational_variance(c: &CorrelationCurve) -> Result<f64> {
    let first = c.points[0].tally.trials;
    if let Some(p) = c.points.iter().find(|p| p.tally.trials != first) {
        return Err(Error::UnequalTrials {
            first,
            other: p.tally.trials,
        });
    }
    let counts: Vec<f64> = c.points.iter().map(|p| p.coincidences as f64).collect();
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    if mean == 0.0 {
        return Err(Error::UndefinedStatistic("rotational variance with zero coincidences"));
    }
    let (lo, hi) = counts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    Ok((hi - lo) / mean)
}

/// Relative Poisson fluctuation of one coincidence count, `1/√mean`.
pub fn rotational_noise_floor(c: &CorrelationCurve) -> f64 {
    let mean = c.points.iter().map(|p| p.coincidences as f64).sum::<f64>() / c.points.len() as f64;
    1.0 / mean.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub visibility: f64,
    pub rotational_variance: f64,
    pub chsh_s: f64,
}

/// `S = |E(a,b) − E(a,b′) + E(a′,b) + E(a′,b′)|`.
pub fn chsh(e_ab: f64, e_ab_prime: f64, e_a_prime_b: f64, e_a_prime_b_prime: f64) -> f64 {
    (e_ab - e_ab_prime + e_a_prime_b + e_a_prime_b_prime).abs()
}

/// Analyzer settings for the CHSH statistic, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshSettings {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl ChshSettings {
    /// a = 0°, a′ = 45°, b = 22.5°, b′ = 67.5°.
    pub fn canonical() -> Self {
        Self {
            a: 0.0,
            a_prime: 45f64.to_radians(),
            b: 22.5f64.to_radians(),
            b_prime: 67.5f64.to_radians(),
        }
    }

    /// `(angle_a, angle_b)` in the order (ab, ab′, a′b, a′b′).
    pub fn pairs(&self) -> [(f64, f64); 4] {
        [
            (self.a, self.b),
            (self.a, self.b_prime),
            (self.a_prime, self.b),
            (self.a_prime, self.b_prime),
        ]
    }

    /// Evaluates `S` for a correlation function of `angle_b − angle_a`.
    pub fn evaluate(&self, e: impl Fn(f64) -> f64) -> f64 {
        let [ab, abp, apb, apbp] = self.pairs().map(|(a, b)| e(b - a));
        chsh(ab, abp, apb, apbp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshResult {
    pub settings: ChshSettings,
    /// Expectations in the order (ab, ab′, a′b, a′b′).
    pub e: [f64; 4],
    pub e_se: [f64; 4],
    pub s: f64,
    /// Monte Carlo standard error of `s`.
    pub sigma: f64,
    pub tallies: [TallyBlock; 4],
}

/// Runs one block per CHSH setting pair (stream point indices 0..4).
pub fn measure_chsh(cfg: &ExperimentConfig, settings: ChshSettings) -> Result<ChshResult> {
    cfg.validate()?;
    let pairs = settings.pairs();
    let mut tallies = [TallyBlock::default(); 4];
    let mut e = [0.0; 4];
    let mut e_se = [0.0; 4];
    for (i, (a, b)) in pairs.into_iter().enumerate() {
        let t = run_block_at(cfg, i as u64, a, b);
        let p = match_probability(&t)?;
        tallies[i] = t;
        e[i] = expectation(p);
        e_se[i] = 2.0 * binomial_se(p, t.coincidences);
    }
    Ok(ChshResult {
        settings,
        e,
        e_se,
        s: chsh(e[0], e[1], e[2], e[3]),
        sigma: e_se.iter().map(|s| s * s).sum::<f64>().sqrt(),
        tallies,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceModel {
    /// Match probability `(1 + V cos 2θ) / 2`.
    QmCos2,
    /// Joint both-up probability `½ cos²θ`, scaled the same way.
    QmJointHalfCos2,
    /// Noiseless calibrated threshold model: `1 − 2θ/π` on `[0, π/2]`,
    /// mirrored on `[π/2, π]`.
    ClassicalTriangle,
}

impl ReferenceModel {
    /// Value at `theta` with contrast `v`.
    pub fn value(self, theta: f64, v: f64) -> f64 {
        match self {
            Self::QmCos2 => 0.5 * (1.0 + v * (2.0 * theta).cos()),
            Self::QmJointHalfCos2 => 0.25 * (1.0 + v * (2.0 * theta).cos()),
            Self::ClassicalTriangle => {
                let t = theta.rem_euclid(PI);
                let p = if t <= FRAC_PI_2 { 1.0 - t / FRAC_PI_2 } else { t / FRAC_PI_2 - 1.0 };
                0.5 + v * (p - 0.5)
            }
        }
    }
}

pub fn reference_curve(model: ReferenceModel, grid: &[f64], visibility: f64) -> Result<CorrelationCurve> {
    check_grid(grid, "reference grid")?;
    if !(0.0..=1.0).contains(&visibility) {
        return Err(Error::InvalidConfig(format!("visibility out of [0, 1]: {visibility}")));
    }
    let points = grid
        .iter()
        .map(|&theta| {
            let p = model.value(theta, visibility);
            CorrelationPoint {
                theta,
                p_match: p,
                e: expectation(p),
                coincidences: 0,
                tally: TallyBlock::default(),
            }
        })
        .collect();
    CorrelationCurve::new(points)
}
