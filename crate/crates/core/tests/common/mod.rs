//! Deterministic quadrature oracle for the detector model, independent of the
//! simulation code, plus frozen reference values.
//!
//! The frozen constants were computed once by a separate quadrature
//! (Gauss-Hermite over the jitter, midpoint over the source angle, normal
//! CDF for intensity noise) and cross-checked by brute-force Monte Carlo.
//! `oracle_reproduces_frozen_values` in `oracle.rs` keeps this module and the
//! constants in agreement.

#![allow(dead_code)]

use std::f64::consts::PI;

use statrs::distribution::{ContinuousCDF, Normal};

/// P(30°) for thresholds 0.5 / 0.75 at the standard parameters.
pub const P30_QUANTUM: f64 = 0.7387911;
/// Coincidences per trial, 0.5 / 0.75.
pub const COINCIDENCE_RATE_QUANTUM: f64 = 0.1657118;
pub const S_CLASSICAL: f64 = 1.9687943;
pub const S_QUANTUM: f64 = 2.7205685;
pub const S_SUPERQUANTUM: f64 = 3.3160550;
/// Least-squares visibility over the 0–180° / 5° grid.
pub const V_FIT_QUANTUM: f64 = 0.9572396;
pub const V_FIT_CLASSICAL: f64 = 0.7395861;
/// Rotational variance of the expected coincidence counts, 0.3 / 0.7.
pub const RV_UNCALIBRATED: f64 = 0.27596;
pub const SINGLES_A_QUANTUM: f64 = 0.5;
pub const SINGLES_B_QUANTUM: f64 = 0.3314235;
pub const SINGLES_RATIO_QUANTUM: f64 = 0.6628470;
/// Fitted visibility against threshold_b (threshold_a = 0.5).
pub const V_FIT_BY_THRESHOLD_B: [(f64, f64); 7] = [
    (0.70, 0.91666),
    (0.75, 0.95724),
    (0.78, 0.98083),
    (0.79, 0.98855),
    (0.80, 0.99619),
    (0.81, 1.00375),
    (0.85, 1.03287),
];

#[derive(Debug, Clone, Copy)]
pub struct Params {
    pub threshold_a: f64,
    pub threshold_b: f64,
    pub efficiency: f64,
    /// Standard deviation of the intensity noise.
    pub noise: f64,
    /// Standard deviation of the pair jitter, radians.
    pub decoherence: f64,
}

impl Params {
    pub fn standard(threshold_a: f64, threshold_b: f64) -> Self {
        Self {
            threshold_a,
            threshold_b,
            efficiency: 0.5,
            noise: 0.3 * 0.2,
            decoherence: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PointValues {
    pub p_match: f64,
    /// Coincidences per trial.
    pub coincidence_rate: f64,
    /// Singles (Up or Down, not Double) per trial.
    pub singles_a: f64,
    pub singles_b: f64,
}

const N_SOURCE: usize = 2000;
const N_JITTER: usize = 161;
const JITTER_SPAN: f64 = 8.0;

/// Probabilities of a single Up and a single Down for mean intensity `c`.
fn single_probs(c: f64, t: f64, noise: f64) -> (f64, f64) {
    let hi = t.max(1.0 - t);
    let lo = t.min(1.0 - t);
    if noise == 0.0 {
        return ((c > hi) as u8 as f64, (c < lo) as u8 as f64);
    }
    let n = Normal::new(0.0, noise).unwrap();
    (n.sf(hi - c), n.cdf(lo - c))
}

fn jitter_nodes(sigma: f64) -> Vec<(f64, f64)> {
    if sigma == 0.0 {
        return vec![(0.0, 1.0)];
    }
    let h = 2.0 * JITTER_SPAN / (N_JITTER - 1) as f64;
    let raw: Vec<(f64, f64)> = (0..N_JITTER)
        .map(|i| {
            let z = -JITTER_SPAN + h * i as f64;
            (sigma * z, (-0.5 * z * z).exp())
        })
        .collect();
    let total: f64 = raw.iter().map(|r| r.1).sum();
    raw.into_iter().map(|(g, w)| (g, w / total)).collect()
}

/// Expected statistics at analyzer difference `theta = b − a`.
pub fn point(theta: f64, p: Params) -> PointValues {
    let nodes = jitter_nodes(p.decoherence);
    let (mut m, mut mm, mut sb, mut sa) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..N_SOURCE {
        let th1 = (i as f64 + 0.5) * PI / N_SOURCE as f64;
        let (ua, da) = single_probs(th1.cos().powi(2), p.threshold_a, p.noise);
        sa += ua + da;
        for &(g, w) in &nodes {
            let (ub, db) = single_probs((theta - th1 - g).sin().powi(2), p.threshold_b, p.noise);
            m += w * (ua * db + da * ub);
            mm += w * (ua * ub + da * db);
            sb += w * (ub + db);
        }
    }
    let n = N_SOURCE as f64;
    let e = p.efficiency;
    PointValues {
        p_match: m / (m + mm),
        coincidence_rate: e * e * (m + mm) / n,
        singles_a: e * sa / n,
        singles_b: e * sb / n,
    }
}

pub fn degrees_grid() -> Vec<f64> {
    (0..=36).map(|i| (5.0 * i as f64).to_radians()).collect()
}

/// Least-squares visibility of (1 + V cos 2θ)/2 over the default grid.
pub fn fitted_visibility(p: Params) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for th in degrees_grid() {
        let c = (2.0 * th).cos();
        num += (point(th, p).p_match - 0.5) * c;
        den += c * c;
    }
    2.0 * num / den
}

pub fn chsh(p: Params) -> f64 {
    let e = |a: f64, b: f64| 1.0 - 2.0 * point((b - a).to_radians(), p).p_match;
    (e(0.0, 22.5) - e(0.0, 67.5) + e(45.0, 22.5) + e(45.0, 67.5)).abs()
}

/// (max − min) / mean of the expected coincidence counts over the grid.
pub fn rotational_variance(p: Params) -> f64 {
    let co: Vec<f64> = degrees_grid().into_iter().map(|t| point(t, p).coincidence_rate).collect();
    let max = co.iter().cloned().fold(f64::MIN, f64::max);
    let min = co.iter().cloned().fold(f64::MAX, f64::min);
    (max - min) / (co.iter().sum::<f64>() / co.len() as f64)
}
