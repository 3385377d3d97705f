//! Source and detector of the threshold-detector model.
//!
//! The source emits orthogonally polarized pulse pairs with a uniformly
//! distributed polarization axis. A detector is a lossy polarizing
//! beamsplitter: the up channel receives the Malus fraction
//! `f = cos²(analyzer − polarization)` (plus noise), the down channel
//! receives `1 − f`, and each channel fires when its share strictly exceeds
//! the discriminator threshold. Pulse amplitudes are normalized to 1.

use std::f64::consts::{FRAC_PI_2, TAU};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Role, RngStream};

/// Shape of a zero-centred random perturbation with scale `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spread {
    /// Gaussian with standard deviation `s`.
    #[default]
    Gaussian,
    /// Uniform on `[−s, s]`.
    Uniform,
}

impl Spread {
    /// Draws one variate of scale `scale`. A zero scale consumes nothing.
    #[inline]
    pub fn sample(self, scale: f64, rng: &mut RngStream) -> f64 {
        if scale == 0.0 {
            return 0.0;
        }
        match self {
            Spread::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                scale * z
            }
            Spread::Uniform => scale * (2.0 * rng.uniform() - 1.0),
        }
    }
}

/// Reduces an angle into `[0, 2π)`.
#[inline]
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    /// Scale of the angular jitter between the two pulses of a pair, radians.
    pub decoherence: f64,
    #[serde(default)]
    pub jitter: Spread,
}

impl SourceConfig {
    pub fn new(decoherence: f64) -> Self {
        Self {
            decoherence,
            jitter: Spread::Gaussian,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.decoherence >= 0.0 && self.decoherence.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "decoherence must be finite and >= 0, got {}",
                self.decoherence
            )));
        }
        Ok(())
    }
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self::new(0.0)
    }
}

/// Polarization angles of one emitted pair, both in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonPair {
    pub theta1: f64,
    pub theta2: f64,
}

/// Emits one pair: `theta1` uniform on the circle, `theta2` orthogonal to it
/// up to the configured jitter.
pub fn emit_pair(cfg: &SourceConfig, rng: &mut RngStream) -> PhotonPair {
    let theta1 = wrap_angle(TAU * rng.uniform());
    let jitter = cfg.jitter.sample(cfg.decoherence, rng);
    PhotonPair {
        theta1,
        theta2: wrap_angle(theta1 + FRAC_PI_2 + jitter),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    /// Analyzer orientation, radians.
    pub analyzer_angle: f64,
    pub efficiency: f64,
    pub threshold: f64,
    pub noise_amplitude: f64,
    pub noise_variance: f64,
    /// Per-channel, per-trial dark-count probability.
    #[serde(default)]
    pub dark_prob: f64,
    #[serde(default)]
    pub noise_model: Spread,
}

impl DetectorConfig {
    /// Noiseless, lossless detector at analyzer angle 0.
    pub fn ideal(threshold: f64) -> Self {
        Self {
            analyzer_angle: 0.0,
            efficiency: 1.0,
            threshold,
            noise_amplitude: 0.0,
            noise_variance: 0.0,
            dark_prob: 0.0,
            noise_model: Spread::Gaussian,
        }
    }

    /// Efficiency 0.5 with noise amplitude 0.3 and variance 0.2.
    pub fn standard(threshold: f64) -> Self {
        Self {
            efficiency: 0.5,
            noise_amplitude: 0.3,
            noise_variance: 0.2,
            ..Self::ideal(threshold)
        }
    }

    pub fn with_angle(mut self, analyzer_angle: f64) -> Self {
        self.analyzer_angle = analyzer_angle;
        self
    }

    /// Effective standard deviation (or half-width) of the intensity noise.
    pub fn noise_scale(&self) -> f64 {
        self.noise_amplitude * self.noise_variance
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::InvalidConfig(format!("{what} out of range: {v}")))
        };
        if !(0.0..=1.0).contains(&self.efficiency) {
            return bad("efficiency", self.efficiency);
        }
        if !(0.0..1.0).contains(&self.dark_prob) {
            return bad("dark_prob", self.dark_prob);
        }
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return bad("threshold", self.threshold);
        }
        if !(self.noise_amplitude >= 0.0 && self.noise_amplitude.is_finite()) {
            return bad("noise_amplitude", self.noise_amplitude);
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return bad("noise_variance", self.noise_variance);
        }
        if !self.analyzer_angle.is_finite() {
            return bad("analyzer_angle", self.analyzer_angle);
        }
        Ok(())
    }
}

/// Up-channel intensity share before thresholding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensitySample {
    pub f: f64,
}

/// Malus fraction plus one additive noise draw.
#[inline]
pub fn malus_intensity(
    analyzer: f64,
    polarization: f64,
    noise_amplitude: f64,
    noise_variance: f64,
    noise_model: Spread,
    rng: &mut RngStream,
) -> IntensitySample {
    let c = (analyzer - polarization).cos();
    let noise = noise_amplitude * noise_model.sample(noise_variance, rng);
    IntensitySample { f: c * c + noise }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectionOutcome {
    Up,
    Down,
    /// Both channels fired.
    Double,
    /// Neither channel fired.
    Miss,
}

impl DetectionOutcome {
    #[inline]
    pub fn from_channels(up: bool, down: bool) -> Self {
        match (up, down) {
            (true, true) => Self::Double,
            (true, false) => Self::Up,
            (false, true) => Self::Down,
            (false, false) => Self::Miss,
        }
    }

    /// `true` for `Up` and `Down`.
    #[inline]
    pub fn is_single(self) -> bool {
        matches!(self, Self::Up | Self::Down)
    }
}

/// Measurement station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

/// The three random consumers of one detection attempt.
#[derive(Debug, Clone)]
pub struct StationRng {
    pub gate: RngStream,
    pub noise: RngStream,
    pub dark: RngStream,
}

impl StationRng {
    #[inline]
    pub fn new(seed: u64, point_index: u64, trial_index: u64, side: Side) -> Self {
        let (gate, noise, dark) = match side {
            Side::A => (Role::GateA, Role::NoiseA, Role::DarkA),
            Side::B => (Role::GateB, Role::NoiseB, Role::DarkB),
        };
        Self {
            gate: RngStream::for_role(seed, point_index, trial_index, gate),
            noise: RngStream::for_role(seed, point_index, trial_index, noise),
            dark: RngStream::for_role(seed, point_index, trial_index, dark),
        }
    }
}

/// One detection attempt on a pulse polarized at `polarization`.
///
/// The efficiency gate is drawn first; a lost pulse never reaches the
/// beamsplitter. Dark counts, when enabled, fire independently on each
/// channel whether or not the pulse got through.
#[inline]
pub fn detect(cfg: &DetectorConfig, polarization: f64, rng: &mut StationRng) -> DetectionOutcome {
    let mut up = false;
    let mut down = false;
    if rng.gate.uniform() < cfg.efficiency {
        let f = malus_intensity(
            cfg.analyzer_angle,
            polarization,
            cfg.noise_amplitude,
            cfg.noise_variance,
            cfg.noise_model,
            &mut rng.noise,
        )
        .f;
        up = f > cfg.threshold;
        down = 1.0 - f > cfg.threshold;
    }
    if cfg.dark_prob > 0.0 {
        up |= rng.dark.uniform() < cfg.dark_prob;
        down |= rng.dark.uniform() < cfg.dark_prob;
    }
    DetectionOutcome::from_channels(up, down)
}
