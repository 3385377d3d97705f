//! Paired trials, post-selection and angle sweeps.
//!
//! A trial emits one pair; station A measures `theta1` and station B measures
//! `theta2`. Trials where either side reports a double or a miss are
//! discarded; the remaining coincidences are matches (opposite channels) or
//! mismatches (same channel).
//!
//! Each trial derives its random streams from `(seed, point_index,
//! trial_index, role)`, so a [`TallyBlock`] is bit-identical however the
//! trials are spread across threads.

use std::ops::{Add, AddAssign};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{detect, emit_pair, DetectionOutcome, DetectorConfig, Side, SourceConfig, StationRng};
use crate::rng::{Role, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: SourceConfig,
    pub station_a: DetectorConfig,
    pub station_b: DetectorConfig,
    pub trials_per_point: u64,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Efficiency 0.5, noise (0.3, 0.2), decoherence 0.2 with the given
    /// thresholds at A and B.
    pub fn standard(threshold_a: f64, threshold_b: f64) -> Self {
        Self {
            source: SourceConfig::new(0.2),
            station_a: DetectorConfig::standard(threshold_a),
            station_b: DetectorConfig::standard(threshold_b),
            trials_per_point: 1_000_000,
            seed: 1,
        }
    }

    /// Lossless, noiseless, perfectly anticorrelated source.
    pub fn noiseless(threshold_a: f64, threshold_b: f64) -> Self {
        Self {
            source: SourceConfig::new(0.0),
            station_a: DetectorConfig::ideal(threshold_a),
            station_b: DetectorConfig::ideal(threshold_b),
            trials_per_point: 1_000_000,
            seed: 1,
        }
    }

    pub fn with_trials(mut self, trials: u64) -> Self {
        self.trials_per_point = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_threshold_b(mut self, threshold: f64) -> Self {
        self.station_b.threshold = threshold;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.station_a.validate()?;
        self.station_b.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub a: DetectionOutcome,
    pub b: DetectionOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairClass {
    Match,
    Mismatch,
    DiscardedDouble,
    DiscardedMiss,
}

impl PairClass {
    pub fn is_retained(self) -> bool {
        matches!(self, Self::Match | Self::Mismatch)
    }
}

/// Post-selection. Doubles are checked before misses, so a (Double, Miss)
/// trial counts once, as a discarded double.
pub fn classify(t: TrialOutcome) -> PairClass {
    use DetectionOutcome::*;
    match (t.a, t.b) {
        (Double, _) | (_, Double) => PairClass::DiscardedDouble,
        (Miss, _) | (_, Miss) => PairClass::DiscardedMiss,
        (Up, Down) | (Down, Up) => PairClass::Match,
        _ => PairClass::Mismatch,
    }
}

/// Counters for one block of trials at a single angle pair.
///
/// Singles count every `Up`/`Down` outcome per side before post-selection;
/// doubles and misses are per side as well.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyBlock {
    pub trials: u64,
    pub matches: u64,
    pub mismatches: u64,
    pub coincidences: u64,
    pub discarded_doubles: u64,
    pub discarded_misses: u64,
    pub doubles_a: u64,
    pub doubles_b: u64,
    pub misses_a: u64,
    pub misses_b: u64,
    pub singles_up_a: u64,
    pub singles_down_a: u64,
    pub singles_up_b: u64,
    pub singles_down_b: u64,
}

impl TallyBlock {
    #[inline]
    pub fn record(&mut self, t: TrialOutcome) {
        self.trials += 1;
        match t.a {
            DetectionOutcome::Up => self.singles_up_a += 1,
            DetectionOutcome::Down => self.singles_down_a += 1,
            DetectionOutcome::Double => self.doubles_a += 1,
            DetectionOutcome::Miss => self.misses_a += 1,
        }
        match t.b {
            DetectionOutcome::Up => self.singles_up_b += 1,
            DetectionOutcome::Down => self.singles_down_b += 1,
            DetectionOutcome::Double => self.doubles_b += 1,
            DetectionOutcome::Miss => self.misses_b += 1,
        }
        match classify(t) {
            PairClass::Match => {
                self.matches += 1;
                self.coincidences += 1;
            }
            PairClass::Mismatch => {
                self.mismatches += 1;
                self.coincidences += 1;
            }
            PairClass::DiscardedDouble => self.discarded_doubles += 1,
            PairClass::DiscardedMiss => self.discarded_misses += 1,
        }
    }

    pub fn singles_a(&self) -> u64 {
        self.singles_up_a + self.singles_down_a
    }

    pub fn singles_b(&self) -> u64 {
        self.singles_up_b + self.singles_down_b
    }

    /// The bookkeeping identities every block must satisfy.
    pub fn is_conserved(&self) -> bool {
        self.coincidences == self.matches + self.mismatches
            && self.trials == self.coincidences + self.discarded_doubles + self.discarded_misses
            && self.trials == self.singles_a() + self.doubles_a + self.misses_a
            && self.trials == self.singles_b() + self.doubles_b + self.misses_b
    }
}

impl AddAssign for TallyBlock {
    fn add_assign(&mut self, o: Self) {
        self.trials += o.trials;
        self.matches += o.matches;
        self.mismatches += o.mismatches;
        self.coincidences += o.coincidences;
        self.discarded_doubles += o.discarded_doubles;
        self.discarded_misses += o.discarded_misses;
        self.doubles_a += o.doubles_a;
        self.doubles_b += o.doubles_b;
        self.misses_a += o.misses_a;
        self.misses_b += o.misses_b;
        self.singles_up_a += o.singles_up_a;
        self.singles_down_a += o.singles_down_a;
        self.singles_up_b += o.singles_up_b;
        self.singles_down_b += o.singles_down_b;
    }
}

impl Add for TallyBlock {
    type Output = Self;

    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

/// Runs trial `trial_index` of grid point `point_index` with the analyzers at
/// `angle_a` and `angle_b` (radians).
pub fn run_trial(
    cfg: &ExperimentConfig,
    point_index: u64,
    trial_index: u64,
    angle_a: f64,
    angle_b: f64,
) -> TrialOutcome {
    let a = cfg.station_a.with_angle(angle_a);
    let b = cfg.station_b.with_angle(angle_b);
    trial(cfg, &a, &b, point_index, trial_index)
}

#[inline]
fn trial(
    cfg: &ExperimentConfig,
    station_a: &DetectorConfig,
    station_b: &DetectorConfig,
    point_index: u64,
    trial_index: u64,
) -> TrialOutcome {
    let mut src = RngStream::for_role(cfg.seed, point_index, trial_index, Role::Source);
    let pair = emit_pair(&cfg.source, &mut src);
    let mut rng_a = StationRng::new(cfg.seed, point_index, trial_index, Side::A);
    let mut rng_b = StationRng::new(cfg.seed, point_index, trial_index, Side::B);
    TrialOutcome {
        a: detect(station_a, pair.theta1, &mut rng_a),
        b: detect(station_b, pair.theta2, &mut rng_b),
    }
}

const CHUNK: u64 = 4096;

/// Folds trial indices `0..n` in parallel chunks. The result is independent
/// of scheduling as long as `merge` is associative and commutative.
pub(crate) fn par_trials<T: Send>(
    n: u64,
    identity: impl Fn() -> T + Sync + Send,
    visit: impl Fn(&mut T, u64) + Sync + Send,
    merge: impl Fn(T, T) -> T + Sync + Send,
) -> T {
    (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = identity();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                visit(&mut acc, i);
            }
            acc
        })
        .reduce(&identity, merge)
}

/// Runs `cfg.trials_per_point` trials at grid point 0.
pub fn run_block(cfg: &ExperimentConfig, angle_a: f64, angle_b: f64) -> TallyBlock {
    run_block_at(cfg, 0, angle_a, angle_b)
}

/// Runs `cfg.trials_per_point` trials using the streams of grid point
/// `point_index`.
pub fn run_block_at(cfg: &ExperimentConfig, point_index: u64, angle_a: f64, angle_b: f64) -> TallyBlock {
    let a = cfg.station_a.with_angle(angle_a);
    let b = cfg.station_b.with_angle(angle_b);
    par_trials(
        cfg.trials_per_point,
        TallyBlock::default,
        |tally, i| tally.record(trial(cfg, &a, &b, point_index, i)),
        Add::add,
    )
}

/// Calls `visit` with the class of every trial of a block, in trial order.
pub fn for_each_class(
    cfg: &ExperimentConfig,
    point_index: u64,
    angle_a: f64,
    angle_b: f64,
    mut visit: impl FnMut(u64, PairClass),
) {
    let a = cfg.station_a.with_angle(angle_a);
    let b = cfg.station_b.with_angle(angle_b);
    for i in 0..cfg.trials_per_point {
        visit(i, classify(trial(cfg, &a, &b, point_index, i)));
    }
}

/// 0° to 180° inclusive in 5° steps, in radians.
pub fn default_angle_grid() -> Vec<f64> {
    (0..=36).map(|i| (5.0 * i as f64).to_radians()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub experiment: ExperimentConfig,
    /// Station A analyzer angle, radians.
    pub angle_a: f64,
    /// Station B analyzer angles, radians, strictly increasing.
    pub angle_b_grid: Vec<f64>,
}

impl SweepConfig {
    pub fn new(experiment: ExperimentConfig) -> Self {
        Self {
            experiment,
            angle_a: 0.0,
            angle_b_grid: default_angle_grid(),
        }
    }

    pub fn with_angle_a(mut self, angle_a: f64) -> Self {
        self.angle_a = angle_a;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        check_grid(&self.angle_b_grid, "angle_b_grid")
    }
}

pub(crate) fn check_grid(grid: &[f64], name: &'static str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid(name));
    }
    if let Some(i) = grid.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::UnorderedGrid { index: i + 1 });
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidConfig(format!("{name} contains a non-finite value")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// `angle_b − angle_a`, radians.
    pub theta: f64,
    pub angle_b: f64,
    pub tally: TallyBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub angle_a: f64,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn total(&self) -> TallyBlock {
        self.points.iter().map(|p| p.tally).fold(TallyBlock::default(), Add::add)
    }
}

/// One block per grid point; point `i` uses stream point index `i`.
pub fn sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let points = cfg
        .angle_b_grid
        .iter()
        .enumerate()
        .map(|(i, &angle_b)| SweepPoint {
            theta: angle_b - cfg.angle_a,
            angle_b,
            tally: run_block_at(&cfg.experiment, i as u64, cfg.angle_a, angle_b),
        })
        .collect();
    Ok(SweepResult {
        angle_a: cfg.angle_a,
        points,
    })
}

/// Degrees helper for grids written in degrees.
pub fn degrees_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| (start + step * i as f64).to_radians()).collect()
}
