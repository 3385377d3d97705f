use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Channel, DeadTimeScope, Side, TagEvent};
use crate::error::{Error, Result};
use crate::model::DetectionOutcome;
use crate::rng::{Role, RngStream};
use crate::runner::{run_trial, ExperimentConfig};

/// Time shard length. Each shard draws its arrivals, detections and dark
/// events from its own streams, so shards can be generated in parallel.
const SHARD_NS: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamConfig {
    /// Pair emissions per second.
    pub pair_rate: f64,
    /// Seconds.
    pub duration: f64,
    /// Nanoseconds.
    #[serde(default = "default_dead_time")]
    pub dead_time: u64,
    /// Dark events per second per channel.
    #[serde(default)]
    pub dark_rate: f64,
    /// Timing jitter standard deviation, nanoseconds.
    #[serde(default)]
    pub jitter_sigma: f64,
    #[serde(default)]
    pub dead_time_scope: DeadTimeScope,
    pub experiment: ExperimentConfig,
    /// Analyzer angles, radians.
    pub angle_a: f64,
    pub angle_b: f64,
}

fn default_dead_time() -> u64 {
    1000
}

impl StreamConfig {
    pub fn new(experiment: ExperimentConfig, pair_rate: f64, duration: f64) -> Self {
        Self {
            pair_rate,
            duration,
            dead_time: default_dead_time(),
            dark_rate: 0.0,
            jitter_sigma: 0.0,
            dead_time_scope: DeadTimeScope::Side,
            experiment,
            angle_a: 0.0,
            angle_b: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        for (name, v) in [
            ("pair_rate", self.pair_rate),
            ("duration", self.duration),
            ("dark_rate", self.dark_rate),
            ("jitter_sigma", self.jitter_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.angle_a.is_finite() && self.angle_b.is_finite()) {
            return Err(Error::InvalidConfig("analyzer angles must be finite".into()));
        }
        Ok(())
    }

    pub fn duration_ns(&self) -> u64 {
        (self.duration * 1e9).round() as u64
    }
}

/// Generates the side-A and side-B streams, each sorted by time.
pub fn generate_streams(cfg: &StreamConfig, seed: u64) -> Result<(Vec<TagEvent>, Vec<TagEvent>)> {
    cfg.validate()?;
    let mut exp = cfg.experiment;
    exp.seed = seed;
    let total = cfg.duration_ns();
    let shards = total.div_ceil(SHARD_NS);
    let raw: Vec<Vec<TagEvent>> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let start = s * SHARD_NS;
            let end = (start + SHARD_NS).min(total);
            shard_events(cfg, &exp, s, start, end)
        })
        .collect();
    let (mut a, mut b): (Vec<TagEvent>, Vec<TagEvent>) = raw.into_iter().flatten().partition(|e| e.side == Side::A);
    a.sort_unstable();
    b.sort_unstable();
    Ok((
        apply_dead_time(a, cfg.dead_time, cfg.dead_time_scope),
        apply_dead_time(b, cfg.dead_time, cfg.dead_time_scope),
    ))
}

fn poisson_times(rng: &mut RngStream, rate_per_ns: f64, start: u64, end: u64, mut emit: impl FnMut(u64, f64)) {
    if rate_per_ns <= 0.0 {
        return;
    }
    let mut t = start as f64;
    let mut k = 0;
    loop {
        let gap: f64 = Exp1.sample(rng);
        t += gap / rate_per_ns;
        if t >= end as f64 {
            break;
        }
        emit(k, t);
        k += 1;
    }
}

fn shard_events(cfg: &StreamConfig, exp: &ExperimentConfig, shard: u64, start: u64, end: u64) -> Vec<TagEvent> {
    let mut events = Vec::new();
    let seed = exp.seed;
    let mut arrivals = RngStream::for_role(seed, shard, 0, Role::Arrivals);
    poisson_times(&mut arrivals, cfg.pair_rate * 1e-9, start, end, |k, t_emit| {
        let outcome = run_trial(exp, shard, k, cfg.angle_a, cfg.angle_b);
        let mut jitter = RngStream::for_role(seed, shard, k, Role::Jitter);
        // four draws per emission whatever fired, in a fixed channel order
        let offsets: [f64; 4] = std::array::from_fn(|_| {
            let z: f64 = StandardNormal.sample(&mut jitter);
            cfg.jitter_sigma * z
        });
        let fired = |o: DetectionOutcome| {
            (
                matches!(o, DetectionOutcome::Up | DetectionOutcome::Double),
                matches!(o, DetectionOutcome::Down | DetectionOutcome::Double),
            )
        };
        let (a_up, a_down) = fired(outcome.a);
        let (b_up, b_down) = fired(outcome.b);
        for (on, side, channel, dt) in [
            (a_up, Side::A, Channel::Up, offsets[0]),
            (a_down, Side::A, Channel::Down, offsets[1]),
            (b_up, Side::B, Channel::Up, offsets[2]),
            (b_down, Side::B, Channel::Down, offsets[3]),
        ] {
            if on {
                events.push(TagEvent::new(to_tick(t_emit + dt), side, channel));
            }
        }
    });
    for (role, side, channel) in [
        (Role::DarkTagAUp, Side::A, Channel::Up),
        (Role::DarkTagADown, Side::A, Channel::Down),
        (Role::DarkTagBUp, Side::B, Channel::Up),
        (Role::DarkTagBDown, Side::B, Channel::Down),
    ] {
        let mut rng = RngStream::for_role(seed, shard, 0, role);
        poisson_times(&mut rng, cfg.dark_rate * 1e-9, start, end, |_, t| {
            events.push(TagEvent::new(to_tick(t), side, channel));
        });
    }
    events
}

fn to_tick(t: f64) -> u64 {
    t.round().max(0.0) as u64
}

/// Drops every event closer than `dead_time` to the previous accepted event
/// of its group. Input must be sorted.
fn apply_dead_time(events: Vec<TagEvent>, dead_time: u64, scope: DeadTimeScope) -> Vec<TagEvent> {
    let mut last: [Option<u64>; 4] = [None; 4];
    events
        .into_iter()
        .filter(|e| {
            let g = scope.group(e);
            match last[g] {
                Some(prev) if e.t - prev < dead_time => false,
                _ => {
                    last[g] = Some(e.t);
                    true
                }
            }
        })
        .collect()
}
