//! Synthetic time-tagged detection streams.
//!
//! [`generate_streams`] places the trial-level model on a time axis: pair
//! emissions arrive as a Poisson process, every fired channel produces a
//! [`TagEvent`] at the emission time plus Gaussian timing jitter, dark
//! events arrive as independent Poisson processes per channel, and a dead
//! time after each accepted event blocks the detector. The analyzers then
//! look for same-side doubles, cross-side coincidences and the dead-time
//! signature in the resulting streams.

mod analysis;
pub mod format;
mod generate;

pub use analysis::{
    coincidence_filter, dead_time_assess, find_doubles, pairs_to_tally, DeadTimeReport, DoublesReport,
};
pub use generate::{generate_streams, StreamConfig};

use serde::{Deserialize, Serialize};

pub use crate::model::Side;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    Up,
    Down,
}

impl Channel {
    pub fn opposite(self) -> Self {
        match self {
            Self::Up => Self::Down,
            Self::Down => Self::Up,
        }
    }
}

/// One detection at integer-nanosecond time `t`.
///
/// Field order gives the canonical sort: time, then side, then channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TagEvent {
    pub t: u64,
    pub side: Side,
    pub channel: Channel,
}

impl TagEvent {
    pub fn new(t: u64, side: Side, channel: Channel) -> Self {
        Self { t, side, channel }
    }
}

/// Which events share a dead time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeadTimeScope {
    /// One dead time per side: any event blocks both channels.
    #[default]
    Side,
    /// Each (side, channel) detector has its own dead time.
    Channel,
}

impl DeadTimeScope {
    pub(crate) fn group(self, e: &TagEvent) -> usize {
        let side = match e.side {
            Side::A => 0,
            Side::B => 1,
        };
        match self {
            Self::Side => side,
            Self::Channel => 2 * side + (e.channel as usize),
        }
    }
}

/// Errors with the first index where time decreases.
pub fn check_sorted(stream: &[TagEvent]) -> Result<()> {
    match stream.windows(2).position(|w| w[1].t < w[0].t) {
        Some(i) => Err(Error::Unsorted { index: i + 1 }),
        None => Ok(()),
    }
}
