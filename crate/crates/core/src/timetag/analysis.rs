use serde::{Deserialize, Serialize};

use super::{check_sorted, DeadTimeScope, TagEvent};
use crate::error::Result;
use crate::runner::TallyBlock;
use super::Channel;

/// Counts same-side, opposite-channel pairs with `0 < t2 − t1 <= window`.
///
/// Matching is greedy from the left: each unpaired event takes the first
/// later unpaired partner inside the window, and no event is used twice.
pub fn find_doubles(stream: &[TagEvent], window: u64) -> Result<u64> {
    check_sorted(stream)?;
    let mut used = vec![false; stream.len()];
    let mut count = 0;
    for i in 0..stream.len() {
        if used[i] {
            continue;
        }
        let e1 = stream[i];
        for j in i + 1..stream.len() {
            let e2 = stream[j];
            if e2.t - e1.t > window {
                break;
            }
            if !used[j] && e2.t > e1.t && e2.side == e1.side && e2.channel == e1.channel.opposite() {
                used[i] = true;
                used[j] = true;
                count += 1;
                break;
            }
        }
    }
    Ok(count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoublesReport {
    pub window: u64,
    pub count_a: u64,
    pub count_b: u64,
}

impl DoublesReport {
    pub fn measure(stream_a: &[TagEvent], stream_b: &[TagEvent], window: u64) -> Result<Self> {
        Ok(Self {
            window,
            count_a: find_doubles(stream_a, window)?,
            count_b: find_doubles(stream_b, window)?,
        })
    }
}

/// Greedy nearest-in-time matching of A events to B events.
///
/// A events are visited in time order; each takes the closest unused B event
/// with `|tB − tA| <= window` (earlier B event on a tie).
pub fn coincidence_filter(stream_a: &[TagEvent], stream_b: &[TagEvent], window: u64) -> Result<Vec<(TagEvent, TagEvent)>> {
    check_sorted(stream_a)?;
    check_sorted(stream_b)?;
    let mut used = vec![false; stream_b.len()];
    let mut lo = 0;
    let mut pairs = Vec::new();
    for &ea in stream_a {
        while lo < stream_b.len() && stream_b[lo].t.saturating_add(window) < ea.t {
            lo += 1;
        }
        let mut best: Option<(usize, u64)> = None;
        for (j, eb) in stream_b.iter().enumerate().skip(lo) {
            if eb.t > ea.t.saturating_add(window) {
                break;
            }
            if used[j] {
                continue;
            }
            let d = eb.t.abs_diff(ea.t);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, _)) = best {
            used[j] = true;
            pairs.push((ea, stream_b[j]));
        }
    }
    Ok(pairs)
}

/// Tallies matched pairs: opposite channels are matches.
///
/// Every pair is a coincidence, so `trials == coincidences`.
pub fn pairs_to_tally(pairs: &[(TagEvent, TagEvent)]) -> TallyBlock {
    let mut t = TallyBlock::default();
    for (a, b) in pairs {
        t.trials += 1;
        t.coincidences += 1;
        if a.channel != b.channel {
            t.matches += 1;
        } else {
            t.mismatches += 1;
        }
        match a.channel {
            Channel::Up => t.singles_up_a += 1,
            Channel::Down => t.singles_down_a += 1,
        }
        match b.channel {
            Channel::Up => t.singles_up_b += 1,
            Channel::Down => t.singles_down_b += 1,
        }
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadTimeBin {
    pub window: u64,
    /// Consecutive same-group gaps strictly shorter than `window`.
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadTimeReport {
    pub scope: DeadTimeScope,
    pub bins: Vec<DeadTimeBin>,
}

impl DeadTimeReport {
    /// Largest window below which no gaps were seen, or `None` if even the
    /// smallest window has gaps.
    pub fn recovered_dead_time(&self) -> Option<u64> {
        let mut bins = self.bins.clone();
        bins.sort_by_key(|b| b.window);
        bins.iter().take_while(|b| b.count == 0).last().map(|b| b.window)
    }
}

/// Histogram of consecutive-event gaps within each dead-time group.
pub fn dead_time_assess(stream: &[TagEvent], windows: &[u64], scope: DeadTimeScope) -> Result<DeadTimeReport> {
    check_sorted(stream)?;
    let mut last: [Option<u64>; 4] = [None; 4];
    let mut gaps = Vec::with_capacity(stream.len());
    for e in stream {
        let g = scope.group(e);
        if let Some(prev) = last[g] {
            gaps.push(e.t - prev);
        }
        last[g] = Some(e.t);
    }
    gaps.sort_unstable();
    let bins = windows
        .iter()
        .map(|&w| DeadTimeBin {
            window: w,
            count: gaps.partition_point(|&g| g < w) as u64,
        })
        .collect();
    Ok(DeadTimeReport { scope, bins })
}
