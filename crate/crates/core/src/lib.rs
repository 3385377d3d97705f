//! Monte Carlo laboratory for a local threshold-detector model of EPRB
//! polarization-correlation experiments.
//!
//! A classical source emits orthogonally polarized pulse pairs; each station
//! splits its pulse by Malus's law and thresholds the two channel
//! intensities. Discarding doubles and misses leaves a post-selected sample
//! whose correlation can be tuned, through the thresholds alone, from the
//! classical triangle law through the quantum `cos²θ` curve to correlations
//! beyond the Tsirelson bound.
//!
//! Modules, bottom up:
//!
//! * [`rng`]: counter-derived random streams, the determinism contract.
//! * [`model`]: source and detector.
//! * [`runner`]: paired trials, post-selection, tallies and sweeps.
//! * [`stats`]: match probability, visibility, rotational variance, CHSH and
//!   reference curves.
//! * [`calibration`]: threshold scans and the calibration procedures.
//! * [`timetag`]: synthetic time-tagged streams and their analyzers.
//! * [`cli`]: the `eprb` command-line front end.
//!
//! ```
//! use eprb_lab::runner::{run_block, ExperimentConfig};
//! use eprb_lab::stats::match_probability;
//!
//! let cfg = ExperimentConfig::standard(0.5, 0.75).with_trials(20_000);
//! let tally = run_block(&cfg, 0.0, 0.0);
//! assert!(tally.is_conserved());
//! assert!(match_probability(&tally).unwrap() > 0.9);
//! ```

pub mod calibration;
pub mod cli;
pub mod error;
pub mod model;
pub mod rng;
pub mod runner;
pub mod stats;
pub mod timetag;

pub use error::{Error, Result};
