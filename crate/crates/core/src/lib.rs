//! Monte Carlo simulator and threshold-selection toolkit for feedback-limited
//! opportunistic beamforming in vector broadcast channels.
//!
//! A base station broadcasts `M` statistically identical beams to `n`
//! independent users. Each user measures one SINR value per beam and decides,
//! from her own SINR vector alone, which beams to request. The base station
//! schedules the highest reported SINR per beam, so the instantaneous sum
//! rate is `sum_m log(1 + max contender SINR on beam m)`, with beams nobody
//! requested contributing zero. Feedback cost is the expected number of users
//! requesting a given beam.
//!
//! The crate provides:
//! - seeded fading models with marginal and maximum-SINR distribution
//!   functions ([`fading`]),
//! - decentralized, beam-symmetric feedback rules and their evaluation
//!   ([`policy`]),
//! - the per-beam scheduler and common-random-number rate estimators
//!   ([`scheduler`]),
//! - load-matched threshold constructions, loss/gain event classifiers, and
//!   the statistical dominance checks built on them ([`threshold`]),
//! - solvers for the induced threshold-selection problem over feedback
//!   probabilities ([`optimizer`]),
//! - a declarative batch experiment runner ([`config`], [`runner`]).

pub mod config;
pub mod error;
pub mod fading;
pub mod optimizer;
pub mod policy;
pub mod rng;
pub mod runner;
pub mod scheduler;
pub mod threshold;

pub use error::{Error, Result};
