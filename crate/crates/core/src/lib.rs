//! Energy-constrained adaptive LoRA rank scheduling for multi-task federated
//! fine-tuning over roadside units (RSUs) and mobile vehicles.
//!
//! The crate is organised bottom-up:
//!
//! * [`domain`] and [`config`]: identifiers, units and the validated scenario.
//! * [`costmodel`]: four-stage latency/energy model (downlink, local compute,
//!   uplink, aggregation) over a Shannon-rate channel.
//! * [`lowrank`]: SVD truncation into LoRA factors and data-weighted aggregation.
//! * [`surrogate`]: calibrated accuracy-vs-rank response used instead of real
//!   fine-tuning.
//! * [`bandit`]: UCB-DUAL per-client rank selection with a shared dual price.
//! * [`budget`]: inter-task energy reallocation from difficulty/utilization
//!   feedback.
//! * [`mobility`]: trajectories, RSU coverage, departure prediction and the
//!   early-upload / migrate / abandon fallback.
//! * [`engine`]: the per-round simulation loop.
//! * [`metrics`]: hindsight oracles, regret/violation series and scaling checks.
//! * [`cli`]: the `fedrank` command line.

pub mod bandit;
pub mod budget;
pub mod cli;
pub mod config;
pub mod costmodel;
pub mod domain;
pub mod engine;
pub mod error;
pub mod lowrank;
pub mod metrics;
pub mod mobility;
pub mod rng;
pub mod surrogate;

pub use error::{Error, Result};
