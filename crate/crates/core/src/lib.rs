//! Decentralized federated learning laboratory.
//!
//! The crate bundles everything needed to study backdoor propagation in
//! peer-to-peer training and the defenses against it:
//!
//! * [`topology`]: graph generators, Metropolis–Hastings mixing, local
//!   centralities and defense placement.
//! * [`diffusion`]: the linear infection-intensity model, its stationary and
//!   transient solutions and the per-hop diffusion bound.
//! * [`nn`]: a small multilayer perceptron with explicit backprop.
//! * [`attack`]: the three-phase camouflaged backdoor pipeline.
//! * [`audit`]: active auditing metrics and robust Z-score rewards.
//! * [`aggregate`]: baseline robust aggregators and the bandit-guided defense.
//! * [`sim`]: experiment orchestration, reports and the benchmark drivers.

// Float guards are written as `!(x > 0.0)` on purpose so NaN takes the
// rejecting branch; matrix sweeps index by position.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod aggregate;
pub mod attack;
pub mod audit;
pub mod diffusion;
pub mod error;
pub mod linalg;
pub mod nn;
pub mod seed;
pub mod sim;
pub mod topology;

pub use error::{Error, Result};
