//! Baseline robust aggregators and the bandit-guided audited defense.

mod baseline;
mod mab;
mod mixing;

pub use baseline::{
    cos_l2, fedavg, flame_lite, krum, krum_scores, trimmed_mean, Aggregated, DEFAULT_TRIM,
};
pub use mab::{
    mab_defense_round, stratified_aggregate, stratified_weights, weighted_sample, MabConfig, MabRound,
    TrustLedger,
};
pub use mixing::{error_radius, malicious_row, uniform_row, ErrorRadius, MixingRows};
