//! Scalable Monte-Carlo execution of purification protocols at the
//! Bell-label level: channel models, pair ensembles, the two-party
//! engine, and the error test's sampling-bound analysis.

mod channel;
mod engine;
mod ensemble;
mod sampling;

use thiserror::Error;

pub use channel::{distribute, ChannelModel};
pub use engine::{
    derive_trial_seed, rejection_round, replay_decisions, run_error_test, run_protocol,
    run_protocol_traced, BitBuf, Decision, ErrorTestOutcome, Message, Overrides, RoundOutcome,
    RoundStat, RunTrace, Sender, SimConfig, TrialReport,
};
pub use sampling::{
    sampling_bound, verify_sampling_bound, verify_sampling_bound_with, worst_case_bad_count,
    SamplingBoundQuery, SamplingReport, DESK_GRID,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("invalid sampling query: {0}")]
    InvalidQuery(String),
    #[error("not enough alive pairs: need {needed}, have {alive}")]
    InsufficientPairs { needed: u64, alive: u64 },
    #[error("steps without a two-party label-level realization: {}", .0.join("; "))]
    UnsupportedSteps(Vec<String>),
    #[error("malformed script for execution: {0}")]
    MalformedScript(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("parameters below Monte-Carlo resolution: {0}")]
    ResolutionInfeasible(String),
}

pub use ensemble::PairEnsemble;
