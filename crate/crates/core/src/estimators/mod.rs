//! Entropy estimators over a [`SampleSource`](crate::sampling::SampleSource).
//!
//! Two constant-memory pipelines (repeated `LogEstimator` averaging, and the
//! bucketed estimate of `E[log2(X'/t)]` followed by a polynomial correction)
//! plus two baselines: one-smoothed counting and the full-histogram plug-in.

mod baselines;
mod bucketed;
mod config;
mod simple;

use serde::Serialize;

pub use baselines::{abis_entropy_estimate, baseline_abis_once, plugin_entropy};
pub use bucketed::{
    bucketed_entropy_estimate, bucketed_entropy_estimate_with, bucketed_h_estimate,
    bucketed_h_estimate_with_sink, correction_average,
};
pub use config::{
    configure_buckets, configure_buckets_scaled, default_correction_reps, default_r,
    default_repetitions, default_t, default_x_max, iterated_log2, log_star, AbisConfig,
    BucketConfig, BucketedConfig, SimpleConfig, ABIS_WINDOW_CONSTANT,
};
pub use simple::{log_estimator_once, simple_entropy_estimate, simple_entropy_estimate_with};

/// Per-bucket diagnostics of the bucketed pipeline. `ell` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketRecord {
    pub ell: usize,
    pub lo: u64,
    pub hi: u64,
    pub reps: u64,
    pub hits: u64,
    pub q_hat: f64,
    pub h_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    /// Entropy estimate in bits.
    pub estimate: f64,
    pub samples_used: u64,
    /// The draw budget tripped; `estimate` then averages completed work only.
    pub failed: bool,
    pub per_bucket: Option<Vec<BucketRecord>>,
    pub working_registers: usize,
    pub seed: Option<u64>,
}

/// Storage a pipeline holds fixed for the whole run, in 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProgramConstants {
    pub coefficients: usize,
    pub breakpoints: usize,
    pub repetition_counts: usize,
    pub scalars: usize,
}

impl ProgramConstants {
    pub fn total(&self) -> usize {
        self.coefficients + self.breakpoints + self.repetition_counts + self.scalars
    }
}

pub(crate) const fn words<T>() -> usize {
    std::mem::size_of::<T>().div_ceil(8)
}

/// Locals of the capped negative-binomial loop: hit count, draws so far,
/// the cap, and the symbol being counted.
pub(crate) const NB_LOOP_WORDS: usize = 4;

/// Locals of the prefix-indicator loop: run length, open flag, loop counter.
pub(crate) const PREFIX_LOOP_WORDS: usize = 3;

/// Scratch of a single repetition: the tracked symbol, the draw count `X`,
/// and the prefix length.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct RepScratch {
    pub symbol: usize,
    pub x: u64,
    pub prefix: u32,
}

/// Program constants of the simple pipeline: `r + 1` coefficients and the
/// scalars `t, r, m`.
pub fn simple_program_constants(cfg: &SimpleConfig) -> ProgramConstants {
    ProgramConstants {
        coefficients: cfg.r as usize + 1,
        breakpoints: 0,
        repetition_counts: 0,
        scalars: 3,
    }
}

/// Program constants of the bucketed pipeline: coefficients, breakpoints,
/// per-bucket repetition counts, and the scalars `t, r, correction_reps`.
pub fn bucketed_program_constants(cfg: &BucketedConfig) -> ProgramConstants {
    ProgramConstants {
        coefficients: cfg.r as usize + 1,
        breakpoints: cfg.buckets.breakpoints().len(),
        repetition_counts: cfg.buckets.num_buckets(),
        scalars: 3,
    }
}
