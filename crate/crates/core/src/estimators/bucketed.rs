use super::{
    words, BucketConfig, BucketRecord, BucketedConfig, EstimateReport, RepScratch, NB_LOOP_WORDS,
    PREFIX_LOOP_WORDS,
};
use crate::correction::{build_correction, CorrectionPolynomial, LogBase};
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::sampling::{
    draw_neg_binomial, guard_wrap, observe_prefix_indicators, Guarded, NbOutcome, SampleSource,
};

/// Registers of the bucket loop.
#[derive(Debug, Default)]
struct BucketState {
    level: usize,
    rep: u64,
    hits: u64,
    log_sum: CompensatedSum,
    q_acc: f64,
    estimate: CompensatedSum,
    scratch: RepScratch,
}

/// Registers of the correction loop.
#[derive(Debug, Default)]
struct CorrectionState {
    sum: CompensatedSum,
    done: u64,
    scratch: RepScratch,
}

const BUCKETED_WORKING_WORDS: usize =
    words::<BucketState>() + words::<CorrectionState>() + NB_LOOP_WORDS + PREFIX_LOOP_WORDS;

fn log2_ratio(x: u64, t: u64) -> f64 {
    (x as f64 / t as f64).log2()
}

/// Estimates `E[log2(X'/t)]`, `X' = min(X, X_max)`, by bucketing. Each
/// finished bucket is handed to `sink` as soon as it closes; only the
/// fixed-size loop state persists between buckets.
pub fn bucketed_h_estimate_with_sink<S, F>(
    src: &mut S,
    cfg: &BucketConfig,
    mut sink: F,
) -> Result<f64>
where
    S: SampleSource,
    F: FnMut(BucketRecord),
{
    let t = cfg.t();
    let x_max = cfg.x_max();
    let last = cfg.num_buckets() - 1;
    let b = cfg.breakpoints();
    let mut st = BucketState::default();
    while st.level <= last {
        let (lo, hi) = (b[st.level], b[st.level + 1]);
        let reps = cfg.reps()[st.level];
        st.hits = 0;
        st.log_sum = CompensatedSum::new();
        st.rep = 0;
        while st.rep < reps {
            st.scratch.symbol = src.try_next()?;
            st.scratch.x = match draw_neg_binomial(src, st.scratch.symbol, t, Some(hi))? {
                NbOutcome::Hit(x) => x.min(x_max),
                NbOutcome::Exceeded if st.level == last => x_max,
                NbOutcome::Exceeded => 0,
            };
            if st.scratch.x != 0 && cfg.contains(st.level, st.scratch.x) {
                st.hits += 1;
                st.log_sum.add(log2_ratio(st.scratch.x, t));
            }
            st.rep += 1;
        }
        let h_hat = if st.hits == 0 {
            log2_ratio(hi, t)
        } else {
            st.log_sum.value() / st.hits as f64
        };
        let q_hat = if st.level == last {
            1.0 - st.q_acc
        } else {
            let q = st.hits as f64 / reps as f64;
            st.q_acc += q;
            q
        };
        st.estimate.add(q_hat * h_hat);
        sink(BucketRecord {
            ell: st.level + 1,
            lo,
            hi,
            reps,
            hits: st.hits,
            q_hat,
            h_hat,
        });
        st.level += 1;
    }
    Ok(st.estimate.value())
}

/// Bucketed estimate of `E[log2(X'/t)]` with per-bucket diagnostics.
pub fn bucketed_h_estimate<S: SampleSource>(
    src: &mut S,
    cfg: &BucketConfig,
) -> Result<EstimateReport> {
    let start = src.draws();
    let mut records = Vec::with_capacity(cfg.num_buckets());
    let estimate = bucketed_h_estimate_with_sink(src, cfg, |rec| records.push(rec))?;
    Ok(EstimateReport {
        estimate,
        samples_used: src.draws() - start,
        failed: false,
        per_bucket: Some(records),
        working_registers: BUCKETED_WORKING_WORDS,
        seed: None,
    })
}

/// Mean of `g(prefix)` over `reps` fresh symbols `i_j ~ D`, each followed by
/// `r` prefix samples; unbiased for `E_i[scale * h_t(p_i)]`.
pub fn correction_average<S: SampleSource>(
    src: &mut S,
    t: u64,
    r: u32,
    reps: u64,
    corr: &CorrectionPolynomial,
) -> Result<f64> {
    if reps == 0 {
        return Err(Error::InvalidConfig(
            "correction_reps must be at least 1".into(),
        ));
    }
    if corr.t() != t || corr.r() != r {
        return Err(Error::InvalidConfig(format!(
            "correction built for (t, r) = ({}, {}), asked for ({t}, {r})",
            corr.t(),
            corr.r()
        )));
    }
    let mut st = CorrectionState::default();
    while st.done < reps {
        st.scratch.symbol = src.try_next()?;
        st.scratch.prefix = observe_prefix_indicators(src, st.scratch.symbol, r)?;
        st.sum.add(corr.eval_g(st.scratch.prefix));
        st.done += 1;
    }
    Ok(st.sum.value() / reps as f64)
}

/// Entropy estimate `H_hat - Z_bar` with default parameters for `(k, eps)`.
pub fn bucketed_entropy_estimate<S: SampleSource>(
    src: &mut S,
    k: usize,
    eps: f64,
) -> Result<EstimateReport> {
    let cfg = BucketedConfig::defaults(k, eps)?;
    let corr = build_correction(cfg.t(), cfg.r, LogBase::Two)?;
    bucketed_entropy_estimate_with(src, &cfg, &corr)
}

/// `H_hat - Z_bar` under an explicit configuration and correction.
pub fn bucketed_entropy_estimate_with<S: SampleSource>(
    src: &mut S,
    cfg: &BucketedConfig,
    corr: &CorrectionPolynomial,
) -> Result<EstimateReport> {
    cfg.validate()?;
    let start = src.draws();
    let max_draws = cfg.max_draws.unwrap_or_else(|| cfg.worst_case_samples());
    let mut records = Vec::with_capacity(cfg.buckets.num_buckets());
    let outcome = guard_wrap(src, max_draws, |g| {
        let h = bucketed_h_estimate_with_sink(g, &cfg.buckets, |rec| records.push(rec))?;
        let z = correction_average(g, cfg.t(), cfg.r, cfg.correction_reps, corr)?;
        Ok(h - z)
    })?;
    let (estimate, failed) = match outcome {
        Guarded::Done(v) => (v, false),
        Guarded::Fail { .. } => (f64::NAN, true),
    };
    Ok(EstimateReport {
        estimate,
        samples_used: src.draws() - start,
        failed,
        per_bucket: Some(records),
        working_registers: BUCKETED_WORKING_WORDS,
        seed: None,
    })
}
