use super::{words, EstimateReport, RepScratch, SimpleConfig, NB_LOOP_WORDS, PREFIX_LOOP_WORDS};
use crate::correction::{build_correction, CorrectionPolynomial, LogBase};
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::sampling::{
    draw_neg_binomial, guard_wrap, observe_prefix_indicators, Guarded, NbOutcome, SampleSource,
};

/// `eta = log(X/t) - g(B_1..B_r)` in the base of `corr`, with `X ~ NB(t, p_i)`
/// and the prefix indicators read from `r` fresh samples. Consumes `X + r`
/// samples.
pub fn log_estimator_once<S: SampleSource>(
    src: &mut S,
    symbol: usize,
    t: u64,
    r: u32,
    corr: &CorrectionPolynomial,
) -> Result<f64> {
    if corr.t() != t || corr.r() != r {
        return Err(Error::InvalidConfig(format!(
            "correction built for (t, r) = ({}, {}), asked for ({t}, {r})",
            corr.t(),
            corr.r()
        )));
    }
    let x = match draw_neg_binomial(src, symbol, t, None)? {
        NbOutcome::Hit(x) => x,
        NbOutcome::Exceeded => unreachable!("uncapped draw cannot exceed"),
    };
    let prefix = observe_prefix_indicators(src, symbol, r)?;
    Ok(corr.log_base_scale() * (x as f64 / t as f64).ln() - corr.eval_g(prefix))
}

/// Everything the simple pipeline keeps between repetitions.
#[derive(Debug, Default)]
struct SimpleState {
    sum: CompensatedSum,
    done: u64,
    scratch: RepScratch,
}

const SIMPLE_WORKING_WORDS: usize = words::<SimpleState>() + NB_LOOP_WORDS + PREFIX_LOOP_WORDS;

/// Averages `m` independent `LogEstimator` values, each for a fresh
/// `i ~ D`, under the Markov budget guard.
pub fn simple_entropy_estimate<S: SampleSource>(
    src: &mut S,
    cfg: &SimpleConfig,
) -> Result<EstimateReport> {
    cfg.validate()?;
    let corr = build_correction(cfg.t, cfg.r, LogBase::Two)?;
    simple_entropy_estimate_with(src, cfg, &corr)
}

/// [`simple_entropy_estimate`] with a prebuilt correction polynomial.
pub fn simple_entropy_estimate_with<S: SampleSource>(
    src: &mut S,
    cfg: &SimpleConfig,
    corr: &CorrectionPolynomial,
) -> Result<EstimateReport> {
    cfg.validate()?;
    let start = src.draws();
    let mut state = SimpleState::default();
    let outcome = guard_wrap(src, cfg.max_draws(), |g| {
        while state.done < cfg.m {
            state.scratch.symbol = g.try_next()?;
            let eta = log_estimator_once(g, state.scratch.symbol, cfg.t, cfg.r, corr)?;
            state.sum.add(eta);
            state.done += 1;
        }
        Ok(())
    })?;
    let estimate = if state.done == 0 {
        0.0
    } else {
        state.sum.value() / state.done as f64
    };
    Ok(EstimateReport {
        estimate,
        samples_used: src.draws() - start,
        failed: matches!(outcome, Guarded::Fail { .. }),
        per_bucket: None,
        working_registers: SIMPLE_WORKING_WORDS,
        seed: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::DiscreteDistribution;
    use crate::numeric::RunningStats;
    use crate::oracle::{expected_eta, TruncationPolicy};
    use crate::sampling::SeededSource;

    #[test]
    fn point_mass_eta_is_zero() {
        let d = DiscreteDistribution::point_mass(5, 2).unwrap();
        let mut src = SeededSource::new(&d, 1);
        let corr = build_correction(16, 2, LogBase::Two).unwrap();
        for _ in 0..10 {
            assert_eq!(log_estimator_once(&mut src, 2, 16, 2, &corr).unwrap(), 0.0);
        }
        assert_eq!(src.draws(), 10 * (16 + 2));
    }

    #[test]
    fn mismatched_correction_is_rejected() {
        let d = DiscreteDistribution::uniform(2).unwrap();
        let mut src = SeededSource::new(&d, 1);
        let corr = build_correction(16, 2, LogBase::Two).unwrap();
        assert!(log_estimator_once(&mut src, 0, 36, 3, &corr).is_err());
    }

    #[test]
    fn eta_mean_matches_oracle() {
        let d = DiscreteDistribution::new(vec![0.3, 0.7]).unwrap();
        let corr = build_correction(16, 2, LogBase::Two).unwrap();
        let mut src = SeededSource::new(&d, 42);
        let stats: RunningStats = (0..100_000)
            .map(|_| log_estimator_once(&mut src, 0, 16, 2, &corr).unwrap())
            .collect();
        let want = expected_eta(16, 2, 0.3, &corr, &TruncationPolicy::default()).unwrap();
        assert!(
            (stats.mean() - want.value).abs() < 4.0 * stats.std_error(),
            "{} vs {}",
            stats.mean(),
            want.value
        );
    }

    #[test]
    fn point_mass_estimate_is_exactly_zero() {
        let d = DiscreteDistribution::point_mass(10, 0).unwrap();
        let mut cfg = SimpleConfig::defaults(10, 0.3).unwrap();
        cfg.m = 50;
        let rep = simple_entropy_estimate(&mut SeededSource::new(&d, 3), &cfg).unwrap();
        assert_eq!(rep.estimate, 0.0);
        assert!(!rep.failed);
        assert_eq!(rep.samples_used, 50 * (1 + u64::from(cfg.r) + cfg.t));
    }

    #[test]
    fn sample_count_near_expectation() {
        let d = DiscreteDistribution::uniform(50).unwrap();
        let mut cfg = SimpleConfig::defaults(50, 0.3).unwrap();
        cfg.m = 400;
        let rep = simple_entropy_estimate(&mut SeededSource::new(&d, 9), &cfg).unwrap();
        let ratio = rep.samples_used as f64 / cfg.expected_samples();
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn tight_budget_fails_with_partial_accounting() {
        let d = DiscreteDistribution::uniform(50).unwrap();
        let mut cfg = SimpleConfig::defaults(50, 0.3).unwrap();
        cfg.m = 100;
        cfg.budget_factor = 0.01;
        let rep = simple_entropy_estimate(&mut SeededSource::new(&d, 9), &cfg).unwrap();
        assert!(rep.failed);
        assert_eq!(rep.samples_used, cfg.max_draws());
    }

    #[test]
    fn deterministic_given_seed() {
        let d = DiscreteDistribution::uniform(7).unwrap();
        let mut cfg = SimpleConfig::defaults(7, 0.3).unwrap();
        cfg.m = 200;
        let a = simple_entropy_estimate(&mut SeededSource::new(&d, 5), &cfg).unwrap();
        let b = simple_entropy_estimate(&mut SeededSource::new(&d, 5), &cfg).unwrap();
        assert_eq!(a, b);
    }
}
