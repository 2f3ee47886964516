use std::collections::BTreeMap;

use super::{words, AbisConfig, EstimateReport};
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::sampling::SampleSource;

/// Draws `n` samples, counts the occurrences `N_x` of `symbol`, and returns
/// `log2(n / (N_x + 1))`.
pub fn baseline_abis_once<S: SampleSource>(src: &mut S, symbol: usize, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidConfig("window N must be at least 1".into()));
    }
    let mut count = 0u64;
    for _ in 0..n {
        if src.try_next()? == symbol {
            count += 1;
        }
    }
    Ok((n as f64 / (count + 1) as f64).log2())
}

#[derive(Debug, Default)]
struct AbisState {
    sum: CompensatedSum,
    done: u64,
    symbol: usize,
}

/// Locals of the counting window: hit count and loop counter.
const ABIS_WINDOW_WORDS: usize = 2;

/// Mean of `m` one-smoothed counting estimates, each for a fresh `i ~ D`.
pub fn abis_entropy_estimate<S: SampleSource>(
    src: &mut S,
    cfg: &AbisConfig,
) -> Result<EstimateReport> {
    if cfg.m == 0 {
        return Err(Error::InvalidConfig("m must be at least 1".into()));
    }
    let start = src.draws();
    let mut st = AbisState::default();
    while st.done < cfg.m {
        st.symbol = src.try_next()?;
        st.sum.add(baseline_abis_once(src, st.symbol, cfg.n)?);
        st.done += 1;
    }
    Ok(EstimateReport {
        estimate: st.sum.value() / cfg.m as f64,
        samples_used: src.draws() - start,
        failed: false,
        per_bucket: None,
        working_registers: words::<AbisState>() + ABIS_WINDOW_WORDS,
        seed: None,
    })
}

/// Entropy of the empirical histogram of `n` samples. Memory grows with the
/// number of distinct symbols seen; the register count reports two words
/// per histogram entry plus the sample counter and the current symbol.
pub fn plugin_entropy<S: SampleSource>(src: &mut S, n: u64) -> Result<EstimateReport> {
    if n == 0 {
        return Err(Error::InvalidConfig(
            "plug-in needs at least one sample".into(),
        ));
    }
    let start = src.draws();
    let mut hist: BTreeMap<usize, u64> = BTreeMap::new();
    for _ in 0..n {
        *hist.entry(src.try_next()?).or_insert(0) += 1;
    }
    let nf = n as f64;
    let estimate: CompensatedSum = hist
        .values()
        .map(|&c| {
            let q = c as f64 / nf;
            -q * q.log2()
        })
        .collect();
    Ok(EstimateReport {
        estimate: estimate.value().max(0.0),
        samples_used: src.draws() - start,
        failed: false,
        per_bucket: None,
        working_registers: 2 * hist.len() + 2,
        seed: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::DiscreteDistribution;
    use crate::numeric::RunningStats;
    use crate::sampling::SeededSource;

    #[test]
    fn abis_point_mass() {
        let d = DiscreteDistribution::point_mass(3, 1).unwrap();
        let mut src = SeededSource::new(&d, 0);
        let v = baseline_abis_once(&mut src, 1, 10).unwrap();
        assert!((v - (10.0f64 / 11.0).log2()).abs() < 1e-15);
        assert!((v + 0.1375).abs() < 1e-4);
    }

    #[test]
    fn abis_smoothing_is_finite() {
        let d = DiscreteDistribution::point_mass(3, 1).unwrap();
        let mut src = SeededSource::new(&d, 0);
        assert_eq!(baseline_abis_once(&mut src, 0, 8).unwrap(), 3.0);
        assert!(baseline_abis_once(&mut src, 0, 0).is_err());
    }

    #[test]
    fn abis_half() {
        let d = DiscreteDistribution::uniform(2).unwrap();
        let mut src = SeededSource::new(&d, 7);
        let stats: RunningStats = (0..20_000)
            .map(|_| baseline_abis_once(&mut src, 0, 1000).unwrap())
            .collect();
        assert!((stats.mean() - 1.0).abs() < 0.02);
    }

    #[test]
    fn abis_estimate_accounting() {
        let d = DiscreteDistribution::uniform(4).unwrap();
        let cfg = AbisConfig {
            k: 4,
            eps: 0.5,
            n: 100,
            m: 30,
        };
        let rep = abis_entropy_estimate(&mut SeededSource::new(&d, 1), &cfg).unwrap();
        assert_eq!(rep.samples_used, 30 * 101);
        assert!((rep.estimate - 2.0).abs() < 0.3);
    }

    #[test]
    fn plugin_examples() {
        let pm = DiscreteDistribution::point_mass(4, 2).unwrap();
        assert_eq!(
            plugin_entropy(&mut SeededSource::new(&pm, 1), 100)
                .unwrap()
                .estimate,
            0.0
        );
        let u = DiscreteDistribution::uniform(2).unwrap();
        assert_eq!(
            plugin_entropy(&mut SeededSource::new(&u, 1), 1)
                .unwrap()
                .estimate,
            0.0
        );
        let rep = plugin_entropy(&mut SeededSource::new(&u, 1), 1_000_000).unwrap();
        assert!((rep.estimate - 1.0).abs() < 0.01);
        assert_eq!(rep.working_registers, 6);
    }

    #[test]
    fn plugin_state_grows_with_k() {
        let small = DiscreteDistribution::uniform(2).unwrap();
        let large = DiscreteDistribution::uniform(1024).unwrap();
        let a = plugin_entropy(&mut SeededSource::new(&small, 1), 50_000).unwrap();
        let b = plugin_entropy(&mut SeededSource::new(&large, 1), 50_000).unwrap();
        assert!(b.working_registers > 100 * a.working_registers);
    }
}
