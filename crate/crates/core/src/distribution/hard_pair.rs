//! Paired instances over `2k` symbols whose entropies differ by `Θ(eps)` in
//! expectation while every pair `(2i-1, 2i)` keeps total mass `1/k`.

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::Serialize;

use super::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::numeric::RunningStats;
use crate::rng::{derive_key, CounterRng};

#[derive(Debug, Clone, PartialEq)]
pub struct HardPairInstance {
    pub alpha: f64,
    pub y_bits: Vec<bool>,
    pub z_signs: Vec<i8>,
    pub dist: DiscreteDistribution,
}

impl HardPairInstance {
    /// Builds the instance from explicit `Y` and `Z` draws.
    ///
    /// Pair `i` gets `((4 + Y_i Z_i) / 8k, (4 - Y_i Z_i) / 8k)`.
    pub fn from_draws(alpha: f64, y_bits: Vec<bool>, z_signs: Vec<i8>) -> Result<Self> {
        let k = y_bits.len();
        if k == 0 || z_signs.len() != k {
            return Err(Error::ParameterOutOfRange(
                "hard pair needs k >= 1 and matching Y/Z lengths".into(),
            ));
        }
        if z_signs.iter().any(|z| *z != 1 && *z != -1) {
            return Err(Error::ParameterOutOfRange(
                "Z values must be +1 or -1".into(),
            ));
        }
        let denom = BigInt::from(8 * k);
        let mut exact = Vec::with_capacity(2 * k);
        for (y, z) in y_bits.iter().zip(&z_signs) {
            let shift = if *y { i64::from(*z) } else { 0 };
            exact.push(BigRational::new(BigInt::from(4 + shift), denom.clone()));
            exact.push(BigRational::new(BigInt::from(4 - shift), denom.clone()));
        }
        Ok(Self {
            alpha,
            y_bits,
            z_signs,
            dist: DiscreteDistribution::from_exact(exact)?,
        })
    }

    fn draw(k: usize, alpha: f64, seed: u64, side: &str) -> Result<Self> {
        let mut y_rng = CounterRng::substream(seed, &format!("hardpair-y-{side}"), k as u64);
        let mut z_rng = CounterRng::substream(seed, &format!("hardpair-z-{side}"), k as u64);
        let y_bits = (0..k).map(|_| y_rng.bernoulli(alpha)).collect();
        let z_signs = (0..k).map(|_| z_rng.rademacher()).collect();
        Self::from_draws(alpha, y_bits, z_signs)
    }

    pub fn k(&self) -> usize {
        self.y_bits.len()
    }

    pub fn biased_pairs(&self) -> usize {
        self.y_bits.iter().filter(|y| **y).count()
    }
}

/// Draws the `alpha = (1+eps)/2` and `alpha = (1-eps)/2` instances, each from
/// its own sub-streams of `seed`.
pub fn make_hard_pair(
    k: usize,
    eps: f64,
    seed: u64,
) -> Result<(HardPairInstance, HardPairInstance)> {
    if k == 0 {
        return Err(Error::ParameterOutOfRange("k must be positive".into()));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::ParameterOutOfRange(format!(
            "eps must lie in [0, 1], got {eps}"
        )));
    }
    let hi = HardPairInstance::draw(k, (1.0 + eps) / 2.0, seed, "hi")?;
    let lo = HardPairInstance::draw(k, (1.0 - eps) / 2.0, seed, "lo")?;
    Ok((hi, lo))
}

/// Entropy lost by one biased pair relative to an unbiased one, in units of
/// `1/k` bits: `1 - h2(5/8)`.
pub fn biased_pair_deficit() -> f64 {
    let h = -(0.625f64 * 0.625f64.log2() + 0.375f64 * 0.375f64.log2());
    1.0 - h
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GapTrial {
    pub trial: u64,
    pub seed: u64,
    pub entropy_hi: f64,
    pub entropy_lo: f64,
    /// `H(alpha_lo) - H(alpha_hi)`; positive when the construction separates.
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GapSummary {
    pub k: usize,
    pub eps: f64,
    pub trials: u64,
    pub mean_gap: f64,
    pub std_gap: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    /// Threshold a trial's gap must reach to count as separated: half the
    /// expected gap `eps * (1 - h2(5/8))`.
    pub separation_threshold: f64,
    pub separation_frequency: f64,
    pub records: Vec<GapTrial>,
}

/// Exact entropies of `trials` independent hard pairs.
pub fn entropy_gap_experiment(k: usize, eps: f64, trials: u64, seed: u64) -> Result<GapSummary> {
    if trials == 0 {
        return Err(Error::ParameterOutOfRange(
            "trials must be at least 1".into(),
        ));
    }
    let mut stats = RunningStats::new();
    let threshold = 0.5 * eps * biased_pair_deficit();
    let mut separated = 0u64;
    let mut records = Vec::with_capacity(trials as usize);
    for trial in 0..trials {
        let trial_seed = derive_key(seed, "gap-trial", trial);
        let (hi, lo) = make_hard_pair(k, eps, trial_seed)?;
        let (entropy_hi, entropy_lo) = (hi.dist.entropy(), lo.dist.entropy());
        let gap = entropy_lo - entropy_hi;
        stats.push(gap);
        if eps > 0.0 && gap >= threshold {
            separated += 1;
        }
        records.push(GapTrial {
            trial,
            seed: trial_seed,
            entropy_hi,
            entropy_lo,
            gap,
        });
    }
    let half = 1.96 * stats.std_error();
    let half = if half.is_finite() { half } else { 0.0 };
    Ok(GapSummary {
        k,
        eps,
        trials,
        mean_gap: stats.mean(),
        std_gap: stats.std_dev(),
        ci95_low: stats.mean() - half,
        ci95_high: stats.mean() + half,
        separation_threshold: threshold,
        separation_frequency: separated as f64 / trials as f64,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::{One, Zero};

    #[test]
    fn unbiased_pairs_give_uniform() {
        let k = 7;
        let inst = HardPairInstance::from_draws(0.5, vec![false; k], vec![1; k]).unwrap();
        assert!(inst.dist.probs().iter().all(|p| *p == 1.0 / 14.0));
        assert!((inst.dist.entropy() - 14f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn single_biased_pair() {
        let inst = HardPairInstance::from_draws(1.0, vec![true], vec![1]).unwrap();
        assert_eq!(inst.dist.probs(), &[0.625, 0.375]);
        // h2(5/8) by direct evaluation
        let h = 0.625 * (1.0f64 / 0.625).log2() + 0.375 * (1.0f64 / 0.375).log2();
        assert!((inst.dist.entropy() - h).abs() < 1e-15);
        assert!((h - 0.954_434_002_924_965).abs() < 1e-12);
    }

    #[test]
    fn probabilities_take_three_values_and_sum_exactly() {
        let (hi, lo) = make_hard_pair(50, 0.3, 9).unwrap();
        for inst in [&hi, &lo] {
            let exact = inst.dist.exact().unwrap();
            let total = exact.iter().fold(BigRational::zero(), |a, p| a + p);
            assert!(total.is_one());
            let k = inst.k() as f64;
            for p in inst.dist.probs() {
                let scaled = p * 2.0 * k;
                assert!([0.75, 1.0, 1.25].iter().any(|v| (scaled - v).abs() < 1e-12));
            }
            for i in 0..inst.k() {
                let shift = if inst.y_bits[i] {
                    f64::from(inst.z_signs[i])
                } else {
                    0.0
                };
                assert_eq!(inst.dist.prob(2 * i), (1.0 + shift / 4.0) / (2.0 * k));
                assert_eq!(inst.dist.prob(2 * i + 1), (1.0 - shift / 4.0) / (2.0 * k));
            }
        }
        assert_eq!(hi.alpha, 0.65);
        assert_eq!(lo.alpha, 0.35);
    }

    #[test]
    fn zero_eps_has_zero_expected_gap() {
        let s = entropy_gap_experiment(1, 0.0, 4000, 3).unwrap();
        assert!(s.mean_gap.abs() < 4.0 * s.std_gap / (4000f64).sqrt() + 1e-12);
        assert_eq!(s.separation_frequency, 0.0);
    }

    #[test]
    fn forced_all_zero_trial_has_zero_gap() {
        // Search for a seed whose single trial draws Y = 0 on both sides.
        let found = (0..200u64).find_map(|seed| {
            let s = entropy_gap_experiment(1, 0.9, 1, seed).unwrap();
            let (hi, lo) = make_hard_pair(1, 0.9, s.records[0].seed).unwrap();
            (hi.biased_pairs() == 0 && lo.biased_pairs() == 0).then_some(s)
        });
        let s = found.expect("some seed draws Y = 0 twice");
        assert_eq!(s.mean_gap, 0.0);
    }

    #[test]
    fn gap_experiment_is_deterministic() {
        assert_eq!(
            entropy_gap_experiment(20, 0.2, 10, 5).unwrap(),
            entropy_gap_experiment(20, 0.2, 10, 5).unwrap()
        );
    }
}
