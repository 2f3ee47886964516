//! Sample streams, negative-binomial drawing, prefix indicators and the
//! draw-budget guard.

use std::io::BufRead;
use std::sync::Arc;

use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::rng::CounterRng;

/// Alphabets up to this size are sampled by linear scan of the CDF.
pub const LINEAR_SCAN_MAX_K: usize = 64;

/// A stream of i.i.d. symbols with a draw counter.
pub trait SampleSource {
    /// Emits the next symbol and increments the draw counter.
    fn try_next(&mut self) -> Result<usize>;

    /// Total symbols emitted so far.
    fn draws(&self) -> u64;

    /// Alphabet size.
    fn k(&self) -> usize;

    /// The true probability of `symbol`, when the source knows it.
    fn probability(&self, _symbol: usize) -> Option<f64> {
        None
    }
}

impl<S: SampleSource + ?Sized> SampleSource for &mut S {
    #[inline(always)]
    fn try_next(&mut self) -> Result<usize> {
        (**self).try_next()
    }

    fn draws(&self) -> u64 {
        (**self).draws()
    }

    fn k(&self) -> usize {
        (**self).k()
    }

    fn probability(&self, symbol: usize) -> Option<f64> {
        (**self).probability(symbol)
    }
}

/// Symbol sampler built once per distribution.
#[derive(Debug, Clone)]
pub struct SymbolSampler {
    probs: Vec<f64>,
    method: Method,
}

#[derive(Debug, Clone)]
enum Method {
    Constant(usize),
    Scan {
        cdf: Vec<f64>,
        last: usize,
    },
    /// Walker/Vose alias table; `threshold[j]` is the acceptance level of
    /// column `j` scaled to `2^64`.
    Alias {
        threshold: Vec<u64>,
        alias: Vec<u32>,
    },
}

impl SymbolSampler {
    pub fn new(dist: &DiscreteDistribution) -> Self {
        let probs = dist.probs().to_vec();
        let positive: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.0).collect();
        let method = if positive.len() == 1 {
            Method::Constant(positive[0])
        } else if probs.len() <= LINEAR_SCAN_MAX_K {
            let mut acc = 0.0;
            let cdf = probs
                .iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect();
            Method::Scan {
                cdf,
                last: *positive.last().expect("distribution has mass"),
            }
        } else {
            build_alias(&probs, positive[0])
        };
        Self { probs, method }
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline(always)]
    pub fn sample(&self, rng: &mut CounterRng) -> usize {
        match &self.method {
            Method::Constant(s) => {
                rng.next_u64();
                *s
            }
            Method::Scan { cdf, last } => {
                let u = rng.next_f64();
                cdf.iter().position(|c| u < *c).unwrap_or(*last)
            }
            Method::Alias { threshold, alias } => {
                let x = rng.next_u64();
                let wide = u128::from(x) * threshold.len() as u128;
                let column = (wide >> 64) as usize;
                let frac = wide as u64;
                if frac < threshold[column] {
                    column
                } else {
                    alias[column] as usize
                }
            }
        }
    }
}

fn build_alias(probs: &[f64], fallback: usize) -> Method {
    let k = probs.len();
    let mut scaled: Vec<f64> = probs.iter().map(|p| p * k as f64).collect();
    let mut threshold = vec![0u64; k];
    let mut alias: Vec<u32> = (0..k as u32).collect();
    let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..k).partition(|&i| scaled[i] < 1.0);
    while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
        small.pop();
        threshold[s] = to_threshold(scaled[s]);
        alias[s] = l as u32;
        scaled[l] -= 1.0 - scaled[s];
        if scaled[l] < 1.0 {
            large.pop();
            small.push(l);
        }
    }
    // Leftovers are full columns up to rounding; a zero-mass leftover must
    // never be returned, so it redirects to a symbol with mass.
    for i in large.into_iter().chain(small) {
        if probs[i] > 0.0 {
            threshold[i] = u64::MAX;
            alias[i] = i as u32;
        } else {
            threshold[i] = 0;
            alias[i] = fallback as u32;
        }
    }
    for i in 0..k {
        if probs[alias[i] as usize] == 0.0 {
            alias[i] = fallback as u32;
        }
        if probs[i] == 0.0 {
            threshold[i] = 0;
        }
    }
    Method::Alias { threshold, alias }
}

fn to_threshold(level: f64) -> u64 {
    if level >= 1.0 {
        u64::MAX
    } else if level <= 0.0 {
        0
    } else {
        (level * 18_446_744_073_709_551_616.0) as u64
    }
}

/// Pseudorandom i.i.d. stream from a distribution; the emitted sequence is a
/// pure function of the distribution and the seed.
#[derive(Debug, Clone)]
pub struct SeededSource {
    sampler: Arc<SymbolSampler>,
    rng: CounterRng,
    seed: u64,
    draws: u64,
}

impl SeededSource {
    pub fn new(dist: &DiscreteDistribution, seed: u64) -> Self {
        Self::with_sampler(Arc::new(SymbolSampler::new(dist)), seed)
    }

    pub fn with_sampler(sampler: Arc<SymbolSampler>, seed: u64) -> Self {
        Self {
            sampler,
            rng: CounterRng::new(seed),
            seed,
            draws: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Infallible form of [`SampleSource::try_next`].
    #[inline(always)]
    pub fn next_sample(&mut self) -> usize {
        self.draws += 1;
        self.sampler.sample(&mut self.rng)
    }
}

impl SampleSource for SeededSource {
    #[inline(always)]
    fn try_next(&mut self) -> Result<usize> {
        Ok(self.next_sample())
    }

    fn draws(&self) -> u64 {
        self.draws
    }

    fn k(&self) -> usize {
        self.sampler.k()
    }

    fn probability(&self, symbol: usize) -> Option<f64> {
        self.sampler.probs().get(symbol).copied()
    }
}

/// Replays newline-delimited 1-based symbol indices. Blank lines are skipped.
#[derive(Debug)]
pub struct ReplaySource<R> {
    reader: R,
    k: usize,
    draws: u64,
    line: String,
}

impl<R: BufRead> ReplaySource<R> {
    pub fn new(reader: R, k: usize) -> Self {
        Self {
            reader,
            k,
            draws: 0,
            line: String::new(),
        }
    }
}

impl<R: BufRead> SampleSource for ReplaySource<R> {
    fn try_next(&mut self) -> Result<usize> {
        loop {
            self.line.clear();
            if self.reader.read_line(&mut self.line)? == 0 {
                return Err(Error::StreamExhausted { draws: self.draws });
            }
            let text = self.line.trim();
            if text.is_empty() {
                continue;
            }
            let index: usize = text
                .parse()
                .map_err(|_| Error::Parse(format!("bad symbol index `{text}`")))?;
            if index == 0 || index > self.k {
                return Err(Error::SymbolOutOfRange {
                    symbol: index,
                    k: self.k,
                });
            }
            self.draws += 1;
            return Ok(index - 1);
        }
    }

    fn draws(&self) -> u64 {
        self.draws
    }

    fn k(&self) -> usize {
        self.k
    }
}

/// Result of a capped negative-binomial draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NbOutcome {
    /// `t` hits were seen; the value counts every sample drawn in the call.
    Hit(u64),
    /// `cap` samples were drawn without reaching `t` hits.
    Exceeded,
}

/// Draws until `symbol` has appeared `t` times, or until `cap` samples.
pub fn draw_neg_binomial<S: SampleSource>(
    src: &mut S,
    symbol: usize,
    t: u64,
    cap: Option<u64>,
) -> Result<NbOutcome> {
    if symbol >= src.k() {
        return Err(Error::SymbolOutOfRange { symbol, k: src.k() });
    }
    if t == 0 {
        return Err(Error::InvalidConfig("t must be at least 1".into()));
    }
    if cap.is_none() && src.probability(symbol) == Some(0.0) {
        return Err(Error::ZeroProbabilityUncapped { symbol });
    }
    let limit = cap.unwrap_or(u64::MAX);
    let mut hits = 0u64;
    let mut drawn = 0u64;
    while drawn < limit {
        drawn += 1;
        if src.try_next()? == symbol {
            hits += 1;
            if hits == t {
                return Ok(NbOutcome::Hit(drawn));
            }
        }
    }
    Ok(NbOutcome::Exceeded)
}

/// Draws exactly `r` samples and returns the length of the leading run equal
/// to `symbol`; the prefix indicator `B_j` is one iff `j <= c`.
pub fn observe_prefix_indicators<S: SampleSource>(
    src: &mut S,
    symbol: usize,
    r: u32,
) -> Result<u32> {
    let mut run = 0u32;
    let mut open = true;
    for _ in 0..r {
        let s = src.try_next()?;
        if open && s == symbol {
            run += 1;
        } else {
            open = false;
        }
    }
    Ok(run)
}

/// A source wrapper that fails once more than `max_draws` samples are
/// requested through it. After tripping every request fails.
#[derive(Debug)]
pub struct BudgetGuard<S> {
    inner: S,
    max_draws: u64,
    used: u64,
    tripped: bool,
}

impl<S: SampleSource> BudgetGuard<S> {
    pub fn new(inner: S, max_draws: u64) -> Self {
        Self {
            inner,
            max_draws,
            used: 0,
            tripped: false,
        }
    }

    pub fn tripped(&self) -> bool {
        self.tripped
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn max_draws(&self) -> u64 {
        self.max_draws
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: SampleSource> SampleSource for BudgetGuard<S> {
    #[inline(always)]
    fn try_next(&mut self) -> Result<usize> {
        if self.tripped || self.used >= self.max_draws {
            self.tripped = true;
            return Err(Error::BudgetExceeded { draws: self.used });
        }
        self.used += 1;
        self.inner.try_next()
    }

    fn draws(&self) -> u64 {
        self.inner.draws()
    }

    fn k(&self) -> usize {
        self.inner.k()
    }

    fn probability(&self, symbol: usize) -> Option<f64> {
        self.inner.probability(symbol)
    }
}

/// Outcome of budget-guarded work.
#[derive(Debug, Clone, PartialEq)]
pub enum Guarded<T> {
    Done(T),
    Fail { draws: u64 },
}

impl<T> Guarded<T> {
    pub fn is_fail(&self) -> bool {
        matches!(self, Guarded::Fail { .. })
    }
}

/// Runs `work` against `src` under a draw budget. A tripped budget becomes
/// [`Guarded::Fail`]; any other error propagates.
pub fn guard_wrap<S, T, F>(src: &mut S, max_draws: u64, work: F) -> Result<Guarded<T>>
where
    S: SampleSource,
    F: FnOnce(&mut BudgetGuard<&mut S>) -> Result<T>,
{
    let mut guard = BudgetGuard::new(src, max_draws);
    match work(&mut guard) {
        Ok(v) => Ok(Guarded::Done(v)),
        Err(Error::BudgetExceeded { draws }) => Ok(Guarded::Fail { draws }),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{make_family, Family};
    use crate::numeric::RunningStats;

    fn two_point(p: f64) -> DiscreteDistribution {
        DiscreteDistribution::new(vec![p, 1.0 - p]).unwrap()
    }

    #[test]
    fn point_mass_always_emits_its_symbol() {
        for k in [4, 100] {
            let d = DiscreteDistribution::point_mass(k, 3).unwrap();
            let mut src = SeededSource::new(&d, 1);
            assert!((0..1000).all(|_| src.next_sample() == 3));
            assert_eq!(src.draws(), 1000);
        }
    }

    #[test]
    fn uniform_bits_are_frozen() {
        let d = DiscreteDistribution::uniform(2).unwrap();
        let mut src = SeededSource::new(&d, 2024);
        let bits: Vec<usize> = (0..16).map(|_| src.next_sample()).collect();
        let mut again = SeededSource::new(&d, 2024);
        let bits2: Vec<usize> = (0..16).map(|_| again.next_sample()).collect();
        assert_eq!(bits, bits2);
        // Symbol is 1 iff the 53-bit uniform is >= 1/2, i.e. iff the top bit is set.
        let mut rng = CounterRng::new(2024);
        let expected: Vec<usize> = (0..16).map(|_| (rng.next_u64() >> 63) as usize).collect();
        assert_eq!(bits, expected);
    }

    #[test]
    fn zero_mass_symbols_never_emitted() {
        let mut probs = vec![0.0; 200];
        probs[5] = 0.5;
        probs[150] = 0.25;
        probs[199] = 0.25;
        let d = DiscreteDistribution::new(probs).unwrap();
        let mut src = SeededSource::new(&d, 3);
        for _ in 0..100_000 {
            let s = src.next_sample();
            assert!(s == 5 || s == 150 || s == 199);
        }
        let d = DiscreteDistribution::new(vec![0.0, 0.5, 0.0, 0.5, 0.0]).unwrap();
        let mut src = SeededSource::new(&d, 3);
        assert!((0..100_000).all(|_| src.next_sample() % 2 == 1));
    }

    /// Chi-square goodness of fit for both sampler paths.
    #[test]
    fn chi_square_goodness_of_fit() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        for k in [20usize, 100] {
            let d = make_family(&Family::Zipf { s: 1.0 }, k, 0).unwrap();
            let n = 100_000u64;
            let mut counts = vec![0u64; k];
            let mut src = SeededSource::new(&d, 99);
            for _ in 0..n {
                counts[src.next_sample()] += 1;
            }
            let stat: f64 = counts
                .iter()
                .zip(d.probs())
                .map(|(&c, &p)| {
                    let e = p * n as f64;
                    (c as f64 - e).powi(2) / e
                })
                .sum();
            let p_value = 1.0 - ChiSquared::new((k - 1) as f64).unwrap().cdf(stat);
            assert!(p_value > 0.001, "k={k} chi2={stat} p={p_value}");
        }
    }

    #[test]
    fn neg_binomial_examples() {
        let d = DiscreteDistribution::point_mass(3, 0).unwrap();
        let mut src = SeededSource::new(&d, 0);
        assert_eq!(
            draw_neg_binomial(&mut src, 0, 5, None).unwrap(),
            NbOutcome::Hit(5)
        );

        let mut src = SeededSource::new(&two_point(0.5), 11);
        let mut st = RunningStats::new();
        for _ in 0..100_000 {
            match draw_neg_binomial(&mut src, 0, 1, None).unwrap() {
                NbOutcome::Hit(x) => st.push(x as f64),
                NbOutcome::Exceeded => unreachable!(),
            }
        }
        assert!((st.mean() - 2.0).abs() < 0.04);
    }

    #[test]
    fn neg_binomial_cap_consumes_exactly_cap() {
        let d = DiscreteDistribution::new(vec![1e-9, 1.0 - 1e-9]).unwrap();
        let mut src = SeededSource::new(&d, 5);
        let before = src.draws();
        assert_eq!(
            draw_neg_binomial(&mut src, 0, 3, Some(10)).unwrap(),
            NbOutcome::Exceeded
        );
        assert_eq!(src.draws(), before + 10);
    }

    #[test]
    fn neg_binomial_rejects_uncapped_zero_mass() {
        let d = DiscreteDistribution::new(vec![0.0, 1.0]).unwrap();
        let mut src = SeededSource::new(&d, 5);
        assert_eq!(
            draw_neg_binomial(&mut src, 0, 1, None),
            Err(Error::ZeroProbabilityUncapped { symbol: 0 })
        );
        assert_eq!(src.draws(), 0);
        assert_eq!(
            draw_neg_binomial(&mut src, 0, 1, Some(4)).unwrap(),
            NbOutcome::Exceeded
        );
        assert!(draw_neg_binomial(&mut src, 7, 1, Some(4)).is_err());
    }

    #[test]
    fn neg_binomial_accounting_is_exact() {
        let mut src = SeededSource::new(&two_point(0.3), 17);
        for cap in [None, Some(20)] {
            for _ in 0..500 {
                let before = src.draws();
                match draw_neg_binomial(&mut src, 0, 4, cap).unwrap() {
                    NbOutcome::Hit(x) => {
                        assert!(x >= 4);
                        assert_eq!(src.draws(), before + x);
                    }
                    NbOutcome::Exceeded => assert_eq!(src.draws(), before + cap.unwrap()),
                }
            }
        }
    }

    #[test]
    fn prefix_indicator_examples() {
        let d = DiscreteDistribution::point_mass(2, 1).unwrap();
        let mut src = SeededSource::new(&d, 0);
        assert_eq!(observe_prefix_indicators(&mut src, 1, 7).unwrap(), 7);
        assert_eq!(observe_prefix_indicators(&mut src, 0, 7).unwrap(), 0);
        assert_eq!(src.draws(), 14);

        let text = "2\n1\n1\n";
        let mut replay = ReplaySource::new(text.as_bytes(), 2);
        assert_eq!(observe_prefix_indicators(&mut replay, 0, 3).unwrap(), 0);
    }

    #[test]
    fn prefix_indicator_means_match_powers() {
        let p: f64 = 0.4;
        let n = 1_000_000;
        let mut src = SeededSource::new(&two_point(p), 8);
        let mut sums = [0u64; 3];
        for _ in 0..n {
            let c = observe_prefix_indicators(&mut src, 0, 3).unwrap();
            for (j, s) in sums.iter_mut().enumerate() {
                if c as usize > j {
                    *s += 1;
                }
            }
        }
        for (j, s) in sums.iter().enumerate() {
            let q = p.powi(j as i32 + 1);
            let se = (q * (1.0 - q) / n as f64).sqrt();
            assert!((*s as f64 / n as f64 - q).abs() < 3.0 * se, "j={}", j + 1);
        }
    }

    #[test]
    fn guard_zero_budget_fails_immediately() {
        let d = DiscreteDistribution::uniform(2).unwrap();
        let mut src = SeededSource::new(&d, 0);
        let out = guard_wrap(&mut src, 0, |g| g.try_next()).unwrap();
        assert_eq!(out, Guarded::Fail { draws: 0 });
        assert_eq!(src.draws(), 0);
    }

    #[test]
    fn guard_stays_tripped() {
        let d = DiscreteDistribution::uniform(2).unwrap();
        let mut src = SeededSource::new(&d, 0);
        let mut guard = BudgetGuard::new(&mut src, 3);
        for _ in 0..3 {
            guard.try_next().unwrap();
        }
        assert!(guard.try_next().is_err());
        assert!(guard.tripped());
        assert!(guard.try_next().is_err());
        assert_eq!(guard.used(), 3);
    }

    #[test]
    fn guard_markov_frequency() {
        // One NB(4, 1/50) draw per trial; budget 10x the expectation of 200.
        let d = DiscreteDistribution::uniform(50).unwrap();
        let mut fails = 0;
        for trial in 0..1000u64 {
            let mut src = SeededSource::new(&d, trial);
            let out = guard_wrap(&mut src, 2000, |g| draw_neg_binomial(g, 0, 4, None)).unwrap();
            if out.is_fail() {
                fails += 1;
            }
        }
        assert!(fails <= 100, "{fails} failures");
        let mut fails = 0;
        for trial in 0..1000u64 {
            let mut src = SeededSource::new(&d, trial);
            let out = guard_wrap(&mut src, 20_000, |g| draw_neg_binomial(g, 0, 4, None)).unwrap();
            fails += usize::from(out.is_fail());
        }
        assert_eq!(fails, 0);
    }

    #[test]
    fn replay_source_reads_one_based_indices() {
        let mut src = ReplaySource::new("3\n\n1\n2\n".as_bytes(), 3);
        assert_eq!(src.try_next().unwrap(), 2);
        assert_eq!(src.try_next().unwrap(), 0);
        assert_eq!(src.try_next().unwrap(), 1);
        assert_eq!(src.try_next(), Err(Error::StreamExhausted { draws: 3 }));
        let mut bad = ReplaySource::new("4\n".as_bytes(), 3);
        assert!(matches!(
            bad.try_next(),
            Err(Error::SymbolOutOfRange { .. })
        ));
        let mut bad = ReplaySource::new("0\n".as_bytes(), 3);
        assert!(bad.try_next().is_err());
    }
}
