//! Deterministic ground truth for the quantities the estimators target,
//! computed by summing the negative-binomial pmf.
//!
//! Infinite sums are truncated with a certified tail bound: past
//! `x0 = t + 2t/p` the ratio of consecutive pmf terms,
//! `(1 - p)(1 + (t - 1)/(x - t + 1))`, is below `1 - p/2` and decreasing, so
//! the tail is dominated by a geometric series. Results are returned as
//! [`Enclosure`]s whose half-width covers the truncated remainder.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::correction::CorrectionPolynomial;
use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::estimators::BucketConfig;
use crate::numeric::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationPolicy {
    /// Stop once the certified tail mass is below this.
    pub tol: f64,
    /// Optional hard limit on the number of summed terms.
    pub hard_cap: Option<u64>,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            hard_cap: None,
        }
    }
}

impl TruncationPolicy {
    pub fn with_tol(tol: f64) -> Result<Self> {
        if tol.is_nan() || tol <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {tol}"
            )));
        }
        Ok(Self {
            tol,
            hard_cap: None,
        })
    }
}

/// `value ± half_width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Enclosure {
    pub value: f64,
    pub half_width: f64,
}

impl Enclosure {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            half_width: 0.0,
        }
    }

    pub fn lower(&self) -> f64 {
        self.value - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.value + self.half_width
    }

    fn scaled(self, w: f64) -> Self {
        Self {
            value: self.value * w,
            half_width: self.half_width * w.abs(),
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange(format!(
            "p must lie in (0, 1], got {p}"
        )))
    }
}

/// `P[X = x]` for `X ~ NB(t, p)` on `{t, t+1, ..}`, via log-gamma.
pub fn nb_pmf(t: u64, p: f64, x: u64) -> f64 {
    if t == 0 || x < t || !(p > 0.0 && p <= 1.0) {
        return 0.0;
    }
    if p == 1.0 {
        return if x == t { 1.0 } else { 0.0 };
    }
    let (xf, tf) = (x as f64, t as f64);
    let ln_choose = ln_gamma(xf) - ln_gamma(tf) - ln_gamma(xf - tf + 1.0);
    (ln_choose + tf * p.ln() + (xf - tf) * (-p).ln_1p()).exp()
}

/// Walks `(x, pmf(x))` for `x = t, t+1, ..` with a log-space recurrence.
struct PmfWalk {
    t: f64,
    ln_q: f64,
    x: u64,
    ln_pmf: f64,
}

impl PmfWalk {
    fn new(t: u64, p: f64) -> Self {
        Self {
            t: t as f64,
            ln_q: (-p).ln_1p(),
            x: t,
            ln_pmf: t as f64 * p.ln(),
        }
    }
}

impl Iterator for PmfWalk {
    type Item = (u64, f64);

    #[inline]
    fn next(&mut self) -> Option<(u64, f64)> {
        let out = (self.x, self.ln_pmf.exp());
        let xf = self.x as f64;
        self.ln_pmf += (xf / (xf - self.t + 1.0)).ln() + self.ln_q;
        self.x += 1;
        Some(out)
    }
}

/// Truncated sums of `pmf` and `pmf * log2(x/t)` with tail bounds.
struct TailSums {
    mass: f64,
    mass_tail: f64,
    log_sum: f64,
    log_tail: f64,
}

fn truncated_sums(t: u64, p: f64, policy: &TruncationPolicy) -> TailSums {
    let tf = t as f64;
    let x0 = (tf + 2.0 * tf / p).ceil() as u64;
    let mut mass = CompensatedSum::new();
    let mut logs = CompensatedSum::new();
    for (terms, (x, pmf)) in (1u64..).zip(PmfWalk::new(t, p)) {
        mass.add(pmf);
        logs.add(pmf * (x as f64 / tf).log2());
        let capped = policy.hard_cap.is_some_and(|cap| terms >= cap);
        if x >= x0 || capped {
            let ratio = (1.0 - p) * (1.0 + (tf - 1.0) / (x as f64 - tf + 1.0));
            if ratio >= 1.0 {
                // Only reachable through the hard cap before x0.
                return TailSums {
                    mass: mass.value(),
                    mass_tail: f64::INFINITY,
                    log_sum: logs.value(),
                    log_tail: f64::INFINITY,
                };
            }
            let geo = ratio / (1.0 - ratio);
            let mass_tail = pmf * geo;
            if mass_tail < policy.tol || capped {
                let log_tail = pmf
                    * ((x as f64 / tf).log2() * geo
                        + ratio / ((1.0 - ratio).powi(2) * x as f64 * std::f64::consts::LN_2));
                return TailSums {
                    mass: mass.value(),
                    mass_tail,
                    log_sum: logs.value(),
                    log_tail,
                };
            }
        }
    }
    unreachable!("pmf walk is infinite")
}

/// Truncated total mass of `NB(t, p)` with its certified tail bound.
pub fn nb_mass_enclosure(t: u64, p: f64, policy: &TruncationPolicy) -> Result<(f64, f64)> {
    check_p(p)?;
    if p == 1.0 {
        return Ok((1.0, 0.0));
    }
    let s = truncated_sums(t, p, policy);
    Ok((s.mass, s.mass_tail))
}

/// `E[log2(X/t)]` for `X ~ NB(t, p)`.
pub fn expected_log_x_over_t(t: u64, p: f64, policy: &TruncationPolicy) -> Result<Enclosure> {
    check_p(p)?;
    if t == 0 {
        return Err(Error::InvalidConfig("t must be at least 1".into()));
    }
    if p == 1.0 {
        return Ok(Enclosure::exact(0.0));
    }
    let s = truncated_sums(t, p, policy);
    Ok(Enclosure {
        value: s.log_sum + s.log_tail / 2.0,
        half_width: s.log_tail / 2.0,
    })
}

/// `E[eta] = E[log2(X/t)] - scale * h_t(p)`.
pub fn expected_eta(
    t: u64,
    r: u32,
    p: f64,
    corr: &CorrectionPolynomial,
    policy: &TruncationPolicy,
) -> Result<Enclosure> {
    if corr.t() != t || corr.r() != r {
        return Err(Error::InvalidConfig(format!(
            "correction built for (t, r) = ({}, {}), asked for ({t}, {r})",
            corr.t(),
            corr.r()
        )));
    }
    let e = expected_log_x_over_t(t, p, policy)?;
    Ok(Enclosure {
        value: e.value - corr.eval_h(p),
        half_width: e.half_width,
    })
}

/// `E_{i~D} E[log2(X/t)]` with `X ~ NB(t, p_i)`: the untruncated target of
/// the bucketed pipeline.
pub fn expected_log_ratio(
    d: &DiscreteDistribution,
    t: u64,
    policy: &TruncationPolicy,
) -> Result<Enclosure> {
    let mut value = CompensatedSum::new();
    let mut width = 0.0;
    for (p, mass) in d.mass_classes() {
        let e = expected_log_x_over_t(t, p, policy)?.scaled(mass);
        value.add(e.value);
        width += e.half_width;
    }
    Ok(Enclosure {
        value: value.value(),
        half_width: width,
    })
}

/// `P[X >= n]` for `X ~ NB(t, p)`: fewer than `t` successes in `n - 1` trials.
pub fn nb_survival(t: u64, p: f64, n: u64) -> f64 {
    if n <= t {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    let trials = n - 1;
    let ln_q = (-p).ln_1p();
    let ln_odds = p.ln() - ln_q;
    let mut ln_term = trials as f64 * ln_q;
    let mut sum = CompensatedSum::new();
    for j in 0..t {
        sum.add(ln_term.exp());
        ln_term += ((trials - j) as f64 / (j + 1) as f64).ln() + ln_odds;
    }
    sum.value().min(1.0)
}

/// Per-class contributions over `x in [t, x_max)`, bucketed by `edges`.
/// Returns `(mass, sum of pmf * log2(x/t))` per bucket, with the survival
/// mass at `x_max` credited to the last bucket.
fn bucket_sums(t: u64, p: f64, edges: &[u64]) -> Vec<(f64, f64)> {
    let x_max = *edges.last().expect("edges");
    let buckets = edges.len() - 1;
    let mut out = vec![(CompensatedSum::new(), CompensatedSum::new()); buckets];
    let tf = t as f64;
    if x_max > t {
        let mut ell = 0;
        for (x, pmf) in PmfWalk::new(t, p).take_while(|(x, _)| *x < x_max) {
            while ell + 1 < buckets && x >= edges[ell + 1] {
                ell += 1;
            }
            out[ell].0.add(pmf);
            out[ell].1.add(pmf * (x as f64 / tf).log2());
        }
    }
    let surv = nb_survival(t, p, x_max);
    out[buckets - 1].0.add(surv);
    out[buckets - 1].1.add(surv * (x_max as f64 / tf).log2());
    out.into_iter()
        .map(|(m, l)| (m.value(), l.value()))
        .collect()
}

/// `E[log2(min(X, x_max)/t)]` averaged over `i ~ D`; a finite exact sum.
pub fn exact_h_tilde(d: &DiscreteDistribution, t: u64, x_max: u64) -> Result<f64> {
    if x_max < t {
        return Err(Error::InvalidConfig(format!(
            "X_max = {x_max} is below t = {t}"
        )));
    }
    let mut total = CompensatedSum::new();
    for (p, mass) in d.mass_classes() {
        let (_, log_sum) = bucket_sums(t, p, &[t, x_max])[0];
        total.add(mass * log_sum);
    }
    Ok(total.value())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketStat {
    /// `P[X' in I_l]`.
    pub q: f64,
    /// `E[log2(X'/t) | X' in I_l]`, or `log2(b_l/t)` when `q = 0`.
    pub h: f64,
    pub zero_mass: bool,
}

/// Exact `(q_l, H_l)` for every bucket of `cfg`.
pub fn exact_bucket_stats(d: &DiscreteDistribution, cfg: &BucketConfig) -> Result<Vec<BucketStat>> {
    let edges = cfg.breakpoints();
    let t = cfg.t();
    let mut acc = vec![(CompensatedSum::new(), CompensatedSum::new()); edges.len() - 1];
    for (p, mass) in d.mass_classes() {
        for (slot, (m, l)) in acc.iter_mut().zip(bucket_sums(t, p, edges)) {
            slot.0.add(mass * m);
            slot.1.add(mass * l);
        }
    }
    Ok(acc
        .into_iter()
        .enumerate()
        .map(|(ell, (q, l))| {
            let (q, l) = (q.value(), l.value());
            if q > 0.0 {
                BucketStat {
                    q,
                    h: l / q,
                    zero_mass: false,
                }
            } else {
                BucketStat {
                    q: 0.0,
                    h: (edges[ell + 1] as f64 / t as f64).log2(),
                    zero_mass: true,
                }
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correction::{build_correction, LogBase};
    use crate::estimators::configure_buckets;

    #[test]
    fn pmf_examples() {
        assert!((nb_pmf(5, 0.3, 5) - 0.3f64.powi(5)).abs() < 1e-15);
        for x in 1..20 {
            let geo = 0.4 * 0.6f64.powi(x as i32 - 1);
            assert!((nb_pmf(1, 0.4, x) - geo).abs() < 1e-14);
        }
        assert_eq!(nb_pmf(3, 0.5, 2), 0.0);
        assert_eq!(nb_pmf(3, 1.0, 3), 1.0);
    }

    #[test]
    fn walk_agrees_with_log_gamma() {
        for (x, pmf) in PmfWalk::new(16, 0.3).take(400) {
            assert!((pmf - nb_pmf(16, 0.3, x)).abs() < 1e-13);
        }
    }

    #[test]
    fn mass_enclosure_normalizes() {
        let policy = TruncationPolicy::default();
        for (t, p) in [(16, 0.3), (1, 0.5), (64, 0.05), (4, 0.9)] {
            let (mass, tail) = nb_mass_enclosure(t, p, &policy).unwrap();
            assert!(tail < policy.tol);
            assert!(mass + tail >= 1.0 - 2.0 * policy.tol, "{t} {p}: {mass}");
            assert!(mass <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn expected_log_examples() {
        let policy = TruncationPolicy::default();
        assert_eq!(expected_log_x_over_t(7, 1.0, &policy).unwrap().value, 0.0);
        // t = 1, p = 1/2: sum_x 2^-x log2 x, by direct summation.
        let direct: f64 = (1..200).map(|x| 0.5f64.powi(x) * f64::from(x).log2()).sum();
        let e = expected_log_x_over_t(1, 0.5, &policy).unwrap();
        assert!((e.value - direct).abs() < 1e-9);
        assert!((e.value - 0.732_7).abs() < 1e-4);
        assert!(e.half_width < 1e-9);
        for p in [0.1, 0.5, 0.9] {
            for t in [4, 64] {
                let e = expected_log_x_over_t(t, p, &policy).unwrap();
                assert!(e.upper() <= (1.0 / p).log2(), "Jensen at t={t}, p={p}");
            }
        }
    }

    #[test]
    fn expected_eta_r2_closed_form() {
        let policy = TruncationPolicy::default();
        let corr = build_correction(16, 2, LogBase::Two).unwrap();
        let log_part = expected_log_x_over_t(16, 0.3, &policy).unwrap().value;
        let eta = expected_eta(16, 2, 0.3, &corr, &policy).unwrap().value;
        let expected = log_part + 0.7 / (32.0 * std::f64::consts::LN_2);
        assert!((eta - expected).abs() < 1e-14);
        assert_eq!(expected_eta(16, 2, 1.0, &corr, &policy).unwrap().value, 0.0);
        assert!(expected_eta(17, 2, 0.3, &corr, &policy).is_err());
    }

    #[test]
    fn bias_shrinks_along_the_grid() {
        let policy = TruncationPolicy::default();
        let p: f64 = 0.3;
        let biases: Vec<f64> = [2u32, 4, 6, 8]
            .iter()
            .map(|&r| {
                let t = 4 * u64::from(r * r);
                let corr = build_correction(t, r, LogBase::Two).unwrap();
                (expected_eta(t, r, p, &corr, &policy).unwrap().value - (1.0 / p).log2()).abs()
            })
            .collect();
        assert!(biases.windows(2).all(|w| w[1] < w[0]), "{biases:?}");
    }

    #[test]
    fn survival_matches_pmf_complement() {
        for (t, p, n) in [(4u64, 0.3, 30u64), (16, 0.05, 500), (1, 0.5, 3)] {
            let head: f64 = (t..n).map(|x| nb_pmf(t, p, x)).sum();
            assert!((nb_survival(t, p, n) - (1.0 - head)).abs() < 1e-12);
        }
        assert_eq!(nb_survival(5, 1.0, 6), 0.0);
        assert_eq!(nb_survival(5, 0.2, 5), 1.0);
    }

    #[test]
    fn h_tilde_examples() {
        let pm = DiscreteDistribution::point_mass(4, 1).unwrap();
        assert_eq!(exact_h_tilde(&pm, 16, 16).unwrap(), 0.0);
        assert_eq!(exact_h_tilde(&pm, 16, 1000).unwrap(), 0.0);
        let policy = TruncationPolicy::default();
        for d in [
            DiscreteDistribution::uniform(8).unwrap(),
            DiscreteDistribution::new(vec![0.5, 0.3, 0.2]).unwrap(),
        ] {
            let h = expected_log_ratio(&d, 16, &policy).unwrap();
            for x_max in [16u64, 40, 200, 2000] {
                assert!(h.upper() >= exact_h_tilde(&d, 16, x_max).unwrap());
            }
        }
        assert!(exact_h_tilde(&pm, 16, 15).is_err());
    }

    #[test]
    fn bucket_decomposition_collapses_and_sums() {
        let d = DiscreteDistribution::uniform(8).unwrap();
        let cfg = configure_buckets(8, 0.1, 16).unwrap();
        let stats = exact_bucket_stats(&d, &cfg).unwrap();
        let total: f64 = stats.iter().map(|s| s.q).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let combined: f64 = stats.iter().map(|s| s.q * s.h).sum();
        let h_tilde = exact_h_tilde(&d, 16, cfg.x_max()).unwrap();
        assert!((combined - h_tilde).abs() < 1e-9);

        let single = BucketConfig::single(16, cfg.x_max()).unwrap();
        let s = exact_bucket_stats(&d, &single).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s[0].q - 1.0).abs() < 1e-12);
        assert!((s[0].h - h_tilde).abs() < 1e-12);

        let pm = DiscreteDistribution::point_mass(8, 0).unwrap();
        let s = exact_bucket_stats(&pm, &cfg).unwrap();
        assert_eq!(s[0].q, 1.0);
        assert!(s[1..].iter().all(|b| b.q == 0.0 && b.zero_mass));
    }
}
