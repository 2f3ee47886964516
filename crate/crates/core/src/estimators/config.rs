use serde::Serialize;

use crate::error::{Error, Result};

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange(format!(
            "eps must lie in (0, 1), got {eps}"
        )))
    }
}

/// Taylor degree `ceil(log2(1/eps))`, at least 1.
pub fn default_r(eps: f64) -> u32 {
    ((1.0 / eps).log2().ceil() as u32).max(1)
}

/// `4 r^2`.
pub fn default_t(r: u32) -> u64 {
    4 * u64::from(r) * u64::from(r)
}

/// Repetitions of the simple pipeline, `ceil(12 (log2 k + 2)^2 / eps^2)`.
pub fn default_repetitions(k: usize, eps: f64) -> u64 {
    let lk = (k as f64).log2() + 2.0;
    (12.0 * lk * lk / (eps * eps)).ceil() as u64
}

/// Repetitions of the correction average, `ceil(12 / eps^2)`.
pub fn default_correction_reps(eps: f64) -> u64 {
    (12.0 / (eps * eps)).ceil() as u64
}

/// `log2` applied `times` times.
pub fn iterated_log2(k: f64, times: usize) -> f64 {
    (0..times).fold(k, |x, _| x.log2())
}

/// Number of base-2 logarithms needed to bring `k` to at most 1.
pub fn log_star(k: f64) -> usize {
    let mut x = k;
    let mut n = 0;
    while x > 1.0 {
        x = x.log2();
        n += 1;
    }
    n
}

/// Parameters of the bias-corrected repetition pipeline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimpleConfig {
    pub k: usize,
    pub eps: f64,
    pub r: u32,
    pub t: u64,
    /// Number of `LogEstimator` repetitions averaged.
    pub m: u64,
    /// The budget guard allows `budget_factor` times the expected draws.
    pub budget_factor: f64,
}

impl SimpleConfig {
    pub fn defaults(k: usize, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        if k == 0 {
            return Err(Error::ParameterOutOfRange("k must be positive".into()));
        }
        let r = default_r(eps);
        Ok(Self {
            k,
            eps,
            r,
            t: default_t(r),
            m: default_repetitions(k, eps),
            budget_factor: 10.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_eps(self.eps)?;
        if self.r == 0 || self.t < default_t(self.r) {
            return Err(Error::InvalidConfig(format!(
                "need r >= 1 and t >= 4 r^2, got r = {}, t = {}",
                self.r, self.t
            )));
        }
        if self.m == 0 {
            return Err(Error::InvalidConfig("m must be at least 1".into()));
        }
        if self.budget_factor.is_nan() || self.budget_factor <= 0.0 {
            return Err(Error::InvalidConfig(
                "budget_factor must be positive".into(),
            ));
        }
        Ok(())
    }

    /// `m (1 + r + t k)`: one draw for the tracked symbol, then the
    /// expected `r + t k` of each `LogEstimator` call.
    pub fn expected_samples(&self) -> f64 {
        self.m as f64 * (1.0 + f64::from(self.r) + self.t as f64 * self.k as f64)
    }

    pub fn max_draws(&self) -> u64 {
        (self.budget_factor * self.expected_samples()).ceil() as u64
    }
}

/// Intervals `I_l = [b_{l-1}, b_l)` (the last one closed) with their
/// repetition counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketConfig {
    t: u64,
    breakpoints: Vec<u64>,
    reps: Vec<u64>,
}

impl BucketConfig {
    pub fn new(t: u64, breakpoints: Vec<u64>, reps: Vec<u64>) -> Result<Self> {
        if t == 0 {
            return Err(Error::InvalidConfig("t must be at least 1".into()));
        }
        if breakpoints.len() < 2 || breakpoints[0] != t {
            return Err(Error::InvalidConfig(
                "breakpoints must start at t and define at least one bucket".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if reps.len() != breakpoints.len() - 1 || reps.contains(&0) {
            return Err(Error::InvalidConfig(
                "need one positive repetition count per bucket".into(),
            ));
        }
        Ok(Self {
            t,
            breakpoints,
            reps,
        })
    }

    /// One bucket `[t, x_max]` with a single repetition.
    pub fn single(t: u64, x_max: u64) -> Result<Self> {
        Self::new(t, vec![t, x_max], vec![1])
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// `b_0 = t, .., b_L = X_max`.
    pub fn breakpoints(&self) -> &[u64] {
        &self.breakpoints
    }

    pub fn reps(&self) -> &[u64] {
        &self.reps
    }

    pub fn x_max(&self) -> u64 {
        *self.breakpoints.last().expect("validated")
    }

    pub fn num_buckets(&self) -> usize {
        self.reps.len()
    }

    pub fn with_reps(&self, reps: Vec<u64>) -> Result<Self> {
        Self::new(self.t, self.breakpoints.clone(), reps)
    }

    /// Whether the clamped value `x` lies in bucket `ell` (0-based).
    pub fn contains(&self, ell: usize, x: u64) -> bool {
        let (lo, hi) = (self.breakpoints[ell], self.breakpoints[ell + 1]);
        if ell + 1 == self.num_buckets() {
            (lo..=hi).contains(&x)
        } else {
            (lo..hi).contains(&x)
        }
    }

    /// Largest possible draw count: each repetition of bucket `l` takes one
    /// draw for the symbol plus at most `b_l`.
    pub fn worst_case_samples(&self) -> u64 {
        self.reps
            .iter()
            .zip(&self.breakpoints[1..])
            .map(|(r, b)| r * (1 + b))
            .sum()
    }
}

/// `X_max = ceil(t k / (eps ln 2))`.
pub fn default_x_max(k: usize, eps: f64, t: u64) -> u64 {
    (t as f64 * k as f64 / (eps * std::f64::consts::LN_2)).ceil() as u64
}

/// Breakpoints `b_l = t k / (log^(l) k)^4` for `l < L = log* k`, `b_L = X_max`,
/// rounded, clamped to strict monotonicity, with collapsed buckets dropped;
/// repetitions `r_l = log2^2(b_L / b_{l-1}) log^(l) k / eps^2`.
pub fn configure_buckets(k: usize, eps: f64, t: u64) -> Result<BucketConfig> {
    configure_buckets_scaled(k, eps, t, 1.0)
}

/// [`configure_buckets`] with every `r_l` multiplied by `rep_multiplier`.
pub fn configure_buckets_scaled(
    k: usize,
    eps: f64,
    t: u64,
    rep_multiplier: f64,
) -> Result<BucketConfig> {
    check_eps(eps)?;
    if k < 2 {
        return Err(Error::ParameterOutOfRange("bucketing needs k >= 2".into()));
    }
    if t == 0 || rep_multiplier.is_nan() || rep_multiplier <= 0.0 {
        return Err(Error::InvalidConfig(
            "t and the repetition multiplier must be positive".into(),
        ));
    }
    let kf = k as f64;
    let levels = log_star(kf);
    let x_max = default_x_max(k, eps, t);
    let mut breakpoints = vec![t];
    for ell in 1..levels {
        let formula = (t as f64 * kf / iterated_log2(kf, ell).powi(4)).round() as u64;
        let b = formula.max(breakpoints[ell - 1] + 1);
        if b >= x_max {
            break;
        }
        breakpoints.push(b);
    }
    breakpoints.push(x_max);
    let b_last = x_max as f64;
    let reps = (1..breakpoints.len())
        .map(|ell| {
            let spread = (b_last / breakpoints[ell - 1] as f64).log2();
            let r = rep_multiplier * spread * spread * iterated_log2(kf, ell) / (eps * eps);
            (r.ceil() as u64).max(1)
        })
        .collect();
    BucketConfig::new(t, breakpoints, reps)
}

/// Parameters of the bucketed pipeline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketedConfig {
    pub k: usize,
    pub eps: f64,
    pub r: u32,
    pub buckets: BucketConfig,
    pub correction_reps: u64,
    /// Draw limit for the guard; defaults to the deterministic worst case.
    pub max_draws: Option<u64>,
}

impl BucketedConfig {
    pub fn defaults(k: usize, eps: f64) -> Result<Self> {
        let r = default_r(eps);
        Self::with_params(k, eps, r, default_t(r), 1.0)
    }

    pub fn with_params(k: usize, eps: f64, r: u32, t: u64, rep_multiplier: f64) -> Result<Self> {
        check_eps(eps)?;
        let cfg = Self {
            k,
            eps,
            r,
            buckets: configure_buckets_scaled(k, eps, t, rep_multiplier)?,
            correction_reps: default_correction_reps(eps),
            max_draws: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn t(&self) -> u64 {
        self.buckets.t()
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || self.t() < default_t(self.r) {
            return Err(Error::InvalidConfig(format!(
                "need r >= 1 and t >= 4 r^2, got r = {}, t = {}",
                self.r,
                self.t()
            )));
        }
        if self.correction_reps == 0 {
            return Err(Error::InvalidConfig(
                "correction_reps must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn worst_case_samples(&self) -> u64 {
        self.buckets.worst_case_samples() + self.correction_reps * (1 + u64::from(self.r))
    }
}

/// The one-smoothed count baseline: `m` repetitions of a window of `n` draws.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbisConfig {
    pub k: usize,
    pub eps: f64,
    pub n: u64,
    pub m: u64,
}

/// Window constant `c` in `n = ceil(c t k / eps)`.
pub const ABIS_WINDOW_CONSTANT: f64 = 1.0;

impl AbisConfig {
    /// `n = ceil(c t k / eps)` with `t` the default for `eps`, and the same
    /// repetition count as the simple pipeline.
    pub fn defaults(k: usize, eps: f64) -> Result<Self> {
        Self::with_window(k, eps, default_t(default_r(eps)), ABIS_WINDOW_CONSTANT)
    }

    pub fn with_window(k: usize, eps: f64, t: u64, c: f64) -> Result<Self> {
        check_eps(eps)?;
        if k == 0 || t == 0 || c.is_nan() || c <= 0.0 {
            return Err(Error::InvalidConfig("k, t and c must be positive".into()));
        }
        Ok(Self {
            k,
            eps,
            n: (c * t as f64 * k as f64 / eps).ceil() as u64,
            m: default_repetitions(k, eps),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_defaults() {
        let c = SimpleConfig::defaults(100, 0.1).unwrap();
        assert_eq!((c.r, c.t), (4, 64));
        assert_eq!(
            c.m,
            (12.0 * (100f64.log2() + 2.0).powi(2) / 0.01).ceil() as u64
        );
        assert_eq!(c.budget_factor, 10.0);
        assert_eq!(default_r(0.9), 1);
        assert_eq!(default_r(0.5), 1);
        assert_eq!(default_r(0.25), 2);
        assert!(SimpleConfig::defaults(10, 1.0).is_err());
        let mut bad = c.clone();
        bad.t = 63;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn log_star_examples() {
        assert_eq!(log_star(65536.0), 4);
        assert_eq!(log_star(256.0), 4);
        assert_eq!(log_star(8.0), 3);
        assert_eq!(log_star(2.0), 1);
        assert_eq!(iterated_log2(65536.0, 3), 2.0);
        assert_eq!(iterated_log2(65536.0, 4), 1.0);
    }

    #[test]
    fn bucket_examples() {
        let c = configure_buckets(1 << 16, 0.1, 16).unwrap();
        assert_eq!(c.num_buckets(), 4);
        assert_eq!(c.breakpoints()[0], 16);
        assert_eq!(c.breakpoints()[1], 17, "formula gives 16 = b_0, clamped");
        assert_eq!(c.breakpoints()[2], 16 * 65536 / 256);
        assert_eq!(c.breakpoints()[3], 16 * 65536 / 16);

        assert_eq!(default_x_max(1000, 0.1, 100), 1_442_696);
        assert_eq!(
            configure_buckets(1000, 0.1, 100).unwrap().x_max(),
            1_442_696
        );
    }

    #[test]
    fn buckets_are_monotone_and_cover() {
        for k in [2usize, 3, 5, 8, 100, 256, 5000, 1 << 16] {
            for eps in [0.05, 0.2, 0.6] {
                let t = default_t(default_r(eps));
                let c = configure_buckets(k, eps, t).unwrap();
                let b = c.breakpoints();
                assert_eq!(b[0], t);
                assert_eq!(*b.last().unwrap(), default_x_max(k, eps, t));
                assert!(b.windows(2).all(|w| w[0] < w[1]));
                assert!(c.num_buckets() <= log_star(k as f64).max(1));
                assert!(c.reps().iter().all(|r| *r >= 1));
            }
        }
    }

    #[test]
    fn bucket_membership() {
        let c = BucketConfig::new(4, vec![4, 10, 20], vec![1, 1]).unwrap();
        assert!(c.contains(0, 4) && c.contains(0, 9) && !c.contains(0, 10));
        assert!(c.contains(1, 10) && c.contains(1, 20) && !c.contains(1, 21));
        assert!(BucketConfig::new(4, vec![5, 10], vec![1]).is_err());
        assert!(BucketConfig::new(4, vec![4, 4], vec![1]).is_err());
        assert!(BucketConfig::new(4, vec![4, 8], vec![0]).is_err());
        assert_eq!(c.worst_case_samples(), 11 + 21);
    }

    #[test]
    fn abis_window() {
        let a = AbisConfig::defaults(256, 0.1).unwrap();
        assert_eq!(a.n, (64.0 * 256.0 / 0.1f64).ceil() as u64);
        assert_eq!(a.m, default_repetitions(256, 0.1));
    }
}
