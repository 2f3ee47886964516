use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;

use super::{
    audit_memory, run, write_trials_csv, EstimatorKind, ExperimentConfig, Overrides, Pipeline,
};
use crate::correction::{build_correction, CorrectionPolynomial, LogBase};
use crate::distribution::spec::DistSpec;
use crate::distribution::{entropy_gap_experiment, DiscreteDistribution, Family};
use crate::error::Result;
use crate::estimators::{
    baseline_abis_once, bucketed_h_estimate, configure_buckets, default_r, default_t,
    log_estimator_once,
};
use crate::numeric::RunningStats;
use crate::oracle::{
    exact_bucket_stats, exact_h_tilde, expected_eta, expected_log_ratio, expected_log_x_over_t,
    nb_mass_enclosure, Enclosure, TruncationPolicy,
};
use crate::rng::CounterRng;
use crate::sampling::{draw_neg_binomial, NbOutcome, SampleSource, SeededSource};

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateOptions {
    /// Add 1 to the linear coefficient of every correction polynomial the
    /// suite builds.
    pub tamper: bool,
    pub policy: TruncationPolicy,
    /// Oracle enclosures wider than this are reported as warnings.
    pub width_warning: f64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            tamper: false,
            policy: TruncationPolicy::default(),
            width_warning: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    pub warnings: Vec<String>,
    pub pass: bool,
}

struct Suite<'a> {
    opts: &'a ValidateOptions,
    checks: Vec<CheckResult>,
    warnings: Vec<String>,
}

impl Suite<'_> {
    fn check(&mut self, name: &'static str, f: impl FnOnce(&mut Self) -> Result<(bool, String)>) {
        let (pass, detail) = match f(self) {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        self.checks.push(CheckResult { name, pass, detail });
    }

    fn correction(&self, t: u64, r: u32) -> Result<CorrectionPolynomial> {
        let corr = build_correction(t, r, LogBase::Two)?;
        Ok(if self.opts.tamper && r >= 1 {
            let bumped = corr.coeffs()[1].clone() + BigRational::from_integer(BigInt::from(1));
            corr.with_coefficient(1, bumped)
        } else {
            corr
        })
    }

    fn watch(&mut self, what: &str, e: Enclosure) -> Enclosure {
        if e.half_width > self.opts.width_warning {
            self.warnings.push(format!(
                "{what}: enclosure half-width {:.3e} exceeds {:.1e}",
                e.half_width, self.opts.width_warning
            ));
        }
        e
    }
}

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Runs every named check. Names are stable; see the README for the list.
pub fn validate(opts: &ValidateOptions) -> ValidationReport {
    let mut s = Suite {
        opts,
        checks: Vec::new(),
        warnings: Vec::new(),
    };
    let policy = opts.policy;

    s.check("rng.reference_stream", |_| {
        let mut rng = CounterRng::new(0);
        let got = [rng.next_u64(), rng.next_u64()];
        Ok((
            got == [0xE220_A839_7B1D_CDAF, 0x6E78_9E6A_A1B9_65F4],
            format!("{got:x?}"),
        ))
    });

    s.check("distribution.entropy_examples", |_| {
        let a = DiscreteDistribution::uniform(4)?.entropy();
        let b = DiscreteDistribution::new(vec![0.75, 0.25])?.entropy();
        let ok = a == 2.0 && (b - 0.811_278_124_459_132_8).abs() < 1e-15;
        Ok((ok, format!("H(uniform 4) = {a}, H(3/4, 1/4) = {b}")))
    });

    s.check("distribution.hard_pair_zero_eps", |_| {
        let g = entropy_gap_experiment(100, 0.0, 1000, 3)?;
        let se = g.std_gap / (g.trials as f64).sqrt();
        Ok((
            g.mean_gap.abs() <= 4.0 * se + 1e-12,
            format!("mean gap {:.3e}, standard error {se:.3e}", g.mean_gap),
        ))
    });

    s.check("sampling.fact1_draws", |_| {
        let d = DiscreteDistribution::uniform(50)?;
        let corr = build_correction(16, 2, LogBase::Two)?;
        let mut src = SeededSource::new(&d, 17);
        let mut stats = RunningStats::new();
        for _ in 0..2000 {
            let i = src.try_next()?;
            let before = src.draws();
            log_estimator_once(&mut src, i, 16, 2, &corr)?;
            stats.push((src.draws() - before) as f64);
        }
        let want = 2.0 + 16.0 * 50.0;
        let z = (stats.mean() - want) / stats.std_error();
        Ok((
            z.abs() <= 3.0,
            format!("mean {:.2} vs {want}, z = {z:.2}", stats.mean()),
        ))
    });

    s.check("correction.r2_closed_form", |s| {
        let mut ok = true;
        for t in [16u64, 64, 100] {
            let c = s.correction(t, 2)?;
            let d = i64::try_from(2 * t).unwrap_or(i64::MAX);
            ok &= c.coeffs().len() == 3
                && c.coeffs()[0] == q(-1, d)
                && c.coeffs()[1] == q(1, d)
                && c.coeffs()[2].is_zero();
        }
        Ok((ok, "c = (-1/(2t), 1/(2t), 0) for t in {16, 64, 100}".into()))
    });

    s.check("correction.r1_zero", |_| {
        let c = build_correction(4, 1, LogBase::Two)?;
        Ok((c.as_poly().is_zero(), format!("{}", c.as_poly())))
    });

    s.check("correction.degree_and_boundedness", |s| {
        let mut worst = (0u32, f64::NEG_INFINITY);
        let mut ok = true;
        for r in 2..=12u32 {
            let t = default_t(r);
            let c = s.correction(t, r)?;
            let ratio = c.nonconstant_magnitude() / (2.0 * f64::from(r) / (t as f64).sqrt());
            ok &= c.as_poly().degree().is_none_or(|d| d <= r as usize) && ratio <= 1.0;
            if ratio > worst.1 {
                worst = (r, ratio);
            }
        }
        Ok((
            ok,
            format!(
                "max sum|c_j| / (2r/sqrt t) = {:.4} at r = {}",
                worst.1, worst.0
            ),
        ))
    });

    s.check("oracle.pmf_normalization", |s| {
        let (mass, tail) = nb_mass_enclosure(16, 0.3, &policy)?;
        s.watch(
            "pmf tail (16, 0.3)",
            Enclosure {
                value: mass,
                half_width: tail,
            },
        );
        let ok = mass + tail >= 1.0 - 2.0 * policy.tol && mass <= 1.0 + 1e-12;
        Ok((ok, format!("mass {mass}, tail bound {tail:.3e}")))
    });

    s.check("oracle.jensen", |s| {
        let mut ok = true;
        for t in [4u64, 64] {
            for p in [0.1, 0.5, 0.9] {
                let e = s.watch("E[log2(X/t)]", expected_log_x_over_t(t, p, &policy)?);
                ok &= e.lower() <= (1.0 / p).log2();
            }
        }
        Ok((ok, "E[log2(X/t)] <= log2(1/p) on the grid".into()))
    });

    s.check("oracle.bias", |s| {
        let r = default_r(0.1);
        let t = default_t(r);
        let corr = s.correction(t, r)?;
        let mut worst = 0.0f64;
        for p in [0.05, 0.3, 0.7, 1.0] {
            let e = s.watch("E[eta]", expected_eta(t, r, p, &corr, &policy)?);
            let target = (1.0 / p).log2();
            worst = worst
                .max((e.lower() - target).abs())
                .max((e.upper() - target).abs());
        }
        Ok((
            worst <= 0.1,
            format!("max |E[eta] - log2(1/p)| = {worst:.3e} at (t, r) = ({t}, {r})"),
        ))
    });

    s.check("oracle.cutoff", |s| {
        let d = DiscreteDistribution::uniform(8)?;
        let x_max = configure_buckets(8, 0.1, 16)?.x_max();
        let h = s.watch("E[log2(X/t)] over D", expected_log_ratio(&d, 16, &policy)?);
        let h_tilde = exact_h_tilde(&d, 16, x_max)?;
        let ok = h.upper() - h_tilde >= 0.0 && h.upper() - h_tilde <= 0.1;
        Ok((
            ok,
            format!("H - H~ = {:.3e} (X_max = {x_max})", h.value - h_tilde),
        ))
    });

    s.check("oracle.bucket_decomposition", |_| {
        let d = DiscreteDistribution::uniform(8)?;
        let cfg = configure_buckets(8, 0.1, 16)?;
        let stats = exact_bucket_stats(&d, &cfg)?;
        let total_q: f64 = stats.iter().map(|b| b.q).sum();
        let combined: f64 = stats.iter().map(|b| b.q * b.h).sum();
        let direct = exact_h_tilde(&d, 16, cfg.x_max())?;
        let ok = (total_q - 1.0).abs() <= 1e-12 && (combined - direct).abs() <= 1e-9;
        Ok((
            ok,
            format!(
                "sum q = {total_q}, |sum qH - H~| = {:.2e}",
                (combined - direct).abs()
            ),
        ))
    });

    s.check("estimators.configure_buckets", |_| {
        let a = configure_buckets(1 << 16, 0.1, 16)?;
        let b = configure_buckets(1000, 0.1, 100)?;
        let ok = a.num_buckets() == 4 && a.breakpoints()[1] == 17 && b.x_max() == 1_442_696;
        Ok((
            ok,
            format!(
                "L = {}, b_1 = {}, X_max = {}",
                a.num_buckets(),
                a.breakpoints()[1],
                b.x_max()
            ),
        ))
    });

    s.check("estimators.bucket_accounting", |_| {
        let d = DiscreteDistribution::new(vec![0.4, 0.3, 0.2, 0.05, 0.03, 0.01, 0.005, 0.005])?;
        let cfg = configure_buckets(8, 0.3, 16)?;
        let cfg = cfg.with_reps(vec![25; cfg.num_buckets()])?;
        let mut ok = true;
        for seed in 0..10 {
            let rep = bucketed_h_estimate(&mut SeededSource::new(&d, seed), &cfg)?;
            let buckets = rep.per_bucket.unwrap_or_default();
            ok &= buckets.iter().map(|b| b.q_hat).sum::<f64>() == 1.0;
            for b in &buckets {
                let (lo, hi) = ((b.lo as f64 / 16.0).log2(), (b.hi as f64 / 16.0).log2());
                ok &= b.hits <= b.reps
                    && (b.hits == 0 || (b.h_hat >= lo - 1e-12 && b.h_hat <= hi + 1e-12));
            }
        }
        Ok((
            ok,
            "sum q_hat = 1 exactly, c <= r, H_hat within its interval".into(),
        ))
    });

    s.check("estimators.eta_monte_carlo", |s| {
        let d = DiscreteDistribution::new(vec![0.3, 0.7])?;
        let corr = s.correction(16, 2)?;
        let mut src = SeededSource::new(&d, 23);
        let mut stats = RunningStats::new();
        for _ in 0..200_000 {
            stats.push(log_estimator_once(&mut src, 0, 16, 2, &corr)?);
        }
        let want = s.watch("E[eta]", expected_eta(16, 2, 0.3, &corr, &policy)?);
        let z = (stats.mean() - want.value) / stats.std_error();
        Ok((
            z.abs() <= 4.0,
            format!(
                "mean {:.5} vs oracle {:.5}, z = {z:.2}",
                stats.mean(),
                want.value
            ),
        ))
    });

    s.check("estimators.nb_variance_scaling", |_| {
        let mut ok = true;
        for p in [0.1, 0.5] {
            let d = DiscreteDistribution::new(vec![p, 1.0 - p])?;
            for t in [16u64, 64, 256] {
                let mut src = SeededSource::new(&d, t);
                let (mut m2, mut m4) = (RunningStats::new(), RunningStats::new());
                for _ in 0..4000 {
                    if let NbOutcome::Hit(x) = draw_neg_binomial(&mut src, 0, t, None)? {
                        let w = x as f64 * p / t as f64 - 1.0;
                        m2.push(w * w);
                        m4.push(w.powi(4));
                    }
                }
                ok &= m2.mean() <= 2.0 / t as f64 && m4.mean() <= 12.0 / (t * t) as f64;
            }
        }
        Ok((ok, "E[(Y-1)^2] <= 2/t and E[(Y-1)^4] <= 12/t^2".into()))
    });

    s.check("estimators.baseline_point_mass", |_| {
        let d = DiscreteDistribution::point_mass(3, 0)?;
        let mut src = SeededSource::new(&d, 1);
        let abis = baseline_abis_once(&mut src, 0, 10)?;
        let plugin =
            Pipeline::build(EstimatorKind::Plugin, 3, 0.3, &Overrides::default())?.run(&mut src)?;
        let ok = (abis - (10f64 / 11.0).log2()).abs() < 1e-15 && plugin.estimate == 0.0;
        Ok((ok, format!("abis {abis}, plugin {}", plugin.estimate)))
    });

    s.check("estimators.pipeline_point_mass", |_| {
        let d = DiscreteDistribution::point_mass(4, 1)?;
        let o = Overrides::parse_all(["m=20"])?;
        let mut ok = true;
        for kind in [EstimatorKind::Simple, EstimatorKind::Bucketed] {
            let rep = Pipeline::build(kind, 4, 0.3, &o)?.run(&mut SeededSource::new(&d, 5))?;
            ok &= rep.estimate == 0.0 && !rep.failed;
        }
        Ok((ok, "simple and bucketed return exactly 0".into()))
    });

    s.check("harness.csv_determinism", |_| {
        let dist = DistSpec::Family {
            family: Family::Zipf { s: 1.0 },
            k: 30,
            seed: 0,
        };
        let mut cfg = ExperimentConfig::new(EstimatorKind::Simple, dist, 0.3, 3, 77);
        cfg.overrides.m = Some(40);
        let bytes = || -> Result<Vec<u8>> {
            let mut buf = Vec::new();
            write_trials_csv(&run(&cfg)?.records, &mut buf, false)?;
            Ok(buf)
        };
        let (a, b) = (bytes()?, bytes()?);
        Ok((a == b, format!("{} bytes", a.len())))
    });

    s.check("memory.audit", |_| {
        let a = audit_memory(0.1, 1)?;
        Ok((
            a.pass,
            format!(
                "simple constant {}, bucketed constant {}, plugin grows {}",
                a.simple_constant, a.bucketed_constant, a.plugin_grows
            ),
        ))
    });

    s.check("hardpair.separation", |_| {
        let g = entropy_gap_experiment(1000, 0.1, 200, 12)?;
        Ok((
            g.ci95_low > 0.0,
            format!(
                "mean gap {:.4e}, 95% CI [{:.4e}, {:.4e}]",
                g.mean_gap, g.ci95_low, g.ci95_high
            ),
        ))
    });

    let pass = s.checks.iter().all(|c| c.pass);
    ValidationReport {
        checks: s.checks,
        warnings: s.warnings,
        pass,
    }
}
