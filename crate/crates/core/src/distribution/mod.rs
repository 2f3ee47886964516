//! Discrete distributions over a finite alphabet `{0, .., k-1}`.
//!
//! Symbols are 0-based inside the library. Text formats (replay files,
//! distribution specs) use 1-based indices and convert at the boundary.

mod hard_pair;
pub mod spec;

pub use hard_pair::{entropy_gap_experiment, make_hard_pair, GapSummary, HardPairInstance};

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::rng::CounterRng;

/// Tolerance on `|sum(p) - 1|` for floating-point probability vectors.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Largest alphabet for which zipf probabilities are built in exact rationals.
const EXACT_ZIPF_MAX_K: usize = 2048;

/// A probability vector over `k` symbols.
///
/// When the constructing family permits it, the exact rational probabilities
/// are kept next to the `f64` values (which are their correctly rounded
/// images).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
    exact: Option<Vec<BigRational>>,
}

impl DiscreteDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("alphabet is empty".into()));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::InvalidDistribution(format!(
                "probability {p} at symbol {} is negative or not finite",
                i + 1
            )));
        }
        let total: CompensatedSum = probs.iter().copied().collect();
        let total = total.value();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { probs, exact: None })
    }

    /// Builds from exact rationals; they must sum to exactly one.
    pub fn from_exact(exact: Vec<BigRational>) -> Result<Self> {
        if exact.is_empty() {
            return Err(Error::InvalidDistribution("alphabet is empty".into()));
        }
        if exact.iter().any(|p| p.is_negative()) {
            return Err(Error::InvalidDistribution("negative probability".into()));
        }
        let total = exact.iter().fold(BigRational::zero(), |acc, p| acc + p);
        if !total.is_one() {
            return Err(Error::InvalidDistribution(format!(
                "exact probabilities sum to {total}, not 1"
            )));
        }
        let probs = exact.iter().map(|p| p.to_f64().unwrap_or(0.0)).collect();
        Ok(Self {
            probs,
            exact: Some(exact),
        })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::ParameterOutOfRange("k must be positive".into()));
        }
        let p = BigRational::new(BigInt::one(), BigInt::from(k));
        Self::from_exact(vec![p; k])
    }

    /// All mass on `symbol` (0-based).
    pub fn point_mass(k: usize, symbol: usize) -> Result<Self> {
        if symbol >= k {
            return Err(Error::SymbolOutOfRange { symbol, k });
        }
        let mut exact = vec![BigRational::zero(); k];
        exact[symbol] = BigRational::one();
        Self::from_exact(exact)
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, symbol: usize) -> f64 {
        self.probs[symbol]
    }

    pub fn exact(&self) -> Option<&[BigRational]> {
        self.exact.as_deref()
    }

    /// Shannon entropy in bits, `0 log 0 := 0`.
    pub fn entropy(&self) -> f64 {
        exact_entropy(&self.probs)
    }

    /// Distinct positive probabilities with their total mass, in first-seen
    /// order. Oracles sum over these instead of over all `k` symbols.
    pub fn mass_classes(&self) -> Vec<(f64, f64)> {
        let mut sorted: Vec<f64> = self.probs.iter().copied().filter(|p| *p > 0.0).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let mut out: Vec<(f64, f64)> = Vec::new();
        for p in sorted {
            match out.last_mut() {
                Some((q, mass)) if *q == p => *mass += p,
                _ => out.push((p, p)),
            }
        }
        out
    }
}

/// `sum p log2(1/p)` over positive entries, with compensated summation.
pub fn exact_entropy(probs: &[f64]) -> f64 {
    let s: CompensatedSum = probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| -p * p.log2())
        .collect();
    // -p log2 p is non-negative termwise; clamp the signed-zero/rounding case.
    s.value().max(0.0)
}

/// Benchmark distribution families.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Uniform,
    /// `p_i ∝ i^{-s}`, `s > 0`.
    Zipf {
        s: f64,
    },
    /// Truncated geometric `p_i ∝ (1-q)^{i-1}`, `q ∈ (0, 1]`.
    Geometric {
        q: f64,
    },
    /// Mass `p` on the first symbol and `1-p` on the second.
    TwoPoint {
        p: f64,
    },
    /// A draw from the symmetric Dirichlet(1) over `k` symbols.
    DirichletRandom,
    /// All mass on one symbol, 1-based as in replay streams.
    PointMass {
        i: usize,
    },
}

impl Family {
    /// Parses `name[:key=value,...]`, e.g. `zipf:s=1.2` or `two-point:p=0.3`.
    pub fn parse(text: &str) -> Result<Self> {
        let (name, rest) = match text.split_once(':') {
            Some((n, r)) => (n.trim(), r.trim()),
            None => (text.trim(), ""),
        };
        let mut params = Vec::new();
        for kv in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{kv}`")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad number `{value}`")))?;
            params.push((key.trim().to_string(), value));
        }
        let get = |key: &str, default: Option<f64>| -> Result<f64> {
            params
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| *v)
                .or(default)
                .ok_or_else(|| Error::Parse(format!("family `{name}` needs parameter `{key}`")))
        };
        Ok(match name {
            "uniform" => Family::Uniform,
            "zipf" => Family::Zipf {
                s: get("s", Some(1.0))?,
            },
            "geometric" => Family::Geometric { q: get("q", None)? },
            "two-point" => Family::TwoPoint { p: get("p", None)? },
            "dirichlet-random" | "dirichlet" => Family::DirichletRandom,
            "point-mass" | "point" => {
                let i = get("i", Some(1.0))?;
                if i < 1.0 || i.fract() != 0.0 {
                    return Err(Error::Parse(format!(
                        "point mass index must be a positive integer, got {i}"
                    )));
                }
                Family::PointMass { i: i as usize }
            }
            other => return Err(Error::UnknownFamily(other.to_string())),
        })
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Uniform => write!(f, "uniform"),
            Family::Zipf { s } => write!(f, "zipf:s={s}"),
            Family::Geometric { q } => write!(f, "geometric:q={q}"),
            Family::TwoPoint { p } => write!(f, "two-point:p={p}"),
            Family::DirichletRandom => write!(f, "dirichlet-random"),
            Family::PointMass { i } => write!(f, "point-mass:i={i}"),
        }
    }
}

/// Builds a member of `family` over `k` symbols. Equal arguments give
/// bit-identical output; only `dirichlet-random` consumes the seed.
pub fn make_family(family: &Family, k: usize, seed: u64) -> Result<DiscreteDistribution> {
    if k == 0 {
        return Err(Error::ParameterOutOfRange("k must be positive".into()));
    }
    match *family {
        Family::Uniform => DiscreteDistribution::uniform(k),
        Family::Zipf { s } => {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::ParameterOutOfRange(format!(
                    "zipf exponent must be positive, got {s}"
                )));
            }
            if s.fract() == 0.0 && s <= 8.0 && k <= EXACT_ZIPF_MAX_K {
                exact_zipf(k, s as u32)
            } else {
                let weights: Vec<f64> = (1..=k).map(|i| (i as f64).powf(-s)).collect();
                normalized(weights)
            }
        }
        Family::Geometric { q } => {
            if !(q > 0.0 && q <= 1.0) {
                return Err(Error::ParameterOutOfRange(format!(
                    "geometric parameter must lie in (0, 1], got {q}"
                )));
            }
            let ratio = 1.0 - q;
            let weights: Vec<f64> = (0..k).map(|i| ratio.powi(i as i32)).collect();
            normalized(weights)
        }
        Family::TwoPoint { p } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::ParameterOutOfRange(format!(
                    "two-point mass must lie in [0, 1], got {p}"
                )));
            }
            if k < 2 {
                return Err(Error::ParameterOutOfRange("two-point needs k >= 2".into()));
            }
            let head = BigRational::from_float(p).expect("finite");
            let mut exact = vec![BigRational::zero(); k];
            exact[1] = BigRational::one() - &head;
            exact[0] = head;
            DiscreteDistribution::from_exact(exact)
        }
        Family::DirichletRandom => {
            let mut rng = CounterRng::substream(seed, "dirichlet", k as u64);
            let weights: Vec<f64> = (0..k).map(|_| -rng.next_open_f64().ln()).collect();
            normalized(weights)
        }
        Family::PointMass { i } => {
            if i == 0 || i > k {
                return Err(Error::SymbolOutOfRange { symbol: i, k });
            }
            DiscreteDistribution::point_mass(k, i - 1)
        }
    }
}

fn exact_zipf(k: usize, s: u32) -> Result<DiscreteDistribution> {
    let weights: Vec<BigRational> = (1..=k)
        .map(|i| BigRational::new(BigInt::one(), BigInt::from(i).pow(s)))
        .collect();
    let total = weights.iter().fold(BigRational::zero(), |acc, w| acc + w);
    DiscreteDistribution::from_exact(weights.into_iter().map(|w| w / &total).collect())
}

fn normalized(weights: Vec<f64>) -> Result<DiscreteDistribution> {
    let total: CompensatedSum = weights.iter().copied().collect();
    let total = total.value();
    DiscreteDistribution::new(weights.into_iter().map(|w| w / total).collect())
}
