//! Distribution spec documents (TOML).
//!
//! ```toml
//! family = "zipf"
//! k = 100
//! seed = 7
//! params = { s = 1.0 }
//! ```
//!
//! or an explicit vector, with decimals or exact fractions:
//!
//! ```toml
//! explicit = ["1/3", "2/3"]
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Deserialize;

use super::{make_family, DiscreteDistribution, Family};
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    family: Option<String>,
    k: Option<usize>,
    seed: Option<u64>,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    explicit: Option<Vec<ProbValue>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ProbValue {
    Int(i64),
    Float(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistSpec {
    Family { family: Family, k: usize, seed: u64 },
    Explicit(DiscreteDistribution),
}

impl DistSpec {
    pub fn parse_toml(text: &str) -> Result<Self> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        match (raw.family, raw.explicit) {
            (Some(_), Some(_)) => Err(Error::Parse(
                "spec must give either `family` or `explicit`, not both".into(),
            )),
            (None, None) => Err(Error::Parse("spec needs `family` or `explicit`".into())),
            (None, Some(values)) => {
                if raw.k.is_some_and(|k| k != values.len()) {
                    return Err(Error::InvalidDistribution(format!(
                        "k = {} but {} probabilities given",
                        raw.k.unwrap_or(0),
                        values.len()
                    )));
                }
                Ok(DistSpec::Explicit(explicit_distribution(&values)?))
            }
            (Some(name), None) => {
                let k = raw
                    .k
                    .ok_or_else(|| Error::Parse("family spec needs `k`".into()))?;
                let inline = if raw.params.is_empty() {
                    name
                } else {
                    let params: Vec<String> =
                        raw.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    format!("{name}:{}", params.join(","))
                };
                Ok(DistSpec::Family {
                    family: Family::parse(&inline)?,
                    k,
                    seed: raw.seed.unwrap_or(0),
                })
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_toml(&std::fs::read_to_string(path)?)
    }

    pub fn build(&self) -> Result<DiscreteDistribution> {
        match self {
            DistSpec::Family { family, k, seed } => make_family(family, *k, *seed),
            DistSpec::Explicit(d) => Ok(d.clone()),
        }
    }
}

fn explicit_distribution(values: &[ProbValue]) -> Result<DiscreteDistribution> {
    let mut exact = Vec::with_capacity(values.len());
    let mut all_exact = true;
    let mut floats = Vec::with_capacity(values.len());
    for v in values {
        let r = match v {
            ProbValue::Int(i) => Some(BigRational::from_integer(BigInt::from(*i))),
            ProbValue::Text(s) => Some(parse_rational(s)?),
            ProbValue::Float(f) => {
                all_exact = false;
                floats.push(*f);
                None
            }
        };
        if let Some(r) = r {
            floats.push(num_traits::ToPrimitive::to_f64(&r).unwrap_or(f64::NAN));
            exact.push(r);
        }
    }
    if all_exact {
        let total = exact.iter().fold(BigRational::zero(), |a, p| a + p);
        if total.is_one() {
            return DiscreteDistribution::from_exact(exact);
        }
    }
    DiscreteDistribution::new(floats)
}

/// Parses `a/b`, an integer, or a decimal such as `-0.125` or `2.5e-3`
/// into an exact rational.
pub fn parse_rational(text: &str) -> Result<BigRational> {
    let text = text.trim();
    let bad = || Error::Parse(format!("not a rational number: `{text}`"));
    if let Some((num, den)) = text.split_once('/') {
        let num: BigInt = num.trim().parse().map_err(|_| bad())?;
        let den: BigInt = den.trim().parse().map_err(|_| bad())?;
        if den.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(num, den));
    }
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (
            &text[..pos],
            text[pos + 1..].parse::<i32>().map_err(|_| bad())?,
        ),
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part
        .chars()
        .chain(frac_part.chars())
        .all(|c| c.is_ascii_digit())
    {
        return Err(bad());
    }
    let all_digits = format!("{int_part}{frac_part}");
    let mut value = BigRational::from_integer(all_digits.parse::<BigInt>().map_err(|_| bad())?);
    let scale = exponent - frac_part.len() as i32;
    let ten = BigRational::from_integer(BigInt::from(10));
    let factor = num_traits::pow(ten, scale.unsigned_abs() as usize);
    if scale >= 0 {
        value *= factor;
    } else {
        value /= factor;
    }
    Ok(if negative { -value } else { value })
}
