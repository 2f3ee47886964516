//! Exact construction of the bias-correction polynomial.
//!
//! Let `f` be the degree-`r` Taylor polynomial of `ln z` at `z = 1` and
//! `Z ~ NB(t, rho)` the number of trials to see `t` successes. Then
//! `h_t(rho) = E[f(Z rho / t)]` is a polynomial of degree at most `r` in
//! `rho`, and the linear map `g(b_1, .., b_r) = c_0 + sum_j c_j b_j` with the
//! same coefficients satisfies `g(rho, rho^2, .., rho^r) = h_t(rho)`.
//! Evaluated on prefix indicators (`E[B_j] = p^j`) it is an unbiased sample
//! of `h_t(p)`.
//!
//! Everything here is exact rational arithmetic; floating point appears only
//! when a finished polynomial is evaluated.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::binomial;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

/// Polynomial with exact rational coefficients, lowest degree first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatPoly {
    coeffs: Vec<BigRational>,
}

impl RatPoly {
    pub fn new(mut coeffs: Vec<BigRational>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: BigRational) -> Self {
        Self::new(vec![c])
    }

    pub fn from_ints(coeffs: &[i64]) -> Self {
        Self::new(coeffs.iter().map(|c| rat(*c, 1)).collect())
    }

    /// `rho`.
    pub fn x() -> Self {
        Self::from_ints(&[0, 1])
    }

    /// Degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, j: usize) -> BigRational {
        self.coeffs
            .get(j)
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        Self::new(self.coeffs.iter().map(|a| a * c).collect())
    }

    pub fn pow(&self, e: u32) -> Self {
        (0..e).fold(Self::constant(BigRational::one()), |acc, _| &acc * self)
    }

    pub fn eval_exact(&self, x: &BigRational) -> BigRational {
        self.coeffs
            .iter()
            .rev()
            .fold(BigRational::zero(), |acc, c| acc * x + c)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * x + c.to_f64().unwrap_or(f64::NAN))
    }
}

impl Add for &RatPoly {
    type Output = RatPoly;
    fn add(self, rhs: &RatPoly) -> RatPoly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        RatPoly::new((0..n).map(|j| self.coeff(j) + rhs.coeff(j)).collect())
    }
}

impl Sub for &RatPoly {
    type Output = RatPoly;
    fn sub(self, rhs: &RatPoly) -> RatPoly {
        self + &(-rhs)
    }
}

impl Neg for &RatPoly {
    type Output = RatPoly;
    fn neg(self) -> RatPoly {
        RatPoly::new(self.coeffs.iter().map(|c| -c).collect())
    }
}

impl Mul for &RatPoly {
    type Output = RatPoly;
    fn mul(self, rhs: &RatPoly) -> RatPoly {
        if self.is_zero() || rhs.is_zero() {
            return RatPoly::zero();
        }
        let mut out = vec![BigRational::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        RatPoly::new(out)
    }
}

impl fmt::Display for RatPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(j, c)| match j {
                0 => format!("{c}"),
                1 => format!("({c})ρ"),
                _ => format!("({c})ρ^{j}"),
            })
            .collect();
        write!(f, "{}", terms.join(" + "))
    }
}

pub(crate) fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn binom(n: usize, k: usize) -> BigRational {
    BigRational::from_integer(binomial(BigInt::from(n), BigInt::from(k)))
}

/// Numerator polynomials of the geometric raw moments.
///
/// Returns `P_0 .. P_{j_max}` with `E[G^j] = P_j(rho) / rho^j` for
/// `G ~ Geo(rho)` on `{1, 2, ..}`, from the recurrence
/// `m_j = 1 + ((1 - rho)/rho) sum_{i<j} C(j, i) m_i`, which in numerator form
/// reads `P_j = rho^j + (1 - rho) sum_{i<j} C(j, i) rho^{j-1-i} P_i`.
pub fn geometric_moments(j_max: usize) -> Vec<RatPoly> {
    let one_minus = RatPoly::from_ints(&[1, -1]);
    let mut out = vec![RatPoly::from_ints(&[1])];
    for j in 1..=j_max {
        let mut acc = RatPoly::zero();
        for (i, p) in out.iter().enumerate() {
            let term = &RatPoly::x().pow((j - 1 - i) as u32) * p;
            acc = &acc + &term.scale(&binom(j, i));
        }
        let pj = &RatPoly::x().pow(j as u32) + &(&one_minus * &acc);
        out.push(pj);
    }
    out
}

/// Scaled central moments of the negative binomial.
///
/// Returns `M_0 .. M_{j_max}` with `E[(Z rho / t - 1)^j] = M_j(rho)` for
/// `Z ~ NB(t, rho)`. `Z rho / t - 1` is the mean of `t` i.i.d. copies of
/// `W = rho G - 1`; its cumulants are `kappa_n(W) / t^(n-1)`.
pub fn nb_central_moments(t: u64, j_max: usize) -> Result<Vec<RatPoly>> {
    if t == 0 {
        return Err(Error::InvalidConfig("t must be at least 1".into()));
    }
    let w = centered_geometric_moments(j_max);
    let kappa = moments_to_cumulants(&w);
    let t_rat = BigRational::from_integer(BigInt::from(t));
    let scaled: Vec<RatPoly> = kappa
        .iter()
        .enumerate()
        .map(|(n, k)| {
            if n == 0 {
                RatPoly::zero()
            } else {
                k.scale(&num_traits::pow(t_rat.clone(), n - 1).recip())
            }
        })
        .collect();
    Ok(cumulants_to_moments(&scaled))
}

/// `E[(rho G - 1)^j] = sum_a C(j, a) (-1)^(j-a) P_a(rho)`.
fn centered_geometric_moments(j_max: usize) -> Vec<RatPoly> {
    let p = geometric_moments(j_max);
    (0..=j_max)
        .map(|j| {
            (0..=j).fold(RatPoly::zero(), |acc, a| {
                let sign = if (j - a) % 2 == 0 {
                    rat(1, 1)
                } else {
                    rat(-1, 1)
                };
                &acc + &p[a].scale(&(binom(j, a) * sign))
            })
        })
        .collect()
}

fn moments_to_cumulants(mu: &[RatPoly]) -> Vec<RatPoly> {
    let mut kappa = vec![RatPoly::zero(); mu.len()];
    for n in 1..mu.len() {
        let mut k = mu[n].clone();
        for m in 1..n {
            k = &k - &(&kappa[m] * &mu[n - m]).scale(&binom(n - 1, m - 1));
        }
        kappa[n] = k;
    }
    kappa
}

fn cumulants_to_moments(kappa: &[RatPoly]) -> Vec<RatPoly> {
    let mut mu = vec![RatPoly::from_ints(&[1])];
    for n in 1..kappa.len() {
        let mut acc = RatPoly::zero();
        for m in 1..=n {
            acc = &acc + &(&kappa[m] * &mu[n - m]).scale(&binom(n - 1, m - 1));
        }
        mu.push(acc);
    }
    mu
}

/// Output units of the correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LogBase {
    Two,
    Natural,
}

impl LogBase {
    /// Factor applied to natural-log coefficients at evaluation time.
    pub fn scale(self) -> f64 {
        match self {
            LogBase::Two => std::f64::consts::LOG2_E,
            LogBase::Natural => 1.0,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "2" | "two" | "bits" => Ok(LogBase::Two),
            "e" | "natural" | "nats" => Ok(LogBase::Natural),
            other => Err(Error::Parse(format!("unknown log base `{other}`"))),
        }
    }
}

impl fmt::Display for LogBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogBase::Two => write!(f, "2"),
            LogBase::Natural => write!(f, "e"),
        }
    }
}

/// The coefficients `c_0 .. c_r` of `h_t` (natural-log units) together with
/// precomputed prefix sums for evaluating `g` on prefix indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionPolynomial {
    t: u64,
    r: u32,
    base: LogBase,
    coeffs: Vec<BigRational>,
    /// `prefix[c] = scale * (c_0 + .. + c_c)`, each rounded once from the
    /// exact partial sum.
    prefix: Vec<f64>,
}

/// Builds `h_t` for degree `r`. Requires `t >= 4 r^2`.
pub fn build_correction(t: u64, r: u32, base: LogBase) -> Result<CorrectionPolynomial> {
    if r == 0 {
        return Err(Error::InvalidConfig("r must be at least 1".into()));
    }
    let min_t = 4 * u64::from(r) * u64::from(r);
    if t < min_t {
        return Err(Error::InvalidConfig(format!(
            "t = {t} is below 4 r^2 = {min_t}; the correction is only bounded when r is small against sqrt(t)"
        )));
    }
    let moments = nb_central_moments(t, r as usize)?;
    let mut h = RatPoly::zero();
    for (i, m) in moments.iter().enumerate().skip(1) {
        let sign = if i % 2 == 1 { 1 } else { -1 };
        h = &h + &m.scale(&rat(sign, i as i64));
    }
    let coeffs = (0..=r as usize).map(|j| h.coeff(j)).collect();
    Ok(CorrectionPolynomial::from_coeffs(t, r, base, coeffs))
}

impl CorrectionPolynomial {
    fn from_coeffs(t: u64, r: u32, base: LogBase, coeffs: Vec<BigRational>) -> Self {
        let scale = base.scale();
        let mut partial = BigRational::zero();
        let prefix = coeffs
            .iter()
            .map(|c| {
                partial += c;
                scale * partial.to_f64().unwrap_or(f64::NAN)
            })
            .collect();
        Self {
            t,
            r,
            base,
            coeffs,
            prefix,
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn base(&self) -> LogBase {
        self.base
    }

    pub fn log_base_scale(&self) -> f64 {
        self.base.scale()
    }

    /// `c_0 .. c_r` in natural-log units.
    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn as_poly(&self) -> RatPoly {
        RatPoly::new(self.coeffs.clone())
    }

    /// `g` on the indicator pattern with `B_j = 1` iff `j <= prefix_len`.
    #[inline]
    pub fn eval_g(&self, prefix_len: u32) -> f64 {
        self.prefix[prefix_len.min(self.r) as usize]
    }

    /// `g` on an arbitrary real vector `(b_1, .., b_r)`.
    pub fn eval_g_linear(&self, b: &[f64]) -> f64 {
        let c: Vec<f64> = self
            .coeffs
            .iter()
            .map(|c| c.to_f64().unwrap_or(f64::NAN))
            .collect();
        let tail: f64 = c[1..].iter().zip(b).map(|(c, b)| c * b).sum();
        self.log_base_scale() * (c[0] + tail)
    }

    /// `scale * h_t(rho)`.
    pub fn eval_h(&self, rho: f64) -> f64 {
        self.log_base_scale() * self.as_poly().eval(rho)
    }

    /// `sum_{j >= 1} |c_j|` in natural-log units.
    pub fn nonconstant_magnitude(&self) -> f64 {
        self.coeffs[1..]
            .iter()
            .map(|c| c.abs().to_f64().unwrap_or(f64::INFINITY))
            .sum()
    }

    /// `max_c |g(prefix c)|` over reachable inputs, natural-log units.
    pub fn max_abs_g(&self) -> f64 {
        let mut partial = BigRational::zero();
        let mut best = BigRational::zero();
        for c in &self.coeffs {
            partial += c;
            if partial.abs() > best {
                best = partial.abs();
            }
        }
        best.to_f64().unwrap_or(f64::INFINITY)
    }

    /// A copy with coefficient `j` replaced; used by mutation checks.
    pub fn with_coefficient(&self, j: usize, value: BigRational) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs[j] = value;
        Self::from_coeffs(self.t, self.r, self.base, coeffs)
    }

    /// Structured text dump with exact `a/b` coefficients, one per line.
    pub fn to_document(&self) -> String {
        let mut out = format!(
            "# h_t coefficients c_0..c_r in natural-log units; multiply by log_base_scale at evaluation\nt = {}\nr = {}\nbase = \"{}\"\nlog_base_scale = {:?}\ncoefficients = [\n",
            self.t,
            self.r,
            self.base,
            self.log_base_scale()
        );
        for c in &self.coeffs {
            out.push_str(&format!("  \"{c}\",\n"));
        }
        out.push_str("]\n");
        out
    }
}

/// Bit lengths of the exact coefficients against `C_bits * r * log2(r + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BitReport {
    pub max_numerator_bits: u64,
    pub max_denominator_bits: u64,
    pub bound: f64,
    pub pass: bool,
}

pub fn coefficient_bit_bound(corr: &CorrectionPolynomial, c_bits: f64) -> BitReport {
    let (mut num_bits, mut den_bits) = (0, 0);
    for c in corr.coeffs.iter().filter(|c| !c.is_zero()) {
        num_bits = num_bits.max(c.numer().bits());
        den_bits = den_bits.max(c.denom().bits());
    }
    let r = f64::from(corr.r);
    let bound = c_bits * r * (r + 1.0).log2();
    BitReport {
        max_numerator_bits: num_bits,
        max_denominator_bits: den_bits,
        bound,
        pass: (num_bits.max(den_bits) as f64) <= bound,
    }
}
