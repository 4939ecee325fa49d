//! Shared domain types: the power-sum system, its integer target, frequency
//! points on the torus, and a deterministic complex accumulator.
//!
//! Lattice arithmetic here is exact (`i128` with overflow checks). Floating
//! point only enters through phases `e(t) = exp(2πit)`, which are evaluated
//! after reducing their argument modulo one.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{HkError, Result};

/// Sign pattern or coefficient vector attached to the variables.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// `x_1^j + ... + x_s^j = n_j`.
    Pure,
    /// `x_1^j + ... + x_l^j - x_{l+1}^j - ... - x_{l+m}^j = n_j`.
    MixedSign { l: usize, m: usize },
    /// `c_1 x_1^j + ... + c_s x_s^j = n_j` with nonzero integers `c_i`.
    Coefficients(Vec<i64>),
}

/// Number of variables, degree and variant of the system.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemParams {
    s: usize,
    k: usize,
    variant: Variant,
}

impl SystemParams {
    pub fn pure(s: usize, k: usize) -> Result<Self> {
        Self::new(s, k, Variant::Pure)
    }

    pub fn mixed_sign(l: usize, m: usize, k: usize) -> Result<Self> {
        Self::new(l + m, k, Variant::MixedSign { l, m })
    }

    pub fn with_coefficients(coefficients: Vec<i64>, k: usize) -> Result<Self> {
        Self::new(coefficients.len(), k, Variant::Coefficients(coefficients))
    }

    pub fn new(s: usize, k: usize, variant: Variant) -> Result<Self> {
        if s == 0 {
            return Err(HkError::invalid("s must be at least 1"));
        }
        // Degree 1 is admitted for the linear sanity cases (k = 1 sums and
        // densities have closed forms); the circle machinery rejects it.
        if k == 0 {
            return Err(HkError::invalid("k must be at least 1"));
        }
        match &variant {
            Variant::Pure => {}
            Variant::MixedSign { l, m } => {
                if l + m != s {
                    return Err(HkError::invalid(format!("l + m = {} but s = {s}", l + m)));
                }
            }
            Variant::Coefficients(c) => {
                if c.len() != s {
                    return Err(HkError::invalid(format!(
                        "{} coefficients given for s = {s}",
                        c.len()
                    )));
                }
                if c.contains(&0) {
                    return Err(HkError::invalid("coefficients must be nonzero"));
                }
            }
        }
        Ok(SystemParams { s, k, variant })
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn variant(&self) -> &Variant {
        &self.variant
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.variant, Variant::Pure)
    }

    /// `k(k+1)/2`, the total degree of the system.
    pub fn w(&self) -> usize {
        self.k * (self.k + 1) / 2
    }

    /// `k(k-1)/2`.
    pub fn v(&self) -> usize {
        self.k * (self.k - 1) / 2
    }

    /// Coefficient multiplying each variable: all ones for the pure system.
    pub fn coefficients(&self) -> Vec<i64> {
        match &self.variant {
            Variant::Pure => vec![1; self.s],
            Variant::MixedSign { l, m } => {
                let mut c = vec![1; *l];
                c.extend(std::iter::repeat_n(-1, *m));
                c
            }
            Variant::Coefficients(c) => c.clone(),
        }
    }

    /// True when the variant lacks the non-invariance condition of the
    /// mixed-sign theory (`l = m`, or coefficients summing to zero). Such
    /// systems are representable but their counts are dominated by
    /// translation-invariant families.
    pub fn is_degenerate(&self) -> bool {
        match &self.variant {
            Variant::Pure => false,
            Variant::MixedSign { l, m } => l == m,
            Variant::Coefficients(c) => c.iter().sum::<i64>() == 0,
        }
    }
}

/// Which normalisation of the target is meant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scale {
    /// `X0 = max_j |n_j|^{1/j}`; used for counts and the main term.
    Raw,
    /// `X = 2 X0`; used by the arc dissection.
    Dissection,
}

/// Integer right-hand side `n = (n_1, ..., n_k)` with its derived scales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Target {
    n: Vec<i64>,
    scale_raw: f64,
    scale_dissection: f64,
}

impl Target {
    pub fn new(n: Vec<i64>) -> Result<Self> {
        if n.is_empty() {
            return Err(HkError::invalid("target must have at least one entry"));
        }
        let scale_raw = n
            .iter()
            .enumerate()
            .map(|(i, &nj)| root(nj.unsigned_abs(), i as u32 + 1))
            .fold(0.0, f64::max);
        Ok(Target {
            n,
            scale_raw,
            scale_dissection: 2.0 * scale_raw,
        })
    }

    /// Target generated by a witness tuple.
    pub fn from_tuple(x: &[i64], params: &SystemParams) -> Result<Self> {
        let sums = power_sum_vector(x, params)?;
        let n = sums
            .into_iter()
            .map(|v| i64::try_from(v).map_err(|_| HkError::Overflow("target entry")))
            .collect::<Result<Vec<_>>>()?;
        Target::new(n)
    }

    pub fn n(&self) -> &[i64] {
        &self.n
    }

    pub fn k(&self) -> usize {
        self.n.len()
    }

    pub fn scale_raw(&self) -> f64 {
        self.scale_raw
    }

    pub fn scale_dissection(&self) -> f64 {
        self.scale_dissection
    }

    pub fn scale(&self, which: Scale) -> f64 {
        match which {
            Scale::Raw => self.scale_raw,
            Scale::Dissection => self.scale_dissection,
        }
    }

    /// `mu_j = n_j / X^j` for the chosen scale (all zero for the zero target).
    pub fn mu(&self, which: Scale) -> Vec<f64> {
        let x = self.scale(which);
        self.n
            .iter()
            .enumerate()
            .map(|(i, &nj)| {
                if x == 0.0 {
                    0.0
                } else {
                    nj as f64 / x.powi(i as i32 + 1)
                }
            })
            .collect()
    }

    /// True when every entry is at least one.
    pub fn is_positive(&self) -> bool {
        self.n.iter().all(|&v| v >= 1)
    }
}

/// `v^{1/j}`, correct for perfect powers.
fn root(v: u64, j: u32) -> f64 {
    if j == 1 {
        return v as f64;
    }
    let guess = (v as f64).powf(1.0 / j as f64);
    let r = guess.round();
    if r >= 0.0 && (r as u128).checked_pow(j) == Some(v as u128) {
        r
    } else {
        guess
    }
}

/// A point on the torus `[0,1)^k` or in `R^k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPoint {
    coords: Vec<f64>,
}

impl FrequencyPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(HkError::NonFinite(bad));
        }
        Ok(FrequencyPoint { coords })
    }

    pub fn zero(k: usize) -> Self {
        FrequencyPoint {
            coords: vec![0.0; k],
        }
    }

    /// Builds `a / q` exactly rounded coordinatewise.
    pub fn rational(a: &[i64], q: u64) -> Self {
        FrequencyPoint {
            coords: a.iter().map(|&aj| aj as f64 / q as f64).collect(),
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn k(&self) -> usize {
        self.coords.len()
    }

    /// Coordinatewise reduction into `[0,1)^k`.
    pub fn reduced(&self) -> Self {
        FrequencyPoint {
            coords: self.coords.iter().map(|&c| frac(c)).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        FrequencyPoint {
            coords: self.coords.iter().map(|&c| c * factor).collect(),
        }
    }
}

impl From<FrequencyPoint> for Vec<f64> {
    fn from(p: FrequencyPoint) -> Self {
        p.coords
    }
}

/// Fractional part in `[0,1)`; callers guarantee finiteness.
#[inline]
pub(crate) fn frac(x: f64) -> f64 {
    let r = x - x.floor();
    // x slightly below an integer can round up to exactly 1.0.
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

pub fn reduce_mod1(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(HkError::NonFinite(x));
    }
    Ok(frac(x))
}

/// `e(t) = exp(2πit)`.
pub fn unit_phase(t: f64) -> Result<Complex64> {
    if !t.is_finite() {
        return Err(HkError::NonFinite(t));
    }
    Ok(phase(frac(t)))
}

/// `e(r)` for an already reduced argument. Uses the symmetric range
/// `[-1/2, 1/2)` so that quarter turns come out with tiny residues.
#[inline]
pub(crate) fn phase(r: f64) -> Complex64 {
    let r = if r >= 0.5 { r - 1.0 } else { r };
    let (s, c) = (TAU * r).sin_cos();
    Complex64::new(c, s)
}

/// Fractional part of `alpha * m` for an integer `m`, accurate to a few ulps
/// of one even when `|alpha * m|` is far beyond `2^53`.
pub fn frac_mul(alpha: f64, m: i128) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let neg = m < 0;
    let mut rest = m.unsigned_abs();
    // alpha * 2^{32 i} is exact in binary floating point, and so is its
    // fractional part, so each 32-bit chunk contributes one two-product.
    let mut a = frac(alpha);
    let mut total = 0.0;
    while rest != 0 {
        let chunk = (rest & 0xffff_ffff) as f64;
        if chunk != 0.0 {
            let p = a * chunk;
            let e = a.mul_add(chunk, -p);
            total = frac(total + frac(p) + e);
        }
        rest >>= 32;
        a = frac(a * 4_294_967_296.0);
    }
    if neg {
        frac(-total)
    } else {
        total
    }
}

/// `(sum_i c_i x_i, sum_i c_i x_i^2, ..., sum_i c_i x_i^k)` in exact
/// arithmetic, `c` taken from the variant.
pub fn power_sum_vector(x: &[i64], params: &SystemParams) -> Result<Vec<i128>> {
    if x.len() != params.s() {
        return Err(HkError::invalid(format!(
            "tuple has {} entries but s = {}",
            x.len(),
            params.s()
        )));
    }
    if params.is_pure() && x.iter().any(|&xi| xi < 0) {
        return Err(HkError::invalid(
            "pure system requires non-negative variables",
        ));
    }
    let coeffs = params.coefficients();
    let mut out = vec![0i128; params.k()];
    for (&xi, &ci) in x.iter().zip(&coeffs) {
        let mut pw: i128 = 1;
        for slot in out.iter_mut() {
            pw = pw
                .checked_mul(xi as i128)
                .ok_or(HkError::Overflow("power sum"))?;
            let term = pw
                .checked_mul(ci as i128)
                .ok_or(HkError::Overflow("power sum"))?;
            *slot = slot
                .checked_add(term)
                .ok_or(HkError::Overflow("power sum"))?;
        }
    }
    Ok(out)
}

/// Compensated complex accumulator with a fixed summation order.
///
/// Summation is Neumaier-compensated in the order terms are pushed, so the
/// result is bit-identical across runs. Partial accumulators are merged with
/// [`ComplexAcc::combine`], which must be called in a fixed order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ComplexAcc {
    re: f64,
    re_c: f64,
    im: f64,
    im_c: f64,
    count: u64,
}

#[inline]
fn neumaier(sum: &mut f64, comp: &mut f64, v: f64) {
    let t = *sum + v;
    if sum.abs() >= v.abs() {
        *comp += (*sum - t) + v;
    } else {
        *comp += (v - t) + *sum;
    }
    *sum = t;
}

impl ComplexAcc {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, z: Complex64) {
        neumaier(&mut self.re, &mut self.re_c, z.re);
        neumaier(&mut self.im, &mut self.im_c, z.im);
        self.count += 1;
    }

    pub fn combine(&mut self, other: &ComplexAcc) {
        neumaier(&mut self.re, &mut self.re_c, other.re);
        neumaier(&mut self.re, &mut self.re_c, other.re_c);
        neumaier(&mut self.im, &mut self.im_c, other.im);
        neumaier(&mut self.im, &mut self.im_c, other.im_c);
        self.count += other.count;
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re + self.re_c, self.im + self.im_c)
    }

    pub fn count(&self) -> u64 {
        self.count
    }
}

impl FromIterator<Complex64> for ComplexAcc {
    fn from_iter<I: IntoIterator<Item = Complex64>>(iter: I) -> Self {
        let mut acc = ComplexAcc::new();
        for z in iter {
            acc.push(z);
        }
        acc
    }
}

/// Real counterpart of [`ComplexAcc`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RealAcc {
    sum: f64,
    comp: f64,
}

impl RealAcc {
    #[inline]
    pub fn push(&mut self, v: f64) {
        neumaier(&mut self.sum, &mut self.comp, v);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}
