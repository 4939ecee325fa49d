//! Generating functions of the circle method and exact checks of the shift
//! identities behind the subconvex minor-arc bound.
//!
//! Phases `alpha_j * x^j` are reduced modulo one with an exact two-product
//! (see [`frac_mul`]) so that Weyl sums stay accurate for `x^k` far beyond
//! `2^53`. Rational points use integer residues throughout.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{binomial, gcd_all};
use crate::domain::{frac, frac_mul, phase, ComplexAcc, FrequencyPoint};
use crate::error::{HkError, Result};
use crate::quadrature::composite_nodes;

/// Largest number of terms any single sum may have.
pub const MAX_TERMS: u64 = 1 << 32;

/// `a / q` with `a` a vector of residues.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RationalPoint {
    q: u64,
    a: Vec<i64>,
}

impl RationalPoint {
    pub fn new(q: u64, a: Vec<i64>) -> Result<Self> {
        if q == 0 {
            return Err(HkError::invalid("modulus must be positive"));
        }
        if a.iter().any(|&aj| aj < 0 || aj as u64 > q) {
            return Err(HkError::invalid("residues must lie in [0, q]"));
        }
        Ok(RationalPoint { q, a })
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn a(&self) -> &[i64] {
        &self.a
    }

    pub fn k(&self) -> usize {
        self.a.len()
    }

    /// `gcd(q, a_1, ..., a_k) = 1`.
    pub fn is_primitive(&self) -> bool {
        gcd_all(self.q as i64, &self.a) == 1
    }

    pub fn to_frequency(&self) -> FrequencyPoint {
        FrequencyPoint::rational(&self.a, self.q)
    }
}

/// `e(u / q)` for `u = 0..q`.
#[derive(Clone, Debug)]
pub struct RootTable {
    q: u64,
    roots: Vec<Complex64>,
}

impl RootTable {
    pub fn new(q: u64) -> Self {
        let roots = (0..q).map(|u| phase(u as f64 / q as f64)).collect();
        RootTable { q, roots }
    }

    #[inline]
    pub fn get(&self, u: i128) -> Complex64 {
        self.roots[u.rem_euclid(self.q as i128) as usize]
    }
}

/// `psi(u; alpha) = alpha_1 u + ... + alpha_k u^k` modulo one.
#[inline]
pub fn poly_phase(alpha: &[f64], u: i64) -> f64 {
    let mut pw: i128 = 1;
    let mut acc = 0.0;
    for &a in alpha {
        pw *= u as i128;
        acc += frac_mul(a, pw);
    }
    frac(acc)
}

fn term_count(x: f64) -> Result<u64> {
    if !x.is_finite() || x < 0.0 {
        return Err(HkError::invalid(format!(
            "length must be finite and >= 0, got {x}"
        )));
    }
    let n = x.floor() as u64 + 1;
    if n > MAX_TERMS {
        return Err(HkError::budget(MAX_TERMS, n, "exponential sum length"));
    }
    Ok(n)
}

/// `f_k(alpha; X) = sum_{0 <= x <= X} e(alpha_1 x + ... + alpha_k x^k)`.
pub fn weyl_sum(alpha: &FrequencyPoint, x: f64) -> Result<Complex64> {
    let n = term_count(x)?;
    let a = alpha.coords();
    Ok((0..n as i64)
        .map(|u| phase(poly_phase(a, u)))
        .collect::<ComplexAcc>()
        .value())
}

/// Weyl sum at a rational point, from exact residues.
pub fn weyl_sum_rational(point: &RationalPoint, x: f64) -> Result<Complex64> {
    let n = term_count(x)?;
    let roots = RootTable::new(point.q);
    let q = point.q as i128;
    Ok((0..n as i128)
        .map(|u| roots.get(residue_poly(&point.a, u, q)))
        .collect::<ComplexAcc>()
        .value())
}

/// `a_1 r + ... + a_k r^k mod q`.
#[inline]
fn residue_poly(a: &[i64], r: i128, q: i128) -> i128 {
    let r = r.rem_euclid(q);
    let mut acc: i128 = 0;
    for &aj in a.iter().rev() {
        acc = ((acc + aj as i128) * r) % q;
    }
    acc
}

/// Complete sum `S(q, a) = sum_{r=1}^{q} e_q(a_1 r + ... + a_k r^k)`.
pub fn complete_sum(point: &RationalPoint) -> Complex64 {
    let roots = RootTable::new(point.q);
    complete_sum_with(point, &roots)
}

pub(crate) fn complete_sum_with(point: &RationalPoint, roots: &RootTable) -> Complex64 {
    let q = point.q as i128;
    let s: ComplexAcc = (1..=q)
        .map(|r| roots.get(residue_poly(&point.a, r, q)))
        .collect();
    let value = s.value();
    if point.is_primitive() && point.q > 1 {
        let k = point.k().max(1) as f64;
        let envelope = (point.q as f64).powf(1.0 - 1.0 / k + 0.01);
        if value.norm() > 4.0 * envelope {
            log::debug!(
                "|S({}, {:?})| = {:.3} exceeds 4 q^(1-1/k+0.01) = {:.3}",
                point.q,
                point.a,
                value.norm(),
                4.0 * envelope
            );
        }
    }
    value
}

/// Panel control for [`oscillatory_integral`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadControl {
    /// Absolute tolerance on the panel-doubling error estimate.
    pub tol: f64,
    /// Maximum number of panels before giving up.
    pub max_panels: usize,
}

impl Default for QuadControl {
    fn default() -> Self {
        QuadControl {
            tol: 1e-10,
            max_panels: 1 << 22,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralEstimate {
    pub value: Complex64,
    /// `|I_{2n} - I_n|` for the last doubling.
    pub error: f64,
    pub panels: usize,
    /// `|I| / (X (1 + sum |beta_j| X^j)^{-1/k})`; bounded by a constant.
    pub decay_ratio: f64,
}

/// Panel count proportional to the total phase variation over `[0, X]`.
pub fn panel_rule(beta: &[f64], x: f64) -> usize {
    let variation: f64 = beta
        .iter()
        .enumerate()
        .map(|(j, b)| b.abs() * x.powi(j as i32 + 1))
        .sum();
    (4.0 * (variation + 1.0)).ceil() as usize
}

fn gl_integral(beta: &[f64], x: f64, panels: usize) -> Complex64 {
    let mut acc = ComplexAcc::new();
    for (g, w) in composite_nodes(0.0, x, panels) {
        let mut p = 0.0;
        for &b in beta.iter().rev() {
            p = (p + b) * g;
        }
        acc.push(phase(frac(p)) * w);
    }
    acc.value()
}

/// `I(beta; X) = int_0^X e(beta_1 g + ... + beta_k g^k) dg` by composite
/// eight-point Gauss-Legendre, doubling the panel count until two successive
/// estimates agree to `control.tol`.
pub fn oscillatory_integral(
    beta: &[f64],
    x: f64,
    control: QuadControl,
) -> Result<IntegralEstimate> {
    if !x.is_finite() || x < 0.0 {
        return Err(HkError::invalid(
            "integration length must be finite and >= 0",
        ));
    }
    if let Some(&b) = beta.iter().find(|b| !b.is_finite()) {
        return Err(HkError::NonFinite(b));
    }
    if x == 0.0 {
        return Ok(IntegralEstimate {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
            panels: 0,
            decay_ratio: 0.0,
        });
    }
    let mut panels = panel_rule(beta, x).max(1);
    let mut coarse = gl_integral(beta, x, panels);
    loop {
        let fine = gl_integral(beta, x, 2 * panels);
        let error = (fine - coarse).norm();
        panels *= 2;
        if error <= control.tol {
            let variation: f64 = 1.0
                + beta
                    .iter()
                    .enumerate()
                    .map(|(j, b)| b.abs() * x.powi(j as i32 + 1))
                    .sum::<f64>();
            let envelope = x * variation.powf(-1.0 / beta.len().max(1) as f64);
            return Ok(IntegralEstimate {
                value: fine,
                error,
                panels,
                decay_ratio: fine.norm() / envelope,
            });
        }
        if 2 * panels > control.max_panels {
            return Err(HkError::ToleranceNotReached {
                requested: control.tol,
                achieved: error,
                estimate: fine.norm(),
            });
        }
        coarse = fine;
    }
}

/// `I(beta; X)` with the default control; panics only on invalid input.
pub(crate) fn integral_value(beta: &[f64], x: f64) -> Result<Complex64> {
    Ok(oscillatory_integral(beta, x, QuadControl::default())?.value)
}

/// `f_y(alpha; gamma) = sum_{0 <= x <= 2X} e(psi(x - y; alpha) + gamma (x - y))`.
pub fn shifted_sum(alpha: &FrequencyPoint, gamma: f64, y: i64, x: f64) -> Result<Complex64> {
    let n = term_count(2.0 * x)?;
    if y < 0 || y as f64 > x {
        return Err(HkError::invalid(format!("shift y = {y} outside [0, {x}]")));
    }
    let a = alpha.coords();
    Ok((0..n as i64)
        .map(|u| {
            let d = u - y;
            phase(frac(poly_phase(a, d) + frac_mul(gamma, d as i128)))
        })
        .collect::<ComplexAcc>()
        .value())
}

/// `|f_k(alpha; X) - sum_{y <= x <= X + y} e(psi(x - y; alpha))|`.
pub fn verify_shift_reindex(alpha: &FrequencyPoint, x: u64, y: u64) -> Result<f64> {
    if y > x {
        return Err(HkError::invalid("shift must satisfy 0 <= y <= X"));
    }
    let lhs = weyl_sum(alpha, x as f64)?;
    let a = alpha.coords();
    let rhs: ComplexAcc = (y..=x + y)
        .map(|t| phase(poly_phase(a, t as i64 - y as i64)))
        .collect();
    Ok((lhs - rhs.value()).norm())
}

/// `K(gamma) = sum_{0 <= z <= X} e(-gamma z)`.
pub fn kernel(gamma: f64, x: u64) -> Complex64 {
    (0..=x as i128)
        .map(|z| phase(frac_mul(-gamma, z)))
        .collect::<ComplexAcc>()
        .value()
}

/// `N^{-1} sum_{m < N} f_y(alpha; m/N) K(m/N)` without checking that `N`
/// resolves the frequencies involved.
pub fn resolution_average_unchecked(alpha: &FrequencyPoint, x: u64, y: u64, n: u64) -> Complex64 {
    let a = alpha.coords();
    let base: Vec<Complex64> = (0..=2 * x as i64)
        .map(|u| phase(poly_phase(a, u - y as i64)))
        .collect();
    let roots = RootTable::new(n);
    let mut total = ComplexAcc::new();
    for m in 0..n as i128 {
        let fy: ComplexAcc = base
            .iter()
            .enumerate()
            .map(|(u, b)| b * roots.get(m * (u as i128 - y as i128)))
            .collect();
        let k: ComplexAcc = (0..=x as i128).map(|z| roots.get(-m * z)).collect();
        total.push(fy.value() * k.value());
    }
    total.value() / n as f64
}

/// Discrepancy between `f_k(alpha; X)` and the equispaced average replacing
/// `int_0^1 f_y(alpha; gamma) K(gamma) d gamma`. The integrand is a
/// trigonometric polynomial in `gamma` whose frequencies are bounded by
/// `3X` in absolute value, so `N >= 3X + 3` points reproduce the integral
/// exactly.
pub fn verify_resolution_identity(alpha: &FrequencyPoint, x: u64, y: u64, n: u64) -> Result<f64> {
    if y > x {
        return Err(HkError::invalid("shift must satisfy 0 <= y <= X"));
    }
    let required = 3 * x + 3;
    if n < required {
        return Err(HkError::Aliasing {
            points: n,
            required,
        });
    }
    let lhs = weyl_sum(alpha, x as f64)?;
    let rhs = resolution_average_unchecked(alpha, x, y, n);
    Ok((lhs - rhs).norm())
}

/// Coefficient table of `nu_j(y; h) = sum_{l=0}^{j} C(j, l) h_{j-l} y^l`
/// for `j = 1..=k`, with the convention `h_0 = s`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftPolynomials {
    s: usize,
    h: Vec<i128>,
    /// `coeffs[j - 1][l]` is the coefficient of `y^l` in `nu_j`.
    coeffs: Vec<Vec<i128>>,
}

pub fn shift_polynomials(h: &[i64], s: usize) -> Result<ShiftPolynomials> {
    if h.is_empty() {
        return Err(HkError::invalid("h must have at least one entry"));
    }
    let k = h.len();
    let hh = |i: usize| -> i128 {
        if i == 0 {
            s as i128
        } else {
            h[i - 1] as i128
        }
    };
    let coeffs = (1..=k)
        .map(|j| {
            (0..=j)
                .map(|l| binomial(j as u32, l as u32) * hh(j - l))
                .collect()
        })
        .collect();
    Ok(ShiftPolynomials {
        s,
        h: h.iter().map(|&v| v as i128).collect(),
        coeffs,
    })
}

impl ShiftPolynomials {
    pub fn k(&self) -> usize {
        self.h.len()
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn coefficients(&self, j: usize) -> &[i128] {
        &self.coeffs[j - 1]
    }

    pub fn leading_coefficient(&self, j: usize) -> i128 {
        *self.coeffs[j - 1].last().expect("nu_j has degree j")
    }

    /// `nu_j(y; h)`.
    pub fn eval(&self, j: usize, y: i64) -> i128 {
        self.coeffs[j - 1]
            .iter()
            .rev()
            .fold(0i128, |acc, &c| acc * y as i128 + c)
    }

    /// Checks the binomial transform for a tuple `x` whose shifted moments
    /// `sum (x_i - y)^j` equal `h_j` for `j < k`: then `sum x_i^j = nu_j(y; h)`
    /// for `j < k`, and `sum x_i^k` equals `nu_k(y; h)` with `h_k` replaced
    /// by `sum (x_i - y)^k`.
    pub fn verify_binomial_transform(&self, x: &[i64], y: i64) -> Result<bool> {
        if x.len() != self.s {
            return Err(HkError::invalid(format!(
                "tuple has {} entries but s = {}",
                x.len(),
                self.s
            )));
        }
        let k = self.k();
        let shifted = shifted_moments(x, y, k);
        for j in 1..k {
            if shifted[j - 1] != self.h[j - 1] {
                return Err(HkError::InvalidProfile(format!(
                    "sum (x_i - y)^{j} = {} but h_{j} = {}",
                    shifted[j - 1],
                    self.h[j - 1]
                )));
            }
        }
        let plain = shifted_moments(x, 0, k);
        let lower_ok = (1..k).all(|j| plain[j - 1] == self.eval(j, y));
        let top = self.eval(k, y) - self.h[k - 1] + shifted[k - 1];
        Ok(lower_ok && plain[k - 1] == top)
    }
}

/// `(sum (x_i - y), ..., sum (x_i - y)^k)`.
pub fn shifted_moments(x: &[i64], y: i64, k: usize) -> Vec<i128> {
    let mut out = vec![0i128; k];
    for &xi in x {
        let d = (xi - y) as i128;
        let mut p = 1i128;
        for slot in out.iter_mut() {
            p *= d;
            *slot += p;
        }
    }
    out
}

/// `G(alpha; h; gamma) = sum_{0 <= y <= X} e(-(alpha_1 nu_1(y;h) + ... +
/// alpha_k nu_k(y;h) + y sum_i gamma_i))`.
///
/// With `h = 0` and `sum gamma_i = 0` this is exactly
/// `conj(f_k(s alpha; X))`, with no extra phase.
pub fn g_sum(
    alpha: &FrequencyPoint,
    polys: &ShiftPolynomials,
    gammas: &[f64],
    x: f64,
) -> Result<Complex64> {
    let n = term_count(x)?;
    if alpha.k() != polys.k() {
        return Err(HkError::invalid("alpha and h must have the same length"));
    }
    if gammas.len() != polys.s() {
        return Err(HkError::invalid("need one gamma per variable"));
    }
    let a = alpha.coords();
    Ok((0..n as i64)
        .map(|y| {
            let mut p = 0.0;
            for (j, &aj) in a.iter().enumerate() {
                p += frac_mul(aj, polys.eval(j + 1, y));
            }
            for &g in gammas {
                p += frac_mul(g, y as i128);
            }
            phase(frac(-p))
        })
        .collect::<ComplexAcc>()
        .value())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproximantReport {
    /// `V(alpha; q, a) = q^{-1} S(q, a) I(alpha - a/q; X)`.
    pub approximant: Complex64,
    pub weyl: Complex64,
    /// `|f(alpha) - V(alpha; q, a)|`.
    pub error: f64,
    /// `q + X |q alpha_1 - a_1| + ... + X^k |q alpha_k - a_k|`.
    pub envelope: f64,
    /// `error / envelope`.
    pub ratio: f64,
}

pub fn major_arc_approximant(
    alpha: &FrequencyPoint,
    center: &RationalPoint,
    x: f64,
) -> Result<ApproximantReport> {
    if alpha.k() != center.k() {
        return Err(HkError::invalid(
            "alpha and center must have the same length",
        ));
    }
    let q = center.q() as f64;
    let beta: Vec<f64> = alpha
        .coords()
        .iter()
        .zip(center.a())
        .map(|(&al, &aj)| al - aj as f64 / q)
        .collect();
    let s = complete_sum(center);
    let approximant = s / q * integral_value(&beta, x)?;
    let weyl = weyl_sum(alpha, x)?;
    let envelope = q + beta
        .iter()
        .enumerate()
        .map(|(j, b)| x.powi(j as i32 + 1) * (q * b).abs())
        .sum::<f64>();
    let error = (weyl - approximant).norm();
    Ok(ApproximantReport {
        approximant,
        weyl,
        error,
        envelope,
        ratio: error / envelope,
    })
}

/// Lattice `{m / n : 0 <= m_j < n}^k` in lexicographic order.
pub fn grid_points(k: usize, n: usize) -> Vec<FrequencyPoint> {
    let total = n.pow(k as u32);
    (0..total)
        .map(|mut code| {
            let mut c = vec![0.0; k];
            for slot in c.iter_mut().rev() {
                *slot = (code % n) as f64 / n as f64;
                code /= n;
            }
            FrequencyPoint::new(c).expect("grid coordinates are finite")
        })
        .collect()
}

/// Weyl sums over a batch of points; output order matches input order.
pub fn weyl_batch(points: &[FrequencyPoint], x: f64) -> Result<Vec<Complex64>> {
    points.par_iter().map(|p| weyl_sum(p, x)).collect()
}
