//! Major and minor arcs, the boxes `K(q, a; Z)` and the four-way partition
//! of the torus.

use num_integer::Integer;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::domain::{frac, FrequencyPoint};
use crate::error::{HkError, Result};
use crate::expsums::RationalPoint;

/// Largest number of arcs [`major_arcs`] will materialise.
pub const MAX_ARCS: u64 = 1 << 24;

/// The Weyl exponent: `1 / 2^{k-1}` for `2 <= k <= 5` and `1 / (k(k-1))`
/// from `k = 6` on.
pub fn sigma(k: usize) -> Result<Ratio<u64>> {
    match k {
        0 | 1 => Err(HkError::invalid(format!(
            "the Weyl exponent needs k >= 2, got {k}"
        ))),
        2..=5 => Ok(Ratio::new(1, 1u64 << (k - 1))),
        _ => Ok(Ratio::new(1, (k * (k - 1)) as u64)),
    }
}

/// `sigma(k)` as a float.
pub fn sigma_f64(k: usize) -> Result<f64> {
    let s = sigma(k)?;
    Ok(*s.numer() as f64 / *s.denom() as f64)
}

/// Scales of the dissection at length `X`: `L = X^{1/(8k^2)}` and `Q = L^k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissectionParams {
    x: f64,
    k: usize,
    l: f64,
    q: f64,
}

impl DissectionParams {
    pub fn new(x: f64, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(HkError::invalid(format!(
                "the dissection needs k >= 2, got {k}"
            )));
        }
        if !x.is_finite() || x < 1.0 {
            return Err(HkError::invalid(format!(
                "X must be finite and >= 1, got {x}"
            )));
        }
        let l = x.powf(1.0 / (8 * k * k) as f64);
        let q = l.powi(k as i32);
        if !(1.0..=x).contains(&q) {
            return Err(HkError::invalid(format!("Q = {q} outside [1, X]")));
        }
        Ok(DissectionParams { x, k, l, q })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// `Q X^{-k}`.
    pub fn major_radius(&self) -> f64 {
        box_radius(self.q, self.x, self.k)
    }
}

/// `Z X^{-j}`. Every membership test derives its radius from here.
#[inline]
pub fn box_radius(z: f64, x: f64, j: usize) -> f64 {
    z / x.powi(j as i32)
}

/// Which neighbourhood a label belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ArcRule {
    /// `|q alpha_k - a| <= Q X^{-k}`.
    Major { q_bound: f64, x: f64 },
    /// `|alpha_j - a_j / q| <= Z X^{-j}` for every `j`.
    Box { z: f64, x: f64 },
}

/// Centre of an arc together with the rule that defines its extent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcLabel {
    pub center: RationalPoint,
    pub rule: ArcRule,
}

impl ArcLabel {
    pub fn q(&self) -> u64 {
        self.center.q()
    }

    pub fn a(&self) -> &[i64] {
        self.center.a()
    }
}

/// `q alpha - a`, with the product rounded once at the end.
#[inline]
pub(crate) fn residual(alpha: f64, q: u64, a: f64) -> f64 {
    let qf = q as f64;
    let p = alpha * qf;
    let e = alpha.mul_add(qf, -p);
    (p - a) + e
}

/// Nearest integer to `q alpha` and the distance to it.
#[inline]
fn nearest(alpha: f64, q: u64) -> (f64, f64) {
    let a = (alpha * q as f64).round();
    let r = residual(alpha, q, a);
    // Rounding of the product can pick the wrong neighbour at a half.
    if r.abs() > 0.5 {
        let b = a + r.signum();
        (b, residual(alpha, q, b))
    } else {
        (a, r)
    }
}

fn check_alpha(alpha: f64) -> Result<f64> {
    if !alpha.is_finite() {
        return Err(HkError::NonFinite(alpha));
    }
    Ok(frac(alpha))
}

fn major_label(q: u64, a: f64, q_bound: f64, x: f64) -> Result<ArcLabel> {
    Ok(ArcLabel {
        center: RationalPoint::new(q, vec![a as i64])?,
        rule: ArcRule::Major { q_bound, x },
    })
}

/// Membership of `alpha_k` (reduced modulo one) in `M(Q)`, the union of the
/// arcs `|q alpha - a| <= Q X^{-k}` with `0 <= a <= q <= Q` and
/// `gcd(a, q) = 1`. Returns the arc with the smallest `q`, or `None` on the
/// minor arcs.
///
/// The smallest `q` with `||q alpha|| <= delta` is always a convergent
/// denominator of `alpha`, so only convergents are tested. They are
/// generated exactly from the binary expansion of `alpha`.
pub fn in_major_1d(alpha_k: f64, q_bound: f64, x: f64, k: usize) -> Result<Option<ArcLabel>> {
    let alpha = check_alpha(alpha_k)?;
    if !q_bound.is_finite() || !x.is_finite() || x <= 0.0 {
        return Err(HkError::invalid("Q and X must be finite with X > 0"));
    }
    if q_bound < 1.0 {
        return Ok(None);
    }
    let delta = box_radius(q_bound, x, k);
    let q_max = q_bound.floor() as u64;

    let test = |q: u64| -> Option<f64> {
        let (a, r) = nearest(alpha, q);
        (r.abs() <= delta && (a as i64).gcd(&(q as i64)) == 1).then_some(a)
    };
    if let Some(a) = test(1) {
        return major_label(1, a, q_bound, x).map(Some);
    }

    let (mantissa, exponent, _) = integer_decode(alpha);
    let shift = -(exponent as i32);
    if !(0..=125).contains(&shift) {
        return linear_scan(alpha, q_max, delta, q_bound, x);
    }
    let (mut num, mut den) = (mantissa as u128, 1u128 << shift);
    let (mut p0, mut q0, mut p1, mut q1) = (0u128, 1u128, 1u128, 0u128);
    while den != 0 {
        let digit = num / den;
        let p2 = digit.saturating_mul(p1).saturating_add(p0);
        let q2 = digit.saturating_mul(q1).saturating_add(q0);
        if q2 > q_max as u128 {
            break;
        }
        if q2 > 1 {
            if let Some(a) = test(q2 as u64) {
                return major_label(q2 as u64, a, q_bound, x).map(Some);
            }
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        (num, den) = (den, num % den);
    }
    Ok(None)
}

fn linear_scan(
    alpha: f64,
    q_max: u64,
    delta: f64,
    q_bound: f64,
    x: f64,
) -> Result<Option<ArcLabel>> {
    for q in 1..=q_max {
        let (a, r) = nearest(alpha, q);
        if r.abs() <= delta && (a as i64).gcd(&(q as i64)) == 1 {
            return major_label(q, a, q_bound, x).map(Some);
        }
    }
    Ok(None)
}

/// `(mantissa, exponent, sign)` with `v = sign * mantissa * 2^exponent` and
/// an odd mantissa.
fn integer_decode(v: f64) -> (u64, i16, i8) {
    let bits = v.to_bits();
    let sign: i8 = if bits >> 63 == 0 { 1 } else { -1 };
    let mut exponent = ((bits >> 52) & 0x7ff) as i16;
    let mut mantissa = if exponent == 0 {
        (bits & 0xf_ffff_ffff_ffff) << 1
    } else {
        (bits & 0xf_ffff_ffff_ffff) | 0x10_0000_0000_0000
    };
    exponent -= 1075;
    if mantissa != 0 {
        let tz = mantissa.trailing_zeros();
        mantissa >>= tz;
        exponent += tz as i16;
    }
    (mantissa, exponent, sign)
}

/// Membership in `K(Z)`: some `1 <= q <= Z` and `a` with
/// `gcd(q, a) = 1` and `|alpha_j - a_j/q| <= Z X^{-j}` for every `j`.
/// Scans `q` upwards and returns the first centre found.
pub fn in_k(alpha: &FrequencyPoint, z: f64, x: f64) -> Result<Option<ArcLabel>> {
    if !z.is_finite() || z < 1.0 {
        return Err(HkError::invalid(format!(
            "Z must be finite and >= 1, got {z}"
        )));
    }
    if !x.is_finite() || x <= 0.0 {
        return Err(HkError::invalid("X must be finite and positive"));
    }
    let coords: Vec<f64> = alpha.coords().iter().map(|&v| frac(v)).collect();
    let radii: Vec<f64> = (1..=coords.len()).map(|j| box_radius(z, x, j)).collect();
    let mut a = vec![0i64; coords.len()];
    'q: for q in 1..=z.floor() as u64 {
        let qf = q as f64;
        for (j, &c) in coords.iter().enumerate() {
            let (aj, r) = nearest(c, q);
            if r.abs() > qf * radii[j] {
                continue 'q;
            }
            a[j] = aj as i64;
        }
        if a.iter().fold(q as i64, |g, &v| g.gcd(&v)) == 1 {
            return Ok(Some(ArcLabel {
                center: RationalPoint::new(q, a)?,
                rule: ArcRule::Box { z, x },
            }));
        }
    }
    Ok(None)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArcKind {
    /// `alpha_k` on the minor arcs.
    W1,
    /// `alpha_k` on the major arcs, `alpha` outside `K(Q^2)`.
    W2,
    /// In `K(Q^2)` but not in `K(L)`.
    W3,
    /// In `K(L)`.
    W4,
}

impl ArcKind {
    pub const ALL: [ArcKind; 4] = [ArcKind::W1, ArcKind::W2, ArcKind::W3, ArcKind::W4];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for ArcKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ArcKind::W1 => "W1",
            ArcKind::W2 => "W2",
            ArcKind::W3 => "W3",
            ArcKind::W4 => "W4",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcClass {
    pub kind: ArcKind,
    /// Arc of `M(Q)` containing `alpha_k`; absent for `W1`.
    pub major: Option<ArcLabel>,
    /// Box of `K(Q^2)` (for `W3`) or `K(L)` (for `W4`) containing `alpha`.
    pub center: Option<ArcLabel>,
}

/// Class of `alpha` in the partition `W1, ..., W4` of the torus.
pub fn classify(alpha: &FrequencyPoint, d: &DissectionParams) -> Result<ArcClass> {
    if alpha.k() != d.k() {
        return Err(HkError::invalid(format!(
            "point has {} coordinates but k = {}",
            alpha.k(),
            d.k()
        )));
    }
    let alpha_k = alpha.coords()[d.k() - 1];
    let Some(major) = in_major_1d(alpha_k, d.q(), d.x(), d.k())? else {
        return Ok(ArcClass {
            kind: ArcKind::W1,
            major: None,
            center: None,
        });
    };
    let Some(wide) = in_k(alpha, d.q() * d.q(), d.x())? else {
        return Ok(ArcClass {
            kind: ArcKind::W2,
            major: Some(major),
            center: None,
        });
    };
    Ok(match in_k(alpha, d.l(), d.x())? {
        Some(narrow) => ArcClass {
            kind: ArcKind::W4,
            major: Some(major),
            center: Some(narrow),
        },
        None => ArcClass {
            kind: ArcKind::W3,
            major: Some(major),
            center: Some(wide),
        },
    })
}

/// Disjoint intervals whose union is `M(Q)`, sorted.
pub fn major_arcs(q_bound: f64, x: f64, k: usize) -> Result<Vec<(f64, f64)>> {
    if !q_bound.is_finite() || !x.is_finite() || x <= 0.0 {
        return Err(HkError::invalid("Q and X must be finite with X > 0"));
    }
    if q_bound < 1.0 {
        return Ok(Vec::new());
    }
    let q_max = q_bound.floor() as u64;
    // sum phi(q) <= q_max^2 / 2 + 2
    let estimate = q_max.saturating_mul(q_max) / 2 + 2;
    if estimate > MAX_ARCS {
        return Err(HkError::budget(MAX_ARCS, estimate, "major arcs"));
    }
    let delta = box_radius(q_bound, x, k);
    let mut raw = Vec::new();
    for q in 1..=q_max {
        let half = delta / q as f64;
        for a in 0..=q {
            if a.gcd(&q) != 1 {
                continue;
            }
            let c = a as f64 / q as f64;
            let lo = (c - half).max(0.0);
            let hi = (c + half).min(1.0);
            if lo < hi {
                raw.push((lo, hi));
            }
        }
    }
    raw.sort_by(|u, v| u.0.total_cmp(&v.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
    for (lo, hi) in raw {
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    Ok(out)
}

/// Lebesgue measure of `M(Q)`.
pub fn major_measure(q_bound: f64, x: f64, k: usize) -> Result<f64> {
    Ok(major_arcs(q_bound, x, k)?
        .iter()
        .map(|(lo, hi)| hi - lo)
        .sum())
}

/// `sum_{q <= Q} q * 2 Q X^{-k}`, an upper bound for the measure of `M(Q)`.
pub fn major_union_bound(q_bound: f64, x: f64, k: usize) -> f64 {
    let n = q_bound.max(0.0).floor();
    n * (n + 1.0) * box_radius(q_bound, x, k)
}
