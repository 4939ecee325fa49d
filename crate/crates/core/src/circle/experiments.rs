//! Desk-scale experiments on the minor arcs and on the main term.

use num_complex::Complex64;
use num_integer::Integer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arcs::{
    box_radius, in_major_1d, major_measure, major_union_bound, sigma_f64, DissectionParams,
};
use super::integrals::{for_blocks, twist, uniform_point, weyl, Estimate, Moments, Region};
use crate::arith::ls_slope;
use crate::counting::{count_mitm, CountBox};
use crate::densities::{
    main_term, singular_integral_quadrature, singular_series_qsum, EulerOptions, EulerTables,
    IntegralOptions,
};
use crate::domain::{frac, ComplexAcc, Scale, SystemParams, Target};
use crate::error::{HkError, Result};
use crate::expsums::integral_value;
use crate::quadrature::composite_nodes;

/// Slack added to every exponent when a measurement is compared with a
/// bound of the form `X^{a + eps}`.
pub const EPSILON: f64 = 0.05;

fn check_q_list(q_list: &[f64], x: f64) -> Result<()> {
    if q_list.len() < 3 {
        return Err(HkError::invalid("at least three values of Q are required"));
    }
    if q_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HkError::invalid("Q values must be strictly increasing"));
    }
    if q_list.iter().any(|&q| !(1.0..=x).contains(&q)) {
        return Err(HkError::invalid("every Q must lie in [1, X]"));
    }
    Ok(())
}

fn is_minor(alpha_k: f64, q_bound: f64, x: f64, k: usize) -> Result<bool> {
    Ok(in_major_1d(alpha_k, q_bound, x, k)?.is_none())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinorDecayConfig {
    pub s: usize,
    pub k: usize,
    pub x: f64,
    pub q_list: Vec<f64>,
    pub h: Vec<i64>,
    /// Random starting points for the sup search, per `Q`.
    pub samples: u64,
    /// Local search iterations from each of the best starting points.
    pub climb_steps: usize,
    /// Samples for the Monte-Carlo minor-arc integral; zero skips it.
    pub integral_samples: u64,
    pub seed: u64,
}

impl MinorDecayConfig {
    pub fn new(s: usize, k: usize, x: f64, q_list: Vec<f64>, h: Vec<i64>) -> Self {
        MinorDecayConfig {
            s,
            k,
            x,
            q_list,
            h,
            samples: 256,
            climb_steps: 40,
            integral_samples: 0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinorDecayRow {
    pub q_bound: f64,
    /// Largest `|f_k|` found on `[0,1)^{k-1} x m(Q)`; a lower bound for the
    /// true supremum.
    pub sup: f64,
    pub witness: Vec<f64>,
    /// `X^{1 + eps} Q^{-sigma(k)}`.
    pub reference: f64,
    pub major_measure: f64,
    pub union_bound: f64,
    /// `I_s(m(Q); X; h) / X^{s - k(k+1)/2}`.
    pub integral: Option<Estimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinorDecayReport {
    pub config: MinorDecayConfig,
    pub sigma: f64,
    pub rows: Vec<MinorDecayRow>,
    /// Least-squares slope of `log sup` against `log Q`.
    pub sup_slope: f64,
    pub strictly_decreasing: bool,
    pub integral_slope: Option<f64>,
}

/// Starting points for the sup search: points just outside the arcs with
/// small denominators, rationals with denominators just above `Q`, and
/// uniform samples.
fn sup_candidates(cfg: &MinorDecayConfig, q_bound: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let k = cfg.k;
    let delta = box_radius(q_bound, cfg.x, k);
    let mut out = Vec::new();
    let lower = |q: u64, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        let mut v = vec![vec![0.0; k - 1]];
        if q > 1 {
            v.push(
                (0..k - 1)
                    .map(|_| rng.random_range(0..q) as f64 / q as f64)
                    .collect(),
            );
        }
        v
    };
    for q in 1..=(q_bound.floor() as u64).min(8) {
        for a in 0..=q {
            if a.gcd(&q) != 1 {
                continue;
            }
            for side in [-1.0, 1.0] {
                for stretch in [1.000_001, 1.1, 1.5, 2.5] {
                    let beta = side * stretch * delta / q as f64;
                    let ak = frac(a as f64 / q as f64 + beta);
                    for base in lower(q, rng) {
                        // beta (x - X/2)^k has a flat phase around the
                        // middle of the range.
                        let flat: Vec<f64> = base
                            .iter()
                            .enumerate()
                            .map(|(j, &b)| {
                                frac(b + beta * inflection_coefficient(k, j + 1, cfg.x / 2.0))
                            })
                            .chain([ak])
                            .collect();
                        out.push(flat);
                        let mut plain = base;
                        plain.push(ak);
                        out.push(plain);
                    }
                }
            }
        }
    }
    let first = q_bound.floor() as u64 + 1;
    for q in first..first + 12 {
        let mut tops = vec![1];
        if q > 2 {
            tops.push(rng.random_range(1..q));
        }
        for a in tops {
            if a.gcd(&q) != 1 {
                continue;
            }
            for mut base in lower(q, rng) {
                base.push(a as f64 / q as f64);
                out.push(base);
            }
        }
    }
    for _ in 0..cfg.samples {
        out.push(uniform_point(rng, k));
    }
    out
}

/// Coefficient of `x^j` in `(x - x0)^k`.
fn inflection_coefficient(k: usize, j: usize, x0: f64) -> f64 {
    let binom = (0..j).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64);
    binom * (-x0).powi((k - j) as i32)
}

/// Coordinate search that stays on the minor arcs.
fn climb(
    cfg: &MinorDecayConfig,
    q_bound: f64,
    start: Vec<f64>,
    value: f64,
) -> Result<(Vec<f64>, f64)> {
    let k = cfg.k;
    let mut best = (start, value);
    let mut step: Vec<f64> = (1..=k).map(|j| 0.5 / cfg.x.powi(j as i32)).collect();
    for _ in 0..cfg.climb_steps {
        let mut moved = false;
        for j in 0..k {
            for sign in [1.0, -1.0] {
                let mut cand = best.0.clone();
                cand[j] = frac(cand[j] + sign * step[j]);
                if j == k - 1 && !is_minor(cand[j], q_bound, cfg.x, k)? {
                    continue;
                }
                let v = weyl(&cand, cfg.x)?.norm();
                if v > best.1 {
                    best = (cand, v);
                    moved = true;
                }
            }
        }
        if !moved {
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    Ok(best)
}

/// `inherited` holds witnesses found for larger `Q`; they lie on `m(q_bound)`
/// too, since the minor arcs shrink as `Q` grows.
fn sampled_sup(
    cfg: &MinorDecayConfig,
    q_bound: f64,
    index: u64,
    inherited: &[Vec<f64>],
) -> Result<(Vec<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let mut candidates = sup_candidates(cfg, q_bound, &mut rng);
    candidates.extend(inherited.iter().cloned());
    let mut scored: Vec<(Vec<f64>, f64)> = candidates
        .into_par_iter()
        .map(|alpha| -> Result<Option<(Vec<f64>, f64)>> {
            if !is_minor(alpha[cfg.k - 1], q_bound, cfg.x, cfg.k)? {
                return Ok(None);
            }
            let v = weyl(&alpha, cfg.x)?.norm();
            Ok(Some((alpha, v)))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    if scored.is_empty() {
        return Err(HkError::invalid("no starting point on the minor arcs"));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    scored.truncate(8);
    let climbed = scored
        .into_par_iter()
        .map(|(a, v)| climb(cfg, q_bound, a, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(climbed
        .into_iter()
        .reduce(|a, b| if b.1 > a.1 { b } else { a })
        .expect("non-empty"))
}

/// Sampled supremum of `|f_k|` over the minor arcs and the Monte-Carlo
/// minor-arc integral, for each `Q` in the list.
pub fn minor_arc_decay_experiment(cfg: &MinorDecayConfig) -> Result<MinorDecayReport> {
    let (s, k, x) = (cfg.s, cfg.k, cfg.x);
    let sig = sigma_f64(k)?;
    check_q_list(&cfg.q_list, x)?;
    if s < k * (k + 1) {
        return Err(HkError::invalid(format!(
            "s = {s} is below k(k+1) = {}",
            k * (k + 1)
        )));
    }
    if cfg.h.len() != k {
        return Err(HkError::invalid("h must have k entries"));
    }
    let w = (k * (k + 1) / 2) as i32;
    let norm = x.powi(s as i32 - w);

    let integrals = if cfg.integral_samples > 0 {
        Some(minor_integrals(cfg, norm)?)
    } else {
        None
    };
    let mut rows = Vec::new();
    let mut inherited = Vec::new();
    for (i, &q) in cfg.q_list.iter().enumerate().rev() {
        let (witness, sup) = sampled_sup(cfg, q, i as u64, &inherited)?;
        inherited.push(witness.clone());
        rows.push(MinorDecayRow {
            q_bound: q,
            sup,
            witness,
            reference: x.powf(1.0 + EPSILON) * q.powf(-sig),
            major_measure: major_measure(q, x, k)?,
            union_bound: major_union_bound(q, x, k),
            integral: integrals.as_ref().map(|v| v[i]),
        });
    }
    rows.reverse();
    let lq: Vec<f64> = rows.iter().map(|r| r.q_bound.ln()).collect();
    let ls: Vec<f64> = rows.iter().map(|r| r.sup.ln()).collect();
    let integral_slope = integrals.as_ref().and_then(|v| {
        let li: Vec<f64> = v.iter().map(|e| e.value.norm().ln()).collect();
        li.iter().all(|l| l.is_finite()).then(|| ls_slope(&lq, &li))
    });
    Ok(MinorDecayReport {
        config: cfg.clone(),
        sigma: sig,
        sup_slope: ls_slope(&lq, &ls),
        strictly_decreasing: rows.windows(2).all(|w| w[1].sup < w[0].sup),
        integral_slope,
        rows,
    })
}

/// `I_s(m(Q); X; h) / norm` for every `Q`, from one set of samples.
fn minor_integrals(cfg: &MinorDecayConfig, norm: f64) -> Result<Vec<Estimate>> {
    let nq = cfg.q_list.len();
    let parts = for_blocks(cfg.integral_samples, cfg.seed ^ 0x5eed, |rng, count| {
        let mut m = vec![Moments::default(); nq];
        for _ in 0..count {
            let alpha = uniform_point(rng, cfg.k);
            let v = weyl(&alpha, cfg.x)?.powu(cfg.s as u32) * twist(&alpha, &cfg.h) / norm;
            for (slot, &q) in m.iter_mut().zip(&cfg.q_list) {
                let inside = is_minor(alpha[cfg.k - 1], q, cfg.x, cfg.k)?;
                slot.push(if inside { v } else { Complex64::new(0.0, 0.0) });
            }
        }
        Ok(m)
    })?;
    Ok(reduce_moments(parts, nq)
        .iter()
        .map(Moments::estimate)
        .collect())
}

fn reduce_moments(parts: Vec<Vec<Moments>>, n: usize) -> Vec<Moments> {
    let mut total = vec![Moments::default(); n];
    for p in &parts {
        for (t, m) in total.iter_mut().zip(p) {
            t.combine(m);
        }
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem21Config {
    pub s: usize,
    pub k: usize,
    pub x: f64,
    pub q_list: Vec<f64>,
    pub h: Vec<i64>,
    pub samples: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem21Row {
    pub region: Region,
    /// `|I_s(B; X; h)|`.
    pub lhs: f64,
    pub lhs_half_width: f64,
    /// `J*_{s+1}(B; 2X)`.
    pub moment_double: f64,
    /// `J*_{s+1}(sB; X)`.
    pub moment_dilated: f64,
    /// `X^{-1} (log X)^s J*_{s+1}(B; 2X)^{s/(s+1)} J*_{s+1}(sB; X)^{1/(s+1)}`.
    pub rhs: f64,
    /// `lhs / rhs`; absent when both sides vanish.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem21Report {
    pub config: Theorem21Config,
    pub rows: Vec<Theorem21Row>,
    /// Largest over smallest ratio.
    pub band: f64,
    pub non_increasing: bool,
}

fn check_desk_scale(s: usize, k: usize, x: f64, h: &[i64]) -> Result<()> {
    if k < 2 || s == 0 {
        return Err(HkError::invalid("need k >= 2 and s >= 1"));
    }
    if !x.is_finite() || !(1.0..=1000.0).contains(&x) {
        return Err(HkError::invalid(format!(
            "X must lie in [1, 1000], got {x}"
        )));
    }
    if h.len() != k {
        return Err(HkError::invalid("h must have k entries"));
    }
    Ok(())
}

/// Both sides of the shift inequality for each region, estimated from one
/// shared set of uniform samples.
pub fn theorem21_terms(
    s: usize,
    k: usize,
    h: &[i64],
    regions: &[Region],
    x: f64,
    samples: u64,
    seed: u64,
) -> Result<Vec<Theorem21Row>> {
    check_desk_scale(s, k, x, h)?;
    if samples == 0 {
        return Err(HkError::invalid("at least one sample is required"));
    }
    let dilated: Vec<Region> = regions.iter().map(|r| r.dilate(s as u64)).collect();
    let n = regions.len();
    let zero = Complex64::new(0.0, 0.0);
    let parts = for_blocks(samples, seed, |rng, count| {
        let mut m = vec![Moments::default(); 3 * n];
        for _ in 0..count {
            let alpha = uniform_point(rng, k);
            let f1 = weyl(&alpha, x)?;
            let f2 = weyl(&alpha, 2.0 * x)?;
            let lhs = f1.powu(s as u32) * twist(&alpha, h);
            let jd = Complex64::new(f2.norm().powi(s as i32 + 1), 0.0);
            let js = Complex64::new(f1.norm().powi(s as i32 + 1), 0.0);
            for i in 0..n {
                let inside = regions[i].contains(&alpha, x)?;
                m[3 * i].push(if inside { lhs } else { zero });
                m[3 * i + 1].push(if inside { jd } else { zero });
                m[3 * i + 2].push(if dilated[i].contains(&alpha, x)? {
                    js
                } else {
                    zero
                });
            }
        }
        Ok(m)
    })?;
    let totals: Vec<Estimate> = reduce_moments(parts, 3 * n)
        .iter()
        .map(Moments::estimate)
        .collect();
    let sf = s as f64;
    let mut rows = Vec::with_capacity(n);
    for (i, region) in regions.iter().enumerate() {
        let lhs = totals[3 * i].value.norm();
        let jd = totals[3 * i + 1].value.re;
        let js = totals[3 * i + 2].value.re;
        let rhs = x.recip()
            * x.ln().powi(s as i32)
            * jd.powf(sf / (sf + 1.0))
            * js.powf(1.0 / (sf + 1.0));
        for (name, v) in [
            ("lhs", lhs),
            ("J*(B;2X)", jd),
            ("J*(sB;X)", js),
            ("rhs", rhs),
        ] {
            if !v.is_finite() {
                return Err(HkError::invalid(format!("{name} is not finite")));
            }
        }
        let ratio = match (lhs == 0.0, rhs == 0.0) {
            (true, true) => None,
            (_, true) => {
                return Err(HkError::invalid(
                    "right-hand side vanishes but the left does not",
                ))
            }
            _ => Some(lhs / rhs),
        };
        rows.push(Theorem21Row {
            region: region.clone(),
            lhs,
            lhs_half_width: totals[3 * i].half_width,
            moment_double: jd,
            moment_dilated: js,
            rhs,
            ratio,
        });
    }
    Ok(rows)
}

/// The shift inequality on the minor arcs `m(Q)` for each `Q`; common random
/// numbers across `Q`.
pub fn theorem21_inequality_experiment(cfg: &Theorem21Config) -> Result<Theorem21Report> {
    check_q_list(&cfg.q_list, cfg.x)?;
    let regions: Vec<Region> = cfg
        .q_list
        .iter()
        .map(|&q| Region::Minor { q_bound: q })
        .collect();
    let rows = theorem21_terms(cfg.s, cfg.k, &cfg.h, &regions, cfg.x, cfg.samples, cfg.seed)?;
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let hi = ratios.iter().copied().fold(f64::MIN, f64::max);
    let lo = ratios.iter().copied().fold(f64::MAX, f64::min);
    Ok(Theorem21Report {
        config: cfg.clone(),
        band: if ratios.is_empty() { f64::NAN } else { hi / lo },
        non_increasing: ratios.windows(2).all(|w| w[1] <= w[0]),
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub factor: u64,
    pub q_bound: f64,
    pub tested: u64,
    pub passed: u64,
}

/// Samples `samples` points on `m(Q)` (alternately uniform and just outside
/// an arc) and checks that `factor * alpha mod 1` lies on `m(Q / factor)`.
pub fn scaled_minor_containment(
    factor: u64,
    q_bound: f64,
    x: f64,
    k: usize,
    samples: u64,
    seed: u64,
) -> Result<ContainmentReport> {
    if factor == 0 {
        return Err(HkError::invalid("factor must be positive"));
    }
    if !(1.0..=x).contains(&q_bound) {
        return Err(HkError::invalid("Q must lie in [1, X]"));
    }
    let delta = box_radius(q_bound, x, k);
    let q_max = q_bound.floor() as u64;
    let parts = for_blocks(samples, seed, |rng, count| {
        let (mut tested, mut passed, mut drawn) = (0u64, 0u64, 0u64);
        while tested < count {
            if drawn > 1000 * count {
                return Err(HkError::invalid("the minor arcs are too thin to sample"));
            }
            let alpha = if drawn % 2 == 0 {
                rng.random::<f64>()
            } else {
                let q = rng.random_range(1..=q_max);
                let a = rng.random_range(0..=q);
                let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
                frac(a as f64 / q as f64 + side * (1.0 + rng.random::<f64>()) * delta / q as f64)
            };
            drawn += 1;
            if !is_minor(alpha, q_bound, x, k)? {
                continue;
            }
            tested += 1;
            let image = crate::domain::frac_mul(alpha, factor as i128);
            if is_minor(image, q_bound / factor as f64, x, k)? {
                passed += 1;
            }
        }
        Ok((tested, passed))
    })?;
    let (tested, passed) = parts.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(ContainmentReport {
        factor,
        q_bound,
        tested,
        passed,
    })
}

/// Tuples from `base` rescaled to sum to about `scale`, entries at least 1.
pub fn planted_tuple(base: &[f64], scale: f64) -> Vec<i64> {
    let total: f64 = base.iter().sum();
    base.iter()
        .map(|&y| ((y * scale / total).round() as i64).max(1))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MainTermConfig {
    pub s: usize,
    pub k: usize,
    /// Nominal `X0` values, increasing.
    pub scales: Vec<f64>,
    pub family_size: usize,
    pub seed: u64,
    pub euler: EulerOptions,
    /// Moduli summed for the series of the Fermat-violating target.
    pub fermat_q_max: u64,
    pub budget: u64,
}

impl MainTermConfig {
    pub fn new(s: usize, k: usize, scales: Vec<f64>) -> Self {
        MainTermConfig {
            s,
            k,
            scales,
            family_size: 4,
            seed: 1,
            euler: EulerOptions {
                p_max: 97,
                ..EulerOptions::default()
            },
            fermat_q_max: 100,
            budget: 1 << 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MainTermRow {
    pub scale: f64,
    pub tuple: Vec<i64>,
    pub n: Vec<i64>,
    pub count: u128,
    pub series: f64,
    pub integral: f64,
    pub main_term: f64,
    pub ratio: f64,
    /// Dissection length `X = 2 X0` and its `L`.
    pub x: f64,
    pub l: f64,
    /// Series truncated to `q <= L`.
    pub truncated_series: f64,
    /// Singular integral truncated to `|beta_j| <= L X^{-j}`, normalised
    /// like `integral`.
    pub truncated_integral: f64,
    /// Integral of `f^s e(-alpha . n)` over the boxes of `K(L)`.
    pub box_integral: Complex64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSummary {
    pub scale: f64,
    pub total_count: f64,
    pub total_main_term: f64,
    /// `sum A / sum (S J X0^{s-w})` over the family.
    pub ratio: f64,
    /// Mean `|S(X) - S|` over the family.
    pub series_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FermatRow {
    pub scale: f64,
    pub n: Vec<i64>,
    pub count: u128,
    pub series_euler: f64,
    pub series_qsum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MainTermReport {
    pub config: MainTermConfig,
    pub rows: Vec<MainTermRow>,
    pub summaries: Vec<ScaleSummary>,
    /// `|ratio - 1|` of the summaries never increases with the scale.
    pub distance_non_increasing: bool,
    pub fermat: Vec<FermatRow>,
}

/// Largest `b` with `b^k <= v`.
fn integer_root(v: i64, k: usize) -> i64 {
    if v <= 0 {
        return 0;
    }
    let mut b = (v as f64).powf(1.0 / k as f64).floor() as i64;
    while (b as i128 + 1).pow(k as u32) <= v as i128 {
        b += 1;
    }
    while b > 0 && (b as i128).pow(k as u32) > v as i128 {
        b -= 1;
    }
    b
}

fn exact_count(params: &SystemParams, target: &Target, budget: u64) -> Result<u128> {
    let top = integer_root(target.n()[params.k() - 1], params.k());
    Ok(count_mitm(params, target, CountBox::new(0, top)?, budget)?.count)
}

/// `int_{[-L, L]^k} I(gamma; 1)^s e(-gamma . mu) d gamma` by tensor
/// Gauss-Legendre.
pub fn box_singular_integral(s: usize, mu: &[f64], half_width: f64) -> Result<f64> {
    let k = mu.len();
    let nodes: Vec<Vec<(f64, f64)>> = mu
        .iter()
        .map(|m| {
            let cycles = 2.0 * half_width * (s as f64 + m.abs());
            composite_nodes(-half_width, half_width, cycles.ceil() as usize + 2)
        })
        .collect();
    let inner: usize = nodes[1..].iter().map(Vec::len).product();
    let rows = nodes[0]
        .par_iter()
        .map(|&(g0, w0)| -> Result<ComplexAcc> {
            let mut acc = ComplexAcc::new();
            let mut gamma = vec![g0; k];
            for idx in 0..inner {
                let mut rest = idx;
                let mut w = w0;
                for j in 1..k {
                    let (g, wj) = nodes[j][rest % nodes[j].len()];
                    rest /= nodes[j].len();
                    gamma[j] = g;
                    w *= wj;
                }
                let i = integral_value(&gamma, 1.0)?;
                let t: f64 = gamma.iter().zip(mu).map(|(g, m)| g * m).sum();
                acc.push(i.powu(s as u32) * crate::domain::phase(frac(-t)) * w);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut acc = ComplexAcc::new();
    for r in &rows {
        acc.combine(r);
    }
    Ok(acc.value().re)
}

/// Largest number of Weyl-sum evaluations [`arc_box_integral`] will make.
pub const MAX_BOX_NODES: usize = 1 << 22;

/// `int f(alpha; X)^s e(-alpha . n)` over the union of the boxes
/// `|alpha_j - a_j/q| <= Z X^{-j}` with `q <= Z`, centres taken modulo one.
pub fn arc_box_integral(s: usize, n: &[i64], z: f64, x: f64) -> Result<Complex64> {
    let k = n.len();
    if k == 0 || s == 0 || !(z >= 1.0) {
        return Err(HkError::invalid("need k, s >= 1 and Z >= 1"));
    }
    if 2.0 * z.powi(3) >= x {
        return Err(HkError::invalid("boxes overlap unless 2 Z^3 < X"));
    }
    let top = x.floor();
    let nodes: Vec<Vec<(f64, f64)>> = (1..=k)
        .map(|j| {
            let r = box_radius(z, x, j);
            let span = top.powi(j as i32) * s as f64;
            let freq = (n[j - 1] as f64).abs().max((span - n[j - 1] as f64).abs());
            composite_nodes(-r, r, (2.0 * r * freq).ceil() as usize + 2)
        })
        .collect();
    let per_box: usize = nodes.iter().map(Vec::len).product();
    let mut centers = Vec::new();
    for q in 1..=z.floor() as u64 {
        let count = q.pow(k as u32);
        for idx in 0..count {
            let mut rest = idx;
            let a: Vec<u64> = (0..k)
                .map(|_| {
                    let v = rest % q;
                    rest /= q;
                    v
                })
                .collect();
            if a.iter().fold(q, |g, &v| g.gcd(&v)) == 1 {
                centers.push((q, a));
            }
        }
    }
    if per_box.saturating_mul(centers.len()) > MAX_BOX_NODES {
        return Err(HkError::budget(
            MAX_BOX_NODES as u64,
            (per_box * centers.len()) as u64,
            "box integral nodes",
        ));
    }
    let mut total = ComplexAcc::new();
    for (q, a) in &centers {
        let inner: usize = nodes[1..].iter().map(Vec::len).product();
        let rows = nodes[0]
            .par_iter()
            .map(|&(b0, w0)| -> Result<ComplexAcc> {
                let mut acc = ComplexAcc::new();
                let mut alpha = vec![0.0; k];
                for idx in 0..inner {
                    let mut rest = idx;
                    let mut w = w0;
                    alpha[0] = frac(a[0] as f64 / *q as f64 + b0);
                    for j in 1..k {
                        let (b, wj) = nodes[j][rest % nodes[j].len()];
                        rest /= nodes[j].len();
                        alpha[j] = frac(a[j] as f64 / *q as f64 + b);
                        w *= wj;
                    }
                    acc.push(weyl(&alpha, x)?.powu(s as u32) * twist(&alpha, n) * w);
                }
                Ok(acc)
            })
            .collect::<Result<Vec<_>>>()?;
        for r in &rows {
            total.combine(r);
        }
    }
    Ok(total.value())
}

fn fermat_shift(n: &[i64]) -> Vec<i64> {
    let mut m = n.to_vec();
    m[0] += 1;
    m
}

/// Exact counts against `S J X0^{s-w}` for a planted family at each scale,
/// with the truncated series, truncated integral and `K(L)` box integral
/// alongside. A Fermat-violating target (the first member with `n_1` moved
/// by one) is reported at each scale.
pub fn w4_main_term_experiment(cfg: &MainTermConfig) -> Result<MainTermReport> {
    let params = SystemParams::pure(cfg.s, cfg.k)?;
    if cfg.k < 2 {
        return Err(HkError::invalid("need k >= 2"));
    }
    if cfg.scales.len() < 2 || cfg.scales.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HkError::invalid("scales must be increasing, at least two"));
    }
    if cfg.family_size == 0 {
        return Err(HkError::invalid("family must not be empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bases: Vec<Vec<f64>> = (0..cfg.family_size)
        .map(|_| (0..cfg.s).map(|_| rng.random_range(0.05..1.0)).collect())
        .collect();
    let tables = EulerTables::new(&params, cfg.euler)?;
    let exponent = params.s() as i32 - params.w() as i32;

    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut fermat = Vec::new();
    for &scale in &cfg.scales {
        let mut group = Vec::new();
        for base in &bases {
            let tuple = planted_tuple(base, scale);
            let target = Target::from_tuple(&tuple, &params)?;
            let count = exact_count(&params, &target, cfg.budget)?;
            let series = tables.product(&target)?.estimate;
            let integral =
                singular_integral_quadrature(&target, &params, IntegralOptions::for_degree(cfg.k))?
                    .estimate;
            let mt = main_term(&target, &params, &series, &integral)?;

            let x = target.scale_dissection();
            let d = DissectionParams::new(x, cfg.k)?;
            let truncated_series = singular_series_qsum(
                &target,
                &params,
                d.l().floor() as u64,
                f64::INFINITY,
                cfg.budget,
            )?
            .estimate
            .value;
            let mu_x = target.mu(Scale::Dissection);
            let x0 = target.scale_raw();
            let truncated_integral =
                box_singular_integral(cfg.s, &mu_x, d.l())? * (x / x0).powi(exponent);
            let box_integral = arc_box_integral(cfg.s, target.n(), d.l(), x)?;
            group.push(MainTermRow {
                scale,
                tuple,
                n: target.n().to_vec(),
                count,
                series: series.value,
                integral: integral.value,
                main_term: mt.value,
                ratio: count as f64 / mt.value,
                x,
                l: d.l(),
                truncated_series,
                truncated_integral,
                box_integral,
            });
        }
        let total_count: f64 = group.iter().map(|r| r.count as f64).sum();
        let total_main_term: f64 = group.iter().map(|r| r.main_term).sum();
        let series_gap = group
            .iter()
            .map(|r| (r.truncated_series - r.series).abs())
            .sum::<f64>()
            / group.len() as f64;
        summaries.push(ScaleSummary {
            scale,
            total_count,
            total_main_term,
            ratio: total_count / total_main_term,
            series_gap,
        });

        let n = fermat_shift(&group[0].n);
        let target = Target::new(n.clone())?;
        fermat.push(FermatRow {
            scale,
            count: exact_count(&params, &target, cfg.budget)?,
            series_euler: tables.product(&target)?.estimate.value,
            series_qsum: singular_series_qsum(
                &target,
                &params,
                cfg.fermat_q_max,
                f64::INFINITY,
                cfg.budget,
            )?
            .estimate
            .value,
            n,
        });
        rows.extend(group);
    }
    let dist: Vec<f64> = summaries.iter().map(|s| (s.ratio - 1.0).abs()).collect();
    Ok(MainTermReport {
        config: cfg.clone(),
        rows,
        distance_non_increasing: dist.windows(2).all(|w| w[1] <= w[0]),
        summaries,
        fermat,
    })
}
