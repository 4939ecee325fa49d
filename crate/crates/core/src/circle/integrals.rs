//! Restricted mean values over subsets of the torus: exact lattice and
//! histogram paths for the full torus, stratified Monte Carlo elsewhere.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arcs::{classify, in_major_1d, major_arcs, ArcKind, DissectionParams};
use crate::counting::{moment_histogram, CountBox};
use crate::domain::{frac, frac_mul, phase, ComplexAcc, FrequencyPoint, RealAcc};
use crate::error::{HkError, Result};
use crate::expsums::weyl_sum;

/// Samples per random stream.
pub const MC_BLOCK: u64 = 1024;

/// A measurable subset `B` of the torus, described by `alpha_k` alone except
/// for the arc classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Full,
    Empty,
    /// `[0,1)^{k-1} x M(Q)`.
    Major {
        q_bound: f64,
    },
    /// `[0,1)^{k-1} x m(Q)`.
    Minor {
        q_bound: f64,
    },
    /// `{ factor * beta mod 1 : beta in inner }` in the last coordinate.
    Dilated {
        inner: Box<Region>,
        factor: u64,
    },
    Class {
        kind: ArcKind,
        dissection: DissectionParams,
    },
}

impl Region {
    /// Membership of a reduced point; `x` is the length of the Weyl sums the
    /// arcs are built for.
    pub fn contains(&self, alpha: &[f64], x: f64) -> Result<bool> {
        let k = alpha.len();
        let last = *alpha
            .last()
            .ok_or_else(|| HkError::invalid("empty frequency point"))?;
        Ok(match self {
            Region::Full => true,
            Region::Empty => false,
            Region::Major { q_bound } => in_major_1d(last, *q_bound, x, k)?.is_some(),
            Region::Minor { q_bound } => in_major_1d(last, *q_bound, x, k)?.is_none(),
            Region::Dilated { inner, factor } => {
                if !inner.is_one_dimensional() {
                    return Err(HkError::invalid(
                        "only regions cut out by alpha_k can be dilated",
                    ));
                }
                if *factor == 0 {
                    return Err(HkError::invalid("dilation factor must be positive"));
                }
                let mut beta = alpha.to_vec();
                for r in 0..*factor {
                    beta[k - 1] = (last + r as f64) / *factor as f64;
                    if inner.contains(&beta, x)? {
                        return Ok(true);
                    }
                }
                false
            }
            Region::Class { kind, dissection } => {
                classify(&FrequencyPoint::new(alpha.to_vec())?, dissection)?.kind == *kind
            }
        })
    }

    pub fn is_one_dimensional(&self) -> bool {
        match self {
            Region::Class { .. } => false,
            Region::Dilated { inner, .. } => inner.is_one_dimensional(),
            _ => true,
        }
    }

    /// `s B`, simplified where the image is known.
    pub fn dilate(&self, factor: u64) -> Region {
        match self {
            Region::Full | Region::Empty => self.clone(),
            _ => Region::Dilated {
                inner: Box::new(self.clone()),
                factor,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntegrationMethod {
    /// Exact when the region is the full torus and the problem is small.
    Auto,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub samples: u64,
    pub seed: u64,
    /// Work limit for the exact paths.
    pub budget: u64,
    pub method: IntegrationMethod,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            samples: 1 << 14,
            seed: 0,
            budget: 1 << 32,
            method: IntegrationMethod::Auto,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: Complex64,
    /// 95% half-width; zero for exact values.
    pub half_width: f64,
    pub samples: u64,
    pub exact: bool,
}

impl Estimate {
    fn exact(value: Complex64) -> Self {
        Estimate {
            value,
            half_width: 0.0,
            samples: 0,
            exact: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub value: f64,
    pub half_width: f64,
    pub samples: u64,
    pub exact: bool,
}

/// Running mean and second moment of complex samples.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Moments {
    sum: ComplexAcc,
    sq: RealAcc,
    n: u64,
}

impl Moments {
    pub(crate) fn push(&mut self, v: Complex64) {
        self.sum.push(v);
        self.sq.push(v.norm_sqr());
        self.n += 1;
    }

    pub(crate) fn combine(&mut self, other: &Moments) {
        self.sum.combine(&other.sum);
        self.sq.push(other.sq.value());
        self.n += other.n;
    }

    pub(crate) fn estimate(&self) -> Estimate {
        if self.n == 0 {
            return Estimate {
                value: Complex64::new(0.0, 0.0),
                half_width: f64::INFINITY,
                samples: 0,
                exact: false,
            };
        }
        let n = self.n as f64;
        let mean = self.sum.value() / n;
        let var = (self.sq.value() / n - mean.norm_sqr()).max(0.0);
        Estimate {
            value: mean,
            half_width: 1.96 * (var / n).sqrt(),
            samples: self.n,
            exact: false,
        }
    }
}

pub(crate) fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Runs `f` on every block of samples in parallel; results come back in
/// block order.
pub(crate) fn for_blocks<T, F>(samples: u64, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> Result<T> + Sync,
{
    let blocks = samples.div_ceil(MC_BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, b);
            f(&mut rng, MC_BLOCK.min(samples - b * MC_BLOCK))
        })
        .collect()
}

pub(crate) fn uniform_point<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.random::<f64>()).collect()
}

/// The union of the major arcs as a sampling stratum.
struct ArcStratum {
    arcs: Vec<(f64, f64)>,
    cumulative: Vec<f64>,
    measure: f64,
}

impl ArcStratum {
    fn new(q_bound: f64, x: f64, k: usize) -> Result<Self> {
        let arcs = major_arcs(q_bound, x, k)?;
        let mut cumulative = Vec::with_capacity(arcs.len());
        let mut total = 0.0;
        for (lo, hi) in &arcs {
            total += hi - lo;
            cumulative.push(total);
        }
        Ok(ArcStratum {
            arcs,
            cumulative,
            measure: total,
        })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u = rng.random::<f64>() * self.measure;
        let i = self
            .cumulative
            .partition_point(|&c| c < u)
            .min(self.arcs.len() - 1);
        let (lo, hi) = self.arcs[i];
        (lo + rng.random::<f64>() * (hi - lo)).min(hi)
    }
}

/// `int_B g` by Monte Carlo. The major arcs are sampled directly (one
/// stratum per region); every other region is sampled uniformly with an
/// indicator.
pub(crate) fn integrate_region<G>(
    k: usize,
    region: &Region,
    x: f64,
    opts: &McOptions,
    g: G,
) -> Result<Estimate>
where
    G: Fn(&[f64]) -> Result<Complex64> + Sync,
{
    if opts.samples == 0 {
        return Err(HkError::invalid("at least one sample is required"));
    }
    if matches!(region, Region::Empty) {
        return Ok(Estimate::exact(Complex64::new(0.0, 0.0)));
    }
    let stratum = match region {
        Region::Major { q_bound } => {
            let s = ArcStratum::new(*q_bound, x, k)?;
            if s.arcs.is_empty() {
                return Ok(Estimate::exact(Complex64::new(0.0, 0.0)));
            }
            Some(s)
        }
        _ => None,
    };
    let parts = for_blocks(opts.samples, opts.seed, |rng, count| {
        let mut m = Moments::default();
        for _ in 0..count {
            let mut alpha = uniform_point(rng, k);
            let weight = match &stratum {
                Some(s) => {
                    alpha[k - 1] = s.sample(rng);
                    s.measure
                }
                None => 1.0,
            };
            if region.contains(&alpha, x)? {
                m.push(g(&alpha)? * weight);
            } else {
                m.push(Complex64::new(0.0, 0.0));
            }
        }
        Ok(m)
    })?;
    let mut total = Moments::default();
    for p in &parts {
        total.combine(p);
    }
    Ok(total.estimate())
}

pub(crate) fn weyl(alpha: &[f64], x: f64) -> Result<Complex64> {
    weyl_sum(&FrequencyPoint::new(alpha.to_vec())?, x)
}

/// `e(-alpha . h)`.
pub(crate) fn twist(alpha: &[f64], h: &[i64]) -> Complex64 {
    let t: f64 = alpha
        .iter()
        .zip(h)
        .map(|(&a, &hj)| frac_mul(a, hj as i128))
        .sum();
    phase(frac(-t))
}

fn check_length(x: f64) -> Result<i64> {
    if !x.is_finite() || x < 0.0 {
        return Err(HkError::invalid(format!(
            "X must be finite and >= 0, got {x}"
        )));
    }
    Ok(x.floor() as i64)
}

/// `J*_{t,k}(B; X) = int_B int |f_k(alpha; X)|^t d alpha`.
///
/// For the full torus and even `t` this is the number of pairs of
/// `t/2`-tuples in `[0, X]` with equal power sums, counted exactly.
pub fn restricted_moment(
    t: u32,
    k: usize,
    region: &Region,
    x: f64,
    opts: &McOptions,
) -> Result<MomentEstimate> {
    if t == 0 || k == 0 {
        return Err(HkError::invalid("t and k must be positive"));
    }
    let top = check_length(x)?;
    if matches!(region, Region::Empty) {
        return Ok(MomentEstimate {
            value: 0.0,
            half_width: 0.0,
            samples: 0,
            exact: true,
        });
    }
    if matches!(region, Region::Full)
        && t.is_multiple_of(2)
        && opts.method == IntegrationMethod::Auto
    {
        let hist = moment_histogram(t as usize / 2, k, CountBox::new(0, top)?, opts.budget)?;
        return Ok(MomentEstimate {
            value: hist.sum_of_squares() as f64,
            half_width: 0.0,
            samples: 0,
            exact: true,
        });
    }
    let est = integrate_region(k, region, x, opts, |alpha| {
        Ok(Complex64::new(weyl(alpha, x)?.norm().powi(t as i32), 0.0))
    })?;
    Ok(MomentEstimate {
        value: est.value.re,
        half_width: est.half_width,
        samples: est.samples,
        exact: est.exact,
    })
}

/// `I_s(B; X; h) = int_B int f_k(alpha; X)^s e(-alpha . h) d alpha`.
///
/// Over the full torus this is the number of `x` in `[0, X]^s` with
/// `sum x_i^j = h_j`; it is evaluated exactly on an aliasing-free lattice
/// when the lattice fits the budget.
pub fn restricted_representation_integral(
    s: usize,
    h: &[i64],
    region: &Region,
    x: f64,
    opts: &McOptions,
) -> Result<Estimate> {
    if s == 0 || h.is_empty() {
        return Err(HkError::invalid("s and k must be positive"));
    }
    check_length(x)?;
    if matches!(region, Region::Empty) {
        return Ok(Estimate::exact(Complex64::new(0.0, 0.0)));
    }
    if matches!(region, Region::Full) && opts.method == IntegrationMethod::Auto {
        match lattice_representation_integral(s, h, x, None, opts.budget) {
            Ok(v) => return Ok(Estimate::exact(v)),
            Err(HkError::BudgetExceeded { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    integrate_region(h.len(), region, x, opts, |alpha| {
        Ok(weyl(alpha, x)?.powu(s as u32) * twist(alpha, h))
    })
}

/// Smallest lattice sizes for which the lattice average of
/// `f^s e(-alpha . h)` equals its integral: the frequencies in coordinate
/// `j` lie in `[-h_j, s X^j - h_j]`.
pub fn lattice_requirements(s: usize, h: &[i64], x: f64) -> Result<Vec<u64>> {
    let top = check_length(x)? as i128;
    (1..=h.len())
        .map(|j| {
            let span = top
                .checked_pow(j as u32)
                .and_then(|p| p.checked_mul(s as i128))
                .ok_or(HkError::Overflow("lattice size"))?;
            let hj = h[j - 1] as i128;
            let need = hj.abs().max((span - hj).abs()) + 1;
            u64::try_from(need).map_err(|_| HkError::Overflow("lattice size"))
        })
        .collect()
}

/// Lattice average of `f^s e(-alpha . h)` over `alpha = m / N`. With `sizes`
/// omitted, `N_j = max(s X^j + 1, required)`; sizes below the requirement
/// are rejected as aliased.
pub fn lattice_representation_integral(
    s: usize,
    h: &[i64],
    x: f64,
    sizes: Option<&[u64]>,
    budget: u64,
) -> Result<Complex64> {
    let k = h.len();
    if s == 0 || k == 0 {
        return Err(HkError::invalid("s and k must be positive"));
    }
    let top = check_length(x)?;
    let required = lattice_requirements(s, h, x)?;
    let sizes: Vec<u64> = match sizes {
        Some(n) => {
            if n.len() != k {
                return Err(HkError::invalid("one lattice size per coordinate"));
            }
            for (&got, &need) in n.iter().zip(&required) {
                if got < need {
                    return Err(HkError::Aliasing {
                        points: got,
                        required: need,
                    });
                }
            }
            n.to_vec()
        }
        None => (1..=k)
            .map(|j| {
                let span = (s as u64).saturating_mul((top as u64).saturating_pow(j as u32));
                span.saturating_add(1).max(required[j - 1])
            })
            .collect(),
    };
    let points = sizes.iter().try_fold(1u64, |acc, &n| acc.checked_mul(n));
    match points.and_then(|p| p.checked_mul(top as u64 + 1)) {
        Some(w) if w <= budget => {}
        w => {
            return Err(HkError::budget(
                budget,
                w.unwrap_or(u64::MAX),
                "lattice integral",
            ))
        }
    }
    // u^j mod N_j for every u in [0, X].
    let powers: Vec<Vec<i128>> = sizes
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let n = n as i128;
            (0..=top as i128)
                .map(|u| {
                    let mut p = 1i128;
                    for _ in 0..=j {
                        p = p * u % n;
                    }
                    p
                })
                .collect()
        })
        .collect();
    let h_res: Vec<i128> = h
        .iter()
        .zip(&sizes)
        .map(|(&hj, &n)| (hj as i128).rem_euclid(n as i128))
        .collect();
    let inner: u64 = sizes[1..].iter().product();
    let rows: Vec<ComplexAcc> = (0..sizes[0])
        .into_par_iter()
        .map(|m0| {
            let mut acc = ComplexAcc::new();
            let mut m = vec![0i128; k];
            m[0] = m0 as i128;
            for idx in 0..inner {
                let mut rest = idx;
                for j in 1..k {
                    m[j] = (rest % sizes[j]) as i128;
                    rest /= sizes[j];
                }
                let mut f = ComplexAcc::new();
                for u in 0..=top as usize {
                    let mut t = 0.0;
                    for j in 0..k {
                        let n = sizes[j] as i128;
                        t += (m[j] * powers[j][u] % n) as f64 / n as f64;
                    }
                    f.push(phase(frac(t)));
                }
                let mut t = 0.0;
                for j in 0..k {
                    let n = sizes[j] as i128;
                    t += (m[j] * h_res[j] % n) as f64 / n as f64;
                }
                acc.push(f.value().powu(s as u32) * phase(frac(-t)));
            }
            acc
        })
        .collect();
    let mut total = ComplexAcc::new();
    for r in &rows {
        total.combine(r);
    }
    Ok(total.value() / points.expect("checked above") as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::{count_mitm, count_naive};
    use crate::domain::{SystemParams, Target};

    fn brute_moment(u: usize, k: usize, x: i64) -> u64 {
        // Pairs of u-tuples in [0, x] with equal power sums, by direct
        // enumeration of all 2u-tuples.
        let n = (x + 1) as usize;
        let total = n.pow(2 * u as u32);
        let mut count = 0;
        for idx in 0..total {
            let mut rest = idx;
            let mut sums = vec![0i64; k];
            for i in 0..2 * u {
                let v = (rest % n) as i64;
                rest /= n;
                let sign = if i < u { 1 } else { -1 };
                let mut p = 1;
                for s in sums.iter_mut() {
                    p *= v;
                    *s += sign * p;
                }
            }
            if sums.iter().all(|&s| s == 0) {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn second_moment_counts_diagonal() {
        for x in [0.0, 3.0, 7.5, 20.0] {
            let m = restricted_moment(2, 3, &Region::Full, x, &McOptions::default()).unwrap();
            assert!(m.exact);
            assert_eq!(m.value, x.floor() + 1.0);
        }
    }

    #[test]
    fn full_moment_matches_enumeration() {
        // t = 2w with w = 3 for k = 2.
        let m = restricted_moment(6, 2, &Region::Full, 5.0, &McOptions::default()).unwrap();
        assert_eq!(m.value, brute_moment(3, 2, 5) as f64);
        let m = restricted_moment(4, 2, &Region::Full, 9.0, &McOptions::default()).unwrap();
        assert_eq!(m.value, brute_moment(2, 2, 9) as f64);
    }

    #[test]
    fn empty_region_is_zero() {
        let opts = McOptions::default();
        for t in [1, 2, 5] {
            let m = restricted_moment(t, 2, &Region::Empty, 10.0, &opts).unwrap();
            assert_eq!(m.value, 0.0);
        }
        let e = restricted_representation_integral(3, &[3, 3], &Region::Empty, 4.0, &opts).unwrap();
        assert_eq!(e.value, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn monte_carlo_second_moment() {
        let x = 30.0;
        let opts = McOptions {
            samples: 40_000,
            seed: 5,
            method: IntegrationMethod::MonteCarlo,
            ..Default::default()
        };
        let full = restricted_moment(2, 2, &Region::Full, x, &opts).unwrap();
        assert!(
            (full.value - 31.0).abs() < 3.0 * full.half_width,
            "{full:?}"
        );
        // Major and minor parts add up to the whole.
        let major = restricted_moment(2, 2, &Region::Major { q_bound: 4.0 }, x, &opts).unwrap();
        let minor = restricted_moment(2, 2, &Region::Minor { q_bound: 4.0 }, x, &opts).unwrap();
        let sum = major.value + minor.value;
        let hw = major.half_width + minor.half_width;
        assert!((sum - 31.0).abs() < 3.0 * hw, "{sum} +- {hw}");
        assert!(major.value > 0.0 && minor.value > 0.0);
    }

    #[test]
    fn lattice_matches_counts() {
        let p3 = SystemParams::pure(3, 2).unwrap();
        let t = Target::new(vec![3, 3]).unwrap();
        let naive = count_naive(&p3, &t, CountBox::new(0, 4).unwrap(), 1 << 30)
            .unwrap()
            .count;
        let e = restricted_representation_integral(
            3,
            &[3, 3],
            &Region::Full,
            4.0,
            &McOptions::default(),
        )
        .unwrap();
        assert!(e.exact);
        assert_eq!(naive, 1);
        assert!((e.value.re - 1.0).abs() < 1e-6 && e.value.im.abs() < 1e-6);

        let p4 = SystemParams::pure(4, 2).unwrap();
        for h in [[0i64, 0], [6, 14], [10, 30], [12, 50], [5, 7]] {
            let t = Target::new(h.to_vec()).unwrap();
            let c = count_mitm(&p4, &t, CountBox::new(0, 6).unwrap(), 1 << 30)
                .unwrap()
                .count;
            let v = lattice_representation_integral(4, &h, 6.0, None, 1 << 32).unwrap();
            assert!((v.re - c as f64).abs() < 1e-6, "h={h:?}: {v} vs {c}");
            assert!(v.im.abs() < 1e-6);
        }
    }

    #[test]
    fn unreachable_target_integrates_to_zero() {
        let v = lattice_representation_integral(3, &[13, 20], 4.0, None, 1 << 32).unwrap();
        assert!(v.norm() < 1e-8);
    }

    #[test]
    fn undersized_lattice_is_aliased() {
        let err =
            lattice_representation_integral(3, &[3, 3], 4.0, Some(&[13, 20]), 1 << 32).unwrap_err();
        assert_eq!(
            err,
            HkError::Aliasing {
                points: 20,
                required: 46
            }
        );
        assert_eq!(lattice_requirements(3, &[3, 3], 4.0).unwrap(), vec![10, 46]);
        assert!(lattice_representation_integral(3, &[3, 3], 4.0, Some(&[13, 46]), 1 << 32).is_ok());
        assert!(matches!(
            lattice_representation_integral(3, &[3, 3], 4.0, None, 100),
            Err(HkError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn dilation_membership() {
        let x = 100.0;
        let minor = Region::Minor { q_bound: 4.0 };
        let d = minor.dilate(3);
        // 3 * (1/2 + tiny) lands near 1/2: the preimage near 1/6 is minor.
        assert!(d.contains(&[0.0, 0.5], x).unwrap());
        assert_eq!(Region::Full.dilate(4), Region::Full);
        let class = Region::Class {
            kind: ArcKind::W1,
            dissection: DissectionParams::new(100.0, 2).unwrap(),
        };
        assert!(class.dilate(2).contains(&[0.1, 0.2], x).is_err());
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let opts = McOptions {
            samples: 3000,
            seed: 9,
            method: IntegrationMethod::MonteCarlo,
            ..Default::default()
        };
        let a = restricted_moment(3, 2, &Region::Minor { q_bound: 2.0 }, 12.0, &opts).unwrap();
        let b = restricted_moment(3, 2, &Region::Minor { q_bound: 2.0 }, 12.0, &opts).unwrap();
        assert_eq!(a, b);
    }
}
