//! Exact enumeration of solutions of power-sum systems.
//!
//! Two independent engines are provided. [`count_naive`] walks ordered
//! tuples with residual pruning; [`count_mitm`] splits the variables into two
//! halves, tabulates the power-sum vectors of one half in a [`Histogram`] and
//! joins the other half against it. [`vinogradov_count`] reuses the histogram
//! to compute `J_{t,k}(X) = sum_m r(m)^2`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{ls_slope, multiplicity_of_sorted};
use crate::domain::{SystemParams, Target};
use crate::error::{HkError, Result};

/// Inclusive per-variable range `lower <= x_i <= upper`.
///
/// The pure system traditionally allows `x_i >= 0`, the mixed-sign theory
/// uses `1 <= x_i <= X`; both are expressed by choosing `lower`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountBox {
    pub lower: i64,
    pub upper: i64,
}

impl CountBox {
    pub fn new(lower: i64, upper: i64) -> Result<Self> {
        if lower > upper {
            return Err(HkError::invalid(format!("empty box [{lower}, {upper}]")));
        }
        Ok(CountBox { lower, upper })
    }

    /// `[0, n_1]` for the pure system, where `sum x_i = n_1` forces
    /// `x_i <= n_1`. Other variants have no implied bound.
    pub fn implied(params: &SystemParams, target: &Target) -> Result<Self> {
        if !params.is_pure() {
            return Err(HkError::invalid(
                "an explicit box is mandatory for mixed-sign and weighted systems",
            ));
        }
        CountBox::new(0, target.n()[0].max(0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountMethod {
    Naive,
    MeetInMiddle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountResult {
    /// Number of ordered tuples.
    pub count: u128,
    pub method: CountMethod,
    /// Nodes visited (naive) or half-tuples enumerated (meet-in-the-middle).
    pub work: u64,
    pub elapsed: f64,
}

/// Exact power-sum vector of a half tuple. Equality and hashing use the full
/// vector, so distinct keys never merge.
pub type PowerSumKey = Box<[i64]>;

fn check_shapes(params: &SystemParams, target: &Target) -> Result<()> {
    if target.k() != params.k() {
        return Err(HkError::invalid(format!(
            "target has {} entries but k = {}",
            target.k(),
            params.k()
        )));
    }
    Ok(())
}

/// `x^j` for `j = 1..=k`, checked against `i64`.
fn powers(x: i64, k: usize) -> Result<Vec<i64>> {
    let mut out = Vec::with_capacity(k);
    let mut p: i64 = 1;
    for _ in 0..k {
        p = p.checked_mul(x).ok_or(HkError::Overflow("power"))?;
        out.push(p);
    }
    Ok(out)
}

fn power_table(bounds: CountBox, k: usize) -> Result<Vec<Vec<i64>>> {
    (bounds.lower..=bounds.upper)
        .map(|x| powers(x, k))
        .collect()
}

struct NaiveWalk<'a> {
    coeffs: &'a [i64],
    table: &'a [Vec<i64>],
    bounds: CountBox,
    prune: bool,
    budget: u64,
    work: u64,
}

impl NaiveWalk<'_> {
    fn walk(&mut self, depth: usize, residual: &mut [i64]) -> Result<u128> {
        self.work += 1;
        if self.work > self.budget {
            return Err(HkError::budget(self.budget, self.work, "naive enumeration"));
        }
        let s = self.coeffs.len();
        if depth == s {
            return Ok(residual.iter().all(|&r| r == 0) as u128);
        }
        let rem = (s - depth) as i64;
        if self.prune {
            // Residual first moment must be reachable by the remaining
            // variables, and no residual moment may go negative.
            let lo = rem * self.bounds.lower;
            let hi = rem * self.bounds.upper;
            if residual[0] < lo || residual[0] > hi || residual.iter().any(|&r| r < 0) {
                return Ok(0);
            }
        }
        let c = self.coeffs[depth];
        let mut total = 0u128;
        for (offset, pw) in self.table.iter().enumerate() {
            let x = self.bounds.lower + offset as i64;
            if self.prune && x > residual[0] {
                break;
            }
            for (r, p) in residual.iter_mut().zip(pw) {
                *r -= c * p;
            }
            let sub = self.walk(depth + 1, residual);
            for (r, p) in residual.iter_mut().zip(pw) {
                *r += c * p;
            }
            total += sub?;
        }
        Ok(total)
    }
}

/// Ordered tuples in the box solving the system, by direct enumeration.
///
/// For the pure system with a non-negative box the recursion prunes branches
/// whose residual moments are negative or whose residual first moment lies
/// outside what the remaining variables can reach.
pub fn count_naive(
    params: &SystemParams,
    target: &Target,
    bounds: CountBox,
    budget: u64,
) -> Result<CountResult> {
    check_shapes(params, target)?;
    let start = Instant::now();
    let table = power_table(bounds, params.k())?;
    let coeffs = params.coefficients();
    let mut walk = NaiveWalk {
        coeffs: &coeffs,
        table: &table,
        bounds,
        prune: params.is_pure() && bounds.lower >= 0,
        budget,
        work: 0,
    };
    let mut residual = target.n().to_vec();
    let count = walk.walk(0, &mut residual)?;
    Ok(CountResult {
        count,
        method: CountMethod::Naive,
        work: walk.work,
        elapsed: start.elapsed().as_secs_f64(),
    })
}

/// Histogram of power-sum vectors over the ordered tuples of a group of
/// variables, stored as canonical representatives with multiplicities.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Histogram {
    k: usize,
    map: HashMap<PowerSumKey, u64>,
    work: u64,
}

/// Canonical enumeration of tuples: within each run of equal coefficients
/// the variables are non-decreasing and weighted by the multinomial count of
/// their orderings.
struct CanonicalWalk<'a> {
    coeffs: &'a [i64],
    table: &'a [Vec<i64>],
    /// Entries of any completed key must not exceed this (pure pruning).
    cap: Option<&'a [i64]>,
    budget: u64,
    work: u64,
}

impl CanonicalWalk<'_> {
    fn walk<F>(
        &mut self,
        depth: usize,
        start: usize,
        chosen: &mut Vec<i64>,
        key: &mut [i64],
        emit: &mut F,
    ) -> Result<()>
    where
        F: FnMut(&[i64], u64),
    {
        if depth == self.coeffs.len() {
            self.work += 1;
            if self.work > self.budget {
                return Err(HkError::budget(
                    self.budget,
                    self.work,
                    "half-tuple enumeration; try a smaller box or an external-memory join",
                ));
            }
            emit(key, self.multiplicity(chosen));
            return Ok(());
        }
        let c = self.coeffs[depth];
        let from = if depth > 0 && self.coeffs[depth - 1] == c {
            start
        } else {
            0
        };
        for idx in from..self.table.len() {
            let pw = &self.table[idx];
            for (slot, p) in key.iter_mut().zip(pw) {
                *slot += c * p;
            }
            let over = self
                .cap
                .is_some_and(|cap| key.iter().zip(cap).any(|(v, m)| v > m));
            if !over {
                chosen.push(idx as i64);
                let res = self.walk(depth + 1, idx, chosen, key, emit);
                chosen.pop();
                res?;
            }
            for (slot, p) in key.iter_mut().zip(pw) {
                *slot -= c * p;
            }
            // Powers are increasing in x, so once over the cap stay over.
            if over {
                break;
            }
        }
        Ok(())
    }

    fn multiplicity(&self, chosen: &[i64]) -> u64 {
        let mut m: u128 = 1;
        let mut i = 0;
        while i < chosen.len() {
            let mut j = i + 1;
            while j < chosen.len() && self.coeffs[j] == self.coeffs[i] {
                j += 1;
            }
            m *= multiplicity_of_sorted(&chosen[i..j]);
            i = j;
        }
        m as u64
    }
}

fn sorted_coeffs(coeffs: &[i64]) -> Vec<i64> {
    let mut c = coeffs.to_vec();
    c.sort_unstable();
    c
}

fn cap_allowed(coeffs: &[i64], bounds: CountBox) -> bool {
    coeffs.iter().all(|&c| c > 0) && bounds.lower >= 0
}

impl Histogram {
    /// Tabulates `sum_i c_i x_i^j` over all ordered tuples in the box.
    /// When every coefficient is positive and `cap` is given, tuples whose
    /// key exceeds `cap` in some coordinate are skipped.
    pub fn build(
        coeffs: &[i64],
        k: usize,
        bounds: CountBox,
        cap: Option<&[i64]>,
        budget: u64,
    ) -> Result<Self> {
        let coeffs = sorted_coeffs(coeffs);
        let table = power_table(bounds, k)?;
        let cap = cap.filter(|_| cap_allowed(&coeffs, bounds));
        if coeffs.is_empty() {
            let mut map = HashMap::new();
            map.insert(vec![0i64; k].into_boxed_slice(), 1);
            return Ok(Histogram { k, map, work: 1 });
        }
        // Partition by the leading coordinate; partial maps are merged in
        // increasing order of that coordinate.
        let parts: Vec<Result<(HashMap<PowerSumKey, u64>, u64)>> = (0..table.len())
            .into_par_iter()
            .map(|lead| {
                let mut map: HashMap<PowerSumKey, u64> = HashMap::new();
                let mut key: Vec<i64> = table[lead].iter().map(|p| coeffs[0] * p).collect();
                if cap.is_some_and(|c| key.iter().zip(c).any(|(v, m)| v > m)) {
                    return Ok((map, 0));
                }
                let mut walk = CanonicalWalk {
                    coeffs: &coeffs,
                    table: &table,
                    cap,
                    budget,
                    work: 0,
                };
                let mut chosen = vec![lead as i64];
                walk.walk(1, lead, &mut chosen, &mut key, &mut |key, m| {
                    *map.entry(key.into()).or_insert(0) += m;
                })?;
                Ok((map, walk.work))
            })
            .collect();
        let mut map: HashMap<PowerSumKey, u64> = HashMap::new();
        let mut work = 0;
        for part in parts {
            let (m, w) = part?;
            work += w;
            if work > budget {
                return Err(HkError::budget(budget, work, "histogram build"));
            }
            for (key, count) in m {
                *map.entry(key).or_insert(0) += count;
            }
        }
        Ok(Histogram { k, map, work })
    }

    pub fn get(&self, key: &[i64]) -> u64 {
        self.map.get(key).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn work(&self) -> u64 {
        self.work
    }

    /// Total mass: the number of ordered tuples tabulated.
    pub fn total(&self) -> u128 {
        self.map.values().map(|&v| v as u128).sum()
    }

    /// `sum_m r(m)^2`.
    pub fn sum_of_squares(&self) -> u128 {
        self.map.values().map(|&v| (v as u128) * (v as u128)).sum()
    }

    /// Records sorted by key.
    pub fn sorted_records(&self) -> Vec<(PowerSumKey, u64)> {
        let mut v: Vec<_> = self.map.iter().map(|(k, c)| (k.clone(), *c)).collect();
        v.sort_unstable();
        v
    }

    /// Writes the spill format: records sorted by key, each consisting of
    /// `k` little-endian `i64` key entries followed by a little-endian `u64`
    /// count. There is no header.
    pub fn write_spill(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (key, count) in self.sorted_records() {
            for v in key.iter() {
                out.write_all(&v.to_le_bytes())?;
            }
            out.write_all(&count.to_le_bytes())?;
        }
        out.flush()
    }

    pub fn read_spill(path: &Path, k: usize) -> std::io::Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let rec = 8 * (k + 1);
        if bytes.len() % rec != 0 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("spill length {} is not a multiple of {rec}", bytes.len()),
            ));
        }
        let word = |c: &[u8]| <[u8; 8]>::try_from(c).expect("8-byte chunk");
        let mut map = HashMap::new();
        for chunk in bytes.chunks_exact(rec) {
            let key: PowerSumKey = chunk[..8 * k]
                .chunks_exact(8)
                .map(|c| i64::from_le_bytes(word(c)))
                .collect();
            let count = u64::from_le_bytes(word(&chunk[8 * k..]));
            *map.entry(key).or_insert(0) += count;
        }
        Ok(Histogram { k, map, work: 0 })
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// Meet-in-the-middle count. The first `ceil(s/2)` variables are scanned;
/// the remaining `floor(s/2)` are tabulated.
pub fn count_mitm(
    params: &SystemParams,
    target: &Target,
    bounds: CountBox,
    budget: u64,
) -> Result<CountResult> {
    check_shapes(params, target)?;
    let start = Instant::now();
    let k = params.k();
    let coeffs = params.coefficients();
    let s1 = params.s().div_ceil(2);
    let (scan_half, map_half) = coeffs.split_at(s1);
    // Pruning against the target is only sound when neither half can
    // contribute negatively.
    let cap = Some(target.n()).filter(|_| cap_allowed(&coeffs, bounds));
    let table = Histogram::build(map_half, k, bounds, cap, budget)?;

    let scan_coeffs = sorted_coeffs(scan_half);
    let powers = power_table(bounds, k)?;
    let n = target.n();
    let mut walk = CanonicalWalk {
        coeffs: &scan_coeffs,
        table: &powers,
        cap,
        budget,
        work: 0,
    };
    let mut key = vec![0i64; k];
    let mut need = vec![0i64; k];
    let mut count: u128 = 0;
    walk.walk(0, 0, &mut Vec::new(), &mut key, &mut |key, m| {
        for ((slot, nj), kj) in need.iter_mut().zip(n).zip(key) {
            *slot = nj - kj;
        }
        let hit = table.get(&need);
        if hit > 0 {
            count += m as u128 * hit as u128;
        }
    })?;
    Ok(CountResult {
        count,
        method: CountMethod::MeetInMiddle,
        work: walk.work + table.work(),
        elapsed: start.elapsed().as_secs_f64(),
    })
}

/// Number of solutions counted up to reordering within each block of equal
/// coefficients.
pub fn count_unordered(
    params: &SystemParams,
    target: &Target,
    bounds: CountBox,
    budget: u64,
) -> Result<u128> {
    check_shapes(params, target)?;
    let coeffs = sorted_coeffs(&params.coefficients());
    let powers = power_table(bounds, params.k())?;
    let mut walk = CanonicalWalk {
        coeffs: &coeffs,
        table: &powers,
        cap: Some(target.n()).filter(|_| cap_allowed(&coeffs, bounds)),
        budget,
        work: 0,
    };
    let mut key = vec![0i64; params.k()];
    let mut count = 0u128;
    walk.walk(0, 0, &mut Vec::new(), &mut key, &mut |key, _| {
        if key == target.n() {
            count += 1;
        }
    })?;
    Ok(count)
}

/// Histogram of `(sum x_i, ..., sum x_i^k)` over `t`-tuples with
/// `lower <= x_i <= upper`.
pub fn moment_histogram(t: usize, k: usize, bounds: CountBox, budget: u64) -> Result<Histogram> {
    Histogram::build(&vec![1; t], k, bounds, None, budget)
}

/// `J_{t,k}(X)`: pairs of `t`-tuples in `[1, X]` with equal power sums of
/// degrees `1..=k`.
pub fn vinogradov_count(t: usize, k: usize, x: u64, budget: u64) -> Result<u128> {
    if t == 0 || k == 0 {
        return Err(HkError::invalid("t and k must be positive"));
    }
    if x == 0 {
        return Ok(0);
    }
    let hist = moment_histogram(t, k, CountBox::new(1, x as i64)?, budget)?;
    Ok(hist.sum_of_squares())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MvtRow {
    pub x: u64,
    pub j: u128,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MvtScaling {
    pub t: usize,
    pub k: usize,
    pub rows: Vec<MvtRow>,
    /// Least-squares slope of `log J` against `log X`.
    pub slope: f64,
    /// `2t - k(k+1)/2`, the exponent of the conjectured bound above the
    /// critical point.
    pub critical_exponent: f64,
    /// `t`, the diagonal exponent that dominates below the critical point.
    pub diagonal_exponent: f64,
}

pub fn mvt_scaling_experiment(t: usize, k: usize, xs: &[u64], budget: u64) -> Result<MvtScaling> {
    if xs.len() < 3 {
        return Err(HkError::invalid("scaling fit needs at least 3 values of X"));
    }
    let rows = xs
        .iter()
        .map(|&x| {
            Ok(MvtRow {
                x,
                j: vinogradov_count(t, k, x, budget)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let lx: Vec<f64> = rows.iter().map(|r| (r.x as f64).ln()).collect();
    let lj: Vec<f64> = rows.iter().map(|r| (r.j as f64).ln()).collect();
    Ok(MvtScaling {
        t,
        k,
        slope: ls_slope(&lx, &lj),
        critical_exponent: 2.0 * t as f64 - (k * (k + 1) / 2) as f64,
        diagonal_exponent: t as f64,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BUDGET: u64 = 50_000_000;

    fn pure(s: usize, k: usize) -> SystemParams {
        SystemParams::pure(s, k).unwrap()
    }

    fn both(params: &SystemParams, n: Vec<i64>, b: CountBox) -> (u128, u128) {
        let t = Target::new(n).unwrap();
        (
            count_naive(params, &t, b, BUDGET).unwrap().count,
            count_mitm(params, &t, b, BUDGET).unwrap().count,
        )
    }

    #[test]
    fn small_examples() {
        let t = Target::new(vec![3, 3]).unwrap();
        let p = pure(3, 2);
        let b = CountBox::implied(&p, &t).unwrap();
        assert_eq!(count_naive(&p, &t, b, BUDGET).unwrap().count, 1);
        assert_eq!(count_mitm(&p, &t, b, BUDGET).unwrap().count, 1);

        let p = pure(2, 2);
        assert_eq!(both(&p, vec![2, 2], CountBox::new(0, 2).unwrap()), (1, 1));

        let p = pure(2, 1);
        assert_eq!(both(&p, vec![5], CountBox::new(0, 5).unwrap()), (6, 6));

        // Holder-infeasible: n_1 = 1 < sqrt(n_2) = 2.
        let p = pure(3, 2);
        assert_eq!(both(&p, vec![1, 4], CountBox::new(0, 4).unwrap()), (0, 0));

        let p = pure(4, 2);
        let (a, b) = both(&p, vec![4, 4], CountBox::new(0, 4).unwrap());
        assert_eq!(a, b);
        assert_eq!(a, 1);
    }

    #[test]
    fn zero_target_has_one_solution() {
        for (s, k) in [(1, 2), (3, 3), (5, 2)] {
            let p = pure(s, k);
            assert_eq!(both(&p, vec![0; k], CountBox::new(0, 3).unwrap()), (1, 1));
        }
    }

    #[test]
    fn mixed_sign_requires_box() {
        let p = SystemParams::mixed_sign(2, 1, 2).unwrap();
        let t = Target::new(vec![1, 1]).unwrap();
        assert!(CountBox::implied(&p, &t).is_err());
        // x1 + x2 - x3 = 1, x1^2 + x2^2 - x3^2 = 1 on [0,4]^3.
        let b = CountBox::new(0, 4).unwrap();
        let naive = count_naive(&p, &t, b, BUDGET).unwrap().count;
        let mut brute = 0;
        for x1 in 0..=4i64 {
            for x2 in 0..=4 {
                for x3 in 0..=4 {
                    if x1 + x2 - x3 == 1 && x1 * x1 + x2 * x2 - x3 * x3 == 1 {
                        brute += 1;
                    }
                }
            }
        }
        assert_eq!(naive, brute);
        assert_eq!(count_mitm(&p, &t, b, BUDGET).unwrap().count, brute);
    }

    #[test]
    fn budget_is_enforced() {
        let p = pure(6, 2);
        let t = Target::new(vec![30, 200]).unwrap();
        let err = count_naive(&p, &t, CountBox::new(0, 30).unwrap(), 100).unwrap_err();
        assert!(matches!(err, HkError::BudgetExceeded { work: 101, .. }));
        assert!(count_mitm(&p, &t, CountBox::new(0, 30).unwrap(), 10).is_err());
    }

    #[test]
    fn unordered_counts() {
        // x1+x2+x3 = 6, squares = 14: {1,2,3} in 6 orders.
        let p = pure(3, 2);
        let t = Target::new(vec![6, 14]).unwrap();
        let b = CountBox::new(0, 6).unwrap();
        assert_eq!(count_unordered(&p, &t, b, BUDGET).unwrap(), 1);
        assert_eq!(count_naive(&p, &t, b, BUDGET).unwrap().count, 6);
    }

    fn brute_vinogradov(t: usize, k: usize, x: i64) -> u128 {
        let tuples: Vec<Vec<i64>> = (0..(x as usize).pow(2 * t as u32))
            .map(|mut code| {
                (0..2 * t)
                    .map(|_| {
                        let v = (code % x as usize) as i64 + 1;
                        code /= x as usize;
                        v
                    })
                    .collect()
            })
            .collect();
        tuples
            .iter()
            .filter(|v| {
                (1..=k as u32).all(|j| {
                    v[..t].iter().map(|a| a.pow(j)).sum::<i64>()
                        == v[t..].iter().map(|a| a.pow(j)).sum::<i64>()
                })
            })
            .count() as u128
    }

    #[test]
    fn vinogradov_examples() {
        for k in 1..5 {
            for x in [1, 5, 17] {
                assert_eq!(vinogradov_count(1, k, x, BUDGET).unwrap(), x as u128);
            }
        }
        assert_eq!(brute_vinogradov(2, 1, 4), 44);
        assert_eq!(vinogradov_count(2, 1, 4, BUDGET).unwrap(), 44);
        assert_eq!(brute_vinogradov(2, 3, 6), 66);
        assert_eq!(vinogradov_count(2, 3, 6, BUDGET).unwrap(), 66);
        assert_eq!(
            vinogradov_count(3, 2, 5, BUDGET).unwrap(),
            brute_vinogradov(3, 2, 5)
        );
    }

    #[test]
    fn histogram_mass_is_conserved() {
        let h = moment_histogram(3, 2, CountBox::new(1, 9).unwrap(), BUDGET).unwrap();
        assert_eq!(h.total(), 9u128.pow(3));
        assert!(h.sum_of_squares() >= 9u128.pow(3));
    }

    #[test]
    fn spill_roundtrip() {
        let h = moment_histogram(2, 3, CountBox::new(0, 6).unwrap(), BUDGET).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.bin");
        h.write_spill(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), h.len() * 32);
        // First record is the smallest key, (0,0,0) from the tuple (0,0).
        assert_eq!(&bytes[..24], &[0u8; 24]);
        assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 1);
        let back = Histogram::read_spill(&path, 3).unwrap();
        assert_eq!(back.sorted_records(), h.sorted_records());
    }

    #[test]
    fn mvt_needs_three_points() {
        assert!(mvt_scaling_experiment(2, 2, &[4, 8], BUDGET).is_err());
        let r = mvt_scaling_experiment(1, 3, &[4, 8, 16], BUDGET).unwrap();
        assert!((r.slope - 1.0).abs() < 0.01);
        let r = mvt_scaling_experiment(2, 2, &[8, 16, 32, 64], BUDGET).unwrap();
        // 2X^2 - X exactly.
        for row in &r.rows {
            assert_eq!(row.j, 2 * (row.x as u128).pow(2) - row.x as u128);
        }
        assert!((r.slope - 2.0).abs() < 0.05);
    }
}
