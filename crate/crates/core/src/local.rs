//! Local solubility: the Hölder interval for the pure system, Fermat
//! congruences, non-singular p-adic witnesses found by lifting, and
//! non-singular positive real witnesses found by Newton's method.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Pow, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{is_prime, pow_mod, primes_up_to};
use crate::domain::{SystemParams, Target};
use crate::error::{HkError, Result};

/// Both Hölder inequalities for one pair `j < l`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolderPair {
    pub j: usize,
    pub l: usize,
    /// `n_l^j <= n_j^l`.
    pub lower: bool,
    /// `n_j^l <= s^{l-j} n_l^j`.
    pub upper: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolderReport {
    pub nonnegative: bool,
    pub pairs: Vec<HolderPair>,
    pub ok: bool,
}

/// Hölder's necessary conditions `n_l^{j/l} <= n_j <= s^{1-j/l} n_l^{j/l}`
/// for non-negative solutions of the pure system, in exact integer form.
pub fn holder_necessary(target: &Target, s: usize) -> HolderReport {
    let n = target.n();
    let nonnegative = n.iter().all(|&v| v >= 0);
    let mut pairs = Vec::new();
    let big = |v: i64| BigInt::from(v);
    for l in 2..=n.len() {
        for j in 1..l {
            let nj = big(n[j - 1]);
            let nl = big(n[l - 1]);
            let nl_j: BigInt = Pow::pow(&nl, j as u32);
            let nj_l: BigInt = Pow::pow(&nj, l as u32);
            let s_pow: BigInt = Pow::pow(&BigInt::from(s), (l - j) as u32);
            pairs.push(HolderPair {
                j,
                l,
                lower: nl_j <= nj_l,
                upper: nj_l <= s_pow * nl_j,
            });
        }
    }
    let ok = nonnegative && pairs.iter().all(|p| p.lower && p.upper);
    HolderReport {
        nonnegative,
        pairs,
        ok,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FermatCheck {
    pub p: u64,
    /// Pairs `(j, l)` with `l = j mod (p - 1)` and `n_l != n_j mod p`.
    pub violations: Vec<(usize, usize)>,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FermatReport {
    pub checks: Vec<FermatCheck>,
    pub ok: bool,
}

/// `n_l = n_j mod p` whenever `l = j mod (p - 1)`, for every prime `p <= k`
/// (larger primes give no pair).
pub fn fermat_congruences(target: &Target) -> FermatReport {
    let n = target.n();
    let k = n.len();
    let checks: Vec<FermatCheck> = primes_up_to(k as u64)
        .into_iter()
        .map(|p| {
            let period = (p - 1) as usize;
            let mut violations = Vec::new();
            for l in 2..=k {
                for j in 1..l {
                    if (l - j) % period == 0 && (n[l - 1] - n[j - 1]).rem_euclid(p as i64) != 0 {
                        violations.push((j, l));
                    }
                }
            }
            FermatCheck {
                p,
                ok: violations.is_empty(),
                violations,
            }
        })
        .collect();
    let ok = checks.iter().all(|c| c.ok);
    FermatReport { checks, ok }
}

/// Field for [`jacobian_rank`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Field {
    Rationals,
    Prime(u64),
}

/// Number of distinct values among `x`, reduced mod `p` for a prime field.
pub fn distinct_count(x: &[i64], field: Field) -> usize {
    let mut v: Vec<i64> = match field {
        Field::Rationals => x.to_vec(),
        Field::Prime(p) => x.iter().map(|xi| xi.rem_euclid(p as i64)).collect(),
    };
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// Rank of the `k x s` matrix `M_{j,i} = j x_i^{j-1}`.
///
/// In characteristic zero or `p > k` the matrix is `diag(1..k)` times a
/// Vandermonde matrix and the rank is `min(k, #distinct x_i)`; for `p <= k`
/// the rank is found by elimination.
pub fn jacobian_rank(x: &[i64], k: usize, field: Field) -> Result<usize> {
    match field {
        Field::Prime(p) if !is_prime(p) => Err(HkError::invalid(format!("{p} is not prime"))),
        Field::Prime(p) if p as usize <= k => jacobian_rank_eliminate(x, k, field),
        _ => Ok(k.min(distinct_count(x, field))),
    }
}

/// Rank of `M_{j,i} = j x_i^{j-1}` by Gaussian elimination, with no
/// structural shortcut.
pub fn jacobian_rank_eliminate(x: &[i64], k: usize, field: Field) -> Result<usize> {
    match field {
        Field::Rationals => {
            let mut m: Vec<Vec<BigRational>> = (1..=k)
                .map(|j| {
                    x.iter()
                        .map(|&xi| {
                            let v = BigInt::from(j) * Pow::pow(&BigInt::from(xi), (j - 1) as u32);
                            BigRational::from_integer(v)
                        })
                        .collect()
                })
                .collect();
            Ok(rank_rational(&mut m))
        }
        Field::Prime(p) => {
            if !is_prime(p) {
                return Err(HkError::invalid(format!("{p} is not prime")));
            }
            let p = p as i128;
            let mut m: Vec<Vec<i128>> = (1..=k)
                .map(|j| {
                    x.iter()
                        .map(|&xi| j as i128 % p * pow_mod(xi as i128, (j - 1) as u32, p) % p)
                        .collect()
                })
                .collect();
            Ok(rank_mod_p(&mut m, p))
        }
    }
}

fn rank_rational(m: &mut [Vec<BigRational>]) -> usize {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(piv) = (rank..rows).find(|&r| !m[r][c].is_zero()) else {
            continue;
        };
        m.swap(rank, piv);
        for r in rank + 1..rows {
            if m[r][c].is_zero() {
                continue;
            }
            let f = &m[r][c] / &m[rank][c];
            for cc in c..cols {
                let d = &f * &m[rank][cc];
                m[r][cc] -= d;
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

fn inv_mod(a: i128, m: i128) -> Option<i128> {
    let (mut r0, mut r1) = (m, a.rem_euclid(m));
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    (r0 == 1).then(|| t0.rem_euclid(m))
}

fn rank_mod_p(m: &mut [Vec<i128>], p: i128) -> usize {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(piv) = (rank..rows).find(|&r| m[r][c] % p != 0) else {
            continue;
        };
        m.swap(rank, piv);
        let inv = inv_mod(m[rank][c], p).expect("nonzero mod prime is invertible");
        for r in rank + 1..rows {
            let f = m[r][c] * inv % p;
            if f == 0 {
                continue;
            }
            for cc in c..cols {
                m[r][cc] = (m[r][cc] - f * m[rank][cc]).rem_euclid(p);
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

/// Numerical rank of `M_{j,i} = j x_i^{j-1}` for real `x`, by elimination
/// with partial pivoting and a relative threshold.
pub fn jacobian_rank_real(x: &[f64], k: usize) -> usize {
    let mut m: Vec<Vec<f64>> = (1..=k)
        .map(|j| {
            x.iter()
                .map(|&xi| j as f64 * xi.powi(j as i32 - 1))
                .collect()
        })
        .collect();
    let scale = m
        .iter()
        .flatten()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let tol = 1e-10 * scale;
    let cols = x.len();
    let mut rank = 0;
    for c in 0..cols {
        let piv = (rank..k).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()));
        let Some(piv) = piv.filter(|&r| m[r][c].abs() > tol) else {
            continue;
        };
        m.swap(rank, piv);
        for r in rank + 1..k {
            let f = m[r][c] / m[rank][c];
            for cc in c..cols {
                m[r][cc] -= f * m[rank][cc];
            }
        }
        rank += 1;
        if rank == k {
            break;
        }
    }
    rank
}

/// Residues mod `p^gamma` solving the system, with the valuation `tau` of
/// the best `k x k` Jacobian minor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PadicWitness {
    pub p: u64,
    pub x: Vec<i64>,
    pub gamma: u32,
    pub tau: u32,
    /// Variables whose Jacobian columns realise `tau`.
    pub columns: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PadicOutcome {
    /// Primitive solution mod `p^gamma` with `2 tau < gamma`.
    Found { witness: PadicWitness, lifted: bool },
    /// Enumeration completed to `depth`. `solutions == 0` means there is no
    /// primitive solution modulo `p^depth` at all.
    NotFound { depth: u32, solutions: u64 },
    /// Budget exhausted before `depth_max`.
    Inconclusive { depth: u32, work: u64 },
}

impl PadicOutcome {
    pub fn is_found(&self) -> bool {
        matches!(self, PadicOutcome::Found { .. })
    }

    /// True when the search proved that no primitive solution exists.
    pub fn is_refuted(&self) -> bool {
        matches!(self, PadicOutcome::NotFound { solutions: 0, .. })
    }
}

/// `2 (1 + floor(log_p k)) + 3`.
pub fn default_depth(p: u64, k: usize) -> u32 {
    let mut log = 0;
    let mut v = p;
    while v <= k as u64 {
        log += 1;
        v *= p;
    }
    2 * (1 + log) + 3
}

/// Positions grouped into maximal runs of equal coefficients. Sorting values
/// within a run maps solutions to solutions.
fn coefficient_runs(coeffs: &[i64]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=coeffs.len() {
        if i == coeffs.len() || coeffs[i] != coeffs[start] {
            runs.push((start, i));
            start = i;
        }
    }
    runs
}

fn canonicalize(x: &mut [i64], runs: &[(usize, usize)]) {
    for &(a, b) in runs {
        x[a..b].sort_unstable();
    }
}

struct PadicSearch<'a> {
    p: i128,
    k: usize,
    coeffs: &'a [i64],
    n: &'a [i64],
    runs: Vec<(usize, usize)>,
    budget: u64,
    work: u64,
}

impl PadicSearch<'_> {
    fn charge(&mut self, w: u64) -> bool {
        self.work = self.work.saturating_add(w);
        self.work <= self.budget
    }

    /// `n_j - sum c_i x_i^j` reduced mod `m`, for `j = 1..=k`.
    fn residual(&self, x: &[i64], m: i128) -> Vec<i128> {
        (1..=self.k)
            .map(|j| {
                let f: i128 = x
                    .iter()
                    .zip(self.coeffs)
                    .map(|(&xi, &c)| c as i128 * pow_mod(xi as i128, j as u32, m))
                    .sum();
                (self.n[j - 1] as i128 - f).rem_euclid(m)
            })
            .collect()
    }

    /// Primitive solutions mod `p`, canonical within coefficient runs.
    fn base_level(&mut self) -> Option<Vec<Vec<i64>>> {
        let s = self.coeffs.len();
        let p = self.p as i64;
        let mut out = Vec::new();
        let mut x = vec![0i64; s];
        loop {
            if !self.charge(1) {
                return None;
            }
            if x.iter().any(|&v| v != 0) && self.residual(&x, self.p).iter().all(|&r| r == 0) {
                out.push(x.clone());
            }
            // Next tuple, non-decreasing inside each run.
            let mut i = s;
            loop {
                if i == 0 {
                    return Some(out);
                }
                i -= 1;
                if x[i] + 1 < p {
                    x[i] += 1;
                    let run = self.runs.iter().find(|r| r.0 <= i && i < r.1).unwrap();
                    for t in i + 1..s {
                        x[t] = if t < run.1 { x[i] } else { 0 };
                    }
                    break;
                }
            }
        }
    }

    /// Solutions mod `p^{gamma+1}` lying over `x`, a solution mod `p^gamma`.
    /// The lifting condition is linear in the new digit, so the lifts form an
    /// affine subspace of `F_p^s`.
    fn lifts(&mut self, x: &[i64], gamma: u32) -> Option<Vec<Vec<i64>>> {
        let s = x.len();
        let p = self.p;
        let pg = p.pow(gamma);
        let r = self.residual(x, pg * p);
        let mut rows: Vec<Vec<i128>> = (1..=self.k)
            .map(|j| {
                let mut row: Vec<i128> = x
                    .iter()
                    .zip(self.coeffs)
                    .map(|(&xi, &c)| {
                        (c as i128 * j as i128 % p * pow_mod(xi as i128, (j - 1) as u32, p))
                            .rem_euclid(p)
                    })
                    .collect();
                row.push((r[j - 1] / pg).rem_euclid(p));
                row
            })
            .collect();
        // Row-reduce the augmented system over F_p.
        let mut pivots = Vec::new();
        let mut rank = 0;
        for c in 0..s {
            let Some(piv) = (rank..rows.len()).find(|&i| rows[i][c] != 0) else {
                continue;
            };
            rows.swap(rank, piv);
            let inv = inv_mod(rows[rank][c], p).unwrap();
            for v in rows[rank].iter_mut() {
                *v = *v * inv % p;
            }
            for i in 0..rows.len() {
                if i != rank && rows[i][c] != 0 {
                    let f = rows[i][c];
                    for cc in 0..=s {
                        rows[i][cc] = (rows[i][cc] - f * rows[rank][cc]).rem_euclid(p);
                    }
                }
            }
            pivots.push(c);
            rank += 1;
        }
        if rows[rank..].iter().any(|row| row[s] != 0) {
            return Some(Vec::new());
        }
        let free: Vec<usize> = (0..s).filter(|c| !pivots.contains(c)).collect();
        let count = (p as u64).pow(free.len() as u32);
        if !self.charge(count) {
            return None;
        }
        let mut out = Vec::with_capacity(count as usize);
        let mut t = vec![0i128; s];
        for code in 0..count {
            let mut c = code;
            for &f in &free {
                t[f] = (c % p as u64) as i128;
                c /= p as u64;
            }
            for (i, &pc) in pivots.iter().enumerate() {
                let mut v = rows[i][s];
                for &f in &free {
                    v -= rows[i][f] * t[f];
                }
                t[pc] = v.rem_euclid(p);
            }
            let mut y: Vec<i64> = x
                .iter()
                .zip(&t)
                .map(|(&xi, &ti)| (xi as i128 + pg * ti) as i64)
                .collect();
            canonicalize(&mut y, &self.runs);
            out.push(y);
        }
        Some(out)
    }
}

/// Smallest valuation over `k x k` minors of the Jacobian at `x`, capped at
/// `cap`. A minor on columns `S` equals `k! prod c_i` times the Vandermonde
/// determinant of `x_S`, so its valuation is `v(k!) + v(prod c_i) + sum v(x_b - x_a)`.
pub fn minor_valuation(x: &[i64], coeffs: &[i64], k: usize, p: u64, cap: u32) -> (u32, Vec<usize>) {
    let vp = |mut v: i128| -> u32 {
        if v == 0 {
            return cap;
        }
        let mut e = 0;
        while v % p as i128 == 0 && e < cap {
            v /= p as i128;
            e += 1;
        }
        e
    };
    let fact: u32 = (2..=k as i128).map(vp).sum();
    let s = x.len();
    if k > s {
        return (cap, Vec::new());
    }
    let mut best = (cap, Vec::new());
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let mut v = fact;
        for (a, &ia) in idx.iter().enumerate() {
            v += vp(coeffs[ia] as i128);
            for &ib in &idx[a + 1..] {
                v += vp(x[ib] as i128 - x[ia] as i128);
            }
        }
        let v = v.min(cap);
        if v < best.0 || best.1.is_empty() {
            best = (v, idx.clone());
        }
        // Next k-subset in lexicographic order.
        let mut i = k;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < s - k + i {
                idx[i] += 1;
                for t in i + 1..k {
                    idx[t] = idx[t - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Search for a primitive solution mod `p^gamma` with a Jacobian minor of
/// valuation `tau < gamma / 2`, deepening `gamma = 1, 2, ..., depth_max`.
/// Such a solution lifts to a p-adic solution by Hensel's lemma.
pub fn padic_witness(
    target: &Target,
    params: &SystemParams,
    p: u64,
    depth_max: u32,
    budget: u64,
) -> Result<PadicOutcome> {
    if !is_prime(p) {
        return Err(HkError::invalid(format!("{p} is not prime")));
    }
    if depth_max == 0 {
        return Err(HkError::invalid("depth must be at least 1"));
    }
    if target.k() != params.k() {
        return Err(HkError::invalid("target length differs from k"));
    }
    // Keep p^{depth+1} products inside i128.
    if (depth_max as f64 + 1.0) * (p as f64).log2() > 60.0 {
        return Err(HkError::Overflow("p^depth exceeds 2^60"));
    }
    let coeffs = params.coefficients();
    let mut search = PadicSearch {
        p: p as i128,
        k: params.k(),
        coeffs: &coeffs,
        n: target.n(),
        runs: coefficient_runs(&coeffs),
        budget,
        work: 0,
    };
    let Some(mut frontier) = search.base_level() else {
        return Ok(PadicOutcome::Inconclusive {
            depth: 1,
            work: search.work,
        });
    };
    let mut gamma = 1;
    loop {
        frontier.sort_unstable();
        frontier.dedup();
        for x in &frontier {
            let (tau, columns) = minor_valuation(x, &coeffs, params.k(), p, gamma);
            if 2 * tau < gamma {
                let witness = PadicWitness {
                    p,
                    x: x.clone(),
                    gamma,
                    tau,
                    columns,
                };
                let lifted = refine(&witness, target, params)?.is_some();
                return Ok(PadicOutcome::Found { witness, lifted });
            }
        }
        if frontier.is_empty() || gamma == depth_max {
            return Ok(PadicOutcome::NotFound {
                depth: gamma,
                solutions: frontier.len() as u64,
            });
        }
        let mut next = Vec::new();
        for x in &frontier {
            match search.lifts(x, gamma) {
                Some(ys) => next.extend(ys),
                None => {
                    return Ok(PadicOutcome::Inconclusive {
                        depth: gamma + 1,
                        work: search.work,
                    })
                }
            }
        }
        frontier = next;
        gamma += 1;
    }
}

/// One Newton step from a witness: a solution mod `p^{gamma+1}` congruent
/// to the witness mod `p^{gamma - tau}`, or `None` if the witness does not
/// satisfy the Hensel condition.
pub fn refine(
    witness: &PadicWitness,
    target: &Target,
    params: &SystemParams,
) -> Result<Option<Vec<i64>>> {
    let PadicWitness {
        p,
        x,
        gamma,
        tau,
        columns,
    } = witness;
    if 2 * tau >= *gamma || columns.len() != params.k() {
        return Ok(None);
    }
    let k = params.k();
    let coeffs = params.coefficients();
    let m = BigInt::from(*p).pow(gamma + 1);
    // Residual over the integers at the representative x.
    let r: Vec<BigInt> = (1..=k)
        .map(|j| {
            let f: BigInt = x
                .iter()
                .zip(&coeffs)
                .map(|(&xi, &c)| BigInt::from(c) * Pow::pow(&BigInt::from(xi), j as u32))
                .sum();
            BigInt::from(target.n()[j - 1]) - f
        })
        .collect();
    // Solve J_S delta = r over the rationals.
    let mut a: Vec<Vec<BigRational>> = (1..=k)
        .map(|j| {
            let mut row: Vec<BigRational> = columns
                .iter()
                .map(|&i| {
                    let v = BigInt::from(coeffs[i] * j as i64)
                        * Pow::pow(&BigInt::from(x[i]), (j - 1) as u32);
                    BigRational::from_integer(v)
                })
                .collect();
            row.push(BigRational::from_integer(r[j - 1].clone()));
            row
        })
        .collect();
    let Some(delta) = solve_rational(&mut a) else {
        return Ok(None);
    };
    let pb = BigInt::from(*p);
    let mut y = x.clone();
    for (&i, d) in columns.iter().zip(&delta) {
        let den = d.denom();
        if (den % &pb).is_zero() {
            return Ok(None);
        }
        let inv = den.modinv(&m).expect("denominator is a p-adic unit");
        let step = (d.numer() * inv).mod_floor_big(&m);
        let v = (BigInt::from(y[i]) + step).mod_floor_big(&m);
        y[i] = i64::try_from(v).map_err(|_| HkError::Overflow("refined residue"))?;
    }
    Ok(Some(y))
}

trait ModFloor {
    fn mod_floor_big(&self, m: &BigInt) -> BigInt;
}

impl ModFloor for BigInt {
    fn mod_floor_big(&self, m: &BigInt) -> BigInt {
        let r = self % m;
        if r.is_negative() {
            r + m
        } else {
            r
        }
    }
}

fn solve_rational(a: &mut [Vec<BigRational>]) -> Option<Vec<BigRational>> {
    let n = a.len();
    for c in 0..n {
        let piv = (c..n).find(|&r| !a[r][c].is_zero())?;
        a.swap(c, piv);
        for r in 0..n {
            if r != c && !a[r][c].is_zero() {
                let f = &a[r][c] / &a[c][c];
                for cc in c..=n {
                    let d = &f * &a[c][cc];
                    a[r][cc] -= d;
                }
            }
        }
    }
    Some((0..n).map(|i| &a[i][n] / &a[i][i]).collect())
}

/// True when `x` solves the system modulo `m`.
pub fn solves_mod(x: &[i64], target: &Target, params: &SystemParams, m: u64) -> bool {
    let coeffs = params.coefficients();
    (1..=params.k()).all(|j| {
        let f: i128 = x
            .iter()
            .zip(&coeffs)
            .map(|(&xi, &c)| c as i128 * pow_mod(xi as i128, j as u32, m as i128))
            .sum();
        (target.n()[j - 1] as i128 - f).rem_euclid(m as i128) == 0
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealWitness {
    pub x: Vec<f64>,
    /// Max-norm residual of the normalised equations `sum (x_i/X)^j = n_j/X^j`.
    pub residual: f64,
    pub distinct: usize,
    pub nonsingular: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RealOutcome {
    Found(RealWitness),
    /// Only a singular solution was located.
    Singular(RealWitness),
    /// Inconclusive: every restart failed.
    NotFound {
        restarts: usize,
        reason: String,
    },
}

impl RealOutcome {
    pub fn is_found(&self) -> bool {
        matches!(self, RealOutcome::Found(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealSearch {
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for RealSearch {
    fn default() -> Self {
        RealSearch {
            seed: 0,
            restarts: 64,
            max_iter: 200,
        }
    }
}

fn power_sums(y: &[f64], c: &[i64], k: usize) -> Vec<f64> {
    (1..=k)
        .map(|j| {
            y.iter()
                .zip(c)
                .map(|(v, &ci)| ci as f64 * v.powi(j as i32))
                .sum()
        })
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max)
}

/// Solves `a z = b` for a small dense system; `None` if singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for cc in c..n {
                a[r][cc] -= f * a[c][cc];
            }
            b[r] -= f * b[c];
        }
    }
    let mut z = vec![0.0; n];
    for i in (0..n).rev() {
        let t: f64 = (i + 1..n).map(|j| a[i][j] * z[j]).sum();
        z[i] = (b[i] - t) / a[i][i];
    }
    z.iter().all(|v| v.is_finite()).then_some(z)
}

fn newton_attempt(
    mu: &[f64],
    c: &[i64],
    index: u64,
    opts: &RealSearch,
    tol: f64,
) -> Option<Vec<f64>> {
    let k = mu.len();
    let s = c.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(index);
    let centre = (mu[0] / s as f64).abs().max(1e-3);
    let width = [0.05, 0.2, 0.5, 0.9][(index % 4) as usize];
    let mut y: Vec<f64> = (0..s)
        .map(|_| centre * (1.0 + width * (2.0 * rng.random::<f64>() - 1.0)))
        .collect();
    // The last k coordinates are free; the others stay at their seeds.
    let free = s - k;
    let mut f = power_sums(&y, c, k);
    let mut err = max_abs_diff(&f, mu);
    for _ in 0..opts.max_iter {
        if err <= tol {
            break;
        }
        let jac: Vec<Vec<f64>> = (1..=k)
            .map(|j| {
                (free..s)
                    .map(|i| c[i] as f64 * j as f64 * y[i].powi(j as i32 - 1))
                    .collect()
            })
            .collect();
        let rhs: Vec<f64> = mu.iter().zip(&f).map(|(m, v)| m - v).collect();
        let step = solve_dense(jac, rhs)?;
        let mut lambda = 1.0;
        loop {
            let mut trial = y.clone();
            for (slot, d) in trial[free..].iter_mut().zip(&step) {
                *slot += lambda * d;
            }
            let ft = power_sums(&trial, c, k);
            let et = max_abs_diff(&ft, mu);
            if et < err || lambda < 1e-6 {
                y = trial;
                f = ft;
                err = et;
                break;
            }
            lambda *= 0.5;
        }
    }
    (err <= tol && y.iter().all(|&v| v > 0.0)).then_some(y)
}

/// Searches for a real solution with positive coordinates and a Jacobian of
/// full rank `k`, by damped Newton iteration on `k` free coordinates with
/// the remaining `s - k` fixed at perturbed equal-split seeds. A negative
/// answer is inconclusive.
pub fn real_witness(
    target: &Target,
    params: &SystemParams,
    opts: &RealSearch,
) -> Result<RealOutcome> {
    let k = params.k();
    let s = params.s();
    if target.k() != k {
        return Err(HkError::invalid("target length differs from k"));
    }
    if s < k {
        return Ok(RealOutcome::NotFound {
            restarts: 0,
            reason: format!("s = {s} < k = {k}: no square subsystem"),
        });
    }
    if params.is_pure() && !holder_necessary(target, s).ok {
        return Ok(RealOutcome::NotFound {
            restarts: 0,
            reason: "Hölder conditions fail".into(),
        });
    }
    let x0 = target.scale_raw();
    if x0 == 0.0 {
        return Ok(RealOutcome::NotFound {
            restarts: 0,
            reason: "zero target has no positive solution".into(),
        });
    }
    let mu = target.mu(crate::domain::Scale::Raw);
    let c = params.coefficients();
    let tol = 1e-9 * mu.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let package = |y: Vec<f64>| {
        let residual = max_abs_diff(&power_sums(&y, &c, k), &mu);
        let mut sorted = y.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs().max(1.0));
        let distinct = sorted.len();
        let nonsingular = jacobian_rank_real(&y, k) == k;
        RealWitness {
            x: y.iter().map(|v| v * x0).collect(),
            residual,
            distinct,
            nonsingular,
        }
    };
    let found = (0..opts.restarts as u64)
        .into_par_iter()
        .find_map_first(|i| {
            newton_attempt(&mu, &c, i, opts, tol)
                .map(package)
                .filter(|w| w.nonsingular)
        });
    if let Some(w) = found {
        return Ok(RealOutcome::Found(w));
    }
    // The balanced point solves the system exactly when n_j = s (n_1/s)^j.
    let balanced = vec![mu[0] / s as f64; s];
    if c.iter().all(|&ci| ci == 1)
        && max_abs_diff(&power_sums(&balanced, &c, k), &mu) <= tol
        && mu[0] > 0.0
    {
        return Ok(RealOutcome::Singular(package(balanced)));
    }
    Ok(RealOutcome::NotFound {
        restarts: opts.restarts,
        reason: "no restart converged to a non-singular positive solution".into(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// A hard necessary condition fails.
    Insoluble,
    /// Non-singular p-adic witnesses at every examined prime and a
    /// non-singular positive real witness.
    HypothesesMet,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolubilityOptions {
    pub primes: Vec<u64>,
    /// Per-prime depth; `None` uses [`default_depth`].
    pub depth_max: Option<u32>,
    pub budget: u64,
    pub real: RealSearch,
}

impl SolubilityOptions {
    /// Primes up to `max(2k + 1, 7)`.
    pub fn for_degree(k: usize) -> Self {
        SolubilityOptions {
            primes: primes_up_to((2 * k as u64 + 1).max(7)),
            depth_max: None,
            budget: 5_000_000,
            real: RealSearch::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolubilityReport {
    pub s: usize,
    pub k: usize,
    pub n: Vec<i64>,
    /// Only meaningful for the pure system.
    pub holder: Option<HolderReport>,
    pub fermat: FermatReport,
    pub padic: BTreeMap<u64, PadicOutcome>,
    pub real: RealOutcome,
    pub warnings: Vec<String>,
    pub verdict: Verdict,
}

pub fn solubility_report(
    target: &Target,
    params: &SystemParams,
    opts: &SolubilityOptions,
) -> Result<SolubilityReport> {
    let k = params.k();
    let s = params.s();
    let holder = params.is_pure().then(|| holder_necessary(target, s));
    let fermat = fermat_congruences(target);
    let mut padic = BTreeMap::new();
    for &p in &opts.primes {
        let depth = opts.depth_max.unwrap_or_else(|| default_depth(p, k));
        padic.insert(p, padic_witness(target, params, p, depth, opts.budget)?);
    }
    let real = real_witness(target, params, &opts.real)?;
    let mut warnings = Vec::new();
    if k < 64 && (s as u128) < (1u128 << k) - 1 {
        warnings.push(format!(
            "s = {s} < 2^k - 1 = {}: p-adic solubility is not automatic",
            (1u128 << k) - 1
        ));
    }
    if !params.is_pure() {
        warnings.push("Hölder conditions apply only to the pure system".into());
    }
    let hard_fail = holder.as_ref().is_some_and(|h| !h.ok) || !fermat.ok;
    let verdict = if hard_fail {
        Verdict::Insoluble
    } else if padic.values().all(PadicOutcome::is_found) && real.is_found() {
        Verdict::HypothesesMet
    } else {
        Verdict::Inconclusive
    };
    Ok(SolubilityReport {
        s,
        k,
        n: target.n().to_vec(),
        holder,
        fermat,
        padic,
        real,
        warnings,
        verdict,
    })
}

/// Hensel-type check used in tests: `v_p` of a `k x k` minor computed as an
/// integer determinant.
pub fn minor_determinant(x: &[i64], coeffs: &[i64], columns: &[usize]) -> BigInt {
    let k = columns.len();
    let mut a: Vec<Vec<BigRational>> = (1..=k)
        .map(|j| {
            columns
                .iter()
                .map(|&i| {
                    BigRational::from_integer(
                        BigInt::from(coeffs[i] * j as i64)
                            * Pow::pow(&BigInt::from(x[i]), (j - 1) as u32),
                    )
                })
                .collect()
        })
        .collect();
    let mut det = BigRational::one();
    for c in 0..k {
        let Some(piv) = (c..k).find(|&r| !a[r][c].is_zero()) else {
            return BigInt::zero();
        };
        if piv != c {
            a.swap(c, piv);
            det = -det;
        }
        det *= &a[c][c];
        for r in c + 1..k {
            let f = &a[r][c] / &a[c][c];
            for cc in c..k {
                let d = &f * &a[c][cc];
                a[r][cc] -= d;
            }
        }
    }
    det.to_integer()
}
