//! Small exact helpers on machine integers.

use num_integer::Integer;

pub fn gcd(a: i64, b: i64) -> i64 {
    a.gcd(&b)
}

/// gcd of `q` and every entry of `a`.
pub fn gcd_all(q: i64, a: &[i64]) -> i64 {
    a.iter().fold(q, |g, &x| g.gcd(&x))
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

pub fn primes_up_to(n: u64) -> Vec<u64> {
    (2..=n).filter(|&p| is_prime(p)).collect()
}

/// Prime factorisation as `(p, e)` pairs in increasing order of `p`.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p) {
            let mut e = 0;
            while n.is_multiple_of(p) {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += 1;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

pub fn binomial(n: u32, r: u32) -> i128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: i128 = 1;
    for i in 0..r {
        acc = acc * (n - i) as i128 / (i + 1) as i128;
    }
    acc
}

/// `x^e mod m` for `m >= 1`, result in `[0, m)`.
pub fn pow_mod(x: i128, e: u32, m: i128) -> i128 {
    let mut base = x.rem_euclid(m);
    let mut e = e;
    let mut acc = 1 % m;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * base % m;
        }
        base = base * base % m;
        e >>= 1;
    }
    acc
}

/// p-adic valuation of `v`, capped at `cap` (zero maps to `cap`).
pub fn valuation(v: &num_bigint::BigInt, p: u64, cap: u32) -> u32 {
    use num_traits::Zero;
    if v.is_zero() {
        return cap;
    }
    let p = num_bigint::BigInt::from(p);
    let mut v = v.clone();
    let mut e = 0;
    while e < cap && (&v % &p).is_zero() {
        v /= &p;
        e += 1;
    }
    e
}

/// Multinomial coefficient `n! / prod(m_i!)` for the run lengths of a sorted slice.
pub fn multiplicity_of_sorted(x: &[i64]) -> u128 {
    let mut acc: u128 = 1;
    let mut placed: u128 = 0;
    let mut run: u128 = 0;
    for i in 0..x.len() {
        if i > 0 && x[i] == x[i - 1] {
            run += 1;
        } else {
            run = 1;
        }
        placed += 1;
        // acc * placed / run keeps acc an integer at every step.
        acc = acc * placed / run;
    }
    acc
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
