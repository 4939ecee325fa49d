//! Composite Gauss-Legendre rules.

use num_complex::Complex64;

use crate::domain::ComplexAcc;

/// Eight-point Gauss-Legendre nodes and weights on `[-1, 1]`.
pub const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// Nodes and weights of the composite rule with `panels` equal panels on
/// `[a, b]`.
pub fn composite_nodes(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * GL8.len());
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for &(x, w) in &GL8 {
            out.push((mid + 0.5 * h * x, 0.5 * h * w));
        }
    }
    out
}

/// Integral of a complex function over `[a, b]`.
pub fn integrate_complex<F>(a: f64, b: f64, panels: usize, mut f: F) -> Complex64
where
    F: FnMut(f64) -> Complex64,
{
    let mut acc = ComplexAcc::new();
    for (x, w) in composite_nodes(a, b, panels) {
        acc.push(f(x) * w);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        let s: f64 = GL8.iter().map(|p| p.1).sum();
        assert!((s - 2.0).abs() < 1e-15);
    }

    #[test]
    fn exact_for_degree_fifteen() {
        // 8 nodes integrate polynomials up to degree 15 exactly.
        let v = integrate_complex(0.0, 1.0, 1, |x| Complex64::new(x.powi(15), 0.0));
        assert!((v.re - 1.0 / 16.0).abs() < 1e-15);
        let v = integrate_complex(-2.0, 3.0, 5, |x| Complex64::new(0.0, x * x));
        assert!((v.im - 35.0 / 3.0).abs() < 1e-12);
    }
}
