//! Computational laboratory for the Hilbert-Kamke problem: exact counts of
//! solutions of `x_1^j + ... + x_s^j = n_j (1 <= j <= k)`, the exponential
//! sums and local densities of the circle method, and the arc dissection
//! used for minor-arc experiments.

pub mod arith;
pub mod circle;
pub mod counting;
pub mod densities;
pub mod domain;
pub mod error;
pub mod expsums;
pub mod local;
pub mod quadrature;

pub use domain::{
    frac_mul, power_sum_vector, reduce_mod1, unit_phase, ComplexAcc, FrequencyPoint, RealAcc,
    Scale, SystemParams, Target, Variant,
};
pub use error::{HkError, Result};
