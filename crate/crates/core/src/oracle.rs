//! Brute-force reference computations.
//!
//! These walk every cylinder of a level (or every position of a path) and
//! share no code with the factorized routines in [`crate::partition`]; they
//! exist to check those routines.

use crate::analytic::theta;
use crate::measure::OscillatingMeasure;
use crate::symbolic::{Cylinder, SymbolicSpace};

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn level(n: usize) -> impl Iterator<Item = Cylinder> {
    SymbolicSpace::default().level_packing(n).expect("oracle levels are limited to depth 20")
}

/// `log2 Σ* μ(c)^q` over all `2^n` cylinders, skipping zero-mass terms.
pub fn enumerated_log2_sum(m: &OscillatingMeasure, q: f64, n: usize) -> f64 {
    compensated_sum(level(n).filter_map(|c| {
        let mass = m.log2_mass(&c).exp2();
        (mass > 0.0).then(|| mass.powf(q))
    }))
    .log2()
}

/// `log2 Σ* 2^(-n t) μ(c)^q1 ν(c)^q2` by enumeration.
pub fn enumerated_joint_log2_sum(
    mu: &OscillatingMeasure,
    nu: &OscillatingMeasure,
    q1: f64,
    q2: f64,
    t: f64,
    n: usize,
) -> f64 {
    let radius = (-(n as f64) * t).exp2();
    compensated_sum(level(n).filter_map(|c| {
        let (a, b) = (mu.log2_mass(&c).exp2(), nu.log2_mass(&c).exp2());
        (a > 0.0 && b > 0.0).then(|| radius * a.powf(q1) * b.powf(q2))
    }))
    .log2()
}

/// Best packing mixing depths `n` and `n + 1`: each depth-`n` cylinder is
/// kept or split, whichever gives the larger term.
pub fn enumerated_mixed_scale_log2_sum(m: &OscillatingMeasure, q: f64, n: usize) -> f64 {
    compensated_sum(level(n).map(|c| {
        let whole = m.log2_mass(&c).exp2().powf(q);
        let split = m.log2_mass(&c.child(0)).exp2().powf(q) + m.log2_mass(&c.child(1)).exp2().powf(q);
        whole.max(split)
    }))
    .log2()
}

/// `Σ_{j ≤ n} θ_{phase(j)}(q)`, one position at a time.
pub fn per_position_log2_sum(m: &OscillatingMeasure, q: f64, n: usize) -> f64 {
    (1..=n).map(|j| theta(q, m.weight(m.schedule().phase(j)))).sum()
}
