//! Grid-based convex conjugation and one-sided derivative estimates.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Default `q` range and spacing for spectrum grids.
pub const DEFAULT_Q_MIN: f64 = -8.0;
pub const DEFAULT_Q_MAX: f64 = 8.0;
pub const DEFAULT_Q_STEP: f64 = 1e-3;

/// Node offsets `h, h/2, h/4` used by the derivative estimators, in grid steps.
const STEP_NODES: [usize; 3] = [4, 2, 1];

/// A real function sampled on a strictly increasing grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    q_grid: Vec<f64>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(q_grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if q_grid.is_empty() {
            return Err(Error::Grid("empty grid".into()));
        }
        if q_grid.len() != values.len() {
            return Err(Error::Grid(format!("{} nodes but {} values", q_grid.len(), values.len())));
        }
        if q_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Grid("grid is not strictly increasing".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Grid(format!("non-finite value at q = {}", q_grid[i])));
        }
        Ok(GridFunction { q_grid, values })
    }

    /// Samples `f` at `lo + (hi - lo) i / steps`, `i = 0..=steps`.
    pub fn sample(lo: f64, hi: f64, steps: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if steps == 0 || !(lo < hi) {
            return Err(Error::Grid(format!("cannot sample [{lo}, {hi}] with {steps} steps")));
        }
        let q: Vec<f64> = (0..=steps).map(|i| lo + (hi - lo) * i as f64 / steps as f64).collect();
        let v = q.iter().map(|&x| f(x)).collect();
        Self::new(q, v)
    }

    /// Samples on `[lo, hi]` with (approximately) the given spacing.
    pub fn sample_step(lo: f64, hi: f64, step: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let steps = ((hi - lo) / step).round() as usize;
        Self::sample(lo, hi, steps, f)
    }

    pub fn q_grid(&self) -> &[f64] {
        &self.q_grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.q_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q_grid.is_empty()
    }

    fn node(&self, q: f64) -> Result<usize> {
        let i = self.q_grid.partition_point(|&x| x < q);
        let candidates = [i.checked_sub(1), Some(i).filter(|&i| i < self.len())];
        let best = candidates
            .into_iter()
            .flatten()
            .min_by(|&a, &b| (self.q_grid[a] - q).abs().total_cmp(&(self.q_grid[b] - q).abs()))
            .expect("grid is non-empty");
        let tol = 1e-9 * q.abs().max(1.0);
        if (self.q_grid[best] - q).abs() > tol {
            return Err(Error::Grid(format!("q = {q} is not a grid node")));
        }
        Ok(best)
    }

    /// Midpoint convexity on consecutive node triples of a uniform grid.
    pub fn is_midpoint_convex(&self, tol: f64) -> bool {
        self.values.windows(3).all(|w| w[1] <= 0.5 * (w[0] + w[2]) + tol)
    }

    pub fn is_midpoint_concave(&self, tol: f64) -> bool {
        self.values.windows(3).all(|w| w[1] >= 0.5 * (w[0] + w[2]) - tol)
    }
}

/// Result of `f*(α) = min_q qα + f(q)` over the grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Conjugate {
    pub alpha: f64,
    pub value: f64,
    pub argmin_q: f64,
    /// The minimum sits on the first or last node; the true infimum may be lower.
    pub at_boundary: bool,
    /// `curvature · step² / 8` at the minimizer.
    pub error_estimate: f64,
}

/// `f*(α) = inf_q qα + f(q)`, approximated by the grid minimum.
pub fn legendre_transform(f: &GridFunction, alpha: f64) -> Conjugate {
    let (q, v) = (&f.q_grid, &f.values);
    let (mut best, mut at) = (f64::INFINITY, 0);
    for i in 0..q.len() {
        let s = q[i] * alpha + v[i];
        if s < best {
            best = s;
            at = i;
        }
    }
    let at_boundary = q.len() == 1 || at == 0 || at == q.len() - 1;
    let error_estimate = if at_boundary || q.len() < 3 {
        f64::NAN
    } else {
        let (h1, h2) = (q[at] - q[at - 1], q[at + 1] - q[at]);
        let curvature = 2.0 * ((v[at + 1] - v[at]) / h2 - (v[at] - v[at - 1]) / h1) / (h1 + h2);
        curvature.abs() * h1.max(h2).powi(2) / 8.0
    };
    Conjugate { alpha, value: best, argmin_q: q[at], at_boundary, error_estimate }
}

/// [`legendre_transform`] over many exponents, in parallel, preserving order.
pub fn legendre_curve(f: &GridFunction, alphas: &[f64]) -> Vec<Conjugate> {
    alphas.par_iter().map(|&a| legendre_transform(f, a)).collect()
}

/// Left and right derivative estimates at a node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OneSided {
    pub left: f64,
    pub right: f64,
}

/// `left_flat = limsup (ψ(q-t) - ψ(q)) / (-t)`, `right_flat = limsup (ψ(q+t) - ψ(q)) / t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlatDerivatives {
    pub left_flat: f64,
    pub right_flat: f64,
}

// difference quotients at offsets 4, 2, 1 nodes, on one side of node i
fn quotients(f: &GridFunction, i: usize, forward: bool) -> Result<[f64; 3]> {
    let reach = STEP_NODES[0];
    if i < reach || i + reach >= f.len() {
        return Err(Error::Boundary { q: f.q_grid[i] });
    }
    Ok(STEP_NODES.map(|k| {
        let j = if forward { i + k } else { i - k };
        (f.values[j] - f.values[i]) / (f.q_grid[j] - f.q_grid[i])
    }))
}

// Richardson tableau for a first-order quotient sequence at steps h, h/2, h/4:
// returns (finest first-order extrapolation, second-order extrapolation)
fn richardson(d: [f64; 3]) -> (f64, f64) {
    let r_coarse = 2.0 * d[1] - d[0];
    let r_fine = 2.0 * d[2] - d[1];
    (r_fine, (4.0 * r_fine - r_coarse) / 3.0)
}

/// One-sided derivatives at the node `q`, from quotients at `h, h/2, h/4`
/// (`h` = four grid steps) extrapolated to second order.
pub fn one_sided_derivatives(f: &GridFunction, q: f64) -> Result<OneSided> {
    let i = f.node(q)?;
    let left = richardson(quotients(f, i, false)?).1;
    let right = richardson(quotients(f, i, true)?).1;
    Ok(OneSided { left, right })
}

/// ♭-derivatives at the node `q`: the limsup over vanishing steps is taken
/// as the maximum of the extrapolated quotients along the step sequence.
pub fn flat_derivatives(f: &GridFunction, q: f64) -> Result<FlatDerivatives> {
    let i = f.node(q)?;
    let (l1, l2) = richardson(quotients(f, i, false)?);
    let (r1, r2) = richardson(quotients(f, i, true)?);
    Ok(FlatDerivatives { left_flat: l1.max(l2), right_flat: r1.max(r2) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{b_endpoints, b_of_q, entropy_h, theta, theta_prime, B_of_q};
    use crate::measure::BernoulliPair;
    use proptest::prelude::*;

    const ALPHA_035: f64 = 1.021928094887362347870;
    const Q_035: f64 = 0.446542398041744026477;
    const H_035: f64 = 0.934068055375491006007;

    fn pair() -> BernoulliPair {
        BernoulliPair::new(0.2, 0.4).unwrap()
    }

    fn default_grid(f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction::sample_step(DEFAULT_Q_MIN, DEFAULT_Q_MAX, DEFAULT_Q_STEP, f).unwrap()
    }

    // spacing 2.5e-4 so that h = 1e-3
    fn fine_grid(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction::sample_step(lo, hi, 2.5e-4, f).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridFunction::new(vec![], vec![]).is_err());
        assert!(GridFunction::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(GridFunction::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(GridFunction::new(vec![0.0, 1.0], vec![1.0, f64::NAN]).is_err());
        let g = default_grid(|q| q);
        assert_eq!(g.len(), 16001);
        assert_eq!(g.q_grid()[8000], 0.0);
    }

    #[test]
    fn conjugate_of_zero() {
        let g = default_grid(|_| 0.0);
        let c = legendre_transform(&g, 0.0);
        assert_eq!(c.value, 0.0);
        assert!(legendre_transform(&g, 0.5).at_boundary);
        assert!(legendre_transform(&g, -0.5).at_boundary);
    }

    #[test]
    fn conjugate_of_theta_is_entropy() {
        let g = default_grid(|q| theta(q, 0.2));
        let alpha = -theta_prime(Q_035, 0.2);
        assert!((alpha - ALPHA_035).abs() < 1e-12);
        let c = legendre_transform(&g, alpha);
        assert!(!c.at_boundary);
        assert!((c.value - H_035).abs() < 1e-5);
        assert!(c.error_estimate < 1e-6);
    }

    #[test]
    fn conjugate_of_min_is_min_of_conjugates() {
        let pr = pair();
        let b = default_grid(|q| b_of_q(q, &pr));
        let t = default_grid(|q| theta(q, 0.2));
        let tt = default_grid(|q| theta(q, 0.4));
        for alpha in [0.8, 0.9, 1.0, 1.1, 1.2, 1.3] {
            let lhs = legendre_transform(&b, alpha).value;
            let rhs = legendre_transform(&t, alpha).value.min(legendre_transform(&tt, alpha).value);
            assert!((lhs - rhs).abs() < 1e-5);
        }
    }

    #[test]
    fn derivatives_of_smooth_theta() {
        let g = fine_grid(-2.0, 3.0, |q| theta(q, 0.2));
        for q in [-1.0, 0.0, 0.5, 2.0] {
            let d = one_sided_derivatives(&g, q).unwrap();
            assert!((d.left - theta_prime(q, 0.2)).abs() < 1e-6);
            assert!((d.right - theta_prime(q, 0.2)).abs() < 1e-6);
            let fl = flat_derivatives(&g, q).unwrap();
            assert!((fl.left_flat - d.left).abs() < 1e-6);
            assert!((fl.right_flat - d.right).abs() < 1e-6);
        }
        assert!(matches!(one_sided_derivatives(&g, -2.0), Err(Error::Boundary { .. })));
        assert!(matches!(flat_derivatives(&g, 3.0), Err(Error::Boundary { .. })));
        assert!(one_sided_derivatives(&g, 0.1234567).is_err());
    }

    #[test]
    fn derivatives_of_linear() {
        let g = GridFunction::sample(-1.0, 1.0, 64, |q| 3.0 * q - 2.0).unwrap();
        let d = one_sided_derivatives(&g, 0.0).unwrap();
        assert!((d.left - 3.0).abs() < 1e-12 && (d.right - 3.0).abs() < 1e-12);
        let fl = flat_derivatives(&g, 0.5).unwrap();
        assert!((fl.left_flat - 3.0).abs() < 1e-12 && (fl.right_flat - 3.0).abs() < 1e-12);
    }

    #[test]
    fn kinks_of_b_and_big_b() {
        let pr = pair();
        let e = b_endpoints(&pr);
        let big = fine_grid(-1.0, 2.0, |q| B_of_q(q, &pr));
        let at0 = one_sided_derivatives(&big, 0.0).unwrap();
        assert!((-at0.left - e.minus_bl0).abs() < 1e-6);
        assert!((-at0.right - e.minus_br0).abs() < 1e-6);
        let at1 = one_sided_derivatives(&big, 1.0).unwrap();
        assert!((-at1.left - e.minus_bl1).abs() < 1e-6);
        assert!((-at1.right - e.minus_br1).abs() < 1e-6);
        assert!(at0.left <= at0.right && at1.left <= at1.right);

        // b = min(θ, θ~) is concave-kinked at 0 and 1: branch derivatives on each side
        let small = fine_grid(-1.0, 2.0, |q| b_of_q(q, &pr));
        let f0 = flat_derivatives(&small, 0.0).unwrap();
        assert!((f0.left_flat - theta_prime(0.0, 0.4)).abs() < 1e-6);
        assert!((f0.right_flat - theta_prime(0.0, 0.2)).abs() < 1e-6);
        let f1 = flat_derivatives(&small, 1.0).unwrap();
        assert!((f1.left_flat - theta_prime(1.0, 0.2)).abs() < 1e-6);
        assert!((f1.right_flat - theta_prime(1.0, 0.4)).abs() < 1e-6);
    }

    #[test]
    fn fenchel_equality_for_theta() {
        let g = default_grid(|q| theta(q, 0.3));
        for q in [-5.0, -1.0, 0.25, 3.0, 6.0] {
            let c = legendre_transform(&g, -theta_prime(q, 0.3));
            let expected = theta(q, 0.3) - q * theta_prime(q, 0.3);
            assert!((c.value - expected).abs() < 1e-5);
            // the same value is the entropy of the tilted weight
            let r = 1.0 / (1.0 + (q * (0.7f64 / 0.3).ln()).exp());
            assert!((c.value - entropy_h(r)).abs() < 1e-5);
        }
    }

    #[test]
    fn convex_inputs_have_ordered_one_sided_derivatives() {
        let pr = pair();
        let g = fine_grid(-1.0, 2.0, |q| B_of_q(q, &pr));
        for i in (8..g.len() - 8).step_by(97) {
            let d = one_sided_derivatives(&g, g.q_grid()[i]).unwrap();
            assert!(d.left <= d.right + 1e-9);
        }
    }

    proptest! {
        #[test]
        fn conjugate_is_a_lower_bound(alpha in 0.4f64..2.2, k in 0usize..16001) {
            let g = default_grid(|q| theta(q, 0.2));
            let c = legendre_transform(&g, alpha);
            prop_assert!(c.value <= g.q_grid()[k] * alpha + g.values()[k]);
        }

        #[test]
        fn conjugate_is_concave(a in 0.4f64..2.2, b in 0.4f64..2.2) {
            let g = default_grid(|q| theta(q, 0.2));
            let mid = legendre_transform(&g, 0.5 * (a + b)).value;
            let avg = 0.5 * (legendre_transform(&g, a).value + legendre_transform(&g, b).value);
            prop_assert!(mid >= avg - 1e-12);
        }
    }
}
