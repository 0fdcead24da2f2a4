//! Closed forms for the oscillating Bernoulli measure.
//!
//! Everything is evaluated with natural logarithms and converted to base 2
//! when returned. The two free-energy branches are
//! `θ(q) = log2(p^q + (1-p)^q)` and `θ~(q) = log2(p~^q + (1-p~)^q)`; the
//! Hausdorff-type separator is `b = min(θ, θ~)` and the packing-type one is
//! `B = max(θ, θ~)`. The auxiliary measure `ν` with weights `(r, r~)` puts
//! its mass on points whose `μ`-exponent is `α`, provided the per-position
//! log-expectations under both phases agree.

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::BernoulliPair;

/// Residual bound for the derivative-matching constraint.
pub const MATCHING_TOLERANCE: f64 = 1e-12;

/// Which free-energy branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Branch {
    Theta,
    ThetaTilde,
}

impl Branch {
    pub fn weight(self, pair: &BernoulliPair) -> f64 {
        match self {
            Branch::Theta => pair.p(),
            Branch::ThetaTilde => pair.p_tilde(),
        }
    }
}

// ln(w^q + (1-w)^q) without overflow for large |q|; exact at q = 0 and q = 1
fn ln_moment(q: f64, w: f64) -> f64 {
    if q == 0.0 {
        return LN_2;
    }
    if q == 1.0 {
        return (w + (1.0 - w)).ln();
    }
    let a = q * w.ln();
    let b = q * (1.0 - w).ln();
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `θ(q; w) = log2(w^q + (1-w)^q)`.
pub fn theta(q: f64, w: f64) -> f64 {
    ln_moment(q, w) / LN_2
}

/// `dθ/dq = (w^q ln w + (1-w)^q ln(1-w)) / ((w^q + (1-w)^q) ln 2)`.
pub fn theta_prime(q: f64, w: f64) -> f64 {
    let (lw, lv) = (w.ln(), (1.0 - w).ln());
    let (a, b) = (q * lw, q * lv);
    let m = a.max(b);
    let (ea, eb) = ((a - m).exp(), (b - m).exp());
    (ea * lw + eb * lv) / ((ea + eb) * LN_2)
}

/// `d²θ/dq²`, the variance of `log2 ϖ` under the tilted weights, times `ln 2`.
pub fn theta_second(q: f64, w: f64) -> f64 {
    let (lw, lv) = (w.ln(), (1.0 - w).ln());
    let s = 1.0 / (1.0 + (q * (lv - lw)).exp());
    s * (1.0 - s) * (lw - lv).powi(2) / LN_2
}

/// Binary entropy `h(r) = -r log2 r - (1-r) log2(1-r)`.
pub fn entropy_h(r: f64) -> f64 {
    -(r * r.ln() + (1.0 - r) * (1.0 - r).ln()) / LN_2
}

/// `b(q) = min(θ(q), θ~(q))`.
pub fn b_of_q(q: f64, pair: &BernoulliPair) -> f64 {
    theta(q, pair.p()).min(theta(q, pair.p_tilde()))
}

/// `B(q) = max(θ(q), θ~(q))`.
#[allow(non_snake_case)]
pub fn B_of_q(q: f64, pair: &BernoulliPair) -> f64 {
    theta(q, pair.p()).max(theta(q, pair.p_tilde()))
}

/// `α(r) = r log2((1-p)/p) - log2(1-p)`, the expected `μ`-exponent of a
/// point whose digits are 0 with frequency `r` in a `p` block.
pub fn alpha_of_r(r: f64, p: f64) -> f64 {
    (r * ((1.0 - p) / p).ln() - (1.0 - p).ln()) / LN_2
}

/// Inverse of [`alpha_of_r`].
pub fn r_of_alpha(alpha: f64, p: f64) -> f64 {
    (alpha * LN_2 + (1.0 - p).ln()) / ((1.0 - p) / p).ln()
}

/// `q = ln((1-r)/r) / ln((1-p)/p)`: the `q` at which `-θ'(q) = α(r)`.
pub fn q_of_r(r: f64, p: f64) -> f64 {
    ((1.0 - r) / r).ln() / ((1.0 - p) / p).ln()
}

/// Closed-form inverse of [`q_of_r`]: `r = 1 / (1 + ((1-p)/p)^q)`.
pub fn r_of_q(q: f64, p: f64) -> f64 {
    1.0 / (1.0 + (q * ((1.0 - p) / p).ln()).exp())
}

/// The open window of `r` for which the matched `r~` lies in `(0, 1)`.
pub fn r_window(pair: &BernoulliPair) -> (f64, f64) {
    let (p, pt) = (pair.p(), pair.p_tilde());
    let scale = ((1.0 - p) / p).ln();
    (((1.0 - p) / (1.0 - pt)).ln() / scale, ((1.0 - p) / pt).ln() / scale)
}

/// Weights `(r, r~)` of the auxiliary measure and their common exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AuxiliaryParams {
    pub r: f64,
    pub r_tilde: f64,
    pub alpha: f64,
}

impl AuxiliaryParams {
    /// `|r ln p + (1-r) ln(1-p) - r~ ln p~ - (1-r~) ln(1-p~)|`.
    pub fn matching_residual(&self, pair: &BernoulliPair) -> f64 {
        let side = |r: f64, w: f64| r * w.ln() + (1.0 - r) * (1.0 - w).ln();
        (side(self.r, pair.p()) - side(self.r_tilde, pair.p_tilde())).abs()
    }

    /// Checks every invariant against `pair`.
    pub fn validate(&self, pair: &BernoulliPair) -> Result<()> {
        for (name, v) in [("r", self.r), ("r_tilde", self.r_tilde)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidProbability { name, value: v });
            }
        }
        check_window(self.r, pair)?;
        let residual = self.matching_residual(pair);
        if !(residual <= MATCHING_TOLERANCE) {
            return Err(Error::Mismatch(format!(
                "derivative-matching residual {residual:e} exceeds {MATCHING_TOLERANCE:e}"
            )));
        }
        Ok(())
    }

    /// `q` for the `θ` branch.
    pub fn q(&self, pair: &BernoulliPair) -> f64 {
        q_of_r(self.r, pair.p())
    }

    /// `q~` for the `θ~` branch.
    pub fn q_tilde(&self, pair: &BernoulliPair) -> f64 {
        q_of_r(self.r_tilde, pair.p_tilde())
    }
}

fn check_window(r: f64, pair: &BernoulliPair) -> Result<()> {
    let (p, pt) = (pair.p(), pair.p_tilde());
    let scaled = r * ((1.0 - p) / p).ln();
    if !(((1.0 - p) / (1.0 - pt)).ln() < scaled && scaled < ((1.0 - p) / pt).ln()) {
        let (lo, hi) = r_window(pair);
        return Err(Error::Inadmissible { r, lo, hi });
    }
    Ok(())
}

/// Solves the derivative-matching constraint for `r~` (it is linear in `r~`)
/// and attaches the common exponent `α`.
pub fn solve_r_tilde(r: f64, pair: &BernoulliPair) -> Result<AuxiliaryParams> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidProbability { name: "r", value: r });
    }
    check_window(r, pair)?;
    let (p, pt) = (pair.p(), pair.p_tilde());
    let r_tilde = (r * (p / (1.0 - p)).ln() + (1.0 - p).ln() - (1.0 - pt).ln()) / (pt / (1.0 - pt)).ln();
    if !(r_tilde > 0.0 && r_tilde < 1.0) {
        let (lo, hi) = r_window(pair);
        return Err(Error::Inadmissible { r, lo, hi });
    }
    let aux = AuxiliaryParams { r, r_tilde, alpha: alpha_of_r(r, p) };
    let residual = aux.matching_residual(pair);
    if residual > MATCHING_TOLERANCE {
        return Err(Error::Mismatch(format!("derivative-matching residual {residual:e}")));
    }
    Ok(aux)
}

/// Auxiliary parameters for a prescribed exponent `α`.
pub fn aux_for_alpha(alpha: f64, pair: &BernoulliPair) -> Result<AuxiliaryParams> {
    check_alpha(alpha, pair)?;
    solve_r_tilde(r_of_alpha(alpha, pair.p()), pair)
}

fn check_alpha(alpha: f64, pair: &BernoulliPair) -> Result<()> {
    let (lo, hi) = pair.alpha_interval();
    if !(alpha > lo && alpha < hi) {
        return Err(Error::AlphaOutOfRange { alpha, lo, hi });
    }
    Ok(())
}

/// `|θ(q) - q θ'(q) - h(r(q))|` on the chosen branch, `r(q)` the inverse of [`q_of_r`].
pub fn legendre_identity_check(q: f64, pair: &BernoulliPair, which: Branch) -> f64 {
    let w = which.weight(pair);
    (theta(q, w) - q * theta_prime(q, w) - entropy_h(r_of_q(q, w))).abs()
}

/// The three open conditions under which at least one branch realizes `b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BranchConditions {
    /// `h(p) < α < log2 1/√(p(1-p))`, i.e. `0 < q < 1`.
    pub c1: bool,
    /// `α > log2 1/√(p~(1-p~))`, i.e. `q~ < 0`.
    pub c2: bool,
    /// `α < h(p~)`, i.e. `q~ > 1`.
    pub c3: bool,
}

impl BranchConditions {
    pub fn any(&self) -> bool {
        self.c1 || self.c2 || self.c3
    }
}

pub fn branch_conditions(alpha: f64, pair: &BernoulliPair) -> Result<BranchConditions> {
    check_alpha(alpha, pair)?;
    let e = b_endpoints(pair);
    Ok(BranchConditions {
        c1: e.minus_br1 < alpha && alpha < e.minus_bl0,
        c2: alpha > e.minus_br0,
        c3: alpha < e.minus_bl1,
    })
}

/// Negated one-sided derivatives of `B` at its kinks `q = 0` and `q = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BEndpoints {
    /// `-B'_l(0) = log2 1/√(p(1-p))`
    pub minus_bl0: f64,
    /// `-B'_r(0) = log2 1/√(p~(1-p~))`
    pub minus_br0: f64,
    /// `-B'_l(1) = log2 1/(p~^p~ (1-p~)^(1-p~))`
    pub minus_bl1: f64,
    /// `-B'_r(1) = log2 1/(p^p (1-p)^(1-p))`
    pub minus_br1: f64,
}

impl BEndpoints {
    /// Whether `α` falls in `[-B'_r(0), -B'_l(0)] ∪ [-B'_r(1), -B'_l(1)]`.
    pub fn excludes(&self, alpha: f64) -> bool {
        (self.minus_br0..=self.minus_bl0).contains(&alpha) || (self.minus_br1..=self.minus_bl1).contains(&alpha)
    }
}

pub fn b_endpoints(pair: &BernoulliPair) -> BEndpoints {
    let (p, pt) = (pair.p(), pair.p_tilde());
    let half_log = |w: f64| -0.5 * (w.ln() + (1.0 - w).ln()) / LN_2;
    BEndpoints { minus_bl0: half_log(p), minus_br0: half_log(pt), minus_bl1: entropy_h(pt), minus_br1: entropy_h(p) }
}

/// The two branches of `φ`: `log2(p^x r + (1-p)^x (1-r))` and the `p~, r~` analogue.
pub fn phi_branches(x: f64, pair: &BernoulliPair, aux: &AuxiliaryParams) -> (f64, f64) {
    let branch = |w: f64, r: f64| (r * (x * w.ln()).exp() + (1.0 - r) * (x * (1.0 - w).ln()).exp()).ln() / LN_2;
    (branch(pair.p(), aux.r), branch(pair.p_tilde(), aux.r_tilde))
}

/// `φ(x) = max` of the two [`phi_branches`].
pub fn phi_closed_form(x: f64, pair: &BernoulliPair, aux: &AuxiliaryParams) -> f64 {
    let (a, b) = phi_branches(x, pair, aux);
    a.max(b)
}

/// Closed-form row of the spectrum at exponent `α`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectrumBranch {
    pub alpha: f64,
    pub q: f64,
    pub q_tilde: f64,
    pub h_r: f64,
    pub h_r_tilde: f64,
    /// `min{h(r), h(r~)}`, the Hausdorff spectrum `b*(α)`.
    pub b_value: f64,
    /// `max{h(r), h(r~)}`, the packing spectrum `B*(α)` where it is proven.
    pub big_b_value: f64,
    pub aux: AuxiliaryParams,
}

pub fn spectrum_branch(alpha: f64, pair: &BernoulliPair) -> Result<SpectrumBranch> {
    let aux = aux_for_alpha(alpha, pair)?;
    let (h_r, h_r_tilde) = (entropy_h(aux.r), entropy_h(aux.r_tilde));
    Ok(SpectrumBranch {
        alpha,
        q: aux.q(pair),
        q_tilde: aux.q_tilde(pair),
        h_r,
        h_r_tilde,
        b_value: h_r.min(h_r_tilde),
        big_b_value: h_r.max(h_r_tilde),
        aux,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // 40-digit reference values (mpmath)
    const THETA_2_P: f64 = -0.556393348524385287486;
    const THETA_2_PT: f64 = -0.943416471633632535343;
    const LOG2_04: f64 = -1.321928094887362347870;
    const H_02: f64 = 0.721928094887362347870;
    const H_035: f64 = 0.934068055375491006007;
    const B_HALF: f64 = 0.423998453277475007518;
    const BIG_B_HALF: f64 = 0.492675853182677773495;
    const R_TILDE_035: f64 = 0.487146612594563566907;
    const Q_035: f64 = 0.446542398041744026477;
    const Q_TILDE_035: f64 = 0.126829358268144980898;
    const ALPHA_035: f64 = 1.021928094887362347870;
    const VAR_LO: f64 = 0.207518749639421909273;
    const MINUS_BR0: f64 = 1.029446844526784257143;
    const H_04: f64 = 0.970950594454668638998;

    fn pair() -> BernoulliPair {
        BernoulliPair::new(0.2, 0.4).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn fd(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn theta_values() {
        assert_eq!(theta(0.0, 0.3), 1.0);
        for w in [0.2, 0.3, 0.4, 0.5, 0.123] {
            assert_eq!(theta(1.0, w), 0.0);
        }
        assert!(close(theta(2.0, 0.2), THETA_2_P, 1e-14));
        assert!(close(theta(2.0, 0.4), THETA_2_PT, 1e-14));
        assert!(theta(-800.0, 0.2).is_finite());
    }

    #[test]
    fn theta_prime_values() {
        assert!(close(theta_prime(0.0, 0.2), LOG2_04, 1e-14));
        assert!(close(theta_prime(1.0, 0.2), -H_02, 1e-14));
        for q in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            assert!(close(theta_prime(q, 0.5), -1.0, 1e-15));
            let num = fd(|t| theta(t, 0.2), q, 1e-6);
            assert!(close(theta_prime(q, 0.2), num, 1e-8), "q = {q}");
            let num2 = fd(|t| theta_prime(t, 0.2), q, 1e-5);
            assert!(close(theta_second(q, 0.2), num2, 1e-7), "q = {q}");
        }
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy_h(0.5), 1.0);
        assert!(close(entropy_h(0.2), H_02, 1e-15));
        assert!(close(entropy_h(0.35), H_035, 1e-15));
        assert!(close(entropy_h(0.3), entropy_h(0.7), 1e-15));
    }

    #[test]
    fn b_and_big_b() {
        let pr = pair();
        assert_eq!((b_of_q(0.0, &pr), B_of_q(0.0, &pr)), (1.0, 1.0));
        assert!(close(b_of_q(1.0, &pr), 0.0, 1e-15) && close(B_of_q(1.0, &pr), 0.0, 1e-15));
        assert!(close(b_of_q(0.5, &pr), B_HALF, 1e-14));
        assert!(close(B_of_q(0.5, &pr), BIG_B_HALF, 1e-14));
        assert_eq!(b_of_q(0.5, &pr), theta(0.5, 0.2));
        assert_eq!(b_of_q(2.0, &pr), theta(2.0, 0.4));
        assert_eq!(b_of_q(-1.0, &pr), theta(-1.0, 0.4));
    }

    #[test]
    fn branch_ordering_on_grid() {
        let pr = pair();
        for i in 0..=1600 {
            let q = -8.0 + i as f64 * 0.01;
            if q.abs() < 0.02 || (q - 1.0).abs() < 0.02 {
                continue;
            }
            let (t, tt) = (theta(q, 0.2), theta(q, 0.4));
            if q > 0.0 && q < 1.0 {
                assert!(t < tt, "q = {q}");
            } else {
                assert!(t > tt, "q = {q}");
            }
            assert!(b_of_q(q, &pr) <= B_of_q(q, &pr));
        }
    }

    #[test]
    fn solver_examples() {
        let pr = pair();
        let aux = solve_r_tilde(0.35, &pr).unwrap();
        assert!(close(aux.r_tilde, R_TILDE_035, 1e-13));
        assert!(aux.matching_residual(&pr) <= 1e-12);
        assert!(close(aux.alpha, ALPHA_035, 1e-14));
        assert!(close(aux.q(&pr), Q_035, 1e-13));
        assert!(close(aux.q_tilde(&pr), Q_TILDE_035, 1e-12));
        assert!(matches!(solve_r_tilde(0.5, &pr), Err(Error::Inadmissible { .. })));
        assert!(matches!(solve_r_tilde(0.05, &pr), Err(Error::Inadmissible { .. })));
        let (lo, hi) = r_window(&pr);
        assert!(close(lo, VAR_LO, 1e-14) && close(hi, 0.5, 1e-15));
        // the linear solve agrees with inverting α on the p~ side
        assert!(close(aux.r_tilde, r_of_alpha(aux.alpha, 0.4), 1e-13));
    }

    #[test]
    fn alpha_and_q_maps() {
        assert!(close(alpha_of_r(0.5, 0.2), 2.5f64.log2(), 1e-14));
        assert!(close(alpha_of_r(0.35, 0.2), ALPHA_035, 1e-14));
        for k in 0..5 {
            let r = 0.25 + 0.05 * k as f64;
            assert!(close(alpha_of_r(r, 0.2), -theta_prime(q_of_r(r, 0.2), 0.2), 1e-10));
            assert!(close(r_of_alpha(alpha_of_r(r, 0.2), 0.2), r, 1e-14));
        }
        assert_eq!(q_of_r(0.5, 0.2), 0.0);
        assert!(close(q_of_r(0.2, 0.2), 1.0, 1e-15));
        assert!(close(q_of_r(0.35, 0.2), Q_035, 1e-13));
    }

    #[test]
    fn q_round_trip() {
        for i in 0..=160 {
            let q = -8.0 + 0.1 * i as f64;
            assert!(close(q_of_r(r_of_q(q, 0.2), 0.2), q, 1e-10), "q = {q}");
            assert!(close(q_of_r(r_of_q(q, 0.4), 0.4), q, 1e-10), "q = {q}");
        }
    }

    #[test]
    fn alpha_window_is_the_image_of_the_r_window() {
        let pr = pair();
        let (lo, hi) = r_window(&pr);
        let (a_lo, a_hi) = pr.alpha_interval();
        assert!(close(alpha_of_r(lo, 0.2), a_lo, 1e-10));
        assert!(close(alpha_of_r(hi, 0.2), a_hi, 1e-10));
    }

    #[test]
    fn legendre_identity() {
        let pr = pair();
        assert!(legendre_identity_check(0.0, &pr, Branch::Theta) < 1e-15);
        assert!(legendre_identity_check(1.0, &pr, Branch::Theta) < 1e-14);
        assert!(legendre_identity_check(Q_035, &pr, Branch::Theta) <= 1e-10);
        assert!(close(entropy_h(r_of_q(Q_035, 0.2)), H_035, 1e-12));
        let half = BernoulliPair::new(0.2, 0.5).unwrap();
        assert!(legendre_identity_check(3.0, &half, Branch::ThetaTilde) < 1e-14);
    }

    #[test]
    fn conditions() {
        let pr = pair();
        let e = b_endpoints(&pr);
        assert!(close(e.minus_br0, MINUS_BR0, 1e-14));
        assert!(close(e.minus_bl1, H_04, 1e-14));
        assert!(close(e.minus_bl0, -LOG2_04, 1e-14));
        assert!(close(e.minus_br1, H_02, 1e-15));
        assert!(e.minus_br0 < e.minus_bl0 && e.minus_br1 < e.minus_bl1);
        assert!(branch_conditions(1.0, &pr).unwrap().any());
        let (lo, hi) = pr.alpha_interval();
        assert!(branch_conditions(0.5 * (lo + hi), &pr).unwrap().any());
        assert!(branch_conditions(lo + 1e-9, &pr).unwrap().c3);
        assert!(matches!(branch_conditions(hi, &pr), Err(Error::AlphaOutOfRange { .. })));
        // boundary values are excluded from the open conditions
        let at = branch_conditions(e.minus_br0, &pr).unwrap();
        assert!(!at.c2);
    }

    #[test]
    fn phi() {
        let pr = pair();
        let aux = solve_r_tilde(0.35, &pr).unwrap();
        assert_eq!(phi_closed_form(0.0, &pr, &aux), 0.0);
        let slope = fd(|x| phi_closed_form(x, &pr, &aux), 0.0, 1e-5);
        assert!(close(slope, -aux.alpha, 1e-6));
        assert!(close(phi_closed_form(1.0, &pr, &aux), 0.59f64.log2(), 1e-14));
        for i in 0..40 {
            let (x, y) = (-3.0 + 0.15 * i as f64, -2.5 + 0.13 * i as f64);
            let mid = phi_closed_form(0.5 * (x + y), &pr, &aux);
            assert!(mid <= 0.5 * (phi_closed_form(x, &pr, &aux) + phi_closed_form(y, &pr, &aux)) + 1e-12);
        }
    }

    #[test]
    fn spectrum_branch_row() {
        let pr = pair();
        let row = spectrum_branch(ALPHA_035, &pr).unwrap();
        assert!(close(row.b_value, H_035, 1e-12));
        assert!(row.b_value <= row.big_b_value);
        assert!(spectrum_branch(2.0, &pr).is_err());
    }
}
