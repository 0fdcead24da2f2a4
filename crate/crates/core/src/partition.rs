//! Coarse partition functions at dyadic scales.
//!
//! At scale `δ = 2^-n` the maximal packings of the support are the level-`n`
//! cylinder families, so the fixed-scale moment sum is
//! `S_n(q) = Σ_{|c| = n} μ(c)^q`. For a product measure every position
//! contributes `w^q + (1-w)^q` independently, giving
//! `log2 S_n(q) = Σ_{j ≤ n} θ_{phase(j)}(q)`; no level is ever enumerated.

use serde::Serialize;

use crate::analytic::theta;
use crate::error::{Error, Result};
use crate::measure::{OscillatingMeasure, Phase};

/// Per-depth partition data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LevelStats {
    pub n: usize,
    pub q: f64,
    /// `log2 S_n(q)`
    pub log2_sum: f64,
    /// `log2 S_n(q) / n`
    pub tau_hat: f64,
    /// Number of `p`-phase positions `j <= n`.
    pub a_n: usize,
}

/// Joint moment sum of two measures on a shared schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JointLevelStats {
    pub n: usize,
    pub q1: f64,
    pub q2: f64,
    pub t: f64,
    pub log2_sum: f64,
}

fn phase_theta(m: &OscillatingMeasure, q: f64) -> [f64; 2] {
    [theta(q, m.weight(Phase::P)), theta(q, m.weight(Phase::PTilde))]
}

fn idx(phase: Phase) -> usize {
    match phase {
        Phase::P => 0,
        Phase::PTilde => 1,
    }
}

/// `log2 Σ_{|c| = n} μ(c)^q`, summed block by block.
pub fn level_log2_sum(m: &OscillatingMeasure, q: f64, n: usize) -> f64 {
    let th = phase_theta(m, q);
    m.schedule().blocks(n).map(|b| (b.end.unwrap_or(n + 1) - b.start) as f64 * th[idx(b.phase)]).sum()
}

/// `τ̂_n(q) = log2 S_n(q) / n`.
pub fn tau_hat(m: &OscillatingMeasure, q: f64, n: usize) -> f64 {
    assert!(n >= 1, "tau_hat needs n >= 1");
    level_log2_sum(m, q, n) / n as f64
}

pub fn level_stats(m: &OscillatingMeasure, q: f64, n: usize) -> LevelStats {
    let log2_sum = level_log2_sum(m, q, n);
    LevelStats { n, q, log2_sum, tau_hat: log2_sum / n as f64, a_n: m.schedule().phase_counts(n).0 }
}

/// `log2` of the best packing at scale `2^-n` with radii in `(2^-(n+2), 2^-n]`,
/// i.e. mixing depths `n` and `n + 1`.
///
/// Each depth-`n` cylinder is kept or replaced by its two children, which
/// multiplies its term by `2^θ_{phase(n+1)}(q)` uniformly, so the optimum is
/// `log2 S_n(q) + max(0, θ_{phase(n+1)}(q))`.
pub fn mixed_scale_log2_sum(m: &OscillatingMeasure, q: f64, n: usize) -> f64 {
    let next = phase_theta(m, q)[idx(m.schedule().phase(n + 1))];
    level_log2_sum(m, q, n) + next.max(0.0)
}

/// Window extrema of `τ̂_n(q)`, standing in for liminf/limsup.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Envelope {
    pub q: f64,
    pub lim_inf_est: f64,
    pub lim_sup_est: f64,
    pub argmin_n: usize,
    pub argmax_n: usize,
}

impl Envelope {
    pub fn width(&self) -> f64 {
        self.lim_sup_est - self.lim_inf_est
    }
}

fn check_window(n_min: usize, n_max: usize) -> Result<()> {
    if n_min < 1 || n_min >= n_max {
        return Err(Error::InvalidWindow { n_min, n_max });
    }
    Ok(())
}

/// Min and max of `τ̂_n(q)` over `n ∈ [n_min, n_max]` (first occurrence on ties).
///
/// Walks positions once, accumulating `θ_{phase(j)}(q)`.
pub fn subsequence_envelope(m: &OscillatingMeasure, q: f64, n_min: usize, n_max: usize) -> Result<Envelope> {
    check_window(n_min, n_max)?;
    let th = phase_theta(m, q);
    let mut acc = 0.0;
    let mut env =
        Envelope { q, lim_inf_est: f64::INFINITY, lim_sup_est: f64::NEG_INFINITY, argmin_n: n_min, argmax_n: n_min };
    for b in m.schedule().blocks(n_max) {
        let v = th[idx(b.phase)];
        for n in b.start..b.end.unwrap_or(n_max + 1) {
            acc += v;
            if n < n_min {
                continue;
            }
            let tau = acc / n as f64;
            if tau < env.lim_inf_est {
                env.lim_inf_est = tau;
                env.argmin_n = n;
            }
            if tau > env.lim_sup_est {
                env.lim_sup_est = tau;
                env.argmax_n = n;
            }
        }
    }
    Ok(env)
}

/// Per-phase `log2(w^q1 u^q2 + (1-w)^q1 (1-u)^q2)` for the pair `(μ, ν)`.
fn joint_phase_terms(mu: &OscillatingMeasure, nu: &OscillatingMeasure, q1: f64, q2: f64) -> [f64; 2] {
    let term = |phase: Phase| {
        let a = q1 * mu.log2_factor_in(phase, 0) + q2 * nu.log2_factor_in(phase, 0);
        let b = q1 * mu.log2_factor_in(phase, 1) + q2 * nu.log2_factor_in(phase, 1);
        let hi = a.max(b);
        hi + ((a - hi).exp2() + (b - hi).exp2()).log2()
    };
    [term(Phase::P), term(Phase::PTilde)]
}

/// `log2 Σ_{|c| = n} 2^(-n t) μ(c)^q1 ν(c)^q2`.
pub fn joint_level_log2_sum(
    mu: &OscillatingMeasure,
    nu: &OscillatingMeasure,
    q1: f64,
    q2: f64,
    t: f64,
    n: usize,
) -> Result<f64> {
    if mu.schedule() != nu.schedule() {
        return Err(Error::ScheduleMismatch);
    }
    let terms = joint_phase_terms(mu, nu, q1, q2);
    let body: f64 =
        mu.schedule().blocks(n).map(|b| (b.end.unwrap_or(n + 1) - b.start) as f64 * terms[idx(b.phase)]).sum();
    Ok(body - n as f64 * t)
}

pub fn joint_level_stats(
    mu: &OscillatingMeasure,
    nu: &OscillatingMeasure,
    q1: f64,
    q2: f64,
    t: f64,
    n: usize,
) -> Result<JointLevelStats> {
    Ok(JointLevelStats { n, q1, q2, t, log2_sum: joint_level_log2_sum(mu, nu, q1, q2, t, n)? })
}

/// Fixed-scale estimate of `φ(x) = τ_{(μ,ν)}(x, 1)` over a window of depths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhiEstimate {
    pub x: f64,
    pub value: f64,
    pub argmax_n: usize,
    /// Fraction of `p`-phase positions at `argmax_n`.
    pub phase_fraction: f64,
    /// Larger per-phase branch (over phases present in the window) minus
    /// `value`: what the phase mix at the best depth still gives away.
    pub gap_bound: f64,
}

/// `max_{n ∈ [n_min, n_max]} (1/n) log2 Σ μ(c)^x ν(c)`.
pub fn phi_hat(
    mu: &OscillatingMeasure,
    nu: &OscillatingMeasure,
    x: f64,
    n_min: usize,
    n_max: usize,
) -> Result<PhiEstimate> {
    check_window(n_min, n_max)?;
    if mu.schedule() != nu.schedule() {
        return Err(Error::ScheduleMismatch);
    }
    let terms = joint_phase_terms(mu, nu, x, 1.0);
    let mut acc = 0.0;
    let mut p_count = 0usize;
    let mut best = PhiEstimate { x, value: f64::NEG_INFINITY, argmax_n: n_min, phase_fraction: 0.0, gap_bound: 0.0 };
    for b in mu.schedule().blocks(n_max) {
        let v = terms[idx(b.phase)];
        for n in b.start..b.end.unwrap_or(n_max + 1) {
            acc += v;
            p_count += (b.phase == Phase::P) as usize;
            if n < n_min {
                continue;
            }
            let est = acc / n as f64;
            if est > best.value {
                best.value = est;
                best.argmax_n = n;
                best.phase_fraction = p_count as f64 / n as f64;
            }
        }
    }
    let top = mu.schedule().blocks(n_max).map(|b| terms[idx(b.phase)]).fold(f64::NEG_INFINITY, f64::max);
    best.gap_bound = top - best.value;
    Ok(best)
}
