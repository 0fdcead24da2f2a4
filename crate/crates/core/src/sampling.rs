//! Monte-Carlo paths and local Hölder exponent traces.
//!
//! Paths are drawn digit by digit from a product measure. Each path owns a
//! ChaCha8 stream (`rand_chacha` 0.9); the stream for path `i` of a run is
//! derived from `(master seed, i)`, so results do not depend on how paths
//! are scheduled across threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{OscillatingMeasure, Phase};
use crate::symbolic::{Cylinder, Path};

/// Seed of path `index` in a run with the given master seed.
pub fn path_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

/// Draws `depth` digits; digit `j` is 0 with the phase weight of `m` at `j`.
pub fn sample_path(m: &OscillatingMeasure, depth: usize, seed: u64) -> Path {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut digits = Vec::with_capacity(depth);
    for b in m.schedule().blocks(depth) {
        let w = m.weight(b.phase);
        for _ in b.start..b.end.unwrap_or(depth + 1) {
            digits.push(if rng.random::<f64>() < w { 0 } else { 1 });
        }
    }
    let c = Cylinder::from_digits(&digits).expect("sampled digits are binary");
    Path::sampled(c, seed)
}

/// Per-depth quotients `-log2 μ(C_n(x)) / n` and `-log2 ν(C_n(x)) / n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentTrace {
    pub depths: Vec<usize>,
    pub mu_exponents: Vec<f64>,
    pub nu_exponents: Vec<f64>,
    pub seed: Option<u64>,
    /// First position of the phase block holding the deepest recorded depth.
    pub tail_start: usize,
}

impl ExponentTrace {
    /// Entries at depths `>= tail_start`.
    fn tail(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.depths
            .iter()
            .zip(self.mu_exponents.iter().zip(&self.nu_exponents))
            .filter(move |(&d, _)| d >= self.tail_start)
            .map(|(&d, (&a, &b))| (d, a, b))
    }

    /// `(min, max)` of the `μ`-exponent over the tail block.
    pub fn mu_tail_envelope(&self) -> (f64, f64) {
        self.tail().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, a, _)| (lo.min(a), hi.max(a)))
    }

    pub fn mu_at(&self, depth: usize) -> Option<f64> {
        self.depths.iter().position(|&d| d == depth).map(|i| self.mu_exponents[i])
    }

    pub fn nu_at(&self, depth: usize) -> Option<f64> {
        self.depths.iter().position(|&d| d == depth).map(|i| self.nu_exponents[i])
    }
}

/// Records both exponents of `x` at the requested depths (sorted, deduplicated).
pub fn exponent_trace(
    x: &Path,
    mu: &OscillatingMeasure,
    nu: &OscillatingMeasure,
    depths: &[usize],
) -> Result<ExponentTrace> {
    let mut depths = depths.to_vec();
    depths.sort_unstable();
    depths.dedup();
    let deepest = *depths.last().ok_or_else(|| Error::Precondition("no depths requested".into()))?;
    if depths[0] == 0 || deepest > x.len() {
        return Err(Error::DepthOverflow { depth: deepest.max(1), max: x.len() });
    }
    let mut mu_exponents = Vec::with_capacity(depths.len());
    let mut nu_exponents = Vec::with_capacity(depths.len());
    let (mut lm, mut ln) = (0.0, 0.0);
    let mut next = depths.iter().peekable();
    for j in 1..=deepest {
        let d = x.digit(j);
        lm += mu.log2_factor(j, d);
        ln += nu.log2_factor(j, d);
        if next.peek() == Some(&&j) {
            next.next();
            mu_exponents.push(-lm / j as f64);
            nu_exponents.push(-ln / j as f64);
        }
    }
    Ok(ExponentTrace {
        tail_start: mu.schedule().block_of(deepest).start,
        depths,
        mu_exponents,
        nu_exponents,
        seed: x.seed(),
    })
}

/// Samples `paths` paths from `nu` and traces each at `depths`.
pub fn sample_traces(
    mu: &OscillatingMeasure,
    nu: &OscillatingMeasure,
    depths: &[usize],
    paths: usize,
    master_seed: u64,
) -> Result<Vec<ExponentTrace>> {
    let deepest = depths.iter().copied().max().unwrap_or(0);
    (0..paths as u64)
        .into_par_iter()
        .map(|i| {
            let x = sample_path(nu, deepest, path_seed(master_seed, i));
            exponent_trace(&x, mu, nu, depths)
        })
        .collect()
}

/// Level-set membership read off the tail envelope of a trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Membership {
    /// Both `liminf >= α` and `limsup <= β` hold within tolerance.
    InBoth,
    /// Only the lower level set `X̲(α)`.
    InLower,
    /// Only the upper level set `X̄(β)`.
    InUpper,
    Undetermined,
}

pub fn level_set_classifier(t: &ExponentTrace, alpha: f64, beta: f64, tol: f64) -> Result<Membership> {
    if alpha > beta {
        return Err(Error::Precondition(format!("alpha = {alpha} exceeds beta = {beta}")));
    }
    let (lo, hi) = t.mu_tail_envelope();
    if !lo.is_finite() {
        return Ok(Membership::Undetermined);
    }
    Ok(match (lo >= alpha - tol, hi <= beta + tol) {
        (true, true) => Membership::InBoth,
        (true, false) => Membership::InLower,
        (false, true) => Membership::InUpper,
        (false, false) => Membership::Undetermined,
    })
}

/// Exact mean and variance of an exponent at one depth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

impl Moments {
    /// Standard deviation of the average of `paths` independent copies.
    pub fn sd_of_mean(&self, paths: usize) -> f64 {
        (self.variance / paths as f64).sqrt()
    }
}

// Σ over positions of per-phase (mean, var) of -log2 of the `of` weight
// when digits are drawn from `from`.
fn exponent_moments(of: &OscillatingMeasure, from: &OscillatingMeasure, n: usize) -> Moments {
    let per_phase = |phase: Phase| {
        let u = from.weight(phase);
        let (a, b) = (-of.log2_factor_in(phase, 0), -of.log2_factor_in(phase, 1));
        (u * a + (1.0 - u) * b, u * (1.0 - u) * (a - b).powi(2))
    };
    let (mut mean, mut var) = (0.0, 0.0);
    for blk in of.schedule().blocks(n) {
        let len = (blk.end.unwrap_or(n + 1) - blk.start) as f64;
        let (m, v) = per_phase(blk.phase);
        mean += len * m;
        var += len * v;
    }
    let n = n as f64;
    Moments { mean: mean / n, variance: var / (n * n) }
}

/// Moments of `-log2 μ(C_n(x)) / n` for `x ~ ν`.
pub fn mu_exponent_moments(mu: &OscillatingMeasure, nu: &OscillatingMeasure, n: usize) -> Moments {
    exponent_moments(mu, nu, n)
}

/// Moments of `-log2 ν(C_n(x)) / n` for `x ~ ν`.
pub fn nu_exponent_moments(nu: &OscillatingMeasure, n: usize) -> Moments {
    exponent_moments(nu, nu, n)
}

/// Cross-path averages at one depth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DepthSummary {
    pub depth: usize,
    pub paths: usize,
    pub mean_mu: f64,
    pub mean_nu: f64,
    pub min_mu: f64,
    pub max_mu: f64,
}

pub fn summarize_depth(traces: &[ExponentTrace], depth: usize) -> Option<DepthSummary> {
    let mu: Vec<f64> = traces.iter().filter_map(|t| t.mu_at(depth)).collect();
    let nu: Vec<f64> = traces.iter().filter_map(|t| t.nu_at(depth)).collect();
    if mu.is_empty() {
        return None;
    }
    let k = mu.len() as f64;
    Some(DepthSummary {
        depth,
        paths: mu.len(),
        mean_mu: mu.iter().sum::<f64>() / k,
        mean_nu: nu.iter().sum::<f64>() / k,
        min_mu: mu.iter().copied().fold(f64::INFINITY, f64::min),
        max_mu: mu.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{entropy_h, solve_r_tilde};
    use crate::measure::{BernoulliPair, PhaseSchedule};

    fn demo() -> (BernoulliPair, OscillatingMeasure, OscillatingMeasure) {
        let pair = BernoulliPair::new(0.2, 0.4).unwrap();
        let s = PhaseSchedule::factorial_demo();
        let aux = solve_r_tilde(0.35, &pair).unwrap();
        let mu = OscillatingMeasure::new(pair, s.clone());
        let nu = OscillatingMeasure::auxiliary(aux.r, aux.r_tilde, s).unwrap();
        (pair, mu, nu)
    }

    #[test]
    fn same_seed_same_path() {
        let (_, _, nu) = demo();
        assert_eq!(sample_path(&nu, 500, 7), sample_path(&nu, 500, 7));
        assert_ne!(sample_path(&nu, 500, 7), sample_path(&nu, 500, 8));
        assert_ne!(path_seed(1, 0), path_seed(1, 1));
        assert_eq!(path_seed(1, 5), path_seed(1, 5));
    }

    #[test]
    fn zero_frequency_per_block() {
        let nu = OscillatingMeasure::auxiliary(0.9, 0.3, PhaseSchedule::new(vec![1, 1001, 3001]).unwrap()).unwrap();
        let x = sample_path(&nu, 3000, 11);
        for (lo, hi, w) in [(1, 1001, 0.3), (1001, 3001, 0.9)] {
            let len = (hi - lo) as f64;
            let zeros = (lo..hi).filter(|&j| x.digit(j) == 0).count() as f64;
            let sd = (len * w * (1.0 - w)).sqrt();
            assert!((zeros - len * w).abs() <= 3.0 * sd, "block [{lo}, {hi})");
        }
    }

    #[test]
    fn fair_coin_exponent_is_one() {
        let fair = OscillatingMeasure::auxiliary(0.5, 0.5, PhaseSchedule::homogeneous()).unwrap();
        let x = sample_path(&fair, 200, 3);
        let t = exponent_trace(&x, &fair, &fair, &[1, 10, 50, 200]).unwrap();
        assert!(t.mu_exponents.iter().all(|&e| e == 1.0));
        assert_eq!(level_set_classifier(&t, 1.0, 1.0, 0.0).unwrap(), Membership::InBoth);
        assert!(level_set_classifier(&t, 1.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn trace_matches_direct_masses() {
        let (_, mu, nu) = demo();
        let x = sample_path(&nu, 900, 21);
        let t = exponent_trace(&x, &mu, &nu, &[900, 5, 120, 5]).unwrap();
        assert_eq!(t.depths, vec![5, 120, 900]);
        for (i, &d) in t.depths.iter().enumerate() {
            let c = crate::symbolic::SymbolicSpace::default().prefix(&x, d).unwrap();
            assert!((t.mu_exponents[i] + mu.log2_mass(&c) / d as f64).abs() < 1e-12);
            assert!((t.nu_exponents[i] + nu.log2_mass(&c) / d as f64).abs() < 1e-12);
        }
        assert_eq!(t.tail_start, 720);
        assert!(exponent_trace(&x, &mu, &nu, &[901]).is_err());
        assert!(exponent_trace(&x, &mu, &nu, &[0, 4]).is_err());
    }

    #[test]
    fn exponents_are_bounded_by_extreme_runs() {
        let (_, mu, nu) = demo();
        let depths: Vec<usize> = (1..=2000).collect();
        let (lo, hi) = (-(0.8f64.log2()), -(0.2f64.log2()));
        for seed in 0..5 {
            let t = exponent_trace(&sample_path(&nu, 2000, seed), &mu, &nu, &depths).unwrap();
            assert!(t.mu_exponents.iter().all(|&e| e >= lo - 1e-12 && e <= hi + 1e-12));
        }
    }

    #[test]
    fn mean_exponent_is_alpha_in_both_phases() {
        let (pair, mu, nu) = demo();
        let aux = solve_r_tilde(0.35, &pair).unwrap();
        for n in [1, 5, 100, 720, 5039] {
            assert!((mu_exponent_moments(&mu, &nu, n).mean - aux.alpha).abs() < 1e-12);
        }
        // p-phase-only and p~-phase-only depths give the two entropies
        assert!((nu_exponent_moments(&nu, 1).mean - entropy_h(aux.r_tilde)).abs() < 1e-12);
        let m = nu_exponent_moments(&nu, 5039);
        let f = 4420.0 / 5039.0;
        assert!((m.mean - (f * entropy_h(0.35) + (1.0 - f) * entropy_h(aux.r_tilde))).abs() < 1e-12);
    }

    #[test]
    fn traces_are_reproducible_across_thread_counts() {
        let (_, mu, nu) = demo();
        let a = sample_traces(&mu, &nu, &[10, 100], 16, 99).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| sample_traces(&mu, &nu, &[10, 100], 16, 99).unwrap());
        assert_eq!(a, b);
        let s = summarize_depth(&a, 100).unwrap();
        assert_eq!(s.paths, 16);
        assert!(summarize_depth(&a, 11).is_none());
    }
}
