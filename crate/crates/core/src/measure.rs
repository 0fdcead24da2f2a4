//! Oscillating Bernoulli product measures on the symbolic space.
//!
//! The digit bias at position `j` switches between two values on the blocks
//! of a phase schedule `1 = t_0 < t_1 < ⋯`: positions in `[t_{2k-1}, t_{2k})`
//! use `p`, positions in `[t_{2k}, t_{2k+1})` use `p~`. A digit 0 carries the
//! phase weight `w`, a digit 1 carries `1 - w`. All masses are kept in log2
//! form; depth 5040 masses are far below the smallest double.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbolic::{Cylinder, SymbolicSpace, ENUMERATION_LIMIT};

/// Which of the two weights governs a position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    /// Positions in `[t_{2k-1}, t_{2k})`.
    P,
    /// Positions in `[t_{2k}, t_{2k+1})`, including the first block `[1, t_1)`.
    PTilde,
}

impl Phase {
    fn of_index(i: usize) -> Phase {
        if i.is_multiple_of(2) {
            Phase::PTilde
        } else {
            Phase::P
        }
    }
}

/// A maximal run of positions sharing one phase; `end` is exclusive and
/// `None` for the unbounded tail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub start: usize,
    pub end: Option<usize>,
    pub phase: Phase,
}

/// Strictly increasing switch times starting at `t_0 = 1`.
///
/// Positions past the last switch time `t_K` belong to the block
/// `[t_K, ∞)`, whose phase follows the parity of `K`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct PhaseSchedule {
    switch_times: Vec<usize>,
}

impl PhaseSchedule {
    pub fn new(switch_times: Vec<usize>) -> Result<Self> {
        match switch_times.first() {
            None => return Err(Error::InvalidSchedule("schedule is empty".into())),
            Some(&t0) if t0 != 1 => {
                return Err(Error::InvalidSchedule(format!("t_0 = {t0}, expected 1")));
            }
            _ => {}
        }
        if let Some(i) = switch_times.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSchedule(format!(
                "t_{} = {} is not below t_{} = {}",
                i,
                switch_times[i],
                i + 1,
                switch_times[i + 1]
            )));
        }
        let schedule = PhaseSchedule { switch_times };
        if !schedule.vanishing_ratio() {
            warn!(
                "switch-time ratios t_i/t_(i+1) are not decreasing on {:?}; the oscillation may not separate the two branches",
                schedule.switch_times
            );
        }
        Ok(schedule)
    }

    /// A schedule with the single block `[1, ∞)` in the `p~` phase.
    pub fn homogeneous() -> Self {
        PhaseSchedule { switch_times: vec![1] }
    }

    /// The factorial schedule `[1, 2, 6, 24, 120, 720, 5040]`.
    pub fn factorial_demo() -> Self {
        PhaseSchedule { switch_times: vec![1, 2, 6, 24, 120, 720, 5040] }
    }

    pub fn switch_times(&self) -> &[usize] {
        &self.switch_times
    }

    /// Whether `t_i / t_(i+1)` decreases along the supplied prefix; the
    /// vanishing limit itself can only be checked asymptotically.
    pub fn vanishing_ratio(&self) -> bool {
        let ratios: Vec<f64> = self.switch_times.windows(2).map(|w| w[0] as f64 / w[1] as f64).collect();
        ratios.windows(2).all(|r| r[1] < r[0])
    }

    /// Phase of position `j >= 1`.
    pub fn phase(&self, j: usize) -> Phase {
        assert!(j >= 1, "positions start at 1");
        // index of the last t_i <= j
        let i = self.switch_times.partition_point(|&t| t <= j) - 1;
        Phase::of_index(i)
    }

    /// Blocks intersected with positions `1..=n`, clipped at `n`.
    pub fn blocks(&self, n: usize) -> impl Iterator<Item = Block> + '_ {
        let k = self.switch_times.len();
        (0..k).map_while(move |i| {
            let start = self.switch_times[i];
            if start > n {
                return None;
            }
            let end = self.switch_times.get(i + 1).copied();
            Some(Block { start, end: end.map(|e| e.min(n + 1)), phase: Phase::of_index(i) })
        })
    }

    /// Number of positions `j <= n` in each phase: `(a_n, n - a_n)` with
    /// `a_n` counting the `p` phase.
    pub fn phase_counts(&self, n: usize) -> (usize, usize) {
        let mut p_count = 0;
        for b in self.blocks(n) {
            let len = b.end.unwrap_or(n + 1) - b.start;
            if b.phase == Phase::P {
                p_count += len;
            }
        }
        (p_count, n - p_count)
    }

    /// Depths `t_k - 1` (last positions of complete blocks) in `[1, n]`,
    /// followed by `n` itself if it is not already one.
    pub fn block_ends(&self, n: usize) -> Vec<usize> {
        let mut ends: Vec<usize> =
            self.switch_times.iter().skip(1).map(|t| t - 1).filter(|&e| e >= 1 && e <= n).collect();
        if n >= 1 && ends.last() != Some(&n) {
            ends.push(n);
        }
        ends
    }

    /// The block containing position `j`.
    pub fn block_of(&self, j: usize) -> Block {
        let i = self.switch_times.partition_point(|&t| t <= j) - 1;
        Block { start: self.switch_times[i], end: self.switch_times.get(i + 1).copied(), phase: Phase::of_index(i) }
    }
}

impl TryFrom<Vec<usize>> for PhaseSchedule {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        PhaseSchedule::new(v)
    }
}

impl From<PhaseSchedule> for Vec<usize> {
    fn from(s: PhaseSchedule) -> Self {
        s.switch_times
    }
}

/// The two digit biases `0 < p < p~ <= 1/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernoulliPair {
    p: f64,
    p_tilde: f64,
}

impl BernoulliPair {
    pub fn new(p: f64, p_tilde: f64) -> Result<Self> {
        if !(p > 0.0) {
            return Err(Error::InvalidPair(format!("0 < p violated (p = {p})")));
        }
        if !(p < p_tilde) {
            return Err(Error::InvalidPair(format!("p < p~ violated (p = {p}, p~ = {p_tilde})")));
        }
        if !(p_tilde <= 0.5) {
            return Err(Error::InvalidPair(format!("p~ <= 1/2 violated (p~ = {p_tilde})")));
        }
        Ok(BernoulliPair { p, p_tilde })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn p_tilde(&self) -> f64 {
        self.p_tilde
    }

    /// The open interval of exponents `(-log2(1-p~), -log2 p~)`.
    pub fn alpha_interval(&self) -> (f64, f64) {
        (-(1.0 - self.p_tilde).log2(), -self.p_tilde.log2())
    }
}

/// Product measure with phase weights `(w, w~)` on a schedule.
///
/// Built either from a [`BernoulliPair`] (the measure `μ`) or from an
/// auxiliary pair `(r, r~)` in `(0, 1)²` (the measure `ν`).
#[derive(Clone, Debug, PartialEq)]
pub struct OscillatingMeasure {
    weight: f64,
    weight_tilde: f64,
    schedule: PhaseSchedule,
    // log2 of the digit weights, indexed [phase][digit]
    log2_weights: [[f64; 2]; 2],
}

impl OscillatingMeasure {
    pub fn new(pair: BernoulliPair, schedule: PhaseSchedule) -> Self {
        Self::with_weights(pair.p, pair.p_tilde, schedule)
    }

    /// The auxiliary measure with weights `r` on `p` blocks and `r~` on `p~` blocks.
    pub fn auxiliary(r: f64, r_tilde: f64, schedule: PhaseSchedule) -> Result<Self> {
        check_open_unit("r", r)?;
        check_open_unit("r_tilde", r_tilde)?;
        Ok(Self::with_weights(r, r_tilde, schedule))
    }

    fn with_weights(weight: f64, weight_tilde: f64, schedule: PhaseSchedule) -> Self {
        let lw = |w: f64| [w.log2(), (1.0 - w).log2()];
        OscillatingMeasure { weight, weight_tilde, schedule, log2_weights: [lw(weight), lw(weight_tilde)] }
    }

    pub fn schedule(&self) -> &PhaseSchedule {
        &self.schedule
    }

    /// Probability of digit 0 in the given phase.
    pub fn weight(&self, phase: Phase) -> f64 {
        match phase {
            Phase::P => self.weight,
            Phase::PTilde => self.weight_tilde,
        }
    }

    /// The (P, P~) weights.
    pub fn weights(&self) -> (f64, f64) {
        (self.weight, self.weight_tilde)
    }

    /// `log2 ϖ_j` for digit `d` at position `j`.
    pub fn log2_factor(&self, j: usize, d: u8) -> f64 {
        self.log2_factor_in(self.schedule.phase(j), d)
    }

    pub(crate) fn log2_factor_in(&self, phase: Phase, d: u8) -> f64 {
        let row = match phase {
            Phase::P => 0,
            Phase::PTilde => 1,
        };
        self.log2_weights[row][d as usize]
    }

    /// `log2 μ([ε1…εn]) = Σ log2 ϖ_j`.
    pub fn log2_mass(&self, c: &Cylinder) -> f64 {
        let n = c.depth();
        let mut total = 0.0;
        for b in self.schedule.blocks(n) {
            let end = b.end.unwrap_or(n + 1);
            for j in b.start..end {
                total += self.log2_factor_in(b.phase, c.digit(j));
            }
        }
        total
    }

    /// Checks `mass(c) = mass(c0) + mass(c1)` on every cylinder up to
    /// `max_depth` (at most 20) with relative tolerance `1e-12`.
    pub fn check_additivity(&self, max_depth: usize) -> Result<AdditivityReport> {
        if max_depth > ENUMERATION_LIMIT {
            return Err(Error::DepthOverflow { depth: max_depth, max: ENUMERATION_LIMIT });
        }
        let space = SymbolicSpace::default();
        let mut report = AdditivityReport { checked: 0, violations: Vec::new() };
        for n in 0..max_depth {
            for c in space.level_packing(n)? {
                let parent = self.log2_mass(&c).exp2();
                let kids = self.log2_mass(&c.child(0)).exp2() + self.log2_mass(&c.child(1)).exp2();
                let gap = (parent - kids).abs();
                report.checked += 1;
                if gap > 1e-12 * parent {
                    report.violations.push(AdditivityViolation { cylinder: c.to_string(), gap });
                }
            }
        }
        Ok(report)
    }
}

fn check_open_unit(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidProbability { name, value })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdditivityViolation {
    pub cylinder: String,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdditivityReport {
    pub checked: usize,
    pub violations: Vec<AdditivityViolation>,
}

impl AdditivityReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// JSON descriptor `{"p", "p_tilde", "schedule"}` of the measure `μ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureDescriptor {
    pub p: f64,
    pub p_tilde: f64,
    pub schedule: Vec<usize>,
}

impl MeasureDescriptor {
    pub fn build(&self) -> Result<OscillatingMeasure> {
        let pair = BernoulliPair::new(self.p, self.p_tilde)?;
        Ok(OscillatingMeasure::new(pair, PhaseSchedule::new(self.schedule.clone())?))
    }
}

/// JSON descriptor `{"r", "r_tilde", "schedule"}` of the auxiliary measure `ν`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxiliaryDescriptor {
    pub r: f64,
    pub r_tilde: f64,
    pub schedule: Vec<usize>,
}

impl AuxiliaryDescriptor {
    pub fn build(&self) -> Result<OscillatingMeasure> {
        OscillatingMeasure::auxiliary(self.r, self.r_tilde, PhaseSchedule::new(self.schedule.clone())?)
    }
}
