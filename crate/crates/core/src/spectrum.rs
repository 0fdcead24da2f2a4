//! Spectrum tables: numerical conjugates of the closed-form `b` and `B`
//! next to the entropies of the matched auxiliary measure, plus a
//! Monte-Carlo reconciliation against sampled exponent traces.

use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{
    alpha_of_r, b_endpoints, b_of_q, branch_conditions, r_of_q, spectrum_branch, AuxiliaryParams, B_of_q,
    BranchConditions, SpectrumBranch,
};
use crate::error::{Error, Result};
use crate::legendre::{legendre_transform, GridFunction, DEFAULT_Q_MAX, DEFAULT_Q_MIN, DEFAULT_Q_STEP};
use crate::measure::{BernoulliPair, OscillatingMeasure, PhaseSchedule};
use crate::sampling::{level_set_classifier, nu_exponent_moments, ExponentTrace, Membership};

/// Sampling grid for the free-energy functions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for QGrid {
    fn default() -> Self {
        QGrid { min: DEFAULT_Q_MIN, max: DEFAULT_Q_MAX, step: DEFAULT_Q_STEP }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectrumRow {
    pub branch: SpectrumBranch,
    /// Grid conjugate of `b` at `α`.
    pub b_star: f64,
    /// Grid conjugate of `B` at `α`.
    pub big_b_star: f64,
    /// `α` avoids the excluded kink intervals of `B`.
    pub packing_valid: bool,
    /// Both conjugate minimizers are interior grid nodes.
    pub grid_interior: bool,
    pub conditions: BranchConditions,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DroppedRow {
    pub alpha: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumTable {
    pub pair: BernoulliPair,
    pub grid: QGrid,
    pub rows: Vec<SpectrumRow>,
    pub dropped: Vec<DroppedRow>,
}

impl SpectrumTable {
    pub fn row_for(&self, alpha: f64) -> Option<&SpectrumRow> {
        self.rows.iter().find(|r| (r.branch.alpha - alpha).abs() <= 1e-12 * alpha.abs().max(1.0))
    }
}

/// `b` and `B` sampled on the grid.
pub fn free_energy_grids(pair: &BernoulliPair, grid: QGrid) -> Result<(GridFunction, GridFunction)> {
    let b = GridFunction::sample_step(grid.min, grid.max, grid.step, |q| b_of_q(q, pair))?;
    let big = GridFunction::sample_step(grid.min, grid.max, grid.step, |q| B_of_q(q, pair))?;
    Ok((b, big))
}

/// `count` evenly spaced exponents strictly inside the part of the
/// admissible interval where both `q` and `q~` stay within `±q_limit`.
pub fn alpha_grid(pair: &BernoulliPair, count: usize, q_limit: f64) -> Vec<f64> {
    let alpha_at = |q: f64, w: f64| alpha_of_r(r_of_q(q, w), w);
    let (lo, hi) = pair.alpha_interval();
    // α decreases in q on both branches
    let lo = lo.max(alpha_at(q_limit, pair.p())).max(alpha_at(q_limit, pair.p_tilde()));
    let hi = hi.min(alpha_at(-q_limit, pair.p())).min(alpha_at(-q_limit, pair.p_tilde()));
    (1..=count).map(|i| lo + (hi - lo) * i as f64 / (count + 1) as f64).collect()
}

/// One row per exponent, ordered by `α`.
pub fn build_spectrum(pair: &BernoulliPair, alphas: &[f64], grid: QGrid) -> Result<SpectrumTable> {
    let (lo, hi) = pair.alpha_interval();
    if let Some(&bad) = alphas.iter().find(|&&a| !(a > lo && a < hi)) {
        return Err(Error::AlphaOutOfRange { alpha: bad, lo, hi });
    }
    let (b_grid, big_grid) = free_energy_grids(pair, grid)?;
    let endpoints = b_endpoints(pair);
    let mut sorted = alphas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let results: Vec<std::result::Result<SpectrumRow, DroppedRow>> = sorted
        .par_iter()
        .map(|&alpha| {
            let branch = spectrum_branch(alpha, pair).map_err(|e| DroppedRow { alpha, reason: e.to_string() })?;
            let conditions = branch_conditions(alpha, pair).map_err(|e| DroppedRow { alpha, reason: e.to_string() })?;
            let b = legendre_transform(&b_grid, alpha);
            let big = legendre_transform(&big_grid, alpha);
            Ok(SpectrumRow {
                branch,
                b_star: b.value,
                big_b_star: big.value,
                packing_valid: !endpoints.excludes(alpha),
                grid_interior: !b.at_boundary && !big.at_boundary,
                conditions,
            })
        })
        .collect();
    let mut table = SpectrumTable { pair: *pair, grid, rows: Vec::new(), dropped: Vec::new() };
    for r in results {
        match r {
            Ok(row) => table.rows.push(row),
            Err(d) => {
                info!("dropping alpha = {}: {}", d.alpha, d.reason);
                table.dropped.push(d);
            }
        }
    }
    Ok(table)
}

/// Exponent traces of paths drawn from the auxiliary measure matched to one `α`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceBundle {
    pub aux: AuxiliaryParams,
    pub schedule: PhaseSchedule,
    pub traces: Vec<ExponentTrace>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RowReconciliation {
    pub alpha: f64,
    pub paths: usize,
    /// Paths classified in `X(α, α)` at the given tolerance.
    pub localized: usize,
    pub coverage: f64,
    /// Per recorded depth: mean `ν`-exponent and its exact 3σ half-width.
    pub nu_means: Vec<(usize, f64, f64)>,
    /// Every mean lies in `[min h, max h]` widened by its 3σ band.
    pub nu_bracketed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReconcileReport {
    pub tolerance: f64,
    pub rows: Vec<RowReconciliation>,
}

impl ReconcileReport {
    /// Smallest per-row coverage; 0 when nothing was reconciled.
    pub fn coverage(&self) -> f64 {
        self.rows.iter().map(|r| r.coverage).reduce(f64::min).unwrap_or(0.0)
    }
}

pub fn reconcile_with_monte_carlo(table: &SpectrumTable, bundles: &[TraceBundle], tol: f64) -> Result<ReconcileReport> {
    let mut rows = Vec::with_capacity(bundles.len());
    for bundle in bundles {
        let row = table
            .row_for(bundle.aux.alpha)
            .ok_or_else(|| Error::Mismatch(format!("no row at alpha = {}", bundle.aux.alpha)))?;
        let expected = row.branch.aux;
        if (expected.r - bundle.aux.r).abs() > 1e-12 || (expected.r_tilde - bundle.aux.r_tilde).abs() > 1e-12 {
            return Err(Error::Mismatch(format!(
                "traces use (r, r~) = ({}, {}), row has ({}, {})",
                bundle.aux.r, bundle.aux.r_tilde, expected.r, expected.r_tilde
            )));
        }
        let alpha = row.branch.alpha;
        let mut localized = 0;
        for t in &bundle.traces {
            if level_set_classifier(t, alpha, alpha, tol)? == Membership::InBoth {
                localized += 1;
            }
        }
        let nu = OscillatingMeasure::auxiliary(bundle.aux.r, bundle.aux.r_tilde, bundle.schedule.clone())?;
        let (h_lo, h_hi) = (row.branch.b_value, row.branch.big_b_value);
        let paths = bundle.traces.len();
        let mut nu_means = Vec::new();
        let mut nu_bracketed = true;
        if let Some(first) = bundle.traces.first() {
            for &d in &first.depths {
                let vals: Vec<f64> = bundle.traces.iter().filter_map(|t| t.nu_at(d)).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let band = 3.0 * nu_exponent_moments(&nu, d).sd_of_mean(vals.len());
                nu_bracketed &= mean >= h_lo - band && mean <= h_hi + band;
                nu_means.push((d, mean, band));
            }
        }
        rows.push(RowReconciliation {
            alpha,
            paths,
            localized,
            coverage: if paths == 0 { 0.0 } else { localized as f64 / paths as f64 },
            nu_means,
            nu_bracketed,
        });
    }
    Ok(ReconcileReport { tolerance: tol, rows })
}
