//! The acceptance checks, each a pure function of a validated experiment.
//!
//! Reports contain no timings, so two runs of the same experiment
//! serialize to identical bytes; callers time checks themselves.

use std::time::Instant;

use log::info;
use serde::Serialize;
use serde_json::{json, Value};

use crate::analytic::{
    b_of_q, branch_conditions, legendre_identity_check, phi_branches, phi_closed_form, solve_r_tilde, theta, B_of_q,
    Branch, MATCHING_TOLERANCE,
};
use crate::config::Experiment;
use crate::error::{Error, Result};
use crate::legendre::{legendre_curve, GridFunction};
use crate::measure::Phase;
use crate::oracle::enumerated_log2_sum;
use crate::output::to_json_bytes;
use crate::partition::{level_log2_sum, phi_hat, subsequence_envelope, tau_hat};
use crate::sampling::{mu_exponent_moments, nu_exponent_moments, sample_traces, ExponentTrace};
use crate::spectrum::{alpha_grid, build_spectrum, free_energy_grids, reconcile_with_monte_carlo, TraceBundle};

// ---------------------------------------------------------------------------
// Tolerances and sample sizes
// ---------------------------------------------------------------------------

pub const ORACLE_TOL: f64 = 1e-12;
pub const ANCHOR_TOL: f64 = 1e-12;
/// Envelope width must reach this fraction of `|θ(2) - θ~(2)|`.
pub const OSCILLATION_FRACTION: f64 = 0.5;
pub const OSCILLATION_Q: f64 = 2.0;
pub const ENTROPY_IDENTITY_TOL: f64 = 1e-10;
pub const ENTROPY_Q_RANGE: (f64, f64) = (-8.0, 8.0);
pub const ENTROPY_Q_STEP: f64 = 1e-2;
pub const CONJUGATE_TOL: f64 = 1e-5;
pub const SOLVER_SAMPLES: usize = 50;
pub const SOLVER_TOL: f64 = MATCHING_TOLERANCE;
pub const PHI_DERIVATIVE_TOL: f64 = 1e-6;
pub const PHI_DIFF_STEP: f64 = 1e-5;
pub const PHI_WINDOW_TOL: f64 = 0.05;
pub const PHI_POINTS: [f64; 3] = [-1.0, 0.5, 1.0];
pub const CLT_SIGMAS: f64 = 3.0;
pub const LOCALIZATION_COVERAGE: f64 = 0.95;
pub const CONDITION_SAMPLES: usize = 1000;
pub const CONVEXITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub summary: String,
    pub details: Value,
}

impl CheckResult {
    fn new(id: u8, name: &'static str, passed: bool, summary: String, details: Value) -> Self {
        CheckResult { id, name, passed, summary, details }
    }

    fn from_result(id: u8, name: &'static str, r: Result<(bool, String, Value)>) -> Self {
        match r {
            Ok((passed, summary, details)) => Self::new(id, name, passed, summary, details),
            Err(e) => Self::new(id, name, false, format!("error: {e}"), json!({ "error": e.to_string() })),
        }
    }
}

pub type Check = fn(&Experiment) -> CheckResult;

/// Checks 1 to 10 in order; determinism (11) is [`run_verify`]'s job.
pub const CHECKS: [(u8, &str, Check); 10] = [
    (1, "oracle equivalence", check_oracle_equivalence),
    (2, "trivial anchors", check_trivial_anchors),
    (3, "b/B oscillation", check_oscillation),
    (4, "entropy identity", check_entropy_identity),
    (5, "numerical conjugate", check_numerical_conjugate),
    (6, "constraint solver", check_constraint_solver),
    (7, "phi consistency", check_phi_consistency),
    (8, "monte-carlo localization", check_localization),
    (9, "condition coverage", check_condition_coverage),
    (10, "convexity", check_convexity),
];

pub fn check_oracle_equivalence(exp: &Experiment) -> CheckResult {
    let part = &exp.config.partition;
    let mut worst = (0.0f64, 0usize, 0.0f64);
    for n in 1..=part.oracle_max_depth {
        for &q in &part.q_values {
            let err = (level_log2_sum(&exp.mu, q, n) - enumerated_log2_sum(&exp.mu, q, n)).abs();
            if !(err <= worst.0) {
                worst = (err, n, q);
            }
        }
    }
    let passed = worst.0 <= ORACLE_TOL;
    CheckResult::new(
        1,
        "oracle equivalence",
        passed,
        format!("max |factorized - enumerated| = {:.3e} over n <= {}", worst.0, part.oracle_max_depth),
        json!({ "max_abs_error": worst.0, "at_n": worst.1, "at_q": worst.2, "tolerance": ORACLE_TOL,
                "n_max": part.oracle_max_depth, "q_values": part.q_values }),
    )
}

pub fn check_trivial_anchors(exp: &Experiment) -> CheckResult {
    let n_max = exp.config.partition.envelope_window[1].max(exp.config.sampling.depth);
    let (mut e0, mut e1) = (0.0f64, 0.0f64);
    for n in 1..=n_max {
        e0 = e0.max((tau_hat(&exp.mu, 0.0, n) - 1.0).abs());
        e1 = e1.max(tau_hat(&exp.mu, 1.0, n).abs());
    }
    let passed = e0 <= ANCHOR_TOL && e1 <= ANCHOR_TOL;
    CheckResult::new(
        2,
        "trivial anchors",
        passed,
        format!("max |tau_hat(0) - 1| = {e0:.3e}, max |tau_hat(1)| = {e1:.3e} for n <= {n_max}"),
        json!({ "q0_max_error": e0, "q1_max_error": e1, "n_max": n_max, "tolerance": ANCHOR_TOL }),
    )
}

pub fn check_oscillation(exp: &Experiment) -> CheckResult {
    let [lo, hi] = exp.config.partition.envelope_window;
    let r = (|| {
        let env = subsequence_envelope(&exp.mu, OSCILLATION_Q, lo, hi)?;
        let gap = (theta(OSCILLATION_Q, exp.pair.p()) - theta(OSCILLATION_Q, exp.pair.p_tilde())).abs();
        let threshold = OSCILLATION_FRACTION * gap;
        let ends = exp.schedule.block_ends(hi);
        let max_at_p_end = ends.contains(&env.argmax_n) && exp.schedule.phase(env.argmax_n) == Phase::P;
        let min_at_pt_end = ends.contains(&env.argmin_n) && exp.schedule.phase(env.argmin_n) == Phase::PTilde;
        let passed = env.width() >= threshold && max_at_p_end && min_at_pt_end;
        Ok((
            passed,
            format!(
                "width {:.6} >= {:.6}; max at n = {} (p block end: {}), min at n = {} (p~ block end: {})",
                env.width(),
                threshold,
                env.argmax_n,
                max_at_p_end,
                env.argmin_n,
                min_at_pt_end
            ),
            json!({ "window": [lo, hi], "q": OSCILLATION_Q, "lim_inf_est": env.lim_inf_est,
                    "lim_sup_est": env.lim_sup_est, "argmin_n": env.argmin_n, "argmax_n": env.argmax_n,
                    "width": env.width(), "threshold": threshold,
                    "max_at_p_block_end": max_at_p_end, "min_at_p_tilde_block_end": min_at_pt_end }),
        ))
    })();
    CheckResult::from_result(3, "b/B oscillation", r)
}

pub fn check_entropy_identity(exp: &Experiment) -> CheckResult {
    let (lo, hi) = ENTROPY_Q_RANGE;
    let steps = ((hi - lo) / ENTROPY_Q_STEP).round() as usize;
    let mut worst = [0.0f64; 2];
    for i in 0..=steps {
        let q = lo + (hi - lo) * i as f64 / steps as f64;
        worst[0] = worst[0].max(legendre_identity_check(q, &exp.pair, Branch::Theta));
        worst[1] = worst[1].max(legendre_identity_check(q, &exp.pair, Branch::ThetaTilde));
    }
    let passed = worst.iter().all(|&w| w <= ENTROPY_IDENTITY_TOL);
    CheckResult::new(
        4,
        "entropy identity",
        passed,
        format!("max residual {:.3e} (theta), {:.3e} (theta~) on {} nodes", worst[0], worst[1], steps + 1),
        json!({ "theta_max_residual": worst[0], "theta_tilde_max_residual": worst[1],
                "q_range": [lo, hi], "q_step": ENTROPY_Q_STEP, "tolerance": ENTROPY_IDENTITY_TOL }),
    )
}

fn reference_alphas(exp: &Experiment) -> Vec<f64> {
    alpha_grid(&exp.pair, exp.config.grids.alpha_count, exp.config.grids.q_limit)
}

pub fn check_numerical_conjugate(exp: &Experiment) -> CheckResult {
    let r = (|| {
        let alphas = reference_alphas(exp);
        let table = build_spectrum(&exp.pair, &alphas, exp.grid)?;
        let (mut eb, mut ebig, mut packing) = (0.0f64, 0.0f64, 0usize);
        for row in &table.rows {
            eb = eb.max((row.b_star - row.branch.b_value).abs());
            if row.packing_valid {
                packing += 1;
                ebig = ebig.max((row.big_b_star - row.branch.big_b_value).abs());
            }
        }
        let complete = table.dropped.is_empty() && table.rows.len() == alphas.len();
        let passed = complete && eb <= CONJUGATE_TOL && ebig <= CONJUGATE_TOL;
        Ok((
            passed,
            format!(
                "{} rows ({} dropped); max |b* - min h| = {eb:.3e}, max |B* - max h| = {ebig:.3e} on {packing} packing-valid rows",
                table.rows.len(),
                table.dropped.len()
            ),
            json!({ "rows": table.rows.len(), "dropped": table.dropped.len(), "packing_valid_rows": packing,
                    "b_max_error": eb, "big_b_max_error": ebig, "tolerance": CONJUGATE_TOL,
                    "alpha_range": [alphas.first(), alphas.last()] }),
        ))
    })();
    CheckResult::from_result(5, "numerical conjugate", r)
}

pub fn check_constraint_solver(exp: &Experiment) -> CheckResult {
    let (lo, hi) = crate::analytic::r_window(&exp.pair);
    let mut worst = 0.0f64;
    let mut in_unit = true;
    let mut failures = Vec::new();
    for i in 1..=SOLVER_SAMPLES {
        let r = lo + (hi - lo) * i as f64 / (SOLVER_SAMPLES + 1) as f64;
        match solve_r_tilde(r, &exp.pair) {
            Ok(aux) => {
                worst = worst.max(aux.matching_residual(&exp.pair));
                in_unit &= aux.r_tilde > 0.0 && aux.r_tilde < 1.0;
            }
            Err(e) => failures.push(format!("r = {r}: {e}")),
        }
    }
    let outside = [lo, hi, lo - 0.01, hi + 0.01];
    let rejected = outside.iter().all(|&r| matches!(solve_r_tilde(r, &exp.pair), Err(Error::Inadmissible { .. })));
    let configured = exp.aux.matching_residual(&exp.pair);
    let passed = failures.is_empty() && worst <= SOLVER_TOL && in_unit && rejected && configured <= SOLVER_TOL;
    CheckResult::new(
        6,
        "constraint solver",
        passed,
        format!(
            "max residual {worst:.3e} on {SOLVER_SAMPLES} r values; inadmissible rejected: {rejected}; configured pair residual {configured:.3e}"
        ),
        json!({ "r_window": [lo, hi], "max_residual": worst, "r_tilde_in_unit_interval": in_unit,
                "solver_failures": failures, "inadmissible_rejected": rejected,
                "configured_r": exp.aux.r, "configured_r_tilde": exp.aux.r_tilde,
                "configured_residual": configured, "tolerance": SOLVER_TOL }),
    )
}

pub fn check_phi_consistency(exp: &Experiment) -> CheckResult {
    let r = (|| {
        let phi = |x: f64| phi_closed_form(x, &exp.pair, &exp.aux);
        let at_zero = phi(0.0);
        let slope = (phi(PHI_DIFF_STEP) - phi(-PHI_DIFF_STEP)) / (2.0 * PHI_DIFF_STEP);
        let slope_err = (slope + exp.aux.alpha).abs();
        let [lo, hi] = exp.config.partition.phi_window;
        let mut points = Vec::new();
        let mut window_ok = true;
        for &x in &PHI_POINTS {
            let est = phi_hat(&exp.mu, &exp.nu, x, lo, hi)?;
            let exact = phi(x);
            let (bp, bpt) = phi_branches(x, &exp.pair, &exp.aux);
            let err = (est.value - exact).abs();
            window_ok &= err <= PHI_WINDOW_TOL;
            points.push(json!({ "x": x, "phi_hat": est.value, "phi": exact, "abs_error": err,
                                "argmax_n": est.argmax_n, "phase_fraction": est.phase_fraction,
                                "gap_bound": est.gap_bound, "branch_p": bp, "branch_p_tilde": bpt }));
        }
        let passed = at_zero == 0.0 && slope_err <= PHI_DERIVATIVE_TOL && window_ok;
        Ok((
            passed,
            format!("phi(0) = {at_zero}; |phi'(0) + alpha| = {slope_err:.3e}; window estimates within {PHI_WINDOW_TOL}: {window_ok}"),
            json!({ "phi_at_zero": at_zero, "alpha": exp.aux.alpha, "central_difference": slope,
                    "derivative_error": slope_err, "derivative_tolerance": PHI_DERIVATIVE_TOL,
                    "window": [lo, hi], "window_tolerance": PHI_WINDOW_TOL, "points": points }),
        ))
    })();
    CheckResult::from_result(7, "phi consistency", r)
}

/// `t` restricted to the given depths (which must all be recorded).
pub fn restrict_trace(t: &ExponentTrace, depths: &[usize]) -> ExponentTrace {
    let keep: Vec<usize> = (0..t.depths.len()).filter(|&i| depths.contains(&t.depths[i])).collect();
    let deepest = keep.last().map(|&i| t.depths[i]);
    ExponentTrace {
        depths: keep.iter().map(|&i| t.depths[i]).collect(),
        mu_exponents: keep.iter().map(|&i| t.mu_exponents[i]).collect(),
        nu_exponents: keep.iter().map(|&i| t.nu_exponents[i]).collect(),
        seed: t.seed,
        tail_start: if deepest == t.depths.last().copied() { t.tail_start } else { 0 },
    }
}

/// Traces for the configured sampling run, recorded at every block end and checkpoint.
pub fn sampling_run(exp: &Experiment) -> Result<Vec<ExponentTrace>> {
    let s = &exp.config.sampling;
    let mut depths = exp.schedule.block_ends(s.depth);
    depths.extend(&s.checkpoints);
    sample_traces(&exp.mu, &exp.nu, &depths, s.paths, s.master_seed)
}

pub fn check_localization(exp: &Experiment) -> CheckResult {
    let r = (|| {
        let traces = sampling_run(exp)?;
        localization_verdict(exp, &traces)
    })();
    CheckResult::from_result(8, "monte-carlo localization", r)
}

/// Criterion 8 evaluated on already sampled traces.
pub fn localization_verdict(exp: &Experiment, traces: &[ExponentTrace]) -> Result<(bool, String, Value)> {
    let s = &exp.config.sampling;
    let alpha = exp.aux.alpha;
    let paths = traces.len();

    let mut checkpoints = Vec::new();
    let mut means_ok = true;
    for &d in &s.checkpoints {
        let vals: Vec<f64> = traces.iter().filter_map(|t| t.mu_at(d)).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let m = mu_exponent_moments(&exp.mu, &exp.nu, d);
        let band = CLT_SIGMAS * m.sd_of_mean(vals.len());
        let ok = (mean - alpha).abs() <= band;
        means_ok &= ok;
        checkpoints.push(json!({ "depth": d, "mean_mu_exponent": mean, "exact_mean": m.mean,
                                 "band": band, "within_band": ok }));
    }

    let ends = exp.schedule.block_ends(s.depth);
    let block_end_traces: Vec<ExponentTrace> = traces.iter().map(|t| restrict_trace(t, &ends)).collect();
    let table = build_spectrum(&exp.pair, &[alpha], exp.grid)?;
    let bundle = TraceBundle { aux: exp.aux, schedule: exp.schedule.clone(), traces: block_end_traces };
    let report = reconcile_with_monte_carlo(&table, std::slice::from_ref(&bundle), s.tolerance)?;
    let rec = &report.rows[0];

    let mut nu_ok = rec.nu_bracketed;
    let mut nu_points = Vec::new();
    for &(d, mean, band) in &rec.nu_means {
        let exact = nu_exponent_moments(&exp.nu, d).mean;
        let ok = (mean - exact).abs() <= band;
        nu_ok &= ok;
        nu_points.push(json!({ "depth": d, "mean_nu_exponent": mean, "exact_mean": exact, "band": band,
                               "matches_expectation": ok }));
    }
    let row = table.rows[0];
    let passed = means_ok && rec.coverage >= LOCALIZATION_COVERAGE && nu_ok;
    Ok((
        passed,
        format!(
            "{}/{} paths in X(alpha, alpha) at tol {} ({:.1}%); checkpoint means in 3-sigma band: {means_ok}; nu means bracketed: {nu_ok}",
            rec.localized,
            paths,
            s.tolerance,
            100.0 * rec.coverage
        ),
        json!({ "alpha": alpha, "r": exp.aux.r, "r_tilde": exp.aux.r_tilde, "paths": paths,
                "depth": s.depth, "master_seed": s.master_seed, "tolerance": s.tolerance,
                "localized": rec.localized, "coverage": rec.coverage,
                "required_coverage": LOCALIZATION_COVERAGE, "checkpoints": checkpoints,
                "h_min": row.branch.b_value, "h_max": row.branch.big_b_value,
                "nu_bracketed": rec.nu_bracketed, "nu_block_ends": nu_points }),
    ))
}

pub fn check_condition_coverage(exp: &Experiment) -> CheckResult {
    let r = (|| {
        let (lo, hi) = exp.pair.alpha_interval();
        let mut counts = [0usize; 3];
        let mut uncovered = Vec::new();
        for i in 1..=CONDITION_SAMPLES {
            let a = lo + (hi - lo) * i as f64 / (CONDITION_SAMPLES + 1) as f64;
            let c = branch_conditions(a, &exp.pair)?;
            counts[0] += c.c1 as usize;
            counts[1] += c.c2 as usize;
            counts[2] += c.c3 as usize;
            if !c.any() {
                uncovered.push(a);
            }
        }
        Ok((
            uncovered.is_empty(),
            format!(
                "{} of {CONDITION_SAMPLES} exponents uncovered (c1: {}, c2: {}, c3: {})",
                uncovered.len(),
                counts[0],
                counts[1],
                counts[2]
            ),
            json!({ "samples": CONDITION_SAMPLES, "alpha_interval": [lo, hi], "c1": counts[0], "c2": counts[1],
                    "c3": counts[2], "uncovered": uncovered }),
        ))
    })();
    CheckResult::from_result(9, "condition coverage", r)
}

pub fn check_convexity(exp: &Experiment) -> CheckResult {
    let r = (|| {
        let g = exp.grid;
        let sample = |f: &dyn Fn(f64) -> f64| GridFunction::sample_step(g.min, g.max, g.step, f);
        let mut convex = Vec::new();
        let th = sample(&|q| theta(q, exp.pair.p()))?;
        convex.push(("theta".to_string(), th.is_midpoint_convex(CONVEXITY_TOL)));
        let tht = sample(&|q| theta(q, exp.pair.p_tilde()))?;
        convex.push(("theta_tilde".to_string(), tht.is_midpoint_convex(CONVEXITY_TOL)));
        for &n in &exp.config.partition.depths {
            let t = sample(&|q| tau_hat(&exp.mu, q, n))?;
            convex.push((format!("tau_hat_n{n}"), t.is_midpoint_convex(CONVEXITY_TOL)));
        }
        let (b_grid, big_grid) = free_energy_grids(&exp.pair, g)?;
        convex.push(("B".to_string(), big_grid.is_midpoint_convex(CONVEXITY_TOL)));

        let alphas = reference_alphas(exp);
        let mut concave = Vec::new();
        for (name, grid) in [("b_star", &b_grid), ("B_star", &big_grid)] {
            let values = legendre_curve(grid, &alphas).iter().map(|c| c.value).collect();
            concave.push((
                name.to_string(),
                GridFunction::new(alphas.clone(), values)?.is_midpoint_concave(CONVEXITY_TOL),
            ));
        }
        let table = build_spectrum(&exp.pair, &alphas, g)?;
        let ordered = table.rows.iter().filter(|r| !(r.b_star <= r.big_b_star)).count();

        let passed = convex.iter().all(|c| c.1) && concave.iter().all(|c| c.1) && ordered == 0;
        let failing: Vec<&str> = convex.iter().chain(&concave).filter(|c| !c.1).map(|c| c.0.as_str()).collect();
        Ok((
            passed,
            format!(
                "{} convex and {} concave curves checked, failing: {:?}; rows with b* > B*: {ordered}",
                convex.len(),
                concave.len(),
                failing
            ),
            json!({ "tolerance": CONVEXITY_TOL, "convex": convex, "concave": concave,
                    "rows": table.rows.len(), "rows_b_star_above_B_star": ordered,
                    "b_at_zero": b_of_q(0.0, &exp.pair), "B_at_zero": B_of_q(0.0, &exp.pair) }),
        ))
    })();
    CheckResult::from_result(10, "convexity", r)
}

/// Runs checks 1 to 10, logging elapsed time per check.
pub fn run_checks(exp: &Experiment) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|(id, name, check)| {
            let start = Instant::now();
            let r = check(exp);
            info!("check {id} ({name}): {} in {:.2?}", if r.passed { "pass" } else { "FAIL" }, start.elapsed());
            r
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub all_passed: bool,
    pub checks: Vec<CheckResult>,
}

/// All eleven checks. The determinism check reruns 1 to 10 on a
/// single-threaded pool and compares the serialized reports byte for byte.
pub fn run_verify(exp: &Experiment) -> Result<VerifyReport> {
    let mut checks = run_checks(exp);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
    let rerun = pool.install(|| run_checks(exp));
    let (a, b) = (to_json_bytes(&checks), to_json_bytes(&rerun));
    let identical = matches!((&a, &b), (Ok(a), Ok(b)) if a == b);
    let bytes = a.as_ref().map(|v| v.len()).unwrap_or(0);
    checks.push(CheckResult::new(
        11,
        "determinism",
        identical,
        format!("second run on one thread: {}", if identical { "byte-identical" } else { "differs" }),
        json!({ "report_bytes": bytes, "identical": identical }),
    ));
    Ok(VerifyReport { all_passed: checks.iter().all(|c| c.passed), checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn demo() -> Experiment {
        ExperimentConfig::default().validate().unwrap()
    }

    #[test]
    fn restricted_trace_keeps_tail_only_when_deepest_kept() {
        let t = ExponentTrace {
            depths: vec![1, 5, 100, 719, 720, 5039],
            mu_exponents: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            nu_exponents: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            seed: Some(7),
            tail_start: 720,
        };
        let r = restrict_trace(&t, &[1, 5, 719, 5039]);
        assert_eq!(r.depths, vec![1, 5, 719, 5039]);
        assert_eq!(r.mu_exponents, vec![1.0, 2.0, 4.0, 6.0]);
        assert_eq!(r.tail_start, 720);
        assert_eq!(r.mu_tail_envelope(), (6.0, 6.0));
    }

    #[test]
    fn cheap_checks_pass_on_reference_experiment() {
        let exp = demo();
        for check in [
            check_trivial_anchors,
            check_oscillation,
            check_entropy_identity,
            check_constraint_solver,
            check_phi_consistency,
            check_condition_coverage,
        ] {
            let r = check(&exp);
            assert!(r.passed, "{}: {}", r.name, r.summary);
        }
    }

    #[test]
    fn tampered_pair_fails_solver_check() {
        let mut c = ExperimentConfig::default();
        c.sampling.r_tilde = Some(0.45);
        let r = check_constraint_solver(&c.validate().unwrap());
        assert!(!r.passed);
    }
}
