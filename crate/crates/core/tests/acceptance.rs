//! Acceptance suite: the eleven criteria on the reference experiment
//! (p = 0.2, p~ = 0.4, schedule [1, 2, 6, 24, 120, 720, 5040]).
//!
//! Each criterion is evaluated through `verify` and then cross-checked
//! against values frozen from a 40-digit mpmath evaluation.

#![allow(clippy::excessive_precision)]

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use multifractal_core::analytic::{phi_branches, spectrum_branch};
use multifractal_core::config::{Experiment, ExperimentConfig};
use multifractal_core::partition::subsequence_envelope;
use multifractal_core::spectrum::{build_spectrum, QGrid};
use multifractal_core::verify::{self, CheckResult};

// 40-digit mpmath references
const THETA_2_P: f64 = -0.556393348524385287486;
const THETA_2_PT: f64 = -0.943416471633632535343;
const ALPHA_035: f64 = 1.021928094887362347870;
const R_TILDE_035: f64 = 0.487146612594563566907;
const H_035: f64 = 0.934068055375491006007;
const H_R_TILDE_035: f64 = 0.999523253434843278163;
const PHI_BRANCHES: [(f64, f64, f64); 3] = [
    (1.0, -0.761213140412883436933, -0.992601595349447725544),
    (-1.0, 1.357552004618083693166, 1.051457148375112820663),
    (0.5, -0.438498022972590084152, -0.503582451633297670595),
];
const ALPHA_INTERVAL: (f64, f64) = (0.736965594166206166417, 1.321928094887362347870);

struct Outcome {
    id: u8,
    name: &'static str,
    passed: bool,
    line: String,
}

fn reference() -> Experiment {
    ExperimentConfig::default().validate().expect("reference config is valid")
}

fn timed(exp: &Experiment, check: verify::Check) -> (CheckResult, Duration) {
    let start = Instant::now();
    let r = check(exp);
    (r, start.elapsed())
}

fn outcome(r: &CheckResult, extra: bool, note: String) -> Outcome {
    Outcome { id: r.id, name: r.name, passed: r.passed && extra, line: format!("{}; {note}", r.summary) }
}

fn criterion_1(exp: &Experiment) -> Outcome {
    let (r, t) = timed(exp, verify::check_oracle_equivalence);
    let d = &r.details;
    let scope = d["n_max"] == 16 && d["q_values"].as_array().map(|a| a.len()) == Some(6);
    outcome(&r, scope && t < Duration::from_secs(10), format!("runtime {t:.2?} (< 10 s)"))
}

fn criterion_2(exp: &Experiment) -> Outcome {
    let (r, _) = timed(exp, verify::check_trivial_anchors);
    let covers = r.details["n_max"].as_u64() >= Some(5039);
    outcome(&r, covers, "n <= 5039".into())
}

fn criterion_3(exp: &Experiment) -> Outcome {
    let (r, t) = timed(exp, verify::check_oscillation);
    let env = subsequence_envelope(&exp.mu, 2.0, 1, 5039).unwrap();
    let frozen = 0.5 * (THETA_2_P - THETA_2_PT).abs();
    let ok = env.width() >= frozen && t < Duration::from_secs(1);
    outcome(
        &r,
        ok,
        format!(
            "width {:.6} vs 0.5|theta(2) - theta~(2)| = {frozen:.6} (mpmath); runtime {t:.2?} (< 1 s)",
            env.width()
        ),
    )
}

fn criterion_4(exp: &Experiment) -> Outcome {
    let (r, _) = timed(exp, verify::check_entropy_identity);
    outcome(&r, true, "q in [-8, 8] step 1e-2, both branches".into())
}

fn criterion_5(exp: &Experiment) -> Outcome {
    let (r, _) = timed(exp, verify::check_numerical_conjugate);
    let rows = r.details["rows"].as_u64() == Some(200);
    let t = build_spectrum(&exp.pair, &[ALPHA_035], QGrid::default()).unwrap();
    let row = t.rows[0];
    let frozen =
        (row.b_star - H_035).abs() <= 1e-5 && (row.big_b_star - H_R_TILDE_035).abs() <= 1e-5 && row.packing_valid;
    outcome(
        &r,
        rows && frozen,
        format!(
            "at alpha = {ALPHA_035:.5}: b* = {:.8}, B* = {:.8} (mpmath {H_035:.8}, {H_R_TILDE_035:.8})",
            row.b_star, row.big_b_star
        ),
    )
}

fn criterion_6(exp: &Experiment) -> Outcome {
    let (r, _) = timed(exp, verify::check_constraint_solver);
    let frozen = (exp.aux.r_tilde - R_TILDE_035).abs() <= 1e-14;
    outcome(&r, frozen, format!("r~(0.35) = {:.15} (mpmath {R_TILDE_035:.15})", exp.aux.r_tilde))
}

fn criterion_7(exp: &Experiment) -> Outcome {
    let (r, _) = timed(exp, verify::check_phi_consistency);
    let mut worst = 0.0f64;
    for (x, a, b) in PHI_BRANCHES {
        let (ca, cb) = phi_branches(x, &exp.pair, &exp.aux);
        worst = worst.max((ca - a).abs()).max((cb - b).abs());
    }
    let gaps: Vec<String> = r.details["points"]
        .as_array()
        .map(|ps| {
            ps.iter()
                .map(|p| {
                    format!(
                        "x={}: gap<={:.4} at f={:.3}",
                        p["x"],
                        p["gap_bound"].as_f64().unwrap_or(f64::NAN),
                        p["phase_fraction"].as_f64().unwrap_or(f64::NAN)
                    )
                })
                .collect()
        })
        .unwrap_or_default();
    outcome(&r, worst <= 1e-13, format!("branches vs mpmath {worst:.1e}; {}", gaps.join(", ")))
}

fn criterion_8(exp: &Experiment) -> Outcome {
    let (r, t) = timed(exp, verify::check_localization);
    let d = &r.details;
    let setup =
        d["paths"] == 200 && d["depth"] == 5039 && (d["alpha"].as_f64().unwrap_or(0.0) - ALPHA_035).abs() < 1e-14;
    outcome(&r, setup && t < Duration::from_secs(30), format!("runtime {t:.2?} (< 30 s)"))
}

fn criterion_9(exp: &Experiment) -> Outcome {
    let (r, _) = timed(exp, verify::check_condition_coverage);
    let (lo, hi) = exp.pair.alpha_interval();
    let frozen = (lo - ALPHA_INTERVAL.0).abs() < 1e-15 && (hi - ALPHA_INTERVAL.1).abs() < 1e-15;
    outcome(&r, frozen && r.details["samples"] == 1000, format!("interval ({lo:.6}, {hi:.6})"))
}

fn criterion_10(exp: &Experiment) -> Outcome {
    let (r, _) = timed(exp, verify::check_convexity);
    let sb = spectrum_branch(ALPHA_035, &exp.pair).unwrap();
    outcome(&r, sb.b_value <= sb.big_b_value, "theta, theta~, tau_hat(., n), B; b*, B* concave".into())
}

fn run_cli(out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mfx"))
        .args(["verify", "--out"])
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("mfx runs")
}

fn criterion_11() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ra, rb) = (run_cli(a.path()), run_cli(b.path()));
    let fa = fs::read(a.path().join("verify.json")).unwrap_or_default();
    let fb = fs::read(b.path().join("verify.json")).unwrap_or_default();
    let identical = !fa.is_empty() && fa == fb && ra.stdout == rb.stdout;
    let internal = serde_json::from_slice::<serde_json::Value>(&fa)
        .ok()
        .and_then(|v| v["data"]["checks"].as_array().and_then(|c| c.last().cloned()))
        .map(|c| c["passed"] == true)
        .unwrap_or(false);
    Outcome {
        id: 11,
        name: "determinism",
        passed: ra.status.code() == Some(0) && rb.status.code() == Some(0) && identical && internal,
        line: format!(
            "two `mfx verify` runs: exit {:?}/{:?}, {} bytes, identical: {identical}",
            ra.status.code(),
            rb.status.code(),
            fa.len()
        ),
    }
}

// Custom harness so the per-criterion lines are always printed.
fn main() -> ExitCode {
    let exp = reference();
    let outcomes = vec![
        criterion_1(&exp),
        criterion_2(&exp),
        criterion_3(&exp),
        criterion_4(&exp),
        criterion_5(&exp),
        criterion_6(&exp),
        criterion_7(&exp),
        criterion_8(&exp),
        criterion_9(&exp),
        criterion_10(&exp),
        criterion_11(),
    ];
    for o in &outcomes {
        println!("[{}] criterion {:>2} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.id, o.name, o.line);
    }
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", outcomes.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
