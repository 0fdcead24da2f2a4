use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::info;
use serde::Serialize;

use multifractal_core::config::{Experiment, ExperimentConfig, Format};
use multifractal_core::output::{self, Document};
use multifractal_core::partition::{level_stats, phi_hat, subsequence_envelope, Envelope, LevelStats, PhiEstimate};
use multifractal_core::sampling::{level_set_classifier, summarize_depth, DepthSummary, Membership};
use multifractal_core::spectrum::{alpha_grid, build_spectrum, SpectrumTable};
use multifractal_core::verify::{localization_verdict, run_verify, sampling_run};
use multifractal_core::Error;

#[derive(Parser)]
#[command(
    name = "mfx",
    version,
    about = "Partition functions, spectra and exponent sampling for oscillating Bernoulli measures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON); built-in reference experiment when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: config, then $MFX_OUT_DIR, then ./mfx-out]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed for sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Level sums and tau_hat for every (depth, q), plus envelope summaries.
    Partition,
    /// Closed-form and numerical spectra over the exponent grid.
    Spectrum,
    /// Exponent traces of paths drawn from the matched auxiliary measure.
    Sample,
    /// Runs every acceptance check.
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Partition => "partition",
            Command::Spectrum => "spectrum",
            Command::Sample => "sample",
            Command::Verify => "verify",
        }
    }
}

enum Failure {
    Config(String),
    Check(String),
    Runtime(String),
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load(cli: &Cli) -> Result<Experiment, Failure> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| Failure::Config(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        config.output.directory = Some(out.clone());
    }
    if let Some(seed) = cli.seed {
        config.sampling.master_seed = seed;
    }
    if let Some(format) = cli.format {
        config.output.format = format;
    }
    config.validate().map_err(|e| Failure::Config(e.to_string()))
}

struct Sink {
    dir: PathBuf,
    format: Format,
    hash: String,
    command: &'static str,
}

impl Sink {
    fn new(exp: &Experiment, command: &'static str) -> Result<Self, Failure> {
        let dir = exp.config.output_dir();
        fs::create_dir_all(&dir)?;
        Ok(Sink { dir, format: exp.config.output.format, hash: exp.hash.clone(), command })
    }

    fn json<T: Serialize>(&self, name: &str, data: &T) -> Result<(), Failure> {
        let path = self.dir.join(name);
        output::write_json(&path, &Document::new(self.command, &self.hash, data))?;
        announce(&path);
        Ok(())
    }

    fn csv(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, output::csv_bytes(&self.hash, header, rows))?;
        announce(&path);
        Ok(())
    }
}

fn announce(path: &Path) {
    info!("wrote {}", path.display());
}

#[derive(Serialize)]
struct PartitionSummary<'a> {
    rows: Option<&'a [LevelStats]>,
    envelopes: Vec<Envelope>,
    phi: Vec<PhiEstimate>,
}

fn cmd_partition(exp: &Experiment) -> Result<(), Failure> {
    let sink = Sink::new(exp, "partition")?;
    let part = &exp.config.partition;
    let mut rows = Vec::new();
    for &n in &part.depths {
        for &q in &part.q_values {
            rows.push(level_stats(&exp.mu, q, n));
        }
    }
    let [lo, hi] = part.envelope_window;
    let envelopes =
        part.envelope_q.iter().map(|&q| subsequence_envelope(&exp.mu, q, lo, hi)).collect::<Result<Vec<_>, _>>()?;
    let [plo, phi_hi] = part.phi_window;
    let phi =
        [-1.0, 0.5, 1.0].iter().map(|&x| phi_hat(&exp.mu, &exp.nu, x, plo, phi_hi)).collect::<Result<Vec<_>, _>>()?;
    if sink.format.csv() {
        sink.csv("partition.csv", &output::PARTITION_HEADER, rows.iter().map(output::partition_row))?;
    }
    let with_rows = sink.format.json().then_some(rows.as_slice());
    sink.json("partition.json", &PartitionSummary { rows: with_rows, envelopes, phi })?;
    Ok(())
}

#[derive(Serialize)]
struct SpectrumDocument<'a> {
    p: f64,
    p_tilde: f64,
    schedule: &'a [usize],
    alpha_count: usize,
    q_limit: f64,
    table: &'a SpectrumTable,
}

fn cmd_spectrum(exp: &Experiment) -> Result<(), Failure> {
    let sink = Sink::new(exp, "spectrum")?;
    let g = &exp.config.grids;
    let alphas = alpha_grid(&exp.pair, g.alpha_count, g.q_limit);
    let table = build_spectrum(&exp.pair, &alphas, exp.grid)?;
    if sink.format.csv() {
        sink.csv("spectrum.csv", &output::SPECTRUM_HEADER, table.rows.iter().map(output::spectrum_row))?;
    }
    if sink.format.json() {
        sink.json(
            "spectrum.json",
            &SpectrumDocument {
                p: exp.pair.p(),
                p_tilde: exp.pair.p_tilde(),
                schedule: exp.schedule.switch_times(),
                alpha_count: g.alpha_count,
                q_limit: g.q_limit,
                table: &table,
            },
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PathSummary {
    seed: Option<u64>,
    tail_start: usize,
    mu_tail_min: f64,
    mu_tail_max: f64,
    membership: Membership,
}

#[derive(Serialize)]
struct SampleDocument {
    alpha: f64,
    r: f64,
    r_tilde: f64,
    depths: Vec<DepthSummary>,
    paths: Vec<PathSummary>,
    passed: bool,
    verdict: String,
    reconciliation: serde_json::Value,
}

fn cmd_sample(exp: &Experiment) -> Result<(), Failure> {
    let sink = Sink::new(exp, "sample")?;
    let s = &exp.config.sampling;
    let traces = sampling_run(exp)?;
    if sink.format.csv() {
        sink.csv("sample.csv", &output::SAMPLE_HEADER, traces.iter().flat_map(output::sample_rows))?;
    }
    let (passed, verdict, reconciliation) = match localization_verdict(exp, &traces) {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}"), serde_json::json!({ "error": e.to_string() })),
    };
    let ends = exp.schedule.block_ends(s.depth);
    let mut paths = Vec::with_capacity(traces.len());
    for t in &traces {
        let t = multifractal_core::verify::restrict_trace(t, &ends);
        let (lo, hi) = t.mu_tail_envelope();
        paths.push(PathSummary {
            seed: t.seed,
            tail_start: t.tail_start,
            mu_tail_min: lo,
            mu_tail_max: hi,
            membership: level_set_classifier(&t, exp.aux.alpha, exp.aux.alpha, s.tolerance)?,
        });
    }
    let depths = traces.first().map(|t| t.depths.clone()).unwrap_or_default();
    let doc = SampleDocument {
        alpha: exp.aux.alpha,
        r: exp.aux.r,
        r_tilde: exp.aux.r_tilde,
        depths: depths.iter().filter_map(|&d| summarize_depth(&traces, d)).collect(),
        paths,
        passed,
        verdict: verdict.clone(),
        reconciliation,
    };
    sink.json("sample_summary.json", &doc)?;
    println!("{} {verdict}", if passed { "PASS" } else { "FAIL" });
    if passed {
        Ok(())
    } else {
        Err(Failure::Check(verdict))
    }
}

fn cmd_verify(exp: &Experiment) -> Result<(), Failure> {
    let sink = Sink::new(exp, "verify")?;
    let report = run_verify(exp)?;
    for c in &report.checks {
        println!("{} {:>2} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.id, c.name, c.summary);
    }
    sink.json("verify.json", &report)?;
    let failed: Vec<String> = report.checks.iter().filter(|c| !c.passed).map(|c| c.id.to_string()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("checks failed: {}", failed.join(", "))))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let start = Instant::now();
    let result = load(&cli).and_then(|exp| match cli.command {
        Command::Partition => cmd_partition(&exp),
        Command::Spectrum => cmd_spectrum(&exp),
        Command::Sample => cmd_sample(&exp),
        Command::Verify => cmd_verify(&exp),
    });
    info!("{} finished in {:.2?}", cli.command.name(), start.elapsed());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("mfx: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("mfx: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("mfx: invalid configuration: {msg}");
            ExitCode::from(2)
        }
    }
}
