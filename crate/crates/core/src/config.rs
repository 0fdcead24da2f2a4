//! Experiment configuration: one JSON document, every section optional.
//!
//! An empty document `{}` is the reference experiment: `p = 0.2`,
//! `p~ = 0.4`, factorial schedule, 200 paths to depth 5039.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytic::{solve_r_tilde, AuxiliaryParams};
use crate::error::{Error, Result};
use crate::measure::{BernoulliPair, MeasureDescriptor, OscillatingMeasure, PhaseSchedule};
use crate::spectrum::QGrid;
use crate::symbolic::DEFAULT_MAX_DEPTH;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "MFX_OUT_DIR";
pub const FALLBACK_OUT_DIR: &str = "mfx-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionSection {
    pub depths: Vec<usize>,
    pub q_values: Vec<f64>,
    /// `[n_min, n_max]` for the envelope summary.
    pub envelope_window: [usize; 2],
    pub envelope_q: Vec<f64>,
    /// Largest depth for the brute-force comparison (at most 20).
    pub oracle_max_depth: usize,
    /// `[n_min, n_max]` for the joint-sum estimate of φ.
    pub phi_window: [usize; 2],
}

impl Default for PartitionSection {
    fn default() -> Self {
        PartitionSection {
            depths: vec![1, 5, 23, 100, 119, 719, 720, 1000, 5039],
            q_values: vec![-2.0, -0.5, 0.0, 0.5, 1.0, 2.0],
            envelope_window: [1, 5039],
            envelope_q: vec![2.0],
            oracle_max_depth: 16,
            phi_window: [720, 5039],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub q_min: f64,
    pub q_max: f64,
    pub q_step: f64,
    pub alpha_count: usize,
    /// Exponents are chosen where both conjugate minimizers lie in `±q_limit`.
    pub q_limit: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { q_min: -8.0, q_max: 8.0, q_step: 1e-3, alpha_count: 200, q_limit: 7.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub paths: usize,
    pub depth: usize,
    pub master_seed: u64,
    /// Weight of the auxiliary measure on `p` blocks.
    pub r: f64,
    /// Overrides the solved `r~`; leave unset unless testing a mismatched pair.
    pub r_tilde: Option<f64>,
    pub tolerance: f64,
    pub checkpoints: Vec<usize>,
}

impl Default for SamplingSection {
    fn default() -> Self {
        SamplingSection {
            paths: 200,
            depth: 5039,
            master_seed: 20_240_601,
            r: 0.35,
            r_tilde: None,
            tolerance: 0.03,
            checkpoints: vec![100, 720, 5039],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<PathBuf>,
    pub format: Format,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { directory: None, format: Format::Both }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub measure: MeasureDescriptor,
    pub partition: PartitionSection,
    pub grids: GridSection,
    pub sampling: SamplingSection,
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            measure: MeasureDescriptor { p: 0.2, p_tilde: 0.4, schedule: vec![1, 2, 6, 24, 120, 720, 5040] },
            partition: PartitionSection::default(),
            grids: GridSection::default(),
            sampling: SamplingSection::default(),
            output: OutputSection::default(),
        }
    }
}

/// Everything derived from a validated configuration.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub pair: BernoulliPair,
    pub schedule: PhaseSchedule,
    pub mu: OscillatingMeasure,
    pub nu: OscillatingMeasure,
    pub aux: AuxiliaryParams,
    pub grid: QGrid,
    pub hash: String,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Hex SHA-256 of the canonical JSON form. The output directory is left
    /// out so that identical experiments written to different places match.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.directory = None;
        let canonical = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Output directory: config value, else `$MFX_OUT_DIR`, else `mfx-out`.
    pub fn output_dir(&self) -> PathBuf {
        self.output
            .directory
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR))
    }

    /// Checks every precondition and builds the measures.
    pub fn validate(&self) -> Result<Experiment> {
        let pair = BernoulliPair::new(self.measure.p, self.measure.p_tilde)?;
        let schedule = PhaseSchedule::new(self.measure.schedule.clone())?;
        let mu = OscillatingMeasure::new(pair, schedule.clone());

        let part = &self.partition;
        if part.q_values.is_empty() || part.depths.is_empty() {
            return Err(Error::Config("partition.depths and partition.q_values must be non-empty".into()));
        }
        if let Some(&n) = part.depths.iter().find(|&&n| n == 0 || n > DEFAULT_MAX_DEPTH) {
            return Err(Error::Config(format!("partition depth {n} outside [1, {DEFAULT_MAX_DEPTH}]")));
        }
        for (name, [lo, hi]) in [("envelope_window", part.envelope_window), ("phi_window", part.phi_window)] {
            if lo < 1 || lo >= hi || hi > DEFAULT_MAX_DEPTH {
                return Err(Error::Config(format!(
                    "partition.{name} [{lo}, {hi}] needs 1 <= n_min < n_max <= {DEFAULT_MAX_DEPTH}"
                )));
            }
        }
        if part.oracle_max_depth > 20 {
            return Err(Error::Config("partition.oracle_max_depth must be at most 20".into()));
        }
        if part.q_values.iter().chain(&part.envelope_q).any(|q| !q.is_finite()) {
            return Err(Error::Config("q values must be finite".into()));
        }

        let g = &self.grids;
        if !(g.q_min < g.q_max && g.q_step > 0.0 && g.q_step < g.q_max - g.q_min) {
            return Err(Error::Config(format!("grids: need q_min < q_max and 0 < q_step < q_max - q_min, got {g:?}")));
        }
        if g.alpha_count < 3 {
            return Err(Error::Config("grids.alpha_count must be at least 3".into()));
        }
        if !(g.q_limit > 0.0 && g.q_limit < g.q_max.min(-g.q_min)) {
            return Err(Error::Config("grids.q_limit must be positive and inside the q range".into()));
        }

        let s = &self.sampling;
        if s.paths == 0 {
            return Err(Error::Config("sampling.paths must be positive".into()));
        }
        if s.depth == 0 || s.depth > DEFAULT_MAX_DEPTH {
            return Err(Error::Config(format!("sampling.depth {} outside [1, {DEFAULT_MAX_DEPTH}]", s.depth)));
        }
        if let Some(&d) = s.checkpoints.iter().find(|&&d| d == 0 || d > s.depth) {
            return Err(Error::Config(format!("sampling checkpoint {d} outside [1, {}]", s.depth)));
        }
        if !(s.tolerance > 0.0) {
            return Err(Error::Config("sampling.tolerance must be positive".into()));
        }
        let mut aux = solve_r_tilde(s.r, &pair)?;
        if let Some(rt) = s.r_tilde {
            aux.r_tilde = rt;
        }
        let nu = OscillatingMeasure::auxiliary(aux.r, aux.r_tilde, schedule.clone())?;

        Ok(Experiment {
            config: self.clone(),
            pair,
            schedule,
            mu,
            nu,
            aux,
            grid: QGrid { min: g.q_min, max: g.q_max, step: g.q_step },
            hash: self.hash(),
        })
    }
}
