use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{DomainKind, DomainSpec};
use crate::error::{Error, Result};
use crate::eval::CrossMatrixConfig;
use crate::il::KernelSpec;
use crate::solvers::fqi::FqiConfig;

pub const SUMMARY_SIZE_GRID: [usize; 5] = [12, 24, 36, 48, 60];
pub const TRAJ_LENGTH_GRID: [usize; 4] = [1, 2, 3, 4];
pub const DEFAULT_RESTARTS: usize = 75;

/// Flat experiment configuration, read from JSON with flag overrides.
/// Absent keys take their defaults; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainKind,
    pub summary_sizes: Vec<usize>,
    pub irl_traj_lengths: Vec<usize>,
    pub il_kernels: Vec<KernelSpec>,
    pub n_restarts: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Also score random summaries in the sweep.
    pub baselines: bool,
    /// Permit grid values outside the standard ones.
    pub allow_off_grid: bool,
    /// Cross-matrix summary size; per-domain default when absent.
    pub k: Option<usize>,
    pub irl_l: Option<usize>,
    pub il_kernel: Option<KernelSpec>,
    pub fqi_iters: usize,
    pub fqi_episodes: usize,
    /// Worker threads; all logical cores when absent.
    pub workers: Option<usize>,
    /// Write constraint sets and learned weights next to results.
    pub debug_dumps: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let fqi = FqiConfig::default();
        Self {
            domain: DomainKind::Gridworld,
            summary_sizes: SUMMARY_SIZE_GRID.to_vec(),
            irl_traj_lengths: TRAJ_LENGTH_GRID.to_vec(),
            il_kernels: KernelSpec::grid(),
            n_restarts: DEFAULT_RESTARTS,
            master_seed: 0,
            output_dir: PathBuf::from("results"),
            baselines: true,
            allow_off_grid: false,
            k: None,
            irl_l: None,
            il_kernel: None,
            fqi_iters: fqi.n_iters,
            fqi_episodes: fqi.n_episodes,
            workers: None,
            debug_dumps: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_restarts == 0 {
            return bad("n_restarts must be positive".into());
        }
        if self.summary_sizes.is_empty() || self.summary_sizes.contains(&0) {
            return bad("summary_sizes must be non-empty and positive".into());
        }
        if self.irl_traj_lengths.is_empty() || self.irl_traj_lengths.contains(&0) {
            return bad("irl_traj_lengths must be non-empty and positive".into());
        }
        if self.il_kernels.is_empty() {
            return bad("il_kernels must be non-empty".into());
        }
        for k in self.il_kernels.iter().chain(self.il_kernel.iter()) {
            k.validate()?;
        }
        if self.fqi_iters == 0 || self.fqi_episodes == 0 {
            return bad("fqi_iters and fqi_episodes must be positive".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        if !self.allow_off_grid {
            if let Some(s) = self.summary_sizes.iter().find(|s| !SUMMARY_SIZE_GRID.contains(s)) {
                return bad(format!("summary size {s} is off the standard grid {SUMMARY_SIZE_GRID:?}"));
            }
            if let Some(l) = self.irl_traj_lengths.iter().find(|l| !TRAJ_LENGTH_GRID.contains(l)) {
                return bad(format!("trajectory length {l} is off the standard grid {TRAJ_LENGTH_GRID:?}"));
            }
            let grid = KernelSpec::grid();
            if let Some(k) = self.il_kernels.iter().find(|k| !grid.contains(k)) {
                return bad(format!("kernel {k} is off the standard grid"));
            }
        }
        for &k in &self.summary_sizes {
            if let Some(l) = self.irl_traj_lengths.iter().find(|&&l| k % l != 0) {
                return bad(format!("summary size {k} is not a multiple of trajectory length {l}"));
            }
        }
        let (k, l, _) = self.matrix_settings();
        if k % l != 0 {
            return bad(format!("k = {k} is not a multiple of irl_l = {l}"));
        }
        Ok(())
    }

    pub fn fqi(&self) -> FqiConfig {
        FqiConfig {
            n_iters: self.fqi_iters,
            n_episodes: self.fqi_episodes,
            ..FqiConfig::default()
        }
    }

    pub fn domain_spec(&self, seed: u64) -> DomainSpec {
        DomainSpec {
            fqi: self.fqi(),
            ..DomainSpec::new(self.domain, seed)
        }
    }

    /// `(k, irl_l, il_kernel)` with per-domain defaults filled in.
    pub fn matrix_settings(&self) -> (usize, usize, KernelSpec) {
        let (k, l, kernel) = match self.domain {
            DomainKind::Gridworld => (24, 4, KernelSpec::poly(0.1, 2)),
            DomainKind::Pacman => (12, 3, KernelSpec::rbf(1.0)),
            DomainKind::Hiv => (24, 3, KernelSpec::rbf(1.0)),
        };
        (
            self.k.unwrap_or(k),
            self.irl_l.unwrap_or(l),
            self.il_kernel.unwrap_or(kernel),
        )
    }

    pub fn cross_matrix(&self) -> CrossMatrixConfig {
        let (k, l_irl, kernel) = self.matrix_settings();
        CrossMatrixConfig {
            domain: self.domain_spec(self.master_seed),
            k,
            l_irl,
            kernel,
            n_restarts: self.n_restarts,
        }
    }

    /// SHA-256 of the canonical JSON of every setting that can change a
    /// result. Output location, worker count and debug dumps are left out.
    pub fn hash(&self) -> String {
        let canonical = Self {
            output_dir: PathBuf::new(),
            workers: None,
            debug_dumps: false,
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.hash(),
            master_seed: self.master_seed,
            version: version(),
        }
    }
}

pub fn version() -> String {
    format!("polisum-{}", env!("CARGO_PKG_VERSION"))
}

/// Embedded in every written artifact.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
    pub version: String,
}

impl Provenance {
    /// One-line form for CSV comment headers.
    pub fn header_line(&self) -> String {
        format!(
            "# config_hash={} master_seed={} version={}",
            self.config_hash, self.master_seed, self.version
        )
    }
}
