use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{mean_stderr, minmax_scale, ReconstructionScore};
use crate::domain::{DomainSpec, Instance};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::il::KernelSpec;
use crate::model::Summary;
use crate::seed::{self, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UserModel {
    Irl,
    Il,
}

impl UserModel {
    pub const ALL: [UserModel; 2] = [UserModel::Irl, UserModel::Il];

    pub fn name(self) -> &'static str {
        match self {
            UserModel::Irl => "irl",
            UserModel::Il => "il",
        }
    }
}

impl fmt::Display for UserModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UserModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "irl" => Ok(UserModel::Irl),
            "il" => Ok(UserModel::Il),
            _ => Err(Error::Config(format!("unknown model '{s}' (il, irl)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossMatrixConfig {
    /// `domain.seed` is the master seed.
    pub domain: DomainSpec,
    pub k: usize,
    pub l_irl: usize,
    pub kernel: KernelSpec,
    pub n_restarts: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub extractor: UserModel,
    pub reconstructor: UserModel,
    pub n: usize,
    pub accuracy: CellStats,
    pub value_diff_raw: CellStats,
    /// Raw statistics mapped through the min-max scaling of the four
    /// cell means.
    pub value_diff_scaled: CellStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub extractor: UserModel,
    pub reconstructor: UserModel,
    pub score: ReconstructionScore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartScores {
    pub restart: usize,
    pub seed: u64,
    pub scores: Vec<CellScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartFailure {
    pub restart: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossMatrix {
    pub config: CrossMatrixConfig,
    /// Ordered by reconstructor, then extractor.
    pub cells: Vec<MatrixCell>,
    pub restarts: Vec<RestartScores>,
    pub failures: Vec<RestartFailure>,
}

/// Cell order used throughout: reconstructor-major.
pub fn cell_order() -> impl Iterator<Item = (UserModel, UserModel)> {
    UserModel::ALL
        .into_iter()
        .flat_map(|rec| UserModel::ALL.into_iter().map(move |ext| (ext, rec)))
}

impl CrossMatrix {
    pub fn cell(&self, extractor: UserModel, reconstructor: UserModel) -> &MatrixCell {
        self.cells
            .iter()
            .find(|c| c.extractor == extractor && c.reconstructor == reconstructor)
            .expect("matrix has all four cells")
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["domain", "extractor", "reconstructor", "metric", "mean", "stderr", "n"])?;
        let domain = self.config.domain.kind.name();
        for c in &self.cells {
            for (metric, s) in [
                ("accuracy", c.accuracy),
                ("value_diff_scaled", c.value_diff_scaled),
                ("value_diff_raw", c.value_diff_raw),
            ] {
                out.write_record([
                    domain.to_string(),
                    c.extractor.to_string(),
                    c.reconstructor.to_string(),
                    metric.to_string(),
                    s.mean.to_string(),
                    s.stderr.to_string(),
                    c.n.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn score_restart(cfg: &CrossMatrixConfig, restart: usize, exec: Exec) -> Result<RestartScores> {
    let restart_seed = seed::derive(cfg.domain.seed, restart as u64);
    let spec = DomainSpec {
        seed: restart_seed,
        ..cfg.domain.clone()
    };
    let inst = Instance::build(&spec, exec)?;
    let irl_sum = inst.scot_summary(cfg.k, cfg.l_irl, seed::derive(restart_seed, stream::SCOT))?;
    let il_sum = inst.il_summary(cfg.k, &cfg.kernel)?;
    let summary = |m: UserModel| -> &Summary {
        match m {
            UserModel::Irl => &irl_sum,
            UserModel::Il => &il_sum,
        }
    };
    let scores = cell_order()
        .map(|(ext, rec)| {
            let s = summary(ext);
            let table = match rec {
                UserModel::Irl => inst.reconstruct_irl(s)?,
                UserModel::Il => inst.reconstruct_il(s, &cfg.kernel)?,
            };
            Ok(CellScore {
                extractor: ext,
                reconstructor: rec,
                score: inst.score(s, &table)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RestartScores {
        restart,
        seed: restart_seed,
        scores,
    })
}

/// Scores all four extractor/reconstructor pairings over independent
/// restarts. Failed restarts are logged and left out; more than 10% of
/// them failing aborts.
pub fn run_cross_matrix(cfg: &CrossMatrixConfig, exec: Exec) -> Result<CrossMatrix> {
    cfg.kernel.validate()?;
    if cfg.n_restarts == 0 {
        return Err(Error::Config("n_restarts must be positive".into()));
    }
    let outcomes = exec.map_range(cfg.n_restarts, |r| score_restart(cfg, r, exec));
    let mut restarts = Vec::new();
    let mut failures = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(s) => restarts.push(s),
            Err(e) => {
                log::warn!("{} restart {r} failed: {e}", cfg.domain.kind);
                failures.push(RestartFailure {
                    restart: r,
                    error: e.to_string(),
                });
            }
        }
    }
    if failures.len() * 10 > cfg.n_restarts || restarts.is_empty() {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total: cfg.n_restarts,
        });
    }
    if !failures.is_empty() {
        log::info!("{} of {} restarts failed", failures.len(), cfg.n_restarts);
    }

    let mut cells = Vec::with_capacity(4);
    for (i, (ext, rec)) in cell_order().enumerate() {
        let acc: Vec<f64> = restarts.iter().map(|r| r.scores[i].score.accuracy).collect();
        let vd: Vec<f64> = restarts.iter().map(|r| r.scores[i].score.value_diff_raw).collect();
        let (am, ase) = mean_stderr(&acc);
        let (vm, vse) = mean_stderr(&vd);
        cells.push(MatrixCell {
            extractor: ext,
            reconstructor: rec,
            n: restarts.len(),
            accuracy: CellStats { mean: am, stderr: ase },
            value_diff_raw: CellStats { mean: vm, stderr: vse },
            value_diff_scaled: CellStats { mean: 0.0, stderr: 0.0 },
        });
    }
    let means: Vec<f64> = cells.iter().map(|c| c.value_diff_raw.mean).collect();
    let scaled = minmax_scale(&means);
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for (c, s) in cells.iter_mut().zip(scaled) {
        c.value_diff_scaled = CellStats {
            mean: s,
            stderr: if span > 0.0 { c.value_diff_raw.stderr / span } else { 0.0 },
        };
    }
    Ok(CrossMatrix {
        config: cfg.clone(),
        cells,
        restarts,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainKind;

    fn small(n: usize) -> CrossMatrixConfig {
        let mut domain = DomainSpec::new(DomainKind::Gridworld, 11);
        domain.grid_size = Some((5, 5));
        CrossMatrixConfig {
            domain,
            k: 8,
            l_irl: 2,
            kernel: KernelSpec::poly(0.1, 2),
            n_restarts: n,
        }
    }

    #[test]
    fn four_cells_with_counts() {
        let m = run_cross_matrix(&small(3), Exec::Parallel).unwrap();
        assert_eq!(m.cells.len(), 4);
        assert!(m.cells.iter().all(|c| c.n == 3 - m.failures.len()));
        let scaled: Vec<f64> = m.cells.iter().map(|c| c.value_diff_scaled.mean).collect();
        assert!(scaled.iter().all(|v| (0.0..=1.0).contains(v)));
        for c in &m.cells {
            assert!((0.0..=1.0).contains(&c.accuracy.mean));
        }
    }

    #[test]
    fn repeat_run_is_identical() {
        let a = run_cross_matrix(&small(1), Exec::Parallel).unwrap();
        let b = run_cross_matrix(&small(1), Exec::Sequential).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_rows() {
        let m = run_cross_matrix(&small(1), Exec::Sequential).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 13);
        assert!(text.starts_with("domain,extractor,reconstructor,metric,mean,stderr,n"));
    }
}
