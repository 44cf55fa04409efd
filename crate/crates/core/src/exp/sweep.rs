//! Matched-model hyperparameter sweep with incremental, resumable
//! persistence.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Provenance};
use crate::domain::Instance;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::il::KernelSpec;
use crate::model::Summary;
use crate::seed::{self, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    IrlScot,
    IlAl,
    IrlRandom,
    IlRandom,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::IrlScot => "irl-scot",
            Method::IlAl => "il-al",
            Method::IrlRandom => "irl-random",
            Method::IlRandom => "il-random",
        }
    }
}

/// One sweep cell: a method and its hyperparameters at one summary size.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub method: Method,
    pub l: usize,
    pub kernel: Option<KernelSpec>,
    pub size: usize,
}

impl Cell {
    pub fn hyperparams(&self) -> String {
        match self.kernel {
            Some(k) if self.l == 1 && matches!(self.method, Method::IlAl) => k.to_string(),
            Some(k) => format!("{k};l={}", self.l),
            None => format!("l={}", self.l),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub domain: String,
    pub method: String,
    pub hyperparams: String,
    pub summary_size: usize,
    pub restart: usize,
    pub accuracy: f64,
    pub value_diff_raw: f64,
}

impl SweepRow {
    fn key(&self) -> (String, String, usize, usize) {
        (self.method.clone(), self.hyperparams.clone(), self.summary_size, self.restart)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub failures: usize,
}

/// Every cell of the sweep, in canonical order.
pub fn sweep_cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    let mut push = |method, l, kernel| {
        for &size in &cfg.summary_sizes {
            cells.push(Cell {
                method,
                l,
                kernel,
                size,
            });
        }
    };
    for &l in &cfg.irl_traj_lengths {
        push(Method::IrlScot, l, None);
    }
    for &k in &cfg.il_kernels {
        push(Method::IlAl, 1, Some(k));
    }
    if cfg.baselines {
        for &l in &cfg.irl_traj_lengths {
            push(Method::IrlRandom, l, None);
        }
        for &k in &cfg.il_kernels {
            push(Method::IlRandom, 1, Some(k));
        }
    }
    cells
}

fn random_seed(restart_seed: u64, size: usize, l: usize) -> u64 {
    seed::derive(seed::derive(restart_seed, stream::RANDOM_SUMMARY), (size * 16 + l) as u64)
}

/// Rows for every listed cell of one restart. Active-learning picks are
/// greedy, so one run at the largest size yields every smaller summary as
/// a prefix.
fn run_restart(
    cfg: &ExperimentConfig,
    restart: usize,
    cells: &[&Cell],
    exec: Exec,
) -> (Vec<SweepRow>, usize) {
    let restart_seed = seed::derive(cfg.master_seed, restart as u64);
    let inst = match Instance::build(&cfg.domain_spec(restart_seed), exec) {
        Ok(i) => i,
        Err(e) => {
            log::warn!("restart {restart}: instance failed: {e}");
            return (Vec::new(), cells.len());
        }
    };
    let mut al_cache: BTreeMap<String, Result<Summary>> = BTreeMap::new();
    let mut rows = Vec::new();
    let mut failures = 0;
    for cell in cells {
        let outcome = (|| -> Result<SweepRow> {
            let summary = match cell.method {
                Method::IrlScot => inst.scot_summary(
                    cell.size,
                    cell.l,
                    seed::derive(restart_seed, stream::SCOT),
                )?,
                Method::IlAl => {
                    let kernel = cell.kernel.expect("IL cells carry a kernel");
                    let max = cfg.summary_sizes.iter().copied().max().unwrap_or(cell.size);
                    let full = al_cache
                        .entry(kernel.to_string())
                        .or_insert_with(|| inst.il_summary(max.min(inst.demos.len()), &kernel));
                    let full = full.as_ref().map_err(|e| Error::Extraction(e.to_string()))?;
                    if cell.size > full.trajectories().len() {
                        return Err(Error::Extraction(format!(
                            "budget {} exceeds {} demonstrated states",
                            cell.size,
                            full.trajectories().len()
                        )));
                    }
                    Summary::new(full.trajectories()[..cell.size].to_vec())
                }
                Method::IrlRandom | Method::IlRandom => {
                    inst.random_summary(cell.size, cell.l, random_seed(restart_seed, cell.size, cell.l))?
                }
            };
            let table = match cell.method {
                Method::IrlScot | Method::IrlRandom => inst.reconstruct_irl(&summary)?,
                Method::IlAl | Method::IlRandom => {
                    inst.reconstruct_il(&summary, &cell.kernel.expect("IL cells carry a kernel"))?
                }
            };
            let score = inst.score(&summary, &table)?;
            Ok(SweepRow {
                domain: cfg.domain.name().to_string(),
                method: cell.method.name().to_string(),
                hyperparams: cell.hyperparams(),
                summary_size: cell.size,
                restart,
                accuracy: score.accuracy,
                value_diff_raw: score.value_diff_raw,
            })
        })();
        match outcome {
            Ok(r) => rows.push(r),
            Err(e) => {
                log::warn!(
                    "restart {restart} {} {} k={}: {e}",
                    cell.method.name(),
                    cell.hyperparams(),
                    cell.size
                );
                failures += 1;
            }
        }
    }
    (rows, failures)
}

const HEADER: [&str; 7] = [
    "domain",
    "method",
    "hyperparams",
    "summary_size",
    "restart",
    "accuracy",
    "value_diff_raw",
];

fn write_rows<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Rows of an existing (possibly interrupted) sweep file. A torn final line
/// is dropped; a file from a different configuration is refused.
pub fn read_rows(path: &Path, provenance: &Provenance) -> Result<Vec<SweepRow>> {
    let file = BufReader::new(File::open(path)?);
    let mut lines = file.lines();
    let first = lines.next().transpose()?.unwrap_or_default();
    if first != provenance.header_line() {
        return Err(Error::Config(format!(
            "{} was written by a different configuration ({first})",
            path.display()
        )));
    }
    let body: Vec<String> = lines.collect::<std::io::Result<_>>()?;
    let text = body.join("\n");
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<SweepRow>() {
        match rec {
            Ok(r) => rows.push(r),
            Err(e) => log::warn!("dropping unreadable row in {}: {e}", path.display()),
        }
    }
    Ok(rows)
}

/// Writes the rows in canonical order with the provenance header.
pub fn write_sweep_csv(path: &Path, provenance: &Provenance, rows: &[SweepRow]) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut f = File::create(&tmp)?;
        writeln!(f, "{}", provenance.header_line())?;
        writeln!(f, "{}", HEADER.join(","))?;
        write_rows(&mut f, rows)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Runs every (cell, restart) pair not already present in `rows_path`,
/// appending each finished restart's rows as it completes, then rewrites
/// the file in canonical order.
pub fn run_sweep(cfg: &ExperimentConfig, rows_path: &Path, exec: Exec) -> Result<SweepResult> {
    cfg.validate()?;
    let provenance = cfg.provenance();
    let cells = sweep_cells(cfg);
    let existing = if rows_path.exists() {
        read_rows(rows_path, &provenance)?
    } else {
        Vec::new()
    };
    let done: std::collections::BTreeSet<_> = existing.iter().map(SweepRow::key).collect();
    // Normalize first so appends never land on a torn line.
    write_sweep_csv(rows_path, &provenance, &existing)?;

    let todo: Vec<(usize, Vec<&Cell>)> = (0..cfg.n_restarts)
        .map(|r| {
            let missing: Vec<&Cell> = cells
                .iter()
                .filter(|c| {
                    !done.contains(&(c.method.name().to_string(), c.hyperparams(), c.size, r))
                })
                .collect();
            (r, missing)
        })
        .filter(|(_, m)| !m.is_empty())
        .collect();
    if !existing.is_empty() {
        log::info!("resuming: {} rows present, {} restarts to finish", existing.len(), todo.len());
    }

    let (tx, rx) = mpsc::channel::<(Vec<SweepRow>, usize)>();
    let mut new_rows = Vec::new();
    let mut failures = 0;
    std::thread::scope(|scope| -> Result<()> {
        let todo = &todo;
        scope.spawn(move || {
            exec.map(todo, |(r, missing)| {
                let out = run_restart(cfg, *r, missing, exec);
                let _ = tx.send(out);
            });
        });
        // Single writer: workers only send finished rows.
        let mut file = OpenOptions::new().append(true).open(rows_path)?;
        for (rows, failed) in rx {
            write_rows(&mut file, &rows)?;
            file.sync_data()?;
            failures += failed;
            new_rows.extend(rows);
        }
        Ok(())
    })?;

    let order: BTreeMap<(String, String, usize), usize> = cells
        .iter()
        .enumerate()
        .map(|(i, c)| ((c.method.name().to_string(), c.hyperparams(), c.size), i))
        .collect();
    let mut rows: Vec<SweepRow> = existing.into_iter().chain(new_rows).collect();
    rows.retain(|r| order.contains_key(&(r.method.clone(), r.hyperparams.clone(), r.summary_size)));
    rows.sort_by_key(|r| (order[&(r.method.clone(), r.hyperparams.clone(), r.summary_size)], r.restart));
    rows.dedup_by_key(|r| r.key());
    write_sweep_csv(rows_path, &provenance, &rows)?;
    Ok(SweepResult { rows, failures })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedSetting {
    pub method: String,
    pub hyperparams: String,
    pub summary_size: usize,
    pub n: usize,
    pub accuracy_mean: f64,
    pub accuracy_stderr: f64,
    pub value_diff_mean: f64,
}

/// Settings per summary size, best mean accuracy first.
pub fn rank_settings(rows: &[SweepRow]) -> Vec<RankedSetting> {
    let mut groups: BTreeMap<(usize, String, String), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let g = groups
            .entry((r.summary_size, r.method.clone(), r.hyperparams.clone()))
            .or_default();
        g.0.push(r.accuracy);
        g.1.push(r.value_diff_raw);
    }
    let mut out: Vec<RankedSetting> = groups
        .into_iter()
        .map(|((size, method, hyperparams), (acc, vd))| {
            let (am, ase) = crate::eval::mean_stderr(&acc);
            let (vm, _) = crate::eval::mean_stderr(&vd);
            RankedSetting {
                method,
                hyperparams,
                summary_size: size,
                n: acc.len(),
                accuracy_mean: am,
                accuracy_stderr: ase,
                value_diff_mean: vm,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        a.summary_size
            .cmp(&b.summary_size)
            .then(b.accuracy_mean.total_cmp(&a.accuracy_mean))
            .then(a.method.cmp(&b.method))
            .then(a.hyperparams.cmp(&b.hyperparams))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_grid_counts() {
        let cfg = ExperimentConfig::default();
        assert_eq!(sweep_cells(&cfg).len(), (4 + 6 + 4 + 6) * 5);
        let no_base = ExperimentConfig {
            baselines: false,
            ..cfg
        };
        assert_eq!(sweep_cells(&no_base).len(), (4 + 6) * 5);
    }

    #[test]
    fn hyperparam_labels() {
        let c = Cell {
            method: Method::IlAl,
            l: 1,
            kernel: Some(KernelSpec::poly(0.1, 2)),
            size: 12,
        };
        assert_eq!(c.hyperparams(), "poly:0.1:2");
        let r = Cell {
            method: Method::IrlRandom,
            l: 3,
            kernel: None,
            size: 12,
        };
        assert_eq!(r.hyperparams(), "l=3");
        let il_r = Cell {
            method: Method::IlRandom,
            ..c
        };
        assert_eq!(il_r.hyperparams(), "poly:0.1:2;l=1");
    }

    #[test]
    fn ranking_orders_by_accuracy() {
        let row = |m: &str, acc: f64, restart| SweepRow {
            domain: "gridworld".into(),
            method: m.into(),
            hyperparams: "l=1".into(),
            summary_size: 12,
            restart,
            accuracy: acc,
            value_diff_raw: 0.0,
        };
        let rows = vec![row("a", 0.2, 0), row("a", 0.4, 1), row("b", 0.9, 0)];
        let ranked = rank_settings(&rows);
        assert_eq!(ranked[0].method, "b");
        assert_eq!(ranked[1].n, 2);
        assert!((ranked[1].accuracy_mean - 0.3).abs() < 1e-12);
    }
}
