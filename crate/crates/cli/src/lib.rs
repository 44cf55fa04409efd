//! Command-line front end: `solve`, `extract`, `reconstruct`, `eval`,
//! `sweep`, `cross-matrix` and `report`.
//!
//! Settings come from an optional JSON config file (`--config`), then
//! flags. `POLISUM_OUT` overrides the config's `output_dir`; `--out`
//! overrides both. Exit status is 0 on success, 1 on a usage or
//! configuration error and 2 when the run itself fails.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use polisum::eval::{run_cross_matrix, UserModel};
use polisum::exp::report::{emit_heatmap, write_json_artifact};
use polisum::exp::sweep::{rank_settings, read_rows, run_sweep};
use polisum::exp::{experiment_dir, ExperimentConfig, Provenance, OUT_ENV};
use polisum::il::KernelSpec;
use polisum::model::SummaryDocument;
use polisum::{DomainKind, Error, Exec, Instance};

#[derive(Parser, Debug)]
#[command(name = "polisum", version, about = "Policy summarization experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// JSON experiment config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root (overrides the config and POLISUM_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    domain: Option<DomainKind>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    restarts: Option<usize>,
    #[arg(long, global = true)]
    fqi_iters: Option<usize>,
    #[arg(long, global = true)]
    fqi_episodes: Option<usize>,
    /// Worker threads (default: all logical cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    /// Accept grid values outside the standard ones.
    #[arg(long, global = true)]
    allow_off_grid: bool,
    /// Also write BEC constraints, learned weights and soft predictions.
    #[arg(long, global = true)]
    debug_dumps: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the domain and write the agent's policy.
    Solve,
    /// Extract a summary under one user model.
    Extract {
        #[arg(long)]
        model: UserModel,
        #[arg(long)]
        k: Option<usize>,
        /// IRL trajectory length.
        #[arg(long)]
        l: Option<usize>,
        /// IL kernel, e.g. rbf:1.0 or poly:0.1:2.
        #[arg(long)]
        kernel: Option<KernelSpec>,
    },
    /// Reconstruct the policy from a summary file.
    Reconstruct {
        #[arg(long)]
        model: UserModel,
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        kernel: Option<KernelSpec>,
    },
    /// Reconstruct from a summary file and score the result.
    Eval {
        #[arg(long)]
        model: UserModel,
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        kernel: Option<KernelSpec>,
    },
    /// Matched-model hyperparameter sweep; resumes an interrupted run.
    Sweep {
        /// Comma-separated summary sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// Comma-separated IRL trajectory lengths.
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<usize>>,
        /// Comma-separated IL kernels.
        #[arg(long, value_delimiter = ',')]
        kernels: Option<Vec<KernelSpec>>,
        /// Skip the random-summary baselines.
        #[arg(long)]
        no_baselines: bool,
    },
    /// Extractor × reconstructor matrix over restarts.
    CrossMatrix {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        irl_l: Option<usize>,
        #[arg(long)]
        il_kernel: Option<KernelSpec>,
    },
    /// Redraw a heatmap from matrix.json, or rank settings from rows.csv.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Runs the CLI on `argv` (including the program name) and returns the
/// process exit code.
pub fn cli_main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            1
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            2
        }
    }
}

fn load_config(common: &Common) -> Outcome<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            let cfg: ExperimentConfig = serde_json::from_str(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            cfg
        }
        None => ExperimentConfig::default(),
    };
    if let Ok(dir) = std::env::var(OUT_ENV) {
        if !dir.is_empty() {
            cfg.output_dir = dir.into();
        }
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    if let Some(d) = common.domain {
        cfg.domain = d;
    }
    if let Some(s) = common.seed {
        cfg.master_seed = s;
    }
    if let Some(r) = common.restarts {
        cfg.n_restarts = r;
    }
    if let Some(n) = common.fqi_iters {
        cfg.fqi_iters = n;
    }
    if let Some(n) = common.fqi_episodes {
        cfg.fqi_episodes = n;
    }
    if common.workers.is_some() {
        cfg.workers = common.workers;
    }
    cfg.allow_off_grid |= common.allow_off_grid;
    cfg.debug_dumps |= common.debug_dumps;
    Ok(cfg)
}

fn exec_for(common: &Common) -> Exec {
    if common.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

fn run(cli: Cli) -> Outcome<Vec<PathBuf>> {
    let mut cfg = load_config(&cli.common)?;
    let exec = exec_for(&cli.common);
    match &cli.command {
        Command::Sweep {
            sizes,
            lengths,
            kernels,
            no_baselines,
        } => {
            if let Some(s) = sizes {
                cfg.summary_sizes = s.clone();
            }
            if let Some(l) = lengths {
                cfg.irl_traj_lengths = l.clone();
            }
            if let Some(k) = kernels {
                cfg.il_kernels = k.clone();
            }
            if *no_baselines {
                cfg.baselines = false;
            }
        }
        Command::CrossMatrix { k, irl_l, il_kernel } => {
            cfg.k = k.or(cfg.k);
            cfg.irl_l = irl_l.or(cfg.irl_l);
            cfg.il_kernel = il_kernel.or(cfg.il_kernel);
        }
        Command::Extract { k, l, kernel, .. } => {
            cfg.k = k.or(cfg.k);
            cfg.irl_l = l.or(cfg.irl_l);
            cfg.il_kernel = kernel.or(cfg.il_kernel);
        }
        Command::Reconstruct { kernel, .. } | Command::Eval { kernel, .. } => {
            cfg.il_kernel = kernel.or(cfg.il_kernel);
        }
        _ => {}
    }
    cfg.validate()?;
    let run = || dispatch(&cli.command, &cfg, exec);
    with_pool(cfg.workers, run)
}

#[cfg(feature = "parallel")]
fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Outcome<T> + Send) -> Outcome<T> {
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure::Runtime(e.to_string()))?
            .install(f),
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_pool<T: Send>(_workers: Option<usize>, f: impl FnOnce() -> Outcome<T> + Send) -> Outcome<T> {
    f()
}

fn prepare_dir(cfg: &ExperimentConfig, experiment: &str) -> Outcome<PathBuf> {
    let dir = experiment_dir(&cfg.output_dir, cfg.domain.name(), experiment);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn build_instance(cfg: &ExperimentConfig, exec: Exec) -> Outcome<Instance> {
    Ok(Instance::build(&cfg.domain_spec(cfg.master_seed), exec)?)
}

#[derive(Serialize)]
struct PolicyDocument<'a> {
    domain: &'a str,
    seed: u64,
    canonical: Vec<usize>,
    optimal_set: Vec<Vec<usize>>,
}

#[derive(Serialize)]
struct ReconstructionDocument<'a> {
    domain: &'a str,
    seed: u64,
    reconstructor: UserModel,
    extractor: &'a str,
    k: usize,
    /// Predicted action per state; null where undefined.
    actions: Vec<Option<usize>>,
}

#[derive(Serialize)]
struct ScoreDocument<'a> {
    domain: &'a str,
    seed: u64,
    reconstructor: UserModel,
    extractor: &'a str,
    k: usize,
    accuracy: f64,
    value_diff_raw: f64,
    n_unseen: usize,
}

fn read_summary(path: &Path, cfg: &ExperimentConfig) -> Outcome<SummaryDocument> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let doc: SummaryDocument = serde_json::from_str(&text)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    if doc.domain != cfg.domain.name() {
        return Err(Failure::Config(format!(
            "summary is for {} but the domain is {}",
            doc.domain, cfg.domain
        )));
    }
    Ok(doc)
}

fn reconstruct(
    inst: &Instance,
    model: UserModel,
    doc: &SummaryDocument,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Outcome<(polisum::Summary, polisum::ActionTable)> {
    let summary = doc.to_summary()?;
    summary.check_against(&inst.demos)?;
    let (_, _, kernel) = cfg.matrix_settings();
    let table = match model {
        UserModel::Irl => {
            if cfg.debug_dumps {
                let fit = inst.irl_fit(&summary)?;
                write_json_artifact(
                    &dir.join(format!("weights-{}.json", doc.extractor)),
                    &cfg.provenance(),
                    &serde_json::json!({
                        "weights": fit.weights.w,
                        "iterations": fit.iterations,
                        "log_likelihoods": fit.log_likelihoods,
                    }),
                )?;
            }
            inst.reconstruct_irl(&summary)?
        }
        UserModel::Il => {
            if cfg.debug_dumps {
                let m = inst.il_model(&summary, &kernel)?;
                let mut csv = String::from("state");
                for c in 0..inst.n_actions {
                    write!(csv, ",score_{c}").unwrap();
                }
                csv.push_str(",prediction\n");
                for (r, (&node, hard)) in m.unlabeled.iter().zip(m.hard()).enumerate() {
                    write!(csv, "{}", inst.demos.unique_states()[node]).unwrap();
                    for v in m.soft().row(r).iter() {
                        write!(csv, ",{v}").unwrap();
                    }
                    writeln!(csv, ",{hard}").unwrap();
                }
                fs::write(dir.join(format!("soft-{}.csv", doc.extractor)), csv)?;
            }
            inst.reconstruct_il(&summary, &kernel)?
        }
    };
    Ok((summary, table))
}

fn dispatch(cmd: &Command, cfg: &ExperimentConfig, exec: Exec) -> Outcome<Vec<PathBuf>> {
    let prov = cfg.provenance();
    let domain = cfg.domain.name();
    match cmd {
        Command::Solve => {
            let inst = build_instance(cfg, exec)?;
            let dir = prepare_dir(cfg, "solve")?;
            let path = dir.join("policy.json");
            let doc = PolicyDocument {
                domain,
                seed: cfg.master_seed,
                canonical: inst.expert.canonical().iter().map(|a| a.0).collect(),
                optimal_set: inst
                    .expert
                    .optimal_sets()
                    .iter()
                    .map(|s| s.iter().map(|a| a.0).collect())
                    .collect(),
            };
            write_json_artifact(&path, &prov, &doc)?;
            Ok(vec![path])
        }
        Command::Extract { model, .. } => {
            let (k, l, kernel) = cfg.matrix_settings();
            let inst = build_instance(cfg, exec)?;
            let dir = prepare_dir(cfg, "extract")?;
            let (summary, l_doc) = match model {
                UserModel::Irl => {
                    let s = inst.scot_summary(
                        k,
                        l,
                        polisum::seed::derive(cfg.master_seed, polisum::seed::stream::SCOT),
                    )?;
                    if cfg.debug_dumps {
                        let (table, targets) = inst.bec()?;
                        write_json_artifact(
                            &dir.join("bec.json"),
                            &prov,
                            &serde_json::json!({ "table": table, "pruned": targets }),
                        )?;
                    }
                    (s, l)
                }
                UserModel::Il => (inst.il_summary(k, &kernel)?, 1),
            };
            let path = dir.join(format!("summary-{model}-k{k}.json"));
            write_json_artifact(&path, &prov, &summary.to_document(domain, model.name(), l_doc))?;
            Ok(vec![path])
        }
        Command::Reconstruct { model, summary, .. } => {
            let doc = read_summary(summary, cfg)?;
            let inst = build_instance(cfg, exec)?;
            let dir = prepare_dir(cfg, "reconstruct")?;
            let (_, table) = reconstruct(&inst, *model, &doc, cfg, &dir)?;
            let path = dir.join(format!("policy-{model}-from-{}-k{}.json", doc.extractor, doc.k));
            let out = ReconstructionDocument {
                domain,
                seed: cfg.master_seed,
                reconstructor: *model,
                extractor: &doc.extractor,
                k: doc.k,
                actions: table.0.iter().map(|a| a.map(|a| a.0)).collect(),
            };
            write_json_artifact(&path, &prov, &out)?;
            Ok(vec![path])
        }
        Command::Eval { model, summary, .. } => {
            let doc = read_summary(summary, cfg)?;
            let inst = build_instance(cfg, exec)?;
            let dir = prepare_dir(cfg, "eval")?;
            let (summary, table) = reconstruct(&inst, *model, &doc, cfg, &dir)?;
            let score = inst.score(&summary, &table)?;
            let path = dir.join(format!("score-{model}-from-{}-k{}.json", doc.extractor, doc.k));
            let out = ScoreDocument {
                domain,
                seed: cfg.master_seed,
                reconstructor: *model,
                extractor: &doc.extractor,
                k: doc.k,
                accuracy: score.accuracy,
                value_diff_raw: score.value_diff_raw,
                n_unseen: score.n_unseen,
            };
            write_json_artifact(&path, &prov, &out)?;
            Ok(vec![path])
        }
        Command::Sweep { .. } => {
            let dir = prepare_dir(cfg, "sweep")?;
            let rows_path = dir.join("rows.csv");
            let result = run_sweep(cfg, &rows_path, exec)?;
            let ranking = dir.join("ranking.csv");
            write_ranking(&ranking, &prov, &result.rows)?;
            let mut log = run_log(cfg);
            writeln!(log, "rows: {}", result.rows.len()).unwrap();
            writeln!(log, "failed cells: {}", result.failures).unwrap();
            fs::write(dir.join("log.txt"), log)?;
            Ok(vec![rows_path, ranking])
        }
        Command::CrossMatrix { .. } => {
            let mcfg = cfg.cross_matrix();
            let dir = prepare_dir(cfg, "cross-matrix")?;
            let m = run_cross_matrix(&mcfg, exec)?;
            let json = dir.join("matrix.json");
            write_json_artifact(&json, &prov, &m)?;
            let mut csv = Vec::new();
            m.write_csv(&mut csv)?;
            let csv_path = dir.join("matrix.csv");
            fs::write(&csv_path, csv)?;
            emit_heatmap(&m, &dir, &prov)?;
            let mut log = run_log(cfg);
            writeln!(log, "restarts: {} ok, {} failed", m.restarts.len(), m.failures.len()).unwrap();
            for f in &m.failures {
                writeln!(log, "restart {} failed: {}", f.restart, f.error).unwrap();
            }
            for c in &m.cells {
                writeln!(
                    log,
                    "{} summary -> {} reconstruction: accuracy {:.4} ± {:.4}, scaled value diff {:.4}",
                    c.extractor, c.reconstructor, c.accuracy.mean, c.accuracy.stderr, c.value_diff_scaled.mean
                )
                .unwrap();
            }
            fs::write(dir.join("log.txt"), log)?;
            Ok(vec![json, csv_path, dir.join("heatmap.svg")])
        }
        Command::Report { input } => report(input, cfg),
    }
}

fn run_log(cfg: &ExperimentConfig) -> String {
    let prov = cfg.provenance();
    let mut log = String::new();
    writeln!(log, "{}", prov.header_line().trim_start_matches("# ")).unwrap();
    writeln!(log, "config: {}", serde_json::to_string(&ExperimentConfig {
        output_dir: PathBuf::new(),
        workers: None,
        ..cfg.clone()
    })
    .expect("config serializes"))
    .unwrap();
    log
}

fn write_ranking(path: &Path, prov: &Provenance, rows: &[polisum::exp::SweepRow]) -> Outcome<()> {
    let mut s = prov.header_line();
    s.push('\n');
    s.push_str("summary_size,method,hyperparams,n,accuracy_mean,accuracy_stderr,value_diff_mean\n");
    for r in rank_settings(rows) {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.summary_size, r.method, r.hyperparams, r.n, r.accuracy_mean, r.accuracy_stderr, r.value_diff_mean
        )
        .unwrap();
    }
    fs::write(path, s)?;
    Ok(())
}

fn report(input: &Path, cfg: &ExperimentConfig) -> Outcome<Vec<PathBuf>> {
    let text = fs::read_to_string(input)
        .map_err(|e| Failure::Config(format!("{}: {e}", input.display())))?;
    let dir = prepare_dir(cfg, "report")?;
    if input.extension().and_then(|e| e.to_str()) == Some("json") {
        let v: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Failure::Config(format!("{}: {e}", input.display())))?;
        let prov: Provenance = serde_json::from_value(v["provenance"].clone())
            .map_err(|e| Failure::Config(format!("{}: provenance: {e}", input.display())))?;
        let m: polisum::eval::CrossMatrix = serde_json::from_value(v)
            .map_err(|e| Failure::Config(format!("{}: {e}", input.display())))?;
        emit_heatmap(&m, &dir, &prov)?;
        Ok(vec![dir.join("heatmap.svg"), dir.join("heatmap.csv")])
    } else {
        let header = text.lines().next().unwrap_or_default();
        let prov = parse_header(header)
            .ok_or_else(|| Failure::Config(format!("{}: missing provenance header", input.display())))?;
        let rows = read_rows(input, &prov)?;
        let path = dir.join("ranking.csv");
        write_ranking(&path, &prov, &rows)?;
        Ok(vec![path])
    }
}

fn parse_header(line: &str) -> Option<Provenance> {
    let mut hash = None;
    let mut seed = None;
    let mut version = None;
    for part in line.strip_prefix("# ")?.split(' ') {
        let (k, v) = part.split_once('=')?;
        match k {
            "config_hash" => hash = Some(v.to_string()),
            "master_seed" => seed = v.parse().ok(),
            "version" => version = Some(v.to_string()),
            _ => {}
        }
    }
    Some(Provenance {
        config_hash: hash?,
        master_seed: seed?,
        version: version?,
    })
}
