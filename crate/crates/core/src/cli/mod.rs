//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 compute failure.

pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::data::{load_csv, Dataset};
use crate::error::{Error, Result};
use crate::eval::{self, average_ranks, nemenyi_cd, run_experiment_resumable, write_ranks_csv};
use crate::format;
use crate::homogeneous::{ensemble_predict, HomogeneousEnsemble};
use crate::simplex::{self, pool, read_scan_optimum, scan_simplex_with, Composition, StridePolicy};

pub use config::{Profile, Settings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_COMPUTE: i32 = 4;

/// Extension of saved ensembles.
pub const ENSEMBLE_EXT: &str = "hpe";
/// Extension of saved datasets.
pub const DATASET_EXT: &str = "hpd";

#[derive(Debug, Parser)]
#[command(name = "hetpool", version, about = "Heterogeneous ensembles pooled from homogeneous ones")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration layered over the profile.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "HETPOOL_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Base settings: `paper` (full scale) or `desk` (reduced).
    #[arg(long, global = true, value_enum)]
    pub profile: Option<Profile>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the SVM, MLP and tree ensembles for one dataset split.
    Train {
        /// Dataset URI (`synthetic:<name>`, `csv:<path>`); defaults to the first configured one.
        #[arg(long)]
        dataset: Option<String>,
        /// Which repetition's split to train on.
        #[arg(long, default_value_t = 0)]
        repetition: usize,
    },
    /// Score every composition on the stride grid by out-of-bag error.
    Scan {
        #[arg(long, num_args = 1.., required = true)]
        ensembles: Vec<PathBuf>,
        /// Training set the ensembles were built on (`.hpd` or CSV).
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long, value_parser = parse_policy)]
        stride_policy: Option<StridePolicy>,
    },
    /// Run the repeated-split comparison and write result tables.
    Experiment,
    /// Classify a dataset with a pooled composition.
    Predict {
        #[arg(long, num_args = 1.., required = true)]
        ensembles: Vec<PathBuf>,
        /// Counts per ensemble, e.g. `40,20,41`.
        #[arg(long, conflicts_with = "scan")]
        composition: Option<Composition>,
        /// Use the optimum recorded in a scan file.
        #[arg(long)]
        scan: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
    },
    /// Print a summary of a saved ensemble or dataset.
    Inspect { path: PathBuf },
}

fn parse_policy(s: &str) -> std::result::Result<StridePolicy, String> {
    match s {
        "strict" => Ok(StridePolicy::Strict),
        "remainder-to-last" => Ok(StridePolicy::RemainderToLast),
        _ => Err(format!("unknown stride policy `{s}` (strict, remainder-to-last)")),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Io { .. }
        | Error::Csv(_)
        | Error::RaggedRow { .. }
        | Error::BadValue { .. }
        | Error::MissingLabelColumn(_)
        | Error::SingleClass(_)
        | Error::InvalidDataset(_)
        | Error::ClassTooSmall { .. }
        | Error::FingerprintMismatch(..)
        | Error::Format(_)
        | Error::Json(_) => EXIT_DATA,
        _ => EXIT_COMPUTE,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Configuration after applying the profile, file and flags.
pub fn resolve_settings(common: &Common) -> Result<Settings> {
    let mut s = match &common.config {
        Some(path) => Settings::load(path, common.profile)?,
        None => Settings::profile(common.profile.unwrap_or_default()),
    };
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    if let Some(t) = common.threads {
        s.threads = t;
    }
    Ok(s)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let settings = resolve_settings(&cli.common)?;
    // every constraint is checked before any work starts
    let cfg = settings.experiment()?;
    let out = &cli.common.out_dir;
    let mut manifest = Manifest::new(&cli.command, &settings);
    eval::with_threads(settings.threads, || -> Result<()> {
        match &cli.command {
            Command::Train { dataset, repetition } => cmd_train(&cfg, dataset.as_deref(), *repetition, out, &mut manifest),
            Command::Scan {
                ensembles,
                train,
                stride,
                stride_policy,
            } => cmd_scan(
                &cfg,
                ensembles,
                train,
                stride.unwrap_or(cfg.stride),
                stride_policy.unwrap_or(cfg.stride_policy),
                out,
                &mut manifest,
            ),
            Command::Experiment => cmd_experiment(&cfg, out, &mut manifest),
            Command::Predict {
                ensembles,
                composition,
                scan,
                data,
            } => cmd_predict(&cfg, ensembles, composition.as_ref(), scan.as_deref(), data, out, &mut manifest),
            Command::Inspect { path } => return cmd_inspect(path),
        }?;
        manifest.write(out)
    })?
}

#[derive(Serialize)]
struct Artifact {
    role: String,
    path: PathBuf,
    sha256: String,
}

/// Record of one command run: resolved settings, outputs and their digests.
#[derive(Serialize)]
pub struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    settings: Settings,
    master_seed: u64,
    started_unix: u64,
    finished_unix: u64,
    artifacts: Vec<Artifact>,
    details: serde_json::Value,
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Train { .. } => "train",
        Command::Scan { .. } => "scan",
        Command::Experiment => "experiment",
        Command::Predict { .. } => "predict",
        Command::Inspect { .. } => "inspect",
    }
}

impl Manifest {
    fn new(command: &Command, settings: &Settings) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command_name(command).into(),
            settings: settings.clone(),
            master_seed: settings.seed,
            started_unix: now_unix(),
            finished_unix: 0,
            artifacts: Vec::new(),
            details: json!({}),
        }
    }

    fn add(&mut self, role: &str, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.artifacts.push(Artifact {
            role: role.into(),
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    fn write(&mut self, out: &Path) -> Result<()> {
        self.finished_unix = now_unix();
        let path = out.join(format!("{}.manifest.json", self.command));
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        log::info!("wrote {}", path.display());
        Ok(())
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// A saved dataset, or a CSV read with the configured options.
pub fn read_dataset(path: &Path, cfg: &eval::ExperimentConfig) -> Result<Dataset> {
    if path.extension().is_some_and(|e| e == DATASET_EXT) {
        format::load_dataset(path)
    } else {
        load_csv(path, &cfg.csv)
    }
}

fn cmd_train(
    cfg: &eval::ExperimentConfig,
    dataset: Option<&str>,
    repetition: usize,
    out: &Path,
    manifest: &mut Manifest,
) -> Result<()> {
    let uri = dataset.unwrap_or(&cfg.datasets[0]);
    let index = cfg.datasets.iter().position(|d| d == uri).unwrap_or(0);
    let (name, data) = eval::load_dataset(uri, &cfg.csv)?;
    let seed = eval::cell_seed(cfg.master_seed, index, repetition);
    let (train, test) = eval::split_for(cfg, &data, seed)?;
    log::info!(
        "{name}: training on {} rows ({} test rows), t = {}, b = {}",
        train.n_instances(),
        test.n_instances(),
        cfg.t,
        cfg.b
    );
    let ensembles = eval::build_ensembles(cfg, &train, seed)?;
    create_dir(out)?;
    for (role, ds) in [("train", &train), ("test", &test)] {
        let path = out.join(format!("{role}.{DATASET_EXT}"));
        format::save_dataset(ds, &path)?;
        manifest.add(role, &path)?;
    }
    for e in &ensembles {
        let path = out.join(format!("{}.{ENSEMBLE_EXT}", e.kind));
        format::save_ensemble(e, &path)?;
        manifest.add(&format!("ensemble:{}", e.kind), &path)?;
        for w in &e.warnings {
            log::warn!("{}: {w}", e.kind);
        }
    }
    manifest.details = json!({
        "dataset": uri,
        "dataset_index": index,
        "repetition": repetition,
        "cell_seed": seed,
        "train_fingerprint": train.fingerprint(),
        "batch_params": ensembles.iter().map(|e| e.batch_params.iter().map(|p| p.to_string()).collect::<Vec<_>>()).collect::<Vec<_>>(),
    });
    Ok(())
}

fn load_ensembles(paths: &[PathBuf]) -> Result<Vec<HomogeneousEnsemble>> {
    paths.iter().map(format::load_ensemble).collect()
}

fn cmd_scan(
    cfg: &eval::ExperimentConfig,
    paths: &[PathBuf],
    train_path: &Path,
    stride: usize,
    policy: StridePolicy,
    out: &Path,
    manifest: &mut Manifest,
) -> Result<()> {
    let ensembles = load_ensembles(paths)?;
    let train = read_dataset(train_path, cfg)?;
    simplex::check_fingerprints(&ensembles)?;
    let t = ensembles.iter().map(HomogeneousEnsemble::len).min().unwrap_or(0);
    if stride == 0 || stride > t || (policy == StridePolicy::Strict && t % stride != 0) {
        return Err(Error::Config(format!("stride {stride} is not usable with t = {t} ({policy:?})")));
    }
    let scan = scan_simplex_with(&ensembles, t, stride, policy, &train)?;
    create_dir(out)?;
    let scan_path = out.join("scan.csv");
    simplex::save_scan_csv(&scan, &scan_path)?;
    manifest.add("scan", &scan_path)?;
    if scan.kinds.len() == 3 {
        let heat = out.join("heatmap.csv");
        simplex::export_heatmap(&scan, &heat)?;
        manifest.add("heatmap", &heat)?;
    }
    let optimum = json!({
        "kinds": scan.kinds,
        "optimum": scan.optimum.counts,
        "oob_error": scan.optimum_estimate.error,
        "covered_fraction": scan.optimum_estimate.covered_fraction,
        "minima": scan.minima.iter().map(|c| c.counts.clone()).collect::<Vec<_>>(),
        "grid_points": scan.entries.len(),
    });
    let opt_path = out.join("optimum.json");
    std::fs::write(&opt_path, serde_json::to_string_pretty(&optimum)?).map_err(|e| Error::io(&opt_path, e))?;
    manifest.add("optimum", &opt_path)?;
    println!(
        "optimum {} oob_error {} over {} compositions",
        scan.optimum,
        scan.optimum_estimate.error,
        scan.entries.len()
    );
    manifest.details = optimum;
    Ok(())
}

fn cmd_experiment(cfg: &eval::ExperimentConfig, out: &Path, manifest: &mut Manifest) -> Result<()> {
    create_dir(out)?;
    let cells = out.join("cells");
    let table = run_experiment_resumable(cfg, Some(&cells))?;
    let results = out.join("results.csv");
    write_with(&results, |b| table.write_summary_csv(b))?;
    manifest.add("results", &results)?;
    let runs = out.join("runs.csv");
    write_with(&runs, |b| table.write_runs_csv(b))?;
    manifest.add("runs", &runs)?;
    if !table.compositions.is_empty() {
        let comps = out.join("compositions.csv");
        write_with(&comps, |b| table.write_compositions_csv(b))?;
        manifest.add("compositions", &comps)?;
    }
    let k = table.methods.len();
    if (2..=10).contains(&k) {
        match average_ranks(&table, &table.methods) {
            Ok(ranks) => {
                let alpha = 0.05;
                let cd = nemenyi_cd(k, table.datasets.len(), alpha)?;
                let path = out.join("ranks.csv");
                write_with(&path, |b| write_ranks_csv(&table.methods, &ranks, cd, alpha, b))?;
                manifest.add("ranks", &path)?;
            }
            Err(e) => log::warn!("ranks not written: {e}"),
        }
    }
    let mut cell_files: Vec<PathBuf> = Vec::new();
    for c in &table.cells {
        let p = eval::cell_path(&cells, c.dataset_index, c.repetition);
        if p.exists() {
            manifest.add("cell", &p)?;
            cell_files.push(p);
        }
    }
    let failed: Vec<String> = table
        .cells
        .iter()
        .filter_map(|c| c.failure.as_ref().map(|f| format!("{} rep {}: {f}", c.dataset, c.repetition)))
        .collect();
    manifest.details = json!({
        "config_fingerprint": cfg.fingerprint(),
        "completed_cells": table.cells.len() - failed.len(),
        "failed_cells": failed,
    });
    for r in &table.summary {
        println!("{:<12} {:<6} mean {:.4} sd {:.4} ({} runs)", r.dataset, r.method, r.mean, r.std, r.runs.len());
    }
    if !failed.is_empty() {
        return Err(Error::InvalidArgument(format!("{} cell(s) failed; see the manifest", failed.len())));
    }
    Ok(())
}

fn cmd_predict(
    cfg: &eval::ExperimentConfig,
    paths: &[PathBuf],
    composition: Option<&Composition>,
    scan: Option<&Path>,
    data: &Path,
    out: &Path,
    manifest: &mut Manifest,
) -> Result<()> {
    let ensembles = load_ensembles(paths)?;
    let comp = match (composition, scan) {
        (Some(c), _) => c.clone(),
        (None, Some(s)) => read_scan_optimum(s)?,
        (None, None) => return Err(Error::Config("predict needs --composition or --scan".into())),
    };
    let ds = read_dataset(data, cfg)?;
    let pooled = pool(&ensembles, &comp)?;
    let preds = ds
        .rows()
        .map(|x| ensemble_predict(pooled.iter().copied(), x))
        .collect::<Result<Vec<_>>>()?;
    let wrong = preds.iter().zip(ds.labels()).filter(|(p, l)| p != l).count();
    let error = wrong as f64 / ds.n_instances() as f64;
    create_dir(out)?;
    let path = out.join("predictions.csv");
    write_with(&path, |b| {
        use std::io::Write;
        let io = |e| Error::io("<predictions>", e);
        writeln!(b, "row,prediction,label").map_err(io)?;
        for (i, p) in preds.iter().enumerate() {
            writeln!(b, "{i},{p},{}", ds.label(i)).map_err(io)?;
        }
        Ok(())
    })?;
    manifest.add("predictions", &path)?;
    manifest.details = json!({ "composition": comp.counts, "error": error, "rows": ds.n_instances() });
    println!("composition {comp} error {error}");
    Ok(())
}

fn cmd_inspect(path: &Path) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let summary = match format::decode_ensemble(&bytes) {
        Ok(e) => json!({
            "type": "ensemble",
            "kind": e.kind,
            "members": e.len(),
            "batch_sizes": e.batch_sizes,
            "batch_params": e.batch_params.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
            "train_fingerprint": e.train_fingerprint,
            "master_seed": e.master_seed,
            "features": e.n_features,
            "classes": e.n_classes,
            "scaled": e.scaler.is_some(),
            "unconverged_members": e.models.iter().filter(|m| !m.converged).count(),
            "warnings": e.warnings,
        }),
        Err(_) => {
            let ds = format::decode_dataset(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            json!({
                "type": "dataset",
                "instances": ds.n_instances(),
                "features": ds.n_features(),
                "classes": ds.class_names(),
                "class_counts": ds.class_counts(),
                "fingerprint": ds.fingerprint(),
            })
        }
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
