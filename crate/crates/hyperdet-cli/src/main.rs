//! Command-line entry point wiring dataset generation, training, evaluation
//! and experiment sweeps into reproducible runs.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use hyperdet::config::ExperimentConfig;
use hyperdet::diffusion::{self, CascadeDataset};
use hyperdet::metrics::{MetricsReport, ReportMeta};
use hyperdet::model::{load_checkpoint, save_checkpoint};
use hyperdet::sweeps::{
    self, effective_graph, effective_propagation, plain_run_seed, RunSpec, SweepKind, Variant,
};
use hyperdet::trainer::{PretrainReport, TrainReport, TrainSnapshot};
use hyperdet::{derive_seed, Error, Hypergraph};

#[derive(Parser)]
#[command(name = "hyperdet", version, about = "Rumor source detection on hypergraphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a cascade dataset and write the hypergraph alongside it.
    Gen(GenArgs),
    /// Pretrain and fine-tune a detector on a generated dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset's test split.
    Eval(EvalArgs),
    /// Run one sweep family end to end.
    Sweep(SweepArgs),
    /// Summarize a report JSON file.
    Report(ReportArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config JSON; built-in defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; a fresh timestamped directory under ./runs otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Cascade count override.
    #[arg(long)]
    count: Option<usize>,
    /// Snapshot fraction override.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset directory written by gen.
    #[arg(long)]
    data: PathBuf,
    /// Model variant: full, woH, woD, woE, wAL or wAS.
    #[arg(long, default_value = "full")]
    variant: String,
    #[arg(long)]
    lr_pretrain: Option<f64>,
    #[arg(long)]
    lr_finetune: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Fine-tuning epoch cap.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    /// Early-stopping patience on validation F1.
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint written by train.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory written by gen.
    #[arg(long)]
    data: PathBuf,
    /// Variant the checkpoint was trained as.
    #[arg(long, default_value = "full")]
    variant: String,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Sweep family: early, incomplete, ablation or models.
    #[arg(long)]
    kind: String,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON (single report or a series).
    path: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    std::process::exit(code);
}

/// 0 success, 2 config error, 3 numeric failure, 4 I/O.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_)
        | Error::InvalidHypergraph(_)
        | Error::Parse { .. }
        | Error::Json(_)
        | Error::Shape(_) => 2,
        Error::Numeric(_) => 3,
        Error::Io(_) => 4,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    init_threads()?;
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Report(args) => cmd_report(args),
    }
}

/// HYPERDET_THREADS caps the worker pool; unset leaves rayon's default.
fn init_threads() -> Result<(), Error> {
    match std::env::var("HYPERDET_THREADS") {
        Err(_) => Ok(()),
        Ok(raw) => {
            let n: usize = raw
                .parse()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "HYPERDET_THREADS must be a positive integer, got {raw:?}"
                    ))
                })?;
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(())
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

/// Resolve the output directory: `--out` as-is, otherwise a fresh
/// `runs/<command>-<unix seconds>[-<n>]`.
fn out_dir(common: &CommonArgs, command: &str) -> Result<PathBuf, Error> {
    if let Some(out) = &common.out {
        std::fs::create_dir_all(out)?;
        return Ok(out.clone());
    }
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).expect("clock").as_secs();
    for attempt in 0..1000 {
        let name = if attempt == 0 {
            format!("runs/{command}-{secs}")
        } else {
            format!("runs/{command}-{secs}-{attempt}")
        };
        let path = PathBuf::from(name);
        match std::fs::create_dir_all(path.parent().expect("runs parent"))
            .and_then(|()| std::fs::create_dir(&path))
        {
            Ok(()) => return Ok(path),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(Error::Io(std::io::Error::other("could not allocate a fresh run directory")))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Manifest<'a> {
    command: &'a str,
    config: &'a ExperimentConfig,
    variant: Option<&'a str>,
    data_dir: Option<&'a Path>,
    artifacts: Vec<String>,
    /// Extra run facts (counts, died-out statistics, seeds).
    notes: serde_json::Value,
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<(), Error> {
    write_json(&dir.join("manifest.json"), manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let json = serde_json::to_string_pretty(value)?;
    std::fs::write(path, json)?;
    Ok(())
}

fn parse_variant(s: &str) -> Result<Variant, Error> {
    s.parse()
}

fn cmd_gen(args: GenArgs) -> Result<(), Error> {
    let mut cfg = load_config(&args.common)?;
    if let Some(count) = args.count {
        cfg.cascades = count;
    }
    if let Some(delta) = args.delta {
        cfg.propagation.snapshot_fraction = delta;
    }
    cfg.validate()?;
    let g = cfg.resolve_hypergraph()?;
    cfg.propagation.validate(g.node_count())?;

    let run_seed = plain_run_seed(cfg.master_seed);
    let prop = effective_propagation(&cfg, &RunSpec::default(), run_seed);
    let dataset = diffusion::generate_dataset(&g, &prop, cfg.cascades, cfg.train_ratio)?;

    let dir = out_dir(&args.common, "gen")?;
    g.save(&dir.join("hypergraph.hg"))?;
    diffusion::save_dataset(&dataset.train, &dir.join("train.json"))?;
    diffusion::save_dataset(&dataset.test, &dir.join("test.json"))?;

    let died_out = dataset.train.iter().chain(&dataset.test).filter(|s| s.meta.died_out).count();
    let notes = serde_json::json!({
        "runSeed": run_seed,
        "propagationSeed": prop.seed,
        "trainCount": dataset.train.len(),
        "testCount": dataset.test.len(),
        "diedOut": died_out,
    });
    write_manifest(
        &dir,
        &Manifest {
            command: "gen",
            config: &cfg,
            variant: None,
            data_dir: None,
            artifacts: artifact_names(&["hypergraph.hg", "train.json", "test.json"]),
            notes,
        },
    )?;
    log::info!(
        "wrote {} train and {} test cascades to {}",
        dataset.train.len(),
        dataset.test.len(),
        dir.display()
    );
    println!("{}", dir.display());
    Ok(())
}

fn artifact_names(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn load_data_dir(data: &Path) -> Result<(Hypergraph, CascadeDataset), Error> {
    let g = Hypergraph::load(&data.join("hypergraph.hg"))?;
    let train = diffusion::load_dataset(&data.join("train.json"))?;
    let test = diffusion::load_dataset(&data.join("test.json"))?;
    Ok((g, CascadeDataset { train, test }))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct TrainArtifact {
    pretrain: Option<PretrainReport>,
    finetune: TrainReport,
}

fn cmd_train(args: TrainArgs) -> Result<(), Error> {
    let mut cfg = load_config(&args.common)?;
    if let Some(v) = args.lr_pretrain {
        cfg.train.lr_pretrain = v;
    }
    if let Some(v) = args.lr_finetune {
        cfg.train.lr_finetune = v;
    }
    if let Some(v) = args.lambda {
        cfg.train.lambda = v;
    }
    if let Some(v) = args.epochs {
        cfg.train.finetune_epochs = v;
    }
    if let Some(v) = args.pretrain_epochs {
        cfg.train.pretrain_epochs = v;
    }
    if let Some(v) = args.patience {
        cfg.train.early_stop_patience = v;
    }
    cfg.validate()?;
    let variant = parse_variant(&args.variant)?;
    let spec = RunSpec { variant, ..Default::default() };

    let (g, dataset) = load_data_dir(&args.data)?;
    let run_seed = plain_run_seed(cfg.master_seed);
    let data = sweeps::prepare_from_dataset(&g, &dataset, &cfg, &spec, run_seed)?;
    if variant.use_autoencoder() && cfg.train.pretrain_epochs == 0 {
        log::info!("pretraining disabled by config");
    }
    if !variant.use_autoencoder() {
        log::info!("variant {variant} skips the autoencoder pretraining stage");
    }
    let trained = sweeps::train_run(&data, &cfg, &spec, run_seed)?;

    let dir = out_dir(&args.common, "train")?;
    let init_seed = derive_seed(run_seed, 2);
    save_checkpoint(&trained.params, Some(init_seed), &dir.join("checkpoint.bin"))?;
    write_json(
        &dir.join("train_report.json"),
        &TrainArtifact { pretrain: trained.pretrain, finetune: trained.report.clone() },
    )?;
    let notes = serde_json::json!({
        "runSeed": run_seed,
        "initSeed": init_seed,
        "bestEpoch": trained.report.best_epoch,
        "bestValF1": trained.report.best_val_f1,
        "trainSnapshots": data.train.len(),
        "valSnapshots": data.val.len(),
    });
    write_manifest(
        &dir,
        &Manifest {
            command: "train",
            config: &cfg,
            variant: Some(variant.name()),
            data_dir: Some(&args.data),
            artifacts: artifact_names(&["checkpoint.bin", "train_report.json"]),
            notes,
        },
    )?;
    log::info!(
        "best validation F1 {:.4} at epoch {}; checkpoint in {}",
        trained.report.best_val_f1,
        trained.report.best_epoch,
        dir.display()
    );
    println!("{}", dir.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    let cfg = load_config(&args.common)?;
    cfg.validate()?;
    let variant = parse_variant(&args.variant)?;
    let params = load_checkpoint(&args.checkpoint)?;
    if params.widths.feature_width != 2 + cfg.model.k {
        return Err(Error::Shape(format!(
            "checkpoint expects feature width {}, config k={} implies {}",
            params.widths.feature_width,
            cfg.model.k,
            2 + cfg.model.k
        )));
    }

    let (g, dataset) = load_data_dir(&args.data)?;
    let eff = effective_graph(&g, variant)?;
    let test: Result<Vec<TrainSnapshot>, Error> = dataset
        .test
        .iter()
        .map(|s| TrainSnapshot::prepare(&eff, s, cfg.model.k, variant.dynamic_cols()))
        .collect();
    let test = test?;
    let rows = sweeps::evaluate_model(&params, &test, variant.attention_mode());
    let meta = ReportMeta {
        variant: Some(variant.to_string()),
        delta: Some(cfg.propagation.snapshot_fraction),
        incompleteness: Some(0.0),
        diffusion_model: Some(cfg.propagation.model),
        seed_count: Some(1),
        detector: Some("hyperdet".into()),
    };
    let report = MetricsReport::from_snapshots(rows, meta);

    let dir = out_dir(&args.common, "eval")?;
    write_json(&dir.join("metrics.json"), &report)?;
    std::fs::write(dir.join("metrics.csv"), report.to_csv())?;
    let notes = serde_json::json!({
        "checkpoint": args.checkpoint,
        "testSnapshots": report.per_snapshot.len(),
    });
    write_manifest(
        &dir,
        &Manifest {
            command: "eval",
            config: &cfg,
            variant: Some(variant.name()),
            data_dir: Some(&args.data),
            artifacts: artifact_names(&["metrics.json", "metrics.csv"]),
            notes,
        },
    )?;
    log::info!(
        "test F1 {:.4} / ACC {:.4} over {} snapshots; reports in {}",
        report.mean.f1,
        report.mean.acc,
        report.per_snapshot.len(),
        dir.display()
    );
    println!("{}", dir.display());
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Error> {
    let cfg = load_config(&args.common)?;
    cfg.validate()?;
    let kind: SweepKind = args.kind.parse()?;
    let g = cfg.resolve_hypergraph()?;
    cfg.propagation.validate(g.node_count())?;

    let reports = sweeps::run_sweep(&g, &cfg, kind)?;
    let dir = out_dir(&args.common, "sweep")?;
    write_json(&dir.join("series.json"), &reports)?;
    std::fs::write(dir.join("series.csv"), sweeps::series_to_csv(&reports))?;
    let notes = serde_json::json!({
        "kind": kind.to_string(),
        "arms": reports.len(),
    });
    write_manifest(
        &dir,
        &Manifest {
            command: "sweep",
            config: &cfg,
            variant: None,
            data_dir: None,
            artifacts: artifact_names(&["series.json", "series.csv"]),
            notes,
        },
    )?;
    for rep in &reports {
        log::info!(
            "arm variant={} delta={} inc={} model={}: F1 {:.4} ± {:.4}",
            rep.meta.variant.as_deref().unwrap_or("-"),
            rep.meta.delta.map_or("-".to_string(), |d| format!("{d}")),
            rep.meta.incompleteness.map_or("-".to_string(), |r| format!("{r}")),
            rep.meta.diffusion_model.map_or("-".to_string(), |m| m.to_string()),
            rep.mean.f1,
            rep.std.f1
        );
    }
    println!("{}", dir.display());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), Error> {
    let raw = std::fs::read_to_string(&args.path)?;
    let reports: Vec<MetricsReport> = match serde_json::from_str::<Vec<MetricsReport>>(&raw) {
        Ok(series) => series,
        Err(_) => vec![serde_json::from_str::<MetricsReport>(&raw)?],
    };
    println!("detector variant delta inc model snapshots | acc precision recall f1 auc");
    for rep in &reports {
        let auc = rep
            .mean
            .auc
            .map_or("-".to_string(), |a| format!("{a:.4}"));
        println!(
            "{} {} {} {} {} {} | {:.4} {:.4} {:.4} {:.4} {}",
            rep.meta.detector.as_deref().unwrap_or("-"),
            rep.meta.variant.as_deref().unwrap_or("-"),
            rep.meta.delta.map_or("-".into(), |d| format!("{d}")),
            rep.meta.incompleteness.map_or("-".into(), |r| format!("{r}")),
            rep.meta
                .diffusion_model
                .map_or("-".to_string(), |m| m.to_string()),
            rep.per_snapshot.len(),
            rep.mean.acc,
            rep.mean.precision,
            rep.mean.recall,
            rep.mean.f1,
            auc
        );
    }
    Ok(())
}
