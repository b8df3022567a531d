//! End-to-end experiment harness: dataset generation, variant wiring,
//! training, evaluation, and the sweep grids.
//!
//! Seed discipline: every arm derives its stream from the master seed via
//! fixed offsets, so any single report is reproducible in isolation and
//! unaffected by which other arms ran.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline;
use crate::config::ExperimentConfig;
use crate::derive_seed;
use crate::diffusion::{self, CascadeDataset, DiffusionModel, PropagationConfig, Snapshot};
use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::irc;
use crate::metrics::{auc, confusion_metrics, MetricsReport, ReportMeta, SnapshotMetrics};
use crate::model::{classify, AttentionMode, ModelParams};
use crate::trainer::{self, PretrainReport, TrainReport, TrainSnapshot};

/// Default label-propagation mixing coefficient for the baseline.
pub const LPSI_ALPHA: f64 = 0.5;

/// Model variant for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Unmodified detector.
    #[serde(rename = "full")]
    Full,
    /// Clique-expand the hypergraph before training.
    #[serde(rename = "woH")]
    WoH,
    /// Skip the two dynamic interaction columns.
    #[serde(rename = "woD")]
    WoD,
    /// Feed raw features straight into the fusion head.
    #[serde(rename = "woE")]
    WoE,
    /// Fixed attention proportional to degree.
    #[serde(rename = "wAL")]
    WAl,
    /// Fixed attention proportional to inverse degree.
    #[serde(rename = "wAS")]
    WAs,
}

impl Variant {
    pub fn all() -> [Variant; 6] {
        [Variant::Full, Variant::WoH, Variant::WoD, Variant::WoE, Variant::WAl, Variant::WAs]
    }

    pub fn attention_mode(self) -> AttentionMode {
        match self {
            Variant::WAl => AttentionMode::FixedLargeDegree,
            Variant::WAs => AttentionMode::FixedSmallDegree,
            _ => AttentionMode::Learned,
        }
    }

    pub fn dynamic_cols(self) -> bool {
        self != Variant::WoD
    }

    pub fn use_autoencoder(self) -> bool {
        self != Variant::WoE
    }

    pub fn uses_clique_expansion(self) -> bool {
        self == Variant::WoH
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WoH => "woH",
            Variant::WoD => "woD",
            Variant::WoE => "woE",
            Variant::WAl => "wAL",
            Variant::WAs => "wAS",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::all()
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown variant {s:?}; expected one of full, woH, woD, woE, wAL, wAS"
                ))
            })
    }
}

/// Sweep families, each with its own derived-seed offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SweepKind {
    Early,
    Incomplete,
    Ablation,
    Models,
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "early" => Ok(SweepKind::Early),
            "incomplete" => Ok(SweepKind::Incomplete),
            "ablation" => Ok(SweepKind::Ablation),
            "models" => Ok(SweepKind::Models),
            other => Err(Error::InvalidConfig(format!(
                "unknown sweep kind {other:?}; expected early, incomplete, ablation or models"
            ))),
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepKind::Early => "early",
            SweepKind::Incomplete => "incomplete",
            SweepKind::Ablation => "ablation",
            SweepKind::Models => "models",
        })
    }
}

/// Arm seed for a sweep family (`None` = a plain run).
pub fn arm_seed(master: u64, kind: Option<SweepKind>) -> u64 {
    let offset = match kind {
        None => 0,
        Some(SweepKind::Early) => 1_000,
        Some(SweepKind::Incomplete) => 2_000,
        Some(SweepKind::Ablation) => 3_000,
        Some(SweepKind::Models) => 4_000,
    };
    derive_seed(master, offset)
}

/// One experiment point: the variant plus any overrides of the propagation
/// defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct RunSpec {
    pub variant: Variant,
    /// Snapshot fraction override.
    pub delta: Option<f64>,
    /// Feature masking rate, 0 for complete observations.
    pub incompleteness: f64,
    /// Diffusion model override.
    pub model: Option<DiffusionModel>,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self { variant: Variant::Full, delta: None, incompleteness: 0.0, model: None }
    }
}

/// Snapshots featurized for one run, on the variant's effective graph.
pub struct PreparedRun {
    /// Detector-side graph: the clique expansion under woH, the input
    /// hypergraph otherwise.
    pub g: Hypergraph,
    pub train: Vec<TrainSnapshot>,
    pub val: Vec<TrainSnapshot>,
    pub test: Vec<TrainSnapshot>,
}

/// Run seed of a plain (non-sweep) run: repetition 0 of the plain arm.
pub fn plain_run_seed(master: u64) -> u64 {
    derive_seed(arm_seed(master, None), 0)
}

/// The detector-side graph of a variant: the clique expansion under woH, the
/// input hypergraph otherwise.
pub fn effective_graph(g: &Hypergraph, variant: Variant) -> Result<Hypergraph> {
    if variant.uses_clique_expansion() {
        g.clique_expansion_hypergraph()
    } else {
        Ok(g.clone())
    }
}

/// Propagation config with the spec's overrides and the run's derived seed.
pub fn effective_propagation(
    cfg: &ExperimentConfig,
    spec: &RunSpec,
    run_seed: u64,
) -> PropagationConfig {
    let mut prop = cfg.propagation.clone();
    prop.seed = derive_seed(run_seed, 1);
    if let Some(d) = spec.delta {
        prop.snapshot_fraction = d;
    }
    if let Some(m) = spec.model {
        prop.model = m;
    }
    prop
}

/// Featurize an existing dataset for one run. Cascades stay on the original
/// graph; only the detector's structures switch under woH.
pub fn prepare_from_dataset(
    g: &Hypergraph,
    dataset: &CascadeDataset,
    cfg: &ExperimentConfig,
    spec: &RunSpec,
    run_seed: u64,
) -> Result<PreparedRun> {
    let eff = effective_graph(g, spec.variant)?;
    let k = cfg.model.k;
    let dynamic = spec.variant.dynamic_cols();
    let mask_seed = derive_seed(run_seed, 3);

    let build = |snaps: &[Snapshot], offset: usize| -> Result<Vec<TrainSnapshot>> {
        snaps
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let mut f = irc::build_features(&eff, s, k)?;
                if spec.incompleteness > 0.0 {
                    let seed = derive_seed(mask_seed, (offset + i) as u64);
                    let mut rng = ChaCha12Rng::seed_from_u64(seed);
                    f = irc::mask_incomplete(&f, spec.incompleteness, &mut rng);
                }
                TrainSnapshot::from_features(&eff, s, f, dynamic)
            })
            .collect()
    };
    let train_all = build(&dataset.train, 0)?;
    let test = build(&dataset.test, dataset.train.len())?;

    let val_count = ((train_all.len() as f64) * cfg.val_fraction + 1e-9).floor().max(1.0) as usize;
    if val_count >= train_all.len() {
        return Err(Error::InvalidConfig(format!(
            "{} training snapshots cannot spare {val_count} for validation",
            train_all.len()
        )));
    }
    let split = train_all.len() - val_count;
    let mut train = train_all;
    let val = train.split_off(split);
    Ok(PreparedRun { g: eff, train, val, test })
}

/// Generate cascades and featurize them for one run.
pub fn prepare_data(
    g: &Hypergraph,
    cfg: &ExperimentConfig,
    spec: &RunSpec,
    run_seed: u64,
) -> Result<PreparedRun> {
    let prop = effective_propagation(cfg, spec, run_seed);
    let dataset = diffusion::generate_dataset(g, &prop, cfg.cascades, cfg.train_ratio)?;
    prepare_from_dataset(g, &dataset, cfg, spec, run_seed)
}

/// Training outcome of one run.
pub struct TrainedRun {
    pub params: ModelParams,
    pub pretrain: Option<PretrainReport>,
    pub report: TrainReport,
}

/// Initialize, pretrain (unless the variant skips the autoencoder) and
/// fine-tune on the prepared snapshots.
pub fn train_run(
    data: &PreparedRun,
    cfg: &ExperimentConfig,
    spec: &RunSpec,
    run_seed: u64,
) -> Result<TrainedRun> {
    let mut widths = cfg.model.widths();
    widths.feature_width = 2 + cfg.model.k;
    let use_ae = spec.variant.use_autoencoder();
    let mode = spec.variant.attention_mode();
    let mut params = ModelParams::init(widths, use_ae, derive_seed(run_seed, 2));

    let pretrain = if use_ae && cfg.train.pretrain_epochs > 0 {
        let ae = params.autoencoder.as_ref().expect("autoencoder present");
        let (trained, rep) = trainer::pretrain_autoencoder(&data.train, ae, &cfg.train, mode)?;
        params.autoencoder = Some(trained);
        Some(rep)
    } else {
        None
    };
    let (best, report) = trainer::finetune(&data.train, &data.val, &params, &cfg.train, mode)?;
    Ok(TrainedRun { params: best, pretrain, report })
}

/// Per-snapshot metrics of a trained detector on held-out snapshots. The AUC
/// score is the source-class probability column.
pub fn evaluate_model(
    params: &ModelParams,
    test: &[TrainSnapshot],
    mode: AttentionMode,
) -> Vec<SnapshotMetrics> {
    test.par_iter()
        .map(|snap| {
            let probs = trainer::predict_probs(params, snap, mode);
            let pred = classify(&probs);
            let m = confusion_metrics(&pred, &snap.sources, snap.n);
            let scores: Vec<f64> = (0..snap.n).map(|v| probs.get(v, 0)).collect();
            let labels: Vec<bool> = snap.labels.iter().map(|&l| l == 0).collect();
            SnapshotMetrics {
                acc: m.acc,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                auc: auc(&scores, &labels),
            }
        })
        .collect()
}

/// Per-snapshot metrics of the label-propagation baseline. Converged labels
/// serve as the AUC scores.
pub fn evaluate_lpsi(g: &Hypergraph, test: &[Snapshot], alpha: f64) -> Vec<SnapshotMetrics> {
    test.par_iter()
        .map(|s| {
            let pred = baseline::lpsi(g, s, alpha);
            let scores = baseline::lpsi_labels(g, s, alpha);
            let m = confusion_metrics(&pred, &s.sources, g.node_count());
            let labels: Vec<bool> = (0..g.node_count()).map(|v| s.is_source(v)).collect();
            SnapshotMetrics {
                acc: m.acc,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                auc: auc(&scores, &labels),
            }
        })
        .collect()
}

fn report_meta(cfg: &ExperimentConfig, spec: &RunSpec, detector: &str) -> ReportMeta {
    ReportMeta {
        variant: Some(spec.variant.to_string()),
        delta: Some(spec.delta.unwrap_or(cfg.propagation.snapshot_fraction)),
        incompleteness: Some(spec.incompleteness),
        diffusion_model: Some(spec.model.unwrap_or(cfg.propagation.model)),
        seed_count: Some(cfg.seeds),
        detector: Some(detector.into()),
    }
}

/// Full detector pipeline over `cfg.seeds` repetitions: generate, train,
/// evaluate; test metrics pooled across repetitions into one report.
pub fn run_experiment(
    g: &Hypergraph,
    cfg: &ExperimentConfig,
    spec: &RunSpec,
    arm: u64,
) -> Result<MetricsReport> {
    let mut rows = Vec::new();
    for r in 0..cfg.seeds {
        let run_seed = derive_seed(arm, r as u64);
        let data = prepare_data(g, cfg, spec, run_seed)?;
        let trained = train_run(&data, cfg, spec, run_seed)?;
        rows.extend(evaluate_model(&trained.params, &data.test, spec.variant.attention_mode()));
    }
    Ok(MetricsReport::from_snapshots(rows, report_meta(cfg, spec, "hyperdet")))
}

/// Baseline counterpart of [`run_experiment`] on identical datasets (same
/// derived seeds). The detector tag records the reconstructed defaults.
pub fn run_lpsi_experiment(
    g: &Hypergraph,
    cfg: &ExperimentConfig,
    spec: &RunSpec,
    arm: u64,
) -> Result<MetricsReport> {
    let mut rows = Vec::new();
    for r in 0..cfg.seeds {
        let run_seed = derive_seed(arm, r as u64);
        let prop = effective_propagation(cfg, spec, run_seed);
        let dataset = diffusion::generate_dataset(g, &prop, cfg.cascades, cfg.train_ratio)?;
        rows.extend(evaluate_lpsi(g, &dataset.test, LPSI_ALPHA));
    }
    let detector = format!("lpsi(alpha={LPSI_ALPHA}, reconstructed)");
    Ok(MetricsReport::from_snapshots(rows, report_meta(cfg, spec, &detector)))
}

/// One report per snapshot fraction in `cfg.sweep.deltas`. All arms share the
/// sweep seed, so cascades differ only in capture time.
pub fn early_detection_sweep(g: &Hypergraph, cfg: &ExperimentConfig) -> Result<Vec<MetricsReport>> {
    let arm = arm_seed(cfg.master_seed, Some(SweepKind::Early));
    cfg.sweep
        .deltas
        .iter()
        .map(|&d| {
            let spec = RunSpec { delta: Some(d), ..Default::default() };
            run_experiment(g, cfg, &spec, arm)
        })
        .collect()
}

/// One report per masking rate in `cfg.sweep.incompleteness`. Rate 0
/// reproduces the unmasked baseline under the same seed.
pub fn incompleteness_sweep(g: &Hypergraph, cfg: &ExperimentConfig) -> Result<Vec<MetricsReport>> {
    let arm = arm_seed(cfg.master_seed, Some(SweepKind::Incomplete));
    cfg.sweep
        .incompleteness
        .iter()
        .map(|&rate| {
            let spec = RunSpec { incompleteness: rate, ..Default::default() };
            run_experiment(g, cfg, &spec, arm)
        })
        .collect()
}

/// One report for a single ablation variant.
pub fn ablation_run(g: &Hypergraph, cfg: &ExperimentConfig, variant: Variant) -> Result<MetricsReport> {
    let arm = arm_seed(cfg.master_seed, Some(SweepKind::Ablation));
    let spec = RunSpec { variant, ..Default::default() };
    run_experiment(g, cfg, &spec, arm)
}

/// One report per variant in `cfg.sweep.variants`, on identical datasets.
pub fn ablation_sweep(g: &Hypergraph, cfg: &ExperimentConfig) -> Result<Vec<MetricsReport>> {
    cfg.sweep.variants.iter().map(|&v| ablation_run(g, cfg, v)).collect()
}

/// One report per diffusion model in `cfg.sweep.models`.
pub fn models_sweep(g: &Hypergraph, cfg: &ExperimentConfig) -> Result<Vec<MetricsReport>> {
    let arm = arm_seed(cfg.master_seed, Some(SweepKind::Models));
    cfg.sweep
        .models
        .iter()
        .map(|&m| {
            let spec = RunSpec { model: Some(m), ..Default::default() };
            run_experiment(g, cfg, &spec, arm)
        })
        .collect()
}

/// Run the sweep family selected by `kind`.
pub fn run_sweep(g: &Hypergraph, cfg: &ExperimentConfig, kind: SweepKind) -> Result<Vec<MetricsReport>> {
    match kind {
        SweepKind::Early => early_detection_sweep(g, cfg),
        SweepKind::Incomplete => incompleteness_sweep(g, cfg),
        SweepKind::Ablation => ablation_sweep(g, cfg),
        SweepKind::Models => models_sweep(g, cfg),
    }
}

/// Long-format CSV over a report series: one row per (report, snapshot),
/// metadata repeated per row, undefined AUC cells empty.
pub fn series_to_csv(reports: &[MetricsReport]) -> String {
    use std::fmt::Write;
    let mut s = String::from(
        "detector,variant,delta,incompleteness,diffusionModel,seedCount,snapshot,acc,precision,recall,f1,auc\n",
    );
    for rep in reports {
        let meta = &rep.meta;
        let detector = meta.detector.clone().unwrap_or_default();
        let variant = meta.variant.clone().unwrap_or_default();
        let delta = meta.delta.map_or(String::new(), |d| format!("{d}"));
        let inc = meta.incompleteness.map_or(String::new(), |r| format!("{r}"));
        let model = meta.diffusion_model.map_or(String::new(), |m| m.to_string());
        let seeds = meta.seed_count.map_or(String::new(), |c| format!("{c}"));
        for (i, m) in rep.per_snapshot.iter().enumerate() {
            let auc = m.auc.map_or(String::new(), |a| format!("{a}"));
            let _ = writeln!(
                s,
                "{detector},{variant},{delta},{inc},{model},{seeds},{i},{},{},{},{},{auc}",
                m.acc, m.precision, m.recall, m.f1
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{HypergraphSource, ModelSpec};
    use crate::trainer::TrainConfig;

    fn tiny_cfg(master: u64) -> ExperimentConfig {
        ExperimentConfig {
            hypergraph: HypergraphSource::Random { nodes: 16, edges: 10, size_min: 2, size_max: 3 },
            propagation: PropagationConfig { source_fraction: 0.125, ..Default::default() },
            train: TrainConfig { pretrain_epochs: 2, finetune_epochs: 3, ..Default::default() },
            model: ModelSpec { k: 2, hidden_ae: 6, latent: 4, hidden: 5, heads: 2 },
            cascades: 5,
            train_ratio: 0.8,
            val_fraction: 0.25,
            seeds: 1,
            master_seed: master,
            sweep: Default::default(),
        }
    }

    fn tiny_graph(cfg: &ExperimentConfig) -> Hypergraph {
        cfg.hypergraph.resolve(derive_seed(cfg.master_seed, 500)).unwrap()
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::all() {
            assert_eq!(Variant::from_str(v.name()).unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            let back: Variant = serde_json::from_str(&json).unwrap();
            assert_eq!(back, v);
        }
        assert!(Variant::from_str("woA").is_err());
        assert!(SweepKind::from_str("early").is_ok());
        assert!(SweepKind::from_str("everything").is_err());
    }

    #[test]
    fn variant_wiring_flags() {
        assert_eq!(Variant::WAl.attention_mode(), AttentionMode::FixedLargeDegree);
        assert_eq!(Variant::WAs.attention_mode(), AttentionMode::FixedSmallDegree);
        assert_eq!(Variant::Full.attention_mode(), AttentionMode::Learned);
        assert!(!Variant::WoD.dynamic_cols());
        assert!(Variant::WoH.dynamic_cols());
        assert!(!Variant::WoE.use_autoencoder());
        assert!(Variant::WoH.uses_clique_expansion());
    }

    #[test]
    fn prepared_structures_follow_the_variant() {
        let cfg = tiny_cfg(41);
        let g = tiny_graph(&cfg);
        let m = g.edge_count();

        let full = prepare_data(&g, &cfg, &RunSpec::default(), 7).unwrap();
        assert_eq!(full.train[0].flat.num_cols, m + 2);
        assert_eq!(full.train.len(), 3);
        assert_eq!(full.val.len(), 1);
        assert_eq!(full.test.len(), 1);

        let wod = RunSpec { variant: Variant::WoD, ..Default::default() };
        let wod = prepare_data(&g, &cfg, &wod, 7).unwrap();
        assert_eq!(wod.train[0].flat.num_cols, m);

        let woh = RunSpec { variant: Variant::WoH, ..Default::default() };
        let woh = prepare_data(&g, &cfg, &woh, 7).unwrap();
        assert!(woh.g.edges().iter().all(|e| e.len() == 2));
        assert_eq!(woh.g.node_count(), g.node_count());
    }

    #[test]
    fn run_experiment_is_pure_in_its_seeds() {
        let cfg = tiny_cfg(42);
        let g = tiny_graph(&cfg);
        let spec = RunSpec::default();
        let a = run_experiment(&g, &cfg, &spec, 11).unwrap();
        let b = run_experiment(&g, &cfg, &spec, 11).unwrap();
        assert_eq!(a, b);
        let c = run_experiment(&g, &cfg, &spec, 12).unwrap();
        assert_ne!(a.per_snapshot, c.per_snapshot);
    }

    #[test]
    fn incompleteness_rate_zero_matches_unswept_baseline() {
        let mut cfg = tiny_cfg(43);
        cfg.sweep.incompleteness = vec![0.0, 0.2];
        let g = tiny_graph(&cfg);
        let series = incompleteness_sweep(&g, &cfg).unwrap();
        assert_eq!(series.len(), 2);

        let arm = arm_seed(cfg.master_seed, Some(SweepKind::Incomplete));
        let base = run_experiment(&g, &cfg, &RunSpec::default(), arm).unwrap();
        assert_eq!(series[0].per_snapshot, base.per_snapshot);
        assert_eq!(series[0].mean, base.mean);
        assert_eq!(series[0].meta.incompleteness, Some(0.0));
        assert_eq!(series[1].meta.incompleteness, Some(0.2));

        // masking at 0.2 changes the prepared features themselves
        let run_seed = derive_seed(arm, 0);
        let plain = prepare_data(&g, &cfg, &RunSpec::default(), run_seed).unwrap();
        let masked_spec = RunSpec { incompleteness: 0.2, ..Default::default() };
        let masked = prepare_data(&g, &cfg, &masked_spec, run_seed).unwrap();
        assert_ne!(plain.train[0].features.data.data, masked.train[0].features.data.data);
    }

    #[test]
    fn early_sweep_records_delta_per_report() {
        let mut cfg = tiny_cfg(44);
        cfg.sweep.deltas = vec![0.2, 0.3];
        let g = tiny_graph(&cfg);
        let series = early_detection_sweep(&g, &cfg).unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].meta.delta, Some(0.2));
        assert_eq!(series[1].meta.delta, Some(0.3));
        for rep in &series {
            assert_eq!(rep.meta.variant.as_deref(), Some("full"));
            assert_eq!(rep.per_snapshot.len(), 1);
        }
    }

    #[test]
    fn models_sweep_covers_requested_models() {
        let mut cfg = tiny_cfg(45);
        cfg.sweep.models = vec![DiffusionModel::Ic, DiffusionModel::Si];
        let g = tiny_graph(&cfg);
        let series = models_sweep(&g, &cfg).unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].meta.diffusion_model, Some(DiffusionModel::Ic));
        assert_eq!(series[1].meta.diffusion_model, Some(DiffusionModel::Si));
    }

    #[test]
    fn woe_run_trains_without_autoencoder() {
        let cfg = tiny_cfg(46);
        let g = tiny_graph(&cfg);
        let spec = RunSpec { variant: Variant::WoE, ..Default::default() };
        let data = prepare_data(&g, &cfg, &spec, 9).unwrap();
        let trained = train_run(&data, &cfg, &spec, 9).unwrap();
        assert!(trained.params.autoencoder.is_none());
        assert!(trained.pretrain.is_none());
        let rows = evaluate_model(&trained.params, &data.test, spec.variant.attention_mode());
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn lpsi_experiment_pools_test_rows_across_seeds() {
        let mut cfg = tiny_cfg(47);
        cfg.seeds = 2;
        let g = tiny_graph(&cfg);
        let rep = run_lpsi_experiment(&g, &cfg, &RunSpec::default(), 5).unwrap();
        assert_eq!(rep.per_snapshot.len(), 2);
        assert_eq!(rep.meta.seed_count, Some(2));
        assert!(rep.meta.detector.as_deref().unwrap().contains("reconstructed"));
        for m in &rep.per_snapshot {
            for v in [m.acc, m.precision, m.recall, m.f1] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn csv_has_one_row_per_snapshot_plus_header() {
        let mut cfg = tiny_cfg(48);
        cfg.sweep.deltas = vec![0.3];
        let g = tiny_graph(&cfg);
        let series = early_detection_sweep(&g, &cfg).unwrap();
        let csv = series_to_csv(&series);
        let rows: usize = series.iter().map(|r| r.per_snapshot.len()).sum();
        assert_eq!(csv.lines().count(), rows + 1);
        assert!(csv.starts_with("detector,variant,delta,"));
        assert!(csv.lines().nth(1).unwrap().starts_with("hyperdet,full,0.3,0,"));
    }
}
