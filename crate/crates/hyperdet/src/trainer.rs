//! Losses, autoencoder pretraining, and joint fine-tuning of the detector.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_check, GradReport, Tape, Tensor, Value};
use crate::diffusion::Snapshot;
use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::irc::{self, FeatureMatrix};
use crate::metrics::confusion_metrics;
use crate::model::{
    classify, decode, encode, model_forward, AttentionMode, AutoencoderParams, IncidenceFlat,
    ModelParams, TapeAe, TapeLayer, TapeModel,
};

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_pretrain: f64,
    pub lr_finetune: f64,
    /// L2 penalty coefficient.
    pub lambda: f64,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    /// Epochs without validation F1 improvement before fine-tuning stops.
    pub early_stop_patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_pretrain: 0.01,
            lr_finetune: 0.005,
            lambda: 5e-4,
            pretrain_epochs: 200,
            finetune_epochs: 500,
            early_stop_patience: 50,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lrPretrain", self.lr_pretrain), ("lrFinetune", self.lr_finetune)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("train.{name} must be > 0, got {v}")));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "train.lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!(
                    "train.{name} must be in [0,1), got {v}"
                )));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidConfig(format!("train.eps must be > 0, got {}", self.eps)));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::InvalidConfig("train.earlyStopPatience must be >= 1".into()));
        }
        Ok(())
    }
}

/// One snapshot prepared for the model: flattened incidence, raw features,
/// per-node class labels (0 = source) and the balance coefficient.
#[derive(Debug, Clone)]
pub struct TrainSnapshot {
    pub flat: IncidenceFlat,
    pub features: FeatureMatrix,
    pub sources: Vec<usize>,
    /// Per-node class index: 0 for sources, 1 otherwise.
    pub labels: Vec<usize>,
    pub rho: f64,
    pub n: usize,
}

impl TrainSnapshot {
    /// Build features and incidence for one snapshot. `dynamic_cols` controls
    /// whether the two state columns are appended to the incidence.
    pub fn prepare(g: &Hypergraph, snapshot: &Snapshot, k: usize, dynamic_cols: bool) -> Result<Self> {
        let features = irc::build_features(g, snapshot, k)?;
        Self::from_features(g, snapshot, features, dynamic_cols)
    }

    /// Same as [`prepare`](Self::prepare) with externally supplied features
    /// (used by the incompleteness sweep after masking).
    pub fn from_features(
        g: &Hypergraph,
        snapshot: &Snapshot,
        features: FeatureMatrix,
        dynamic_cols: bool,
    ) -> Result<Self> {
        let n = g.node_count();
        assert_eq!(features.data.rows, n, "feature rows must match node count");
        let aug = if dynamic_cols {
            irc::augment_incidence(g, snapshot)
        } else {
            irc::base_incidence(g)
        };
        let flat = IncidenceFlat::new(&aug);
        let sources = snapshot.sources.clone();
        let rho = balance_coefficient(n, sources.len())?;
        let mut labels = vec![1usize; n];
        for &s in &sources {
            labels[s] = 0;
        }
        Ok(Self { flat, features, sources, labels, rho, n })
    }

    /// Per-node CE weights: 1 for sources, ρ for the rest.
    pub fn class_weights(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| if l == 0 { 1.0 } else { self.rho }).collect()
    }
}

/// Squared Frobenius norm of X − X̂ (sum over all entries).
pub fn reconstruction_loss(tape: &mut Tape, x: Value, x_hat: Value) -> Value {
    let t = tape.value(x);
    let entries = (t.rows * t.cols) as f64;
    let mean = tape.mse(x, x_hat);
    tape.scale(mean, entries)
}

/// ρ = |s| / (n − |s|). Undefined when no class is present.
pub fn balance_coefficient(n: usize, s: usize) -> Result<f64> {
    assert!(s <= n, "source count exceeds node count");
    if s == 0 || s == n {
        return Err(Error::Numeric(format!(
            "balance coefficient undefined for |s|={s} of n={n}"
        )));
    }
    Ok(s as f64 / (n - s) as f64)
}

/// Class-balanced cross-entropy: Σ over sources of CE plus ρ times the sum
/// over the remaining nodes. `labels[v]` is the class column of node v.
pub fn balanced_ce_loss(tape: &mut Tape, probs: Value, labels: &[usize], rho: f64) -> Value {
    let weights: Vec<f64> = labels.iter().map(|&l| if l == 0 { 1.0 } else { rho }).collect();
    tape.weighted_ce(probs, labels, &weights)
}

/// L_ae + L_af + λ·Σ‖w‖² over the given parameters.
pub fn total_loss(
    tape: &mut Tape,
    l_ae: Option<Value>,
    l_af: Value,
    params: &[Value],
    lambda: f64,
) -> Value {
    let mut total = match l_ae {
        Some(ae) => tape.add(ae, l_af),
        None => l_af,
    };
    if lambda > 0.0 && !params.is_empty() {
        let pen = tape.l2_penalty(params);
        let scaled = tape.scale(pen, lambda);
        total = tape.add(total, scaled);
    }
    total
}

/// Adaptive-moment gradient descent with bias correction. Moment buffers are
/// lazily shaped from the first gradient list.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64, cfg: &TrainConfig) -> Self {
        Self { lr, beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.eps, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Tensor::zeros(g.rows, g.cols)).collect();
            self.v = grads.iter().map(|g| Tensor::zeros(g.rows, g.cols)).collect();
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..grads.len() {
            let p = &mut *params[i];
            assert_eq!((p.rows, p.cols), (grads[i].rows, grads[i].cols), "shape drift");
            for j in 0..p.data.len() {
                let g = grads[i].data[j];
                let m = self.beta1 * self.m[i].data[j] + (1.0 - self.beta1) * g;
                let v = self.beta2 * self.v[i].data[j] + (1.0 - self.beta2) * g * g;
                self.m[i].data[j] = m;
                self.v[i].data[j] = v;
                p.data[j] -= self.lr * (m / bc1) / ((v / bc2).sqrt() + self.eps);
            }
        }
    }
}

/// Pretraining trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PretrainReport {
    /// Mean reconstruction loss (sum form) per epoch, evaluated before each
    /// step, plus one final post-step evaluation.
    pub loss_per_epoch: Vec<f64>,
    pub best_epoch: usize,
    pub best_loss: f64,
    /// best_loss divided by total feature entries, for logging.
    pub best_per_entry: f64,
    pub wall_secs: f64,
}

fn mean_fold(per_snapshot: Vec<Vec<Tensor>>) -> Vec<Tensor> {
    let count = per_snapshot.len() as f64;
    let mut iter = per_snapshot.into_iter();
    let mut acc = iter.next().expect("at least one snapshot");
    // fixed snapshot order keeps the reduction deterministic
    for grads in iter {
        for (a, g) in acc.iter_mut().zip(&grads) {
            for (x, y) in a.data.iter_mut().zip(&g.data) {
                *x += *y;
            }
        }
    }
    for t in &mut acc {
        for x in &mut t.data {
            *x /= count;
        }
    }
    acc
}

fn grads_in_order(
    grads: &mut crate::autodiff::Gradients,
    values: &[Value],
    shapes: &[(usize, usize)],
) -> Vec<Tensor> {
    values
        .iter()
        .zip(shapes)
        .map(|(&v, &(r, c))| grads.take(v).unwrap_or_else(|| Tensor::zeros(r, c)))
        .collect()
}

fn ae_loss_and_grad(
    params: &AutoencoderParams,
    snap: &TrainSnapshot,
    mode: AttentionMode,
) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let tae = TapeAe::register(&mut tape, params);
    let x = tape.constant(snap.features.data.clone());
    let (gamma, theta) = encode(&mut tape, x, &tae.encoder, &snap.flat, mode);
    let x_hat = decode(&mut tape, gamma, theta, &tae.decoder, &snap.flat, mode);
    let loss = reconstruction_loss(&mut tape, x, x_hat);
    let lv = tape.value(loss).get(0, 0);
    if !lv.is_finite() {
        return Err(Error::Numeric("pretraining diverged: non-finite reconstruction loss".into()));
    }
    let mut grads = tape.backward(loss);
    let values = tae.all_values();
    let shapes: Vec<(usize, usize)> = params.tensors().iter().map(|t| (t.rows, t.cols)).collect();
    Ok((lv, grads_in_order(&mut grads, &values, &shapes)))
}

fn ae_loss_only(params: &AutoencoderParams, snap: &TrainSnapshot, mode: AttentionMode) -> f64 {
    let mut tape = Tape::new();
    let tae = TapeAe::register(&mut tape, params);
    let x = tape.constant(snap.features.data.clone());
    let (gamma, theta) = encode(&mut tape, x, &tae.encoder, &snap.flat, mode);
    let x_hat = decode(&mut tape, gamma, theta, &tae.decoder, &snap.flat, mode);
    let loss = reconstruction_loss(&mut tape, x, x_hat);
    tape.value(loss).get(0, 0)
}

/// Minimize the mean reconstruction loss over the training snapshots,
/// starting from `init`. Returns the best-loss parameters seen, including a
/// final post-step evaluation.
pub fn pretrain_autoencoder(
    snapshots: &[TrainSnapshot],
    init: &AutoencoderParams,
    cfg: &TrainConfig,
    mode: AttentionMode,
) -> Result<(AutoencoderParams, PretrainReport)> {
    cfg.validate()?;
    if snapshots.is_empty() {
        return Err(Error::InvalidConfig("pretraining needs at least one snapshot".into()));
    }
    let start = Instant::now();
    let entries: usize = snapshots.iter().map(|s| s.features.data.data.len()).sum();
    let mut params = init.clone();
    let mut adam = Adam::new(cfg.lr_pretrain, cfg);
    let mut losses = Vec::with_capacity(cfg.pretrain_epochs + 1);
    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0usize;

    for epoch in 0..cfg.pretrain_epochs {
        let results: Result<Vec<(f64, Vec<Tensor>)>> = snapshots
            .par_iter()
            .map(|snap| ae_loss_and_grad(&params, snap, mode))
            .collect();
        let results = results.map_err(|_| {
            Error::Numeric(format!("pretraining diverged at epoch {epoch}: non-finite loss"))
        })?;
        let loss = results.iter().map(|(l, _)| l).sum::<f64>() / snapshots.len() as f64;
        losses.push(loss);
        if loss < best_loss {
            best_loss = loss;
            best_epoch = epoch;
            best = params.clone();
        }
        let mean = mean_fold(results.into_iter().map(|(_, g)| g).collect());
        adam.step(&mut params.tensors_mut(), &mean);
    }

    // the last step produced parameters no recorded loss covers; evaluate once
    let final_loss = snapshots
        .iter()
        .map(|snap| ae_loss_only(&params, snap, mode))
        .sum::<f64>()
        / snapshots.len() as f64;
    if !final_loss.is_finite() {
        return Err(Error::Numeric("pretraining diverged on the final step".into()));
    }
    losses.push(final_loss);
    if final_loss < best_loss {
        best_loss = final_loss;
        best_epoch = cfg.pretrain_epochs;
        best = params;
    }

    let report = PretrainReport {
        loss_per_epoch: losses,
        best_epoch,
        best_loss,
        best_per_entry: best_loss * snapshots.len() as f64 / entries as f64,
        wall_secs: start.elapsed().as_secs_f64(),
    };
    Ok((best, report))
}

/// Loss components of one fine-tuning epoch (means over train snapshots).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EpochLosses {
    pub l_ae: f64,
    pub l_af: f64,
    pub total: f64,
}

/// Fine-tuning trajectory and checkpoint reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainReport {
    pub epoch_losses: Vec<EpochLosses>,
    /// Validation macro F1 evaluated before each step, plus one final
    /// post-step evaluation.
    pub val_f1: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub stopped_early: bool,
    pub wall_secs: f64,
}

fn model_loss_and_grad(
    params: &ModelParams,
    snap: &TrainSnapshot,
    lambda: f64,
    mode: AttentionMode,
) -> Result<(EpochLosses, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let tm = TapeModel::register(&mut tape, params);
    let x = tape.constant(snap.features.data.clone());
    let out = model_forward(&mut tape, x, &tm, &snap.flat, mode);
    let l_af = balanced_ce_loss(&mut tape, out.probs, &snap.labels, snap.rho);
    let l_ae = out.x_hat.map(|xh| reconstruction_loss(&mut tape, x, xh));
    let values = tm.all_values();
    let total = total_loss(&mut tape, l_ae, l_af, &values, lambda);

    let losses = EpochLosses {
        l_ae: l_ae.map_or(0.0, |v| tape.value(v).get(0, 0)),
        l_af: tape.value(l_af).get(0, 0),
        total: tape.value(total).get(0, 0),
    };
    if !losses.total.is_finite() {
        return Err(Error::Numeric("fine-tuning diverged: non-finite loss".into()));
    }
    let mut grads = tape.backward(total);
    let shapes: Vec<(usize, usize)> = params.tensors().iter().map(|t| (t.rows, t.cols)).collect();
    Ok((losses, grads_in_order(&mut grads, &values, &shapes)))
}

/// Forward-only probability rows for one snapshot.
pub fn predict_probs(params: &ModelParams, snap: &TrainSnapshot, mode: AttentionMode) -> Tensor {
    let mut tape = Tape::new();
    let tm = TapeModel::register(&mut tape, params);
    let x = tape.constant(snap.features.data.clone());
    let out = model_forward(&mut tape, x, &tm, &snap.flat, mode);
    tape.value(out.probs).clone()
}

/// Predicted source set for one snapshot.
pub fn predict(params: &ModelParams, snap: &TrainSnapshot, mode: AttentionMode) -> Vec<usize> {
    classify(&predict_probs(params, snap, mode))
}

fn validation_f1(params: &ModelParams, val: &[TrainSnapshot], mode: AttentionMode) -> f64 {
    let f1s: Vec<f64> = val
        .par_iter()
        .map(|snap| {
            let pred = predict(params, snap, mode);
            confusion_metrics(&pred, &snap.sources, snap.n).f1
        })
        .collect();
    f1s.iter().sum::<f64>() / f1s.len() as f64
}

/// Jointly optimize the autoencoder and fusion head against the combined
/// loss, early-stopping on validation macro F1. Returns the checkpoint with
/// the best validation F1 observed (ties keep the earlier epoch).
pub fn finetune(
    train: &[TrainSnapshot],
    val: &[TrainSnapshot],
    init: &ModelParams,
    cfg: &TrainConfig,
    mode: AttentionMode,
) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidConfig("fine-tuning needs at least one training snapshot".into()));
    }
    if val.is_empty() {
        return Err(Error::InvalidConfig("fine-tuning needs a non-empty validation set".into()));
    }
    for snap in train.iter().chain(val) {
        if snap.features.width() != init.widths.feature_width {
            return Err(Error::Shape(format!(
                "snapshot feature width {} does not match model width {}",
                snap.features.width(),
                init.widths.feature_width
            )));
        }
    }

    let start = Instant::now();
    let mut params = init.clone();
    let mut adam = Adam::new(cfg.lr_finetune, cfg);
    let mut epoch_losses = Vec::new();
    let mut val_f1 = Vec::new();
    let mut best = params.clone();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut since_best = 0usize;
    let mut stopped_early = false;

    for epoch in 0..cfg.finetune_epochs {
        let results: Result<Vec<(EpochLosses, Vec<Tensor>)>> = train
            .par_iter()
            .map(|snap| model_loss_and_grad(&params, snap, cfg.lambda, mode))
            .collect();
        let results = results.map_err(|_| {
            Error::Numeric(format!("fine-tuning diverged at epoch {epoch}: non-finite loss"))
        })?;
        let k = train.len() as f64;
        epoch_losses.push(EpochLosses {
            l_ae: results.iter().map(|(l, _)| l.l_ae).sum::<f64>() / k,
            l_af: results.iter().map(|(l, _)| l.l_af).sum::<f64>() / k,
            total: results.iter().map(|(l, _)| l.total).sum::<f64>() / k,
        });

        let f1 = validation_f1(&params, val, mode);
        val_f1.push(f1);
        if f1 > best_f1 {
            best_f1 = f1;
            best_epoch = epoch;
            best = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                stopped_early = true;
                break;
            }
        }

        let mean = mean_fold(results.into_iter().map(|(_, g)| g).collect());
        adam.step(&mut params.tensors_mut(), &mean);
    }

    if !stopped_early {
        // parameters after the last step are otherwise unevaluated
        let f1 = validation_f1(&params, val, mode);
        val_f1.push(f1);
        if f1 > best_f1 {
            best_f1 = f1;
            best_epoch = val_f1.len() - 1;
            best = params;
        }
    }

    let report = TrainReport {
        epoch_losses,
        val_f1,
        best_epoch,
        best_val_f1: best_f1,
        stopped_early,
        wall_secs: start.elapsed().as_secs_f64(),
    };
    Ok((best, report))
}

/// Finite-difference check of the combined loss gradient over every
/// parameter tensor of `params` on one snapshot.
pub fn check_total_loss_gradients(
    params: &ModelParams,
    snap: &TrainSnapshot,
    lambda: f64,
    mode: AttentionMode,
    eps: f64,
    tol: f64,
) -> GradReport {
    let inputs: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
    let enc_layers = params.autoencoder.as_ref().map_or(0, |ae| ae.encoder.len());
    let dec_layers = params.autoencoder.as_ref().map_or(0, |ae| ae.decoder.len());
    let heads = params.fusion.heads.len();
    let finals = params.fusion.finals.len();
    let has_ae = params.autoencoder.is_some();

    grad_check(
        move |tape, vals| {
            let mut it = vals.iter().copied();
            let mut layer = || {
                let w = it.next().unwrap();
                let w_edge = it.next().unwrap();
                let a_v2e = it.next().unwrap();
                let a_e2v = it.next().unwrap();
                TapeLayer { w, w_edge, a_v2e, a_e2v }
            };
            let encoder: Vec<TapeLayer> = (0..enc_layers).map(|_| layer()).collect();
            let decoder: Vec<TapeLayer> = (0..dec_layers).map(|_| layer()).collect();
            let entry = layer();
            let head_layers: Vec<TapeLayer> = (0..heads).map(|_| layer()).collect();
            let final_layers: Vec<TapeLayer> = (0..finals).map(|_| layer()).collect();
            let proj_w = it.next().unwrap();
            let proj_b = it.next().unwrap();
            let tm = TapeModel {
                encoder,
                decoder,
                entry,
                heads: head_layers,
                finals: final_layers,
                proj_w,
                proj_b,
                has_autoencoder: has_ae,
            };
            let x = tape.constant(snap.features.data.clone());
            let out = model_forward(tape, x, &tm, &snap.flat, mode);
            let l_af = balanced_ce_loss(tape, out.probs, &snap.labels, snap.rho);
            let l_ae = out.x_hat.map(|xh| reconstruction_loss(tape, x, xh));
            total_loss(tape, l_ae, l_af, vals, lambda)
        },
        &inputs,
        eps,
        tol,
    )
}
