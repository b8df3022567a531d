//! Feature-rich attention fusion model: two-stage attention hypergraph
//! convolutions, the feature autoencoder, and the multi-head fusion head with
//! the two-class output.
//!
//! Probability column 0 is the source class throughout; labels and scores
//! follow that convention.

use std::io::Read as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Value};
use crate::error::{Error, Result};
use crate::irc::AugmentedIncidence;

/// Attention coefficient source for the convolution stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttentionMode {
    /// Learned two-stage attention.
    Learned,
    /// Fixed coefficients proportional to degree (attend to large).
    FixedLargeDegree,
    /// Fixed coefficients proportional to inverse degree (attend to small).
    FixedSmallDegree,
    /// Fixed uniform coefficients per segment.
    FixedUniform,
}

/// Incidence flattened to a pair list, edge-major, for segment operations.
///
/// Pair `p` states that node `pair_nodes[p]` belongs to column `pair_edges[p]`
/// of the (augmented) incidence. Degrees here are unweighted counts over all
/// columns, used only by the fixed-attention variants.
#[derive(Debug, Clone)]
pub struct IncidenceFlat {
    pub n: usize,
    pub num_cols: usize,
    pub pair_nodes: Vec<usize>,
    pub pair_edges: Vec<usize>,
    /// Column weight Ω_ee per pair.
    pub omega: Vec<f64>,
    /// 1/|column| per pair, for the member-mean edge attributes Θ⁰.
    pub theta0_w: Vec<f64>,
    pub node_deg: Vec<f64>,
    pub col_deg: Vec<f64>,
}

impl IncidenceFlat {
    pub fn new(aug: &AugmentedIncidence) -> Self {
        let mut pair_nodes = Vec::new();
        let mut pair_edges = Vec::new();
        let mut omega = Vec::new();
        let mut theta0_w = Vec::new();
        let mut node_deg = vec![0.0; aug.n];
        let mut col_deg = vec![0.0; aug.num_cols()];
        for (e, members) in aug.columns.iter().enumerate() {
            col_deg[e] = members.len() as f64;
            for &v in members {
                pair_nodes.push(v);
                pair_edges.push(e);
                omega.push(aug.weights[e]);
                theta0_w.push(1.0 / members.len() as f64);
                node_deg[v] += 1.0;
            }
        }
        Self {
            n: aug.n,
            num_cols: aug.num_cols(),
            pair_nodes,
            pair_edges,
            omega,
            theta0_w,
            node_deg,
            col_deg,
        }
    }

    pub fn num_pairs(&self) -> usize {
        self.pair_nodes.len()
    }

    /// Fixed per-pair attention for one stage, normalized to sum 1 within
    /// each segment. Stage 1 distributes over member nodes of a column;
    /// stage 2 over columns incident to a node.
    fn fixed_attention(&self, mode: AttentionMode, stage1: bool) -> Tensor {
        let p = self.num_pairs();
        let raw: Vec<f64> = (0..p)
            .map(|i| {
                let d = if stage1 {
                    self.node_deg[self.pair_nodes[i]]
                } else {
                    self.col_deg[self.pair_edges[i]]
                };
                match mode {
                    AttentionMode::FixedLargeDegree => d,
                    AttentionMode::FixedSmallDegree => 1.0 / d,
                    _ => 1.0,
                }
            })
            .collect();
        let segments = if stage1 { &self.pair_edges } else { &self.pair_nodes };
        let slots = if stage1 { self.num_cols } else { self.n };
        let mut sums = vec![0.0; slots];
        for (i, &seg) in segments.iter().enumerate() {
            sums[seg] += raw[i];
        }
        let data: Vec<f64> = raw
            .iter()
            .zip(segments)
            .map(|(&r, &seg)| r / sums[seg])
            .collect();
        Tensor::from_vec(p, 1, data)
    }
}

/// LeakyReLU slope used across the model.
pub const LEAKY_SLOPE: f64 = 0.2;

/// One attention convolution layer. `w` transforms node (and initial edge)
/// features, `w_edge` transforms edge attributes for the second stage;
/// storage is (input width × output width) so forward is a plain row-matmul.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w: Tensor,
    pub w_edge: Tensor,
    pub a_v2e: Tensor,
    pub a_e2v: Tensor,
}

impl LayerParams {
    fn init(input: usize, output: usize, rng: &mut ChaCha12Rng) -> Self {
        let bw = (6.0 / (input + output) as f64).sqrt();
        let be = (6.0 / (2 * output) as f64).sqrt();
        Self {
            w: Tensor::uniform(input, output, -bw, bw, rng),
            w_edge: Tensor::uniform(output, output, -be, be, rng),
            a_v2e: Tensor::uniform(2 * output, 1, -0.1, 0.1, rng),
            a_e2v: Tensor::uniform(2 * output, 1, -0.1, 0.1, rng),
        }
    }

    fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: Tensor::zeros(input, output),
            w_edge: Tensor::zeros(output, output),
            a_v2e: Tensor::zeros(2 * output, 1),
            a_e2v: Tensor::zeros(2 * output, 1),
        }
    }
}

/// Encoder/decoder stacks; widths input → hidden_ae → latent and mirrored.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderParams {
    pub encoder: Vec<LayerParams>,
    pub decoder: Vec<LayerParams>,
}

impl AutoencoderParams {
    /// Tensors in checkpoint order: encoder layers then decoder layers.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|l| [&l.w, &l.w_edge, &l.a_v2e, &l.a_e2v])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.encoder
            .iter_mut()
            .chain(&mut self.decoder)
            .flat_map(|l| {
                let arr: [&mut Tensor; 4] = [&mut l.w, &mut l.w_edge, &mut l.a_v2e, &mut l.a_e2v];
                arr
            })
            .collect()
    }
}

/// Entry layer, K parallel heads, K averaged final layers, projection.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub entry: LayerParams,
    pub heads: Vec<LayerParams>,
    pub finals: Vec<LayerParams>,
    pub proj_w: Tensor,
    pub proj_b: Tensor,
}

/// Configured layer widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct ModelWidths {
    /// Raw feature width 2+k.
    pub feature_width: usize,
    pub hidden_ae: usize,
    pub latent: usize,
    pub hidden: usize,
    /// Attention head count K.
    pub heads: usize,
}

impl Default for ModelWidths {
    fn default() -> Self {
        Self { feature_width: 10, hidden_ae: 128, latent: 64, hidden: 500, heads: 3 }
    }
}

impl ModelWidths {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("featureWidth", self.feature_width),
            ("hiddenAe", self.hidden_ae),
            ("latent", self.latent),
            ("hidden", self.hidden),
        ] {
            if v < 2 {
                return Err(Error::InvalidConfig(format!("model.{name} must be >= 2, got {v}")));
            }
        }
        if !(1..=8).contains(&self.heads) {
            return Err(Error::InvalidConfig(format!(
                "model.heads must be in 1..=8, got {}",
                self.heads
            )));
        }
        Ok(())
    }
}

/// Complete trainable model. `autoencoder` is absent for the variant that
/// feeds raw features straight into the fusion head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub widths: ModelWidths,
    pub autoencoder: Option<AutoencoderParams>,
    pub fusion: FusionParams,
}

impl ModelParams {
    /// Fusion input width: the latent width behind an autoencoder, the raw
    /// feature width without one.
    pub fn fusion_input(&self) -> usize {
        if self.autoencoder.is_some() {
            self.widths.latent
        } else {
            self.widths.feature_width
        }
    }

    pub fn init(widths: ModelWidths, use_autoencoder: bool, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let w = &widths;
        let autoencoder = use_autoencoder.then(|| AutoencoderParams {
            encoder: vec![
                LayerParams::init(w.feature_width, w.hidden_ae, &mut rng),
                LayerParams::init(w.hidden_ae, w.latent, &mut rng),
            ],
            decoder: vec![
                LayerParams::init(w.latent, w.hidden_ae, &mut rng),
                LayerParams::init(w.hidden_ae, w.feature_width, &mut rng),
            ],
        });
        let fin = if use_autoencoder { w.latent } else { w.feature_width };
        let bw = (6.0 / (w.hidden + 2) as f64).sqrt();
        let fusion = FusionParams {
            entry: LayerParams::init(fin, w.hidden, &mut rng),
            heads: (0..w.heads).map(|_| LayerParams::init(w.hidden, w.hidden, &mut rng)).collect(),
            finals: (0..w.heads)
                .map(|_| LayerParams::init(w.heads * w.hidden, w.hidden, &mut rng))
                .collect(),
            proj_w: Tensor::uniform(w.hidden, 2, -bw, bw, &mut rng),
            proj_b: Tensor::zeros(1, 2),
        };
        Self { widths, autoencoder, fusion }
    }

    fn zeros(widths: ModelWidths, use_autoencoder: bool) -> Self {
        let w = &widths;
        let autoencoder = use_autoencoder.then(|| AutoencoderParams {
            encoder: vec![
                LayerParams::zeros(w.feature_width, w.hidden_ae),
                LayerParams::zeros(w.hidden_ae, w.latent),
            ],
            decoder: vec![
                LayerParams::zeros(w.latent, w.hidden_ae),
                LayerParams::zeros(w.hidden_ae, w.feature_width),
            ],
        });
        let fin = if use_autoencoder { w.latent } else { w.feature_width };
        let fusion = FusionParams {
            entry: LayerParams::zeros(fin, w.hidden),
            heads: (0..w.heads).map(|_| LayerParams::zeros(w.hidden, w.hidden)).collect(),
            finals: (0..w.heads).map(|_| LayerParams::zeros(w.heads * w.hidden, w.hidden)).collect(),
            proj_w: Tensor::zeros(w.hidden, 2),
            proj_b: Tensor::zeros(1, 2),
        };
        Self { widths, autoencoder, fusion }
    }

    /// Named tensors in the canonical declared order (checkpoint order).
    pub fn manifest(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        let layer = |prefix: String, l: &LayerParams, out: &mut Vec<(String, usize, usize)>| {
            out.push((format!("{prefix}.w"), l.w.rows, l.w.cols));
            out.push((format!("{prefix}.wEdge"), l.w_edge.rows, l.w_edge.cols));
            out.push((format!("{prefix}.aV2e"), l.a_v2e.rows, l.a_v2e.cols));
            out.push((format!("{prefix}.aE2v"), l.a_e2v.rows, l.a_e2v.cols));
        };
        if let Some(ae) = &self.autoencoder {
            for (i, l) in ae.encoder.iter().enumerate() {
                layer(format!("encoder.{i}"), l, &mut out);
            }
            for (i, l) in ae.decoder.iter().enumerate() {
                layer(format!("decoder.{i}"), l, &mut out);
            }
        }
        layer("fusion.entry".into(), &self.fusion.entry, &mut out);
        for (i, l) in self.fusion.heads.iter().enumerate() {
            layer(format!("fusion.head.{i}"), l, &mut out);
        }
        for (i, l) in self.fusion.finals.iter().enumerate() {
            layer(format!("fusion.final.{i}"), l, &mut out);
        }
        out.push(("fusion.projW".into(), self.fusion.proj_w.rows, self.fusion.proj_w.cols));
        out.push(("fusion.projB".into(), self.fusion.proj_b.rows, self.fusion.proj_b.cols));
        out
    }

    /// Tensors in manifest order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = Vec::new();
        fn layer(l: &LayerParams) -> [&Tensor; 4] {
            [&l.w, &l.w_edge, &l.a_v2e, &l.a_e2v]
        }
        if let Some(ae) = &self.autoencoder {
            for l in ae.encoder.iter().chain(&ae.decoder) {
                out.extend(layer(l));
            }
        }
        out.extend(layer(&self.fusion.entry));
        for l in self.fusion.heads.iter().chain(&self.fusion.finals) {
            out.extend(layer(l));
        }
        out.push(&self.fusion.proj_w);
        out.push(&self.fusion.proj_b);
        out
    }

    /// Mutable tensors in manifest order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        fn layer(l: &mut LayerParams) -> [&mut Tensor; 4] {
            [&mut l.w, &mut l.w_edge, &mut l.a_v2e, &mut l.a_e2v]
        }
        if let Some(ae) = &mut self.autoencoder {
            for l in ae.encoder.iter_mut().chain(&mut ae.decoder) {
                out.extend(layer(l));
            }
        }
        out.extend(layer(&mut self.fusion.entry));
        for l in self.fusion.heads.iter_mut().chain(&mut self.fusion.finals) {
            out.extend(layer(l));
        }
        out.push(&mut self.fusion.proj_w);
        out.push(&mut self.fusion.proj_b);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }
}

/// Tape handles for one layer's parameters.
#[derive(Debug, Clone, Copy)]
pub struct TapeLayer {
    pub w: Value,
    pub w_edge: Value,
    pub a_v2e: Value,
    pub a_e2v: Value,
}

/// Tape handles for all model parameters, registered as variables.
pub struct TapeModel {
    pub encoder: Vec<TapeLayer>,
    pub decoder: Vec<TapeLayer>,
    pub entry: TapeLayer,
    pub heads: Vec<TapeLayer>,
    pub finals: Vec<TapeLayer>,
    pub proj_w: Value,
    pub proj_b: Value,
    pub has_autoencoder: bool,
}

impl TapeModel {
    /// Register every parameter as a differentiable tape variable, in
    /// manifest order.
    pub fn register(tape: &mut Tape, params: &ModelParams) -> Self {
        let reg_layer = |tape: &mut Tape, l: &LayerParams| TapeLayer {
            w: tape.var(l.w.clone()),
            w_edge: tape.var(l.w_edge.clone()),
            a_v2e: tape.var(l.a_v2e.clone()),
            a_e2v: tape.var(l.a_e2v.clone()),
        };
        let (encoder, decoder) = match &params.autoencoder {
            Some(ae) => (
                ae.encoder.iter().map(|l| reg_layer(tape, l)).collect(),
                ae.decoder.iter().map(|l| reg_layer(tape, l)).collect(),
            ),
            None => (Vec::new(), Vec::new()),
        };
        let entry = reg_layer(tape, &params.fusion.entry);
        let heads = params.fusion.heads.iter().map(|l| reg_layer(tape, l)).collect();
        let finals = params.fusion.finals.iter().map(|l| reg_layer(tape, l)).collect();
        let proj_w = tape.var(params.fusion.proj_w.clone());
        let proj_b = tape.var(params.fusion.proj_b.clone());
        Self {
            encoder,
            decoder,
            entry,
            heads,
            finals,
            proj_w,
            proj_b,
            has_autoencoder: params.autoencoder.is_some(),
        }
    }

    /// Parameter values in manifest order.
    pub fn all_values(&self) -> Vec<Value> {
        let mut out = Vec::new();
        let layer = |l: &TapeLayer| [l.w, l.w_edge, l.a_v2e, l.a_e2v];
        for l in self.encoder.iter().chain(&self.decoder) {
            out.extend(layer(l));
        }
        out.extend(layer(&self.entry));
        for l in self.heads.iter().chain(&self.finals) {
            out.extend(layer(l));
        }
        out.push(self.proj_w);
        out.push(self.proj_b);
        out
    }
}

/// Tape handles for the autoencoder alone, used during pretraining.
pub struct TapeAe {
    pub encoder: Vec<TapeLayer>,
    pub decoder: Vec<TapeLayer>,
}

impl TapeAe {
    pub fn register(tape: &mut Tape, ae: &AutoencoderParams) -> Self {
        let reg = |tape: &mut Tape, l: &LayerParams| TapeLayer {
            w: tape.var(l.w.clone()),
            w_edge: tape.var(l.w_edge.clone()),
            a_v2e: tape.var(l.a_v2e.clone()),
            a_e2v: tape.var(l.a_e2v.clone()),
        };
        Self {
            encoder: ae.encoder.iter().map(|l| reg(tape, l)).collect(),
            decoder: ae.decoder.iter().map(|l| reg(tape, l)).collect(),
        }
    }

    /// Values matching [`AutoencoderParams::tensors`] order.
    pub fn all_values(&self) -> Vec<Value> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|l| [l.w, l.w_edge, l.a_v2e, l.a_e2v])
            .collect()
    }
}

/// Initial edge attributes: member mean of node features per column. Empty
/// columns produce zero rows.
pub fn theta0(tape: &mut Tape, x: Value, flat: &IncidenceFlat) -> Value {
    let gathered = tape.gather_rows(x, &flat.pair_nodes);
    let w = tape.constant(Tensor::from_vec(flat.num_pairs(), 1, flat.theta0_w.clone()));
    tape.segment_sum(gathered, &flat.pair_edges, Some(w), flat.num_cols)
}

/// Outputs of one attention convolution, with the per-stage attention
/// coefficient columns exposed for inspection.
pub struct HconvOut {
    pub x: Value,
    pub theta: Value,
    pub alpha_v2e: Value,
    pub alpha_e2v: Value,
}

/// Two-stage attention convolution.
///
/// Stage 1 aggregates transformed member-node features into each column with
/// attention normalized within the column; stage 2 aggregates transformed
/// column attributes back into each node with attention normalized over the
/// node's incident columns. Ω multiplies in stage 2 only; LeakyReLU follows
/// each stage.
pub fn hconv_att(
    tape: &mut Tape,
    x: Value,
    theta: Value,
    layer: &TapeLayer,
    flat: &IncidenceFlat,
    mode: AttentionMode,
) -> HconvOut {
    let xw = tape.matmul(x, layer.w);
    let src = tape.gather_rows(xw, &flat.pair_nodes);

    // Stage 1: nodes → columns.
    let alpha_v2e = match mode {
        AttentionMode::Learned => {
            let tw = tape.matmul(theta, layer.w);
            let dst = tape.gather_rows(tw, &flat.pair_edges);
            let cat = tape.concat_cols(src, dst);
            let act = tape.leaky_relu(cat, LEAKY_SLOPE);
            let logits = tape.matmul(act, layer.a_v2e);
            tape.segment_softmax(logits, &flat.pair_edges)
        }
        _ => tape.constant(flat.fixed_attention(mode, true)),
    };
    let theta_raw = tape.segment_sum(src, &flat.pair_edges, Some(alpha_v2e), flat.num_cols);
    let theta_next = tape.leaky_relu(theta_raw, LEAKY_SLOPE);

    // Stage 2: columns → nodes.
    let te = tape.matmul(theta_next, layer.w_edge);
    let dst = tape.gather_rows(te, &flat.pair_edges);
    let alpha_e2v = match mode {
        AttentionMode::Learned => {
            let cat = tape.concat_cols(src, dst);
            let act = tape.leaky_relu(cat, LEAKY_SLOPE);
            let logits = tape.matmul(act, layer.a_e2v);
            tape.segment_softmax(logits, &flat.pair_nodes)
        }
        _ => tape.constant(flat.fixed_attention(mode, false)),
    };
    let omega = tape.constant(Tensor::from_vec(flat.num_pairs(), 1, flat.omega.clone()));
    let weights = tape.mul_elem(alpha_e2v, omega);
    let x_raw = tape.segment_sum(dst, &flat.pair_nodes, Some(weights), flat.n);
    let x_next = tape.leaky_relu(x_raw, LEAKY_SLOPE);

    HconvOut { x: x_next, theta: theta_next, alpha_v2e, alpha_e2v }
}

fn run_stack(
    tape: &mut Tape,
    mut x: Value,
    mut theta: Value,
    layers: &[TapeLayer],
    flat: &IncidenceFlat,
    mode: AttentionMode,
) -> (Value, Value) {
    for layer in layers {
        let out = hconv_att(tape, x, theta, layer, flat, mode);
        x = out.x;
        theta = out.theta;
    }
    (x, theta)
}

/// Encoder: raw features (with fresh Θ⁰) down to the latent embedding.
pub fn encode(
    tape: &mut Tape,
    x: Value,
    layers: &[TapeLayer],
    flat: &IncidenceFlat,
    mode: AttentionMode,
) -> (Value, Value) {
    let th0 = theta0(tape, x, flat);
    run_stack(tape, x, th0, layers, flat, mode)
}

/// Decoder: latent embedding (and its edge attributes) back to feature width.
pub fn decode(
    tape: &mut Tape,
    gamma: Value,
    theta: Value,
    layers: &[TapeLayer],
    flat: &IncidenceFlat,
    mode: AttentionMode,
) -> Value {
    run_stack(tape, gamma, theta, layers, flat, mode).0
}

/// Fusion head: entry convolution, K parallel heads concatenated, K final
/// convolutions averaged, linear projection, row softmax.
pub fn fusion_forward(
    tape: &mut Tape,
    gamma: Value,
    theta: Value,
    model: &TapeModel,
    flat: &IncidenceFlat,
    mode: AttentionMode,
) -> Value {
    let entry = hconv_att(tape, gamma, theta, &model.entry, flat, mode);
    let mut xs = Vec::with_capacity(model.heads.len());
    let mut ts = Vec::with_capacity(model.heads.len());
    for layer in &model.heads {
        let out = hconv_att(tape, entry.x, entry.theta, layer, flat, mode);
        xs.push(out.x);
        ts.push(out.theta);
    }
    let mut xc = xs[0];
    let mut tc = ts[0];
    for i in 1..xs.len() {
        xc = tape.concat_cols(xc, xs[i]);
        tc = tape.concat_cols(tc, ts[i]);
    }
    let mut finals = Vec::with_capacity(model.finals.len());
    for layer in &model.finals {
        let out = hconv_att(tape, xc, tc, layer, flat, mode);
        finals.push(out.x);
    }
    let avg = tape.row_mean_k(&finals);
    let logits = tape.matmul(avg, model.proj_w);
    let ones = tape.constant(Tensor::from_vec(flat.n, 1, vec![1.0; flat.n]));
    let bias = tape.matmul(ones, model.proj_b);
    let shifted = tape.add(logits, bias);
    tape.row_softmax(shifted)
}

/// Forward outputs needed by the losses.
pub struct ForwardOutput {
    /// Reconstruction, present only when the model has an autoencoder.
    pub x_hat: Option<Value>,
    /// n × 2 probability rows.
    pub probs: Value,
}

/// Full model forward from raw features.
pub fn model_forward(
    tape: &mut Tape,
    x: Value,
    model: &TapeModel,
    flat: &IncidenceFlat,
    mode: AttentionMode,
) -> ForwardOutput {
    if model.has_autoencoder {
        let (gamma, theta_enc) = encode(tape, x, &model.encoder, flat, mode);
        let x_hat = decode(tape, gamma, theta_enc, &model.decoder, flat, mode);
        let probs = fusion_forward(tape, gamma, theta_enc, model, flat, mode);
        ForwardOutput { x_hat: Some(x_hat), probs }
    } else {
        let th0 = theta0(tape, x, flat);
        let probs = fusion_forward(tape, x, th0, model, flat, mode);
        ForwardOutput { x_hat: None, probs }
    }
}

/// Predicted source set: nodes whose source-class probability strictly
/// exceeds 0.5 (a tie at exactly 0.5 is non-source).
pub fn classify(probs: &Tensor) -> Vec<usize> {
    assert_eq!(probs.cols, 2, "classify expects two-class probability rows");
    (0..probs.rows).filter(|&i| probs.get(i, 0) > 0.5).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct CheckpointHeader {
    format_version: u32,
    widths: ModelWidths,
    use_autoencoder: bool,
    init_seed: Option<u64>,
    shapes: Vec<(String, usize, usize)>,
}

/// Write a checkpoint: one JSON header line, then all parameters as
/// little-endian f64 in manifest order.
pub fn save_checkpoint(params: &ModelParams, init_seed: Option<u64>, path: &Path) -> Result<()> {
    let header = CheckpointHeader {
        format_version: 1,
        widths: params.widths,
        use_autoencoder: params.autoencoder.is_some(),
        init_seed,
        shapes: params.manifest(),
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    for t in params.tensors() {
        for x in &t.data {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Read a checkpoint written by [`save_checkpoint`], validating the shape
/// manifest against the declared widths before accepting any data.
pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let mut raw = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut raw)?;
    let nl = raw
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Parse { line: 1, msg: "checkpoint missing header line".into() })?;
    let header: CheckpointHeader = serde_json::from_slice(&raw[..nl])?;
    if header.format_version != 1 {
        return Err(Error::InvalidConfig(format!(
            "unsupported checkpoint format version {}",
            header.format_version
        )));
    }
    header.widths.validate()?;
    let mut params = ModelParams::zeros(header.widths, header.use_autoencoder);
    let expected = params.manifest();
    if expected != header.shapes {
        return Err(Error::Shape(format!(
            "checkpoint manifest does not match widths: expected {} tensors, header lists {}",
            expected.len(),
            header.shapes.len()
        )));
    }
    let body = &raw[nl + 1..];
    let want: usize = expected.iter().map(|(_, r, c)| r * c * 8).sum();
    if body.len() != want {
        return Err(Error::Shape(format!(
            "checkpoint body has {} bytes, manifest needs {want}",
            body.len()
        )));
    }
    let mut off = 0;
    for t in params.tensors_mut() {
        for x in &mut t.data {
            let mut buf = [0u8; 8];
            buf.copy_from_slice(&body[off..off + 8]);
            *x = f64::from_le_bytes(buf);
            off += 8;
        }
    }
    Ok(params)
}
