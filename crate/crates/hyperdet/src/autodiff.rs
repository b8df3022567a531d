//! Reverse-mode automatic differentiation over dense row-major matrices.
//!
//! Primitives are recorded on an append-only tape; [`Tape::backward`] walks it
//! in reverse and accumulates exact gradients into every variable node.
//! Sparse incidence structure is expressed through gather and segment
//! primitives instead of dense incidence multiplies, so feature matrices stay
//! dense while the hypergraph stays a pair list.
//!
//! A tape is single-threaded; distinct tapes may run on different threads.

/// Dense row-major matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor data length != rows*cols");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn scalar(x: f64) -> Self {
        Self { rows: 1, cols: 1, data: vec![x] }
    }

    /// Uniform fill in [lo, hi), mainly for initialization and tests.
    pub fn uniform<R: rand::Rng>(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
        Self { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.cols + j] = x;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn inf_norm(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Handle to a node on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Value(usize);

enum Op {
    Leaf,
    MatMul(Value, Value),
    Add(Value, Value),
    Scale(Value, f64),
    MulElem(Value, Value),
    ConcatCols(Value, Value),
    GatherRows(Value, Vec<usize>),
    LeakyRelu(Value, f64),
    SegmentSoftmax { logits: Value, segments: Vec<usize> },
    SegmentSum { values: Value, segments: Vec<usize>, weights: Option<Value> },
    RowSoftmax(Value),
    RowMeanK(Vec<Value>),
    Mse(Value, Value),
    WeightedCe { probs: Value, labels: Vec<usize>, weights: Vec<f64> },
    L2Penalty(Vec<Value>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Scale(..) => "scale",
            Op::MulElem(..) => "mul_elem",
            Op::ConcatCols(..) => "concat_cols",
            Op::GatherRows(..) => "gather_rows",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::SegmentSoftmax { .. } => "segment_softmax",
            Op::SegmentSum { .. } => "segment_sum",
            Op::RowSoftmax(..) => "row_softmax",
            Op::RowMeanK(..) => "row_mean_k",
            Op::Mse(..) => "mse",
            Op::WeightedCe { .. } => "weighted_ce",
            Op::L2Penalty(..) => "l2_penalty",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Probability clamp used by [`Tape::weighted_ce`].
pub const CE_CLAMP: f64 = 1e-12;

/// Append-only computation tape. Insertion order is topological order.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward pass, indexed by [`Value`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Value) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Value) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Value) -> &Tensor {
        &self.nodes[v.0].value
    }

    // Non-finite values are allowed to flow; training checks finiteness at
    // the loss and reports divergence as an error.
    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Value {
        self.nodes.push(Node { value, op, requires_grad });
        Value(self.nodes.len() - 1)
    }

    fn wants(&self, v: Value) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Record a constant input; gradients never flow into it.
    pub fn constant(&mut self, t: Tensor) -> Value {
        self.push(t, Op::Leaf, false)
    }

    /// Record a differentiable input.
    pub fn var(&mut self, t: Tensor) -> Value {
        self.push(t, Op::Leaf, true)
    }

    /// C = A·B.
    pub fn matmul(&mut self, a: Value, b: Value) -> Value {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.cols, tb.rows, "matmul inner dims {}x{} · {}x{}", ta.rows, ta.cols, tb.rows, tb.cols);
        let out = matmul_raw(ta, tb);
        let rg = self.wants(a) || self.wants(b);
        self.push(out, Op::MatMul(a, b), rg)
    }

    /// Elementwise A + B (equal shapes).
    pub fn add(&mut self, a: Value, b: Value) -> Value {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!((ta.rows, ta.cols), (tb.rows, tb.cols), "add shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        let out = Tensor { rows: ta.rows, cols: ta.cols, data };
        let rg = self.wants(a) || self.wants(b);
        self.push(out, Op::Add(a, b), rg)
    }

    /// c·A for scalar constant c.
    pub fn scale(&mut self, a: Value, c: f64) -> Value {
        let ta = self.value(a);
        let data = ta.data.iter().map(|x| c * x).collect();
        let out = Tensor { rows: ta.rows, cols: ta.cols, data };
        let rg = self.wants(a);
        self.push(out, Op::Scale(a, c), rg)
    }

    /// Hadamard product A ∘ B (equal shapes).
    pub fn mul_elem(&mut self, a: Value, b: Value) -> Value {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!((ta.rows, ta.cols), (tb.rows, tb.cols), "mul_elem shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
        let out = Tensor { rows: ta.rows, cols: ta.cols, data };
        let rg = self.wants(a) || self.wants(b);
        self.push(out, Op::MulElem(a, b), rg)
    }

    /// [A ‖ B] column-wise (equal row counts).
    pub fn concat_cols(&mut self, a: Value, b: Value) -> Value {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.rows, tb.rows, "concat_cols row mismatch");
        let cols = ta.cols + tb.cols;
        let mut data = Vec::with_capacity(ta.rows * cols);
        for i in 0..ta.rows {
            data.extend_from_slice(ta.row(i));
            data.extend_from_slice(tb.row(i));
        }
        let out = Tensor { rows: ta.rows, cols, data };
        let rg = self.wants(a) || self.wants(b);
        self.push(out, Op::ConcatCols(a, b), rg)
    }

    /// out.row(i) = A.row(idx[i]); indices may repeat.
    pub fn gather_rows(&mut self, a: Value, idx: &[usize]) -> Value {
        let ta = self.value(a);
        let mut data = Vec::with_capacity(idx.len() * ta.cols);
        for &i in idx {
            assert!(i < ta.rows, "gather_rows index {i} out of {} rows", ta.rows);
            data.extend_from_slice(ta.row(i));
        }
        let out = Tensor { rows: idx.len(), cols: ta.cols, data };
        let rg = self.wants(a);
        self.push(out, Op::GatherRows(a, idx.to_vec()), rg)
    }

    /// max(x, slope·x); derivative at 0 takes the slope branch.
    pub fn leaky_relu(&mut self, a: Value, slope: f64) -> Value {
        let ta = self.value(a);
        let data = ta.data.iter().map(|&x| if x > 0.0 { x } else { slope * x }).collect();
        let out = Tensor { rows: ta.rows, cols: ta.cols, data };
        let rg = self.wants(a);
        self.push(out, Op::LeakyRelu(a, slope), rg)
    }

    /// Softmax of a column of logits within each segment. Output rows are
    /// strictly positive and sum to 1 per segment.
    pub fn segment_softmax(&mut self, logits: Value, segments: &[usize]) -> Value {
        let tl = self.value(logits);
        assert_eq!(tl.cols, 1, "segment_softmax expects a column vector");
        assert_eq!(tl.rows, segments.len(), "segment ids must cover every row");
        let out = segment_softmax_raw(&tl.data, segments);
        let rg = self.wants(logits);
        self.push(
            Tensor { rows: segments.len(), cols: 1, data: out },
            Op::SegmentSoftmax { logits, segments: segments.to_vec() },
            rg,
        )
    }

    /// out.row(t) = Σ_{i: segments[i]=t} w_i · values.row(i). Segments absent
    /// from `segments` produce zero rows. `weights`, when given, is a column
    /// vector with one entry per input row and receives gradients too.
    pub fn segment_sum(
        &mut self,
        values: Value,
        segments: &[usize],
        weights: Option<Value>,
        num_segments: usize,
    ) -> Value {
        let tv = self.value(values);
        assert_eq!(tv.rows, segments.len(), "segment ids must cover every row");
        if let Some(w) = weights {
            let tw = self.value(w);
            assert_eq!((tw.rows, tw.cols), (tv.rows, 1), "weights must be one column per row");
        }
        assert!(segments.iter().all(|&s| s < num_segments), "segment id out of range");
        let cols = tv.cols;
        let mut out = vec![0.0; num_segments * cols];
        for (i, &seg) in segments.iter().enumerate() {
            let w = match weights {
                Some(wv) => self.value(wv).data[i],
                None => 1.0,
            };
            let src = self.value(values).row(i);
            let dst = &mut out[seg * cols..(seg + 1) * cols];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
        let rg = self.wants(values) || weights.is_some_and(|w| self.wants(w));
        self.push(
            Tensor { rows: num_segments, cols, data: out },
            Op::SegmentSum { values, segments: segments.to_vec(), weights },
            rg,
        )
    }

    /// Softmax within each row.
    pub fn row_softmax(&mut self, a: Value) -> Value {
        let ta = self.value(a);
        let mut data = Vec::with_capacity(ta.data.len());
        for i in 0..ta.rows {
            let row = ta.row(i);
            let mx = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let exps: Vec<f64> = row.iter().map(|&x| (x - mx).exp()).collect();
            let sum: f64 = exps.iter().sum();
            data.extend(exps.iter().map(|e| e / sum));
        }
        let out = Tensor { rows: ta.rows, cols: ta.cols, data };
        let rg = self.wants(a);
        self.push(out, Op::RowSoftmax(a), rg)
    }

    /// Elementwise mean of K equally shaped blocks.
    pub fn row_mean_k(&mut self, blocks: &[Value]) -> Value {
        assert!(!blocks.is_empty(), "row_mean_k needs at least one block");
        let shape = {
            let t = self.value(blocks[0]);
            (t.rows, t.cols)
        };
        let mut data = vec![0.0; shape.0 * shape.1];
        for &b in blocks {
            let tb = self.value(b);
            assert_eq!((tb.rows, tb.cols), shape, "row_mean_k shape mismatch");
            for (d, &s) in data.iter_mut().zip(&tb.data) {
                *d += s;
            }
        }
        let k = blocks.len() as f64;
        for d in &mut data {
            *d /= k;
        }
        let rg = blocks.iter().any(|&b| self.wants(b));
        self.push(
            Tensor { rows: shape.0, cols: shape.1, data },
            Op::RowMeanK(blocks.to_vec()),
            rg,
        )
    }

    /// Scalar mean of squared entrywise differences.
    pub fn mse(&mut self, a: Value, b: Value) -> Value {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!((ta.rows, ta.cols), (tb.rows, tb.cols), "mse shape mismatch");
        let n = ta.data.len() as f64;
        let sum: f64 = ta.data.iter().zip(&tb.data).map(|(x, y)| (x - y) * (x - y)).sum();
        let rg = self.wants(a) || self.wants(b);
        self.push(Tensor::scalar(sum / n), Op::Mse(a, b), rg)
    }

    /// Scalar Σ_i weights[i] · (−ln p_i[labels[i]]), probabilities clamped to
    /// [CE_CLAMP, 1−CE_CLAMP]. Gradients vanish where the clamp is active.
    pub fn weighted_ce(&mut self, probs: Value, labels: &[usize], weights: &[f64]) -> Value {
        let tp = self.value(probs);
        assert_eq!(tp.rows, labels.len(), "one label per probability row");
        assert_eq!(tp.rows, weights.len(), "one weight per probability row");
        let mut total = 0.0;
        for (i, (&y, &w)) in labels.iter().zip(weights).enumerate() {
            assert!(y < tp.cols, "label {y} out of {} classes", tp.cols);
            let p = tp.get(i, y).clamp(CE_CLAMP, 1.0 - CE_CLAMP);
            total += w * (-p.ln());
        }
        let rg = self.wants(probs);
        self.push(
            Tensor::scalar(total),
            Op::WeightedCe { probs, labels: labels.to_vec(), weights: weights.to_vec() },
            rg,
        )
    }

    /// Scalar Σ over all listed tensors of the squared entries.
    pub fn l2_penalty(&mut self, params: &[Value]) -> Value {
        let mut total = 0.0;
        for &p in params {
            total += self.value(p).data.iter().map(|x| x * x).sum::<f64>();
        }
        let rg = params.iter().any(|&p| self.wants(p));
        self.push(Tensor::scalar(total), Op::L2Penalty(params.to_vec()), rg)
    }

    /// One line per node: id, op, shape.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let _ = writeln!(s, "#{i} {} {}x{} rg={}", n.op.name(), n.value.rows, n.value.cols, n.requires_grad);
        }
        s
    }

    /// Reverse pass from a scalar root. Gradients accumulate only into nodes
    /// reachable from a `var` leaf; everything else stays `None`.
    pub fn backward(&self, root: Value) -> Gradients {
        assert!(root.0 < self.nodes.len(), "backward target not on this tape");
        let rt = &self.nodes[root.0].value;
        assert_eq!((rt.rows, rt.cols), (1, 1), "backward root must be scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));

        for id in (0..=root.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.accumulate_parents(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate_parents(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let ensure = |grads: &mut [Option<Tensor>], v: Value, rows: usize, cols: usize| {
            if grads[v.0].is_none() {
                grads[v.0] = Some(Tensor::zeros(rows, cols));
            }
        };
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    ensure(grads, *a, ta.rows, ta.cols);
                    let da = grads[a.0].as_mut().unwrap();
                    // dA += g·Bᵀ
                    for i in 0..ta.rows {
                        for k in 0..ta.cols {
                            let mut acc = 0.0;
                            let grow = g.row(i);
                            let brow = tb.row(k);
                            for j in 0..tb.cols {
                                acc += grow[j] * brow[j];
                            }
                            da.data[i * ta.cols + k] += acc;
                        }
                    }
                }
                if self.wants(*b) {
                    ensure(grads, *b, tb.rows, tb.cols);
                    let db = grads[b.0].as_mut().unwrap();
                    // dB += Aᵀ·g
                    for i in 0..ta.rows {
                        let arow = ta.row(i);
                        let grow = g.row(i);
                        for (k, &av) in arow.iter().enumerate() {
                            if av == 0.0 {
                                continue;
                            }
                            let drow = &mut db.data[k * tb.cols..(k + 1) * tb.cols];
                            for (d, &gv) in drow.iter_mut().zip(grow) {
                                *d += av * gv;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for &v in [a, b] {
                    if self.wants(v) {
                        let t = self.value(v);
                        ensure(grads, v, t.rows, t.cols);
                        let dv = grads[v.0].as_mut().unwrap();
                        for (d, &gv) in dv.data.iter_mut().zip(&g.data) {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Scale(a, c) => {
                if self.wants(*a) {
                    let t = self.value(*a);
                    ensure(grads, *a, t.rows, t.cols);
                    let da = grads[a.0].as_mut().unwrap();
                    for (d, &gv) in da.data.iter_mut().zip(&g.data) {
                        *d += c * gv;
                    }
                }
            }
            Op::MulElem(a, b) => {
                let pairs = [(*a, *b), (*b, *a)];
                for (tgt, other) in pairs {
                    if self.wants(tgt) {
                        let shape = (self.value(tgt).rows, self.value(tgt).cols);
                        ensure(grads, tgt, shape.0, shape.1);
                        // split borrow: read `other`'s value, write tgt's grad
                        let ov = self.value(other).data.clone();
                        let dt = grads[tgt.0].as_mut().unwrap();
                        for ((d, &gv), &o) in dt.data.iter_mut().zip(&g.data).zip(&ov) {
                            *d += gv * o;
                        }
                    }
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols;
                for (v, lo, hi) in [(*a, 0, ca), (*b, ca, g.cols)] {
                    if self.wants(v) {
                        let t = self.value(v);
                        ensure(grads, v, t.rows, t.cols);
                        let dv = grads[v.0].as_mut().unwrap();
                        for i in 0..g.rows {
                            let grow = &g.row(i)[lo..hi];
                            let drow = &mut dv.data[i * (hi - lo)..(i + 1) * (hi - lo)];
                            for (d, &gv) in drow.iter_mut().zip(grow) {
                                *d += gv;
                            }
                        }
                    }
                }
            }
            Op::GatherRows(a, idx) => {
                if self.wants(*a) {
                    let t = self.value(*a);
                    ensure(grads, *a, t.rows, t.cols);
                    let da = grads[a.0].as_mut().unwrap();
                    for (i, &src) in idx.iter().enumerate() {
                        let grow = g.row(i);
                        let drow = &mut da.data[src * g.cols..(src + 1) * g.cols];
                        for (d, &gv) in drow.iter_mut().zip(grow) {
                            *d += gv;
                        }
                    }
                }
            }
            Op::LeakyRelu(a, slope) => {
                if self.wants(*a) {
                    let t = self.value(*a);
                    ensure(grads, *a, t.rows, t.cols);
                    let slopes: Vec<f64> =
                        t.data.iter().map(|&x| if x > 0.0 { 1.0 } else { *slope }).collect();
                    let da = grads[a.0].as_mut().unwrap();
                    for ((d, &gv), s) in da.data.iter_mut().zip(&g.data).zip(slopes) {
                        *d += gv * s;
                    }
                }
            }
            Op::SegmentSoftmax { logits, segments } => {
                if self.wants(*logits) {
                    let y = &self.nodes[id].value;
                    let nseg = segments.iter().copied().max().map_or(0, |m| m + 1);
                    let mut dot = vec![0.0; nseg];
                    for (i, &seg) in segments.iter().enumerate() {
                        dot[seg] += g.data[i] * y.data[i];
                    }
                    let t = self.value(*logits);
                    ensure(grads, *logits, t.rows, t.cols);
                    let dl = grads[logits.0].as_mut().unwrap();
                    for (i, &seg) in segments.iter().enumerate() {
                        dl.data[i] += y.data[i] * (g.data[i] - dot[seg]);
                    }
                }
            }
            Op::SegmentSum { values, segments, weights } => {
                if self.wants(*values) {
                    let t = self.value(*values);
                    ensure(grads, *values, t.rows, t.cols);
                    let w: Vec<f64> = match weights {
                        Some(wv) => self.value(*wv).data.clone(),
                        None => vec![1.0; segments.len()],
                    };
                    let dv = grads[values.0].as_mut().unwrap();
                    for (i, &seg) in segments.iter().enumerate() {
                        let grow = g.row(seg);
                        let drow = &mut dv.data[i * g.cols..(i + 1) * g.cols];
                        for (d, &gv) in drow.iter_mut().zip(grow) {
                            *d += w[i] * gv;
                        }
                    }
                }
                if let Some(wv) = weights {
                    if self.wants(*wv) {
                        let vals = self.value(*values).clone();
                        ensure(grads, *wv, vals.rows, 1);
                        let dw = grads[wv.0].as_mut().unwrap();
                        for (i, &seg) in segments.iter().enumerate() {
                            let grow = g.row(seg);
                            let vrow = vals.row(i);
                            let mut acc = 0.0;
                            for (gv, &v) in grow.iter().zip(vrow) {
                                acc += gv * v;
                            }
                            dw.data[i] += acc;
                        }
                    }
                }
            }
            Op::RowSoftmax(a) => {
                if self.wants(*a) {
                    let y = &self.nodes[id].value;
                    let t = self.value(*a);
                    ensure(grads, *a, t.rows, t.cols);
                    let da = grads[a.0].as_mut().unwrap();
                    for i in 0..y.rows {
                        let yr = y.row(i);
                        let gr = g.row(i);
                        let dot: f64 = yr.iter().zip(gr).map(|(&yv, &gv)| yv * gv).sum();
                        let drow = &mut da.data[i * y.cols..(i + 1) * y.cols];
                        for (j, d) in drow.iter_mut().enumerate() {
                            *d += yr[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            Op::RowMeanK(blocks) => {
                let k = blocks.len() as f64;
                for &b in blocks {
                    if self.wants(b) {
                        let t = self.value(b);
                        ensure(grads, b, t.rows, t.cols);
                        let db = grads[b.0].as_mut().unwrap();
                        for (d, &gv) in db.data.iter_mut().zip(&g.data) {
                            *d += gv / k;
                        }
                    }
                }
            }
            Op::Mse(a, b) => {
                let g0 = g.data[0];
                let (ta, tb) = (self.value(*a).clone(), self.value(*b).clone());
                let n = ta.data.len() as f64;
                for (v, sign) in [(*a, 1.0), (*b, -1.0)] {
                    if self.wants(v) {
                        ensure(grads, v, ta.rows, ta.cols);
                        let dv = grads[v.0].as_mut().unwrap();
                        for (i, d) in dv.data.iter_mut().enumerate() {
                            *d += sign * g0 * 2.0 / n * (ta.data[i] - tb.data[i]);
                        }
                    }
                }
            }
            Op::WeightedCe { probs, labels, weights } => {
                if self.wants(*probs) {
                    let g0 = g.data[0];
                    let tp = self.value(*probs).clone();
                    ensure(grads, *probs, tp.rows, tp.cols);
                    let dp = grads[probs.0].as_mut().unwrap();
                    for (i, (&y, &w)) in labels.iter().zip(weights).enumerate() {
                        let p = tp.get(i, y);
                        if p > CE_CLAMP && p < 1.0 - CE_CLAMP {
                            dp.data[i * tp.cols + y] += g0 * (-w / p);
                        }
                    }
                }
            }
            Op::L2Penalty(params) => {
                let g0 = g.data[0];
                for &p in params {
                    if self.wants(p) {
                        let t = self.value(p).clone();
                        ensure(grads, p, t.rows, t.cols);
                        let dp = grads[p.0].as_mut().unwrap();
                        for (d, &x) in dp.data.iter_mut().zip(&t.data) {
                            *d += g0 * 2.0 * x;
                        }
                    }
                }
            }
        }
    }
}

fn matmul_raw(a: &Tensor, b: &Tensor) -> Tensor {
    let (r, c) = (a.rows, b.cols);
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let arow = a.row(i);
        let orow = &mut out[i * c..(i + 1) * c];
        for (kk, &av) in arow.iter().enumerate() {
            let brow = &b.data[kk * c..(kk + 1) * c];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor { rows: r, cols: c, data: out }
}

fn segment_softmax_raw(logits: &[f64], segments: &[usize]) -> Vec<f64> {
    let nseg = segments.iter().copied().max().map_or(0, |m| m + 1);
    let mut mx = vec![f64::NEG_INFINITY; nseg];
    for (i, &seg) in segments.iter().enumerate() {
        mx[seg] = mx[seg].max(logits[i]);
    }
    let mut sums = vec![0.0; nseg];
    let mut exps = vec![0.0; segments.len()];
    for (i, &seg) in segments.iter().enumerate() {
        let e = (logits[i] - mx[seg]).exp();
        exps[i] = e;
        sums[seg] += e;
    }
    for (i, &seg) in segments.iter().enumerate() {
        exps[i] /= sums[seg];
    }
    exps
}

/// Result of a finite-difference gradient comparison.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub tol: f64,
}

impl GradReport {
    pub fn pass(&self) -> bool {
        self.max_rel_err <= self.tol
    }
}

/// Compare tape gradients of a scalar function against central finite
/// differences at `eps`. Relative error is normalized by the largest gradient
/// magnitude seen on either side (floored at 1e-12).
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64, tol: f64) -> GradReport
where
    F: Fn(&mut Tape, &[Value]) -> Value,
{
    let mut tape = Tape::new();
    let vars: Vec<Value> = inputs.iter().map(|t| tape.var(t.clone())).collect();
    let out = f(&mut tape, &vars);
    let grads = tape.backward(out);
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(t.rows, t.cols)))
        .collect();

    let eval = |pts: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Value> = pts.iter().map(|t| tape.var(t.clone())).collect();
        let out = f(&mut tape, &vars);
        let v = tape.value(out);
        assert_eq!((v.rows, v.cols), (1, 1), "grad_check target must be scalar");
        v.data[0]
    };

    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut max_abs = 0.0f64;
    let mut ad_inf = 0.0f64;
    let mut fd_inf = 0.0f64;
    for ti in 0..inputs.len() {
        for idx in 0..inputs[ti].data.len() {
            let orig = inputs[ti].data[idx];
            work[ti].data[idx] = orig + eps;
            let fp = eval(&work);
            work[ti].data[idx] = orig - eps;
            let fm = eval(&work);
            work[ti].data[idx] = orig;
            let fd = (fp - fm) / (2.0 * eps);
            let ad = analytic[ti].data[idx];
            max_abs = max_abs.max((ad - fd).abs());
            ad_inf = ad_inf.max(ad.abs());
            fd_inf = fd_inf.max(fd.abs());
        }
    }
    let denom = ad_inf.max(fd_inf).max(1e-12);
    GradReport { max_rel_err: max_abs / denom, tol }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn rt(rows: usize, cols: usize, rng: &mut ChaCha12Rng) -> Tensor {
        Tensor::uniform(rows, cols, -1.0, 1.0, rng)
    }

    fn check<F>(f: F, inputs: &[Tensor])
    where
        F: Fn(&mut Tape, &[Value]) -> Value,
    {
        let rep = grad_check(f, inputs, 1e-6, 1e-5);
        assert!(rep.pass(), "max rel err {}", rep.max_rel_err);
    }

    #[test]
    fn matmul_identity_and_grad() {
        let mut tape = Tape::new();
        let a = tape.var(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let i = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        let out = tape.matmul(a, i);
        assert_eq!(tape.value(out).data, vec![1.0, 2.0, 3.0, 4.0]);

        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let inputs = [rt(4, 6, &mut rng), rt(6, 3, &mut rng)];
        check(
            |t, v| {
                let m = t.matmul(v[0], v[1]);
                let z = t.constant(Tensor::zeros(4, 3));
                let s = t.mse(m, z);
                t.scale(s, 12.0)
            },
            &inputs,
        );
    }

    #[test]
    fn add_scale_mul_elem_grads() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let inputs = [rt(5, 4, &mut rng), rt(5, 4, &mut rng)];
        check(
            |t, v| {
                let a = t.add(v[0], v[1]);
                let b = t.scale(a, -1.7);
                let c = t.mul_elem(b, v[0]);
                let z = t.constant(Tensor::zeros(5, 4));
                t.mse(c, z)
            },
            &inputs,
        );
    }

    #[test]
    fn concat_and_gather_grads() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let inputs = [rt(4, 3, &mut rng), rt(4, 2, &mut rng)];
        let idx = vec![0usize, 2, 2, 3, 1, 0];
        check(
            move |t, v| {
                let cat = t.concat_cols(v[0], v[1]);
                let g = t.gather_rows(cat, &idx);
                let z = t.constant(Tensor::zeros(6, 5));
                t.mse(g, z)
            },
            &inputs,
        );
    }

    #[test]
    fn leaky_relu_definition_and_grad() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::scalar(-1.0));
        let y = tape.leaky_relu(x, 0.2);
        assert_eq!(tape.value(y).data[0], -0.2);

        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let inputs = [rt(6, 6, &mut rng)];
        check(
            |t, v| {
                let y = t.leaky_relu(v[0], 0.2);
                let z = t.constant(Tensor::zeros(6, 6));
                t.mse(y, z)
            },
            &inputs,
        );
    }

    #[test]
    fn segment_softmax_distributions() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let segments = vec![0usize, 0, 1, 1, 1, 3, 3, 2];
        let mut tape = Tape::new();
        let logits = tape.var(rt(8, 1, &mut rng));
        let y = tape.segment_softmax(logits, &segments);
        let out = tape.value(y);
        for seg in 0..4 {
            let sum: f64 = segments
                .iter()
                .enumerate()
                .filter(|(_, &s)| s == seg)
                .map(|(i, _)| out.data[i])
                .sum();
            assert!((sum - 1.0).abs() <= 1e-12, "segment {seg} sums to {sum}");
        }
        assert!(out.data.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn singleton_segment_softmax_is_one() {
        let mut tape = Tape::new();
        let logits = tape.var(Tensor::scalar(123.456));
        let y = tape.segment_softmax(logits, &[0]);
        assert_eq!(tape.value(y).data[0], 1.0);
    }

    #[test]
    fn segment_softmax_grad() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let segments = vec![0usize, 0, 0, 1, 1, 2, 2, 2];
        let inputs = [rt(8, 1, &mut rng), rt(8, 2, &mut rng)];
        check(
            move |t, v| {
                let alpha = t.segment_softmax(v[0], &segments);
                let agg = t.segment_sum(v[1], &segments, Some(alpha), 3);
                let z = t.constant(Tensor::zeros(3, 2));
                t.mse(agg, z)
            },
            &inputs,
        );
    }

    #[test]
    fn segment_sum_zero_rows_for_absent_segments() {
        let mut tape = Tape::new();
        let vals = tape.var(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let out = tape.segment_sum(vals, &[0, 2], None, 4);
        let t = tape.value(out);
        assert_eq!(t.row(0), &[1.0, 2.0]);
        assert_eq!(t.row(1), &[0.0, 0.0]);
        assert_eq!(t.row(2), &[3.0, 4.0]);
        assert_eq!(t.row(3), &[0.0, 0.0]);
    }

    #[test]
    fn segment_sum_weighted_grad_flows_to_both() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let segments = vec![0usize, 1, 1, 0, 2, 2];
        let inputs = [rt(6, 3, &mut rng), rt(6, 1, &mut rng)];
        check(
            move |t, v| {
                let agg = t.segment_sum(v[0], &segments, Some(v[1]), 3);
                let z = t.constant(Tensor::zeros(3, 3));
                t.mse(agg, z)
            },
            &inputs,
        );
    }

    #[test]
    fn row_softmax_rows_sum_to_one_and_grad() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let mut tape = Tape::new();
        let x = tape.var(rt(5, 4, &mut rng));
        let y = tape.row_softmax(x);
        for i in 0..5 {
            let s: f64 = tape.value(y).row(i).iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }

        let inputs = [rt(4, 3, &mut rng)];
        check(
            |t, v| {
                let y = t.row_softmax(v[0]);
                let target = t.constant(Tensor::zeros(4, 3));
                t.mse(y, target)
            },
            &inputs,
        );
    }

    #[test]
    fn row_mean_k_grad() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let inputs = [rt(3, 4, &mut rng), rt(3, 4, &mut rng), rt(3, 4, &mut rng)];
        check(
            |t, v| {
                let m = t.row_mean_k(v);
                let z = t.constant(Tensor::zeros(3, 4));
                t.mse(m, z)
            },
            &inputs,
        );
    }

    #[test]
    fn mse_grad_and_values() {
        let mut tape = Tape::new();
        let a = tape.var(Tensor::from_rows(&[vec![1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0]]));
        let b = tape.constant(Tensor::zeros(2, 3));
        let m = tape.mse(a, b);
        assert!((tape.value(m).data[0] - 1.0).abs() < 1e-15);

        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let inputs = [rt(4, 4, &mut rng), rt(4, 4, &mut rng)];
        check(|t, v| t.mse(v[0], v[1]), &inputs);
    }

    #[test]
    fn weighted_ce_grad() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let probs = Tensor::uniform(6, 2, 0.05, 0.95, &mut rng);
        let labels = vec![0usize, 1, 1, 0, 1, 0];
        let weights = vec![1.0, 0.25, 0.25, 1.0, 0.25, 0.25];
        check(move |t, v| t.weighted_ce(v[0], &labels, &weights), &[probs]);
    }

    #[test]
    fn l2_penalty_grad_and_zero_case() {
        let mut tape = Tape::new();
        let z = tape.var(Tensor::zeros(3, 3));
        let p = tape.l2_penalty(&[z]);
        assert_eq!(tape.value(p).data[0], 0.0);

        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let inputs = [rt(3, 3, &mut rng), rt(2, 5, &mut rng)];
        check(|t, v| t.l2_penalty(v), &inputs);
    }

    #[test]
    fn norm_squared_matches_analytic_gradient_tightly() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let x = rt(3, 3, &mut rng);
        let rep = grad_check(
            |t, v| {
                let s = t.l2_penalty(&[v[0]]);
                t.scale(s, 1.0)
            },
            &[x],
            1e-6,
            1e-7,
        );
        assert!(rep.pass(), "max rel err {}", rep.max_rel_err);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.var(Tensor::from_rows(&[vec![2.0, 3.0]]));
        let c = tape.constant(Tensor::scalar(5.0));
        let out = tape.scale(c, 2.0);
        let grads = tape.backward(out);
        assert!(grads.get(x).is_none());
    }

    #[test]
    fn replay_is_bit_identical() {
        let run = || {
            let mut rng = ChaCha12Rng::seed_from_u64(14);
            let mut tape = Tape::new();
            let x = tape.var(rt(6, 4, &mut rng));
            let w = tape.var(rt(4, 3, &mut rng));
            let h = tape.matmul(x, w);
            let a = tape.leaky_relu(h, 0.2);
            let z = tape.constant(Tensor::zeros(6, 3));
            let loss = tape.mse(a, z);
            let grads = tape.backward(loss);
            (
                tape.value(loss).data[0],
                grads.get(x).unwrap().data.clone(),
                grads.get(w).unwrap().data.clone(),
            )
        };
        let (l1, gx1, gw1) = run();
        let (l2, gx2, gw2) = run();
        assert!(l1.to_bits() == l2.to_bits());
        assert_eq!(gx1, gx2);
        assert_eq!(gw1, gw2);
    }

    #[test]
    fn gradients_skip_constants() {
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        let mut tape = Tape::new();
        let x = tape.var(rt(3, 3, &mut rng));
        let c = tape.constant(rt(3, 3, &mut rng));
        let s = tape.add(x, c);
        let z = tape.constant(Tensor::zeros(3, 3));
        let loss = tape.mse(s, z);
        let grads = tape.backward(loss);
        assert!(grads.get(c).is_none());
        assert!(grads.get(x).is_some());
    }
}
