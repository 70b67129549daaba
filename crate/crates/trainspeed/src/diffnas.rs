//! Toy differentiable architecture search: a hand-differentiated cell of
//! softmax-mixed operations, plain alternating updates, and a variant that
//! drives the architecture parameters with the accumulated training-loss
//! gradient instead of a validation-loss gradient.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::stream_rng;
use crate::toytrain::mlp::{cross_entropy, softmax};
use crate::toytrain::SyntheticDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Identity,
    Zero,
    Linear,
    LinearRelu,
}

impl OpKind {
    fn has_weights(self) -> bool {
        matches!(self, OpKind::Linear | OpKind::LinearRelu)
    }
}

/// Default operation menu for every edge.
pub const DEFAULT_OPS: [OpKind; 4] = [
    OpKind::Identity,
    OpKind::Zero,
    OpKind::Linear,
    OpKind::LinearRelu,
];

#[derive(Debug, Clone)]
struct Edge {
    from: usize,
    to: usize,
    /// One architecture parameter per menu operation.
    alpha: Vec<f64>,
    /// d x d matrix per weighted operation, None otherwise.
    weights: Vec<Option<Vec<f64>>>,
}

/// A cell over `n_nodes` intermediate nodes. Node 0 is the input; each
/// intermediate node sums softmax-mixed operations over all predecessors;
/// a linear head maps the last node to class logits.
#[derive(Debug, Clone)]
pub struct ToyCell {
    dim: usize,
    classes: usize,
    n_nodes: usize,
    ops: Vec<OpKind>,
    edges: Vec<Edge>,
    head_w: Vec<f64>,
    head_b: Vec<f64>,
}

/// Gradients in the same layout as the cell parameters.
#[derive(Debug, Clone)]
pub struct CellGrads {
    pub alpha: Vec<Vec<f64>>,
    weights: Vec<Vec<Option<Vec<f64>>>>,
    head_w: Vec<f64>,
    head_b: Vec<f64>,
}

impl ToyCell {
    pub fn new(
        dim: usize,
        classes: usize,
        n_nodes: usize,
        ops: &[OpKind],
        rng: &mut ChaCha8Rng,
    ) -> Result<ToyCell> {
        if dim == 0 || classes < 2 || n_nodes == 0 || ops.is_empty() {
            return Err(Error::invalid("cell dimensions must be positive"));
        }
        let mut edges = Vec::new();
        for to in 1..=n_nodes {
            for from in 0..to {
                let weights = ops
                    .iter()
                    .map(|op| {
                        op.has_weights().then(|| {
                            let bound = (6.0 / dim as f64).sqrt();
                            (0..dim * dim).map(|_| rng.gen_range(-bound..bound)).collect()
                        })
                    })
                    .collect();
                edges.push(Edge {
                    from,
                    to,
                    alpha: vec![0.0; ops.len()],
                    weights,
                });
            }
        }
        let bound = (6.0 / dim as f64).sqrt();
        Ok(ToyCell {
            dim,
            classes,
            n_nodes,
            ops: ops.to_vec(),
            edges,
            head_w: (0..classes * dim).map(|_| rng.gen_range(-bound..bound)).collect(),
            head_b: vec![0.0; classes],
        })
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn ops(&self) -> &[OpKind] {
        &self.ops
    }

    pub fn alpha(&self, edge: usize) -> &[f64] {
        &self.edges[edge].alpha
    }

    pub fn alpha_mut(&mut self, edge: usize) -> &mut [f64] {
        &mut self.edges[edge].alpha
    }

    /// Softmax mixture weights per edge.
    pub fn edge_probs(&self) -> Vec<Vec<f64>> {
        self.edges.iter().map(|e| softmax(&e.alpha)).collect()
    }

    fn apply_op(&self, edge: &Edge, op_idx: usize, input: &[f64]) -> Vec<f64> {
        match self.ops[op_idx] {
            OpKind::Identity => input.to_vec(),
            OpKind::Zero => vec![0.0; self.dim],
            OpKind::Linear | OpKind::LinearRelu => {
                let w = edge.weights[op_idx].as_ref().unwrap();
                let mut out = vec![0.0; self.dim];
                for (o, out_v) in out.iter_mut().enumerate() {
                    let row = &w[o * self.dim..(o + 1) * self.dim];
                    *out_v = row.iter().zip(input).map(|(a, b)| a * b).sum();
                }
                if self.ops[op_idx] == OpKind::LinearRelu {
                    for v in &mut out {
                        *v = v.max(0.0);
                    }
                }
                out
            }
        }
    }

    /// Node activations under explicit mixture probabilities (softmax of
    /// alpha for the continuous cell, one-hot for a derived one).
    fn node_activations(&self, x: &[f64], probs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut phi: Vec<Vec<f64>> = Vec::with_capacity(self.n_nodes + 1);
        phi.push(x.to_vec());
        for node in 1..=self.n_nodes {
            let mut acc = vec![0.0; self.dim];
            for (ei, edge) in self.edges.iter().enumerate() {
                if edge.to != node {
                    continue;
                }
                for (oi, &p) in probs[ei].iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let out = self.apply_op(edge, oi, &phi[edge.from]);
                    for (a, o) in acc.iter_mut().zip(&out) {
                        *a += p * o;
                    }
                }
            }
            phi.push(acc);
        }
        phi
    }

    /// Mixed-operation forward pass: all node activations plus class logits.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let probs = self.edge_probs();
        self.forward_with_probs(x, &probs)
    }

    fn forward_with_probs(&self, x: &[f64], probs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let phi = self.node_activations(x, probs);
        if phi.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cell activation".into()));
        }
        let logits = self.head(&phi[self.n_nodes]);
        Ok((phi, logits))
    }

    fn head(&self, repr: &[f64]) -> Vec<f64> {
        let mut logits = self.head_b.clone();
        for (c, l) in logits.iter_mut().enumerate() {
            let row = &self.head_w[c * self.dim..(c + 1) * self.dim];
            *l += row.iter().zip(repr).map(|(a, b)| a * b).sum::<f64>();
        }
        logits
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let (_, logits) = self.forward(x)?;
        Ok(argmax(&logits))
    }

    pub fn batch_loss(&self, batch: &[(Vec<f64>, usize)]) -> Result<f64> {
        let probs = self.edge_probs();
        self.batch_loss_with_probs(batch, &probs)
    }

    fn batch_loss_with_probs(&self, batch: &[(Vec<f64>, usize)], probs: &[Vec<f64>]) -> Result<f64> {
        let mut total = 0.0;
        for (x, y) in batch {
            let (_, logits) = self.forward_with_probs(x, probs)?;
            total += cross_entropy(&logits, *y);
        }
        Ok(total / batch.len() as f64)
    }

    fn zero_grads(&self) -> CellGrads {
        CellGrads {
            alpha: self.edges.iter().map(|e| vec![0.0; e.alpha.len()]).collect(),
            weights: self
                .edges
                .iter()
                .map(|e| {
                    e.weights
                        .iter()
                        .map(|w| w.as_ref().map(|m| vec![0.0; m.len()]))
                        .collect()
                })
                .collect(),
            head_w: vec![0.0; self.head_w.len()],
            head_b: vec![0.0; self.head_b.len()],
        }
    }

    /// Mean loss and gradients w.r.t. both the operation weights and the
    /// architecture parameters. `probs_override` replaces the softmax
    /// mixture (used when training a derived one-hot cell; alpha gradients
    /// are meaningless there and left at zero).
    pub fn batch_loss_and_grads(
        &self,
        batch: &[(Vec<f64>, usize)],
        probs_override: Option<&[Vec<f64>]>,
    ) -> Result<(f64, CellGrads)> {
        let softmax_probs;
        let (probs, alpha_path) = match probs_override {
            Some(p) => (p, false),
            None => {
                softmax_probs = self.edge_probs();
                (softmax_probs.as_slice(), true)
            }
        };
        let mut grads = self.zero_grads();
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;

        for (x, y) in batch {
            let phi = self.node_activations(x, probs);
            let repr = &phi[self.n_nodes];
            let logits = self.head(repr);
            if logits.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("cell logits".into()));
            }
            total += cross_entropy(&logits, *y);

            let mut delta = softmax(&logits);
            delta[*y] -= 1.0;

            // head grads and gradient at the last node
            let mut node_grads: Vec<Vec<f64>> = vec![vec![0.0; self.dim]; self.n_nodes + 1];
            for (c, &d) in delta.iter().enumerate() {
                grads.head_b[c] += d * scale;
                let row = &mut grads.head_w[c * self.dim..(c + 1) * self.dim];
                for (g, r) in row.iter_mut().zip(repr) {
                    *g += d * r * scale;
                }
                let wrow = &self.head_w[c * self.dim..(c + 1) * self.dim];
                for (ng, w) in node_grads[self.n_nodes].iter_mut().zip(wrow) {
                    *ng += d * w;
                }
            }

            // reverse pass over nodes
            for node in (1..=self.n_nodes).rev() {
                let g_node = node_grads[node].clone();
                for (ei, edge) in self.edges.iter().enumerate() {
                    if edge.to != node {
                        continue;
                    }
                    let input = &phi[edge.from];
                    // per-op outputs and their inner products with g_node
                    let outs: Vec<Vec<f64>> = (0..self.ops.len())
                        .map(|oi| self.apply_op(edge, oi, input))
                        .collect();
                    let scores: Vec<f64> = outs
                        .iter()
                        .map(|o| o.iter().zip(&g_node).map(|(a, b)| a * b).sum())
                        .collect();
                    if alpha_path {
                        let p = &probs[ei];
                        let mixed: f64 = p.iter().zip(&scores).map(|(a, b)| a * b).sum();
                        for (oi, ga) in grads.alpha[ei].iter_mut().enumerate() {
                            *ga += p[oi] * (scores[oi] - mixed) * scale;
                        }
                    }
                    for (oi, op) in self.ops.iter().enumerate() {
                        let p = probs[ei][oi];
                        if p == 0.0 {
                            continue;
                        }
                        match op {
                            OpKind::Identity => {
                                for (gi, gn) in node_grads[edge.from].iter_mut().zip(&g_node) {
                                    *gi += p * gn;
                                }
                            }
                            OpKind::Zero => {}
                            OpKind::Linear | OpKind::LinearRelu => {
                                let w = edge.weights[oi].as_ref().unwrap();
                                // upstream gradient masked by relu where active
                                let masked: Vec<f64> = if *op == OpKind::LinearRelu {
                                    outs[oi]
                                        .iter()
                                        .zip(&g_node)
                                        .map(|(&o, &g)| if o > 0.0 { g } else { 0.0 })
                                        .collect()
                                } else {
                                    g_node.clone()
                                };
                                let gw = grads.weights[ei][oi].as_mut().unwrap();
                                for (o, &m) in masked.iter().enumerate() {
                                    if m == 0.0 {
                                        continue;
                                    }
                                    let row = &mut gw[o * self.dim..(o + 1) * self.dim];
                                    for (g, inp) in row.iter_mut().zip(input) {
                                        *g += p * m * inp * scale;
                                    }
                                }
                                for i in 0..self.dim {
                                    let mut acc = 0.0;
                                    for (o, &m) in masked.iter().enumerate() {
                                        acc += m * w[o * self.dim + i];
                                    }
                                    node_grads[edge.from][i] += p * acc;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok((total * scale, grads))
    }

    /// Plain gradient step on the operation weights and head.
    pub fn step_weights(&mut self, grads: &CellGrads, lr: f64) {
        for (edge, gw) in self.edges.iter_mut().zip(&grads.weights) {
            for (w, g) in edge.weights.iter_mut().zip(gw) {
                if let (Some(w), Some(g)) = (w.as_mut(), g.as_ref()) {
                    for (wv, gv) in w.iter_mut().zip(g) {
                        *wv -= lr * gv;
                    }
                }
            }
        }
        for (w, g) in self.head_w.iter_mut().zip(&grads.head_w) {
            *w -= lr * g;
        }
        for (b, g) in self.head_b.iter_mut().zip(&grads.head_b) {
            *b -= lr * g;
        }
    }

    /// Plain gradient step on the architecture parameters.
    pub fn step_alpha(&mut self, alpha_grads: &[Vec<f64>], lr: f64) {
        for (edge, g) in self.edges.iter_mut().zip(alpha_grads) {
            for (a, gv) in edge.alpha.iter_mut().zip(g) {
                *a -= lr * gv;
            }
        }
    }

    /// Alternating first-order update: architecture parameters descend the
    /// validation-loss gradient, then weights descend the training-loss
    /// gradient.
    pub fn darts_step(
        &mut self,
        train_batch: &[(Vec<f64>, usize)],
        val_batch: &[(Vec<f64>, usize)],
        lr_w: f64,
        lr_alpha: f64,
    ) -> Result<()> {
        let (_, val_grads) = self.batch_loss_and_grads(val_batch, None)?;
        self.step_alpha(&val_grads.alpha, lr_alpha);
        let (_, train_grads) = self.batch_loss_and_grads(train_batch, None)?;
        self.step_weights(&train_grads, lr_w);
        Ok(())
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Argmax operation per edge; exact ties resolve to the lowest menu index.
pub fn derive_architecture(cell: &ToyCell) -> Vec<usize> {
    cell.edges.iter().map(|e| argmax(&e.alpha)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffNasConfig {
    /// Minibatches accumulated per architecture update.
    pub k: usize,
    /// Search epochs T.
    pub epochs: usize,
    /// Minibatches per epoch B.
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub lr_w: f64,
    pub lr_alpha: f64,
    pub seed: u64,
    /// Budget for retraining each derived architecture from scratch.
    pub retrain_epochs: usize,
    pub retrain_lr: f64,
}

impl DiffNasConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0
            || self.epochs == 0
            || self.batches_per_epoch == 0
            || self.batch_size == 0
            || self.retrain_epochs == 0
        {
            return Err(Error::invalid("all diffnas sizes must be positive"));
        }
        if self.k > self.epochs * self.batches_per_epoch {
            return Err(Error::invalid(format!(
                "K={} exceeds total minibatches BT={}",
                self.k,
                self.epochs * self.batches_per_epoch
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiffNasStep {
    pub step: usize,
    pub derived_encoding: Vec<usize>,
    pub retrain_test_acc: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiffNasTrace {
    pub steps: Vec<DiffNasStep>,
    pub alpha_updates: usize,
    pub w_updates: usize,
    pub final_encoding: Vec<usize>,
}

fn draw_batch(
    data: &SyntheticDataset,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(Vec<f64>, usize)> {
    let n = data.train.len();
    let k = batch_size.min(n);
    sample(rng, n, k).iter().map(|i| data.train[i].clone()).collect()
}

/// Runs the training-speed-driven search: each outer step first descends the
/// architecture parameters along the accumulated training-loss gradient of
/// the previous window (a no-op on the first step, where the accumulator is
/// zero), then consumes K minibatches of weight updates while accumulating
/// the un-normalized sum of per-minibatch architecture gradients.
pub fn darts_tse_run(
    cell: &mut ToyCell,
    data: &SyntheticDataset,
    cfg: &DiffNasConfig,
) -> Result<DiffNasTrace> {
    cfg.validate()?;
    if data.dim != cell.dim {
        return Err(Error::invalid("dataset dim does not match cell"));
    }
    let total = cfg.epochs * cfg.batches_per_epoch;
    let outer_steps = total / cfg.k;
    let mut accumulator: Vec<Vec<f64>> =
        (0..cell.n_edges()).map(|e| vec![0.0; cell.alpha(e).len()]).collect();
    let mut batch_rng = stream_rng(cfg.seed, "diffnas/batch", 0);

    let mut trace = DiffNasTrace {
        steps: Vec::with_capacity(outer_steps),
        alpha_updates: 0,
        w_updates: 0,
        final_encoding: Vec::new(),
    };

    for step in 1..=outer_steps {
        cell.step_alpha(&accumulator, cfg.lr_alpha);
        trace.alpha_updates += 1;
        for acc in &mut accumulator {
            for v in acc.iter_mut() {
                *v = 0.0;
            }
        }
        for _ in 0..cfg.k {
            let batch = draw_batch(data, cfg.batch_size, &mut batch_rng);
            let (_, grads) = cell.batch_loss_and_grads(&batch, None)?;
            cell.step_weights(&grads, cfg.lr_w);
            trace.w_updates += 1;
            for (acc, g) in accumulator.iter_mut().zip(&grads.alpha) {
                for (a, gv) in acc.iter_mut().zip(g) {
                    *a += gv;
                }
            }
        }
        let encoding = derive_architecture(cell);
        let acc = retrain_derived(cell, &encoding, data, cfg, step as u64)?;
        trace.steps.push(DiffNasStep {
            step,
            derived_encoding: encoding,
            retrain_test_acc: acc,
        });
    }
    trace.final_encoding = derive_architecture(cell);
    Ok(trace)
}

/// Trains a fresh copy of the discrete architecture from scratch for a fixed
/// small budget and returns its test accuracy.
pub fn retrain_derived(
    template: &ToyCell,
    encoding: &[usize],
    data: &SyntheticDataset,
    cfg: &DiffNasConfig,
    stream_index: u64,
) -> Result<f64> {
    let mut rng = stream_rng(cfg.seed, "diffnas/retrain", stream_index);
    let mut cell = ToyCell::new(
        template.dim,
        template.classes,
        template.n_nodes,
        &template.ops,
        &mut rng,
    )?;
    let probs: Vec<Vec<f64>> = encoding
        .iter()
        .map(|&sel| {
            let mut p = vec![0.0; cell.ops.len()];
            p[sel] = 1.0;
            p
        })
        .collect();
    let mut batch_rng = stream_rng(cfg.seed, "diffnas/retrain-batch", stream_index);
    for _ in 0..cfg.retrain_epochs {
        for _ in 0..cfg.batches_per_epoch {
            let batch = draw_batch(data, cfg.batch_size, &mut batch_rng);
            let (_, grads) = cell.batch_loss_and_grads(&batch, Some(&probs))?;
            cell.step_weights(&grads, cfg.retrain_lr);
        }
    }
    let correct = data
        .test
        .iter()
        .filter(|(x, y)| {
            let phi = cell.node_activations(x, &probs);
            argmax(&cell.head(&phi[cell.n_nodes])) == *y
        })
        .count();
    Ok(correct as f64 / data.test.len() as f64)
}
