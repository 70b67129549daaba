//! Desk-scale ground-truth generator: an enumerable MLP architecture space,
//! synthetic data, and a seeded SGD trainer that records real per-minibatch
//! learning curves.

mod data;
pub mod mlp;

pub use data::{make_synthetic_dataset, SyntheticDataset};
pub use mlp::{Activation, Mlp};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::{ArchitectureRecord, BenchmarkDataset, BenchmarkMeta, LearningCurve};
use crate::error::{Error, Result};
use crate::seeding::{stream_rng, stream_tag};

/// One small MLP: hidden widths (one per layer) and a network-wide activation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyArchSpec {
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
    /// Ordered categorical choices: one width-menu index per layer, then the
    /// activation index.
    pub encoding: Vec<usize>,
}

impl ToyArchSpec {
    pub fn arch_id(&self) -> String {
        let widths: Vec<String> = self.hidden_widths.iter().map(|w| w.to_string()).collect();
        format!(
            "mlp-d{}-w{}-{}",
            self.hidden_widths.len(),
            widths.join("x"),
            self.activation.name()
        )
    }

    pub fn depth(&self) -> usize {
        self.hidden_widths.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Constant,
    Cosine,
}

/// Fixed training protocol shared by every architecture in a benchmark.
/// All fields are required when read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub schedule: Schedule,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if self.learning_rate < 0.0 || self.momentum < 0.0 || self.weight_decay < 0.0 {
            return Err(Error::invalid(
                "learning_rate, momentum and weight_decay must be non-negative",
            ));
        }
        Ok(())
    }

    fn lr_at_epoch(&self, epoch: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.learning_rate,
            Schedule::Cosine => {
                let progress = (epoch - 1) as f64 / self.epochs as f64;
                self.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

/// Deterministic lexicographic enumeration: depth ascending, per-layer width
/// menu indices as an odometer, activation menu order innermost.
pub fn enumerate_toy_space(
    width_menu: &[usize],
    depth_range: (usize, usize),
    activations: &[Activation],
) -> Result<Vec<ToyArchSpec>> {
    let (min_depth, max_depth) = depth_range;
    if width_menu.is_empty() || activations.is_empty() {
        return Err(Error::invalid("empty width menu or activation set"));
    }
    if min_depth == 0 || min_depth > max_depth || max_depth > 4 {
        return Err(Error::invalid(format!(
            "depth range ({min_depth}, {max_depth}) must satisfy 1 <= min <= max <= 4"
        )));
    }
    if width_menu.iter().any(|&w| w == 0) {
        return Err(Error::invalid("widths must be positive"));
    }
    let mut specs = Vec::new();
    for depth in min_depth..=max_depth {
        let mut odometer = vec![0usize; depth];
        loop {
            for (act_idx, &activation) in activations.iter().enumerate() {
                let mut encoding = odometer.clone();
                encoding.push(act_idx);
                specs.push(ToyArchSpec {
                    hidden_widths: odometer.iter().map(|&i| width_menu[i]).collect(),
                    activation,
                    encoding,
                });
            }
            // advance odometer, least-significant position last
            let mut pos = depth;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                odometer[pos] += 1;
                if odometer[pos] < width_menu.len() {
                    break;
                }
                odometer[pos] = 0;
            }
            if odometer.iter().all(|&i| i == 0) {
                break;
            }
        }
    }
    Ok(specs)
}

/// Captured pre-update state of one SGD step: the flat parameter vector and
/// the indices of the minibatch it was about to consume.
pub struct StepSnapshot {
    pub params: Vec<f64>,
    pub batch_indices: Vec<usize>,
}

/// Trains one architecture and records its learning curve. Every recorded
/// minibatch loss is the pre-update loss, i.e. the loss whose gradient drives
/// that step.
pub fn train(
    arch: &ToyArchSpec,
    dataset: &SyntheticDataset,
    cfg: &TrainConfig,
) -> Result<LearningCurve> {
    train_impl(arch, dataset, cfg, None).map(|(c, _)| c)
}

/// Like [`train`], additionally capturing the pre-update parameter
/// trajectory for verification.
pub fn train_with_trajectory(
    arch: &ToyArchSpec,
    dataset: &SyntheticDataset,
    cfg: &TrainConfig,
) -> Result<(LearningCurve, Vec<StepSnapshot>)> {
    let mut snapshots = Vec::new();
    let (curve, _) = train_impl(arch, dataset, cfg, Some(&mut snapshots))?;
    Ok((curve, snapshots))
}

fn train_impl(
    arch: &ToyArchSpec,
    dataset: &SyntheticDataset,
    cfg: &TrainConfig,
    mut capture: Option<&mut Vec<StepSnapshot>>,
) -> Result<(LearningCurve, ())> {
    cfg.validate()?;
    if dataset.train[0].0.len() != dataset.dim {
        return Err(Error::invalid("dataset feature dim inconsistent"));
    }
    let n_batches = dataset.train.len() / cfg.batch_size;
    if n_batches == 0 {
        return Err(Error::invalid(format!(
            "batch_size {} exceeds n_train {}",
            cfg.batch_size,
            dataset.train.len()
        )));
    }

    let mut dims = Vec::with_capacity(arch.depth() + 2);
    dims.push(dataset.dim);
    dims.extend_from_slice(&arch.hidden_widths);
    dims.push(dataset.classes);

    let arch_tag = stream_tag(&arch.arch_id());
    let mut init_rng = stream_rng(cfg.seed, "train/init", arch_tag);
    let mut net = Mlp::new(&dims, arch.activation, &mut init_rng);
    let mut velocity = net.zero_velocity();

    let mut mtl = Vec::with_capacity(cfg.epochs);
    let mut val_loss = Vec::with_capacity(cfg.epochs);
    let mut val_acc = Vec::with_capacity(cfg.epochs);

    let mut indices: Vec<usize> = (0..dataset.train.len()).collect();
    for epoch in 1..=cfg.epochs {
        let lr = cfg.lr_at_epoch(epoch);
        let mut shuffle_rng = stream_rng(cfg.seed, "train/shuffle", epoch as u64);
        indices.shuffle(&mut shuffle_rng);

        let mut epoch_losses = Vec::with_capacity(n_batches);
        for batch_i in 0..n_batches {
            let batch_idx = &indices[batch_i * cfg.batch_size..(batch_i + 1) * cfg.batch_size];
            let batch: Vec<(Vec<f64>, usize)> = batch_idx
                .iter()
                .map(|&i| dataset.train[i].clone())
                .collect();
            if let Some(snapshots) = capture.as_deref_mut() {
                snapshots.push(StepSnapshot {
                    params: net.params_flat(),
                    batch_indices: batch_idx.to_vec(),
                });
            }
            let (loss, grads) = net.batch_loss_and_grad(&batch);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch} minibatch {}",
                    batch_i + 1
                )));
            }
            epoch_losses.push(loss);
            net.sgd_step(&grads, &mut velocity, lr, cfg.momentum, cfg.weight_decay);
        }
        mtl.push(epoch_losses);

        let vl = net.batch_loss(&dataset.val);
        if !vl.is_finite() {
            return Err(Error::NonFinite(format!("validation loss at epoch {epoch}")));
        }
        val_loss.push(vl);
        val_acc.push(accuracy(&net, &dataset.val));
    }

    let test_acc = accuracy(&net, &dataset.test);
    let curve = LearningCurve::new(mtl, Some(val_loss), val_acc, test_acc)?;
    Ok((curve, ()))
}

fn accuracy(net: &Mlp, split: &[(Vec<f64>, usize)]) -> f64 {
    let correct = split
        .iter()
        .filter(|(x, y)| net.predict(x) == *y)
        .count();
    correct as f64 / split.len() as f64
}

/// Trains every (arch, seed) pair and assembles a benchmark. Runs are
/// independent; results are keyed by arch_id so the output is identical for
/// any worker count.
pub fn build_toy_benchmark(
    space: &[ToyArchSpec],
    dataset: &SyntheticDataset,
    cfg: &TrainConfig,
    seeds: &[u64],
    name: &str,
) -> Result<BenchmarkDataset> {
    if space.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("empty architecture space or seed list"));
    }
    let jobs: Vec<(usize, u64)> = (0..space.len())
        .flat_map(|a| seeds.iter().map(move |&s| (a, s)))
        .collect();
    let curves: Vec<((usize, u64), Result<LearningCurve>)> = jobs
        .par_iter()
        .map(|&(a, seed)| {
            let run_cfg = TrainConfig { seed, ..cfg.clone() };
            ((a, seed), train(&space[a], dataset, &run_cfg))
        })
        .collect();

    let mut per_arch: BTreeMap<usize, BTreeMap<u64, LearningCurve>> = BTreeMap::new();
    for ((a, seed), curve) in curves {
        let curve = curve.map_err(|e| Error::Training {
            arch_id: space[a].arch_id(),
            seed,
            message: e.to_string(),
        })?;
        per_arch.entry(a).or_default().insert(seed, curve);
    }

    let records: Vec<ArchitectureRecord> = per_arch
        .into_iter()
        .map(|(a, seeds)| ArchitectureRecord {
            arch_id: space[a].arch_id(),
            encoding: space[a].encoding.clone(),
            seeds,
        })
        .collect();

    let b = dataset.train.len() / cfg.batch_size;
    BenchmarkDataset::new(
        BenchmarkMeta {
            name: name.to_string(),
            t_end: cfg.epochs,
            b,
            notes: format!(
                "synthetic {}-class dim-{} difficulty {} seed {}",
                dataset.classes, dataset.dim, dataset.difficulty, dataset.seed
            ),
        },
        records,
    )
}
