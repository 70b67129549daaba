//! Learning-curve data model and the JSON-lines benchmark file format.
//!
//! A benchmark file is UTF-8 JSON lines: the first line is a `meta` object
//! declaring the shared epoch count `t_end` and minibatches-per-epoch `B`,
//! every following line is one architecture record. Per-epoch arrays are
//! 0-based on the wire; formulas and docs index epochs from 1.

use std::collections::BTreeMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-minibatch training losses by epoch, plus per-epoch validation metrics
/// and the final test accuracy of the fully trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    /// `mtl[t][i]` is the loss of minibatch `i+1` at epoch `t+1`.
    #[serde(rename = "mtl")]
    pub minibatch_train_losses: Vec<Vec<f64>>,
    #[serde(rename = "val_loss")]
    pub epoch_val_loss: Option<Vec<f64>>,
    #[serde(rename = "val_acc")]
    pub epoch_val_acc: Vec<f64>,
    #[serde(rename = "test_acc")]
    pub final_test_acc: f64,
}

impl LearningCurve {
    pub fn new(
        minibatch_train_losses: Vec<Vec<f64>>,
        epoch_val_loss: Option<Vec<f64>>,
        epoch_val_acc: Vec<f64>,
        final_test_acc: f64,
    ) -> Result<Self> {
        let curve = LearningCurve {
            minibatch_train_losses,
            epoch_val_loss,
            epoch_val_acc,
            final_test_acc,
        };
        curve.validate()?;
        Ok(curve)
    }

    /// Total epochs trained.
    pub fn t_end(&self) -> usize {
        self.minibatch_train_losses.len()
    }

    /// Minibatches per epoch.
    pub fn batches_per_epoch(&self) -> usize {
        self.minibatch_train_losses
            .first()
            .map(Vec::len)
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let t_end = self.t_end();
        if t_end == 0 {
            return Err(Error::invalid("curve has no epochs"));
        }
        let b = self.batches_per_epoch();
        if b == 0 {
            return Err(Error::invalid("epoch with zero minibatches"));
        }
        for (t, epoch) in self.minibatch_train_losses.iter().enumerate() {
            if epoch.len() != b {
                return Err(Error::invalid(format!(
                    "epoch {} has {} minibatches, expected {}",
                    t + 1,
                    epoch.len(),
                    b
                )));
            }
            for (i, &loss) in epoch.iter().enumerate() {
                if !loss.is_finite() || loss < 0.0 {
                    return Err(Error::invalid(format!(
                        "non-finite or negative loss {loss} at epoch {} minibatch {}",
                        t + 1,
                        i + 1
                    )));
                }
            }
        }
        if self.epoch_val_acc.len() != t_end {
            return Err(Error::invalid(format!(
                "epoch_val_acc length {} != t_end {}",
                self.epoch_val_acc.len(),
                t_end
            )));
        }
        for &acc in &self.epoch_val_acc {
            if !(0.0..=1.0).contains(&acc) {
                return Err(Error::invalid(format!("val accuracy {acc} outside [0,1]")));
            }
        }
        if let Some(val_loss) = &self.epoch_val_loss {
            if val_loss.len() != t_end {
                return Err(Error::invalid(format!(
                    "epoch_val_loss length {} != t_end {}",
                    val_loss.len(),
                    t_end
                )));
            }
            for &l in val_loss {
                if !l.is_finite() || l < 0.0 {
                    return Err(Error::invalid(format!(
                        "non-finite or negative validation loss {l}"
                    )));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.final_test_acc) {
            return Err(Error::invalid(format!(
                "final_test_acc {} outside [0,1]",
                self.final_test_acc
            )));
        }
        Ok(())
    }

    /// View of the first `t` epochs; the final test accuracy is preserved.
    pub fn truncate(&self, t: usize) -> Result<LearningCurve> {
        if t < 1 || t > self.t_end() {
            return Err(Error::invalid(format!(
                "T={t} out of range [1, {}]",
                self.t_end()
            )));
        }
        Ok(LearningCurve {
            minibatch_train_losses: self.minibatch_train_losses[..t].to_vec(),
            epoch_val_loss: self.epoch_val_loss.as_ref().map(|v| v[..t].to_vec()),
            epoch_val_acc: self.epoch_val_acc[..t].to_vec(),
            final_test_acc: self.final_test_acc,
        })
    }

    /// Mean minibatch loss per epoch: `(1/B) Σ_i loss(t, i)` for each epoch t.
    pub fn epoch_sums(&self) -> Vec<f64> {
        let b = self.batches_per_epoch() as f64;
        self.minibatch_train_losses
            .iter()
            .map(|epoch| epoch.iter().sum::<f64>() / b)
            .collect()
    }
}

/// One architecture with its encoding and one learning curve per training seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureRecord {
    pub arch_id: String,
    pub encoding: Vec<usize>,
    pub seeds: BTreeMap<u64, LearningCurve>,
}

impl ArchitectureRecord {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidRecord {
                arch_id: self.arch_id.clone(),
                message: "no seeds".into(),
            });
        }
        let mut shape: Option<(usize, usize)> = None;
        for curve in self.seeds.values() {
            curve.validate().map_err(|e| Error::InvalidRecord {
                arch_id: self.arch_id.clone(),
                message: e.to_string(),
            })?;
            let this = (curve.t_end(), curve.batches_per_epoch());
            match shape {
                None => shape = Some(this),
                Some(expected) if expected != this => {
                    return Err(Error::InvalidRecord {
                        arch_id: self.arch_id.clone(),
                        message: format!(
                            "seed curves disagree on (t_end, B): {expected:?} vs {this:?}"
                        ),
                    });
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Final test accuracy averaged over seeds.
    pub fn mean_test_acc(&self) -> f64 {
        let sum: f64 = self.seeds.values().map(|c| c.final_test_acc).sum();
        sum / self.seeds.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkMeta {
    pub name: String,
    pub t_end: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkDataset {
    pub metadata: BenchmarkMeta,
    pub records: Vec<ArchitectureRecord>,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Meta(BenchmarkMeta),
    Record(ArchitectureRecord),
}

// Parsed by hand instead of an internally tagged enum: serde's tag buffering
// turns integer map keys (the seeds) into strings it can no longer decode.
fn parse_line(line: &str) -> serde_json::Result<Line> {
    use serde::de::Error as _;
    let value: serde_json::Value = serde_json::from_str(line)?;
    match value.get("kind").and_then(serde_json::Value::as_str) {
        Some("meta") => Ok(Line::Meta(serde_json::from_value(value)?)),
        Some("record") => Ok(Line::Record(serde_json::from_value(value)?)),
        other => Err(serde_json::Error::custom(format!(
            "unknown line kind {other:?}"
        ))),
    }
}

impl BenchmarkDataset {
    pub fn new(metadata: BenchmarkMeta, records: Vec<ArchitectureRecord>) -> Result<Self> {
        let dataset = BenchmarkDataset { metadata, records };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::InvalidBenchmark("no records".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for record in &self.records {
            if !seen.insert(record.arch_id.as_str()) {
                return Err(Error::InvalidBenchmark(format!(
                    "duplicate arch_id {}",
                    record.arch_id
                )));
            }
            record.validate()?;
            for curve in record.seeds.values() {
                if curve.t_end() != self.metadata.t_end {
                    return Err(Error::InvalidRecord {
                        arch_id: record.arch_id.clone(),
                        message: format!(
                            "t_end {} != declared {}",
                            curve.t_end(),
                            self.metadata.t_end
                        ),
                    });
                }
                if curve.batches_per_epoch() != self.metadata.b {
                    return Err(Error::InvalidRecord {
                        arch_id: record.arch_id.clone(),
                        message: format!(
                            "B {} != declared {}",
                            curve.batches_per_epoch(),
                            self.metadata.b
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn record(&self, arch_id: &str) -> Option<&ArchitectureRecord> {
        self.records.iter().find(|r| r.arch_id == arch_id)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        let mut write_line = |line: &Line| -> Result<()> {
            let json = serde_json::to_string(line).expect("benchmark line serializes");
            writeln!(w, "{json}").map_err(|e| Error::io(path.display().to_string(), e))
        };
        write_line(&Line::Meta(self.metadata.clone()))?;
        for record in &self.records {
            write_line(&Line::Record(record.clone()))?;
        }
        Ok(())
    }
}

pub fn load_benchmark(path: impl AsRef<Path>) -> Result<BenchmarkDataset> {
    let path = path.as_ref();
    let file =
        std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = std::io::BufReader::new(file);

    let mut metadata: Option<BenchmarkMeta> = None;
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = parse_line(&line)
            .map_err(|e| Error::MalformedLine { line: idx + 1, source: e })?;
        match parsed {
            Line::Meta(meta) => {
                if metadata.is_some() {
                    return Err(Error::InvalidBenchmark(format!(
                        "duplicate meta line at line {}",
                        idx + 1
                    )));
                }
                if idx != 0 {
                    return Err(Error::InvalidBenchmark(
                        "meta line must come first".into(),
                    ));
                }
                metadata = Some(meta);
            }
            Line::Record(record) => {
                if metadata.is_none() {
                    return Err(Error::InvalidBenchmark(
                        "record before meta line".into(),
                    ));
                }
                records.push(record);
            }
        }
    }
    let metadata = metadata.ok_or_else(|| Error::InvalidBenchmark("missing meta line".into()))?;
    BenchmarkDataset::new(metadata, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(mtl: Vec<Vec<f64>>, test_acc: f64) -> LearningCurve {
        let t = mtl.len();
        LearningCurve::new(mtl, None, vec![0.5; t], test_acc).unwrap()
    }

    pub(crate) fn toy_dataset() -> BenchmarkDataset {
        let mut seeds = BTreeMap::new();
        seeds.insert(0, curve(vec![vec![1.0, 0.8], vec![0.6, 0.4]], 0.9));
        let rec_a = ArchitectureRecord {
            arch_id: "a".into(),
            encoding: vec![0],
            seeds,
        };
        let mut seeds = BTreeMap::new();
        seeds.insert(0, curve(vec![vec![2.0, 1.8], vec![1.6, 1.4]], 0.7));
        let rec_b = ArchitectureRecord {
            arch_id: "b".into(),
            encoding: vec![1],
            seeds,
        };
        BenchmarkDataset::new(
            BenchmarkMeta {
                name: "toy".into(),
                t_end: 2,
                b: 2,
                notes: String::new(),
            },
            vec![rec_a, rec_b],
        )
        .unwrap()
    }

    #[test]
    fn epoch_sums_are_means() {
        let c = curve(vec![vec![1.0, 0.8], vec![0.6, 0.4]], 0.9);
        assert_eq!(c.epoch_sums(), vec![0.9, 0.5]);
        let single = curve(vec![vec![2.0]], 0.5);
        assert_eq!(single.epoch_sums(), vec![2.0]);
    }

    #[test]
    fn epoch_sums_of_constant_loss() {
        let c = curve(vec![vec![0.3; 5]; 4], 0.5);
        for s in c.epoch_sums() {
            assert!((s - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn truncate_prefix_and_identity() {
        let c = curve(vec![vec![1.0], vec![0.8], vec![0.6], vec![0.4]], 0.9);
        let t2 = c.truncate(2).unwrap();
        assert_eq!(t2.t_end(), 2);
        assert_eq!(t2.epoch_sums(), vec![1.0, 0.8]);
        assert_eq!(t2.final_test_acc, 0.9);
        assert_eq!(c.truncate(4).unwrap(), c);
        assert!(c.truncate(0).is_err());
        assert!(c.truncate(5).is_err());
    }

    #[test]
    fn truncate_commutes_with_epoch_sums() {
        let c = curve(
            vec![vec![1.0, 0.7], vec![0.6, 0.5], vec![0.3, 0.2]],
            0.9,
        );
        let full = c.epoch_sums();
        for t in 1..=3 {
            assert_eq!(c.truncate(t).unwrap().epoch_sums(), full[..t]);
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dataset = toy_dataset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.jsonl");
        dataset.save(&path).unwrap();
        let loaded = load_benchmark(&path).unwrap();
        assert_eq!(loaded, dataset);
        let bytes = std::fs::read(&path).unwrap();
        loaded.save(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
    }

    #[test]
    fn load_reports_line_number_on_malformed_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"kind\":\"meta\",\"name\":\"x\",\"t_end\":1,\"B\":1,\"notes\":\"\"}\nnot json\n",
        )
        .unwrap();
        match load_benchmark(&path) {
            Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed line error, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_epoch_count_mismatch() {
        let mut dataset = toy_dataset();
        dataset.metadata.t_end = 3;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.jsonl");
        dataset.save(&path).unwrap();
        match load_benchmark(&path) {
            Err(Error::InvalidRecord { arch_id, .. }) => assert_eq!(arch_id, "a"),
            other => panic!("expected invalid record error, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_empty_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(
            &path,
            "{\"kind\":\"meta\",\"name\":\"x\",\"t_end\":1,\"B\":1,\"notes\":\"\"}\n",
        )
        .unwrap();
        match load_benchmark(&path) {
            Err(Error::InvalidBenchmark(msg)) => assert!(msg.contains("no records")),
            other => panic!("expected no-records error, got {other:?}"),
        }
    }

    #[test]
    fn ragged_epochs_rejected() {
        assert!(LearningCurve::new(
            vec![vec![1.0, 0.5], vec![0.4]],
            None,
            vec![0.5, 0.5],
            0.9
        )
        .is_err());
    }
}
