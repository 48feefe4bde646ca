//! Dataset splitting, the training loop and evaluation metrics.

use std::fs;
use std::io::Write;
use std::path::Path;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Params, RecognizerModel};
use crate::nn::{optimizer_step, OptimizerConfig, OptimizerState};
use crate::rng::{derive_seed, SplitMix64};
use crate::synth::{augment, AugmentSpec, GestureClass, GestureSequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub augment: Option<AugmentSpec>,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            optimizer: OptimizerConfig::default(),
            augment: Some(AugmentSpec::default()),
            seed: 42,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::domain("train config", "epochs and batch_size must be >= 1"));
        }
        self.optimizer.validate()?;
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }
}

/// Seed for the initial weights of a model trained under `seed`.
pub fn init_seed(seed: u64) -> u64 {
    derive_seed(seed, &[0x696e6974])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_train_loss: f64,
    /// Accuracy of the training-mode passes themselves (dropout and augmentation on).
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub count: usize,
    pub mean_loss: f64,
    pub accuracy: f64,
    /// Rows are true classes, columns predictions.
    pub confusion: Vec<Vec<usize>>,
    /// `None` for a class that was never predicted.
    pub precision: Vec<Option<f64>>,
    /// `None` for a class absent from the data.
    pub recall: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub epochs: Vec<EpochRecord>,
    pub evaluation: Option<Evaluation>,
}

impl Metrics {
    /// One epoch record per line, then a final line with the evaluation.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.epochs {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        if let Some(e) = &self.evaluation {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl()?.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Stratified split. Per class, the sequence indices are shuffled with a
/// class-derived seed and the first `ceil(n * val_fraction)` go to
/// validation. Both outputs keep the input order.
pub fn split(
    dataset: &[GestureSequence],
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<GestureSequence>, Vec<GestureSequence>)> {
    if dataset.is_empty() {
        return Err(Error::domain("dataset", "empty"));
    }
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::domain("val_fraction", format!("{val_fraction} not in (0, 1)")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); GestureClass::ALL.len()];
    for (i, s) in dataset.iter().enumerate() {
        by_class[s.label.id()].push(i);
    }
    let mut is_val = vec![false; dataset.len()];
    for (class, idx) in by_class.iter_mut().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 2 {
            return Err(Error::domain(
                "dataset",
                format!("class {} has {} sequence; need at least 2 to split", GestureClass::ALL[class], idx.len()),
            ));
        }
        SplitMix64::new(derive_seed(seed, &[class as u64])).shuffle(idx);
        let n_val = (idx.len() as f64 * val_fraction).ceil() as usize;
        for &i in &idx[..n_val] {
            is_val[i] = true;
        }
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (s, v) in dataset.iter().zip(is_val) {
        if v { &mut val } else { &mut train }.push(s.clone());
    }
    Ok((train, val))
}

fn check_labels(model: &RecognizerModel, data: &[GestureSequence]) -> Result<()> {
    if let Some(s) = data.iter().find(|s| s.label.id() >= model.class_count()) {
        return Err(Error::domain(
            "dataset",
            format!("label {} outside the model's {} classes", s.label, model.class_count()),
        ));
    }
    Ok(())
}

/// Mini-batch training. Gradients are summed serially in batch order so a
/// run is a pure function of (model, data, config).
pub fn train(
    model: &RecognizerModel,
    train_set: &[GestureSequence],
    val_set: &[GestureSequence],
    config: &TrainConfig,
) -> Result<(RecognizerModel, Metrics)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::domain("dataset", "training set is empty"));
    }
    check_labels(model, train_set)?;
    check_labels(model, val_set)?;
    let mut model = model.clone();
    let mut opt = OptimizerState::new(model.params.tensors());
    let mut grads = Params::zeros(&model.config);
    let mut metrics = Metrics::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..config.epochs {
        if config.shuffle {
            SplitMix64::new(derive_seed(config.seed, &[epoch as u64, 0x73687566])).shuffle(&mut order);
        }
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            grads.scale(0.0);
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &idx in chunk {
                let tag = [epoch as u64, idx as u64];
                let augmented;
                let seq = match &config.augment {
                    Some(spec) => {
                        augmented = augment(&train_set[idx], spec, derive_seed(config.seed, &[tag[0], tag[1], 0]))?;
                        debug_assert_eq!(augmented.label, train_set[idx].label);
                        &augmented
                    }
                    None => &train_set[idx],
                };
                let dropout_seed = derive_seed(config.seed, &[tag[0], tag[1], 1]);
                let (loss, predicted) = model.accumulate_gradients(seq, true, dropout_seed, scale, &mut grads)?;
                batch_loss += loss;
                correct += usize::from(predicted == seq.label.id());
            }
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            loss_sum += batch_loss;
            let g = grads.tensors();
            optimizer_step(&mut model.params.tensors_mut(), &g, &mut opt, &config.optimizer)?;
        }
        let val_accuracy = if val_set.is_empty() {
            None
        } else {
            Some(evaluate_set(&model, val_set)?.accuracy)
        };
        let record = EpochRecord {
            epoch,
            mean_train_loss: loss_sum / train_set.len() as f64,
            train_accuracy: correct as f64 / train_set.len() as f64,
            val_accuracy,
        };
        info!(
            "epoch {} loss {:.4} train_acc {:.3} val_acc {}",
            epoch,
            record.mean_train_loss,
            record.train_accuracy,
            val_accuracy.map_or("-".into(), |a| format!("{a:.3}"))
        );
        metrics.epochs.push(record);
    }
    if !val_set.is_empty() {
        metrics.evaluation = Some(evaluate_set(&model, val_set)?);
    }
    Ok((model, metrics))
}

fn evaluate_set(model: &RecognizerModel, data: &[GestureSequence]) -> Result<Evaluation> {
    let c = model.class_count();
    let mut confusion = vec![vec![0usize; c]; c];
    let mut loss = 0.0;
    for seq in data {
        let pred = model.predict(seq)?;
        loss += -pred.probs[seq.label.id()].max(1e-300).ln();
        confusion[seq.label.id()][pred.class_id] += 1;
    }
    debug!("evaluated {} sequences", data.len());
    Ok(summarize(confusion, loss / data.len() as f64))
}

fn summarize(confusion: Vec<Vec<usize>>, mean_loss: f64) -> Evaluation {
    let c = confusion.len();
    let count: usize = confusion.iter().flatten().sum();
    let trace: usize = (0..c).map(|k| confusion[k][k]).sum();
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let precision = (0..c)
        .map(|k| ratio(confusion[k][k], (0..c).map(|r| confusion[r][k]).sum()))
        .collect();
    let recall = (0..c).map(|k| ratio(confusion[k][k], confusion[k].iter().sum())).collect();
    Evaluation {
        count,
        mean_loss,
        accuracy: trace as f64 / count as f64,
        confusion,
        precision,
        recall,
    }
}

/// Accuracy, mean loss of the aggregated probabilities, and the confusion matrix.
pub fn evaluate(model: &RecognizerModel, dataset: &[GestureSequence]) -> Result<Metrics> {
    if dataset.is_empty() {
        return Err(Error::domain("dataset", "empty"));
    }
    check_labels(model, dataset)?;
    Ok(Metrics {
        epochs: Vec::new(),
        evaluation: Some(evaluate_set(model, dataset)?),
    })
}
