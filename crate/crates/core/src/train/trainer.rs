use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::cross_entropy;
use super::sgd::sgd_momentum_step;
use crate::data::{LabelImage, LabeledChip};
use crate::error::{Result, SaversError};
use crate::kernel::DropoutMode;
use crate::net::{pad_to_grid, ParamSet, SaversModel};
use crate::regions::LabelMap;
use crate::rng::{stream_rng, SaversRng, Stream};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Overrides the model's dropout rate when set.
    pub dropout_rate: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 10,
            batch_size: 8,
            seed: 0,
            dropout_rate: None,
        }
    }
}

impl TrainConfig {
    /// A zero learning rate is accepted (it freezes the parameters).
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(SaversError::Config(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(SaversError::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.epochs == 0 {
            return Err(SaversError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(SaversError::Config("batch_size must be >= 1".into()));
        }
        if let Some(rate) = self.dropout_rate {
            if !(0.0..1.0).contains(&rate) {
                return Err(SaversError::Config(format!("dropout_rate must be in [0, 1), got {rate}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    /// Pixel-weighted mean of the batch losses.
    pub mean_loss: f64,
    pub batch_losses: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub eval_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// 1-based epoch with the highest eval accuracy; ties go to the earlier epoch.
    pub fn best_epoch(&self) -> Option<usize> {
        let acc: Vec<f64> = self.records.iter().map(|r| r.eval_accuracy).collect();
        best_index(&acc).map(|i| self.records[i].epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,mean_train_loss,eval_accuracy\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{},{}", r.epoch, r.mean_train_loss, r.eval_accuracy);
        }
        s
    }
}

/// Index of the first maximum.
pub fn best_index(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// A training sample padded to the 16-pixel grid.
struct Prepared<'a> {
    image: std::borrow::Cow<'a, Tensor>,
    labels: std::borrow::Cow<'a, LabelImage>,
}

fn prepare(sample: &LabeledChip) -> Result<Prepared<'_>> {
    let (image, crop) = pad_to_grid(&sample.chip.image)?;
    if crop.is_identity() {
        return Ok(Prepared {
            image: std::borrow::Cow::Borrowed(&sample.chip.image),
            labels: std::borrow::Cow::Borrowed(&sample.label),
        });
    }
    // pad labels with the same reflection as the image
    let lm = &sample.label.labels;
    let as_tensor = Tensor::new(
        vec![1, lm.height(), lm.width()],
        lm.data().iter().map(|&v| v as f64).collect(),
    )?;
    let (padded, _) = pad_to_grid(&as_tensor)?;
    let labels = LabelMap::new(
        crop.padded_height,
        crop.padded_width,
        padded.data().iter().map(|&v| v as usize).collect(),
    )?;
    Ok(Prepared {
        image: std::borrow::Cow::Owned(image),
        labels: std::borrow::Cow::Owned(LabelImage::new(labels, sample.label.num_classes)?),
    })
}

/// Mutable training state: the model, momentum buffers and the shuffle and
/// dropout random streams.
pub struct Trainer {
    model: SaversModel,
    velocity: ParamSet,
    config: TrainConfig,
    shuffle_rng: SaversRng,
    dropout_rng: SaversRng,
}

impl Trainer {
    pub fn new(mut model: SaversModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if let Some(rate) = config.dropout_rate {
            model.set_dropout_rate(rate)?;
        }
        Ok(Trainer {
            velocity: ParamSet::zeros_like(model.params()),
            shuffle_rng: stream_rng(config.seed, Stream::Shuffle),
            dropout_rng: stream_rng(config.seed, Stream::Dropout),
            model,
            config,
        })
    }

    pub fn model(&self) -> &SaversModel {
        &self.model
    }

    pub fn into_model(self) -> SaversModel {
        self.model
    }

    /// Loss and parameter gradient of one batch, without updating.
    pub fn batch_gradient(&mut self, batch: &[&LabeledChip]) -> Result<(f64, ParamSet)> {
        let prepared = batch.iter().map(|s| prepare(s)).collect::<Result<Vec<_>>>()?;
        let total_pixels: usize = prepared.iter().map(|p| p.labels.labels.data().len()).sum();
        let mut grads = ParamSet::zeros_like(self.model.params());
        let mut loss = 0.0;
        // fixed sample order keeps the accumulation deterministic
        for p in &prepared {
            let pass = self.model.forward(&p.image, DropoutMode::Train, &mut self.dropout_rng)?;
            let (l, mut g) = cross_entropy(&pass.score_map, &p.labels)?;
            let weight = l.pixel_count as f64 / total_pixels as f64;
            loss += weight * l.value;
            g.scale(weight);
            let sample_grads = self.model.backward(&pass.cache, &g, None)?;
            grads.axpy(1.0, &sample_grads)?;
        }
        Ok((loss, grads))
    }

    /// One optimisation step on `batch`; returns the batch loss before the update.
    pub fn step(&mut self, batch: &[&LabeledChip]) -> Result<f64> {
        let (loss, grads) = self.batch_gradient(batch)?;
        sgd_momentum_step(
            self.model.params_mut(),
            &grads,
            &mut self.velocity,
            self.config.learning_rate,
            self.config.momentum,
        )?;
        if !self.model.params().is_finite() {
            return Err(SaversError::Data(format!(
                "parameters diverged to non-finite values (batch loss {loss}); lower the learning rate"
            )));
        }
        Ok(loss)
    }

    /// Shuffles `dataset` and runs one pass of mini-batch steps over it; the
    /// final batch may be smaller than `batch_size`.
    pub fn train_epoch(&mut self, dataset: &[LabeledChip]) -> Result<EpochReport> {
        if dataset.is_empty() {
            return Err(SaversError::Config("training set is empty".into()));
        }
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut self.shuffle_rng);
        let mut batch_losses = Vec::new();
        let mut weighted = 0.0;
        let mut pixels = 0usize;
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<&LabeledChip> = chunk.iter().map(|&i| &dataset[i]).collect();
            let n: usize = batch.iter().map(|s| s.label.labels.data().len()).sum();
            let loss = self.step(&batch)?;
            batch_losses.push(loss);
            weighted += loss * n as f64;
            pixels += n;
        }
        Ok(EpochReport {
            mean_loss: weighted / pixels as f64,
            batch_losses,
        })
    }
}

/// Fraction of chips whose coarse (pooled) class equals their label.
pub fn coarse_accuracy(model: &SaversModel, dataset: &[LabeledChip]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(SaversError::Config("evaluation set is empty".into()));
    }
    let mut correct = 0usize;
    for s in dataset {
        if model.coarse_segment(&s.chip.image)?.predicted_class == s.chip.class_id {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

pub struct FitOutcome {
    pub history: TrainingHistory,
    /// Model after the epoch with the best eval accuracy.
    pub best_model: SaversModel,
    pub best_epoch: usize,
    pub final_model: SaversModel,
}

pub fn fit(
    model: SaversModel,
    train_set: &[LabeledChip],
    eval_set: &[LabeledChip],
    config: &TrainConfig,
) -> Result<FitOutcome> {
    fit_with(model, train_set, eval_set, config, |_, _| Ok(()))
}

/// [`fit`] with a hook called after every epoch with its record and model.
pub fn fit_with(
    model: SaversModel,
    train_set: &[LabeledChip],
    eval_set: &[LabeledChip],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord, &SaversModel) -> Result<()>,
) -> Result<FitOutcome> {
    if eval_set.is_empty() {
        return Err(SaversError::Config("evaluation set is empty".into()));
    }
    let mut trainer = Trainer::new(model, config.clone())?;
    let mut history = TrainingHistory::default();
    let mut best: Option<(f64, usize, SaversModel)> = None;
    for epoch in 1..=config.epochs {
        let report = trainer.train_epoch(train_set)?;
        let accuracy = coarse_accuracy(trainer.model(), eval_set)?;
        let record = EpochRecord {
            epoch,
            mean_train_loss: report.mean_loss,
            eval_accuracy: accuracy,
        };
        on_epoch(&record, trainer.model())?;
        history.records.push(record);
        if best.as_ref().is_none_or(|(a, _, _)| accuracy > *a) {
            best = Some((accuracy, epoch, trainer.model().clone()));
        }
    }
    let (_, best_epoch, best_model) = best.expect("at least one epoch ran");
    Ok(FitOutcome {
        history,
        best_model,
        best_epoch,
        final_model: trainer.into_model(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn best_epoch_prefers_earlier_on_ties() {
        let history = TrainingHistory {
            records: [0.5, 0.9, 0.9]
                .iter()
                .enumerate()
                .map(|(i, &a)| EpochRecord {
                    epoch: i + 1,
                    mean_train_loss: 1.0,
                    eval_accuracy: a,
                })
                .collect(),
        };
        assert_eq!(history.best_epoch(), Some(2));
        assert_eq!(best_index(&[]), None);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { momentum: 1.0, ..Default::default() },
            TrainConfig { learning_rate: -0.1, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(SaversError::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn history_csv_layout() {
        let h = TrainingHistory {
            records: vec![EpochRecord {
                epoch: 1,
                mean_train_loss: 0.25,
                eval_accuracy: 1.0,
            }],
        };
        assert_eq!(h.to_csv(), "epoch,mean_train_loss,eval_accuracy\n1,0.25,1\n");
    }
}
