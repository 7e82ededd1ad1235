use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AutoencoderConfig, AutoencoderModel};
use crate::autodiff::Graph;
use crate::dataset::LabeledImageSet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mini-batch SGD with momentum on the batch-mean reconstruction loss.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            epochs: 20,
            batch_size: 256,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        // A zero learning rate is accepted: it leaves the parameters untouched.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub learning_rate: f64,
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Loss curves of one training run. Losses are per-image mean `r̄`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub learning_rate: f64,
    /// Validation loss before the first update.
    pub initial_val_loss: f64,
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_val_loss(&self) -> f64 {
        self.val_losses.last().copied().unwrap_or(self.initial_val_loss)
    }
}

/// Mean per-image reconstruction loss over `data`; NaN for an empty set.
pub fn evaluate_loss(model: &AutoencoderModel, data: &LabeledImageSet, batch_size: usize) -> Result<f64> {
    if data.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for start in (0..data.len()).step_by(batch_size.max(1)) {
        let len = batch_size.min(data.len() - start);
        let x = data.images().slice_batch(start, len)?;
        let x_hat = model.reconstruct(&x)?;
        total += x
            .data()
            .iter()
            .zip(x_hat.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / data.images().numel() as f64)
}

/// Trains `model` in place and reports per-epoch losses.
///
/// Each epoch visits the training set in a fresh seeded order; the final
/// partial batch is kept. Aborts with [`Error::Divergence`] on a non-finite
/// batch loss.
pub fn train(
    model: &mut AutoencoderModel,
    train_data: &LabeledImageSet,
    val_data: &LabeledImageSet,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainReport> {
    config.validate()?;
    if train_data.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut velocity: Vec<Vec<f64>> = model
        .parameters()
        .iter()
        .map(|p| vec![0.0; p.value.numel()])
        .collect();
    let mut report = TrainReport {
        learning_rate: config.learning_rate,
        initial_val_loss: evaluate_loss(model, val_data, config.batch_size)?,
        train_losses: Vec::with_capacity(config.epochs),
        val_losses: Vec::with_capacity(config.epochs),
    };
    let mut order: Vec<usize> = (0..train_data.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let x = train_data.images().gather_batch(batch)?;
            let (loss, grads) = batch_gradients(model, x)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            loss_sum += loss * batch.len() as f64;
            for ((param, vel), grad) in model.parameters_mut().iter_mut().zip(&mut velocity).zip(&grads) {
                for ((p, v), g) in param.value.data_mut().iter_mut().zip(vel.iter_mut()).zip(grad.data()) {
                    *v = config.momentum * *v + g;
                    *p -= config.learning_rate * *v;
                }
            }
        }
        let stats = EpochStats {
            learning_rate: config.learning_rate,
            epoch,
            train_loss: loss_sum / train_data.len() as f64,
            val_loss: evaluate_loss(model, val_data, config.batch_size)?,
        };
        if !stats.train_loss.is_finite() {
            return Err(Error::Divergence { epoch, loss: stats.train_loss });
        }
        report.train_losses.push(stats.train_loss);
        report.val_losses.push(stats.val_loss);
        on_epoch(&stats);
    }
    Ok(report)
}

/// Batch loss and its gradient for every parameter, in parameter order.
pub(crate) fn batch_gradients(model: &AutoencoderModel, x: Tensor) -> Result<(f64, Vec<Tensor>)> {
    let mut graph = Graph::new();
    let input = graph.input(x, false);
    let fwd = model.forward(&mut graph, input, true)?;
    let loss = graph.mse(fwd.output, input)?;
    let value = graph.value(loss).data()[0];
    let mut grads = graph.backward(loss)?;
    let grads = fwd
        .params
        .iter()
        .zip(model.parameters())
        .map(|(&id, p)| grads.take(id).unwrap_or_else(|| Tensor::zeros(p.value.shape())))
        .collect();
    Ok((value, grads))
}

/// Outcome of training one model per candidate learning rate.
#[derive(Clone, Debug, PartialEq)]
pub struct LearningRateSearch {
    pub selected: f64,
    /// One report per candidate, in candidate order.
    pub reports: Vec<TrainReport>,
}

/// Trains a fresh model from `config` for each candidate rate and keeps the
/// one with the lowest final validation loss (earliest candidate on ties).
pub fn select_learning_rate(
    config: &AutoencoderConfig,
    candidates: &[f64],
    train_data: &LabeledImageSet,
    val_data: &LabeledImageSet,
    train_config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(AutoencoderModel, LearningRateSearch)> {
    if candidates.is_empty() {
        return Err(Error::Config("no candidate learning rates".into()));
    }
    if candidates.len() > 1 && val_data.is_empty() {
        return Err(Error::Config("choosing a learning rate needs validation data".into()));
    }
    let mut best: Option<(AutoencoderModel, f64, f64)> = None;
    let mut reports = Vec::with_capacity(candidates.len());
    for &lr in candidates {
        let mut model = AutoencoderModel::build(config.clone())?;
        let tc = TrainConfig { learning_rate: lr, ..train_config.clone() };
        let report = train(&mut model, train_data, val_data, &tc, &mut on_epoch)?;
        let score = report.final_val_loss();
        let better = match &best {
            None => true,
            Some((_, _, best_score)) => score < *best_score || (best_score.is_nan() && !score.is_nan()),
        };
        if better {
            best = Some((model, lr, score));
        }
        reports.push(report);
    }
    let (model, selected, _) = best.expect("at least one candidate");
    Ok((model, LearningRateSearch { selected, reports }))
}
