use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{Dataset, MetricsReport};
use crate::autodiff::{AdamState, Mode, Pooling};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMetric {
    #[default]
    Map,
    Mauc,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub pooling: Pooling,
    pub seed: u64,
    pub selection_metric: SelectionMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 1e-3,
            batch_size: 16,
            pooling: Pooling::Avg,
            seed: 0,
            selection_metric: SelectionMetric::Map,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be > 0, got {}",
                self.lr
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_map: f64,
    pub val_mauc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights were kept.
    pub selected_epoch: usize,
    pub skipped_train: Vec<String>,
    pub skipped_val: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the selected epoch.
    pub model: Model,
    /// Optimizer state at the selected epoch.
    pub adam: AdamState<f32>,
    pub history: TrainHistory,
}

/// Recording posteriors for every example, in dataset order.
pub fn predict_dataset(model: &Model, data: &Dataset, jobs: usize) -> Result<Vec<Vec<f64>>> {
    let one = |x| -> Result<Vec<f64>> {
        let (_, rec) = model.predict(x)?;
        Ok(rec.values.iter().map(|&v| f64::from(v)).collect())
    };
    if jobs <= 1 {
        return data.features.iter().map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| data.features.par_iter().map(one).collect())
}

/// Eval-mode metrics over a dataset. Events without both positives and
/// negatives are excluded from the means and listed in the report.
pub fn evaluate(model: &Model, data: &Dataset, jobs: usize) -> Result<MetricsReport> {
    if data.class_count() != model.class_count() {
        return Err(Error::InvalidArgument(format!(
            "model has {} classes, corpus vocabulary has {}",
            model.class_count(),
            data.class_count()
        )));
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument(
            "nothing to evaluate: corpus has no usable clips".into(),
        ));
    }
    let scores = predict_dataset(model, data, jobs)?;
    let targets: Vec<Vec<bool>> = data
        .targets
        .iter()
        .map(|t| t.iter().map(|&v| v > 0.5).collect())
        .collect();
    let mut report = MetricsReport::from_scores(&data.event_names, &scores, &targets)?;
    for e in &report.excluded {
        log::warn!("event {e} has no positives (or no negatives) and is excluded from the means");
    }
    report.skipped = data.skipped.clone();
    Ok(report)
}

/// Train with Adam, scoring the validation set after every epoch and
/// keeping the best epoch's weights. Equal-length training sets run in
/// minibatches of `batch_size`; variable-length ones one recording at a time.
pub fn train(mut model: Model, train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    for d in [train, val] {
        if d.class_count() != model.class_count() {
            return Err(Error::InvalidArgument(format!(
                "model has {} classes, corpus vocabulary has {}",
                model.class_count(),
                d.class_count()
            )));
        }
    }
    if train.is_empty() {
        return Err(Error::InvalidArgument("training set has no usable clips".into()));
    }
    model.set_pooling(cfg.pooling);
    let sizes: Vec<usize> = model.params().iter().map(|p| p.value.len()).collect();
    let mut adam = AdamState::<f32>::new(cfg.lr, &sizes)?;
    let batch = if train.equal_length() { cfg.batch_size } else { 1 };
    let mut history = TrainHistory {
        epochs: Vec::with_capacity(cfg.epochs),
        selected_epoch: 0,
        skipped_train: train.skipped.clone(),
        skipped_val: val.skipped.clone(),
    };
    let mut best: Option<(f64, Model, AdamState<f32>)> = None;
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut seed::rng(cfg.seed, epoch as u64));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(batch) {
            let xs: Vec<_> = chunk.iter().map(|&i| &train.features[i]).collect();
            let ys: Vec<Vec<f32>> = chunk.iter().map(|&i| train.targets[i].clone()).collect();
            let (loss, grads) = model.loss_and_grads(&xs, &ys, Mode::Train)?;
            loss_sum += loss * chunk.len() as f64;
            let grad_refs: Vec<&[f32]> = grads.iter().map(Vec::as_slice).collect();
            let mut params: Vec<&mut [f32]> = model.params_mut().iter_mut().map(|p| p.value.data_mut()).collect();
            adam.step(&mut params, &grad_refs)?;
        }
        let report = evaluate(&model, val, 1)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_map: report.map,
            val_mauc: report.mauc,
        };
        log::info!(
            "epoch {epoch}: loss {:.5} val MAP {:.4} MAUC {:.4}",
            record.train_loss,
            record.val_map,
            record.val_mauc
        );
        let score = match cfg.selection_metric {
            SelectionMetric::Map => report.map,
            SelectionMetric::Mauc => report.mauc,
        };
        if score.is_nan() {
            return Err(Error::InvalidArgument(
                "validation set has no event with both positives and negatives".into(),
            ));
        }
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, model.clone(), adam.clone()));
            history.selected_epoch = epoch;
        }
        history.epochs.push(record);
    }
    let (_, model, adam) = best.expect("at least one epoch");
    Ok(TrainOutcome { model, adam, history })
}
