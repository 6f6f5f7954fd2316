//! Adam, losses, the mini-batch training loop, and learning-rate tuning on a
//! validation split.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{ClassifierHead, Gradients, Parameterized, RegressionNet, Workspace};
use crate::numerics::{derive_seed, log_sum_exp, Matrix, Rng};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPS: f64 = 1e-8;
pub const DEFAULT_LR_GRID: [f64; 5] = [0.0003, 0.001, 0.003, 0.01, 0.03];
pub const DEFAULT_BATCH_SIZE: usize = 100;

/// Adam moments and hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new<M: Parameterized + ?Sized>(model: &M, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = model.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            lr,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            eps: DEFAULT_EPS,
        }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    /// One bias-corrected Adam update of every tensor of `model`.
    pub fn step<M: Parameterized + ?Sized>(
        &mut self,
        model: &mut M,
        grads: &Gradients,
    ) -> Result<()> {
        let mut params = model.tensors_mut();
        if params.len() != grads.tensors.len() || params.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                context: "adam tensor count",
                expected: self.m.len(),
                found: grads.tensors.len(),
            });
        }
        for (ti, (p, g)) in params.iter().zip(&grads.tensors).enumerate() {
            if p.len() != g.len() || g.len() != self.m[ti].len() {
                return Err(Error::DimensionMismatch {
                    context: "adam tensor length",
                    expected: self.m[ti].len(),
                    found: g.len(),
                });
            }
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient tensor {ti} entry {i} = {} at Adam step {}",
                    g[i],
                    self.t + 1
                )));
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (ti, (p, g)) in params.iter_mut().zip(&grads.tensors).enumerate() {
            let (m, v) = (&mut self.m[ti], &mut self.v[ti]);
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// `((y − ŷ)², ∂/∂ŷ)`.
#[inline]
pub fn squared_loss(y: f64, yhat: f64) -> (f64, f64) {
    let r = y - yhat;
    (r * r, -2.0 * r)
}

/// `−ln p[label]` and its gradient with respect to the logits that produced `probs`.
pub fn cross_entropy_loss(label: usize, probs: &[f64]) -> Result<(f64, Vec<f64>)> {
    if label >= probs.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: probs.len(),
        });
    }
    let mut grad = probs.to_vec();
    grad[label] -= 1.0;
    Ok((-probs[label].ln(), grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    SquaredError,
    CrossEntropy,
}

/// A loss over an indexed dataset, paired with a model type.
pub trait Objective: Sync {
    type Model: Parameterized + Clone + Send + Sync;

    fn loss_kind(&self) -> LossKind;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adds the gradient of the summed loss over `indices` to `grads` and
    /// returns the summed loss.
    fn accumulate(
        &self,
        model: &Self::Model,
        indices: &[usize],
        ws: &mut Workspace,
        grads: &mut Gradients,
    ) -> f64;

    /// Model-selection metric over every sample; lower is better.
    fn metric(&self, model: &Self::Model) -> f64;
}

/// Squared loss for a [`RegressionNet`]; the metric is MSE.
#[derive(Clone, Copy, Debug)]
pub struct RegressionObjective<'a> {
    pub inputs: &'a Matrix,
    pub targets: &'a [f64],
}

impl<'a> RegressionObjective<'a> {
    pub fn new(inputs: &'a Matrix, targets: &'a [f64]) -> Result<Self> {
        if inputs.rows() != targets.len() {
            return Err(Error::DimensionMismatch {
                context: "regression targets",
                expected: inputs.rows(),
                found: targets.len(),
            });
        }
        Ok(Self { inputs, targets })
    }

    pub fn predictions(&self, model: &RegressionNet) -> Vec<f64> {
        let mut ws = Workspace::default();
        ws.prepare(&model.hidden);
        (0..self.inputs.rows())
            .map(|i| model.forward_with(self.inputs.row(i), &mut ws))
            .collect()
    }
}

impl Objective for RegressionObjective<'_> {
    type Model = RegressionNet;

    fn loss_kind(&self) -> LossKind {
        LossKind::SquaredError
    }

    fn len(&self) -> usize {
        self.targets.len()
    }

    fn accumulate(
        &self,
        model: &RegressionNet,
        indices: &[usize],
        ws: &mut Workspace,
        grads: &mut Gradients,
    ) -> f64 {
        ws.prepare(&model.hidden);
        let mut total = 0.0;
        for &i in indices {
            let x = self.inputs.row(i);
            let yhat = model.forward_with(x, ws);
            let (loss, dy) = squared_loss(self.targets[i], yhat);
            total += loss;
            model.backward_with(x, ws, dy, grads);
        }
        total
    }

    fn metric(&self, model: &RegressionNet) -> f64 {
        let preds = self.predictions(model);
        crate::numerics::mse(self.targets, &preds).unwrap_or(f64::NAN)
    }
}

/// Softmax cross-entropy for a [`ClassifierHead`]; the metric is the error rate.
#[derive(Clone, Copy, Debug)]
pub struct ClassificationObjective<'a> {
    pub inputs: &'a Matrix,
    pub labels: &'a [usize],
}

impl<'a> ClassificationObjective<'a> {
    pub fn new(inputs: &'a Matrix, labels: &'a [usize]) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "classification labels",
                expected: inputs.rows(),
                found: labels.len(),
            });
        }
        Ok(Self { inputs, labels })
    }

    pub fn correct(&self, model: &ClassifierHead) -> usize {
        let mut ws = Workspace::default();
        ws.prepare(&model.hidden);
        (0..self.labels.len())
            .filter(|&i| model.predict(self.inputs.row(i), &mut ws) == self.labels[i])
            .count()
    }

    pub fn accuracy(&self, model: &ClassifierHead) -> f64 {
        self.correct(model) as f64 / self.labels.len() as f64
    }
}

impl Objective for ClassificationObjective<'_> {
    type Model = ClassifierHead;

    fn loss_kind(&self) -> LossKind {
        LossKind::CrossEntropy
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    fn accumulate(
        &self,
        model: &ClassifierHead,
        indices: &[usize],
        ws: &mut Workspace,
        grads: &mut Gradients,
    ) -> f64 {
        ws.prepare(&model.hidden);
        let classes = model.classes();
        let mut total = 0.0;
        let mut dlogits = vec![0.0; classes];
        for &i in indices {
            let x = self.inputs.row(i);
            let label = self.labels[i];
            let logits = model.logits_with(x, ws);
            let lse = log_sum_exp(logits);
            total += lse - logits[label];
            for (d, z) in dlogits.iter_mut().zip(logits) {
                *d = (z - lse).exp();
            }
            dlogits[label] -= 1.0;
            model.backward_with(x, ws, &dlogits, grads);
        }
        total
    }

    fn metric(&self, model: &ClassifierHead) -> f64 {
        1.0 - self.accuracy(model)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: 20,
            lr_grid: DEFAULT_LR_GRID.to_vec(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Domain("batch_size must be at least 1".into()));
        }
        if self.lr_grid.is_empty() {
            return Err(Error::Domain("learning-rate grid is empty".into()));
        }
        if let Some(lr) = self
            .lr_grid
            .iter()
            .find(|lr| !(lr.is_finite() && **lr > 0.0))
        {
            return Err(Error::Domain(format!("learning rate {lr} is not positive")));
        }
        Ok(())
    }
}

/// Metrics after a given epoch; epoch 0 is the untrained model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_metric: f64,
    pub valid_metric: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<M> {
    /// Snapshot with the lowest validation metric (earliest on ties).
    pub model: M,
    pub best_epoch: usize,
    pub best_valid: f64,
    pub curve: Vec<EpochRecord>,
    pub lr: f64,
    pub seed: u64,
}

/// Mini-batch Adam over shuffled epochs, keeping the best validation snapshot.
///
/// Each epoch visits a fresh Fisher–Yates permutation of the training set; the
/// last batch may be smaller than `batch_size`. Gradients are averaged over the
/// batch.
pub fn train<O: Objective>(
    model: O::Model,
    train_set: &O,
    valid_set: &O,
    config: &TrainConfig,
    lr: f64,
) -> Result<TrainOutcome<O::Model>> {
    if config.batch_size == 0 {
        return Err(Error::Domain("batch_size must be at least 1".into()));
    }
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut model = model;
    let mut adam = AdamState::new(&model, lr);
    let mut rng = Rng::new(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut ws = Workspace::default();
    let mut grads = model.zero_gradients();

    let initial_valid = valid_set.metric(&model);
    let mut curve = vec![EpochRecord {
        epoch: 0,
        train_metric: train_set.metric(&model),
        valid_metric: initial_valid,
    }];
    let mut best = (model.clone(), 0, initial_valid);

    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        for (batch, indices) in order.chunks(config.batch_size).enumerate() {
            grads.fill_zero();
            let loss = train_set.accumulate(&model, indices, &mut ws, &mut grads);
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            grads.scale(1.0 / indices.len() as f64);
            adam.step(&mut model, &grads)?;
        }
        let valid_metric = valid_set.metric(&model);
        curve.push(EpochRecord {
            epoch,
            train_metric: train_set.metric(&model),
            valid_metric,
        });
        // NaN never compares less, so a diverged model is never selected.
        if valid_metric < best.2 || best.2.is_nan() && valid_metric.is_finite() {
            best = (model.clone(), epoch, valid_metric);
        }
    }
    Ok(TrainOutcome {
        model: best.0,
        best_epoch: best.1,
        best_valid: best.2,
        curve,
        lr,
        seed: config.seed,
    })
}

/// Result of one learning-rate grid point.
#[derive(Clone, Debug)]
pub struct GridPoint {
    pub lr: f64,
    pub seed: u64,
    pub outcome: std::result::Result<f64, String>,
}

#[derive(Clone, Debug)]
pub struct TuneOutcome<M> {
    pub best_lr: f64,
    pub best: TrainOutcome<M>,
    /// Validation metric (or failure message) per grid entry, in grid order.
    pub grid: Vec<GridPoint>,
}

impl<M> TuneOutcome<M> {
    pub fn failures(&self) -> impl Iterator<Item = (f64, &str)> {
        self.grid
            .iter()
            .filter_map(|g| g.outcome.as_ref().err().map(|e| (g.lr, e.as_str())))
    }
}

/// Learning rate, seed and result of one grid point.
type GridRun<M> = (f64, u64, Result<TrainOutcome<M>>);

/// Trains one fresh model per grid learning rate and keeps the one with the
/// lowest validation metric; ties go to the smaller learning rate.
///
/// Grid point `i` uses seed `derive_seed(config.seed, i)` for both its
/// initialization and its shuffling, so results do not depend on scheduling.
/// Failed grid points are reported in [`TuneOutcome::grid`] and skipped.
pub fn tune_lr<O, F>(
    factory: F,
    train_set: &O,
    valid_set: &O,
    config: &TrainConfig,
) -> Result<TuneOutcome<O::Model>>
where
    O: Objective,
    F: Fn(&mut Rng) -> O::Model + Sync,
{
    config.validate()?;
    let runs: Vec<GridRun<O::Model>> = config
        .lr_grid
        .par_iter()
        .enumerate()
        .map(|(i, &lr)| {
            let seed = derive_seed(config.seed, i as u64);
            let model = factory(&mut Rng::new(seed));
            let cfg = TrainConfig {
                seed,
                ..config.clone()
            };
            (lr, seed, train(model, train_set, valid_set, &cfg, lr))
        })
        .collect();

    let grid = runs
        .iter()
        .map(|(lr, seed, r)| GridPoint {
            lr: *lr,
            seed: *seed,
            outcome: r.as_ref().map(|o| o.best_valid).map_err(|e| e.to_string()),
        })
        .collect();

    let mut best: Option<TrainOutcome<O::Model>> = None;
    let mut last_error = None;
    for (_, _, run) in runs {
        match run {
            Ok(outcome) => {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        outcome.best_valid < b.best_valid
                            || (outcome.best_valid == b.best_valid && outcome.lr < b.lr)
                            || (b.best_valid.is_nan() && !outcome.best_valid.is_nan())
                    }
                };
                if better {
                    best = Some(outcome);
                }
            }
            Err(e) => last_error = Some(e),
        }
    }
    match best {
        Some(best) => Ok(TuneOutcome {
            best_lr: best.lr,
            best,
            grid,
        }),
        None => Err(Error::AllGridPointsFailed(Box::new(
            last_error.unwrap_or_else(|| Error::Domain("empty grid".into())),
        ))),
    }
}

/// Writes a metric curve as CSV with columns `epoch,train_metric,valid_metric,lr,seed`.
pub fn write_curve_csv<W: Write>(
    mut out: W,
    curve: &[EpochRecord],
    lr: f64,
    seed: u64,
) -> std::io::Result<()> {
    writeln!(out, "epoch,train_metric,valid_metric,lr,seed")?;
    for r in curve {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.epoch, r.train_metric, r.valid_metric, lr, seed
        )?;
    }
    Ok(())
}
