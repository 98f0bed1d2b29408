use serde::{Deserialize, Serialize};

use super::backward::example_gradient_lenient;
use super::forward::{forward_fixed_point, loss, readout, FixedPointConfig, Readout};
use super::{class_index, GnnError, GnnGraph, GnnModel, TrainingExample};
use crate::oracle::Label;

/// Resilient backpropagation without weight backtracking (iRprop−).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RpropConfig {
    pub initial_step: f64,
    pub increase: f64,
    pub decrease: f64,
    pub min_step: f64,
    pub max_step: f64,
}

impl Default for RpropConfig {
    fn default() -> Self {
        Self { initial_step: 0.01, increase: 1.2, decrease: 0.5, min_step: 1e-6, max_step: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpropState {
    pub steps: Vec<f64>,
    pub prev_grad: Vec<f64>,
}

impl RpropState {
    pub fn new(num_params: usize, cfg: &RpropConfig) -> Self {
        Self { steps: vec![cfg.initial_step; num_params], prev_grad: vec![0.0; num_params] }
    }

    /// One descent step on `params`.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64], cfg: &RpropConfig) {
        for i in 0..params.len() {
            let mut g = grad[i];
            let sign = g * self.prev_grad[i];
            if sign > 0.0 {
                self.steps[i] = (self.steps[i] * cfg.increase).min(cfg.max_step);
            } else if sign < 0.0 {
                self.steps[i] = (self.steps[i] * cfg.decrease).max(cfg.min_step);
                g = 0.0;
            }
            if g > 0.0 {
                params[i] -= self.steps[i];
            } else if g < 0.0 {
                params[i] += self.steps[i];
            }
            self.prev_grad[i] = g;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub fixed_point: FixedPointConfig,
    /// Weight of the contraction penalty; ignored by the linear variant.
    pub penalty_weight: f64,
    pub rprop: RpropConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            fixed_point: FixedPointConfig::default(),
            penalty_weight: 10.0,
            rprop: RpropConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub model: GnnModel,
    pub rprop: RpropState,
    pub epochs_done: usize,
    pub best_model: GnnModel,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub curve: Vec<EpochRecord>,
    /// Training graphs whose adjoint iteration hit the cap, summed over epochs.
    pub adjoint_failures: usize,
}

impl TrainState {
    pub fn new(model: GnnModel, rprop: &RpropConfig) -> Self {
        Self {
            rprop: RpropState::new(model.num_params(), rprop),
            best_model: model.clone(),
            model,
            epochs_done: 0,
            best_epoch: 0,
            best_val_acc: -1.0,
            curve: Vec::new(),
            adjoint_failures: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters with the best validation accuracy (earliest on ties).
    pub best_model: GnnModel,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub curve: Vec<EpochRecord>,
    pub state: TrainState,
}

/// Full-batch training from `model`.
pub fn train(
    model: GnnModel,
    train_set: &[TrainingExample],
    val_set: &[TrainingExample],
    config: &TrainConfig,
) -> Result<TrainOutcome, GnnError> {
    resume(TrainState::new(model, &config.rprop), train_set, val_set, config)
}

/// Continues training until `config.epochs` epochs have been run in total.
/// Each epoch records metrics at the current parameters and then applies
/// one update.
pub fn resume(
    state: TrainState,
    train_set: &[TrainingExample],
    val_set: &[TrainingExample],
    config: &TrainConfig,
) -> Result<TrainOutcome, GnnError> {
    resume_with(state, train_set, val_set, config, |_| Ok(()))
}

/// Like [`resume`], calling `after_epoch` with the state after every update.
pub fn resume_with<F>(
    mut state: TrainState,
    train_set: &[TrainingExample],
    val_set: &[TrainingExample],
    config: &TrainConfig,
    mut after_epoch: F,
) -> Result<TrainOutcome, GnnError>
where
    F: FnMut(&TrainState) -> Result<(), GnnError>,
{
    if train_set.is_empty() || val_set.is_empty() {
        return Err(GnnError::EmptyDataset);
    }
    while state.epochs_done < config.epochs {
        let epoch = state.epochs_done + 1;
        let mut grad = vec![0.0; state.model.num_params()];
        let mut total_loss = 0.0;
        let mut correct = 0usize;
        for ex in train_set {
            let eg = example_gradient_lenient(&state.model, ex, &config.fixed_point, config.penalty_weight)?;
            if !eg.adjoint_converged {
                state.adjoint_failures += 1;
            }
            total_loss += eg.loss;
            correct += usize::from(eg.readout.predicted() == ex.label);
            for (g, e) in grad.iter_mut().zip(&eg.grad) {
                *g += e;
            }
        }
        let n = train_set.len() as f64;
        let train_loss = total_loss / n;
        if !train_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(GnnError::Diverged { epoch, loss: train_loss });
        }
        grad.iter_mut().for_each(|g| *g /= n);
        let vm = evaluate_accuracy(&state.model, val_set, &config.fixed_point)?;
        let (val_loss, val_acc) = (vm.mean_loss, vm.accuracy);
        let train_acc = correct as f64 / n;
        state.curve.push(EpochRecord { epoch, train_loss, train_acc, val_loss, val_acc });
        if val_acc > state.best_val_acc {
            state.best_val_acc = val_acc;
            state.best_epoch = epoch;
            state.best_model = state.model.clone();
        }
        state.rprop.update(&mut state.model.params, &grad, &config.rprop);
        state.epochs_done = epoch;
        after_epoch(&state)?;
    }
    Ok(TrainOutcome {
        best_model: state.best_model.clone(),
        best_epoch: state.best_epoch,
        best_val_acc: state.best_val_acc,
        curve: state.curve.clone(),
        state,
    })
}

pub fn predict(model: &GnnModel, graph: &GnnGraph, config: &FixedPointConfig) -> Result<Readout, GnnError> {
    let states = forward_fixed_point(model, graph, config)?;
    Ok(readout(model, graph, &states))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Accuracy on SAT examples; absent when there are none.
    pub sat_accuracy: Option<f64>,
    pub unsat_accuracy: Option<f64>,
    /// `confusion[true][predicted]`, class 0 = SAT.
    pub confusion: [[usize; 2]; 2],
    pub mean_loss: f64,
    /// Examples whose forward iteration hit the cap.
    pub unconverged: usize,
}

pub fn evaluate_accuracy(
    model: &GnnModel,
    examples: &[TrainingExample],
    config: &FixedPointConfig,
) -> Result<Metrics, GnnError> {
    if examples.is_empty() {
        return Err(GnnError::EmptyDataset);
    }
    let mut confusion = [[0usize; 2]; 2];
    let mut total_loss = 0.0;
    let mut unconverged = 0;
    for ex in examples {
        let states = forward_fixed_point(model, &ex.graph, config)?;
        unconverged += usize::from(!states.converged);
        let ro = readout(model, &ex.graph, &states);
        total_loss += loss(&ro, ex.label);
        confusion[class_index(ex.label)][class_index(ro.predicted())] += 1;
    }
    let total = examples.len();
    let correct = confusion[0][0] + confusion[1][1];
    let class_acc = |c: usize| {
        let n = confusion[c][0] + confusion[c][1];
        (n > 0).then(|| confusion[c][c] as f64 / n as f64)
    };
    Ok(Metrics {
        total,
        correct,
        accuracy: correct as f64 / total as f64,
        sat_accuracy: class_acc(class_index(Label::Sat)),
        unsat_accuracy: class_acc(class_index(Label::Unsat)),
        confusion,
        mean_loss: total_loss / total as f64,
        unconverged,
    })
}
