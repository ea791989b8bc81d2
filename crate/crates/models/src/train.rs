//! Minibatch Adam training with early stopping, shared by both models.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use fg_core::FactorGraph;
use fg_nn::{Adam, AdamConfig, Bound, ParamStore, Tape, Var};

use crate::error::{ModelError, Result};

/// A training graph with whichever oracle labels are available.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub graph: FactorGraph,
    pub marginals: Option<Vec<Vec<f64>>>,
    pub map_log_score: Option<f64>,
}

impl Example {
    pub fn with_marginals(graph: FactorGraph, marginals: Vec<Vec<f64>>) -> Self {
        Self {
            graph,
            marginals: Some(marginals),
            map_log_score: None,
        }
    }

    pub fn with_map_score(graph: FactorGraph, score: f64) -> Self {
        Self {
            graph,
            marginals: None,
            map_log_score: Some(score),
        }
    }

    pub fn marginals(&self) -> Result<&[Vec<f64>]> {
        self.marginals
            .as_deref()
            .ok_or_else(|| ModelError::MissingLabel("oracle marginals".into()))
    }

    pub fn map_log_score(&self) -> Result<f64> {
        self.map_log_score
            .ok_or_else(|| ModelError::MissingLabel("oracle MAP log-score".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Stop after this many epochs without a new best validation loss.
    pub early_stop_window: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 1e-3,
            early_stop_window: 5,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean minibatch loss of each completed epoch.
    pub train_loss: Vec<f64>,
    /// Validation loss before training (index 0) and after each epoch.
    pub val_loss: Vec<f64>,
    /// Index into `val_loss` of the returned parameters.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Loss and per-parameter gradients of one example.
pub fn loss_and_grads<E, F>(params: &ParamStore, ex: &E, loss: &F) -> Result<(f64, Vec<Vec<f64>>)>
where
    F: Fn(&mut Tape, &Bound, &E) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let l = loss(&mut tape, &bound, ex)?;
    let grads = tape.backward(l);
    Ok((tape.scalar(l), params.extract_grads(&bound, &grads)))
}

/// Mean loss over `data`, forward only.
pub fn mean_loss<E: Sync, F>(params: &ParamStore, data: &[E], loss: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &Bound, &E) -> Result<Var> + Sync,
{
    let losses: Vec<f64> = data
        .par_iter()
        .map(|ex| {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            loss(&mut tape, &bound, ex).map(|l| tape.scalar(l))
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Trains `params` in place and leaves them at the best validation loss seen,
/// counting the untrained parameters as a candidate.
pub fn fit<E: Sync, F>(params: &mut ParamStore, train: &[E], val: &[E], cfg: &TrainConfig, loss: F) -> Result<TrainHistory>
where
    F: Fn(&mut Tape, &Bound, &E) -> Result<Var> + Sync,
{
    if train.is_empty() {
        return Err(ModelError::EmptyDataset("training set".into()));
    }
    if val.is_empty() {
        return Err(ModelError::EmptyDataset("validation set".into()));
    }
    if cfg.batch_size == 0 {
        return Err(ModelError::Config("batch size must be positive".into()));
    }
    let mut opt = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = TrainHistory {
        val_loss: vec![mean_loss(params, val, &loss)?],
        ..TrainHistory::default()
    };
    let mut best = params.clone();
    let mut best_val = history.val_loss[0];
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<(f64, Vec<Vec<f64>>)> = batch
                .par_iter()
                .map(|&i| loss_and_grads(params, &train[i], &loss))
                .collect::<Result<_>>()?;
            params.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for (l, g) in &results {
                epoch_loss += l;
                params.add_grads(g, scale);
            }
            opt.step(params);
        }
        history.train_loss.push(epoch_loss / train.len() as f64);
        let v = mean_loss(params, val, &loss)?;
        history.val_loss.push(v);
        log::info!("epoch {epoch}: train {:.6} val {v:.6}", history.train_loss[epoch - 1]);
        if v < best_val {
            best_val = v;
            best = params.clone();
            history.best_epoch = epoch;
        } else if epoch - history.best_epoch >= cfg.early_stop_window {
            history.stopped_early = true;
            break;
        }
    }
    *params = best;
    Ok(history)
}

/// Cross-entropy `−(1/V) Σ_i Σ_l p*_i(l) log b_i(l)` from per-variable log
/// beliefs.
pub fn cross_entropy(tape: &mut Tape, log_beliefs: &[Var], target: &[Vec<f64>]) -> Result<Var> {
    if log_beliefs.len() != target.len() || log_beliefs.is_empty() {
        return Err(ModelError::Config(format!(
            "{} belief vectors for {} target marginals",
            log_beliefs.len(),
            target.len()
        )));
    }
    let mut total: Option<Var> = None;
    for (&lb, p) in log_beliefs.iter().zip(target) {
        // 0·log b contributes nothing even where b underflows
        let mask: Vec<usize> = (0..p.len()).filter(|&l| p[l] > 0.0).collect();
        let w = tape.vector(p.clone());
        let term = if mask.len() == p.len() {
            let prod = tape.mul(w, lb);
            tape.sum_all(prod)
        } else {
            let parts: Vec<Var> = mask
                .iter()
                .map(|&l| {
                    let s = tape.slice(lb, l, 1);
                    tape.affine(s, p[l], 0.0)
                })
                .collect();
            match parts.as_slice() {
                [] => tape.constant_scalar(0.0),
                _ => {
                    let c = tape.concat(&parts);
                    tape.sum_all(c)
                }
            }
        };
        total = Some(match total {
            None => term,
            Some(t) => tape.add(t, term),
        });
    }
    let total = total.expect("non-empty");
    Ok(tape.affine(total, -1.0 / log_beliefs.len() as f64, 0.0))
}
