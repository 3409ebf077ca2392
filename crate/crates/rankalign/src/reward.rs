//! Scalar reward model over (prompt, label) pairs.
//!
//! The reward head consumes the prompt features with the candidate label
//! appended as a two-way one-hot, runs the same tanh hidden layer shape as
//! the scorer, and emits one scalar. It is warm-started from the SFT scorer:
//! the hidden layer transfers (with zero weights on the two new label
//! inputs, so the initial reward is label-independent) while the scalar head
//! is freshly seeded.
//!
//! Training minimizes the pairwise preference loss
//! `-log sigmoid(r(x, chosen) - r(x, rejected))`, which depends only on the
//! reward difference under the same prompt.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::mining::PreferenceInstance;
use crate::prompt::{Label, LabelVocabulary, PromptContext};
use crate::scorer::{sigmoid, CheckpointArch, ScorerParams};
use crate::seeding;
use crate::sft::{SftConfig, TrainReport};

/// Reward-model weights. `input_dim` is the scorer input plus 2 for the
/// label one-hot; `w1` is `hidden_dim x input_dim`, `w_out` is `hidden_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

/// Gradient with the same shape as [`RewardParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct RewardGradient {
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        let shape_ok = self.w1.len() == self.hidden_dim
            && self.w1.iter().all(|r| r.len() == self.input_dim)
            && self.b1.len() == self.hidden_dim
            && self.w_out.len() == self.hidden_dim;
        if !shape_ok {
            return Err(Error::Checkpoint(
                "reward weight shapes are inconsistent".into(),
            ));
        }
        let finite = self
            .w1
            .iter()
            .flatten()
            .chain(self.b1.iter())
            .chain(self.w_out.iter())
            .chain(std::iter::once(&self.b_out))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Checkpoint(
                "reward weights contain non-finite values".into(),
            ));
        }
        Ok(())
    }

    pub fn apply_gradient(&mut self, grad: &RewardGradient, step: f64) {
        for (row, grow) in self.w1.iter_mut().zip(&grad.w1) {
            for (w, g) in row.iter_mut().zip(grow) {
                *w -= step * g;
            }
        }
        for (b, g) in self.b1.iter_mut().zip(&grad.b1) {
            *b -= step * g;
        }
        for (w, g) in self.w_out.iter_mut().zip(&grad.w_out) {
            *w -= step * g;
        }
        self.b_out -= step * grad.b_out;
    }
}

impl RewardGradient {
    pub fn zeros_like(params: &RewardParams) -> Self {
        Self {
            w1: vec![vec![0.0; params.input_dim]; params.hidden_dim],
            b1: vec![0.0; params.hidden_dim],
            w_out: vec![0.0; params.hidden_dim],
            b_out: 0.0,
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for row in &mut self.w1 {
            for g in row {
                *g *= factor;
            }
        }
        for g in &mut self.b1 {
            *g *= factor;
        }
        for g in &mut self.w_out {
            *g *= factor;
        }
        self.b_out *= factor;
    }

    pub fn is_finite(&self) -> bool {
        self.w1
            .iter()
            .flatten()
            .chain(self.b1.iter())
            .chain(self.w_out.iter())
            .chain(std::iter::once(&self.b_out))
            .all(|v| v.is_finite())
    }
}

/// Warm-start the reward model from an SFT scorer: hidden layer copied with
/// zeroed label columns, scalar head freshly seeded uniform.
pub fn init_rm_from_sft(sft: &ScorerParams, seed: u64) -> RewardParams {
    let input_dim = sft.input_dim + 2;
    let mut w1 = Vec::with_capacity(sft.hidden_dim);
    for row in &sft.w1 {
        let mut extended = row.clone();
        extended.extend_from_slice(&[0.0, 0.0]);
        w1.push(extended);
    }
    let mut rng = seeding::rng(seed);
    let a = (6.0 / (sft.hidden_dim + 1) as f64).sqrt();
    let w_out = (0..sft.hidden_dim)
        .map(|_| rand::Rng::random_range(&mut rng, -a..a))
        .collect();
    let b_out = rand::Rng::random_range(&mut rng, -a..a);
    RewardParams {
        input_dim,
        hidden_dim: sft.hidden_dim,
        w1,
        b1: sft.b1.clone(),
        w_out,
        b_out,
    }
}

fn rm_input(x: &PromptContext, y: Label) -> Vec<f64> {
    let mut input = Vec::with_capacity(x.features.len() + 2);
    input.extend_from_slice(&x.features);
    input.extend_from_slice(&y.one_hot());
    input
}

struct RewardCache {
    input: Vec<f64>,
    hidden: Vec<f64>,
}

fn forward(rm: &RewardParams, input: Vec<f64>) -> Result<(f64, RewardCache)> {
    if input.len() != rm.input_dim {
        return Err(Error::DimensionMismatch {
            expected: rm.input_dim,
            got: input.len(),
        });
    }
    let hidden: Vec<f64> = rm
        .w1
        .iter()
        .zip(&rm.b1)
        .map(|(row, b)| (row.iter().zip(&input).map(|(w, v)| w * v).sum::<f64>() + b).tanh())
        .collect();
    let r = rm
        .w_out
        .iter()
        .zip(&hidden)
        .map(|(w, h)| w * h)
        .sum::<f64>()
        + rm.b_out;
    Ok((r, RewardCache { input, hidden }))
}

/// Scalar reward for responding to prompt `x` with label `y`.
pub fn reward(rm: &RewardParams, x: &PromptContext, y: Label) -> Result<f64> {
    forward(rm, rm_input(x, y)).map(|(r, _)| r)
}

/// Gradient of `seed * r` with respect to the reward parameters.
fn backprop(rm: &RewardParams, cache: &RewardCache, seed: f64, grad: &mut RewardGradient) {
    for (g, h) in grad.w_out.iter_mut().zip(&cache.hidden) {
        *g += seed * h;
    }
    grad.b_out += seed;
    for i in 0..rm.hidden_dim {
        let da = seed * rm.w_out[i] * (1.0 - cache.hidden[i] * cache.hidden[i]);
        for (g, v) in grad.w1[i].iter_mut().zip(&cache.input) {
            *g += da * v;
        }
        grad.b1[i] += da;
    }
}

/// `-log sigmoid(delta)`, computed stably for large |delta|.
fn neg_log_sigmoid(delta: f64) -> f64 {
    if delta >= 0.0 {
        (-delta).exp().ln_1p()
    } else {
        -delta + delta.exp().ln_1p()
    }
}

/// Mean pairwise preference loss over the batch:
/// `-log sigmoid(r(x, chosen) - r(x, rejected))`.
pub fn rm_loss(rm: &RewardParams, batch: &[PreferenceInstance]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for inst in batch {
        let chosen = reward(rm, &inst.prompt, inst.chosen)?;
        let rejected = reward(rm, &inst.prompt, inst.rejected)?;
        total += neg_log_sigmoid(chosen - rejected);
    }
    Ok(total / batch.len() as f64)
}

/// Loss and analytic gradient of one batch in a single pass.
pub fn grad_rm_loss(
    rm: &RewardParams,
    batch: &[PreferenceInstance],
) -> Result<(f64, RewardGradient)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut grad = RewardGradient::zeros_like(rm);
    let mut total = 0.0;
    for inst in batch {
        let (rc, cache_c) = forward(rm, rm_input(&inst.prompt, inst.chosen))?;
        let (rr, cache_r) = forward(rm, rm_input(&inst.prompt, inst.rejected))?;
        let delta = rc - rr;
        total += neg_log_sigmoid(delta);
        // d/d delta of -log sigmoid(delta) is sigmoid(delta) - 1.
        let coeff = sigmoid(delta) - 1.0;
        backprop(rm, &cache_c, coeff, &mut grad);
        backprop(rm, &cache_r, -coeff, &mut grad);
    }
    let inv = 1.0 / batch.len() as f64;
    grad.scale(inv);
    Ok((total * inv, grad))
}

/// Mini-batch gradient descent on [`rm_loss`]; deterministic under the seed.
pub fn train_rm(
    init: &RewardParams,
    dataset: &[PreferenceInstance],
    config: &SftConfig,
) -> Result<(RewardParams, TrainReport)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let start = Instant::now();
    let mut rm = init.clone();
    let mut rng = seeding::rng(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if config.shuffle {
            seeding::shuffle(&mut order, &mut rng);
        }
        let mut epoch_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<PreferenceInstance> =
                chunk.iter().map(|&i| dataset[i].clone()).collect();
            let (loss, grad) = grad_rm_loss(&rm, &batch)?;
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::NonFiniteLoss {
                    stage: "rm",
                    step: epoch,
                    detail: format!("batch loss {loss}"),
                });
            }
            rm.apply_gradient(&grad, config.learning_rate);
            epoch_sum += loss * batch.len() as f64;
        }
        epoch_losses.push(epoch_sum / dataset.len() as f64);
    }

    let final_loss = rm_loss(&rm, dataset)?;
    Ok((
        rm,
        TrainReport {
            epoch_losses,
            final_loss,
            seed: config.seed,
            wall_clock_secs: start.elapsed().as_secs_f64(),
        },
    ))
}

/// Fraction of instances with `r(x, chosen) > r(x, rejected)`.
pub fn pairwise_accuracy(rm: &RewardParams, dataset: &[PreferenceInstance]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut hits = 0usize;
    for inst in dataset {
        if reward(rm, &inst.prompt, inst.chosen)? > reward(rm, &inst.prompt, inst.rejected)? {
            hits += 1;
        }
    }
    Ok(hits as f64 / dataset.len() as f64)
}

// ---------------------------------------------------------------------------
// Checkpoint format
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RmWeights {
    #[serde(rename = "W1")]
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w_out: Vec<f64>,
    b_out: f64,
}

/// On-disk reward-model checkpoint; `init_from` names the digest of the SFT
/// checkpoint the hidden layer was copied from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmCheckpoint {
    pub arch: CheckpointArch,
    pub vocab: LabelVocabulary,
    weights: RmWeights,
    pub init_from: String,
}

impl RmCheckpoint {
    pub fn new(rm: &RewardParams, vocab: &LabelVocabulary, init_from: String) -> Self {
        Self {
            arch: CheckpointArch {
                input_dim: rm.input_dim,
                hidden_dim: rm.hidden_dim,
            },
            vocab: vocab.clone(),
            weights: RmWeights {
                w1: rm.w1.clone(),
                b1: rm.b1.clone(),
                w_out: rm.w_out.clone(),
                b_out: rm.b_out,
            },
            init_from,
        }
    }

    pub fn into_params(self) -> Result<(RewardParams, LabelVocabulary, String)> {
        let rm = RewardParams {
            input_dim: self.arch.input_dim,
            hidden_dim: self.arch.hidden_dim,
            w1: self.weights.w1,
            b1: self.weights.b1,
            w_out: self.weights.w_out,
            b_out: self.weights.b_out,
        };
        rm.validate()?;
        Ok((rm, self.vocab, self.init_from))
    }
}

pub fn save_rm_checkpoint(
    rm: &RewardParams,
    vocab: &LabelVocabulary,
    init_from: String,
    path: &Path,
) -> Result<()> {
    io::write_json_atomic(path, &RmCheckpoint::new(rm, vocab, init_from))
}

pub fn load_rm_checkpoint(path: &Path) -> Result<(RewardParams, LabelVocabulary, String)> {
    let ckpt: RmCheckpoint = io::read_json(path)?;
    ckpt.into_params()
}
