//! Supervised fine-tuning of the scorer on labeled prompt contexts.
//!
//! Minimizes the mean negative log-likelihood of the gold label under the
//! temperature-1 softmax, with plain mini-batch gradient descent. No
//! adaptive optimizer: runs are exactly reproducible from the seed and the
//! gradient path stays auditable.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::{Label, PromptContext};
use crate::scorer::{self, Gradient, ScorerParams};
use crate::seeding;

/// Mini-batch gradient descent settings, shared by the SFT and reward-model
/// trainers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for SftConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 40,
            batch_size: 32,
            seed: 0,
            shuffle: true,
        }
    }
}

impl SftConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(
                "learning_rate must be finite and >= 0".into(),
            ));
        }
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::InvalidConfig(
                "epochs and batch_size must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of a training run. The wall clock is kept out of the serialized
/// form so reports from identical seeds are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    pub seed: u64,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

/// Mean `-log p(y | x)` over the batch at temperature 1, top-p 1.
pub fn sft_loss(params: &ScorerParams, batch: &[(PromptContext, Label)]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for (x, y) in batch {
        let cache = scorer::forward(params, &x.features)?;
        total += scorer::nll(&cache, *y);
    }
    Ok(total / batch.len() as f64)
}

/// Loss and gradient of one batch in a single pass (mean over examples).
pub(crate) fn sft_batch_grad(
    params: &ScorerParams,
    batch: &[(PromptContext, Label)],
) -> Result<(f64, Gradient)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut grad = Gradient::zeros_like(params);
    let mut total = 0.0;
    for (x, y) in batch {
        let cache = scorer::forward(params, &x.features)?;
        total += scorer::nll(&cache, *y);
        let p = scorer::softmax2(cache.logits, 1.0);
        let mut seed = [p[0], p[1]];
        seed[y.index()] -= 1.0;
        grad.add_scaled(
            &scorer::backprop_logits(params, &x.features, &cache, seed),
            1.0,
        );
    }
    let inv = 1.0 / batch.len() as f64;
    grad.scale(inv);
    Ok((total * inv, grad))
}

/// Mini-batch gradient descent on [`sft_loss`]. Deterministic under the
/// config seed; aborts on a non-finite loss.
pub fn train_sft(
    init: &ScorerParams,
    dataset: &[(PromptContext, Label)],
    config: &SftConfig,
) -> Result<(ScorerParams, TrainReport)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let start = Instant::now();
    let mut params = init.clone();
    let mut rng = seeding::rng(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if config.shuffle {
            seeding::shuffle(&mut order, &mut rng);
        }
        let mut epoch_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(PromptContext, Label)> =
                chunk.iter().map(|&i| dataset[i].clone()).collect();
            let (loss, grad) = sft_batch_grad(&params, &batch)?;
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::NonFiniteLoss {
                    stage: "sft",
                    step: epoch,
                    detail: format!("batch loss {loss}"),
                });
            }
            params.apply_gradient(&grad, config.learning_rate);
            epoch_sum += loss * batch.len() as f64;
        }
        epoch_losses.push(epoch_sum / dataset.len() as f64);
    }

    let final_loss = sft_loss(&params, dataset)?;
    Ok((
        params,
        TrainReport {
            epoch_losses,
            final_loss,
            seed: config.seed,
            wall_clock_secs: start.elapsed().as_secs_f64(),
        },
    ))
}
