//! The differentiable two-label relevance policy.
//!
//! A one-hidden-layer tanh network with a two-logit head stands in for a
//! large instruction-following backbone: `z = W2 * tanh(W1 * x + b1) + b2`,
//! where row 0 of the head is the positive-label logit and row 1 the
//! negative-label logit. Everything downstream is expressed over this pair:
//!
//! * the scalar relevance score is the sigmoid of the logit difference,
//! * label probabilities come from a temperature softmax with optional
//!   nucleus (top-p) truncation used only when sampling rollouts,
//! * rankings sort candidates by descending score with ascending-id ties,
//! * analytic gradients back the trainers and are verified against central
//!   finite differences.
//!
//! All operations are read-only on the parameters; trainers own mutation.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Candidate, Query};
use crate::error::{Error, Result};
use crate::io;
use crate::prompt::{build_prompt_context, Label, LabelVocabulary, PromptContext};
use crate::seeding;

/// Weights of the scorer. Shapes: `w1` is `hidden_dim x input_dim`, `b1` is
/// `hidden_dim`, `w2` is `2 x hidden_dim`, `b2` is `2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<Vec<f64>>,
    pub b2: Vec<f64>,
}

/// Logits for the two labels, positive first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelLogits {
    pub positive: f64,
    pub negative: f64,
}

/// Gradient with the same shape as [`ScorerParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<Vec<f64>>,
    pub b2: Vec<f64>,
}

/// Sampling distribution knobs. Training objectives use [`Sampling::train`]
/// (temperature 1, no truncation); nucleus truncation exists to mirror
/// rollout settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampling {
    pub temperature: f64,
    pub top_p: f64,
}

impl Sampling {
    pub fn new(temperature: f64, top_p: f64) -> Self {
        Self { temperature, top_p }
    }

    /// Temperature 1, top-p 1: the plain softmax used by all losses.
    pub fn train() -> Self {
        Self {
            temperature: 1.0,
            top_p: 1.0,
        }
    }
}

impl ScorerParams {
    /// Seeded initialization: uniform(-a, a) weights with
    /// `a = sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = seeding::rng(seed);
        let w1 = uniform_matrix(hidden_dim, input_dim, &mut rng);
        let w2 = uniform_matrix(2, hidden_dim, &mut rng);
        Self {
            input_dim,
            hidden_dim,
            w1,
            b1: vec![0.0; hidden_dim],
            w2,
            b2: vec![0.0; 2],
        }
    }

    /// All-zero parameters (logits are identically zero).
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            w1: vec![vec![0.0; input_dim]; hidden_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![vec![0.0; hidden_dim]; 2],
            b2: vec![0.0; 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let shape_ok = self.w1.len() == self.hidden_dim
            && self.w1.iter().all(|r| r.len() == self.input_dim)
            && self.b1.len() == self.hidden_dim
            && self.w2.len() == 2
            && self.w2.iter().all(|r| r.len() == self.hidden_dim)
            && self.b2.len() == 2;
        if !shape_ok {
            return Err(Error::Checkpoint(
                "scorer weight shapes are inconsistent".into(),
            ));
        }
        let finite = self
            .w1
            .iter()
            .flatten()
            .chain(self.b1.iter())
            .chain(self.w2.iter().flatten())
            .chain(self.b2.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Checkpoint(
                "scorer weights contain non-finite values".into(),
            ));
        }
        Ok(())
    }

    /// In-place gradient step `self -= step * grad`.
    pub fn apply_gradient(&mut self, grad: &Gradient, step: f64) {
        for (row, grow) in self.w1.iter_mut().zip(&grad.w1) {
            for (w, g) in row.iter_mut().zip(grow) {
                *w -= step * g;
            }
        }
        for (b, g) in self.b1.iter_mut().zip(&grad.b1) {
            *b -= step * g;
        }
        for (row, grow) in self.w2.iter_mut().zip(&grad.w2) {
            for (w, g) in row.iter_mut().zip(grow) {
                *w -= step * g;
            }
        }
        for (b, g) in self.b2.iter_mut().zip(&grad.b2) {
            *b -= step * g;
        }
    }
}

fn uniform_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| rand::Rng::random_range(rng, -a..a))
                .collect()
        })
        .collect()
}

impl Gradient {
    pub fn zeros_like(params: &ScorerParams) -> Self {
        Self {
            w1: vec![vec![0.0; params.input_dim]; params.hidden_dim],
            b1: vec![0.0; params.hidden_dim],
            w2: vec![vec![0.0; params.hidden_dim]; 2],
            b2: vec![0.0; 2],
        }
    }

    /// `self += scale * other`. Accumulation order is fixed by the caller,
    /// which keeps batch reductions deterministic.
    pub fn add_scaled(&mut self, other: &Gradient, scale: f64) {
        for (row, orow) in self.w1.iter_mut().zip(&other.w1) {
            for (g, o) in row.iter_mut().zip(orow) {
                *g += scale * o;
            }
        }
        for (g, o) in self.b1.iter_mut().zip(&other.b1) {
            *g += scale * o;
        }
        for (row, orow) in self.w2.iter_mut().zip(&other.w2) {
            for (g, o) in row.iter_mut().zip(orow) {
                *g += scale * o;
            }
        }
        for (g, o) in self.b2.iter_mut().zip(&other.b2) {
            *g += scale * o;
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
        for row in &mut self.w2 {
            for g in row {
                *g *= factor;
            }
        }
        for g in &mut self.b2 {
            *g *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w1
            .iter()
            .flatten()
            .chain(self.b1.iter())
            .chain(self.w2.iter().flatten())
            .chain(self.b2.iter())
            .all(|v| v.is_finite())
    }
}

pub(crate) struct ForwardCache {
    pub hidden: Vec<f64>,
    pub logits: [f64; 2],
}

pub(crate) fn forward(params: &ScorerParams, features: &[f64]) -> Result<ForwardCache> {
    if features.len() != params.input_dim {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim,
            got: features.len(),
        });
    }
    let hidden: Vec<f64> = params
        .w1
        .iter()
        .zip(&params.b1)
        .map(|(row, b)| {
            let a: f64 = row.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + b;
            a.tanh()
        })
        .collect();
    let mut logits = [0.0; 2];
    for (out, (row, b)) in logits.iter_mut().zip(params.w2.iter().zip(&params.b2)) {
        *out = row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + b;
    }
    Ok(ForwardCache { hidden, logits })
}

/// Gradient of `seed . z` with respect to the parameters, where `z` are the
/// two logits (a vector-Jacobian product through the network).
pub(crate) fn backprop_logits(
    params: &ScorerParams,
    features: &[f64],
    cache: &ForwardCache,
    seed: [f64; 2],
) -> Gradient {
    let mut grad = Gradient::zeros_like(params);
    // Head: z = W2 h + b2.
    for (out, s) in seed.iter().enumerate() {
        for (g, h) in grad.w2[out].iter_mut().zip(&cache.hidden) {
            *g = s * h;
        }
        grad.b2[out] = *s;
    }
    // Hidden: h = tanh(W1 x + b1).
    for i in 0..params.hidden_dim {
        let dh: f64 = seed[0] * params.w2[0][i] + seed[1] * params.w2[1][i];
        let da = dh * (1.0 - cache.hidden[i] * cache.hidden[i]);
        for (g, x) in grad.w1[i].iter_mut().zip(features) {
            *g = da * x;
        }
        grad.b1[i] = da;
    }
    grad
}

/// Label logits for one prompt context.
pub fn logits(params: &ScorerParams, x: &PromptContext) -> Result<LabelLogits> {
    let cache = forward(params, &x.features)?;
    Ok(LabelLogits {
        positive: cache.logits[0],
        negative: cache.logits[1],
    })
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Scalar relevance score: sigmoid of (positive - negative) logit.
pub fn score(params: &ScorerParams, x: &PromptContext) -> Result<f64> {
    let l = logits(params, x)?;
    Ok(sigmoid(l.positive - l.negative))
}

/// Temperature softmax over the two logits, positive first.
pub(crate) fn softmax2(logits: [f64; 2], temperature: f64) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = ((logits[0] - m) / temperature).exp();
    let e1 = ((logits[1] - m) / temperature).exp();
    let z = e0 + e1;
    [e0 / z, e1 / z]
}

/// Nucleus truncation for a two-label distribution: when the larger
/// probability reaches `top_p`, all mass moves to the argmax (ties resolve
/// to the positive label). Returns the distribution and whether truncation
/// fired.
pub(crate) fn truncate2(probs: [f64; 2], top_p: f64) -> ([f64; 2], bool) {
    let argmax_positive = probs[0] >= probs[1];
    let p_max = if argmax_positive { probs[0] } else { probs[1] };
    if p_max >= top_p {
        if argmax_positive {
            ([1.0, 0.0], true)
        } else {
            ([0.0, 1.0], true)
        }
    } else {
        (probs, false)
    }
}

/// Both label probabilities under the given sampling distribution.
pub fn label_probs(
    params: &ScorerParams,
    x: &PromptContext,
    sampling: Sampling,
) -> Result<[f64; 2]> {
    if sampling.temperature <= 0.0 {
        return Err(Error::InvalidConfig(
            "label_probs requires temperature > 0".into(),
        ));
    }
    if sampling.top_p <= 0.0 || sampling.top_p > 1.0 {
        return Err(Error::InvalidConfig("top_p must lie in (0, 1]".into()));
    }
    let cache = forward(params, &x.features)?;
    let probs = softmax2(cache.logits, sampling.temperature);
    Ok(truncate2(probs, sampling.top_p).0)
}

/// Probability of one label under the given sampling distribution.
pub fn label_prob(
    params: &ScorerParams,
    x: &PromptContext,
    y: Label,
    sampling: Sampling,
) -> Result<f64> {
    Ok(label_probs(params, x, sampling)?[y.index()])
}

/// Draw a label. Temperature 0 means greedy argmax with positive-label ties.
pub fn sample_label(
    params: &ScorerParams,
    x: &PromptContext,
    sampling: Sampling,
    rng: &mut ChaCha8Rng,
) -> Result<Label> {
    if sampling.temperature == 0.0 {
        let l = logits(params, x)?;
        return Ok(if l.positive >= l.negative {
            Label::Positive
        } else {
            Label::Negative
        });
    }
    let probs = label_probs(params, x, sampling)?;
    let u: f64 = rand::Rng::random(rng);
    Ok(if u < probs[0] {
        Label::Positive
    } else {
        Label::Negative
    })
}

/// A candidate with its greedy relevance score.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedCandidate {
    pub candidate: Candidate,
    pub score: f64,
}

/// Rank candidates by descending score; ties break by ascending `cand_id`,
/// which makes the ordering stable under permutation of the input.
pub fn rank(
    params: &ScorerParams,
    query: &Query,
    candidates: &[Candidate],
) -> Result<Vec<RankedCandidate>> {
    let mut ranked = Vec::with_capacity(candidates.len());
    for c in candidates {
        let ctx = build_prompt_context(query, c)?;
        ranked.push(RankedCandidate {
            candidate: c.clone(),
            score: score(params, &ctx)?,
        });
    }
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.candidate.cand_id.cmp(&b.candidate.cand_id))
    });
    Ok(ranked)
}

/// Gradient of `-log softmax(z)[y]` (temperature 1, no truncation) with
/// respect to every parameter. The logit gradient is `p - onehot(y)`.
pub fn grad_nll(params: &ScorerParams, x: &PromptContext, y: Label) -> Result<Gradient> {
    let cache = forward(params, &x.features)?;
    let p = softmax2(cache.logits, 1.0);
    let mut seed = [p[0], p[1]];
    seed[y.index()] -= 1.0;
    Ok(backprop_logits(params, &x.features, &cache, seed))
}

/// Negative log-probability of `y` at temperature 1, computed stably.
pub(crate) fn nll(cache: &ForwardCache, y: Label) -> f64 {
    let z = cache.logits;
    let m = z[0].max(z[1]);
    let lse = m + ((z[0] - m).exp() + (z[1] - m).exp()).ln();
    lse - z[y.index()]
}

// ---------------------------------------------------------------------------
// Checkpoint format
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointArch {
    pub input_dim: usize,
    pub hidden_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointWeights {
    #[serde(rename = "W1")]
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    #[serde(rename = "W2")]
    w2: Vec<Vec<f64>>,
    b2: Vec<f64>,
}

/// On-disk scorer checkpoint:
/// `{"arch": {...}, "vocab": {...}, "weights": {"W1": ..., "b1": ..., "W2": ..., "b2": ...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub arch: CheckpointArch,
    pub vocab: LabelVocabulary,
    weights: CheckpointWeights,
}

impl Checkpoint {
    pub fn new(params: &ScorerParams, vocab: &LabelVocabulary) -> Self {
        Self {
            arch: CheckpointArch {
                input_dim: params.input_dim,
                hidden_dim: params.hidden_dim,
            },
            vocab: vocab.clone(),
            weights: CheckpointWeights {
                w1: params.w1.clone(),
                b1: params.b1.clone(),
                w2: params.w2.clone(),
                b2: params.b2.clone(),
            },
        }
    }

    pub fn into_params(self) -> Result<(ScorerParams, LabelVocabulary)> {
        let params = ScorerParams {
            input_dim: self.arch.input_dim,
            hidden_dim: self.arch.hidden_dim,
            w1: self.weights.w1,
            b1: self.weights.b1,
            w2: self.weights.w2,
            b2: self.weights.b2,
        };
        params.validate()?;
        self.vocab.validate()?;
        Ok((params, self.vocab))
    }
}

/// Write a checkpoint atomically (temp file + rename).
pub fn save_checkpoint(params: &ScorerParams, vocab: &LabelVocabulary, path: &Path) -> Result<()> {
    io::write_json_atomic(path, &Checkpoint::new(params, vocab))
}

/// Load a checkpoint; `load(save(p))` reproduces scores bit-exactly.
pub fn load_checkpoint(path: &Path) -> Result<(ScorerParams, LabelVocabulary)> {
    let ckpt: Checkpoint = io::read_json(path)?;
    ckpt.into_params()
}
