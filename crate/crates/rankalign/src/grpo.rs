//! Group-relative policy optimization over query-level groups.
//!
//! Each step samples one label per prompt, scores the samples with the
//! reward model, normalizes rewards *within a group* into advantages
//! `A_i = (r_i - mean) / (std + delta)`, and descends the clipped surrogate
//!
//! ```text
//! L = -(1/G) sum_i min(rho_i * A_i, clip(rho_i, 1-eps, 1+eps) * A_i)
//!     + beta * (1/G) sum_i KL(pi_theta(.|x_i) || pi_ref(.|x_i))
//! ```
//!
//! where `rho_i` is the probability ratio of the sampled label against a
//! reference policy frozen at the SFT weights. Groups are query-level by
//! default — distinct candidate prompts sharing one query — which matches
//! the listwise structure of reranking; prompt-level grouping (one prompt
//! replicated, several samples) is available for comparison.
//!
//! Rollout sampling honors the configured temperature and top-p. Ratios and
//! the KL term are computed on the smooth softmax-with-temperature
//! densities (no truncation), so the surrogate stays differentiable; the
//! public [`policy_ratio`] and [`grpo_surrogate`] accept truncated
//! distributions too, treating truncated probabilities as locally constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mining::PreferenceInstance;
use crate::prompt::{Label, PromptContext};
use crate::reward::{self, RewardParams};
use crate::scorer::{self, sample_label, Gradient, Sampling, ScorerParams};
use crate::seeding;
use crate::sft::TrainReport;

/// Whether groups contrast distinct prompts of one query or repeated samples
/// of one prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingMode {
    QueryLevel,
    PromptLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoConfig {
    /// Group size G.
    pub group_size: usize,
    /// Clip width for the probability ratio.
    pub clip_epsilon: f64,
    /// Stabilizer added to the reward standard deviation.
    pub advantage_delta: f64,
    /// Weight of the KL regularizer against the frozen reference.
    pub kl_coefficient: f64,
    pub temperature: f64,
    pub top_p: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
    pub grouping_mode: GroupingMode,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 5,
            clip_epsilon: 0.2,
            advantage_delta: 1e-6,
            kl_coefficient: 0.04,
            temperature: 1.0,
            top_p: 0.9,
            learning_rate: 0.05,
            steps: 60,
            seed: 0,
            grouping_mode: GroupingMode::QueryLevel,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::InvalidConfig("group_size must be >= 2".into()));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(Error::InvalidConfig(
                "clip_epsilon must lie in (0, 1)".into(),
            ));
        }
        if self.advantage_delta <= 0.0 {
            return Err(Error::InvalidConfig("advantage_delta must be > 0".into()));
        }
        if self.kl_coefficient < 0.0 {
            return Err(Error::InvalidConfig("kl_coefficient must be >= 0".into()));
        }
        if self.temperature <= 0.0 {
            return Err(Error::InvalidConfig("temperature must be > 0".into()));
        }
        if self.top_p <= 0.0 || self.top_p > 1.0 {
            return Err(Error::InvalidConfig("top_p must lie in (0, 1]".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(
                "learning_rate must be finite and >= 0".into(),
            ));
        }
        if self.steps < 1 {
            return Err(Error::InvalidConfig("steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// One rollout group. `sampled_labels` and `rewards` are parallel to
/// `prompts` once the group has been rolled out; [`form_groups`] leaves them
/// empty.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGroup {
    pub query_id: String,
    pub prompts: Vec<PromptContext>,
    pub sampled_labels: Vec<Label>,
    pub rewards: Vec<f64>,
}

/// Group-normalized advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageVector {
    pub values: Vec<f64>,
}

/// Per-step training log line (`grpo_steps.jsonl`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoStepLog {
    pub step: usize,
    pub mean_reward: f64,
    pub mean_abs_advantage: f64,
    pub clip_fraction: f64,
    pub kl: f64,
}

/// Everything a GRPO run produces.
#[derive(Debug, Clone)]
pub struct GrpoOutcome {
    pub params: ScorerParams,
    pub report: TrainReport,
    pub step_logs: Vec<GrpoStepLog>,
    /// Samples dropped because the reference assigned them zero probability
    /// (possible only with truncated distributions).
    pub excluded_samples: usize,
}

/// Partition preference prompts into rollout groups.
///
/// Query-level: each query's prompts are shuffled (seeded) and chunked into
/// groups of at most `g`; chunks of size 1 are dropped since a singleton has
/// zero reward deviation and contributes nothing. Prompt-level: every prompt
/// forms one group of `g` copies of itself.
pub fn form_groups(
    dataset: &[PreferenceInstance],
    g: usize,
    mode: GroupingMode,
    seed: u64,
) -> Vec<QueryGroup> {
    match mode {
        GroupingMode::QueryLevel => {
            // Group prompts per query, preserving first-appearance order.
            let mut order: Vec<&str> = Vec::new();
            let mut by_query: std::collections::HashMap<&str, Vec<&PromptContext>> =
                std::collections::HashMap::new();
            for inst in dataset {
                let qid = inst.prompt.query_id.as_str();
                let slot = by_query.entry(qid).or_default();
                if slot.is_empty() {
                    order.push(qid);
                }
                slot.push(&inst.prompt);
            }
            let mut groups = Vec::new();
            for (qi, qid) in order.iter().enumerate() {
                let mut prompts: Vec<&PromptContext> = by_query.remove(qid).unwrap();
                let mut rng = seeding::rng(seeding::mix(seed, qi as u64));
                seeding::shuffle(&mut prompts, &mut rng);
                for chunk in prompts.chunks(g) {
                    if chunk.len() < 2 {
                        continue;
                    }
                    groups.push(QueryGroup {
                        query_id: (*qid).to_string(),
                        prompts: chunk.iter().map(|p| (*p).clone()).collect(),
                        sampled_labels: Vec::new(),
                        rewards: Vec::new(),
                    });
                }
            }
            groups
        }
        GroupingMode::PromptLevel => dataset
            .iter()
            .map(|inst| QueryGroup {
                query_id: inst.prompt.query_id.clone(),
                prompts: vec![inst.prompt.clone(); g],
                sampled_labels: Vec::new(),
                rewards: Vec::new(),
            })
            .collect(),
    }
}

/// Normalize rewards within a group: `(r - mean) / (population std + delta)`.
///
/// Rewards are pre-shifted by the group minimum before the moments are
/// taken; algebraically a no-op, it keeps the computation bit-identical
/// under common shifts of exactly representable rewards.
pub fn compute_advantages(rewards: &[f64], delta: f64) -> AdvantageVector {
    if rewards.is_empty() {
        return AdvantageVector { values: Vec::new() };
    }
    let min = rewards.iter().cloned().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = rewards.iter().map(|r| r - min).collect();
    let n = shifted.len() as f64;
    let mean = shifted.iter().sum::<f64>() / n;
    let deviations: Vec<f64> = shifted.iter().map(|s| s - mean).collect();
    let variance = deviations.iter().map(|d| d * d).sum::<f64>() / n;
    let std = variance.sqrt();
    AdvantageVector {
        values: deviations.iter().map(|d| d / (std + delta)).collect(),
    }
}

/// Probability ratio `pi_theta(y|x) / pi_ref(y|x)` under the same sampling
/// distribution on both sides.
pub fn policy_ratio(
    params: &ScorerParams,
    reference: &ScorerParams,
    x: &PromptContext,
    y: Label,
    sampling: Sampling,
) -> Result<f64> {
    let p = scorer::label_prob(params, x, y, sampling)?;
    let q = scorer::label_prob(reference, x, y, sampling)?;
    if q == 0.0 {
        return Err(Error::ZeroReferenceProbability);
    }
    Ok(p / q)
}

/// Two-label KL divergence `KL(p || q)` with the `0 ln 0 = 0` convention;
/// infinite when `p` has mass where `q` has none.
fn kl2(p: [f64; 2], q: [f64; 2]) -> f64 {
    let mut kl = 0.0;
    for i in 0..2 {
        if p[i] > 0.0 {
            if q[i] > 0.0 {
                kl += p[i] * (p[i] / q[i]).ln();
            } else {
                return f64::INFINITY;
            }
        }
    }
    kl
}

struct SampleEval {
    clipped: bool,
    surrogate_term: f64,
    kl: f64,
    /// Logit-space gradient seed; zero when the distribution was truncated
    /// (locally constant in the parameters).
    seed: [f64; 2],
    excluded: bool,
}

#[allow(clippy::too_many_arguments)]
fn eval_sample(
    params: &ScorerParams,
    reference: &ScorerParams,
    x: &PromptContext,
    y: Label,
    advantage: f64,
    epsilon: f64,
    beta: f64,
    sampling: Sampling,
    group_len: f64,
) -> Result<SampleEval> {
    let cache = scorer::forward(params, &x.features)?;
    let raw_p = scorer::softmax2(cache.logits, sampling.temperature);
    let (p, p_truncated) = scorer::truncate2(raw_p, sampling.top_p);
    let ref_cache = scorer::forward(reference, &x.features)?;
    let raw_q = scorer::softmax2(ref_cache.logits, sampling.temperature);
    let (q, _) = scorer::truncate2(raw_q, sampling.top_p);

    if q[y.index()] == 0.0 {
        return Ok(SampleEval {
            clipped: false,
            surrogate_term: 0.0,
            kl: 0.0,
            seed: [0.0, 0.0],
            excluded: true,
        });
    }

    let ratio = p[y.index()] / q[y.index()];
    let clipped_ratio = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    let unclipped = ratio * advantage;
    let clipped = clipped_ratio * advantage;
    let surrogate_term = unclipped.min(clipped);
    let kl = kl2(p, q);

    let mut seed = [0.0, 0.0];
    if !p_truncated {
        let inv_t = 1.0 / sampling.temperature;
        // Policy term: active only when the unclipped branch attains the min.
        if unclipped <= clipped {
            let coeff = -(1.0 / group_len) * advantage / q[y.index()];
            let py = p[y.index()];
            for j in 0..2 {
                let delta = if j == y.index() { 1.0 } else { 0.0 };
                seed[j] += coeff * inv_t * py * (delta - p[j]);
            }
        }
        // KL term: d KL / d z_j = (1/T) p_j (ln(p_j/q_j) - KL).
        if beta > 0.0 && kl.is_finite() {
            for j in 0..2 {
                if p[j] > 0.0 && q[j] > 0.0 {
                    seed[j] += (beta / group_len) * inv_t * p[j] * ((p[j] / q[j]).ln() - kl);
                }
            }
        }
    }

    Ok(SampleEval {
        clipped: ratio < 1.0 - epsilon || ratio > 1.0 + epsilon,
        surrogate_term,
        kl,
        seed,
        excluded: false,
    })
}

/// Clipped surrogate loss of one rolled-out group (lower is better):
/// policy term plus `beta` times the mean closed-form KL to the reference.
pub fn grpo_surrogate(
    params: &ScorerParams,
    reference: &ScorerParams,
    group: &QueryGroup,
    advantages: &AdvantageVector,
    epsilon: f64,
    beta: f64,
    sampling: Sampling,
) -> Result<f64> {
    if group.prompts.len() != group.sampled_labels.len()
        || group.prompts.len() != advantages.values.len()
    {
        return Err(Error::InvalidConfig("group lists are not parallel".into()));
    }
    let g = group.prompts.len() as f64;
    let mut policy_sum = 0.0;
    let mut kl_sum = 0.0;
    for ((x, &y), &a) in group
        .prompts
        .iter()
        .zip(&group.sampled_labels)
        .zip(&advantages.values)
    {
        let eval = eval_sample(params, reference, x, y, a, epsilon, beta, sampling, g)?;
        if eval.excluded {
            return Err(Error::ZeroReferenceProbability);
        }
        policy_sum += eval.surrogate_term;
        kl_sum += eval.kl;
    }
    Ok(-policy_sum / g + beta * kl_sum / g)
}

/// Analytic gradient of [`grpo_surrogate`] with the sampled labels held
/// fixed; advantages, rewards, and the reference are constants.
pub fn grad_grpo_surrogate(
    params: &ScorerParams,
    reference: &ScorerParams,
    group: &QueryGroup,
    advantages: &AdvantageVector,
    epsilon: f64,
    beta: f64,
    sampling: Sampling,
) -> Result<(f64, Gradient)> {
    if group.prompts.len() != group.sampled_labels.len()
        || group.prompts.len() != advantages.values.len()
    {
        return Err(Error::InvalidConfig("group lists are not parallel".into()));
    }
    let g = group.prompts.len() as f64;
    let mut grad = Gradient::zeros_like(params);
    let mut policy_sum = 0.0;
    let mut kl_sum = 0.0;
    for ((x, &y), &a) in group
        .prompts
        .iter()
        .zip(&group.sampled_labels)
        .zip(&advantages.values)
    {
        let eval = eval_sample(params, reference, x, y, a, epsilon, beta, sampling, g)?;
        if eval.excluded {
            return Err(Error::ZeroReferenceProbability);
        }
        policy_sum += eval.surrogate_term;
        kl_sum += eval.kl;
        if eval.seed != [0.0, 0.0] {
            let cache = scorer::forward(params, &x.features)?;
            grad.add_scaled(
                &scorer::backprop_logits(params, &x.features, &cache, eval.seed),
                1.0,
            );
        }
    }
    Ok((-policy_sum / g + beta * kl_sum / g, grad))
}

/// Run GRPO from an SFT initialization. The reference policy is frozen at
/// `init` for the whole run; each step refreshes groups, samples one label
/// per prompt, rewards the samples, and takes one surrogate descent step.
pub fn train_grpo(
    init: &ScorerParams,
    rm: &RewardParams,
    dataset: &[PreferenceInstance],
    config: &GrpoConfig,
) -> Result<GrpoOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let start = std::time::Instant::now();
    let reference = init.clone();
    let mut params = init.clone();
    let rollout = Sampling::new(config.temperature, config.top_p);
    // Densities for ratios and KL stay untruncated: top-p shapes rollouts
    // only, and the surrogate stays smooth.
    let density = Sampling::new(config.temperature, 1.0);

    let mut step_logs = Vec::with_capacity(config.steps);
    let mut losses = Vec::with_capacity(config.steps);
    let mut excluded_total = 0usize;

    for step in 0..config.steps {
        let step_seed = seeding::mix(config.seed, step as u64);
        // Group forming and rollouts draw from domain-separated streams so
        // neither consumer ever reuses the other's seed.
        let group_seed = seeding::hash64(step_seed, "groups");
        let rollout_seed = seeding::hash64(step_seed, "rollout");
        let mut groups = form_groups(dataset, config.group_size, config.grouping_mode, group_seed);

        // Rollout: sample labels and collect rewards, one rng stream per
        // (step, group index).
        for (gi, group) in groups.iter_mut().enumerate() {
            let mut rng = seeding::rng(seeding::mix(rollout_seed, gi as u64));
            for x in &group.prompts {
                let y = sample_label(&params, x, rollout, &mut rng)?;
                group.sampled_labels.push(y);
                group.rewards.push(reward::reward(rm, x, y)?);
            }
        }

        let mut total_grad = Gradient::zeros_like(&params);
        let mut total_loss = 0.0;
        let mut reward_sum = 0.0;
        let mut abs_adv_sum = 0.0;
        let mut kl_sum = 0.0;
        let mut clip_count = 0usize;
        let mut sample_count = 0usize;

        for group in &groups {
            let advantages = compute_advantages(&group.rewards, config.advantage_delta);
            let g = group.prompts.len() as f64;
            let mut policy_sum = 0.0;
            let mut group_kl = 0.0;
            let mut included = 0usize;
            for (i, x) in group.prompts.iter().enumerate() {
                let eval = eval_sample(
                    &params,
                    &reference,
                    x,
                    group.sampled_labels[i],
                    advantages.values[i],
                    config.clip_epsilon,
                    config.kl_coefficient,
                    density,
                    g,
                )?;
                if eval.excluded {
                    excluded_total += 1;
                    continue;
                }
                included += 1;
                policy_sum += eval.surrogate_term;
                group_kl += eval.kl;
                if eval.clipped {
                    clip_count += 1;
                }
                reward_sum += group.rewards[i];
                abs_adv_sum += advantages.values[i].abs();
                kl_sum += eval.kl;
                if eval.seed != [0.0, 0.0] {
                    let cache = scorer::forward(&params, &x.features)?;
                    total_grad.add_scaled(
                        &scorer::backprop_logits(&params, &x.features, &cache, eval.seed),
                        1.0,
                    );
                }
            }
            if included == 0 {
                continue;
            }
            total_loss += -policy_sum / g + config.kl_coefficient * group_kl / g;
            sample_count += included;
        }

        if groups.is_empty() || sample_count == 0 {
            return Err(Error::InvalidConfig(
                "no usable groups: every query contributes fewer than 2 prompts".into(),
            ));
        }
        let num_groups = groups.len() as f64;
        total_loss /= num_groups;
        total_grad.scale(1.0 / num_groups);
        if !total_loss.is_finite() || !total_grad.is_finite() {
            return Err(Error::NonFiniteLoss {
                stage: "grpo",
                step,
                detail: format!("surrogate {total_loss} over {} groups", groups.len()),
            });
        }
        params.apply_gradient(&total_grad, config.learning_rate);

        losses.push(total_loss);
        step_logs.push(GrpoStepLog {
            step,
            mean_reward: reward_sum / sample_count as f64,
            mean_abs_advantage: abs_adv_sum / sample_count as f64,
            clip_fraction: clip_count as f64 / sample_count as f64,
            kl: kl_sum / sample_count as f64,
        });
    }

    let final_loss = *losses.last().unwrap();
    Ok(GrpoOutcome {
        params,
        report: TrainReport {
            epoch_losses: losses,
            final_loss,
            seed: config.seed,
            wall_clock_secs: start.elapsed().as_secs_f64(),
        },
        step_logs,
        excluded_samples: excluded_total,
    })
}
