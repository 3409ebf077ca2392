//! Hard-negative mining and preference-pair construction.
//!
//! Hard negatives are the non-relevant candidates the current scorer places
//! in the top-N for a query: prompts where the model over-estimates
//! relevance. Each hard negative becomes a preference instance whose chosen
//! response is the negative label and whose rejected response is the
//! positive one; symmetrically, each ground-truth positive yields an
//! instance preferring the positive label. Instances keep their query id so
//! the policy-optimization stage can group them per query.
//!
//! Scoring uses the greedy deterministic score, and instances are emitted in
//! `(query, rank)` order, so mining is a pure function of its inputs.

use serde::{Deserialize, Serialize};

use crate::corpus::{Query, QueryCandidates};
use crate::error::{Error, Result};
use crate::prompt::{build_prompt_context, Label, LabelVocabulary, PromptContext};
use crate::scorer::{rank, ScorerParams};
use crate::seeding;

/// Non-relevant candidates ranked inside the top-N of one query, in rank
/// order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardNegativeSet {
    pub query_id: String,
    pub members: Vec<String>,
}

/// One response-level preference: under the same prompt, `chosen` (the
/// ground-truth label) is preferred over `rejected` (the opposite label).
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceInstance {
    pub prompt: PromptContext,
    pub chosen: Label,
    pub rejected: Label,
}

/// How negatives are selected when building preference data. `Random`
/// replaces hard negatives with uniformly sampled non-relevant candidates of
/// the same count, keeping the dataset size fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiningStrategy {
    Hard,
    Random,
}

/// One line of `pref.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub query_id: String,
    pub cand_id: String,
    pub chosen: String,
    pub rejected: String,
    pub features: Vec<f64>,
}

/// Rank the query's candidates greedily and return the label-0 members of
/// the top-`min(n, |candidates|)` positions, in rank order.
pub fn mine_hard_negatives(
    params: &ScorerParams,
    query: &Query,
    candidates: &[crate::corpus::Candidate],
    n: usize,
) -> Result<HardNegativeSet> {
    let ranked = rank(params, query, candidates)?;
    let members = ranked
        .iter()
        .take(n)
        .filter(|r| !r.candidate.is_relevant())
        .map(|r| r.candidate.cand_id.clone())
        .collect();
    Ok(HardNegativeSet {
        query_id: query.query_id.clone(),
        members,
    })
}

/// Build the pairwise preference dataset over a held-out split.
///
/// For each query, every hard negative in the top-`n` yields an instance
/// with `(chosen = negative, rejected = positive)`, and every ground-truth
/// positive (top-N restricted or not — positives are taken from the whole
/// candidate list) yields `(chosen = positive, rejected = negative)`.
pub fn build_preferences(
    params: &ScorerParams,
    hold: &[QueryCandidates],
    n: usize,
) -> Result<Vec<PreferenceInstance>> {
    build_preferences_with(params, hold, n, MiningStrategy::Hard, 0)
}

/// [`build_preferences`] with a selectable negative source. Under
/// [`MiningStrategy::Random`], each query contributes as many negatives as
/// its hard-negative set would have, drawn uniformly (seeded) from all of
/// its non-relevant candidates. Emission order still follows the ranking.
pub fn build_preferences_with(
    params: &ScorerParams,
    hold: &[QueryCandidates],
    n: usize,
    strategy: MiningStrategy,
    seed: u64,
) -> Result<Vec<PreferenceInstance>> {
    let mut instances = Vec::new();
    for (qi, entry) in hold.iter().enumerate() {
        let ranked = rank(params, &entry.query, &entry.candidates)?;
        let hard_count = ranked
            .iter()
            .take(n)
            .filter(|r| !r.candidate.is_relevant())
            .count();

        // The set of negative cand_ids this query contributes.
        let selected: std::collections::BTreeSet<String> = match strategy {
            MiningStrategy::Hard => ranked
                .iter()
                .take(n)
                .filter(|r| !r.candidate.is_relevant())
                .map(|r| r.candidate.cand_id.clone())
                .collect(),
            MiningStrategy::Random => {
                let negatives: Vec<&str> = ranked
                    .iter()
                    .filter(|r| !r.candidate.is_relevant())
                    .map(|r| r.candidate.cand_id.as_str())
                    .collect();
                let mut rng = seeding::rng(seeding::mix(seed, qi as u64));
                seeding::sample_indices(negatives.len(), hard_count, &mut rng)
                    .into_iter()
                    .map(|i| negatives[i].to_string())
                    .collect()
            }
        };

        for r in &ranked {
            let c = &r.candidate;
            let preferred = if c.is_relevant() {
                Some(Label::Positive)
            } else if selected.contains(&c.cand_id) {
                Some(Label::Negative)
            } else {
                None
            };
            if let Some(chosen) = preferred {
                instances.push(PreferenceInstance {
                    prompt: build_prompt_context(&entry.query, c)?,
                    chosen,
                    rejected: chosen.opposite(),
                });
            }
        }
    }
    Ok(instances)
}

/// Render instances into `pref.jsonl` records through the vocabulary.
pub fn preference_records(
    instances: &[PreferenceInstance],
    vocab: &LabelVocabulary,
) -> Vec<PreferenceRecord> {
    instances
        .iter()
        .map(|inst| PreferenceRecord {
            query_id: inst.prompt.query_id.clone(),
            cand_id: inst.prompt.cand_id.clone(),
            chosen: vocab.render(inst.chosen).to_string(),
            rejected: vocab.render(inst.rejected).to_string(),
            features: inst.prompt.features.clone(),
        })
        .collect()
}

/// Rebuild instances from records plus the split they were mined from.
/// Verifies labels against the vocabulary and features against the rebuilt
/// prompt context.
pub fn instances_from_records(
    records: &[PreferenceRecord],
    hold: &[QueryCandidates],
    vocab: &LabelVocabulary,
) -> Result<Vec<PreferenceInstance>> {
    use std::collections::HashMap;
    let mut pairs: HashMap<(&str, &str), (&Query, &crate::corpus::Candidate)> = HashMap::new();
    for entry in hold {
        for c in &entry.candidates {
            pairs.insert(
                (entry.query.query_id.as_str(), c.cand_id.as_str()),
                (&entry.query, c),
            );
        }
    }
    let mut out = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let bad = |detail: String| Error::MalformedRecord {
            path: "pref.jsonl".into(),
            line: i + 1,
            detail,
        };
        let (query, cand) = pairs
            .get(&(rec.query_id.as_str(), rec.cand_id.as_str()))
            .ok_or_else(|| {
                bad(format!(
                    "pair ({}, {}) not in hold split",
                    rec.query_id, rec.cand_id
                ))
            })?;
        let chosen = vocab
            .parse(&rec.chosen)
            .ok_or_else(|| bad(format!("chosen label {:?} not in vocabulary", rec.chosen)))?;
        let rejected = vocab.parse(&rec.rejected).ok_or_else(|| {
            bad(format!(
                "rejected label {:?} not in vocabulary",
                rec.rejected
            ))
        })?;
        if chosen == rejected {
            return Err(bad("chosen equals rejected".into()));
        }
        let prompt = build_prompt_context(query, cand)?;
        if prompt.features != rec.features {
            return Err(bad("stored features disagree with rebuilt context".into()));
        }
        out.push(PreferenceInstance {
            prompt,
            chosen,
            rejected,
        });
    }
    Ok(out)
}
