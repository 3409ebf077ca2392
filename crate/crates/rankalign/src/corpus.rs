//! Seeded synthetic hybrid-modality retrieval corpora.
//!
//! A corpus is a set of queries, each with a fixed-size candidate pool mixing
//! text, image, and table items. Relevant candidates are noisy copies of the
//! query latent; non-relevant ones are independent draws. Every candidate of
//! modality `m` additionally carries a fixed per-corpus offset vector scaled
//! by `modality_offset_scale`, which simulates the systematic score bias a
//! single-modality scorer exhibits across modalities. Labels are re-derived
//! from the cosine threshold *after* noise, so stored labels never contradict
//! the stored geometry.
//!
//! Generation is a pure function of `(config, seed)`: each query draws from
//! its own stream derived from `(seed, query index)`, so the corpus is
//! reproducible item by item.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;

/// Fraction of each query's candidate slots constructed as noisy copies of
/// the query latent (at least one per query). The achieved positive rate
/// follows from the geometry and `relevance_threshold`.
const CONSTRUCTED_POSITIVE_RATE: f64 = 0.3;

/// Candidate modality tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Image,
    Table,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Text, Modality::Image, Modality::Table];

    /// One-hot encoding in (text, image, table) order.
    pub fn one_hot(self) -> [f64; 3] {
        match self {
            Modality::Text => [1.0, 0.0, 0.0],
            Modality::Image => [0.0, 1.0, 0.0],
            Modality::Table => [0.0, 0.0, 1.0],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Image => "image",
            Modality::Table => "table",
        }
    }
}

/// Corpus generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub num_queries: usize,
    pub candidates_per_query: usize,
    pub feature_dim: usize,
    /// Fractions of (text, image, table) candidates; must sum to 1.
    pub modality_mix: [f64; 3],
    /// Strength of the per-modality offset added to every candidate.
    pub modality_offset_scale: f64,
    /// Standard deviation of the noise added to relevant candidates.
    pub noise_scale: f64,
    /// Cosine cutoff for the relevance label, applied after noise.
    pub relevance_threshold: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        // Candidate mix of roughly 28.8% text, 25.7% image, 50.0% table,
        // renormalized to sum to one.
        let text = 0.288 / 1.045;
        let image = 0.257 / 1.045;
        Self {
            num_queries: 200,
            candidates_per_query: 10,
            feature_dim: 16,
            modality_mix: [text, image, 1.0 - text - image],
            modality_offset_scale: 0.5,
            noise_scale: 0.25,
            relevance_threshold: 0.7,
            seed: 0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_queries < 1 || self.candidates_per_query < 1 {
            return Err(Error::InvalidConfig("counts must be >= 1".into()));
        }
        if self.feature_dim < 2 {
            return Err(Error::InvalidConfig("feature_dim must be >= 2".into()));
        }
        if self.modality_mix.iter().any(|&f| f < 0.0) {
            return Err(Error::InvalidConfig(
                "modality_mix fractions must be nonnegative".into(),
            ));
        }
        let sum: f64 = self.modality_mix.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "modality_mix must sum to 1 (got {sum})"
            )));
        }
        if self.modality_offset_scale < 0.0 || self.noise_scale < 0.0 {
            return Err(Error::InvalidConfig("scales must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One retrieval query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub features: Vec<f64>,
}

/// One retrievable item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub cand_id: String,
    pub modality: Modality,
    pub features: Vec<f64>,
    /// 1 relevant, 0 non-relevant.
    pub label: u8,
}

impl Candidate {
    pub fn is_relevant(&self) -> bool {
        self.label == 1
    }
}

/// A query together with its candidate pool; one line of `corpus.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryCandidates {
    #[serde(flatten)]
    pub query: Query,
    pub candidates: Vec<Candidate>,
}

/// Disjoint corpus splits.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplits {
    pub sft: Vec<QueryCandidates>,
    pub hold: Vec<QueryCandidates>,
    pub test: Vec<QueryCandidates>,
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

fn sample_modality(mix: &[f64; 3], rng: &mut rand_chacha::ChaCha8Rng) -> Modality {
    let u: f64 = rand::Rng::random(rng);
    let mut acc = 0.0;
    for (m, &f) in Modality::ALL.iter().zip(mix) {
        acc += f;
        if u < acc {
            return *m;
        }
    }
    Modality::Table
}

/// Per-corpus unit offset directions, one per modality.
fn modality_offsets(config: &CorpusConfig) -> [Vec<f64>; 3] {
    let mut rng = seeding::rng(seeding::hash64(config.seed, "modality-offsets"));
    let mut out: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for slot in &mut out {
        let mut v: Vec<f64> = (0..config.feature_dim)
            .map(|_| seeding::standard_normal(&mut rng))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        *slot = v;
    }
    out
}

/// Generate a corpus. Pure function of `(config, config.seed)`.
///
/// Rejects configurations whose achieved positive rate over the whole corpus
/// is 0 or 1: such a threshold makes every downstream objective degenerate.
pub fn generate_corpus(config: &CorpusConfig) -> Result<Vec<QueryCandidates>> {
    config.validate()?;
    let offsets = modality_offsets(config);
    let d = config.feature_dim;
    let n = config.candidates_per_query;
    let n_pos = ((CONSTRUCTED_POSITIVE_RATE * n as f64).round() as usize).clamp(1, n);

    let mut corpus = Vec::with_capacity(config.num_queries);
    let mut positives = 0usize;
    for qi in 0..config.num_queries {
        let mut rng = seeding::rng(seeding::mix(config.seed, qi as u64));
        let query = Query {
            query_id: format!("q{qi:05}"),
            features: (0..d).map(|_| seeding::standard_normal(&mut rng)).collect(),
        };
        let pos_slots = seeding::sample_indices(n, n_pos, &mut rng);
        let mut candidates = Vec::with_capacity(n);
        for cj in 0..n {
            let modality = sample_modality(&config.modality_mix, &mut rng);
            let offset = &offsets[modality as usize];
            let copy_of_query = pos_slots.contains(&cj);
            let features: Vec<f64> = (0..d)
                .map(|k| {
                    let noise = seeding::standard_normal(&mut rng);
                    let base = if copy_of_query {
                        query.features[k] + config.noise_scale * noise
                    } else {
                        noise
                    };
                    base + config.modality_offset_scale * offset[k]
                })
                .collect();
            let label = u8::from(cosine(&query.features, &features) >= config.relevance_threshold);
            positives += label as usize;
            candidates.push(Candidate {
                cand_id: format!("q{qi:05}_c{cj:03}"),
                modality,
                features,
                label,
            });
        }
        corpus.push(QueryCandidates { query, candidates });
    }

    let total = config.num_queries * n;
    if positives == 0 || positives == total {
        return Err(Error::DegenerateThreshold { positives, total });
    }
    Ok(corpus)
}

/// Split a corpus into disjoint (sft, hold, test) parts.
///
/// Hold and test sizes are `floor(n * ratio)`; the remainder goes to sft.
/// Queries are shuffled by `seed` before assignment.
pub fn split_corpus(
    corpus: &[QueryCandidates],
    ratios: [f64; 3],
    seed: u64,
) -> Result<CorpusSplits> {
    if ratios.iter().any(|&r| r < 0.0) {
        return Err(Error::InvalidConfig(
            "split ratios must be nonnegative".into(),
        ));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "split ratios must sum to 1 (got {sum})"
        )));
    }
    let n = corpus.len();
    let buckets = ratios.iter().filter(|&&r| r > 0.0).count();
    if n < buckets {
        return Err(Error::TooFewQueries {
            queries: n,
            buckets,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seeding::rng(seed);
    seeding::shuffle(&mut order, &mut rng);

    let n_hold = (n as f64 * ratios[1]).floor() as usize;
    let n_test = (n as f64 * ratios[2]).floor() as usize;
    let n_sft = n - n_hold - n_test;

    let pick = |range: std::ops::Range<usize>| -> Vec<QueryCandidates> {
        order[range].iter().map(|&i| corpus[i].clone()).collect()
    };
    Ok(CorpusSplits {
        sft: pick(0..n_sft),
        hold: pick(n_sft..n_sft + n_hold),
        test: pick(n_sft + n_hold..n),
    })
}

/// First-stage retriever stand-in: top-`k` candidates by descending cosine
/// similarity to the query, ties broken by ascending `cand_id`.
pub fn first_stage_retrieve(query: &Query, pool: &[Candidate], k: usize) -> Vec<Candidate> {
    let mut scored: Vec<(f64, &Candidate)> = pool
        .iter()
        .map(|c| (cosine(&query.features, &c.features), c))
        .collect();
    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| a.1.cand_id.cmp(&b.1.cand_id))
    });
    scored.into_iter().take(k).map(|(_, c)| c.clone()).collect()
}
