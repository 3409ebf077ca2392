//! Ranked-retrieval metrics: Recall@k, NDCG@k, and (mean) reciprocal rank.
//!
//! All three operate on a [`Ranking`], the ground-truth labels of a query's
//! candidates in ranked order. Definitions, for 1-indexed positions with
//! `rank` the position of the first relevant item:
//!
//! * `Recall@k = 1` iff `rank <= k`, else 0;
//! * `RR = 1 / rank`, or 0 when no relevant item exists;
//! * `DCG@k = sum_{i<=k} (2^y_i - 1) / log2(i + 1)`, `NDCG@k = DCG@k / IDCG@k`
//!   with `IDCG` the DCG of the best possible ordering, and 0 when `IDCG`
//!   is 0.
//!
//! The exponential gain form is kept even though the corpus emits binary
//! labels (where `2^y - 1 = y`), so multi-grade labels stay correct if they
//! are ever enabled. Queries with zero positives contribute 0 to every
//! metric rather than being excluded.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{first_stage_retrieve, QueryCandidates};
use crate::error::Result;
use crate::scorer::{rank, ScorerParams};

/// Ground-truth labels of one query's candidates in ranked order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranking {
    pub query_id: String,
    pub labels: Vec<u8>,
    pub cand_ids: Vec<String>,
}

/// Aggregated metrics over a query set; one `report.json` body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub recall: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub num_queries: usize,
}

/// 1 iff any of the first `min(k, n)` labels is relevant.
pub fn recall_at_k(ranking: &Ranking, k: usize) -> f64 {
    let cut = k.min(ranking.labels.len());
    if ranking.labels[..cut].contains(&1) {
        1.0
    } else {
        0.0
    }
}

/// Reciprocal of the 1-indexed position of the first relevant label; 0 when
/// none is relevant.
pub fn reciprocal_rank(ranking: &Ranking) -> f64 {
    match ranking.labels.iter().position(|&y| y == 1) {
        Some(idx) => 1.0 / (idx + 1) as f64,
        None => 0.0,
    }
}

fn dcg(labels: &[u8], k: usize) -> f64 {
    labels
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &y)| (2f64.powi(i32::from(y)) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// DCG@k divided by the ideal DCG@k; 0 when the ideal is 0.
///
/// The ideal ordering sorts the label multiset descending, which attains the
/// permutation maximum because the gain is position-independent and the
/// discount decreases with position.
pub fn ndcg_at_k(ranking: &Ranking, k: usize) -> f64 {
    let got = dcg(&ranking.labels, k);
    let mut ideal_labels = ranking.labels.clone();
    ideal_labels.sort_unstable_by(|a, b| b.cmp(a));
    let ideal = dcg(&ideal_labels, k);
    if ideal > 0.0 {
        got / ideal
    } else {
        0.0
    }
}

/// Retrieve to `rerank_depth`, rerank greedily with the scorer, and average
/// Recall@k, NDCG@k, and RR over the query set. Queries are summed in
/// ascending `query_id` order so the aggregation is bit-stable.
pub fn evaluate(
    params: &ScorerParams,
    split: &[QueryCandidates],
    ks: &[usize],
    rerank_depth: usize,
) -> Result<MetricsReport> {
    if split.is_empty() {
        return Err(crate::error::Error::EmptyBatch);
    }
    let mut order: Vec<usize> = (0..split.len()).collect();
    order.sort_by(|&a, &b| split[a].query.query_id.cmp(&split[b].query.query_id));

    let mut recall_sums: BTreeMap<usize, f64> = ks.iter().map(|&k| (k, 0.0)).collect();
    let mut ndcg_sums: BTreeMap<usize, f64> = ks.iter().map(|&k| (k, 0.0)).collect();
    let mut rr_sum = 0.0;
    for &idx in &order {
        let entry = &split[idx];
        let pool = first_stage_retrieve(&entry.query, &entry.candidates, rerank_depth);
        let ranked = rank(params, &entry.query, &pool)?;
        let ranking = Ranking {
            query_id: entry.query.query_id.clone(),
            labels: ranked.iter().map(|r| r.candidate.label).collect(),
            cand_ids: ranked.iter().map(|r| r.candidate.cand_id.clone()).collect(),
        };
        for &k in ks {
            *recall_sums.get_mut(&k).unwrap() += recall_at_k(&ranking, k);
            *ndcg_sums.get_mut(&k).unwrap() += ndcg_at_k(&ranking, k);
        }
        rr_sum += reciprocal_rank(&ranking);
    }

    let n = split.len() as f64;
    Ok(MetricsReport {
        recall: recall_sums.into_iter().map(|(k, s)| (k, s / n)).collect(),
        ndcg: ndcg_sums.into_iter().map(|(k, s)| (k, s / n)).collect(),
        mrr: rr_sum / n,
        num_queries: split.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, CorpusConfig};
    use crate::scorer::ScorerParams;
    use proptest::prelude::*;

    fn ranking(labels: &[u8]) -> Ranking {
        Ranking {
            query_id: "q".into(),
            labels: labels.to_vec(),
            cand_ids: (0..labels.len()).map(|i| format!("c{i}")).collect(),
        }
    }

    #[test]
    fn recall_indicator() {
        let r = ranking(&[0, 0, 1]);
        assert_eq!(recall_at_k(&r, 1), 0.0);
        assert_eq!(recall_at_k(&r, 3), 1.0);
        assert_eq!(recall_at_k(&ranking(&[0, 0, 0]), 10), 0.0);
        assert_eq!(recall_at_k(&ranking(&[1]), 5), 1.0);
    }

    #[test]
    fn reciprocal_rank_cases() {
        assert_eq!(reciprocal_rank(&ranking(&[0, 0, 1, 0])), 1.0 / 3.0);
        assert_eq!(reciprocal_rank(&ranking(&[1, 0, 1])), 1.0);
        assert_eq!(reciprocal_rank(&ranking(&[0, 0])), 0.0);
    }

    #[test]
    fn ndcg_frozen_value() {
        // DCG = 1/log2(2) + 1/log2(4); IDCG = 1/log2(2) + 1/log2(3).
        let got = ndcg_at_k(&ranking(&[1, 0, 1]), 3);
        assert!((got - 0.919721).abs() < 1e-6, "got {got}");
        assert_eq!(ndcg_at_k(&ranking(&[1]), 1), 1.0);
        assert_eq!(ndcg_at_k(&ranking(&[0, 0, 0]), 3), 0.0);
    }

    #[test]
    fn ndcg_rewards_promoting_relevant_items() {
        let worse = ndcg_at_k(&ranking(&[0, 1, 0, 1]), 4);
        let better = ndcg_at_k(&ranking(&[1, 0, 0, 1]), 4);
        assert!(better > worse);
    }

    // Brute-force transcription of the metric definitions, with IDCG found
    // by explicit search over all distinct label placements. Index loops
    // mirror the formulas on purpose.
    #[allow(clippy::needless_range_loop)]
    mod oracle {
        pub fn recall(labels: &[u8], k: usize) -> f64 {
            let mut hit = false;
            for i in 0..labels.len().min(k) {
                if labels[i] == 1 {
                    hit = true;
                }
            }
            if hit {
                1.0
            } else {
                0.0
            }
        }

        pub fn rr(labels: &[u8]) -> f64 {
            for (i, &y) in labels.iter().enumerate() {
                if y == 1 {
                    return 1.0 / (i as f64 + 1.0);
                }
            }
            0.0
        }

        fn dcg(labels: &[u8], k: usize) -> f64 {
            let mut total = 0.0;
            for i in 0..labels.len().min(k) {
                let gain = 2f64.powi(labels[i] as i32) - 1.0;
                total += gain / ((i as f64) + 2.0).log2();
            }
            total
        }

        fn best_permutation_dcg(labels: &[u8], k: usize) -> f64 {
            // All distinct placements of the 1s over the positions.
            let n = labels.len();
            let ones = labels.iter().filter(|&&y| y == 1).count();
            let mut best = 0.0f64;
            let mut slots: Vec<usize> = (0..ones).collect();
            if ones == 0 {
                return 0.0;
            }
            loop {
                let mut arranged = vec![0u8; n];
                for &s in &slots {
                    arranged[s] = 1;
                }
                best = best.max(dcg(&arranged, k));
                // Next combination in lexicographic order.
                let mut i = ones;
                loop {
                    if i == 0 {
                        return best;
                    }
                    i -= 1;
                    if slots[i] < n - (ones - i) {
                        slots[i] += 1;
                        for j in i + 1..ones {
                            slots[j] = slots[j - 1] + 1;
                        }
                        break;
                    }
                }
            }
        }

        pub fn ndcg(labels: &[u8], k: usize) -> f64 {
            let ideal = best_permutation_dcg(labels, k);
            if ideal > 0.0 {
                dcg(labels, k) / ideal
            } else {
                0.0
            }
        }
    }

    proptest! {
        #[test]
        fn metrics_match_brute_force_oracle(labels in prop::collection::vec(0u8..2, 1..10), k in 1usize..12) {
            let r = ranking(&labels);
            prop_assert!((recall_at_k(&r, k) - oracle::recall(&labels, k)).abs() < 1e-12);
            prop_assert!((reciprocal_rank(&r) - oracle::rr(&labels)).abs() < 1e-12);
            prop_assert!((ndcg_at_k(&r, k) - oracle::ndcg(&labels, k)).abs() < 1e-12);
        }

        #[test]
        fn metrics_are_bounded(labels in prop::collection::vec(0u8..2, 1..10), k in 1usize..12) {
            let r = ranking(&labels);
            for v in [recall_at_k(&r, k), reciprocal_rank(&r), ndcg_at_k(&r, k)] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    /// A split whose candidates carry their label in the first candidate
    /// coordinate, and a hand-built scorer that reads exactly that
    /// coordinate, so score order reproduces label order.
    fn label_encoded_split(queries: usize) -> (ScorerParams, Vec<QueryCandidates>) {
        use crate::corpus::{Candidate, Modality, Query};
        let mut params = ScorerParams::zeros(5, 1);
        params.w1[0][1] = 1.0; // candidate coordinate within [q || c || onehot]
        params.w2[0][0] = 4.0;
        let split = (0..queries)
            .map(|qi| {
                let query = Query {
                    query_id: format!("q{qi:02}"),
                    features: vec![1.0],
                };
                let candidates = (0..6)
                    .map(|cj| {
                        let label = u8::from((qi + cj) % 3 == 0);
                        Candidate {
                            cand_id: format!("q{qi:02}_c{cj}"),
                            modality: Modality::Text,
                            features: vec![f64::from(label)],
                            label,
                        }
                    })
                    .collect();
                QueryCandidates { query, candidates }
            })
            .collect();
        (params, split)
    }

    #[test]
    fn evaluate_with_label_replicating_scorer() {
        // Every query has at least one positive, so a scorer that reproduces
        // labels as scores gets recall@1 = 1 on each of them.
        let (params, split) = label_encoded_split(9);
        let report = evaluate(&params, &split, &[1, 3, 5], 6).unwrap();
        assert_eq!(report.recall[&1], 1.0);
        assert_eq!(report.num_queries, 9);
    }

    #[test]
    fn evaluate_of_single_query_equals_its_metrics() {
        let (params, split) = label_encoded_split(1);
        let report = evaluate(&params, &split[..1], &[1, 3], 6).unwrap();
        // Rank by descending score = positives first; compute by hand.
        let mut labels: Vec<u8> = split[0].candidates.iter().map(|c| c.label).collect();
        labels.sort_unstable_by(|a, b| b.cmp(a));
        let hand = Ranking {
            query_id: String::new(),
            cand_ids: vec![],
            labels,
        };
        assert_eq!(report.recall[&1], recall_at_k(&hand, 1));
        assert_eq!(report.ndcg[&3], ndcg_at_k(&hand, 3));
        assert_eq!(report.mrr, reciprocal_rank(&hand));
    }

    #[test]
    fn evaluate_bounds_on_generated_corpus() {
        let config = CorpusConfig {
            num_queries: 12,
            feature_dim: 4,
            ..CorpusConfig::default()
        };
        let corpus = generate_corpus(&config).unwrap();
        let params = ScorerParams::init(2 * 4 + 3, 4, 7);
        let report = evaluate(&params, &corpus, &[1, 3, 5], 10).unwrap();
        assert_eq!(report.num_queries, 12);
        for v in report.recall.values().chain(report.ndcg.values()) {
            assert!((0.0..=1.0).contains(v));
        }
        assert!((0.0..=1.0).contains(&report.mrr));
    }

    #[test]
    fn evaluate_mean_of_two_queries() {
        // First-relevant ranks 1 and 4 give MRR (1 + 1/4)/2.
        let a = ranking(&[1, 0, 0, 0]);
        let b = ranking(&[0, 0, 0, 1]);
        let mrr = (reciprocal_rank(&a) + reciprocal_rank(&b)) / 2.0;
        assert!((mrr - 0.625).abs() < 1e-12);
    }

    #[test]
    fn evaluate_rejects_empty_split() {
        let params = ScorerParams::zeros(5, 2);
        assert!(matches!(
            evaluate(&params, &[], &[1], 10),
            Err(crate::error::Error::EmptyBatch)
        ));
    }

    #[test]
    fn report_serialization_shape() {
        let report = MetricsReport {
            recall: [(1, 0.5), (3, 0.75)].into_iter().collect(),
            ndcg: [(1, 0.5), (3, 0.6)].into_iter().collect(),
            mrr: 0.625,
            num_queries: 4,
        };
        let text = serde_json::to_string(&report).unwrap();
        assert!(text.contains("\"recall\":{\"1\":0.5,\"3\":0.75}"), "{text}");
        assert!(text.contains("\"mrr\":0.625"));
    }
}
