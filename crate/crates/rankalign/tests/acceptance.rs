//! Acceptance suite: one test per release criterion, each printing a
//! pass/fail line (run with `--nocapture` to see them).
//!
//! The oracles here are independent transcriptions of the definitions —
//! brute-force metric formulas with permutation-searched IDCG, full
//! sort-and-filter mining, central finite differences — kept separate from
//! the implementation paths they certify. Index-style loops are deliberate
//! there: the oracles mirror the formulas, not idiomatic iterator chains.
#![allow(clippy::needless_range_loop)]

use std::time::Instant;

use rankalign::corpus::{generate_corpus, CorpusConfig, Modality, QueryCandidates};
use rankalign::grpo::{compute_advantages, grad_grpo_surrogate, GroupingMode, QueryGroup};
use rankalign::metrics::{ndcg_at_k, recall_at_k, reciprocal_rank, MetricsReport, Ranking};
use rankalign::mining::{mine_hard_negatives, MiningStrategy, PreferenceInstance};
use rankalign::pipeline::{run_pipeline, PipelineConfig, ReportFile};
use rankalign::prompt::{build_prompt_context, Label, PromptContext};
use rankalign::reward::{init_rm_from_sft, rm_loss, RewardGradient, RewardParams};
use rankalign::scorer::{
    label_prob, load_checkpoint, save_checkpoint, score, Gradient, Sampling, ScorerParams,
};
use rankalign::seeding::{self, hash64};
use rankalign::sft::sft_loss;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn verdict(name: &str, pass: bool, detail: &str) -> bool {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn context(features: Vec<f64>) -> PromptContext {
    PromptContext {
        query_id: "q".into(),
        cand_id: "c".into(),
        features,
        system: String::new(),
        user: String::new(),
    }
}

fn random_features(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeding::rng(seed);
    (0..dim)
        .map(|_| seeding::standard_normal(&mut rng))
        .collect()
}

// ---------------------------------------------------------------------------
// Brute-force metric oracle (independent transcription)
// ---------------------------------------------------------------------------

fn oracle_recall(labels: &[u8], k: usize) -> f64 {
    for i in 0..labels.len().min(k) {
        if labels[i] == 1 {
            return 1.0;
        }
    }
    0.0
}

fn oracle_rr(labels: &[u8]) -> f64 {
    for (i, &y) in labels.iter().enumerate() {
        if y == 1 {
            return 1.0 / (i as f64 + 1.0);
        }
    }
    0.0
}

fn oracle_dcg(labels: &[u8], k: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..labels.len().min(k) {
        total += (2f64.powi(labels[i] as i32) - 1.0) / ((i as f64) + 2.0).log2();
    }
    total
}

/// IDCG by explicit search over every distinct placement of the relevant
/// labels (combinations of positions).
fn oracle_idcg(labels: &[u8], k: usize) -> f64 {
    let n = labels.len();
    let ones = labels.iter().filter(|&&y| y == 1).count();
    if ones == 0 {
        return 0.0;
    }
    let mut slots: Vec<usize> = (0..ones).collect();
    let mut best = 0.0f64;
    loop {
        let mut arranged = vec![0u8; n];
        for &s in &slots {
            arranged[s] = 1;
        }
        best = best.max(oracle_dcg(&arranged, k));
        let mut i = ones;
        let advanced = loop {
            if i == 0 {
                break false;
            }
            i -= 1;
            if slots[i] < n - (ones - i) {
                slots[i] += 1;
                for j in i + 1..ones {
                    slots[j] = slots[j - 1] + 1;
                }
                break true;
            }
        };
        if !advanced {
            return best;
        }
    }
}

fn oracle_ndcg(labels: &[u8], k: usize) -> f64 {
    let ideal = oracle_idcg(labels, k);
    if ideal > 0.0 {
        oracle_dcg(labels, k) / ideal
    } else {
        0.0
    }
}

#[test]
fn criterion_metric_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = seeding::rng(0xA11CE);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let len = 1 + (case % 10);
        let labels: Vec<u8> = (0..len)
            .map(|_| u8::from(rand::Rng::random::<bool>(&mut rng)))
            .collect();
        let ranking = Ranking {
            query_id: format!("q{case}"),
            cand_ids: (0..len).map(|i| format!("c{i}")).collect(),
            labels: labels.clone(),
        };
        for k in 1..=len + 2 {
            worst = worst.max((recall_at_k(&ranking, k) - oracle_recall(&labels, k)).abs());
            worst = worst.max((ndcg_at_k(&ranking, k) - oracle_ndcg(&labels, k)).abs());
        }
        worst = worst.max((reciprocal_rank(&ranking) - oracle_rr(&labels)).abs());
    }
    let frozen = Ranking {
        query_id: "q".into(),
        labels: vec![1, 0, 1],
        cand_ids: vec!["a".into(), "b".into(), "c".into()],
    };
    let frozen_err = (ndcg_at_k(&frozen, 3) - 0.919721).abs();
    let elapsed = started.elapsed().as_secs_f64();
    let pass = worst < 1e-12 && frozen_err < 1e-6 && elapsed < 5.0;
    assert!(
        verdict(
            "metric-oracle-equivalence",
            pass,
            &format!("max |impl - oracle| {worst:.2e}, ndcg([1,0,1])@3 err {frozen_err:.2e}, {elapsed:.2}s")
        ),
        "worst {worst}, frozen {frozen_err}, elapsed {elapsed}"
    );
}

#[test]
fn criterion_score_identity() {
    let mut worst = 0.0f64;
    for case in 0..1000u64 {
        let params = ScorerParams::init(6, 4, 10_000 + case);
        let x = context(random_features(6, 20_000 + case));
        let s = score(&params, &x).unwrap();
        let p = label_prob(&params, &x, Label::Positive, Sampling::train()).unwrap();
        worst = worst.max((s - p).abs());
    }
    let pass = worst < 1e-12;
    assert!(
        verdict(
            "score-identity",
            pass,
            &format!("max |sigmoid - softmax| {worst:.2e} over 1000 cases")
        ),
        "worst {worst}"
    );
}

// ---------------------------------------------------------------------------
// Finite-difference oracles
// ---------------------------------------------------------------------------

fn scorer_param_count(p: &ScorerParams) -> usize {
    p.hidden_dim * p.input_dim + p.hidden_dim + 2 * p.hidden_dim + 2
}

fn perturb_scorer(p: &ScorerParams, index: usize, h: f64) -> ScorerParams {
    let mut out = p.clone();
    let mut i = index;
    if i < p.hidden_dim * p.input_dim {
        out.w1[i / p.input_dim][i % p.input_dim] += h;
        return out;
    }
    i -= p.hidden_dim * p.input_dim;
    if i < p.hidden_dim {
        out.b1[i] += h;
        return out;
    }
    i -= p.hidden_dim;
    if i < 2 * p.hidden_dim {
        out.w2[i / p.hidden_dim][i % p.hidden_dim] += h;
        return out;
    }
    i -= 2 * p.hidden_dim;
    out.b2[i] += h;
    out
}

fn scorer_grad_at(g: &Gradient, p: &ScorerParams, index: usize) -> f64 {
    let mut i = index;
    if i < p.hidden_dim * p.input_dim {
        return g.w1[i / p.input_dim][i % p.input_dim];
    }
    i -= p.hidden_dim * p.input_dim;
    if i < p.hidden_dim {
        return g.b1[i];
    }
    i -= p.hidden_dim;
    if i < 2 * p.hidden_dim {
        return g.w2[i / p.hidden_dim][i % p.hidden_dim];
    }
    i -= 2 * p.hidden_dim;
    g.b2[i]
}

fn max_rel_err_scorer<F: Fn(&ScorerParams) -> f64>(
    params: &ScorerParams,
    analytic: &Gradient,
    loss: F,
    h: f64,
) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..scorer_param_count(params) {
        let up = loss(&perturb_scorer(params, i, h));
        let down = loss(&perturb_scorer(params, i, -h));
        let numeric = (up - down) / (2.0 * h);
        let a = scorer_grad_at(analytic, params, i);
        let denom = a.abs().max(numeric.abs()).max(1e-5);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}

fn reward_param_count(p: &RewardParams) -> usize {
    p.hidden_dim * p.input_dim + p.hidden_dim + p.hidden_dim + 1
}

fn perturb_reward(p: &RewardParams, index: usize, h: f64) -> RewardParams {
    let mut out = p.clone();
    let mut i = index;
    if i < p.hidden_dim * p.input_dim {
        out.w1[i / p.input_dim][i % p.input_dim] += h;
        return out;
    }
    i -= p.hidden_dim * p.input_dim;
    if i < p.hidden_dim {
        out.b1[i] += h;
        return out;
    }
    i -= p.hidden_dim;
    if i < p.hidden_dim {
        out.w_out[i] += h;
        return out;
    }
    out.b_out += h;
    out
}

fn reward_grad_at(g: &RewardGradient, p: &RewardParams, index: usize) -> f64 {
    let mut i = index;
    if i < p.hidden_dim * p.input_dim {
        return g.w1[i / p.input_dim][i % p.input_dim];
    }
    i -= p.hidden_dim * p.input_dim;
    if i < p.hidden_dim {
        return g.b1[i];
    }
    i -= p.hidden_dim;
    if i < p.hidden_dim {
        return g.w_out[i];
    }
    g.b_out
}

#[test]
fn criterion_gradient_checks() {
    let started = Instant::now();
    let h = 1e-5;

    // sft_loss: analytic batch gradient vs central differences.
    let mut sft_worst = 0.0f64;
    for case in 0..100u64 {
        let params = ScorerParams::init(5, 3, 31_000 + case);
        let batch: Vec<(PromptContext, Label)> = (0..3)
            .map(|i| {
                let y = if (case + i) % 2 == 0 {
                    Label::Positive
                } else {
                    Label::Negative
                };
                (context(random_features(5, 32_000 + 10 * case + i)), y)
            })
            .collect();
        // Mean of per-example analytic gradients.
        let mut analytic = Gradient::zeros_like(&params);
        for (x, y) in &batch {
            analytic.add_scaled(&rankalign::scorer::grad_nll(&params, x, *y).unwrap(), 1.0);
        }
        analytic.scale(1.0 / batch.len() as f64);
        let err = max_rel_err_scorer(&params, &analytic, |p| sft_loss(p, &batch).unwrap(), h);
        sft_worst = sft_worst.max(err);
    }

    // rm_loss: analytic batch gradient vs central differences.
    let mut rm_worst = 0.0f64;
    for case in 0..100u64 {
        let sft = ScorerParams::init(4, 3, 41_000 + case);
        let rm = init_rm_from_sft(&sft, 42_000 + case);
        let batch: Vec<PreferenceInstance> = (0..3)
            .map(|i| {
                let chosen = if (case + i) % 2 == 0 {
                    Label::Positive
                } else {
                    Label::Negative
                };
                PreferenceInstance {
                    prompt: context(random_features(4, 43_000 + 10 * case + i)),
                    chosen,
                    rejected: chosen.opposite(),
                }
            })
            .collect();
        let (_, analytic) = rankalign::reward::grad_rm_loss(&rm, &batch).unwrap();
        let mut worst = 0.0f64;
        for i in 0..reward_param_count(&rm) {
            let up = rm_loss(&perturb_reward(&rm, i, h), &batch).unwrap();
            let down = rm_loss(&perturb_reward(&rm, i, -h), &batch).unwrap();
            let numeric = (up - down) / (2.0 * h);
            let a = reward_grad_at(&analytic, &rm, i);
            let denom = a.abs().max(numeric.abs()).max(1e-5);
            worst = worst.max((a - numeric).abs() / denom);
        }
        rm_worst = rm_worst.max(worst);
    }

    // GRPO surrogate with sampled labels held fixed.
    let mut grpo_worst = 0.0f64;
    for case in 0..100u64 {
        let params = ScorerParams::init(4, 3, 51_000 + case);
        let reference = ScorerParams::init(4, 3, 52_000 + case);
        let mut rng = seeding::rng(53_000 + case);
        let n = 5;
        let prompts: Vec<PromptContext> = (0..n)
            .map(|i| context(random_features(4, 54_000 + 10 * case + i)))
            .collect();
        let labels: Vec<Label> = (0..n)
            .map(|_| {
                if rand::Rng::random::<bool>(&mut rng) {
                    Label::Positive
                } else {
                    Label::Negative
                }
            })
            .collect();
        let rewards: Vec<f64> = (0..n).map(|_| seeding::standard_normal(&mut rng)).collect();
        let group = QueryGroup {
            query_id: "q".into(),
            prompts,
            sampled_labels: labels,
            rewards: rewards.clone(),
        };
        let adv = compute_advantages(&rewards, 1e-6);
        let sampling = Sampling::train();
        let (_, analytic) =
            grad_grpo_surrogate(&params, &reference, &group, &adv, 0.2, 0.04, sampling).unwrap();
        let err = max_rel_err_scorer(
            &params,
            &analytic,
            |p| {
                rankalign::grpo::grpo_surrogate(p, &reference, &group, &adv, 0.2, 0.04, sampling)
                    .unwrap()
            },
            1e-6,
        );
        grpo_worst = grpo_worst.max(err);
    }

    let elapsed = started.elapsed().as_secs_f64();
    let pass = sft_worst < 1e-4 && rm_worst < 1e-4 && grpo_worst < 1e-4 && elapsed < 30.0;
    assert!(
        verdict(
            "gradient-checks",
            pass,
            &format!(
                "rel err sft {sft_worst:.2e}, rm {rm_worst:.2e}, grpo {grpo_worst:.2e} (100 cases each), {elapsed:.1}s"
            )
        ),
        "sft {sft_worst}, rm {rm_worst}, grpo {grpo_worst}, elapsed {elapsed}"
    );
}

#[test]
fn criterion_advantage_properties() {
    // Mean exactly zero (within 1e-12) whenever rewards have spread.
    let mut rng = seeding::rng(77);
    let mut worst_mean = 0.0f64;
    for _ in 0..200 {
        let n = 2 + (rand::Rng::random_range(&mut rng, 0..8usize));
        let rewards: Vec<f64> = (0..n).map(|_| seeding::standard_normal(&mut rng)).collect();
        let adv = compute_advantages(&rewards, 1e-6);
        let mean = adv.values.iter().sum::<f64>() / n as f64;
        worst_mean = worst_mean.max(mean.abs());
    }

    // Shift invariance, bitwise on integer-valued rewards and shifts.
    let mut shift_exact = true;
    for case in 0..100u64 {
        let mut rng = seeding::rng(1000 + case);
        let n = 2 + (rand::Rng::random_range(&mut rng, 0..6usize));
        let rewards: Vec<f64> = (0..n)
            .map(|_| f64::from(rand::Rng::random_range(&mut rng, -50..50i32)))
            .collect();
        let shift = f64::from(rand::Rng::random_range(&mut rng, -1000..1000i32));
        let shifted: Vec<f64> = rewards.iter().map(|r| r + shift).collect();
        let a = compute_advantages(&rewards, 1e-6);
        let b = compute_advantages(&shifted, 1e-6);
        if a.values
            .iter()
            .zip(&b.values)
            .any(|(x, y)| x.to_bits() != y.to_bits())
        {
            shift_exact = false;
        }
    }

    let constant = compute_advantages(&[5.0, 5.0, 5.0], 1e-6);
    let constant_zero = constant.values.iter().all(|&v| v == 0.0);

    let frozen = compute_advantages(&[1.0, 2.0, 3.0], 1e-12);
    let frozen_ok =
        (frozen.values[0] + 1.224745).abs() < 1e-6 && (frozen.values[2] - 1.224745).abs() < 1e-6;

    let pass = worst_mean < 1e-12 && shift_exact && constant_zero && frozen_ok;
    assert!(
        verdict(
            "advantage-properties",
            pass,
            &format!(
                "max |mean(A)| {worst_mean:.2e}, shift bitwise {shift_exact}, constant zero {constant_zero}, frozen +/-1.224745 {frozen_ok}"
            )
        ),
        "mean {worst_mean}, shift {shift_exact}, constant {constant_zero}, frozen {frozen_ok}"
    );
}

#[test]
fn criterion_mining_oracle() {
    let mut equal = true;
    let mut monotone = true;
    let mut trials = 0;
    let mut case = 0u64;
    while trials < 1000 {
        case += 1;
        let pool = 2 + (case % 19) as usize;
        let config = CorpusConfig {
            num_queries: 1,
            candidates_per_query: pool,
            feature_dim: 5,
            seed: 60_000 + case,
            ..CorpusConfig::default()
        };
        // Tiny pools occasionally label everything one way; draw again.
        let Ok(corpus) = generate_corpus(&config) else {
            continue;
        };
        trials += 1;
        let entry = &corpus[0];
        let params = ScorerParams::init(2 * 5 + 3, 3, 61_000 + case);
        let n = 1 + (case % 22) as usize;

        // Oracle: full comparison sort, then filter.
        let mut scored: Vec<(String, f64, u8)> = entry
            .candidates
            .iter()
            .map(|c| {
                let ctx = build_prompt_context(&entry.query, c).unwrap();
                (c.cand_id.clone(), score(&params, &ctx).unwrap(), c.label)
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let expect: Vec<String> = scored
            .iter()
            .take(n)
            .filter(|(_, _, label)| *label == 0)
            .map(|(id, _, _)| id.clone())
            .collect();

        let got = mine_hard_negatives(&params, &entry.query, &entry.candidates, n).unwrap();
        if got.members != expect {
            equal = false;
        }
        let bigger = mine_hard_negatives(&params, &entry.query, &entry.candidates, n + 1).unwrap();
        let small: std::collections::BTreeSet<_> = got.members.iter().collect();
        let large: std::collections::BTreeSet<_> = bigger.members.iter().collect();
        if !small.is_subset(&large) {
            monotone = false;
        }
    }
    let pass = equal && monotone && trials == 1000;
    assert!(
        verdict(
            "mining-oracle",
            pass,
            &format!("set equality {equal}, monotonicity {monotone} over {trials} instances")
        ),
        "equal {equal}, monotone {monotone}, trials {trials}"
    );
}

#[test]
fn criterion_bradley_terry_anchors() {
    // Equal rewards: warm-started model is label-independent by construction.
    let sft = ScorerParams::init(3, 2, 70);
    let rm = init_rm_from_sft(&sft, 71);
    let batch: Vec<PreferenceInstance> = (0..4)
        .map(|i| PreferenceInstance {
            prompt: context(random_features(3, 72 + i)),
            chosen: Label::Positive,
            rejected: Label::Negative,
        })
        .collect();
    let ln2_err = (rm_loss(&rm, &batch).unwrap() - std::f64::consts::LN_2).abs();

    // Gap of 10: saturated tanh times a +/-5 head.
    let gap_rm = RewardParams {
        input_dim: 3,
        hidden_dim: 1,
        w1: vec![vec![0.0, 30.0, -30.0]],
        b1: vec![0.0],
        w_out: vec![5.0],
        b_out: 0.0,
    };
    let inst = PreferenceInstance {
        prompt: context(vec![0.0]),
        chosen: Label::Positive,
        rejected: Label::Negative,
    };
    let gap_loss = rm_loss(&gap_rm, std::slice::from_ref(&inst)).unwrap();

    let pass = ln2_err < 1e-9 && gap_loss < 1e-4;
    assert!(
        verdict(
            "bradley-terry-anchors",
            pass,
            &format!("|loss - ln2| {ln2_err:.2e} at zero gap, loss {gap_loss:.2e} at gap 10")
        ),
        "ln2 err {ln2_err}, gap loss {gap_loss}"
    );
}

// ---------------------------------------------------------------------------
// Pipeline-level criteria
// ---------------------------------------------------------------------------

fn seeded_config(master_seed: u64, dir: &std::path::Path) -> PipelineConfig {
    PipelineConfig {
        master_seed,
        output_dir: dir.to_path_buf(),
        ..PipelineConfig::default()
    }
}

fn read_report(dir: &std::path::Path, name: &str) -> ReportFile {
    rankalign::io::read_json(&dir.join(name)).unwrap()
}

fn random_init_recall_at_1(cfg: &PipelineConfig) -> f64 {
    let test: Vec<QueryCandidates> =
        rankalign::io::read_jsonl(&cfg.output_dir.join("corpus.test.jsonl")).unwrap();
    let input_dim = 2 * cfg.corpus.feature_dim + 3;
    let init = ScorerParams::init(
        input_dim,
        cfg.scorer.hidden_dim,
        hash64(cfg.master_seed, "sft-init"),
    );
    let report: MetricsReport =
        rankalign::metrics::evaluate(&init, &test, &cfg.eval.ks, cfg.eval.rerank_depth).unwrap();
    report.recall[&1]
}

#[test]
fn criterion_pipeline_efficacy() {
    let started = Instant::now();
    let mut wins = 0usize;
    let mut improvements = Vec::new();
    for &seed in &SEEDS {
        let dir = tempfile::tempdir().unwrap();
        let cfg = seeded_config(seed, dir.path());
        run_pipeline(&cfg).unwrap();
        let sft_r1 = read_report(dir.path(), "report_sft.json").recall[&1];
        let init_r1 = random_init_recall_at_1(&cfg);
        if sft_r1 > init_r1 {
            wins += 1;
        }
        improvements.push(sft_r1 - init_r1);
        println!("  seed {seed}: random-init recall@1 {init_r1:.3} -> sft {sft_r1:.3}");
    }
    let mean_improvement = improvements.iter().sum::<f64>() / improvements.len() as f64;
    let elapsed = started.elapsed().as_secs_f64();
    let pass = wins >= 4 && mean_improvement >= 0.15 && elapsed < 120.0;
    assert!(
        verdict(
            "pipeline-efficacy",
            pass,
            &format!(
                "sft beats random init on {wins}/5 seeds, mean recall@1 improvement {mean_improvement:.3}, {elapsed:.1}s"
            )
        ),
        "wins {wins}, mean improvement {mean_improvement}, elapsed {elapsed}"
    );
}

#[test]
fn criterion_ablation_directionality() {
    let started = Instant::now();
    let mut hard_wins = 0usize;
    let mut query_wins = 0usize;
    let mut non_degradation = true;
    let mut lines = Vec::new();

    for &seed in &SEEDS {
        let base_dir = tempfile::tempdir().unwrap();
        let base_cfg = seeded_config(seed, base_dir.path());
        run_pipeline(&base_cfg).unwrap();
        let sft_r1 = read_report(base_dir.path(), "report_sft.json").recall[&1];
        let grpo = read_report(base_dir.path(), "report_grpo.json");
        let (grpo_r1, grpo_mrr) = (grpo.recall[&1], grpo.mrr);

        let rand_dir = tempfile::tempdir().unwrap();
        let mut rand_cfg = seeded_config(seed, rand_dir.path());
        rand_cfg.mining.strategy = MiningStrategy::Random;
        run_pipeline(&rand_cfg).unwrap();
        let rand_r1 = read_report(rand_dir.path(), "report_grpo.json").recall[&1];

        let prompt_dir = tempfile::tempdir().unwrap();
        let mut prompt_cfg = seeded_config(seed, prompt_dir.path());
        prompt_cfg.grpo.grouping_mode = GroupingMode::PromptLevel;
        run_pipeline(&prompt_cfg).unwrap();
        let prompt_mrr = read_report(prompt_dir.path(), "report_grpo.json").mrr;

        if grpo_r1 >= rand_r1 {
            hard_wins += 1;
        }
        if grpo_mrr >= prompt_mrr {
            query_wins += 1;
        }
        if grpo_r1 < sft_r1 - 0.02 {
            non_degradation = false;
        }
        lines.push(format!(
            "  seed {seed}: grpo r@1 {grpo_r1:.3} (sft {sft_r1:.3}, random-neg {rand_r1:.3}); mrr {grpo_mrr:.3} (prompt-level {prompt_mrr:.3})"
        ));
    }
    for line in &lines {
        println!("{line}");
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = hard_wins >= 3 && query_wins >= 3 && non_degradation && elapsed < 600.0;
    assert!(
        verdict(
            "ablation-directionality",
            pass,
            &format!(
                "hard>=random on {hard_wins}/5, query>=prompt on {query_wins}/5, non-degradation {non_degradation}, {elapsed:.1}s"
            )
        ),
        "hard {hard_wins}, query {query_wins}, non-degradation {non_degradation}, elapsed {elapsed}"
    );
}

#[test]
fn criterion_determinism_and_persistence() {
    // Byte-identical artifacts under one master seed.
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let mut cfg_a = seeded_config(9, dir_a.path());
    let mut cfg_b = seeded_config(9, dir_b.path());
    // Shrink for speed; determinism does not depend on scale.
    for cfg in [&mut cfg_a, &mut cfg_b] {
        cfg.corpus.num_queries = 60;
        cfg.sft.epochs = 10;
        cfg.rm.epochs = 8;
        cfg.grpo.steps = 8;
    }
    run_pipeline(&cfg_a).unwrap();
    run_pipeline(&cfg_b).unwrap();

    let artifacts = [
        "corpus.jsonl",
        "corpus.sft.jsonl",
        "corpus.hold.jsonl",
        "corpus.test.jsonl",
        "split_manifest.json",
        "sft.jsonl",
        "ckpt_sft.json",
        "sft_report.json",
        "pref.jsonl",
        "ckpt_rm.json",
        "rm_report.json",
        "ckpt_grpo.json",
        "grpo_steps.jsonl",
        "grpo_report.json",
        "report_sft.json",
        "report_grpo.json",
    ];
    let mut identical = true;
    for name in artifacts {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        if a != b {
            identical = false;
            println!("  artifact differs: {name}");
        }
    }

    // Manifests agree once wall-clock fields are neutralized.
    let mut ma: rankalign::pipeline::RunManifest =
        rankalign::io::read_json(&dir_a.path().join("manifest.json")).unwrap();
    let mut mb: rankalign::pipeline::RunManifest =
        rankalign::io::read_json(&dir_b.path().join("manifest.json")).unwrap();
    for m in [&mut ma, &mut mb] {
        for stage in m.stages.values_mut() {
            stage.wall_clock_secs = 0.0;
        }
    }
    let manifests_match = ma == mb;

    // Checkpoint round trip is bit-exact on 100 random scores.
    let params = ScorerParams::init(9, 5, 123);
    let vocab = rankalign::prompt::LabelVocabulary::default();
    let path = dir_a.path().join("roundtrip.json");
    save_checkpoint(&params, &vocab, &path).unwrap();
    let (loaded, _) = load_checkpoint(&path).unwrap();
    let mut bit_exact = true;
    for case in 0..100u64 {
        let x = context(random_features(9, 90_000 + case));
        if score(&params, &x).unwrap().to_bits() != score(&loaded, &x).unwrap().to_bits() {
            bit_exact = false;
        }
    }

    let pass = identical && manifests_match && bit_exact;
    assert!(
        verdict(
            "determinism-and-persistence",
            pass,
            &format!(
                "artifacts byte-identical {identical}, manifests match (mod wall-clock) {manifests_match}, checkpoint round trip bit-exact {bit_exact}"
            )
        ),
        "identical {identical}, manifests {manifests_match}, bit exact {bit_exact}"
    );
}

#[test]
fn criterion_modality_mix_default() {
    // The default mix is the renormalized (text 28.8, image 25.7, table 50.0)
    // profile; sampling must follow it.
    let config = CorpusConfig {
        num_queries: 2000,
        seed: 5,
        ..CorpusConfig::default()
    };
    let corpus = generate_corpus(&config).unwrap();
    let mut counts = [0usize; 3];
    let mut total = 0usize;
    for entry in &corpus {
        for c in &entry.candidates {
            counts[c.modality as usize] += 1;
            total += 1;
        }
    }
    let observed: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let expected = [
        0.288 / 1.045,
        0.257 / 1.045,
        1.0 - 0.288 / 1.045 - 0.257 / 1.045,
    ];
    let worst = observed
        .iter()
        .zip(&expected)
        .map(|(o, e)| (o - e).abs())
        .fold(0.0f64, f64::max);
    let pass = worst < 0.02;
    let _ = Modality::Text;
    assert!(
        verdict(
            "modality-mix-default",
            pass,
            &format!("max |observed - configured| {worst:.3} over {total} candidates")
        ),
        "worst {worst}"
    );
}
