//! Stage execution: file wiring for every pipeline step.

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{generate_corpus, split_corpus, QueryCandidates};
use crate::error::{Error, Result};
use crate::grpo::{train_grpo, GroupingMode};
use crate::io;
use crate::metrics::{evaluate, MetricsReport};
use crate::mining::{
    build_preferences_with, instances_from_records, preference_records, MiningStrategy,
    PreferenceRecord,
};
use crate::prompt::{serialize_example, Label, SftRecord};
use crate::reward::{init_rm_from_sft, load_rm_checkpoint, save_rm_checkpoint, train_rm};
use crate::scorer::{load_checkpoint, save_checkpoint, ScorerParams};
use crate::seeding::hash64;
use crate::sft::train_sft;

use super::config::PipelineConfig;
use super::manifest::{RunManifest, StageEntry};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const SFT_SPLIT_FILE: &str = "corpus.sft.jsonl";
pub const HOLD_SPLIT_FILE: &str = "corpus.hold.jsonl";
pub const TEST_SPLIT_FILE: &str = "corpus.test.jsonl";
pub const SPLIT_MANIFEST_FILE: &str = "split_manifest.json";
pub const SFT_DATA_FILE: &str = "sft.jsonl";
pub const SFT_CKPT_FILE: &str = "ckpt_sft.json";
pub const SFT_REPORT_FILE: &str = "sft_report.json";
pub const PREF_FILE: &str = "pref.jsonl";
pub const RM_CKPT_FILE: &str = "ckpt_rm.json";
pub const RM_REPORT_FILE: &str = "rm_report.json";
pub const GRPO_CKPT_FILE: &str = "ckpt_grpo.json";
pub const GRPO_STEPS_FILE: &str = "grpo_steps.jsonl";
pub const GRPO_REPORT_FILE: &str = "grpo_report.json";
pub const REPORT_SFT_FILE: &str = "report_sft.json";
pub const REPORT_GRPO_FILE: &str = "report_grpo.json";

/// Which checkpoint an `eval` stage scores and where the report goes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalSpec {
    pub ckpt: PathBuf,
    pub report_file: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stage {
    Gen,
    Split,
    Sft,
    Mine,
    Rm,
    Grpo,
    Eval(EvalSpec),
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Gen => "gen",
            Stage::Split => "split",
            Stage::Sft => "sft",
            Stage::Mine => "mine",
            Stage::Rm => "rm",
            Stage::Grpo => "grpo",
            Stage::Eval(_) => "eval",
        }
    }
}

/// Seeds-and-ratios record written next to the split files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub sizes: [usize; 3],
}

/// `report.json` body: the metrics plus the digest of the checkpoint that
/// produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub recall: std::collections::BTreeMap<usize, f64>,
    pub ndcg: std::collections::BTreeMap<usize, f64>,
    pub mrr: f64,
    pub num_queries: usize,
    pub checkpoint_digest: String,
}

impl ReportFile {
    pub fn new(report: MetricsReport, checkpoint_digest: String) -> Self {
        Self {
            recall: report.recall,
            ndcg: report.ndcg,
            mrr: report.mrr,
            num_queries: report.num_queries,
            checkpoint_digest,
        }
    }

    pub fn metrics(&self) -> MetricsReport {
        MetricsReport {
            recall: self.recall.clone(),
            ndcg: self.ndcg.clone(),
            mrr: self.mrr,
            num_queries: self.num_queries,
        }
    }
}

/// Digest of the configuration text, with `output_dir` excluded so the same
/// computation lands on the same digest regardless of where it runs.
fn config_digest(cfg: &PipelineConfig) -> String {
    let canonical: String = cfg
        .to_kv_text()
        .lines()
        .filter(|l| !l.starts_with("output_dir"))
        .map(|l| format!("{l}\n"))
        .collect();
    io::sha256_hex(canonical.as_bytes())
}

fn record_outputs(entry: &mut StageEntry, dir: &std::path::Path, files: &[&str]) -> Result<()> {
    for f in files {
        entry
            .outputs
            .insert((*f).to_string(), io::file_digest(&dir.join(f))?);
    }
    Ok(())
}

/// Run one stage against the config's output directory. Inputs are digest
/// verified against the manifest, outputs are written atomically, and the
/// manifest is updated in place.
pub fn run_stage(cfg: &PipelineConfig, stage: &Stage) -> Result<StageEntry> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir)?;
    let digest = config_digest(cfg);
    let mut manifest = RunManifest::load_or_new(&dir, cfg.master_seed, digest)?;
    let started = Instant::now();
    let mut entry = StageEntry::default();

    match stage {
        Stage::Gen => {
            let mut corpus_cfg = cfg.corpus.clone();
            corpus_cfg.seed = hash64(cfg.master_seed, "gen");
            let corpus = generate_corpus(&corpus_cfg)?;
            io::write_jsonl_atomic(&dir.join(CORPUS_FILE), &corpus)?;
            entry
                .details
                .insert("seed".into(), corpus_cfg.seed.to_string());
            record_outputs(&mut entry, &dir, &[CORPUS_FILE])?;
        }
        Stage::Split => {
            entry.inputs.insert(
                CORPUS_FILE.into(),
                manifest.verify_input(&dir, CORPUS_FILE, "gen")?,
            );
            let corpus: Vec<QueryCandidates> = io::read_jsonl(&dir.join(CORPUS_FILE))?;
            let seed = hash64(cfg.master_seed, "split");
            let splits = split_corpus(&corpus, cfg.split_ratios, seed)?;
            io::write_jsonl_atomic(&dir.join(SFT_SPLIT_FILE), &splits.sft)?;
            io::write_jsonl_atomic(&dir.join(HOLD_SPLIT_FILE), &splits.hold)?;
            io::write_jsonl_atomic(&dir.join(TEST_SPLIT_FILE), &splits.test)?;
            io::write_json_atomic(
                &dir.join(SPLIT_MANIFEST_FILE),
                &SplitManifest {
                    seed,
                    ratios: cfg.split_ratios,
                    sizes: [splits.sft.len(), splits.hold.len(), splits.test.len()],
                },
            )?;
            // Instruction-data export for the SFT split.
            let mut records = Vec::new();
            for entry in &splits.sft {
                for c in &entry.candidates {
                    let example = serialize_example(
                        &entry.query,
                        c,
                        &cfg.vocab,
                        Some(Label::from_bit(c.label)),
                    );
                    records.push(SftRecord::from_example(
                        &example,
                        &entry.query.query_id,
                        &c.cand_id,
                    ));
                }
            }
            io::write_jsonl_atomic(&dir.join(SFT_DATA_FILE), &records)?;
            record_outputs(
                &mut entry,
                &dir,
                &[
                    SFT_SPLIT_FILE,
                    HOLD_SPLIT_FILE,
                    TEST_SPLIT_FILE,
                    SPLIT_MANIFEST_FILE,
                    SFT_DATA_FILE,
                ],
            )?;
        }
        Stage::Sft => {
            entry.inputs.insert(
                SFT_DATA_FILE.into(),
                manifest.verify_input(&dir, SFT_DATA_FILE, "split")?,
            );
            entry.inputs.insert(
                SFT_SPLIT_FILE.into(),
                manifest.verify_input(&dir, SFT_SPLIT_FILE, "split")?,
            );
            let records: Vec<SftRecord> = io::read_jsonl(&dir.join(SFT_DATA_FILE))?;
            let split: Vec<QueryCandidates> = io::read_jsonl(&dir.join(SFT_SPLIT_FILE))?;
            let dataset = join_sft_dataset(&records, &split, cfg)?;

            let input_dim = 2 * cfg.corpus.feature_dim + 3;
            let init = ScorerParams::init(
                input_dim,
                cfg.scorer.hidden_dim,
                hash64(cfg.master_seed, "sft-init"),
            );
            let mut sft_cfg = cfg.sft.clone();
            sft_cfg.seed = hash64(cfg.master_seed, "sft");
            let (params, report) = train_sft(&init, &dataset, &sft_cfg)?;
            save_checkpoint(&params, &cfg.vocab, &dir.join(SFT_CKPT_FILE))?;
            io::write_json_atomic(&dir.join(SFT_REPORT_FILE), &report)?;
            entry
                .details
                .insert("examples".into(), dataset.len().to_string());
            record_outputs(&mut entry, &dir, &[SFT_CKPT_FILE, SFT_REPORT_FILE])?;
        }
        Stage::Mine => {
            entry.inputs.insert(
                SFT_CKPT_FILE.into(),
                manifest.verify_input(&dir, SFT_CKPT_FILE, "sft")?,
            );
            entry.inputs.insert(
                HOLD_SPLIT_FILE.into(),
                manifest.verify_input(&dir, HOLD_SPLIT_FILE, "split")?,
            );
            let (params, vocab) = load_checkpoint(&dir.join(SFT_CKPT_FILE))?;
            let hold: Vec<QueryCandidates> = io::read_jsonl(&dir.join(HOLD_SPLIT_FILE))?;
            let instances = build_preferences_with(
                &params,
                &hold,
                cfg.mining.top_n,
                cfg.mining.strategy,
                hash64(cfg.master_seed, "mine"),
            )?;
            let records = preference_records(&instances, &vocab);
            io::write_jsonl_atomic(&dir.join(PREF_FILE), &records)?;
            let strategy = match cfg.mining.strategy {
                MiningStrategy::Hard => "hard",
                MiningStrategy::Random => "random",
            };
            entry
                .details
                .insert("strategy".into(), strategy.to_string());
            entry
                .details
                .insert("instances".into(), records.len().to_string());
            record_outputs(&mut entry, &dir, &[PREF_FILE])?;
        }
        Stage::Rm => {
            let sft_digest = manifest.verify_input(&dir, SFT_CKPT_FILE, "sft")?;
            entry
                .inputs
                .insert(SFT_CKPT_FILE.into(), sft_digest.clone());
            entry.inputs.insert(
                PREF_FILE.into(),
                manifest.verify_input(&dir, PREF_FILE, "mine")?,
            );
            entry.inputs.insert(
                HOLD_SPLIT_FILE.into(),
                manifest.verify_input(&dir, HOLD_SPLIT_FILE, "split")?,
            );
            let (sft_params, vocab) = load_checkpoint(&dir.join(SFT_CKPT_FILE))?;
            let hold: Vec<QueryCandidates> = io::read_jsonl(&dir.join(HOLD_SPLIT_FILE))?;
            let records: Vec<PreferenceRecord> = io::read_jsonl(&dir.join(PREF_FILE))?;
            let dataset = instances_from_records(&records, &hold, &vocab)?;

            let init = init_rm_from_sft(&sft_params, hash64(cfg.master_seed, "rm-init"));
            let mut rm_cfg = cfg.rm.clone();
            rm_cfg.seed = hash64(cfg.master_seed, "rm");
            let (rm, report) = train_rm(&init, &dataset, &rm_cfg)?;
            save_rm_checkpoint(&rm, &vocab, sft_digest, &dir.join(RM_CKPT_FILE))?;
            io::write_json_atomic(&dir.join(RM_REPORT_FILE), &report)?;
            record_outputs(&mut entry, &dir, &[RM_CKPT_FILE, RM_REPORT_FILE])?;
        }
        Stage::Grpo => {
            entry.inputs.insert(
                SFT_CKPT_FILE.into(),
                manifest.verify_input(&dir, SFT_CKPT_FILE, "sft")?,
            );
            entry.inputs.insert(
                RM_CKPT_FILE.into(),
                manifest.verify_input(&dir, RM_CKPT_FILE, "rm")?,
            );
            entry.inputs.insert(
                PREF_FILE.into(),
                manifest.verify_input(&dir, PREF_FILE, "mine")?,
            );
            entry.inputs.insert(
                HOLD_SPLIT_FILE.into(),
                manifest.verify_input(&dir, HOLD_SPLIT_FILE, "split")?,
            );
            let (sft_params, vocab) = load_checkpoint(&dir.join(SFT_CKPT_FILE))?;
            let (rm, _, _) = load_rm_checkpoint(&dir.join(RM_CKPT_FILE))?;
            let hold: Vec<QueryCandidates> = io::read_jsonl(&dir.join(HOLD_SPLIT_FILE))?;
            let records: Vec<PreferenceRecord> = io::read_jsonl(&dir.join(PREF_FILE))?;
            let dataset = instances_from_records(&records, &hold, &vocab)?;

            let mut grpo_cfg = cfg.grpo.clone();
            grpo_cfg.seed = hash64(cfg.master_seed, "grpo");
            let outcome = train_grpo(&sft_params, &rm, &dataset, &grpo_cfg)?;
            save_checkpoint(&outcome.params, &vocab, &dir.join(GRPO_CKPT_FILE))?;
            io::write_jsonl_atomic(&dir.join(GRPO_STEPS_FILE), &outcome.step_logs)?;
            io::write_json_atomic(&dir.join(GRPO_REPORT_FILE), &outcome.report)?;
            let mode = match cfg.grpo.grouping_mode {
                GroupingMode::QueryLevel => "query_level",
                GroupingMode::PromptLevel => "prompt_level",
            };
            entry
                .details
                .insert("grouping_mode".into(), mode.to_string());
            entry.details.insert(
                "excluded_samples".into(),
                outcome.excluded_samples.to_string(),
            );
            record_outputs(
                &mut entry,
                &dir,
                &[GRPO_CKPT_FILE, GRPO_STEPS_FILE, GRPO_REPORT_FILE],
            )?;
        }
        Stage::Eval(spec) => {
            entry.inputs.insert(
                TEST_SPLIT_FILE.into(),
                manifest.verify_input(&dir, TEST_SPLIT_FILE, "split")?,
            );
            let ckpt_name = spec
                .ckpt
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let producer = if ckpt_name == GRPO_CKPT_FILE {
                "grpo"
            } else {
                "sft"
            };
            let ckpt_digest = if spec.ckpt.parent() == Some(dir.as_path()) {
                manifest.verify_input(&dir, &ckpt_name, producer)?
            } else if spec.ckpt.exists() {
                io::file_digest(&spec.ckpt)?
            } else {
                return Err(Error::MissingInput {
                    path: spec.ckpt.clone(),
                    producer,
                });
            };
            entry.inputs.insert(ckpt_name, ckpt_digest.clone());
            let (params, _) = load_checkpoint(&spec.ckpt)?;
            let test: Vec<QueryCandidates> = io::read_jsonl(&dir.join(TEST_SPLIT_FILE))?;
            let report = evaluate(&params, &test, &cfg.eval.ks, cfg.eval.rerank_depth)?;
            io::write_json_atomic(
                &dir.join(&spec.report_file),
                &ReportFile::new(report, ckpt_digest),
            )?;
            record_outputs(&mut entry, &dir, &[spec.report_file.as_str()])?;
        }
    }

    entry.wall_clock_secs = started.elapsed().as_secs_f64();
    let stage_key = match stage {
        Stage::Eval(spec) => format!("eval:{}", spec.report_file),
        other => other.name().to_string(),
    };
    manifest.stages.insert(stage_key, entry.clone());
    manifest.save(&dir)?;
    Ok(entry)
}

fn join_sft_dataset(
    records: &[SftRecord],
    split: &[QueryCandidates],
    cfg: &PipelineConfig,
) -> Result<Vec<(crate::prompt::PromptContext, Label)>> {
    use std::collections::HashMap;
    let mut pairs = HashMap::new();
    for entry in split {
        for c in &entry.candidates {
            pairs.insert(
                (entry.query.query_id.as_str(), c.cand_id.as_str()),
                (&entry.query, c),
            );
        }
    }
    let mut dataset = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let bad = |detail: String| Error::MalformedRecord {
            path: SFT_DATA_FILE.into(),
            line: i + 1,
            detail,
        };
        let (query, cand) = pairs
            .get(&(rec.query_id.as_str(), rec.cand_id.as_str()))
            .ok_or_else(|| {
                bad(format!(
                    "pair ({}, {}) not in sft split",
                    rec.query_id, rec.cand_id
                ))
            })?;
        let assistant = rec
            .assistant_content()
            .ok_or_else(|| bad("record has no assistant message".into()))?;
        let label = cfg
            .vocab
            .parse(assistant)
            .ok_or_else(|| bad(format!("assistant label {assistant:?} not in vocabulary")))?;
        if label != Label::from_bit(cand.label) {
            return Err(bad(
                "assistant label disagrees with candidate ground truth".into()
            ));
        }
        dataset.push((crate::prompt::build_prompt_context(query, cand)?, label));
    }
    Ok(dataset)
}

/// Run the full pipeline. Emits both the SFT-only report and the post-GRPO
/// report so the with/without-alignment comparison is always available;
/// returns the post-GRPO metrics and the final manifest.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<(MetricsReport, RunManifest)> {
    run_stage(cfg, &Stage::Gen)?;
    run_stage(cfg, &Stage::Split)?;
    run_stage(cfg, &Stage::Sft)?;
    run_stage(cfg, &Stage::Mine)?;
    run_stage(cfg, &Stage::Rm)?;
    run_stage(cfg, &Stage::Grpo)?;
    run_stage(
        cfg,
        &Stage::Eval(EvalSpec {
            ckpt: cfg.output_dir.join(SFT_CKPT_FILE),
            report_file: REPORT_SFT_FILE.into(),
        }),
    )?;
    run_stage(
        cfg,
        &Stage::Eval(EvalSpec {
            ckpt: cfg.output_dir.join(GRPO_CKPT_FILE),
            report_file: REPORT_GRPO_FILE.into(),
        }),
    )?;
    let report: ReportFile = io::read_json(&cfg.output_dir.join(REPORT_GRPO_FILE))?;
    let manifest: RunManifest =
        io::read_json(&cfg.output_dir.join(super::manifest::MANIFEST_FILE))?;
    Ok((report.metrics(), manifest))
}
