//! Command-line front end for the reranker training pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rankalign::pipeline::{run_pipeline, run_stage, EvalSpec, PipelineConfig, Stage};

fn defaults_help() -> String {
    format!(
        "CONFIG FILE:\n  Line-oriented `key = value` pairs; `#` starts a comment.\n  \
         Stage seeds all derive from master_seed.\n\nDEFAULTS:\n{}",
        PipelineConfig::default()
            .to_kv_text()
            .lines()
            .map(|l| format!("  {l}"))
            .collect::<Vec<_>>()
            .join("\n")
    )
}

/// Train and evaluate a hybrid-modality reranker: corpus generation, SFT,
/// hard-negative preference mining, reward modeling, group-relative policy
/// optimization, and ranked-retrieval evaluation.
#[derive(Parser)]
#[command(name = "rankalign", version, after_long_help = defaults_help(), after_help = "Run with --help for the config key reference.")]
struct Cli {
    /// Config file (`key = value` lines); defaults apply for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override master_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override output_dir.
    #[arg(long = "out-dir", global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus (corpus.jsonl).
    Gen,
    /// Split the corpus and export the instruction dataset (sft.jsonl).
    Split,
    /// Train the scorer on the SFT split (ckpt_sft.json).
    Sft,
    /// Mine hard negatives into preference pairs (pref.jsonl).
    Mine,
    /// Train the reward model on the preferences (ckpt_rm.json).
    Rm,
    /// Align the policy with query-level GRPO (ckpt_grpo.json).
    Grpo,
    /// Evaluate a checkpoint on the test split (report.json).
    Eval {
        /// Checkpoint to score; defaults to the aligned policy.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Cutoffs, comma separated.
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
    },
    /// Run every stage in order and evaluate both checkpoints.
    Pipeline,
}

fn load_config(cli: &Cli) -> rankalign::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::from_kv_text(&std::fs::read_to_string(path)?)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> rankalign::Result<()> {
    let mut cfg = load_config(&cli)?;
    match &cli.command {
        Command::Gen => {
            run_stage(&cfg, &Stage::Gen)?;
            println!("wrote {}", cfg.output_dir.join("corpus.jsonl").display());
        }
        Command::Split => {
            run_stage(&cfg, &Stage::Split)?;
            println!(
                "wrote splits and {}",
                cfg.output_dir.join("sft.jsonl").display()
            );
        }
        Command::Sft => {
            run_stage(&cfg, &Stage::Sft)?;
            println!("wrote {}", cfg.output_dir.join("ckpt_sft.json").display());
        }
        Command::Mine => {
            run_stage(&cfg, &Stage::Mine)?;
            println!("wrote {}", cfg.output_dir.join("pref.jsonl").display());
        }
        Command::Rm => {
            run_stage(&cfg, &Stage::Rm)?;
            println!("wrote {}", cfg.output_dir.join("ckpt_rm.json").display());
        }
        Command::Grpo => {
            run_stage(&cfg, &Stage::Grpo)?;
            println!("wrote {}", cfg.output_dir.join("ckpt_grpo.json").display());
        }
        Command::Eval { ckpt, ks } => {
            if let Some(ks) = ks {
                cfg.eval.ks = ks.clone();
            }
            let ckpt = ckpt
                .clone()
                .unwrap_or_else(|| cfg.output_dir.join("ckpt_grpo.json"));
            let spec = EvalSpec {
                ckpt,
                report_file: "report.json".into(),
            };
            run_stage(&cfg, &Stage::Eval(spec))?;
            println!("wrote {}", cfg.output_dir.join("report.json").display());
        }
        Command::Pipeline => {
            let (report, _) = run_pipeline(&cfg)?;
            println!(
                "pipeline complete: test MRR {:.4} over {} queries ({})",
                report.mrr,
                report.num_queries,
                cfg.output_dir.join("report_grpo.json").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
