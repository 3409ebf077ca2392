//! Training and evaluation pipeline for pointwise rerankers over hybrid
//! text/image/table candidate pools.
//!
//! The pipeline turns a seeded synthetic retrieval corpus into an aligned
//! reranker in four trained stages, with standard ranked-retrieval metrics
//! on a held-out test split:
//!
//! 1. **Corpus** ([`corpus`]) — generate a hybrid-modality corpus and split
//!    it into disjoint train / hold-out / test parts.
//! 2. **SFT** ([`prompt`], [`scorer`], [`sft`]) — serialize labeled pairs
//!    into two-label instruction examples and fit the scorer by
//!    cross-entropy on the gold label.
//! 3. **Preference alignment** ([`mining`], [`reward`], [`grpo`]) — mine
//!    hard negatives from the hold-out split, train a pairwise reward model
//!    on the resulting preferences, and optimize the policy with
//!    group-relative policy optimization over query-level groups against
//!    the frozen SFT reference.
//! 4. **Evaluation** ([`metrics`]) — Recall@k, NDCG@k, and MRR over
//!    reranked first-stage retrievals.
//!
//! Everything is deterministic: each stage's randomness derives from one
//! master seed, and identical configurations reproduce artifacts byte for
//! byte. The [`pipeline`] module wires the stages to files; `rankalign-cli`
//! exposes them as subcommands.
//!
//! ```
//! use rankalign::corpus::{generate_corpus, split_corpus, CorpusConfig};
//! use rankalign::metrics::evaluate;
//! use rankalign::scorer::ScorerParams;
//! use rankalign::sft::{train_sft, SftConfig};
//! use rankalign::prompt::{build_prompt_context, Label};
//!
//! let config = CorpusConfig { num_queries: 30, seed: 7, ..CorpusConfig::default() };
//! let corpus = generate_corpus(&config).unwrap();
//! let splits = split_corpus(&corpus, [0.8, 0.1, 0.1], 7).unwrap();
//!
//! let mut dataset = Vec::new();
//! for entry in &splits.sft {
//!     for c in &entry.candidates {
//!         let ctx = build_prompt_context(&entry.query, c).unwrap();
//!         dataset.push((ctx, Label::from_bit(c.label)));
//!     }
//! }
//! let init = ScorerParams::init(2 * config.feature_dim + 3, 16, 1);
//! let (trained, report) = train_sft(&init, &dataset, &SftConfig::default()).unwrap();
//! assert!(report.final_loss < report.epoch_losses[0]);
//!
//! let metrics = evaluate(&trained, &splits.test, &[1, 3, 5], 10).unwrap();
//! assert!(metrics.recall[&1] >= 0.0 && metrics.recall[&1] <= 1.0);
//! ```

pub mod corpus;
pub mod error;
pub mod grpo;
pub mod guide;
pub mod io;
pub mod metrics;
pub mod mining;
pub mod pipeline;
pub mod prompt;
pub mod reward;
pub mod scorer;
pub mod seeding;
pub mod sft;

pub use error::{Error, Result};
