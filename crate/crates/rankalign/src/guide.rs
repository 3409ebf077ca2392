//! The book's chapters, compiled as doctests.
//!
//! The `book/` directory at the repository root is an mdBook whose code
//! samples exercise this crate. Including each chapter here as module
//! documentation makes `cargo test --doc` compile and run every sample, so
//! the guide cannot drift from the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/corpus.md")]
pub mod corpus {}

#[doc = include_str!("../../../book/src/scoring.md")]
pub mod scoring {}

#[doc = include_str!("../../../book/src/sft.md")]
pub mod sft {}

#[doc = include_str!("../../../book/src/preferences.md")]
pub mod preferences {}

#[doc = include_str!("../../../book/src/reward-model.md")]
pub mod reward_model {}

#[doc = include_str!("../../../book/src/grpo.md")]
pub mod grpo {}

#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}

#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}
