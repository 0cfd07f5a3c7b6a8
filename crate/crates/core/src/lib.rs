//! # synthkit
//!
//! Knowledge-infused synthetic text dataset generation for few-shot clinical
//! NLP tasks, plus the audits used to judge the resulting datasets.
//!
//! The pipeline is assembled from independent pieces:
//!
//! - [`kg`] loads a typed knowledge graph from delimited files and samples
//!   topics (single entities or related entity pairs).
//! - [`elicit`] asks an LLM for topic and writing-style candidates.
//! - [`promptkit`] composes generation prompts from task templates.
//! - [`llm`] is the transport layer: an OpenAI-compatible HTTP client, a
//!   deterministic mock backend, and token cost accounting.
//! - [`parsing`] turns raw replies into typed payloads and validates them.
//! - [`genpipe`] orchestrates generation end to end and writes a manifest.
//! - [`quality`] computes central moment discrepancy, average pairwise
//!   similarity, entity coverage and entity frequency.
//!
//! Every capability has a runnable program under `examples/`:
//!
//! ```bash
//! cargo run -p synthkit --example mock_generation
//! ```

pub mod cli;
pub mod config;
pub mod dataset;
pub mod elicit;
pub mod genpipe;
pub mod kg;
pub mod llm;
pub mod parsing;
pub mod promptkit;
pub mod quality;
pub mod rng;
pub mod task;
pub mod text;

pub use dataset::{read_dataset, write_dataset, PromptMode, SyntheticRecord};
pub use rng::SeededRng;
pub use task::{FewShotExample, FewShotSet, LabelDef, TaskFamily, TaskSpec};
