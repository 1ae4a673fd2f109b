//! Preference-based alignment workbench for a toy translation model.
//!
//! The crate covers the whole loop at desk scale:
//!
//! * [`corpus`]: segments, candidate sets, preference pairs, synthetic corpora and JSONL I/O.
//! * [`metrics`]: chrF, BLEU, edit similarity, bigram F1 and an HTTP client for served scorers.
//! * [`prefbuild`]: multi-system, system-ablation, fixed-chosen and mono-system (offset)
//!   preference builders, offset calibration and the 3×3 quality grid.
//! * [`toymt`]: a small decoder-only character transformer with exact log-probabilities,
//!   greedy decoding, nucleus sampling and hand-written backpropagation.
//! * [`train`]: SFT and CPO objectives, the warmup + inverse-square-root schedule, the training loop.
//! * [`eval`]: system evaluation, paired one-tailed t-tests and comparison reports.
//! * [`cli`]: the `prefalign` command-line pipeline.

pub mod cli;
pub mod corpus;
pub mod eval;
pub mod metrics;
pub mod prefbuild;
pub mod toymt;
pub mod train;

pub(crate) mod util;
