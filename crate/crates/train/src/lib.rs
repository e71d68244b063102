//! Training harness for the alignment and synthesis models.
//!
//! The pieces, in the order a run uses them:
//!
//! - [`DatasetManifest`] lists (score, recording, performer) triples and
//!   where their aligned scores live; [`build_alignment_pairs`] and
//!   [`build_synthesis_clips`] turn a manifest into in-memory training
//!   units, slicing spectrograms into fixed-length clips via
//!   [`slice_clips`].
//! - [`generate_corpus`] fabricates a synthetic corpus (diatonic scores,
//!   random tempo curves, oracle-rendered audio) for end-to-end runs
//!   without real data.
//! - [`TrainingConfig`] carries the optimizer hyperparameters;
//!   [`train_alignment`] and [`train_synthesis`] run the deterministic
//!   single-threaded step loop, logging JSONL metrics and a rolling
//!   checkpoint.
//! - [`evaluate_synthesis`] and [`evaluation_table`] score checkpoints on
//!   held-out clips and format variant comparisons.
//!
//! Determinism is the design constraint throughout: one seed fixes the
//! model init, the validation split, the batch order, and dropout, so a
//! rerun reproduces every logged number and checkpoint byte for byte.

mod clips;
mod config;
mod corpus;
mod error;
mod eval;
mod manifest;
mod split;
mod trainer;

pub use clips::{frames_per_clip, slice_clips};
pub use config::{
    ModelKind, TrainingConfig, ALIGNMENT_ANNEAL_RATE, ALIGNMENT_ANNEAL_STEPS,
};
pub use corpus::{expressive_alignment, generate_corpus, random_score};
pub use error::TrainError;
pub use eval::{
    ensure_alignment_config, ensure_synthesis_config, evaluate_synthesis, evaluation_table,
    EvalRow,
};
pub use manifest::{
    build_alignment_pairs, build_synthesis_clips, load_aligned, load_audio, load_score,
    AlignmentPair, DatasetManifest, ManifestEntry, SynthesisClip,
};
pub use split::split_grouped;
pub use trainer::{
    read_metrics, train_alignment, train_synthesis, MetricsRecord, TrainReport,
};
