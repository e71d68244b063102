//! Synthesis model: an aligned score in, a log-mel spectrogram out.
//!
//! The model has three stages. A transformer encoder turns the notes of an
//! aligned score into contextual note embeddings. The polyphonic mixer
//! ([`polyphonic_mix`]) expands those embeddings onto the frame grid: each
//! note's embedding is copied onto every frame it sounds in, modulated by a
//! note-wise positional encoding ([`npe_modulate`]) that tells the decoder
//! how far through its note each frame is, and concurrent notes are summed.
//! A transformer decoder then refines the frame sequence and a linear head
//! emits one 80-band log-mel column per frame.
//!
//! Ablation switches in [`SynthesisModelConfig`] disable the note-wise
//! positional encoding (`use_npe`), the performer embedding
//! (`use_performer_embedding`), or the whole encoder+mixer front end
//! (`use_encoder`, replaced by a linear projection of piano-roll and
//! position-roll frame columns).

mod error;
mod mixer;
mod model;

pub use error::SynthError;
pub use mixer::{npe_modulate, polyphonic_mix};
pub use model::{synthesis_loss, SynthesisModel, SynthesisModelConfig};
