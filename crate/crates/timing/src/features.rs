use espressivo_score::{clip_index, Score};

use crate::{AlignmentModelConfig, TimingError};

/// Embedding-table indices for one score, plus the sequence-level
/// conditioning values. All indices are guaranteed in range for the tables
/// the config implies (out-of-span onsets/durations saturate or error per
/// the configured policy).
#[derive(Debug, Clone, PartialEq)]
pub struct NoteInputFeatures {
    pub pitch: Vec<usize>,
    pub onset: Vec<usize>,
    pub duration: Vec<usize>,
    /// Index 0 is the "no velocity recorded" row; actual velocities occupy
    /// rows 1..=127 (MIDI velocity zero never denotes a sounding note).
    pub velocity: Vec<usize>,
    /// Tempo in quarter notes per second — a scale where typical values
    /// sit near 1, suitable as raw input to a learned linear projection.
    pub tempo: f64,
    pub performer: usize,
}

pub fn extract_features(
    score: &Score,
    cfg: &AlignmentModelConfig,
) -> Result<NoteInputFeatures, TimingError> {
    let n = score.notes().len();
    let mut features = NoteInputFeatures {
        pitch: Vec::with_capacity(n),
        onset: Vec::with_capacity(n),
        duration: Vec::with_capacity(n),
        velocity: Vec::with_capacity(n),
        tempo: score.tempo / 60.0,
        performer: score.performer_id as usize,
    };
    if features.performer >= cfg.num_performers {
        return Err(TimingError::UnknownPerformer {
            id: score.performer_id,
            table: cfg.num_performers,
        });
    }
    let onset_cap = cfg.onset_table_size();
    let duration_cap = cfg.duration_table_size();
    for note in score.notes() {
        features.pitch.push(note.pitch as usize);
        let onset_bucket = note.onset / cfg.ticks_per_bucket;
        features.onset.push(clip_index(onset_bucket, onset_cap, cfg.clip_policy)? as usize);
        let duration_bucket = note.duration / cfg.ticks_per_bucket;
        features
            .duration
            .push(clip_index(duration_bucket, duration_cap, cfg.clip_policy)? as usize);
        features.velocity.push(note.velocity.map_or(0, usize::from));
    }
    Ok(features)
}
