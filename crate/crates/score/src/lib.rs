//! Symbolic score handling: parsing (JSON and standard MIDI files),
//! validation, constant-tempo alignment, and the piano-roll / position-roll
//! encodings consumed by the encoder-free synthesis variant.
//!
//! Scores live in metric time at a fixed resolution of 24 ticks per quarter
//! note. Aligned scores live in spectrogram frames (16 ms per frame: hop 256
//! at 16 kHz). All functions here are pure and thread-safe.

mod align;
mod error;
mod json;
mod midi;
mod rolls;

pub use align::naive_align;
pub use error::ScoreError;
pub use json::{
    parse_aligned_json, parse_notes_json, serialize_aligned, serialize_score, FORMAT_VERSION,
};
pub use midi::parse_midi;
pub use rolls::{build_rolls, Roll, NUM_PITCHES};

/// Metric resolution: ticks per quarter note.
pub const TICKS_PER_QUARTER: u32 = 24;

/// Seconds per spectrogram frame (hop 256 at 16 kHz).
pub const FRAME_SECONDS: f64 = 0.016;

/// A single note in metric time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Note {
    /// MIDI pitch in `[0, 127]`.
    pub pitch: u8,
    /// Onset in ticks (24 per quarter note).
    pub onset: u32,
    /// Duration in ticks, at least 1.
    pub duration: u32,
    /// Key velocity in `[1, 127]` when the source provides one.
    pub velocity: Option<u8>,
}

impl Note {
    pub fn new(pitch: u8, onset: u32, duration: u32) -> Self {
        Note { pitch, onset, duration, velocity: None }
    }

    pub fn with_velocity(pitch: u8, onset: u32, duration: u32, velocity: u8) -> Self {
        Note { pitch, onset, duration, velocity: Some(velocity) }
    }

    fn validate(&self, ctx: &str) -> Result<(), ScoreError> {
        if self.pitch > 127 {
            return Err(ScoreError::validation(format!(
                "{ctx}.pitch must be in [0, 127], got {}",
                self.pitch
            )));
        }
        if self.duration == 0 {
            return Err(ScoreError::validation(format!("{ctx}.duration must be >= 1")));
        }
        if let Some(v) = self.velocity {
            if v == 0 || v > 127 {
                return Err(ScoreError::validation(format!(
                    "{ctx}.velocity must be in [1, 127], got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// A validated score: notes sorted by `(onset, pitch)`, a tempo in quarter
/// notes per minute, and the id of the performer the rendition is attributed
/// to.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    notes: Vec<Note>,
    pub tempo: f64,
    pub performer_id: u32,
}

impl Score {
    /// Builds a score, sorting the notes and enforcing the invariants
    /// (pitch range, positive durations, velocity range, positive tempo).
    pub fn new(mut notes: Vec<Note>, tempo: f64, performer_id: u32) -> Result<Self, ScoreError> {
        if !(tempo > 0.0) || !tempo.is_finite() {
            return Err(ScoreError::validation(format!("tempo must be > 0, got {tempo}")));
        }
        for (i, note) in notes.iter().enumerate() {
            note.validate(&format!("notes[{i}]"))?;
        }
        notes.sort_by_key(|n| (n.onset, n.pitch, n.duration, n.velocity));
        Ok(Score { notes, tempo, performer_id })
    }

    pub fn notes(&self) -> &[Note] {
        &self.notes
    }

    pub fn resolution(&self) -> u32 {
        TICKS_PER_QUARTER
    }
}

/// A note with its performed timing in spectrogram frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignedNote {
    pub note: Note,
    pub onset_frames: u32,
    /// At least 1.
    pub duration_frames: u32,
}

impl AlignedNote {
    /// Exclusive end frame.
    pub fn end_frames(&self) -> u32 {
        self.onset_frames + self.duration_frames
    }
}

/// A score whose notes carry performed onsets and durations in frames.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedScore {
    aligned_notes: Vec<AlignedNote>,
    pub num_frames: u32,
    pub performer_id: u32,
}

impl AlignedScore {
    /// Builds an aligned score, checking that every note span fits inside
    /// `[0, num_frames]` and that durations are positive.
    pub fn new(
        aligned_notes: Vec<AlignedNote>,
        num_frames: u32,
        performer_id: u32,
    ) -> Result<Self, ScoreError> {
        for (i, an) in aligned_notes.iter().enumerate() {
            an.note.validate(&format!("notes[{i}]"))?;
            if an.duration_frames == 0 {
                return Err(ScoreError::validation(format!(
                    "notes[{i}].duration_frames must be >= 1"
                )));
            }
            if an.end_frames() > num_frames {
                return Err(ScoreError::validation(format!(
                    "notes[{i}] spans frames [{}, {}) beyond num_frames {num_frames}",
                    an.onset_frames,
                    an.end_frames()
                )));
            }
        }
        Ok(AlignedScore { aligned_notes, num_frames, performer_id })
    }

    pub fn notes(&self) -> &[AlignedNote] {
        &self.aligned_notes
    }

    pub fn is_empty(&self) -> bool {
        self.aligned_notes.is_empty()
    }
}

/// How to treat values beyond an embedding-table capacity.
///
/// The architecture tables cap note time and duration indices; whether the
/// cap saturates or rejects is left open, so both behaviors exist behind
/// this flag. The default is to saturate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum ClipPolicy {
    #[default]
    Saturate,
    Error,
}

/// Clips `value` to `[0, cap - 1]` under the given policy.
pub fn clip_index(value: u32, cap: u32, policy: ClipPolicy) -> Result<u32, ScoreError> {
    debug_assert!(cap > 0);
    if value < cap {
        Ok(value)
    } else {
        match policy {
            ClipPolicy::Saturate => Ok(cap - 1),
            ClipPolicy::Error => Err(ScoreError::IndexOutOfRange { value, cap }),
        }
    }
}
