//! Canonical JSON interchange for scores and aligned scores.
//!
//! Score schema (version 1):
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "tempo": 120.0,
//!   "performer_id": 0,
//!   "resolution": 24,
//!   "notes": [{"pitch": 69, "onset": 0, "duration": 24, "velocity": 64}]
//! }
//! ```
//!
//! `velocity` is optional per note. `format_version` and `resolution` may be
//! omitted on input (they default to 1 and 24); any other value is rejected.
//! Aligned scores use the same note objects extended with `onset_frames` and
//! `duration_frames`, plus a top-level `num_frames`.

use serde::{Deserialize, Serialize};

use crate::{AlignedNote, AlignedScore, Note, Score, ScoreError, TICKS_PER_QUARTER};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Deserialize)]
struct RawNote {
    pitch: Option<i64>,
    onset: Option<i64>,
    duration: Option<i64>,
    velocity: Option<i64>,
    onset_frames: Option<i64>,
    duration_frames: Option<i64>,
}

#[derive(Deserialize)]
struct RawScore {
    format_version: Option<u64>,
    tempo: Option<f64>,
    performer_id: Option<u64>,
    resolution: Option<u64>,
    num_frames: Option<i64>,
    notes: Option<Vec<RawNote>>,
}

fn field_u32(value: Option<i64>, ctx: &str, field: &str, min: i64) -> Result<u32, ScoreError> {
    let v = value
        .ok_or_else(|| ScoreError::validation(format!("{ctx} is missing required key \"{field}\"")))?;
    if v < min || v > u32::MAX as i64 {
        return Err(ScoreError::validation(format!("{ctx}.{field} must be >= {min}, got {v}")));
    }
    Ok(v as u32)
}

fn raw_header(text: &str) -> Result<RawScore, ScoreError> {
    let raw: RawScore = serde_json::from_str(text).map_err(|e| ScoreError::Json(e.to_string()))?;
    if let Some(v) = raw.format_version {
        if v != FORMAT_VERSION {
            return Err(ScoreError::validation(format!(
                "unsupported format_version {v}, expected {FORMAT_VERSION}"
            )));
        }
    }
    if let Some(r) = raw.resolution {
        if r != TICKS_PER_QUARTER as u64 {
            return Err(ScoreError::validation(format!(
                "unsupported resolution {r}, expected {TICKS_PER_QUARTER}"
            )));
        }
    }
    Ok(raw)
}

fn note_from_raw(raw: &RawNote, i: usize) -> Result<Note, ScoreError> {
    let ctx = format!("notes[{i}]");
    let pitch = field_u32(raw.pitch, &ctx, "pitch", 0)?;
    if pitch > 127 {
        return Err(ScoreError::validation(format!("{ctx}.pitch must be in [0, 127], got {pitch}")));
    }
    let onset = field_u32(raw.onset, &ctx, "onset", 0)?;
    let duration = field_u32(raw.duration, &ctx, "duration", 1)?;
    let velocity = match raw.velocity {
        None => None,
        Some(v) if (1..=127).contains(&v) => Some(v as u8),
        Some(v) => {
            return Err(ScoreError::validation(format!(
                "{ctx}.velocity must be in [1, 127], got {v}"
            )))
        }
    };
    Ok(Note { pitch: pitch as u8, onset, duration, velocity })
}

/// Parses the canonical notes-JSON schema into a validated [`Score`].
/// Notes are re-sorted by `(onset, pitch)` on the way in.
pub fn parse_notes_json(text: &str) -> Result<Score, ScoreError> {
    let raw = raw_header(text)?;
    let tempo = raw
        .tempo
        .ok_or_else(|| ScoreError::validation("score is missing required key \"tempo\""))?;
    let performer_id = raw
        .performer_id
        .ok_or_else(|| ScoreError::validation("score is missing required key \"performer_id\""))?;
    let notes_raw = raw
        .notes
        .ok_or_else(|| ScoreError::validation("score is missing required key \"notes\""))?;
    let mut notes = Vec::with_capacity(notes_raw.len());
    for (i, raw_note) in notes_raw.iter().enumerate() {
        notes.push(note_from_raw(raw_note, i)?);
    }
    Score::new(notes, tempo, performer_id as u32)
}

/// Parses an aligned-score JSON document (the output schema of the dataset
/// alignment flow and the alignment model).
pub fn parse_aligned_json(text: &str) -> Result<AlignedScore, ScoreError> {
    let raw = raw_header(text)?;
    let performer_id = raw
        .performer_id
        .ok_or_else(|| ScoreError::validation("aligned score is missing required key \"performer_id\""))?;
    let num_frames = field_u32(raw.num_frames, "aligned score", "num_frames", 0)?;
    let notes_raw = raw
        .notes
        .ok_or_else(|| ScoreError::validation("aligned score is missing required key \"notes\""))?;
    let mut aligned = Vec::with_capacity(notes_raw.len());
    for (i, raw_note) in notes_raw.iter().enumerate() {
        let ctx = format!("notes[{i}]");
        let note = note_from_raw(raw_note, i)?;
        let onset_frames = field_u32(raw_note.onset_frames, &ctx, "onset_frames", 0)?;
        let duration_frames = field_u32(raw_note.duration_frames, &ctx, "duration_frames", 1)?;
        aligned.push(AlignedNote { note, onset_frames, duration_frames });
    }
    AlignedScore::new(aligned, num_frames, performer_id as u32)
}

#[derive(Serialize)]
struct NoteOut {
    pitch: u8,
    onset: u32,
    duration: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    velocity: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    onset_frames: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    duration_frames: Option<u32>,
}

#[derive(Serialize)]
struct ScoreOut<'a> {
    format_version: u64,
    tempo: f64,
    performer_id: u32,
    resolution: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    num_frames: Option<u32>,
    notes: &'a [NoteOut],
}

fn note_out(note: &Note) -> NoteOut {
    NoteOut {
        pitch: note.pitch,
        onset: note.onset,
        duration: note.duration,
        velocity: note.velocity,
        onset_frames: None,
        duration_frames: None,
    }
}

/// Serializes a score to the canonical JSON schema.
pub fn serialize_score(score: &Score) -> String {
    let notes: Vec<NoteOut> = score.notes().iter().map(note_out).collect();
    let out = ScoreOut {
        format_version: FORMAT_VERSION,
        tempo: score.tempo,
        performer_id: score.performer_id,
        resolution: TICKS_PER_QUARTER,
        num_frames: None,
        notes: &notes,
    };
    serde_json::to_string_pretty(&out).expect("score serialization cannot fail")
}

/// Serializes an aligned score; notes carry `onset_frames`/`duration_frames`.
pub fn serialize_aligned(aligned: &AlignedScore) -> String {
    let notes: Vec<NoteOut> = aligned
        .notes()
        .iter()
        .map(|an| {
            let mut out = note_out(&an.note);
            out.onset_frames = Some(an.onset_frames);
            out.duration_frames = Some(an.duration_frames);
            out
        })
        .collect();
    let out = ScoreOut {
        format_version: FORMAT_VERSION,
        tempo: 0.0,
        performer_id: aligned.performer_id,
        resolution: TICKS_PER_QUARTER,
        num_frames: Some(aligned.num_frames),
        notes: &notes,
    };
    // Aligned scores have no tempo of their own; serialize without one.
    let mut value = serde_json::to_value(&out).expect("aligned serialization cannot fail");
    value.as_object_mut().unwrap().remove("tempo");
    serde_json::to_string_pretty(&value).unwrap()
}
