//! Constant-tempo alignment: the baseline mapping from metric ticks to
//! spectrogram frames, and the timing used to render scores for the
//! DTW-based dataset construction.

use crate::{AlignedNote, AlignedScore, Score, FRAME_SECONDS, TICKS_PER_QUARTER};

/// Maps every note onto frames assuming the score tempo is held exactly.
///
/// A tick lasts `60 / tempo / 24` seconds; frame indices are the rounded
/// tick times divided by the 16 ms frame period, with durations clamped to
/// at least one frame.
pub fn naive_align(score: &Score) -> AlignedScore {
    let seconds_per_tick = 60.0 / score.tempo / TICKS_PER_QUARTER as f64;
    let frames = |ticks: u32| (ticks as f64 * seconds_per_tick / FRAME_SECONDS).round() as u32;

    let mut num_frames = 0u32;
    let aligned_notes: Vec<AlignedNote> = score
        .notes()
        .iter()
        .map(|&note| {
            let onset_frames = frames(note.onset);
            let duration_frames = frames(note.duration).max(1);
            num_frames = num_frames.max(onset_frames + duration_frames);
            AlignedNote { note, onset_frames, duration_frames }
        })
        .collect();

    AlignedScore::new(aligned_notes, num_frames, score.performer_id)
        .expect("constant-tempo alignment satisfies aligned-score invariants")
}
