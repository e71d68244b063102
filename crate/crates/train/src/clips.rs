//! Slicing a full performance into fixed-length training clips.

use espressivo_dsp::MelSpectrogram;
use espressivo_score::{AlignedNote, AlignedScore, FRAME_SECONDS};

use crate::TrainError;

/// Frames per clip window: floor(clip_seconds / frame length), so 5 s is
/// 312 frames.
pub fn frames_per_clip(clip_seconds: f64) -> Result<usize, TrainError> {
    let frames = (clip_seconds / FRAME_SECONDS).floor();
    if !(frames >= 1.0) || !frames.is_finite() {
        return Err(TrainError::Config(format!(
            "clip_seconds = {clip_seconds} is shorter than one frame"
        )));
    }
    Ok(frames as usize)
}

/// Cuts an aligned performance and its spectrogram into non-overlapping
/// fixed-length windows.
///
/// Notes crossing a window boundary are truncated at it and re-based to the
/// window's clock (so a long note appears in consecutive clips, each seeing
/// its own piece). Windows containing no notes are dropped, as is the final
/// partial window.
pub fn slice_clips(
    aligned: &AlignedScore,
    mel: &MelSpectrogram,
    clip_seconds: f64,
) -> Result<Vec<(AlignedScore, MelSpectrogram)>, TrainError> {
    if mel.num_frames() == 0 {
        return Err(TrainError::Config("cannot slice an empty spectrogram".into()));
    }
    let window = frames_per_clip(clip_seconds)?;
    let num_windows = mel.num_frames() / window;

    let mut clips = Vec::new();
    for w in 0..num_windows {
        let start = (w * window) as u32;
        let end = start + window as u32;

        let notes: Vec<AlignedNote> = aligned
            .notes()
            .iter()
            .filter(|an| an.onset_frames < end && an.end_frames() > start)
            .map(|an| AlignedNote {
                note: an.note,
                onset_frames: an.onset_frames.max(start) - start,
                duration_frames: an.end_frames().min(end) - an.onset_frames.max(start),
            })
            .collect();
        if notes.is_empty() {
            continue;
        }

        let mut data = Vec::with_capacity(mel.bands() * window);
        for band in 0..mel.bands() {
            data.extend_from_slice(&mel.row(band)[w * window..(w + 1) * window]);
        }
        clips.push((
            AlignedScore::new(notes, window as u32, aligned.performer_id)?,
            MelSpectrogram::from_data(data, window, *mel.params())?,
        ));
    }
    Ok(clips)
}
