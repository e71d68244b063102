use espressivo_score::{AlignedNote, AlignedScore};

use crate::{DtwError, WarpingPath};

/// Carries note timings through a warping path: each note's frame positions
/// in synthesized time become frame positions in recording time, giving the
/// ground-truth alignment used as a training target.
///
/// The onset maps to the FIRST recording frame the path pairs with the
/// synthesized onset frame; the last sounding frame (onset + duration - 1)
/// maps to the LAST recording frame paired with it. Taking first-of-onset
/// and last-of-ending keeps durations stable when the path dwells, and maps
/// a uniform k-times stretch to exactly k-times durations.
pub fn transfer_alignment(
    path: &WarpingPath,
    synth_aligned: &AlignedScore,
) -> Result<AlignedScore, DtwError> {
    let (last_i, last_j) = path.end();
    let n = last_i + 1;

    // first_of[i] / last_of[i]: range of recording frames paired with i.
    let mut first_of = vec![usize::MAX; n];
    let mut last_of = vec![0usize; n];
    for &(i, j) in path.pairs() {
        if first_of[i] == usize::MAX {
            first_of[i] = j;
        }
        last_of[i] = j;
    }

    let mut notes = Vec::with_capacity(synth_aligned.notes().len());
    for an in synth_aligned.notes() {
        let onset = an.onset_frames as usize;
        let ending = (an.onset_frames + an.duration_frames - 1) as usize;
        if ending >= n {
            return Err(DtwError::FrameOutOfRange {
                frame: an.onset_frames + an.duration_frames - 1,
                range: n,
            });
        }
        let mapped_on = first_of[onset];
        let mapped_end = last_of[ending];
        let duration = (mapped_end + 1).saturating_sub(mapped_on).max(1);
        notes.push(AlignedNote {
            note: an.note.clone(),
            onset_frames: mapped_on as u32,
            duration_frames: duration as u32,
        });
    }

    AlignedScore::new(notes, (last_j + 1) as u32, synth_aligned.performer_id)
        .map_err(|e| DtwError::BadPath(format!("transferred alignment is invalid: {e}")))
}
