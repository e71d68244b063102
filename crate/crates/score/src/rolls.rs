//! Piano-roll and position-roll encodings of an aligned score.
//!
//! Both rolls are dense 128 x num_frames matrices. The piano roll holds
//! `velocity / 127` (1.0 when the note has no velocity) across each note
//! span; the position roll falls linearly from 1 at the first frame of a
//! note to 0 at its last, carrying within-note position for models that
//! take rolls instead of note sequences.

use crate::AlignedScore;

pub const NUM_PITCHES: usize = 128;

/// A dense pitch-by-frame matrix, pitch-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Roll {
    data: Vec<f32>,
    num_frames: usize,
}

impl Roll {
    fn zeros(num_frames: usize) -> Self {
        Roll { data: vec![0.0; NUM_PITCHES * num_frames], num_frames }
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn value(&self, pitch: usize, frame: usize) -> f32 {
        self.data[pitch * self.num_frames + frame]
    }

    /// All 128 values of one frame column, pitch order.
    pub fn column(&self, frame: usize) -> Vec<f32> {
        (0..NUM_PITCHES).map(|p| self.value(p, frame)).collect()
    }

    pub fn row(&self, pitch: usize) -> &[f32] {
        &self.data[pitch * self.num_frames..(pitch + 1) * self.num_frames]
    }

    fn row_mut(&mut self, pitch: usize) -> &mut [f32] {
        &mut self.data[pitch * self.num_frames..(pitch + 1) * self.num_frames]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }
}

/// Builds the piano roll and position roll of an aligned score.
///
/// Notes are written in score order, so when two same-pitch notes overlap
/// the later one overwrites the shared frames of both rolls.
pub fn build_rolls(aligned: &AlignedScore) -> (Roll, Roll) {
    let frames = aligned.num_frames as usize;
    let mut piano = Roll::zeros(frames);
    let mut position = Roll::zeros(frames);

    for an in aligned.notes() {
        let onset = an.onset_frames as usize;
        let dur = an.duration_frames as usize;
        let level = an.note.velocity.map_or(1.0, |v| v as f32 / 127.0);
        let piano_row = &mut piano.row_mut(an.note.pitch as usize)[onset..onset + dur];
        piano_row.fill(level);
        let pos_row = &mut position.row_mut(an.note.pitch as usize)[onset..onset + dur];
        if dur == 1 {
            pos_row[0] = 1.0;
        } else {
            for (i, cell) in pos_row.iter_mut().enumerate() {
                *cell = 1.0 - i as f32 / (dur - 1) as f32;
            }
        }
    }

    (piano, position)
}
