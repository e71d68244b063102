//! Score-to-recording alignment by dynamic time warping.
//!
//! The dataset-construction flow: render the score with the oracle
//! synthesizer, take constant-Q spectrograms of both the rendering and the
//! real recording, build a pairwise [`frame_cost`] matrix, find the optimal
//! [`dtw`] warping path, and [`transfer_alignment`] the score's known frame
//! positions through that path. The output is a ground-truth aligned score
//! in recording time, ready for training the expressive-timing model.
//!
//! DTW here is the standard O(N*M) dynamic program over the step set
//! {(+1,0), (0,+1), (+1,+1)} with full-matrix memory — fine at desk scale
//! (minutes of audio), with an optional Sakoe-Chiba band for longer inputs.

mod dp;
mod transfer;

pub use dp::{dtw, dtw_banded};
pub use transfer::transfer_alignment;

use espressivo_dsp::CqtSpectrogram;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DtwError {
    #[error("frame cost requires matching bin counts: {a} vs {b}")]
    BinMismatch { a: usize, b: usize },

    #[error("cannot warp an empty cost matrix")]
    EmptyCost,

    #[error("cost matrix entries must be non-negative and finite")]
    BadCost,

    #[error("invalid warping path: {0}")]
    BadPath(String),

    #[error("note at synthesized frame {frame} is beyond the path range {range}")]
    FrameOutOfRange { frame: u32, range: usize },
}

/// Pairwise distance matrix between two frame sequences.
/// Rows index frames of the first (synthesized) sequence, columns frames of
/// the second (recording).
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl CostMatrix {
    /// Wraps a row-major matrix of non-negative finite costs.
    pub fn new(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self, DtwError> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(DtwError::EmptyCost);
        }
        if data.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(DtwError::BadCost);
        }
        Ok(Self { data, rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// The same costs with rows and columns swapped.
    pub fn transposed(&self) -> CostMatrix {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.at(i, j);
            }
        }
        CostMatrix { data, rows: self.cols, cols: self.rows }
    }
}

/// Euclidean distance between every pair of constant-Q frames.
pub fn frame_cost(a: &CqtSpectrogram, b: &CqtSpectrogram) -> Result<CostMatrix, DtwError> {
    if a.num_bins() != b.num_bins() {
        return Err(DtwError::BinMismatch { a: a.num_bins(), b: b.num_bins() });
    }
    let rows = a.num_frames();
    let cols = b.num_frames();
    let mut data = vec![0.0f64; rows * cols];
    for i in 0..rows {
        let fa = a.frame(i);
        for j in 0..cols {
            let fb = b.frame(j);
            let mut acc = 0.0f64;
            for (x, y) in fa.iter().zip(fb) {
                let d = (*x - *y) as f64;
                acc += d * d;
            }
            data[i * cols + j] = acc.sqrt();
        }
    }
    CostMatrix::new(data, rows, cols)
}

/// Monotone warping path from (0,0) to (N-1, M-1) over the step set
/// {(+1,0), (0,+1), (+1,+1)}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarpingPath {
    pairs: Vec<(usize, usize)>,
}

impl WarpingPath {
    /// Validates the step structure of an externally built path.
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self, DtwError> {
        if pairs.is_empty() {
            return Err(DtwError::BadPath("path is empty".into()));
        }
        if pairs[0] != (0, 0) {
            return Err(DtwError::BadPath(format!("path starts at {:?}, not (0, 0)", pairs[0])));
        }
        for w in pairs.windows(2) {
            let (di, dj) = (w[1].0 as i64 - w[0].0 as i64, w[1].1 as i64 - w[0].1 as i64);
            if !matches!((di, dj), (1, 0) | (0, 1) | (1, 1)) {
                return Err(DtwError::BadPath(format!("illegal step {:?} -> {:?}", w[0], w[1])));
            }
        }
        Ok(Self { pairs })
    }

    pub(crate) fn from_backtrack(pairs: Vec<(usize, usize)>) -> Self {
        Self { pairs }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Last (i, j) pair; the path ends at (N-1, M-1).
    pub fn end(&self) -> (usize, usize) {
        *self.pairs.last().unwrap()
    }

    /// The path with coordinates swapped (still a valid path).
    pub fn transposed(&self) -> WarpingPath {
        Self { pairs: self.pairs.iter().map(|&(i, j)| (j, i)).collect() }
    }

    /// Sum of matrix costs along the path.
    pub fn cost_along(&self, cost: &CostMatrix) -> f64 {
        self.pairs.iter().map(|&(i, j)| cost.at(i, j)).sum()
    }
}
