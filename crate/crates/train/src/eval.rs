//! Checkpoint evaluation: mean synthesis loss over a clip set, and the
//! little table the CLI prints when comparing model variants.

use espressivo_nn::Mode;
use espressivo_synth::{synthesis_loss, SynthesisModel, SynthesisModelConfig};
use espressivo_timing::{AlignmentModel, AlignmentModelConfig};

use crate::manifest::SynthesisClip;
use crate::TrainError;

/// One comparison row: a variant name and its mean log-mel MSE.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub variant: String,
    pub mse: f64,
    pub clips: usize,
}

/// Mean synthesis loss of a model over a clip set, in eval mode (no
/// dropout). Deterministic: the same checkpoint and clips always produce
/// the same value.
pub fn evaluate_synthesis<'a>(
    model: &SynthesisModel<f32>,
    clips: impl IntoIterator<Item = &'a SynthesisClip>,
) -> Result<f64, TrainError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for clip in clips {
        let pred = model.forward_frames(&clip.aligned, &mut Mode::Eval)?;
        total += synthesis_loss(&pred, &clip.mel)?.item() as f64;
        count += 1;
    }
    if count == 0 {
        return Err(TrainError::EmptyDataset);
    }
    Ok(total / count as f64)
}

/// Renders rows as an aligned text table, one line per variant.
pub fn evaluation_table(rows: &[EvalRow]) -> String {
    let name_width = rows
        .iter()
        .map(|r| r.variant.len())
        .chain(std::iter::once("variant".len()))
        .max()
        .unwrap_or(0);
    let mut out = format!("{:<name_width$}  {:>12}  {:>6}\n", "variant", "mel_mse", "clips");
    for row in rows {
        out.push_str(&format!(
            "{:<name_width$}  {:>12.6}  {:>6}\n",
            row.variant, row.mse, row.clips
        ));
    }
    out
}

/// Errors unless the checkpoint's embedded config equals the requested one.
/// Guards the CLI against evaluating or resuming with mismatched shapes.
pub fn ensure_synthesis_config(
    model: &SynthesisModel<f32>,
    want: &SynthesisModelConfig,
) -> Result<(), TrainError> {
    if model.config() != want {
        return Err(TrainError::ConfigMismatch(format!(
            "checkpoint was trained with {:?}, requested {:?}",
            model.config(),
            want
        )));
    }
    Ok(())
}

pub fn ensure_alignment_config(
    model: &AlignmentModel<f32>,
    want: &AlignmentModelConfig,
) -> Result<(), TrainError> {
    if model.config() != want {
        return Err(TrainError::ConfigMismatch(format!(
            "checkpoint was trained with {:?}, requested {:?}",
            model.config(),
            want
        )));
    }
    Ok(())
}
