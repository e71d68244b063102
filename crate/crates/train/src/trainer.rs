//! The training loop shared by both models.
//!
//! The loop is deliberately plain: a single thread, an explicit step
//! counter, gradient accumulation over a shuffled batch, Adam with the
//! warmup/annealing schedule, JSONL metrics, and a rolling checkpoint.
//! Everything is driven by one seed — model init, the data order, and
//! dropout draw from separate streams derived from it, so two runs with the
//! same seed and inputs produce identical metrics and checkpoints.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use espressivo_nn::{lr_schedule, Adam, Mode, ParamSet, Tensor};
use espressivo_synth::{synthesis_loss, SynthesisModel, SynthesisModelConfig};
use espressivo_timing::{alignment_loss, AlignmentModel, AlignmentModelConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ModelKind, TrainingConfig, ALIGNMENT_ANNEAL_RATE, ALIGNMENT_ANNEAL_STEPS};
use crate::manifest::{AlignmentPair, SynthesisClip};
use crate::split::split_grouped;
use crate::TrainError;

/// Distinct offsets so data order and dropout never share a stream with
/// model initialization (which uses the seed directly). Reseeding any one
/// consumer would otherwise silently shift the others.
const DATA_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;
const DROPOUT_STREAM: u64 = 0x6a09_e667_f3bc_c909;

/// One line of the metrics JSONL file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub lr: f64,
    pub train_loss: f64,
    /// Mean loss over the held-out units; absent when the split has none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
}

/// What a finished run left behind.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub steps_run: u64,
    pub final_train_loss: f64,
    pub final_val_loss: Option<f64>,
    pub checkpoint_path: PathBuf,
    pub metrics_path: PathBuf,
}

/// Runs the step loop over `num_units` training units whose loss is
/// computed by `unit_loss`. `group_of[unit]` names the recording a unit was
/// cut from; the validation split keeps whole recordings out of training.
/// `save` writes the model checkpoint; it runs once before the first step
/// (so an abort at any step leaves a loadable file), on the periodic
/// cadence, and at the end.
#[allow(clippy::too_many_arguments)]
fn run_loop(
    cfg: &TrainingConfig,
    kind: ModelKind,
    model_dim: usize,
    group_of: &[usize],
    out_dir: &Path,
    params: &ParamSet<f32>,
    mut unit_loss: impl FnMut(usize, &mut Mode<'_>) -> Result<Tensor<f32>, TrainError>,
    mut save: impl FnMut(&Path) -> Result<(), TrainError>,
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    if group_of.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    fs::create_dir_all(out_dir)?;

    let (train_units, val_units) = split_grouped(group_of, cfg.validation_fraction, cfg.seed);
    if train_units.is_empty() {
        return Err(TrainError::Config(format!(
            "validation fraction {} leaves no training units",
            cfg.validation_fraction
        )));
    }

    let checkpoint_path = out_dir.join("model.ckpt");
    let metrics_path = out_dir.join("metrics.jsonl");
    save(&checkpoint_path)?;
    let mut metrics = BufWriter::new(File::create(&metrics_path)?);

    let mut data_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ DATA_STREAM);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ DROPOUT_STREAM);
    let mut adam = Adam::new();
    let (anneal_steps, anneal_rate) = match kind {
        ModelKind::Alignment => (&ALIGNMENT_ANNEAL_STEPS[..], ALIGNMENT_ANNEAL_RATE),
        ModelKind::Synthesis => (&[][..], 1.0),
    };
    let warmup = cfg.warmup_for(kind);

    // Epoch-shuffled unit order; batches simply continue across epochs.
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut next_unit = |rng: &mut ChaCha8Rng| {
        if cursor == order.len() {
            order = train_units.clone();
            order.shuffle(rng);
            cursor = 0;
        }
        cursor += 1;
        order[cursor - 1]
    };

    let mut last_train_loss = f64::NAN;
    let mut last_val_loss = None;
    for step in 1..=cfg.max_steps {
        let batch: Vec<usize> =
            (0..cfg.batch_size).map(|_| next_unit(&mut data_rng)).collect();

        params.zero_grads();
        let mut total = 0.0;
        for &unit in &batch {
            let mut mode = Mode::Train { rng: &mut dropout_rng };
            let loss = unit_loss(unit, &mut mode)?;
            let value = loss.item();
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss { step });
            }
            total += value as f64;
            loss.scale(1.0 / batch.len() as f64).backward();
        }
        last_train_loss = total / batch.len() as f64;

        let lr = lr_schedule(step, model_dim, warmup, anneal_steps, anneal_rate)?;
        adam.step(params, lr)?;

        if step % cfg.log_every == 0 || step == cfg.max_steps {
            last_val_loss = match val_units.is_empty() {
                true => None,
                false => {
                    let mut total = 0.0;
                    for &unit in &val_units {
                        total += unit_loss(unit, &mut Mode::Eval)?.item() as f64;
                    }
                    Some(total / val_units.len() as f64)
                }
            };
            let record = MetricsRecord {
                step,
                lr,
                train_loss: last_train_loss,
                val_loss: last_val_loss,
            };
            serde_json::to_writer(&mut metrics, &record)?;
            metrics.write_all(b"\n")?;
            metrics.flush()?;
        }
        if step % cfg.checkpoint_every == 0 || step == cfg.max_steps {
            save(&checkpoint_path)?;
        }
    }

    Ok(TrainReport {
        steps_run: cfg.max_steps,
        final_train_loss: last_train_loss,
        final_val_loss: last_val_loss,
        checkpoint_path,
        metrics_path,
    })
}

/// Trains an alignment model on (score, aligned score) pairs. The training
/// config's dropout overrides the model config's.
pub fn train_alignment(
    pairs: &[AlignmentPair],
    model_cfg: &AlignmentModelConfig,
    cfg: &TrainingConfig,
    out_dir: &Path,
) -> Result<(AlignmentModel<f32>, TrainReport), TrainError> {
    let mut model_cfg = model_cfg.clone();
    model_cfg.dropout = cfg.dropout;
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = AlignmentModel::<f32>::new(&mut init_rng, &model_cfg)?;
    let params = model.params();
    let group_of: Vec<usize> = pairs.iter().map(|p| p.recording).collect();
    let report = run_loop(
        cfg,
        ModelKind::Alignment,
        model_cfg.embed_dim,
        &group_of,
        out_dir,
        &params,
        |unit, mode| {
            let pair = &pairs[unit];
            let pred = model.forward_raw(&pair.score, mode)?;
            Ok(alignment_loss(&pred, &pair.aligned)?)
        },
        |path| Ok(model.save(path)?),
    )?;
    Ok((model, report))
}

/// Trains a synthesis model on fixed-length (aligned score, log-mel) clips.
/// The training config's dropout overrides the model config's.
pub fn train_synthesis(
    clips: &[SynthesisClip],
    model_cfg: &SynthesisModelConfig,
    cfg: &TrainingConfig,
    out_dir: &Path,
) -> Result<(SynthesisModel<f32>, TrainReport), TrainError> {
    let mut model_cfg = model_cfg.clone();
    model_cfg.dropout = cfg.dropout;
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = SynthesisModel::<f32>::new(&mut init_rng, &model_cfg)?;
    let params = model.params();
    let group_of: Vec<usize> = clips.iter().map(|c| c.recording).collect();
    let report = run_loop(
        cfg,
        ModelKind::Synthesis,
        model_cfg.embed_dim,
        &group_of,
        out_dir,
        &params,
        |unit, mode| {
            let clip = &clips[unit];
            let pred = model.forward_frames(&clip.aligned, mode)?;
            Ok(synthesis_loss(&pred, &clip.mel)?)
        },
        |path| Ok(model.save(path)?),
    )?;
    Ok((model, report))
}

/// Reads a metrics JSONL file back into records (newest run only; the
/// trainer truncates the file at start).
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>, TrainError> {
    let text = fs::read_to_string(path)
        .map_err(|source| TrainError::Read { path: path.into(), source })?;
    text.lines().map(|line| Ok(serde_json::from_str(line)?)).collect()
}
