//! The nine subcommands. Each returns `Ok(())` or a classified [`Failure`];
//! printing and exit codes live in `main`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use espressivo_dsp::{
    additive_synth, cqt, griffin_lim, read_mel, read_wav, write_wav, CqtParams, MelSpectrogram,
    SpectrogramParams, LOG_FLOOR,
};
use espressivo_dtw::{dtw_banded, frame_cost, transfer_alignment};
use espressivo_nn::{grad_check, Mode};
use espressivo_score::{
    naive_align, parse_aligned_json, parse_notes_json, serialize_aligned, AlignedNote,
    AlignedScore, Note, Score, FRAME_SECONDS,
};
use espressivo_synth::{synthesis_loss, SynthesisModel, SynthesisModelConfig};
use espressivo_timing::{alignment_loss, AlignmentModel, AlignmentModelConfig};
use espressivo_train::{
    build_alignment_pairs, build_synthesis_clips, evaluate_synthesis, evaluation_table,
    generate_corpus, split_grouped, train_alignment, train_synthesis, DatasetManifest, EvalRow,
    TrainError, TrainingConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::failure::Failure;

#[derive(Subcommand)]
pub enum Command {
    /// Build a ground-truth alignment by warping a score's deadpan
    /// rendition onto a recording (constant-Q DTW)
    AlignDataset(AlignDatasetArgs),
    /// Generate a synthetic corpus: scores, expressive alignments,
    /// oracle-rendered recordings, and a manifest
    GenCorpus(GenCorpusArgs),
    /// Train the expressive-timing alignment model on a manifest
    TrainAlignment(TrainAlignmentArgs),
    /// Train the mel synthesis model on a manifest
    TrainSynthesis(TrainSynthesisArgs),
    /// Predict an expressive alignment for a score with a trained model
    PredictAlignment(PredictAlignmentArgs),
    /// Full chain: score -> alignment -> log-mel -> Griffin-Lim -> WAV
    Synth(SynthArgs),
    /// Invert a saved log-mel spectrogram to a WAV
    Invert(InvertArgs),
    /// Score synthesis checkpoints by mean log-mel MSE, one table row per
    /// checkpoint
    Evaluate(EvaluateArgs),
    /// Finite-difference gradient check of a freshly initialized model
    Gradcheck(GradcheckArgs),
}

pub fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::AlignDataset(args) => align_dataset(args),
        Command::GenCorpus(args) => gen_corpus(args),
        Command::TrainAlignment(args) => run_train_alignment(args),
        Command::TrainSynthesis(args) => run_train_synthesis(args),
        Command::PredictAlignment(args) => predict_alignment(args),
        Command::Synth(args) => synth(args),
        Command::Invert(args) => invert(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Gradcheck(args) => gradcheck(args),
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))
}

#[derive(Args)]
pub struct AlignDatasetArgs {
    /// Score notes JSON
    #[arg(long)]
    score: PathBuf,
    /// Recording WAV (16 kHz mono)
    #[arg(long)]
    audio: PathBuf,
    /// Output aligned-score JSON
    #[arg(long)]
    out: PathBuf,
    /// DTW band radius in frames; omit for a full search
    #[arg(long)]
    band: Option<usize>,
}

fn align_dataset(args: AlignDatasetArgs) -> Result<(), Failure> {
    let score = parse_notes_json(&read_text(&args.score)?)?;
    let deadpan = naive_align(&score);
    let synthesized = additive_synth(&deadpan);
    let recording = read_wav(&args.audio)?;

    let params = CqtParams::default();
    let cost = frame_cost(&cqt(&synthesized, &params)?, &cqt(&recording, &params)?)?;
    let (path, _) = dtw_banded(&cost, args.band)?;
    let aligned = transfer_alignment(&path, &deadpan)?;

    fs::write(&args.out, serialize_aligned(&aligned))?;
    println!(
        "aligned {} notes over {} frames -> {}",
        aligned.notes().len(),
        aligned.num_frames,
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct GenCorpusArgs {
    /// Output directory for the pieces and their manifest
    #[arg(long)]
    out: PathBuf,
    /// Number of pieces to generate
    #[arg(long, default_value_t = 10)]
    pieces: usize,
    /// Number of distinct performer ids to cycle through
    #[arg(long, default_value_t = 4)]
    performers: u32,
    /// RNG seed; every generated byte derives from it
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn gen_corpus(args: GenCorpusArgs) -> Result<(), Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let manifest = generate_corpus(&args.out, args.pieces, args.performers, &mut rng)?;
    println!(
        "generated {} pieces -> {}",
        manifest.entries.len(),
        args.out.join("manifest.json").display()
    );
    Ok(())
}

/// Training-config resolution shared by both trainers. Precedence:
/// built-in defaults, then the `key = value` config file, then flags.
#[derive(Args)]
pub struct TrainingFlags {
    /// Flat `key = value` training-config file applied over the defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training units per optimizer step
    #[arg(long)]
    batch_size: Option<usize>,
    /// Dropout probability during training (overrides the model's own)
    #[arg(long)]
    dropout: Option<f64>,
    /// Learning-rate warmup steps (defaults: 1000 alignment, 4000 synthesis)
    #[arg(long)]
    warmup_steps: Option<u64>,
    /// Total optimizer steps
    #[arg(long)]
    max_steps: Option<u64>,
    /// Seed for model init, batching, dropout, and the validation split
    #[arg(long)]
    seed: Option<u64>,
    /// Clip length in seconds for synthesis training
    #[arg(long)]
    clip_seconds: Option<f64>,
    /// Fraction of recordings held out for validation
    #[arg(long)]
    validation_fraction: Option<f64>,
    /// Log metrics every this many steps
    #[arg(long)]
    log_every: Option<u64>,
    /// Overwrite the rolling checkpoint every this many steps
    #[arg(long)]
    checkpoint_every: Option<u64>,
}

impl TrainingFlags {
    fn resolve(&self) -> Result<TrainingConfig, Failure> {
        let mut cfg = TrainingConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_kv_text(&read_text(path)?)?;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.dropout {
            cfg.dropout = v;
        }
        if let Some(v) = self.warmup_steps {
            cfg.warmup_steps = Some(v);
        }
        if let Some(v) = self.max_steps {
            cfg.max_steps = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.clip_seconds {
            cfg.clip_seconds = v;
        }
        if let Some(v) = self.validation_fraction {
            cfg.validation_fraction = v;
        }
        if let Some(v) = self.log_every {
            cfg.log_every = v;
        }
        if let Some(v) = self.checkpoint_every {
            cfg.checkpoint_every = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn report_training(report: &espressivo_train::TrainReport) {
    println!(
        "trained {} steps, final train loss {:.6}{} -> {}",
        report.steps_run,
        report.final_train_loss,
        match report.final_val_loss {
            Some(v) => format!(", val loss {v:.6}"),
            None => String::new(),
        },
        report.checkpoint_path.display()
    );
}

#[derive(Args)]
pub struct TrainAlignmentArgs {
    /// Dataset manifest JSON
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for the checkpoint and metrics
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    training: TrainingFlags,
}

fn run_train_alignment(args: TrainAlignmentArgs) -> Result<(), Failure> {
    let cfg = args.training.resolve()?;
    let manifest = DatasetManifest::load(&args.manifest)?;
    let pairs = build_alignment_pairs(&manifest)?;
    let (_, report) = train_alignment(&pairs, &AlignmentModelConfig::default(), &cfg, &args.out)?;
    report_training(&report);
    Ok(())
}

#[derive(Args)]
pub struct TrainSynthesisArgs {
    /// Dataset manifest JSON
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for the checkpoint and metrics
    #[arg(long)]
    out: PathBuf,
    /// Ablation: replace the note encoder with the piano-roll projection
    #[arg(long)]
    no_encoder: bool,
    /// Ablation: disable note-wise positional modulation of note embeddings
    #[arg(long)]
    no_npe: bool,
    /// Ablation: disable the performer embedding
    #[arg(long)]
    no_performer: bool,
    #[command(flatten)]
    training: TrainingFlags,
}

fn run_train_synthesis(args: TrainSynthesisArgs) -> Result<(), Failure> {
    let cfg = args.training.resolve()?;
    let manifest = DatasetManifest::load(&args.manifest)?;
    let clips = build_synthesis_clips(&manifest, cfg.clip_seconds)?;
    let model_cfg = SynthesisModelConfig {
        use_encoder: !args.no_encoder,
        use_npe: !args.no_npe,
        use_performer_embedding: !args.no_performer,
        ..Default::default()
    };
    let (_, report) = train_synthesis(&clips, &model_cfg, &cfg, &args.out)?;
    report_training(&report);
    Ok(())
}

#[derive(Args)]
pub struct PredictAlignmentArgs {
    /// Score notes JSON
    #[arg(long)]
    score: PathBuf,
    /// Alignment model checkpoint
    #[arg(long)]
    ckpt: PathBuf,
    /// Output aligned-score JSON
    #[arg(long)]
    out: PathBuf,
}

fn predict_alignment(args: PredictAlignmentArgs) -> Result<(), Failure> {
    let score = parse_notes_json(&read_text(&args.score)?)?;
    let model = AlignmentModel::<f32>::load(&args.ckpt)?;
    let aligned = model.predict_alignment(&score)?;
    fs::write(&args.out, serialize_aligned(&aligned))?;
    println!(
        "predicted {} frames ({:.2} s) -> {}",
        aligned.num_frames,
        aligned.num_frames as f64 * FRAME_SECONDS,
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct SynthArgs {
    /// Score notes JSON
    #[arg(long)]
    score: PathBuf,
    /// Synthesis model checkpoint
    #[arg(long)]
    ckpt: PathBuf,
    /// Alignment model checkpoint for the timing stage; omitting it (and
    /// --use-ground-truth-alignment) plays the score deadpan at its tempo
    #[arg(long)]
    alignment_ckpt: Option<PathBuf>,
    /// Take timing from an aligned-score JSON instead of a model
    #[arg(long)]
    use_ground_truth_alignment: bool,
    /// Aligned-score JSON (requires --use-ground-truth-alignment)
    #[arg(long)]
    aligned: Option<PathBuf>,
    /// Griffin-Lim iterations for waveform reconstruction
    #[arg(long, default_value_t = 60)]
    gl_iters: usize,
    /// RNG seed; every stage is deterministic, so this is currently inert,
    /// but it is the single entry point for any future stochastic stage
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output WAV (16 kHz mono)
    #[arg(long)]
    out: PathBuf,
}

fn synth(args: SynthArgs) -> Result<(), Failure> {
    if args.use_ground_truth_alignment && args.alignment_ckpt.is_some() {
        return Err(Failure::Usage(
            "--use-ground-truth-alignment and --alignment-ckpt are mutually exclusive".into(),
        ));
    }
    if args.aligned.is_some() != args.use_ground_truth_alignment {
        return Err(Failure::Usage(
            "--aligned and --use-ground-truth-alignment must be given together".into(),
        ));
    }

    let score = parse_notes_json(&read_text(&args.score)?)?;
    let aligned = if args.use_ground_truth_alignment {
        let path = args.aligned.as_ref().expect("checked above");
        parse_aligned_json(&read_text(path)?)?
    } else if let Some(ckpt) = &args.alignment_ckpt {
        AlignmentModel::<f32>::load(ckpt)?.predict_alignment(&score)?
    } else {
        naive_align(&score)
    };

    let model = SynthesisModel::<f32>::load(&args.ckpt)?;
    let mel = synthesize_segmented(&model, &aligned)?;
    let audio = griffin_lim(&mel, args.gl_iters)?;
    write_wav(&args.out, &audio)?;
    println!(
        "synthesized {} frames ({:.2} s, seed {}) -> {}",
        mel.num_frames(),
        mel.num_frames() as f64 * FRAME_SECONDS,
        args.seed,
        args.out.display()
    );
    Ok(())
}

/// Synthesizes a mel spectrogram of any length by cutting the aligned score
/// into windows the decoder accepts, synthesizing each, and concatenating.
/// Windows without notes come out as silence (the log floor).
fn synthesize_segmented(
    model: &SynthesisModel<f32>,
    aligned: &AlignedScore,
) -> Result<MelSpectrogram, Failure> {
    let seg = model.config().max_seq_len;
    let total = aligned.num_frames as usize;
    if total == 0 {
        return Err(Failure::Data("the alignment spans zero frames".into()));
    }
    let bands = model.config().mel_bands;
    let mut data = vec![LOG_FLOOR.ln(); bands * total];

    let mut start = 0usize;
    while start < total {
        let end = (start + seg).min(total);
        let notes: Vec<AlignedNote> = aligned
            .notes()
            .iter()
            .filter(|an| (an.onset_frames as usize) < end && an.end_frames() as usize > start)
            .map(|an| {
                let s = (an.onset_frames as usize).max(start);
                let e = (an.end_frames() as usize).min(end);
                AlignedNote {
                    note: an.note,
                    onset_frames: (s - start) as u32,
                    duration_frames: (e - s).max(1) as u32,
                }
            })
            .collect();
        if !notes.is_empty() {
            let window =
                AlignedScore::new(notes, (end - start) as u32, aligned.performer_id)?;
            let mel = model.synthesize_mel(&window)?;
            for band in 0..bands {
                data[band * total + start..band * total + end]
                    .copy_from_slice(&mel.row(band)[..end - start]);
            }
        }
        start = end;
    }

    let params = SpectrogramParams { mel_bands: bands, ..Default::default() };
    Ok(MelSpectrogram::from_data(data, total, params)?)
}

#[derive(Args)]
pub struct InvertArgs {
    /// Saved log-mel spectrogram (binary mel format)
    #[arg(long)]
    mel: PathBuf,
    /// Griffin-Lim iterations
    #[arg(long, default_value_t = 60)]
    iters: usize,
    /// Output WAV (16 kHz mono)
    #[arg(long)]
    out: PathBuf,
}

fn invert(args: InvertArgs) -> Result<(), Failure> {
    let mel = read_mel(&args.mel)?;
    let audio = griffin_lim(&mel, args.iters)?;
    write_wav(&args.out, &audio)?;
    println!(
        "inverted {} frames with {} iterations -> {}",
        mel.num_frames(),
        args.iters,
        args.out.display()
    );
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitChoice {
    Train,
    Val,
    All,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Dataset manifest JSON
    #[arg(long)]
    manifest: PathBuf,
    /// Synthesis checkpoint to score; repeat to compare variants
    #[arg(long = "ckpt", required = true)]
    ckpts: Vec<PathBuf>,
    /// Which units to evaluate
    #[arg(long, value_enum, default_value_t = SplitChoice::Val)]
    split: SplitChoice,
    /// Seed that fixed the validation split at training time
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Validation fraction used at training time
    #[arg(long, default_value_t = 0.1)]
    validation_fraction: f64,
    /// Clip length in seconds, matching training
    #[arg(long, default_value_t = 5.0)]
    clip_seconds: f64,
}

fn evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    let manifest = DatasetManifest::load(&args.manifest)?;
    let clips = build_synthesis_clips(&manifest, args.clip_seconds)?;
    let group_of: Vec<usize> = clips.iter().map(|c| c.recording).collect();
    let (train_units, val_units) =
        split_grouped(&group_of, args.validation_fraction, args.seed);
    let selected = match args.split {
        SplitChoice::Train => train_units,
        SplitChoice::Val => val_units,
        SplitChoice::All => (0..clips.len()).collect(),
    };
    if selected.is_empty() {
        return Err(TrainError::EmptyDataset.into());
    }

    let mut rows = Vec::new();
    for ckpt in &args.ckpts {
        let model = SynthesisModel::<f32>::load(ckpt)?;
        if model.config().mel_bands != clips[0].mel.bands() {
            return Err(Failure::Data(format!(
                "checkpoint {} predicts {} mel bands but the dataset has {}",
                ckpt.display(),
                model.config().mel_bands,
                clips[0].mel.bands()
            )));
        }
        let mse = evaluate_synthesis(&model, selected.iter().map(|&u| &clips[u]))?;
        rows.push(EvalRow {
            variant: ckpt.display().to_string(),
            mse,
            clips: selected.len(),
        });
    }
    print!("{}", evaluation_table(&rows));
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    Alignment,
    Synthesis,
}

#[derive(Args)]
pub struct GradcheckArgs {
    /// Which model to check
    #[arg(long, value_enum)]
    model: ModelChoice,
    /// Seed for the checked model's initialization
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Finite-difference step size
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    /// Coordinates sampled per parameter tensor
    #[arg(long, default_value_t = 4)]
    max_coords: usize,
}

/// The acceptance bar for the whole-model check.
const GRADCHECK_BAR: f64 = 1e-4;

fn gradcheck(args: GradcheckArgs) -> Result<(), Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let max = match args.model {
        ModelChoice::Synthesis => {
            let cfg = SynthesisModelConfig { dropout: 0.0, ..Default::default() };
            let model = SynthesisModel::<f64>::new(&mut rng, &cfg)?;
            let params = model.params();
            let aligned = AlignedScore::new(
                vec![
                    AlignedNote {
                        note: Note::with_velocity(60, 0, 12, 80),
                        onset_frames: 0,
                        duration_frames: 5,
                    },
                    AlignedNote {
                        note: Note::with_velocity(64, 12, 12, 70),
                        onset_frames: 2,
                        duration_frames: 6,
                    },
                    AlignedNote {
                        note: Note::with_velocity(67, 24, 8, 90),
                        onset_frames: 4,
                        duration_frames: 3,
                    },
                ],
                8,
                0,
            )?;
            // Target on the scale of the untrained model's output: a large
            // residual would inflate the loss and with it both finite-
            // difference error terms, burying the tiny query/key gradients
            // this check must still resolve.
            let data: Vec<f32> =
                (0..cfg.mel_bands * 8).map(|i| 0.2 * (0.11 * i as f32).sin()).collect();
            let target = MelSpectrogram::from_data(
                data,
                8,
                SpectrogramParams { mel_bands: cfg.mel_bands, ..Default::default() },
            )?;
            // Surface forward errors once, then let the closure unwrap.
            let pred = model.forward_frames(&aligned, &mut Mode::Eval)?;
            synthesis_loss(&pred, &target)?;
            grad_check(
                || {
                    let pred = model.forward_frames(&aligned, &mut Mode::Eval).unwrap();
                    synthesis_loss(&pred, &target).unwrap()
                },
                &params,
                args.eps,
                args.max_coords,
            )?
        }
        ModelChoice::Alignment => {
            let cfg = AlignmentModelConfig { dropout: 0.0, ..Default::default() };
            let model = AlignmentModel::<f64>::new(&mut rng, &cfg)?;
            let params = model.params();
            let score = Score::new(
                vec![
                    Note::with_velocity(60, 0, 12, 80),
                    Note::with_velocity(64, 12, 12, 70),
                    Note::with_velocity(67, 24, 8, 90),
                    Note::with_velocity(72, 32, 6, 60),
                ],
                110.0,
                0,
            )?;
            let target = AlignedScore::new(
                vec![
                    AlignedNote {
                        note: score.notes()[0],
                        onset_frames: 0,
                        duration_frames: 5,
                    },
                    AlignedNote {
                        note: score.notes()[1],
                        onset_frames: 3,
                        duration_frames: 4,
                    },
                    AlignedNote {
                        note: score.notes()[2],
                        onset_frames: 6,
                        duration_frames: 2,
                    },
                    AlignedNote {
                        note: score.notes()[3],
                        onset_frames: 7,
                        duration_frames: 1,
                    },
                ],
                8,
                0,
            )?;
            let pred = model.forward_raw(&score, &mut Mode::Eval)?;
            alignment_loss(&pred, &target)?;
            grad_check(
                || {
                    let pred = model.forward_raw(&score, &mut Mode::Eval).unwrap();
                    alignment_loss(&pred, &target).unwrap()
                },
                &params,
                args.eps,
                args.max_coords,
            )?
        }
    };

    println!("max relative error: {max:.3e}");
    if max < GRADCHECK_BAR {
        Ok(())
    } else {
        Err(Failure::Numerical(format!(
            "gradient check failed: max relative error {max:.3e} >= {GRADCHECK_BAR:e}"
        )))
    }
}
