//! The synthesis model: note encoder, polyphonic mixer, frame decoder.

use std::path::Path;

use espressivo_dsp::{MelSpectrogram, SpectrogramParams, LOG_FLOOR};
use espressivo_nn::{
    apply_entries, load_checkpoint, save_checkpoint, sinusoidal_pe, Embedding, Linear, Mode,
    ParamSet, Real, Tensor, TransformerLayer, TransformerLayerConfig,
};
use espressivo_score::{build_rolls, clip_index, AlignedScore, ClipPolicy, NUM_PITCHES};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::SynthError;
use crate::mixer::polyphonic_mix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisModelConfig {
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub num_heads: usize,
    pub mha_hidden: usize,
    pub ffn_hidden: usize,
    pub embed_dim: usize,
    /// Upper bound on both the frame count of a clip and its note count.
    pub max_seq_len: usize,
    pub mel_bands: usize,
    pub num_performers: usize,
    pub dropout: f64,
    /// Modulate each note's frames by the note-wise positional encoding.
    pub use_npe: bool,
    /// Add a learned per-performer embedding to every note.
    pub use_performer_embedding: bool,
    /// Encode notes with a transformer and mix them onto frames. When off,
    /// frames are built directly from piano-roll and position-roll columns
    /// through a single linear projection.
    pub use_encoder: bool,
}

impl Default for SynthesisModelConfig {
    fn default() -> Self {
        SynthesisModelConfig {
            encoder_layers: 3,
            decoder_layers: 6,
            num_heads: 2,
            mha_hidden: 128,
            ffn_hidden: 512,
            embed_dim: 128,
            max_seq_len: 1000,
            mel_bands: 80,
            num_performers: 16,
            dropout: 0.2,
            use_npe: true,
            use_performer_embedding: true,
            use_encoder: true,
        }
    }
}

impl SynthesisModelConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::Config(msg));
        if self.encoder_layers == 0 && self.use_encoder {
            return bad("encoder_layers must be >= 1 when the encoder is enabled".into());
        }
        if self.decoder_layers == 0 {
            return bad("decoder_layers must be >= 1".into());
        }
        if self.embed_dim == 0 || self.embed_dim % 2 != 0 {
            return bad(format!("embed_dim must be even and nonzero, got {}", self.embed_dim));
        }
        if self.mel_bands == 0 {
            return bad("mel_bands must be >= 1".into());
        }
        if self.max_seq_len == 0 {
            return bad("max_seq_len must be >= 1".into());
        }
        if self.num_performers == 0 {
            return bad("num_performers must be >= 1".into());
        }
        // Attention-side constraints (head divisibility, dropout range) are
        // checked by the layer config itself.
        self.layer_config().validate()?;
        Ok(())
    }

    fn layer_config(&self) -> TransformerLayerConfig {
        TransformerLayerConfig {
            model_dim: self.embed_dim,
            mha_hidden: self.mha_hidden,
            num_heads: self.num_heads,
            ffn_hidden: self.ffn_hidden,
            ffn_kernel_sizes: (9, 1),
            dropout: self.dropout,
        }
    }

    /// Onset-frame embedding rows. A valid clip keeps every onset below
    /// `max_seq_len`; later frames saturate into the last row.
    fn onset_table_size(&self) -> usize {
        self.max_seq_len
    }

    /// Duration-frame embedding rows, indexed by the duration itself
    /// (durations are >= 1, so row 0 is never hit).
    fn duration_table_size(&self) -> usize {
        self.max_seq_len + 1
    }
}

/// Note-feature embeddings plus the transformer stack that contextualizes
/// them. Only built when `use_encoder` is set.
struct NoteEncoder<E: Real> {
    pitch: Embedding<E>,
    onset: Embedding<E>,
    duration: Embedding<E>,
    /// Row 0 is the "no velocity recorded" row; actual velocities occupy
    /// rows 1..=127 (MIDI velocity zero never denotes a sounding note).
    velocity: Embedding<E>,
    layers: Vec<TransformerLayer<E>>,
}

pub struct SynthesisModel<E: Real> {
    cfg: SynthesisModelConfig,
    note_encoder: Option<NoteEncoder<E>>,
    /// Projects stacked piano-roll + position-roll frame columns to the
    /// model width when the note encoder is disabled.
    roll_proj: Option<Linear<E>>,
    performer: Option<Embedding<E>>,
    /// The note-wise positional encoding vector. A constant zero when
    /// `use_npe` is off, which pins the mixer's position term at zero.
    npe_w: Tensor<E>,
    decoder: Vec<TransformerLayer<E>>,
    head: Linear<E>,
}

impl<E: Real> SynthesisModel<E> {
    pub fn new(rng: &mut ChaCha8Rng, cfg: &SynthesisModelConfig) -> Result<Self, SynthError> {
        cfg.validate()?;
        let layer_cfg = cfg.layer_config();
        let d = cfg.embed_dim;

        let note_encoder = if cfg.use_encoder {
            Some(NoteEncoder {
                pitch: Embedding::new(rng, 128, d),
                onset: Embedding::new(rng, cfg.onset_table_size(), d),
                duration: Embedding::new(rng, cfg.duration_table_size(), d),
                velocity: Embedding::new(rng, 128, d),
                layers: (0..cfg.encoder_layers)
                    .map(|_| TransformerLayer::new(rng, &layer_cfg))
                    .collect::<Result<_, _>>()?,
            })
        } else {
            None
        };
        let roll_proj = if cfg.use_encoder {
            None
        } else {
            Some(Linear::new(rng, 2 * NUM_PITCHES, d))
        };
        let performer = cfg
            .use_performer_embedding
            .then(|| Embedding::new(rng, cfg.num_performers, d));
        let npe_w = if cfg.use_npe && cfg.use_encoder {
            // Same small-normal init as the embeddings, so at initialization
            // the mixer is within a hair of a plain embedding sum.
            let dist = Normal::new(0.0, 1e-2).expect("valid stddev");
            Tensor::param(vec![d], (0..d).map(|_| E::from_f64(dist.sample(rng))).collect())
        } else {
            Tensor::zeros(vec![d])
        };
        Ok(SynthesisModel {
            cfg: cfg.clone(),
            note_encoder,
            roll_proj,
            performer,
            npe_w,
            decoder: (0..cfg.decoder_layers)
                .map(|_| TransformerLayer::new(rng, &layer_cfg))
                .collect::<Result<_, _>>()?,
            head: Linear::new(rng, d, cfg.mel_bands),
        })
    }

    pub fn config(&self) -> &SynthesisModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> ParamSet<E> {
        let mut params = ParamSet::new();
        if let Some(enc) = &self.note_encoder {
            enc.pitch.register(&mut params, "pitch");
            enc.onset.register(&mut params, "onset");
            enc.duration.register(&mut params, "duration");
            enc.velocity.register(&mut params, "velocity");
            for (i, layer) in enc.layers.iter().enumerate() {
                layer.register(&mut params, &format!("encoder.{i}"));
            }
        }
        if let Some(proj) = &self.roll_proj {
            proj.register(&mut params, "roll_proj");
        }
        if let Some(performer) = &self.performer {
            performer.register(&mut params, "performer");
        }
        if self.npe_w.needs_grad() {
            params.register("npe".into(), self.npe_w.clone());
        }
        for (i, layer) in self.decoder.iter().enumerate() {
            layer.register(&mut params, &format!("decoder.{i}"));
        }
        self.head.register(&mut params, "head");
        params
    }

    /// Contextual note embeddings: summed feature embeddings (+ performer,
    /// + sinusoidal position) pushed through the encoder stack.
    fn encode_notes(&self, aligned: &AlignedScore, mode: &mut Mode) -> Result<Tensor<E>, SynthError> {
        let enc = self.note_encoder.as_ref().expect("encoder path");
        let notes = aligned.notes();
        let n = notes.len();
        let d = self.cfg.embed_dim;
        if n > self.cfg.max_seq_len {
            return Err(SynthError::TooManyNotes { got: n, max: self.cfg.max_seq_len });
        }

        let mut pitch = Vec::with_capacity(n);
        let mut onset = Vec::with_capacity(n);
        let mut duration = Vec::with_capacity(n);
        let mut velocity = Vec::with_capacity(n);
        for an in notes {
            pitch.push(an.note.pitch as usize);
            onset.push(clip_index(
                an.onset_frames,
                self.cfg.onset_table_size() as u32,
                ClipPolicy::Saturate,
            )? as usize);
            duration.push(clip_index(
                an.duration_frames,
                self.cfg.duration_table_size() as u32,
                ClipPolicy::Saturate,
            )? as usize);
            velocity.push(an.note.velocity.map_or(0, usize::from));
        }

        let mut x = enc
            .pitch
            .forward(&pitch)
            .add(&enc.onset.forward(&onset))
            .add(&enc.duration.forward(&duration))
            .add(&enc.velocity.forward(&velocity));
        if let Some(performer) = &self.performer {
            x = x.add(&performer.forward(&vec![self.performer_index(aligned)?; n]));
        }
        x = x.add(&sinusoidal_pe(n, d)?);

        let mask = vec![false; n];
        for layer in &enc.layers {
            x = layer.forward(&x, &mask, mode);
        }
        Ok(x)
    }

    fn performer_index(&self, aligned: &AlignedScore) -> Result<usize, SynthError> {
        let id = aligned.performer_id;
        if (id as usize) < self.cfg.num_performers {
            Ok(id as usize)
        } else {
            Err(SynthError::UnknownPerformer { id, table: self.cfg.num_performers })
        }
    }

    /// Full differentiable forward pass: one row of `mel_bands` log-mel
    /// values per frame, `[num_frames x mel_bands]`.
    pub fn forward_frames(
        &self,
        aligned: &AlignedScore,
        mode: &mut Mode,
    ) -> Result<Tensor<E>, SynthError> {
        let t = aligned.num_frames as usize;
        let d = self.cfg.embed_dim;
        if t == 0 {
            return Err(SynthError::EmptyClip);
        }
        if t > self.cfg.max_seq_len {
            return Err(SynthError::TooManyFrames { got: t, max: self.cfg.max_seq_len });
        }

        let frames = if self.cfg.use_encoder {
            if aligned.notes().is_empty() {
                Tensor::zeros(vec![t, d])
            } else {
                let embs = self.encode_notes(aligned, mode)?;
                polyphonic_mix(&embs, &self.npe_w, aligned, t)?
            }
        } else {
            let (piano, position) = build_rolls(aligned);
            let mut cols = Vec::with_capacity(t * 2 * NUM_PITCHES);
            for frame in 0..t {
                for v in piano.column(frame).into_iter().chain(position.column(frame)) {
                    cols.push(E::from_f64(v as f64));
                }
            }
            let rolls = Tensor::constant(vec![t, 2 * NUM_PITCHES], cols);
            let mut x = self.roll_proj.as_ref().expect("roll path").forward(&rolls);
            if let Some(performer) = &self.performer {
                x = x.add(&performer.forward(&vec![self.performer_index(aligned)?; t]));
            }
            x
        };

        let mask = vec![false; t];
        let mut x = frames.add(&sinusoidal_pe(t, d)?);
        for layer in &self.decoder {
            x = layer.forward(&x, &mask, mode);
        }
        Ok(self.head.forward(&x))
    }

    /// Synthesizes a log-mel spectrogram (band-major, `mel_bands x T`).
    /// Predictions below the spectrogram clamp floor are lifted onto it,
    /// since everything quieter than the floor is the same silence.
    pub fn synthesize_mel(&self, aligned: &AlignedScore) -> Result<MelSpectrogram, SynthError> {
        let out = self.forward_frames(aligned, &mut Mode::Eval)?;
        let t = out.rows();
        let bands = self.cfg.mel_bands;
        let floor = LOG_FLOOR.ln();
        let data = out.data();
        let mut band_major = vec![0.0f32; bands * t];
        for frame in 0..t {
            for band in 0..bands {
                band_major[band * t + frame] = (data[frame * bands + band].to_f64() as f32).max(floor);
            }
        }
        let params = SpectrogramParams { mel_bands: bands, ..SpectrogramParams::default() };
        Ok(MelSpectrogram::from_data(band_major, t, params)?)
    }
}

impl SynthesisModel<f32> {
    pub fn save(&self, path: &Path) -> Result<(), SynthError> {
        let config = serde_json::to_string(&self.cfg)
            .map_err(|e| SynthError::Config(format!("cannot serialize config: {e}")))?;
        save_checkpoint(path, &config, &self.params())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let (config, entries) = load_checkpoint(path)?;
        let cfg: SynthesisModelConfig = serde_json::from_str(&config)
            .map_err(|e| SynthError::Config(format!("cannot parse checkpoint config: {e}")))?;
        // The rebuild seed is irrelevant: every parameter is overwritten.
        let model = Self::new(&mut ChaCha8Rng::seed_from_u64(0), &cfg)?;
        apply_entries(&entries, &model.params())?;
        Ok(model)
    }
}

/// Mean squared error between a predicted frame tensor (`[T x bands]`) and a
/// target log-mel spectrogram, averaged over every cell.
pub fn synthesis_loss<E: Real>(
    pred: &Tensor<E>,
    target: &MelSpectrogram,
) -> Result<Tensor<E>, SynthError> {
    let (t, bands) = (target.num_frames(), target.bands());
    if pred.shape() != [t, bands] {
        return Err(SynthError::Shape(format!(
            "synthesis_loss: prediction is {:?} but the target is [{t} x {bands}]",
            pred.shape()
        )));
    }
    let mut frame_major = Vec::with_capacity(t * bands);
    for frame in 0..t {
        for band in 0..bands {
            frame_major.push(E::from_f64(target.value(band, frame) as f64));
        }
    }
    Ok(pred.mse(&Tensor::constant(vec![t, bands], frame_major)))
}
