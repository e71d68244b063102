use std::path::Path;

use espressivo_nn::{
    apply_entries, load_checkpoint, save_checkpoint, sinusoidal_pe, Embedding, Linear, Mode,
    ParamSet, Real, Tensor, TransformerLayer, TransformerLayerConfig,
};
use espressivo_score::{naive_align, AlignedNote, AlignedScore, Score};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::extract_features;
use crate::{AlignmentModelConfig, TimingError};

/// The alignment model: summed note-feature embeddings conditioned on
/// tempo and performer, a sinusoidal-PE transformer encoder, and a linear
/// head regressing (onset, duration) per note in frame units.
pub struct AlignmentModel<E: Real> {
    cfg: AlignmentModelConfig,
    pitch: Embedding<E>,
    onset: Embedding<E>,
    duration: Embedding<E>,
    velocity: Embedding<E>,
    performer: Embedding<E>,
    tempo_proj: Linear<E>,
    encoder: Vec<TransformerLayer<E>>,
    head: Linear<E>,
}

impl<E: Real> AlignmentModel<E> {
    pub fn new(rng: &mut ChaCha8Rng, cfg: &AlignmentModelConfig) -> Result<Self, TimingError> {
        cfg.validate()?;
        let layer_cfg = TransformerLayerConfig {
            model_dim: cfg.embed_dim,
            mha_hidden: cfg.mha_hidden,
            num_heads: cfg.num_heads,
            ffn_hidden: cfg.ffn_hidden,
            ffn_kernel_sizes: (9, 1),
            dropout: cfg.dropout,
        };
        let d = cfg.embed_dim;
        Ok(AlignmentModel {
            cfg: cfg.clone(),
            pitch: Embedding::new(rng, 128, d),
            onset: Embedding::new(rng, cfg.onset_table_size() as usize, d),
            duration: Embedding::new(rng, cfg.duration_table_size() as usize, d),
            velocity: Embedding::new(rng, 128, d),
            performer: Embedding::new(rng, cfg.num_performers, d),
            tempo_proj: Linear::new(rng, 1, d),
            encoder: (0..cfg.encoder_layers)
                .map(|_| TransformerLayer::new(rng, &layer_cfg))
                .collect::<Result<_, _>>()?,
            head: Linear::new(rng, d, 2),
        })
    }

    pub fn config(&self) -> &AlignmentModelConfig {
        &self.cfg
    }

    /// All trainable tensors, in a fixed registration order. The returned
    /// set shares storage with the model.
    pub fn params(&self) -> ParamSet<E> {
        let mut p = ParamSet::new();
        self.pitch.register(&mut p, "pitch");
        self.onset.register(&mut p, "onset");
        self.duration.register(&mut p, "duration");
        self.velocity.register(&mut p, "velocity");
        self.performer.register(&mut p, "performer");
        self.tempo_proj.register(&mut p, "tempo");
        for (i, layer) in self.encoder.iter().enumerate() {
            layer.register(&mut p, &format!("encoder.{i}"));
        }
        self.head.register(&mut p, "head");
        p
    }

    /// Encodes a score's notes to `N x embed_dim`, with every position
    /// attending to every other.
    pub fn encode_notes(&self, score: &Score, mode: &mut Mode) -> Result<Tensor<E>, TimingError> {
        self.encode_notes_masked(score, &vec![false; score.notes().len()], mode)
    }

    /// As [`Self::encode_notes`], but with trailing filler notes marked in
    /// `padded` excluded from attention and zeroed between sub-layers, so
    /// their content can never reach the real positions. Useful when
    /// fixed-length batching is imposed from outside.
    pub fn encode_notes_masked(
        &self,
        score: &Score,
        padded: &[bool],
        mode: &mut Mode,
    ) -> Result<Tensor<E>, TimingError> {
        let n = score.notes().len();
        if n > self.cfg.max_seq_len {
            return Err(TimingError::TooManyNotes { got: n, max: self.cfg.max_seq_len });
        }
        assert_eq!(padded.len(), n, "padding mask length");
        let d = self.cfg.embed_dim;
        if n == 0 {
            return Ok(Tensor::constant(vec![0, d], Vec::new()));
        }
        let f = extract_features(score, &self.cfg)?;

        // Per-note features sum; sequence-level conditioning broadcasts.
        let mut x = self
            .pitch
            .forward(&f.pitch)
            .add(&self.onset.forward(&f.onset))
            .add(&self.duration.forward(&f.duration))
            .add(&self.velocity.forward(&f.velocity));
        x = x.add(&self.performer.forward(&vec![f.performer; n]));
        let tempo_in = Tensor::constant(vec![1, 1], vec![E::from_f64(f.tempo)]);
        let tempo_row = self.tempo_proj.forward(&tempo_in);
        let ones = Tensor::constant(vec![n, 1], vec![E::ONE; n]);
        x = x.add(&ones.matmul(&tempo_row));
        x = x.add(&sinusoidal_pe(n, d)?);

        let mut h = x;
        for layer in &self.encoder {
            h = layer.forward(&h, padded, mode);
        }
        Ok(h)
    }

    /// Raw (unrounded) per-note predictions, `N x 2` as (onset, duration)
    /// in frames. This is what the loss is computed on.
    pub fn forward_raw(&self, score: &Score, mode: &mut Mode) -> Result<Tensor<E>, TimingError> {
        let h = self.encode_notes(score, mode)?;
        let out = self.head.forward(&h);
        if !self.cfg.predict_residual {
            return Ok(out);
        }
        let baseline = naive_align(score);
        let base: Vec<E> = baseline
            .notes()
            .iter()
            .flat_map(|an| {
                [E::from_f64(an.onset_frames as f64), E::from_f64(an.duration_frames as f64)]
            })
            .collect();
        Ok(out.add(&Tensor::constant(vec![score.notes().len(), 2], base)))
    }

    /// Rounds and clamps the raw regressions into a valid alignment:
    /// onsets at least 0, durations at least 1 frame.
    pub fn predict_alignment(&self, score: &Score) -> Result<AlignedScore, TimingError> {
        if score.notes().is_empty() {
            return Ok(AlignedScore::new(Vec::new(), 0, score.performer_id)?);
        }
        let raw = self.forward_raw(score, &mut Mode::Eval)?;
        let values = raw.to_vec();
        let mut num_frames = 0u32;
        let aligned: Vec<AlignedNote> = score
            .notes()
            .iter()
            .enumerate()
            .map(|(i, &note)| {
                let onset_frames = values[2 * i].to_f64().round().max(0.0) as u32;
                let duration_frames = values[2 * i + 1].to_f64().round().max(1.0) as u32;
                num_frames = num_frames.max(onset_frames + duration_frames);
                AlignedNote { note, onset_frames, duration_frames }
            })
            .collect();
        Ok(AlignedScore::new(aligned, num_frames, score.performer_id)?)
    }
}

impl AlignmentModel<f32> {
    /// Saves parameters with the config echoed as JSON.
    pub fn save(&self, path: &Path) -> Result<(), TimingError> {
        let config = serde_json::to_string(&self.cfg)
            .map_err(|e| TimingError::Config(format!("serializing config: {e}")))?;
        save_checkpoint(path, &config, &self.params())?;
        Ok(())
    }

    /// Restores a model from a checkpoint written by [`Self::save`].
    pub fn load(path: &Path) -> Result<Self, TimingError> {
        let (config, entries) = load_checkpoint(path)?;
        let cfg: AlignmentModelConfig = serde_json::from_str(&config)
            .map_err(|e| TimingError::Config(format!("parsing checkpoint config: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(0); // init is overwritten below
        let model = AlignmentModel::new(&mut rng, &cfg)?;
        apply_entries(&entries, &model.params())?;
        Ok(model)
    }
}

/// MSE between raw predictions and a frame alignment: the mean over all
/// `2N` onset/duration values of the squared error.
pub fn alignment_loss<E: Real>(
    pred: &Tensor<E>,
    target: &AlignedScore,
) -> Result<Tensor<E>, TimingError> {
    let pairs: Vec<(f64, f64)> = target
        .notes()
        .iter()
        .map(|an| (an.onset_frames as f64, an.duration_frames as f64))
        .collect();
    alignment_loss_pairs(pred, &pairs)
}

/// [`alignment_loss`] against raw (onset, duration) pairs, for targets
/// that need not satisfy the alignment invariants.
pub fn alignment_loss_pairs<E: Real>(
    pred: &Tensor<E>,
    target: &[(f64, f64)],
) -> Result<Tensor<E>, TimingError> {
    if pred.rows() != target.len() || pred.cols() != 2 {
        return Err(TimingError::LengthMismatch { pred: pred.rows(), target: target.len() });
    }
    let flat: Vec<E> = target
        .iter()
        .flat_map(|&(on, dur)| [E::from_f64(on), E::from_f64(dur)])
        .collect();
    Ok(pred.mse(&Tensor::constant(vec![target.len(), 2], flat)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use espressivo_score::Note;

    fn small_cfg() -> AlignmentModelConfig {
        AlignmentModelConfig {
            embed_dim: 16,
            mha_hidden: 8,
            ffn_hidden: 16,
            num_performers: 4,
            dropout: 0.0,
            ..Default::default()
        }
    }

    fn sample_score() -> Score {
        Score::new(
            vec![
                Note::with_velocity(60, 0, 24, 80),
                Note::new(64, 24, 24),
                Note::new(67, 48, 48),
                Note::new(72, 96, 24),
            ],
            120.0,
            1,
        )
        .unwrap()
    }

    #[test]
    fn encoding_has_one_row_per_note() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = AlignmentModel::<f32>::new(&mut rng, &small_cfg()).unwrap();
        for n in [1usize, 2, 5, 9] {
            let notes = (0..n).map(|i| Note::new(60, i as u32 * 24, 24)).collect();
            let score = Score::new(notes, 100.0, 0).unwrap();
            let enc = model.encode_notes(&score, &mut Mode::Eval).unwrap();
            assert_eq!(enc.shape(), &[n, 16]);
        }
    }

    #[test]
    fn performer_identity_reaches_the_encoding() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = AlignmentModel::<f32>::new(&mut rng, &small_cfg()).unwrap();
        let notes = vec![Note::new(60, 0, 24), Note::new(62, 24, 24)];
        let a = Score::new(notes.clone(), 120.0, 0).unwrap();
        let b = Score::new(notes, 120.0, 1).unwrap();
        let ea = model.encode_notes(&a, &mut Mode::Eval).unwrap().to_vec();
        let eb = model.encode_notes(&b, &mut Mode::Eval).unwrap().to_vec();
        assert_ne!(ea, eb);
    }

    #[test]
    fn one_prediction_per_note_and_valid_alignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = AlignmentModel::<f32>::new(&mut rng, &small_cfg()).unwrap();
        let score = sample_score();
        let aligned = model.predict_alignment(&score).unwrap();
        assert_eq!(aligned.notes().len(), score.notes().len());
        assert_eq!(aligned.performer_id, score.performer_id);
        // AlignedScore::new re-validated spans and positive durations.
        let max_end = aligned.notes().iter().map(|an| an.end_frames()).max().unwrap();
        assert_eq!(aligned.num_frames, max_end);
    }

    #[test]
    fn zeroed_parameters_predict_onset_zero_duration_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = AlignmentModel::<f32>::new(&mut rng, &small_cfg()).unwrap();
        let params = model.params();
        for (_, t) in params.iter() {
            t.set_data(&vec![0.0; t.len()]);
        }
        let aligned = model.predict_alignment(&sample_score()).unwrap();
        for an in aligned.notes() {
            assert_eq!((an.onset_frames, an.duration_frames), (0, 1));
        }
        assert_eq!(aligned.num_frames, 1);
    }

    #[test]
    fn residual_mode_with_zero_head_reproduces_constant_tempo() {
        let cfg = AlignmentModelConfig { predict_residual: true, ..small_cfg() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = AlignmentModel::<f32>::new(&mut rng, &cfg).unwrap();
        let params = model.params();
        for (name, t) in params.iter() {
            if name.starts_with("head") {
                t.set_data(&vec![0.0; t.len()]);
            }
        }
        let score = sample_score();
        assert_eq!(model.predict_alignment(&score).unwrap(), naive_align(&score));
    }

    #[test]
    fn loss_is_zero_iff_exact_and_matches_hand_value() {
        let pred = Tensor::<f64>::constant(vec![2, 2], vec![3.0, 5.0, 8.0, 2.0]);
        let zero = alignment_loss_pairs(&pred, &[(3.0, 5.0), (8.0, 2.0)]).unwrap();
        assert_eq!(zero.item(), 0.0);

        let pred = Tensor::<f64>::constant(vec![1, 2], vec![1.0, 2.0]);
        let loss = alignment_loss_pairs(&pred, &[(0.0, 0.0)]).unwrap();
        assert!((loss.item() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn loss_is_invariant_to_consistent_reordering() {
        let pred_a = Tensor::<f64>::constant(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let pred_b = Tensor::<f64>::constant(vec![3, 2], vec![5.0, 6.0, 1.0, 2.0, 3.0, 4.0]);
        let ta = [(0.0, 1.0), (2.0, 3.0), (4.0, 5.0)];
        let tb = [(4.0, 5.0), (0.0, 1.0), (2.0, 3.0)];
        let la = alignment_loss_pairs(&pred_a, &ta).unwrap().item();
        let lb = alignment_loss_pairs(&pred_b, &tb).unwrap().item();
        assert!((la - lb).abs() < 1e-12);
    }

    #[test]
    fn loss_rejects_mismatched_lengths() {
        let pred = Tensor::<f64>::constant(vec![2, 2], vec![0.0; 4]);
        assert!(matches!(
            alignment_loss_pairs(&pred, &[(0.0, 1.0)]),
            Err(TimingError::LengthMismatch { pred: 2, target: 1 })
        ));
    }

    #[test]
    fn oversized_scores_are_rejected_with_guidance() {
        let cfg = AlignmentModelConfig { max_seq_len: 3, ..small_cfg() };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = AlignmentModel::<f32>::new(&mut rng, &cfg).unwrap();
        let err = model.predict_alignment(&sample_score()).unwrap_err();
        assert!(matches!(err, TimingError::TooManyNotes { got: 4, max: 3 }));
        assert!(err.to_string().contains("split the score into segments"));
    }

    #[test]
    fn empty_score_encodes_and_predicts_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = AlignmentModel::<f32>::new(&mut rng, &small_cfg()).unwrap();
        let score = Score::new(Vec::new(), 90.0, 0).unwrap();
        assert_eq!(model.encode_notes(&score, &mut Mode::Eval).unwrap().shape(), &[0, 16]);
        let aligned = model.predict_alignment(&score).unwrap();
        assert!(aligned.is_empty());
        assert_eq!(aligned.num_frames, 0);
    }

    #[test]
    fn checkpoint_round_trip_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("alignment.ckpt");
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = AlignmentModel::<f32>::new(&mut rng, &small_cfg()).unwrap();
        model.save(&path).unwrap();

        let restored = AlignmentModel::<f32>::load(&path).unwrap();
        assert_eq!(restored.config(), model.config());
        let score = sample_score();
        assert_eq!(
            restored.forward_raw(&score, &mut Mode::Eval).unwrap().to_vec(),
            model.forward_raw(&score, &mut Mode::Eval).unwrap().to_vec()
        );
    }
}
