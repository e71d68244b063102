//! Oracle and gradient checks for the synthesis model.
//!
//! The mixer is compared against a brute-force oracle that materializes
//! every (note, frame, position) triple independently, and the full model's
//! backward pass is compared against central finite differences in double
//! precision.

use espressivo_dsp::{MelSpectrogram, SpectrogramParams};
use espressivo_nn::{grad_check, Mode, Tensor};
use espressivo_score::{AlignedNote, AlignedScore, Note};
use espressivo_synth::{polyphonic_mix, synthesis_loss, SynthesisModel, SynthesisModelConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn an(pitch: u8, onset: u32, dur: u32) -> AlignedNote {
    AlignedNote { note: Note::new(pitch, 0, 1), onset_frames: onset, duration_frames: dur }
}

fn clip(notes: Vec<AlignedNote>, num_frames: u32) -> AlignedScore {
    AlignedScore::new(notes, num_frames, 1).unwrap()
}

/// Independent mixer: accumulate every (note, frame) contribution in input
/// order, straight from the defining formula.
fn brute_force_mix(rows: &[Vec<f64>], notes: &[AlignedNote], w: &[f64], t: usize) -> Vec<f64> {
    let d = w.len();
    let mut out = vec![0.0f64; t * d];
    for (row, note) in rows.iter().zip(notes) {
        for k in 0..note.duration_frames {
            let p = if note.duration_frames <= 1 {
                0.0
            } else {
                f64::from(k) / f64::from(note.duration_frames - 1)
            };
            let frame = (note.onset_frames + k) as usize;
            for j in 0..d {
                out[frame * d + j] += (1.0 + p * w[j]) * row[j];
            }
        }
    }
    out
}

fn random_clip(rng: &mut ChaCha8Rng, max_notes: usize, max_frames: u32) -> AlignedScore {
    let t = rng.gen_range(1..=max_frames);
    let n = rng.gen_range(1..=max_notes);
    let notes = (0..n)
        .map(|_| {
            let onset = rng.gen_range(0..t);
            let dur = rng.gen_range(1..=(t - onset).min(12));
            an(rng.gen_range(21..109), onset, dur)
        })
        .collect();
    clip(notes, t)
}

#[test]
fn mixer_matches_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let d = 16;
    for case in 0..50 {
        let score = random_clip(&mut rng, 32, 256);
        let n = score.notes().len();
        let t = score.num_frames as usize;
        let rows: Vec<Vec<f64>> =
            (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect();

        let embs = Tensor::param(vec![n, d], rows.concat());
        let wt = Tensor::param(vec![d], w.clone());
        let mixed = polyphonic_mix(&embs, &wt, &score, t).unwrap().to_vec();
        let oracle = brute_force_mix(&rows, score.notes(), &w, t);

        let max_dev = mixed
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_dev < 1e-6, "case {case}: deviation {max_dev}");
    }
}

#[test]
fn mixer_gradients_match_finite_differences() {
    let score = clip(vec![an(60, 0, 5), an(64, 2, 4), an(67, 7, 1)], 8);
    let embs = Tensor::<f64>::param(vec![3, 4], vec![
        0.3, -1.1, 0.7, 0.2, //
        -0.5, 0.9, -0.4, 1.3, //
        0.8, 0.1, -0.9, -0.2,
    ]);
    let w = Tensor::param(vec![4], vec![0.4, -0.3, 0.15, 0.05]);
    let target = Tensor::constant(vec![8, 4], (0..32).map(|i| (i as f64 * 0.37).sin()).collect());

    let mut params = espressivo_nn::ParamSet::new();
    params.register("embs".into(), embs.clone());
    params.register("w".into(), w.clone());
    let err = grad_check(
        || polyphonic_mix(&embs, &w, &score, 8).unwrap().mse(&target),
        &params,
        1e-6,
        64,
    )
    .unwrap();
    assert!(err < 1e-8, "mixer op relative error {err}");
}

#[test]
fn full_model_gradient_matches_finite_differences() {
    // Double precision, three notes, eight frames, every parameter group
    // sampled — the note-wise positional encoding included. The target mel
    // sits near the untrained output scale so the objective stays O(1);
    // finite differences on a large objective would drown the small
    // per-coordinate gradients in cancellation noise. The step is 1e-4
    // rather than 1e-5 for the same reason: query/key projections carry
    // gradients down near 1e-8, and a smaller step leaves the difference
    // quotient dominated by rounding on exactly those coordinates.
    let cfg = SynthesisModelConfig { dropout: 0.0, ..SynthesisModelConfig::default() };
    let model = SynthesisModel::<f64>::new(&mut ChaCha8Rng::seed_from_u64(11), &cfg).unwrap();
    let score = clip(vec![an(60, 0, 5), an(64, 2, 6), an(67, 4, 3)], 8);

    let params = SpectrogramParams::default();
    let mel = MelSpectrogram::from_data(
        (0..80 * 8).map(|i| 0.2 * ((i as f32) * 0.11).sin()).collect(),
        8,
        params,
    )
    .unwrap();

    let err = grad_check(
        || {
            let pred = model.forward_frames(&score, &mut Mode::Eval).unwrap();
            synthesis_loss(&pred, &mel).unwrap()
        },
        &model.params(),
        1e-4,
        4,
    )
    .unwrap();
    assert!(err < 1e-4, "full synthesis model relative error {err}");
}

#[test]
fn roll_projection_model_gradient_matches_finite_differences() {
    let cfg = SynthesisModelConfig {
        use_encoder: false,
        decoder_layers: 2,
        mha_hidden: 16,
        ffn_hidden: 32,
        embed_dim: 16,
        mel_bands: 6,
        dropout: 0.0,
        ..SynthesisModelConfig::default()
    };
    let model = SynthesisModel::<f64>::new(&mut ChaCha8Rng::seed_from_u64(3), &cfg).unwrap();
    let score = clip(vec![an(60, 0, 4), an(72, 1, 5)], 6);

    let params = SpectrogramParams { mel_bands: 6, ..SpectrogramParams::default() };
    let mel = MelSpectrogram::from_data(
        (0..36).map(|i| 0.3 * ((i as f32) * 0.23).cos()).collect(),
        6,
        params,
    )
    .unwrap();

    let err = grad_check(
        || {
            let pred = model.forward_frames(&score, &mut Mode::Eval).unwrap();
            synthesis_loss(&pred, &mel).unwrap()
        },
        &model.params(),
        1e-4,
        8,
    )
    .unwrap();
    assert!(err < 1e-4, "roll-projection model relative error {err}");
}

/// Strategy: a clip of up to 8 notes on a 24-frame grid, plus one embedding
/// row per note.
fn arb_notes_and_rows() -> impl Strategy<Value = (Vec<AlignedNote>, Vec<Vec<f32>>)> {
    let note = (21u8..100, 0u32..20, 1u32..6).prop_map(|(pitch, onset, dur)| {
        an(pitch, onset, dur.min(24 - onset))
    });
    proptest::collection::vec((note, proptest::collection::vec(-2.0f32..2.0, 6)), 1..8)
        .prop_map(|pairs| pairs.into_iter().unzip())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn note_order_never_changes_the_mix((notes, rows) in arb_notes_and_rows(), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Tensor::<f32>::param(vec![6], (0..6).map(|_| rng.gen_range(-0.5..0.5)).collect());

        let mix_for = |perm: &[usize]| {
            let flat: Vec<f32> = perm.iter().flat_map(|&i| rows[i].clone()).collect();
            let embs = Tensor::param(vec![perm.len(), 6], flat);
            let score = clip(perm.iter().map(|&i| notes[i]).collect(), 24);
            polyphonic_mix(&embs, &w, &score, 24).unwrap().to_vec()
        };

        let n = notes.len();
        let identity: Vec<usize> = (0..n).collect();
        let mut shuffled = identity.clone();
        for i in (1..n).rev() {
            shuffled.swap(i, rng.gen_range(0..=i));
        }

        let a = mix_for(&identity);
        let b = mix_for(&shuffled);
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn span_disjoint_scores_mix_additively((notes_a, rows_a) in arb_notes_and_rows(),
                                           (notes_b, rows_b) in arb_notes_and_rows()) {
        // Shift the second score past the first so no frame is shared; the
        // union must then mix to exactly the sum of the parts, because each
        // frame's other side is an exact zero.
        let split = 24u32;
        let notes_b: Vec<AlignedNote> =
            notes_b.iter().map(|a| an(a.note.pitch, a.onset_frames + split, a.duration_frames)).collect();
        let t = 48usize;
        let w = Tensor::<f32>::param(vec![6], vec![0.31, -0.17, 0.05, 0.44, -0.29, 0.12]);

        let mix = |notes: Vec<AlignedNote>, rows: Vec<f32>| {
            let n = notes.len();
            polyphonic_mix(&Tensor::param(vec![n, 6], rows), &w, &clip(notes, t as u32), t)
                .unwrap()
                .to_vec()
        };

        let whole = mix(
            notes_a.iter().chain(&notes_b).copied().collect(),
            rows_a.concat().into_iter().chain(rows_b.concat()).collect(),
        );
        let a = mix(notes_a, rows_a.concat());
        let b = mix(notes_b, rows_b.concat());
        for (i, (x, y)) in a.iter().zip(&b).enumerate() {
            prop_assert_eq!(whole[i].to_bits(), (x + y).to_bits());
        }
    }

    #[test]
    fn overlapping_disjoint_note_sets_add_within_float_accumulation(
        (notes, rows) in arb_notes_and_rows(), mask in proptest::collection::vec(any::<bool>(), 8)) {
        // Splitting a score into two arbitrary (frame-overlapping) halves
        // re-rounds each frame's sum, so equality holds to accumulation
        // precision rather than bit-exactly.
        let n = notes.len();
        let t = 24usize;
        let w = Tensor::<f32>::param(vec![6], vec![0.2, -0.4, 0.1, 0.3, -0.1, 0.25]);

        let subset = |keep: bool| -> (Vec<AlignedNote>, Vec<f32>) {
            let idx: Vec<usize> = (0..n).filter(|&i| mask[i] == keep).collect();
            (idx.iter().map(|&i| notes[i]).collect(),
             idx.iter().flat_map(|&i| rows[i].clone()).collect())
        };
        let (na, ra) = subset(true);
        let (nb, rb) = subset(false);

        let mix = |notes: Vec<AlignedNote>, rows: Vec<f32>| {
            let k = notes.len();
            if k == 0 {
                return vec![0.0f32; t * 6];
            }
            polyphonic_mix(&Tensor::param(vec![k, 6], rows), &w, &clip(notes, t as u32), t)
                .unwrap()
                .to_vec()
        };

        let whole = mix(notes.clone(), rows.concat());
        let a = mix(na, ra);
        let b = mix(nb, rb);
        for (i, (x, y)) in a.iter().zip(&b).enumerate() {
            prop_assert!((whole[i] - (x + y)).abs() < 1e-4);
        }
    }
}
