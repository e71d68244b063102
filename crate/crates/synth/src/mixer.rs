//! Note-wise positional encoding and the polyphonic mixer.
//!
//! The mixer is the bridge between the note axis and the frame axis: every
//! note contributes its (position-modulated) embedding to each frame it
//! sounds in, and concurrent contributions add. Frames no note covers stay
//! exactly zero, so rests are silence by construction rather than by
//! training.

use espressivo_nn::{Real, Tensor};
use espressivo_score::AlignedScore;

use crate::SynthError;

/// Where frame `t_in_note` falls within a note that lasts `duration` frames,
/// as a fraction in [0, 1]. A single-frame note has no extent, so its one
/// frame sits at position 0.
pub(crate) fn note_position(t_in_note: u32, duration: u32) -> f64 {
    if duration <= 1 {
        0.0
    } else {
        f64::from(t_in_note) / f64::from(duration - 1)
    }
}

/// Scales a note embedding by its note-relative position: `(1 + p*w) ⊙ v`.
///
/// `p = 0` and `w = 0` both return `v` unchanged — bit for bit, because
/// `1 + p*w` is then exactly 1 — so an untrained or disabled encoding cannot
/// perturb the embedding it wraps.
pub fn npe_modulate<E: Real>(v: &[E], p: f64, w: &[E]) -> Result<Vec<E>, SynthError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(SynthError::PositionOutOfRange(p));
    }
    if v.len() != w.len() {
        return Err(SynthError::Shape(format!(
            "npe_modulate: embedding has {} coordinates but the encoding has {}",
            v.len(),
            w.len()
        )));
    }
    let p = E::from_f64(p);
    Ok(v.iter().zip(w).map(|(&vj, &wj)| (E::ONE + p * wj) * vj).collect())
}

/// Expands note embeddings onto the frame grid.
///
/// Row `i` of `note_embs` belongs to `aligned.notes()[i]`. Each note adds
/// `(1 + p*w) ⊙ v` to every frame of its span, where `p` runs 0→1 across the
/// span; overlapping notes sum and uncovered frames remain exactly zero.
/// Notes are accumulated in a canonical order — by onset, duration, pitch,
/// velocity, and finally the embedding values themselves — so the result is
/// bit-identical no matter how the caller ordered the notes, and mixing two
/// scores with disjoint frame spans adds exactly.
///
/// Differentiable in both `note_embs` and `w`; pass a constant zero `w` to
/// pin the position term at zero (each frame then receives the plain
/// embedding sum).
pub fn polyphonic_mix<E: Real>(
    note_embs: &Tensor<E>,
    w: &Tensor<E>,
    aligned: &AlignedScore,
    num_frames: usize,
) -> Result<Tensor<E>, SynthError> {
    let notes = aligned.notes();
    let n = notes.len();
    let dim = if note_embs.shape().len() == 2 { note_embs.shape()[1] } else { 0 };
    if note_embs.shape() != [n, dim] || dim == 0 {
        return Err(SynthError::Shape(format!(
            "polyphonic_mix: embeddings are {:?}, expected [{} x dim] with dim > 0",
            note_embs.shape(),
            n
        )));
    }
    if w.shape() != [dim] {
        return Err(SynthError::Shape(format!(
            "polyphonic_mix: position encoding is {:?}, expected [{dim}]",
            w.shape()
        )));
    }
    for (index, an) in notes.iter().enumerate() {
        if an.end_frames() as usize > num_frames {
            return Err(SynthError::SpanBeyondFrames {
                index,
                end: an.end_frames(),
                frames: num_frames,
            });
        }
    }

    let mut out = vec![E::ZERO; num_frames * dim];
    {
        let vdata = note_embs.data();
        let wdata = w.data();

        // Canonical accumulation order. Floating-point addition rounds, so
        // the only way reordered inputs can mix to bit-identical frames is
        // to ignore the caller's order entirely. Ties on every note field
        // fall back to comparing the embedding rows, which makes the order
        // a function of the (note, embedding) multiset alone.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let (na, nb) = (&notes[a], &notes[b]);
            let row = |i: usize| &vdata[i * dim..(i + 1) * dim];
            let bits = |r: &[E]| r.iter().map(|x| x.to_f64().to_bits()).collect::<Vec<_>>();
            (na.onset_frames, na.duration_frames, na.note.pitch, na.note.velocity)
                .cmp(&(nb.onset_frames, nb.duration_frames, nb.note.pitch, nb.note.velocity))
                .then_with(|| bits(row(a)).cmp(&bits(row(b))))
        });

        for &i in &order {
            let an = &notes[i];
            let onset = an.onset_frames as usize;
            let row = &vdata[i * dim..(i + 1) * dim];
            for k in 0..an.duration_frames {
                let p = E::from_f64(note_position(k, an.duration_frames));
                let frame = &mut out[(onset + k as usize) * dim..][..dim];
                for j in 0..dim {
                    frame[j] = frame[j] + (E::ONE + p * wdata[j]) * row[j];
                }
            }
        }
    }

    let spans: Vec<(u32, u32)> =
        notes.iter().map(|an| (an.onset_frames, an.duration_frames)).collect();
    Ok(Tensor::from_op(
        vec![num_frames, dim],
        out,
        vec![note_embs.clone(), w.clone()],
        move |grad, _out, parents| {
            let embs = &parents[0];
            let w = &parents[1];
            if embs.needs_grad() {
                let wdata = w.data();
                let mut dv = embs.grad_mut();
                for (i, &(onset, dur)) in spans.iter().enumerate() {
                    for k in 0..dur {
                        let p = E::from_f64(note_position(k, dur));
                        let g = &grad[(onset as usize + k as usize) * dim..][..dim];
                        for j in 0..dim {
                            dv[i * dim + j] = dv[i * dim + j] + (E::ONE + p * wdata[j]) * g[j];
                        }
                    }
                }
            }
            if w.needs_grad() {
                let vdata = embs.data();
                let mut dw = w.grad_mut();
                for (i, &(onset, dur)) in spans.iter().enumerate() {
                    for k in 0..dur {
                        let p = E::from_f64(note_position(k, dur));
                        let g = &grad[(onset as usize + k as usize) * dim..][..dim];
                        for j in 0..dim {
                            dw[j] = dw[j] + p * vdata[i * dim + j] * g[j];
                        }
                    }
                }
            }
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use espressivo_score::{AlignedNote, Note};

    fn aligned(notes: Vec<AlignedNote>, num_frames: u32) -> AlignedScore {
        AlignedScore::new(notes, num_frames, 0).unwrap()
    }

    fn an(pitch: u8, onset: u32, dur: u32) -> AlignedNote {
        AlignedNote { note: Note::new(pitch, 0, 1), onset_frames: onset, duration_frames: dur }
    }

    #[test]
    fn zero_position_returns_embedding_bitwise() {
        let v = [2.0f32, -0.0, 1e-30, -7.25];
        let w = [0.5f32, -0.25, 3.0, -1.0];
        let out = npe_modulate(&v, 0.0, &w).unwrap();
        for (a, b) in out.iter().zip(&v) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn zero_encoding_returns_embedding_bitwise() {
        let v = [2.0f64, -4.5, 0.125];
        let out = npe_modulate(&v, 0.7, &[0.0; 3]).unwrap();
        for (a, b) in out.iter().zip(&v) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn worked_modulation_example() {
        let out = npe_modulate(&[2.0f64, 4.0], 0.5, &[0.5, -0.25]).unwrap();
        assert_eq!(out, vec![2.5, 3.5]);
    }

    #[test]
    fn position_outside_unit_interval_is_rejected() {
        for p in [-0.1, 1.5, f64::NAN] {
            assert!(matches!(
                npe_modulate(&[1.0f64], p, &[1.0]),
                Err(SynthError::PositionOutOfRange(_))
            ));
        }
        assert!(npe_modulate(&[1.0f64], 1.0, &[1.0]).is_ok());
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        assert!(matches!(npe_modulate(&[1.0f64, 2.0], 0.5, &[1.0]), Err(SynthError::Shape(_))));
    }

    #[test]
    fn single_frame_note_lands_unmodulated() {
        let embs = Tensor::<f64>::param(vec![1, 3], vec![0.2, -1.5, 3.0]);
        let w = Tensor::param(vec![3], vec![0.9, -0.4, 0.1]);
        let out = polyphonic_mix(&embs, &w, &aligned(vec![an(60, 2, 1)], 5), 5).unwrap();
        let d = out.to_vec();
        assert_eq!(&d[2 * 3..3 * 3], &[0.2, -1.5, 3.0]);
        for t in [0usize, 1, 3, 4] {
            assert!(d[t * 3..(t + 1) * 3].iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn sustained_note_sweeps_position_zero_to_one() {
        let embs = Tensor::<f64>::param(vec![1, 2], vec![2.0, 4.0]);
        let w = Tensor::param(vec![2], vec![0.5, -0.25]);
        let out = polyphonic_mix(&embs, &w, &aligned(vec![an(60, 0, 3)], 3), 3).unwrap();
        let d = out.to_vec();
        assert_eq!(&d[0..2], &[2.0, 4.0]); // p = 0
        assert_eq!(&d[2..4], &[2.5, 3.5]); // p = 1/2, the worked example
        assert_eq!(&d[4..6], &[3.0, 3.0]); // p = 1
    }

    #[test]
    fn overlapping_notes_sum() {
        let embs = Tensor::<f64>::param(vec![2, 2], vec![1.0, 2.0, 10.0, 20.0]);
        let w = Tensor::zeros(vec![2]);
        let out =
            polyphonic_mix(&embs, &w, &aligned(vec![an(60, 0, 2), an(64, 1, 2)], 3), 3).unwrap();
        assert_eq!(out.to_vec(), vec![1.0, 2.0, 11.0, 22.0, 10.0, 20.0]);
    }

    #[test]
    fn span_past_the_grid_is_rejected() {
        let embs = Tensor::<f64>::param(vec![1, 2], vec![1.0, 1.0]);
        let w = Tensor::zeros(vec![2]);
        let score = aligned(vec![an(60, 3, 4)], 7);
        assert!(polyphonic_mix(&embs, &w, &score, 7).is_ok());
        assert!(matches!(
            polyphonic_mix(&embs, &w, &score, 6),
            Err(SynthError::SpanBeyondFrames { index: 0, end: 7, frames: 6 })
        ));
    }

    #[test]
    fn reordered_notes_mix_bit_identically() {
        // Three overlapping notes, two of them identical in every field so
        // the tie-break has to fall through to the embedding values.
        let notes = vec![an(60, 0, 4), an(60, 0, 4), an(64, 1, 3)];
        let rows: Vec<Vec<f32>> = vec![
            vec![0.3, -1.7, 0.013],
            vec![-2.4, 0.9, 1.1],
            vec![5.0e-3, 7.7, -0.2],
        ];
        let w = Tensor::<f32>::param(vec![3], vec![0.21, -0.83, 0.47]);

        let mix_for = |perm: &[usize]| {
            let flat: Vec<f32> = perm.iter().flat_map(|&i| rows[i].clone()).collect();
            let embs = Tensor::param(vec![3, 3], flat);
            let score = aligned(perm.iter().map(|&i| notes[i].clone()).collect(), 4);
            polyphonic_mix(&embs, &w, &score, 4).unwrap().to_vec()
        };

        let base = mix_for(&[0, 1, 2]);
        for perm in [[0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
            let other = mix_for(&perm);
            for (a, b) in base.iter().zip(&other) {
                assert_eq!(a.to_bits(), b.to_bits(), "perm {perm:?}");
            }
        }
    }

    #[test]
    fn disjoint_spans_add_bit_exactly() {
        // A occupies frames 0..5, B occupies 5..9. Their union must mix to
        // exactly mix(A) + mix(B): every frame belongs to at most one side,
        // and adding the other side's exact zero changes nothing.
        let a_notes = vec![an(60, 0, 4), an(64, 1, 4), an(67, 0, 2)];
        let b_notes = vec![an(72, 5, 3), an(76, 6, 3)];
        let a_rows = vec![0.7f32, -0.3, 1.9, 0.04, -5.5, 2.2];
        let b_rows = vec![3.3f32, 0.6, -0.9, 1.25];
        let w = Tensor::<f32>::param(vec![2], vec![0.13, -0.29]);

        let mix =
            |notes: Vec<AlignedNote>, rows: Vec<f32>| {
                let n = notes.len();
                polyphonic_mix(&Tensor::param(vec![n, 2], rows), &w, &aligned(notes, 9), 9)
                    .unwrap()
                    .to_vec()
            };

        let whole = mix(
            a_notes.iter().chain(&b_notes).cloned().collect(),
            a_rows.iter().chain(&b_rows).copied().collect(),
        );
        let a = mix(a_notes, a_rows);
        let b = mix(b_notes, b_rows);
        for t in 0..whole.len() {
            assert_eq!(whole[t].to_bits(), (a[t] + b[t]).to_bits());
        }
    }

    #[test]
    fn mix_gradients_follow_the_modulation() {
        // One note over 3 frames, loss = sum of outputs. d/dv_j should be
        // sum_t (1 + p_t w_j) and d/dw_j should be sum_t p_t v_j.
        let embs = Tensor::<f64>::param(vec![1, 2], vec![2.0, -3.0]);
        let w = Tensor::param(vec![2], vec![0.5, 0.25]);
        let out = polyphonic_mix(&embs, &w, &aligned(vec![an(60, 0, 3)], 3), 3).unwrap();
        out.sum().backward();
        let dv = embs.grad().unwrap();
        let dw = w.grad().unwrap();
        // p over the span is 0, 1/2, 1, so sum_t (1 + p w) = 3 + 1.5 w.
        assert!((dv[0] - (3.0 + 1.5 * 0.5)).abs() < 1e-12);
        assert!((dv[1] - (3.0 + 1.5 * 0.25)).abs() < 1e-12);
        assert!((dw[0] - 1.5 * 2.0).abs() < 1e-12);
        assert!((dw[1] - 1.5 * -3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_w_receives_no_gradient_machinery() {
        let embs = Tensor::<f64>::param(vec![1, 2], vec![1.0, 1.0]);
        let w = Tensor::zeros(vec![2]);
        let out = polyphonic_mix(&embs, &w, &aligned(vec![an(60, 0, 2)], 2), 2).unwrap();
        out.sum().backward();
        assert!(embs.grad().is_some());
        assert!(w.grad().is_none());
    }
}
