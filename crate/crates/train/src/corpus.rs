//! Synthetic corpus generation.
//!
//! End-to-end runs need score/recording pairs with known ground-truth
//! alignments, and real performance corpora cannot ship with the code. The
//! generator fabricates them: random diatonic scores, a smooth random tempo
//! curve to play each one expressively, and the additive oracle synth to
//! render audio. Everything downstream (alignment transfer, both trainers,
//! evaluation) runs on this material exactly as it would on real data.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use espressivo_dsp::{additive_synth, write_wav};
use espressivo_score::{
    serialize_aligned, serialize_score, AlignedNote, AlignedScore, Note, Score, FRAME_SECONDS,
    TICKS_PER_QUARTER,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::manifest::{DatasetManifest, ManifestEntry};
use crate::TrainError;

/// Major-scale intervals, the vocabulary of the random walk.
const SCALE: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];

/// Note lengths in ticks: sixteenth through half note.
const DURATIONS: [u32; 4] = [6, 12, 24, 48];

/// A short random diatonic piece: a melody walking the scale, with a chord
/// tone under roughly a fifth of the notes so the texture is polyphonic.
pub fn random_score(rng: &mut ChaCha8Rng, performer_id: u32) -> Score {
    let root: u8 = rng.gen_range(48..72);
    let tempo = rng.gen_range(80.0..140.0);
    let num_notes: usize = rng.gen_range(12..28);

    let mut notes = Vec::new();
    let mut degree: i32 = rng.gen_range(0..8);
    let mut onset: u32 = 0;
    for _ in 0..num_notes {
        degree = (degree + rng.gen_range(-2..=2)).clamp(0, 13);
        let pitch = root + 12 * (degree / 7) as u8 + SCALE[degree as usize % 7];
        let duration = DURATIONS[rng.gen_range(0..DURATIONS.len())];
        let velocity = rng.gen_range(50..110);
        notes.push(Note::with_velocity(pitch, onset, duration, velocity));
        if rng.gen_bool(0.2) && degree >= 2 {
            let low = root + 12 * ((degree - 2) / 7) as u8 + SCALE[(degree - 2) as usize % 7];
            notes.push(Note::with_velocity(low, onset, duration, velocity.saturating_sub(10)));
        }
        onset += duration;
    }
    Score::new(notes, tempo, performer_id).expect("generated notes are in range by construction")
}

/// Performs the score with a smooth random tempo curve.
///
/// The local seconds-per-tick is the score's base value scaled by
/// `exp(a1·sin(2πt/L + φ1) + a2·sin(4πt/L + φ2))` — one slow swell and one
/// faster ripple, amplitudes up to ±15%. Integrating that curve tick by tick
/// maps every score position to performed seconds, which then round to
/// frames. This is the shape of rubato the alignment model is meant to
/// learn: smooth, score-position-dependent, never reordering notes.
pub fn expressive_alignment(score: &Score, rng: &mut ChaCha8Rng) -> AlignedScore {
    let total_ticks = score
        .notes()
        .iter()
        .map(|n| n.onset + n.duration)
        .max()
        .unwrap_or(1)
        .max(1);
    let base = 60.0 / (score.tempo * TICKS_PER_QUARTER as f64);
    let (a1, a2) = (rng.gen_range(0.0..0.15), rng.gen_range(0.0..0.15));
    let (p1, p2) = (rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU));

    // seconds[t] = performed time at score tick t, for t in 0..=total_ticks.
    let mut seconds = Vec::with_capacity(total_ticks as usize + 1);
    let mut acc = 0.0;
    for t in 0..=total_ticks {
        seconds.push(acc);
        let phase = t as f64 / total_ticks as f64;
        acc += base * (a1 * (TAU * phase + p1).sin() + a2 * (2.0 * TAU * phase + p2).sin()).exp();
    }

    let to_frame = |sec: f64| (sec / FRAME_SECONDS).round() as u32;
    let aligned_notes: Vec<AlignedNote> = score
        .notes()
        .iter()
        .map(|&note| {
            let onset_frames = to_frame(seconds[note.onset as usize]);
            let end = to_frame(seconds[(note.onset + note.duration) as usize]);
            let duration_frames = end.saturating_sub(onset_frames).max(1);
            AlignedNote { note, onset_frames, duration_frames }
        })
        .collect();
    let num_frames = aligned_notes.iter().map(AlignedNote::end_frames).max().unwrap_or(1);
    AlignedScore::new(aligned_notes, num_frames, score.performer_id)
        .expect("spans end at num_frames by construction")
}

/// Generates `num_pieces` score/alignment/recording triples under `dir` and
/// writes a manifest describing them. Performer ids cycle through
/// `0..num_performers`. Returns the manifest with paths resolved.
pub fn generate_corpus(
    dir: &Path,
    num_pieces: usize,
    num_performers: u32,
    rng: &mut ChaCha8Rng,
) -> Result<DatasetManifest, TrainError> {
    if num_pieces == 0 {
        return Err(TrainError::Config("corpus needs at least one piece".into()));
    }
    if num_performers == 0 {
        return Err(TrainError::Config("corpus needs at least one performer".into()));
    }
    fs::create_dir_all(dir)?;

    let mut entries = Vec::with_capacity(num_pieces);
    for i in 0..num_pieces {
        let performer_id = i as u32 % num_performers;
        let score = random_score(rng, performer_id);
        let aligned = expressive_alignment(&score, rng);
        let audio = additive_synth(&aligned);

        let stem = format!("piece_{i:03}");
        fs::write(dir.join(format!("{stem}.notes.json")), serialize_score(&score))?;
        fs::write(dir.join(format!("{stem}.aligned.json")), serialize_aligned(&aligned))?;
        write_wav(&dir.join(format!("{stem}.wav")), &audio)?;

        entries.push(ManifestEntry {
            score: PathBuf::from(format!("{stem}.notes.json")),
            recording: Some(PathBuf::from(format!("{stem}.wav"))),
            aligned: None,
            performer_id,
        });
    }

    let manifest = DatasetManifest { entries };
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    DatasetManifest::load(&path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn random_scores_are_diatonic_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let score = random_score(&mut rng, 3);
            assert!((12..=56).contains(&score.notes().len()));
            assert!(score.tempo >= 80.0 && score.tempo < 140.0);
            assert!(score.notes().iter().all(|n| n.pitch < 96 && n.velocity.is_some()));
        }
    }

    #[test]
    fn expressive_alignment_preserves_note_order_and_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let score = random_score(&mut rng, 0);
            let aligned = expressive_alignment(&score, &mut rng);
            assert_eq!(aligned.notes().len(), score.notes().len());
            for (an, n) in aligned.notes().iter().zip(score.notes()) {
                assert_eq!(an.note, *n);
            }
            // Onsets are monotone in score onsets: rubato never reorders.
            for pair in aligned.notes().windows(2) {
                if pair[0].note.onset <= pair[1].note.onset {
                    assert!(pair[0].onset_frames <= pair[1].onset_frames);
                }
            }
        }
    }

    #[test]
    fn tempo_curve_stays_within_the_advertised_band() {
        // With amplitudes capped at 0.15 each, the warp factor is within
        // exp(±0.3) of the base tempo; check total duration respects that.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let score = random_score(&mut rng, 0);
            let total_ticks =
                score.notes().iter().map(|n| n.onset + n.duration).max().unwrap() as f64;
            let base_secs = total_ticks * 60.0 / (score.tempo * TICKS_PER_QUARTER as f64);
            let aligned = expressive_alignment(&score, &mut rng);
            let performed_secs = aligned.num_frames as f64 * FRAME_SECONDS;
            assert!(performed_secs > base_secs * 0.7 && performed_secs < base_secs * 1.4);
        }
    }

    #[test]
    fn generate_corpus_writes_loadable_material() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let manifest = generate_corpus(dir.path(), 3, 2, &mut rng).unwrap();
        assert_eq!(manifest.entries.len(), 3);
        assert_eq!(
            manifest.entries.iter().map(|e| e.performer_id).collect::<Vec<_>>(),
            vec![0, 1, 0]
        );
        for entry in &manifest.entries {
            let score = crate::manifest::load_score(entry).unwrap();
            let aligned = crate::manifest::load_aligned(entry).unwrap();
            assert_eq!(score.notes().len(), aligned.notes().len());
            let audio = crate::manifest::load_audio(entry, &aligned).unwrap();
            assert!(!audio.samples().is_empty());
        }
    }

    #[test]
    fn corpus_generation_is_deterministic() {
        let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        for dir in [da.path(), db.path()] {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            generate_corpus(dir, 2, 1, &mut rng).unwrap();
        }
        for name in ["piece_000.notes.json", "piece_000.aligned.json", "piece_001.notes.json"] {
            assert_eq!(
                fs::read(da.path().join(name)).unwrap(),
                fs::read(db.path().join(name)).unwrap(),
                "{name} differs between identically seeded runs"
            );
        }
        let wa = fs::read(da.path().join("piece_000.wav")).unwrap();
        let wb = fs::read(db.path().join("piece_000.wav")).unwrap();
        assert_eq!(wa, wb);
    }
}
