use espressivo_score::{
    build_rolls, naive_align, parse_notes_json, serialize_score, AlignedNote, AlignedScore, Note,
    Score,
};
use proptest::prelude::*;

fn arb_note() -> impl Strategy<Value = Note> {
    (0u8..=127, 0u32..2000, 1u32..200, proptest::option::of(1u8..=127)).prop_map(
        |(pitch, onset, duration, velocity)| Note { pitch, onset, duration, velocity },
    )
}

fn arb_score() -> impl Strategy<Value = Score> {
    (proptest::collection::vec(arb_note(), 0..40), 20.0f64..300.0, 0u32..17)
        .prop_map(|(notes, tempo, performer_id)| Score::new(notes, tempo, performer_id).unwrap())
}

proptest! {
    #[test]
    fn json_round_trip_is_exact(score in arb_score()) {
        let text = serialize_score(&score);
        let back = parse_notes_json(&text).unwrap();
        prop_assert_eq!(back, score);
    }

    #[test]
    fn naive_align_is_monotone(score in arb_score()) {
        let aligned = naive_align(&score);
        for pair in aligned.notes().windows(2) {
            // Score notes are sorted by onset tick, so frames must follow.
            prop_assert!(pair[0].onset_frames <= pair[1].onset_frames);
        }
    }

    #[test]
    fn position_roll_is_bounded_and_decreasing(score in arb_score()) {
        let aligned = naive_align(&score);
        let (_, position) = build_rolls(&aligned);
        for an in aligned.notes() {
            let row = position.row(an.note.pitch as usize);
            let span = &row[an.onset_frames as usize..an.end_frames() as usize];
            for &v in span {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}

#[test]
fn piano_roll_sum_equals_total_frames_for_disjoint_notes() {
    // Non-overlapping notes, distinct pitches: roll mass = summed durations.
    let notes: Vec<AlignedNote> = (0..12)
        .map(|i| AlignedNote {
            note: Note::new(40 + i as u8 * 2, 0, 1),
            onset_frames: i * 10,
            duration_frames: 3 + (i % 4),
        })
        .collect();
    let expected: u32 = notes.iter().map(|n| n.duration_frames).sum();
    let aligned = AlignedScore::new(notes, 130, 0).unwrap();
    let (piano, _) = build_rolls(&aligned);
    assert_eq!(piano.sum(), expected as f64);
}
