use espressivo_score::AlignedScore;

use crate::{AudioClip, HOP_LENGTH, SAMPLE_RATE};

const NUM_PARTIALS: u32 = 6;
const RAMP_SECONDS: f64 = 0.010;
const TARGET_PEAK: f32 = 0.9;

/// Renders an aligned score as audio with a deterministic additive
/// synthesizer: each note is a 6-partial harmonic stack (partial k at
/// amplitude 1/k, sawtooth-like) at its equal-tempered frequency, shaped by
/// 10 ms linear attack/release ramps and scaled by velocity. The mix is
/// peak-normalized to 0.9. This stands in for an external SoundFont
/// renderer: alignment only needs spectrally plausible, time-accurate audio.
pub fn additive_synth(aligned: &AlignedScore) -> AudioClip {
    let total = aligned.num_frames as usize * HOP_LENGTH;
    let mut mix = vec![0.0f64; total];
    let sr = SAMPLE_RATE as f64;
    let nyquist = sr / 2.0;
    let ramp = (RAMP_SECONDS * sr) as usize;

    for an in aligned.notes() {
        let start = an.onset_frames as usize * HOP_LENGTH;
        let len = an.duration_frames as usize * HOP_LENGTH;
        let freq = 440.0 * (2.0f64).powf((an.note.pitch as f64 - 69.0) / 12.0);
        let vel = an.note.velocity.map_or(1.0, |v| v as f64 / 127.0);

        let attack = ramp.min(len);
        let release = ramp.min(len);
        for i in 0..len {
            let t = i as f64 / sr;
            let mut s = 0.0f64;
            for k in 1..=NUM_PARTIALS {
                let f = freq * k as f64;
                if f >= nyquist {
                    break;
                }
                s += (2.0 * std::f64::consts::PI * f * t).sin() / k as f64;
            }
            // Attack and release multiply, so very short notes stay smooth.
            let mut env = vel;
            if i < attack {
                env *= (i + 1) as f64 / attack as f64;
            }
            let from_end = len - i;
            if from_end <= release {
                env *= from_end as f64 / release as f64;
            }
            mix[start + i] += s * env;
        }
    }

    let peak = mix.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    let scale = if peak > 0.0 { TARGET_PEAK as f64 / peak } else { 0.0 };
    AudioClip { samples: mix.iter().map(|&s| (s * scale) as f32).collect() }
}
