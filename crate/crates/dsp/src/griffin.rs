use crate::stft::{istft, stft, Spectrogram};
use crate::{log_mel, mel_filterbank, AudioClip, DspError, MelSpectrogram};

const NNLS_ITERATIONS: usize = 200;

/// Recovers linear STFT magnitudes from a log-mel spectrogram by solving,
/// per frame, the non-negative least-squares problem
/// `min ||filterbank . s - mel||^2, s >= 0` with accelerated projected
/// gradient descent. Returns frame-major magnitudes (`num_frames` x 513).
pub fn mel_to_linear(mel: &MelSpectrogram) -> Vec<f32> {
    let params = mel.params();
    let num_bins = params.num_bins();
    let bands = mel.bands();
    let fb: Vec<f64> = mel_filterbank(params).iter().map(|&w| w as f64).collect();

    // The filterbank rows are narrow triangles; keeping their nonzero spans
    // makes every matrix-vector product effectively linear in num_bins.
    let spans: Vec<(usize, usize)> = (0..bands)
        .map(|b| {
            let row = &fb[b * num_bins..(b + 1) * num_bins];
            let start = row.iter().position(|&w| w > 0.0).unwrap_or(0);
            let end = row.iter().rposition(|&w| w > 0.0).map_or(start, |e| e + 1);
            (start, end)
        })
        .collect();

    let apply = |s: &[f64], out: &mut [f64]| {
        for b in 0..bands {
            let (lo, hi) = spans[b];
            let row = &fb[b * num_bins..(b + 1) * num_bins];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += row[k] * s[k];
            }
            out[b] = acc;
        }
    };
    let apply_t = |u: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for b in 0..bands {
            let (lo, hi) = spans[b];
            let row = &fb[b * num_bins..(b + 1) * num_bins];
            for k in lo..hi {
                out[k] += row[k] * u[b];
            }
        }
    };

    // Lipschitz constant of the gradient: largest eigenvalue of F^T F,
    // estimated by power iteration (the filterbank is fixed, so once per call).
    let mut v = vec![1.0f64; num_bins];
    let mut fv = vec![0.0f64; bands];
    let mut ftfv = vec![0.0f64; num_bins];
    let mut lipschitz = 1.0;
    for _ in 0..50 {
        apply(&v, &mut fv);
        apply_t(&fv, &mut ftfv);
        let norm = ftfv.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        lipschitz = norm;
        for (vi, wi) in v.iter_mut().zip(&ftfv) {
            *vi = wi / norm;
        }
    }
    let step = 1.0 / (lipschitz * 1.01);

    let num_frames = mel.num_frames();
    let mut mags = vec![0.0f32; num_frames * num_bins];
    let mut m = vec![0.0f64; bands];
    let mut s = vec![0.0f64; num_bins];
    let mut s_prev = vec![0.0f64; num_bins];
    let mut y = vec![0.0f64; num_bins];
    let mut grad = vec![0.0f64; num_bins];

    for t in 0..num_frames {
        for b in 0..bands {
            m[b] = (mel.value(b, t) as f64).exp();
        }
        apply_t(&m, &mut s);
        s_prev.copy_from_slice(&s);
        y.copy_from_slice(&s);
        let mut tk = 1.0f64;

        for _ in 0..NNLS_ITERATIONS {
            apply(&y, &mut fv);
            for (r, &target) in fv.iter_mut().zip(&m) {
                *r -= target;
            }
            apply_t(&fv, &mut grad);
            for k in 0..num_bins {
                s[k] = (y[k] - step * grad[k]).max(0.0);
            }
            let tk_next = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
            let beta = (tk - 1.0) / tk_next;
            for k in 0..num_bins {
                y[k] = s[k] + beta * (s[k] - s_prev[k]);
            }
            s_prev.copy_from_slice(&s);
            tk = tk_next;
        }

        for k in 0..num_bins {
            mags[t * num_bins + k] = s[k] as f32;
        }
    }
    mags
}

/// Inverts a log-mel spectrogram to a waveform: NNLS back to linear
/// magnitudes, then `iterations` rounds of alternating STFT-consistency
/// phase reconstruction starting from zero phase (fully deterministic).
/// Output length is `num_frames * hop` samples.
pub fn griffin_lim(mel: &MelSpectrogram, iterations: usize) -> Result<AudioClip, DspError> {
    run(mel, iterations, false).map(|(clip, _)| clip)
}

/// Same as [`griffin_lim`], also returning the mel-consistency error after
/// each iteration: `trace[i]` is the mean absolute error between the input
/// and the log-mel of the audio produced by `i + 1` iterations.
pub fn griffin_lim_traced(
    mel: &MelSpectrogram,
    iterations: usize,
) -> Result<(AudioClip, Vec<f64>), DspError> {
    run(mel, iterations, true)
}

fn run(
    mel: &MelSpectrogram,
    iterations: usize,
    traced: bool,
) -> Result<(AudioClip, Vec<f64>), DspError> {
    if iterations < 1 {
        return Err(DspError::NoIterations);
    }
    let params = *mel.params();
    let num_frames = mel.num_frames();
    let num_bins = params.num_bins();
    let length = num_frames * params.hop_length;

    let target = mel_to_linear(mel);
    let mut spec = Spectrogram::from_magnitudes(&target, num_frames, num_bins);
    let mut trace = Vec::new();

    let consistency = |clip: &AudioClip| -> f64 {
        // The reconstruction is one hop longer than the analysis grid;
        // compare the frames both sides share.
        let got = log_mel(clip, &params).expect("reconstruction is non-empty");
        let mut acc = 0.0f64;
        for b in 0..mel.bands() {
            for t in 0..num_frames {
                acc += (got.value(b, t) as f64 - mel.value(b, t) as f64).abs();
            }
        }
        acc / (mel.bands() * num_frames) as f64
    };

    for it in 0..iterations {
        let clip = istft(&spec, &params, length);
        if traced && it > 0 {
            trace.push(consistency(&clip));
        }
        let mut estimate = stft(&clip, &params)?;
        estimate.truncate_frames(num_frames);
        // Keep the estimated phase, snap magnitudes back to the target.
        for t in 0..num_frames {
            let frame = estimate.frame_mut(t);
            for k in 0..num_bins {
                let mag = frame[k].norm();
                let target_mag = target[t * num_bins + k];
                frame[k] = if mag > 1e-12 {
                    frame[k] * (target_mag / mag)
                } else {
                    rustfft::num_complex::Complex32::new(target_mag, 0.0)
                };
            }
        }
        spec = estimate;
    }

    let clip = istft(&spec, &params, length);
    if traced {
        trace.push(consistency(&clip));
    }
    Ok((clip, trace))
}
