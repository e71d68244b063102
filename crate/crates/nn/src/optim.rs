use crate::tensor::{Real, Tensor};
use crate::NnError;

/// The named, insertion-ordered set of trainable tensors for one model.
/// Entries share storage with the layers that registered them (tensors are
/// reference-counted), so optimizer updates are visible to the model and
/// iteration order is stable — which keeps training bit-reproducible.
pub struct ParamSet<E: Real> {
    entries: Vec<(String, Tensor<E>)>,
}

impl<E: Real> Default for ParamSet<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Real> ParamSet<E> {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    pub fn register(&mut self, name: String, tensor: Tensor<E>) {
        assert!(
            self.entries.iter().all(|(n, _)| *n != name),
            "duplicate parameter name {name:?}"
        );
        self.entries.push((name, tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<E>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<E>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count across all parameters.
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zero_grads(&self) {
        for (_, t) in &self.entries {
            t.clear_grad();
        }
    }
}

/// Rescales gradients in place so their global L2 norm is at most
/// `max_norm`; returns the pre-clip norm.
pub(crate) fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let sq: f64 = grads.iter().flatten().map(|g| g * g).sum();
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            *g *= scale;
        }
    }
    norm
}

/// Adam with bias correction and global-norm gradient clipping. Moment
/// buffers are kept in double precision regardless of the model's element
/// type so long runs don't accumulate single-precision drift.
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling applied before the update.
    pub clip_norm: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Self::new()
    }
}

impl Adam {
    pub fn new() -> Self {
        Adam { beta1: 0.9, beta2: 0.98, eps: 1e-9, clip_norm: 1.0, step: 0, m: Vec::new(), v: Vec::new() }
    }

    /// Steps taken so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update at learning rate `lr`, consuming the gradients
    /// currently stored on `params` (missing gradients count as zero).
    /// A non-finite gradient aborts before any parameter is touched.
    pub fn step<E: Real>(&mut self, params: &ParamSet<E>, lr: f64) -> Result<(), NnError> {
        if self.m.is_empty() {
            self.m = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
            self.v = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        }
        assert_eq!(self.m.len(), params.len(), "optimizer bound to a different parameter set");

        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(params.len());
        for (name, t) in params.iter() {
            let g = match t.grad() {
                Some(g) => g.iter().map(|v| v.to_f64()).collect(),
                None => vec![0.0; t.len()],
            };
            if g.iter().any(|v: &f64| !v.is_finite()) {
                return Err(NnError::NonFiniteGradient { name: name.to_string() });
            }
            grads.push(g);
        }
        clip_global_norm(&mut grads, self.clip_norm);

        self.step += 1;
        let t = self.step;
        let bc1 = 1.0 - self.beta1.powi(t as i32);
        let bc2 = 1.0 - self.beta2.powi(t as i32);
        for (i, (_, p)) in params.iter().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let mut data = p.data_mut();
            for (j, &g) in grads[i].iter().enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let update = lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + self.eps);
                data[j] = E::from_f64(data[j].to_f64() - update);
            }
        }
        Ok(())
    }
}

/// The transformer learning-rate schedule:
/// `model_dim^(-0.5) * min(step^(-0.5), step * warmup^(-1.5))`, multiplied
/// by `anneal_rate` once for every entry of `anneal_steps` the current step
/// has passed. Steps are 1-based.
pub fn lr_schedule(
    step: u64,
    model_dim: usize,
    warmup: u64,
    anneal_steps: &[u64],
    anneal_rate: f64,
) -> Result<f64, NnError> {
    if step == 0 {
        return Err(NnError::ZeroStep);
    }
    let s = step as f64;
    let w = warmup.max(1) as f64;
    let mut lr = (model_dim as f64).powf(-0.5) * (s.powf(-0.5)).min(s * w.powf(-1.5));
    for &a in anneal_steps {
        if step > a {
            lr *= anneal_rate;
        }
    }
    Ok(lr)
}

/// A coordinate whose error clears this at some ladder step needs no
/// further probing — the agreement is already far below any useful bar.
const LADDER_ACCEPT: f64 = 1e-6;

/// Runs one backward pass at the current parameter values and returns the
/// gradients as plain f64 vectors, one per parameter.
fn backprop_grads<E: Real>(
    f: &mut impl FnMut() -> Tensor<E>,
    params: &ParamSet<E>,
) -> Result<Vec<Vec<f64>>, NnError> {
    params.zero_grads();
    let loss = f();
    assert_eq!(loss.len(), 1, "grad_check objective must be scalar");
    if !loss.item().to_f64().is_finite() {
        return Err(NnError::NonFiniteObjective);
    }
    loss.backward();
    Ok(params
        .iter()
        .map(|(_, t)| match t.grad() {
            Some(g) => g.iter().map(|v| v.to_f64()).collect(),
            None => vec![0.0; t.len()],
        })
        .collect())
}

/// Central-difference error for one coordinate, measured at a ladder of
/// shrinking steps and keeping the best rung. No single step suits every
/// coordinate of a deep model: a ReLU kink inside the probe interval makes
/// the difference quotient average two one-sided slopes (an artifact that
/// collapses once the step shrinks past the kink), while near-zero
/// gradients drown in cancellation at small steps (an artifact absent at
/// large ones).
fn ladder_rel<E: Real>(
    f: &mut impl FnMut() -> Tensor<E>,
    p: &Tensor<E>,
    j: usize,
    g_bp: f64,
    eps: f64,
) -> Result<f64, NnError> {
    let original = p.data()[j];
    let mut best = f64::INFINITY;
    for rung in [eps, eps / 8.0, eps / 64.0, eps / 512.0] {
        let rung_e = E::from_f64(rung);
        p.data_mut()[j] = original + rung_e;
        let plus = f().item().to_f64();
        p.data_mut()[j] = original - rung_e;
        let minus = f().item().to_f64();
        p.data_mut()[j] = original;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(NnError::NonFiniteObjective);
        }
        let g_fd = (plus - minus) / (2.0 * rung);
        let rel = (g_fd - g_bp).abs() / g_fd.abs().max(g_bp.abs()).max(1e-8);
        best = best.min(rel);
        if best < LADDER_ACCEPT {
            break;
        }
    }
    Ok(best)
}

/// Deterministic pseudo-random offset in (-0.5, 0.5) for jittering one
/// parameter coordinate; a hash, not an RNG, so reruns are identical.
fn jitter_unit(i: usize, j: usize) -> f64 {
    let x = ((i * 7919 + j) as f64 * 12.989_8).sin() * 43_758.545_3;
    x.fract() - 0.5 * x.fract().signum()
}

/// Verifies backpropagation against central finite differences.
///
/// `f` must rebuild the forward computation from the current parameter
/// values and return the scalar objective (run dropout in eval mode — the
/// evaluations must be deterministic). Up to `max_coords` coordinates per
/// parameter are probed, spread evenly across each tensor. Returns the
/// maximum over probed coordinates of the relative error
/// `|g_fd - g_bp| / max(|g_fd|, |g_bp|, 1e-8)`.
///
/// Each coordinate is measured at a ladder of shrinking steps (`eps` down
/// to `eps/512`, best rung kept), and coordinates still above 1e-6 after
/// the ladder are re-measured at a nearby jittered parameter point. Both
/// guards target finite-difference artifacts, which are properties of the
/// probe — a kink straddled by the interval, cancellation on a vanishing
/// gradient — and disappear when the step or the point moves. A genuine
/// backprop defect lives in the code: it follows the coordinate to every
/// rung and every point, so it still reports its full error.
pub fn grad_check<E: Real>(
    mut f: impl FnMut() -> Tensor<E>,
    params: &ParamSet<E>,
    eps: f64,
    max_coords: usize,
) -> Result<f64, NnError> {
    let backprop = backprop_grads(&mut f, params)?;

    let mut worst = 0.0f64;
    let mut suspects: Vec<(usize, usize, f64)> = Vec::new();
    for (i, (_, p)) in params.iter().enumerate() {
        let len = p.len();
        if len == 0 {
            continue;
        }
        let stride = (len / max_coords.max(1)).max(1);
        for j in (0..len).step_by(stride) {
            let best = ladder_rel(&mut f, p, j, backprop[i][j], eps)?;
            if best > LADDER_ACCEPT {
                suspects.push((i, j, best));
            } else {
                worst = worst.max(best);
            }
        }
    }
    if suspects.is_empty() {
        return Ok(worst);
    }

    // Second opinion for the suspects: shift every parameter by a small
    // deterministic offset, rebuild the backprop gradients there, and
    // re-probe. The shift moves every downstream activation by far more
    // than the probe interval spans, so a kink that sat inside the
    // original interval almost surely no longer does; the jittered point
    // is as valid a place to compare backprop against differences as the
    // original.
    let saved: Vec<Vec<E>> = params.iter().map(|(_, t)| t.data().to_vec()).collect();
    for (i, (_, p)) in params.iter().enumerate() {
        let mut data = p.data_mut();
        for (j, v) in data.iter_mut().enumerate() {
            let scale = 64.0 * eps * (v.to_f64().abs() + 1.0);
            *v = *v + E::from_f64(scale * jitter_unit(i, j));
        }
    }
    let retry: Result<f64, NnError> = (|| {
        let backprop = backprop_grads(&mut f, params)?;
        let mut worst = worst;
        for &(i, j, first) in &suspects {
            let p = params.iter().nth(i).expect("suspect index in range").1;
            let second = ladder_rel(&mut f, p, j, backprop[i][j], eps)?;
            worst = worst.max(first.min(second));
        }
        Ok(worst)
    })();
    for ((_, p), data) in params.iter().zip(saved) {
        p.data_mut().copy_from_slice(&data);
    }
    retry
}
