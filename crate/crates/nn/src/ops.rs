use rand::Rng;

use crate::tensor::{Real, Tensor};
use crate::Mode;

/// Row-major matrix multiply, `c += a . b` with `a: m x k`, `b: k x n`.
/// The i-k-j loop order keeps both inner streams unit-stride so the
/// autovectorizer turns the j-loop into FMA lanes; this is the only
/// performance-critical kernel in the workspace.
pub(crate) fn mm_accumulate<E: Real>(a: &[E], b: &[E], c: &mut [E], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (kk, &aik) in arow.iter().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            for (cj, &bj) in crow.iter_mut().zip(brow) {
                *cj = aik.mul_add(bj, *cj);
            }
        }
    }
}

pub(crate) fn mm<E: Real>(a: &[E], b: &[E], m: usize, k: usize, n: usize) -> Vec<E> {
    let mut c = vec![E::ZERO; m * n];
    mm_accumulate(a, b, &mut c, m, k, n);
    c
}

pub(crate) fn transpose_raw<E: Real>(a: &[E], rows: usize, cols: usize) -> Vec<E> {
    let mut t = vec![E::ZERO; a.len()];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = a[i * cols + j];
        }
    }
    t
}

impl<E: Real> Tensor<E> {
    /// Matrix product of two 2-D tensors.
    pub fn matmul(&self, other: &Tensor<E>) -> Tensor<E> {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        assert_eq!(k, k2, "matmul: {m}x{k} . {k2}x{n}");
        let data = mm(&self.data(), &other.data(), m, k, n);
        Tensor::from_op(vec![m, n], data, vec![self.clone(), other.clone()], move |g, _, ps| {
            // dA += G . B^T, dB += A^T . G
            if ps[0].needs_grad() {
                let bt = transpose_raw(&ps[1].data(), k, n);
                let mut da = ps[0].grad_mut();
                mm_accumulate(g, &bt, &mut da, m, n, k);
            }
            if ps[1].needs_grad() {
                let at = transpose_raw(&ps[0].data(), m, k);
                let mut db = ps[1].grad_mut();
                mm_accumulate(&at, g, &mut db, k, m, n);
            }
        })
    }

    pub fn transpose(&self) -> Tensor<E> {
        let (m, n) = (self.rows(), self.cols());
        let data = transpose_raw(&self.data(), m, n);
        Tensor::from_op(vec![n, m], data, vec![self.clone()], move |g, _, ps| {
            let gt = transpose_raw(g, n, m);
            let mut da = ps[0].grad_mut();
            for (d, &v) in da.iter_mut().zip(&gt) {
                *d += v;
            }
        })
    }

    /// Adds a length-`cols` bias vector to every row.
    pub fn add_row(&self, bias: &Tensor<E>) -> Tensor<E> {
        let (m, n) = (self.rows(), self.cols());
        assert_eq!(bias.len(), n, "add_row: bias length");
        let mut data = self.to_vec();
        {
            let b = bias.data();
            for i in 0..m {
                for j in 0..n {
                    data[i * n + j] += b[j];
                }
            }
        }
        Tensor::from_op(self.shape().to_vec(), data, vec![self.clone(), bias.clone()], move |g, _, ps| {
            if ps[0].needs_grad() {
                let mut dx = ps[0].grad_mut();
                for (d, &v) in dx.iter_mut().zip(g) {
                    *d += v;
                }
            }
            if ps[1].needs_grad() {
                let mut db = ps[1].grad_mut();
                for i in 0..m {
                    for j in 0..n {
                        db[j] += g[i * n + j];
                    }
                }
            }
        })
    }

    /// Copies columns `[start, start + width)` of a 2-D tensor.
    pub fn narrow_cols(&self, start: usize, width: usize) -> Tensor<E> {
        let (m, n) = (self.rows(), self.cols());
        assert!(start + width <= n, "narrow_cols: {start}+{width} > {n}");
        let src = self.data();
        let mut data = Vec::with_capacity(m * width);
        for i in 0..m {
            data.extend_from_slice(&src[i * n + start..i * n + start + width]);
        }
        drop(src);
        Tensor::from_op(vec![m, width], data, vec![self.clone()], move |g, _, ps| {
            let mut dx = ps[0].grad_mut();
            for i in 0..m {
                for j in 0..width {
                    dx[i * n + start + j] += g[i * width + j];
                }
            }
        })
    }

    /// Row-wise softmax with key masking: `masked[j]` excludes column `j`
    /// from every row's distribution (weight exactly 0).
    pub fn softmax_rows_masked(&self, masked: &[bool]) -> Tensor<E> {
        let (m, n) = (self.rows(), self.cols());
        assert_eq!(masked.len(), n, "softmax mask length");
        let src = self.data();
        let mut data = vec![E::ZERO; m * n];
        for i in 0..m {
            let row = &src[i * n..(i + 1) * n];
            let mut max = None::<E>;
            for j in 0..n {
                if !masked[j] && max.map_or(true, |mx| row[j] > mx) {
                    max = Some(row[j]);
                }
            }
            let Some(max) = max else { continue }; // fully masked row: all zeros
            let out = &mut data[i * n..(i + 1) * n];
            let mut denom = E::ZERO;
            for j in 0..n {
                if !masked[j] {
                    let e = (row[j] - max).exp();
                    out[j] = e;
                    denom += e;
                }
            }
            for v in out.iter_mut() {
                *v = *v / denom;
            }
        }
        drop(src);
        Tensor::from_op(vec![m, n], data, vec![self.clone()], move |g, out, ps| {
            // dx = y * (g - sum(g * y)) per row; masked entries have y = 0.
            let mut dx = ps[0].grad_mut();
            for i in 0..m {
                let y = &out[i * n..(i + 1) * n];
                let gi = &g[i * n..(i + 1) * n];
                let mut dot = E::ZERO;
                for j in 0..n {
                    dot += gi[j] * y[j];
                }
                let d = &mut dx[i * n..(i + 1) * n];
                for j in 0..n {
                    d[j] += y[j] * (gi[j] - dot);
                }
            }
        })
    }

    /// Unfolds a length-L sequence of D-dim rows into `[L, kernel * D]`
    /// windows with zero 'same' padding (kernel odd), so a 1-D convolution
    /// becomes one matrix multiply against a `[kernel * D, F]` weight.
    pub fn im2col(&self, kernel: usize) -> Tensor<E> {
        assert!(kernel % 2 == 1, "im2col: kernel must be odd for same padding");
        let (l, d) = (self.rows(), self.cols());
        let half = kernel / 2;
        let src = self.data();
        let mut data = vec![E::ZERO; l * kernel * d];
        for t in 0..l {
            for c in 0..kernel {
                let s = t as isize + c as isize - half as isize;
                if s < 0 || s >= l as isize {
                    continue;
                }
                let dst = t * kernel * d + c * d;
                let srcr = s as usize * d;
                data[dst..dst + d].copy_from_slice(&src[srcr..srcr + d]);
            }
        }
        drop(src);
        Tensor::from_op(vec![l, kernel * d], data, vec![self.clone()], move |g, _, ps| {
            let mut dx = ps[0].grad_mut();
            for t in 0..l {
                for c in 0..kernel {
                    let s = t as isize + c as isize - half as isize;
                    if s < 0 || s >= l as isize {
                        continue;
                    }
                    let gsrc = t * kernel * d + c * d;
                    let dstr = s as usize * d;
                    for j in 0..d {
                        dx[dstr + j] += g[gsrc + j];
                    }
                }
            }
        })
    }

    /// Inverted dropout: in training, keeps each value with probability
    /// `1 - p` and rescales by `1/(1 - p)` so the expectation is unchanged;
    /// in eval mode it is the identity (the same node, no copy).
    pub fn dropout(&self, p: f64, mode: &mut Mode) -> Tensor<E> {
        assert!((0.0..1.0).contains(&p), "dropout rate must be in [0, 1)");
        match mode {
            Mode::Eval => self.clone(),
            Mode::Train { .. } if p == 0.0 => self.clone(),
            Mode::Train { rng } => {
                let keep = 1.0 - p;
                let scale = E::from_f64(1.0 / keep);
                let mask: Vec<E> = (0..self.len())
                    .map(|_| if rng.gen::<f64>() < keep { scale } else { E::ZERO })
                    .collect();
                let data =
                    self.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
                Tensor::from_op(self.shape().to_vec(), data, vec![self.clone()], move |g, _, ps| {
                    let mut dx = ps[0].grad_mut();
                    for i in 0..g.len() {
                        dx[i] += g[i] * mask[i];
                    }
                })
            }
        }
    }

    /// Layer normalization over each row, with learnable gain and bias.
    pub fn layer_norm(&self, gamma: &Tensor<E>, beta: &Tensor<E>) -> Tensor<E> {
        let (m, n) = (self.rows(), self.cols());
        assert_eq!(gamma.len(), n, "layer_norm: gamma length");
        assert_eq!(beta.len(), n, "layer_norm: beta length");
        let eps = E::from_f64(1e-5);
        let inv_n = E::from_f64(1.0 / n as f64);

        let src = self.data();
        let g_ = gamma.data();
        let b_ = beta.data();
        let mut data = vec![E::ZERO; m * n];
        let mut xhat = vec![E::ZERO; m * n];
        let mut inv_std = vec![E::ZERO; m];
        for i in 0..m {
            let row = &src[i * n..(i + 1) * n];
            let mut mean = E::ZERO;
            for &v in row {
                mean += v;
            }
            mean *= inv_n;
            let mut var = E::ZERO;
            for &v in row {
                let d = v - mean;
                var += d * d;
            }
            var *= inv_n;
            let istd = E::ONE / (var + eps).sqrt();
            inv_std[i] = istd;
            for j in 0..n {
                let xh = (row[j] - mean) * istd;
                xhat[i * n + j] = xh;
                data[i * n + j] = g_[j] * xh + b_[j];
            }
        }
        drop(src);
        drop(g_);
        drop(b_);

        Tensor::from_op(
            vec![m, n],
            data,
            vec![self.clone(), gamma.clone(), beta.clone()],
            move |g, _, ps| {
                if ps[2].needs_grad() {
                    let mut dbeta = ps[2].grad_mut();
                    for i in 0..m {
                        for j in 0..n {
                            dbeta[j] += g[i * n + j];
                        }
                    }
                }
                if ps[1].needs_grad() {
                    let mut dgamma = ps[1].grad_mut();
                    for i in 0..m {
                        for j in 0..n {
                            dgamma[j] += g[i * n + j] * xhat[i * n + j];
                        }
                    }
                }
                if ps[0].needs_grad() {
                    let gamma_v = ps[1].to_vec();
                    let mut dx = ps[0].grad_mut();
                    for i in 0..m {
                        let xh = &xhat[i * n..(i + 1) * n];
                        let gr = &g[i * n..(i + 1) * n];
                        // dxhat = g * gamma; project out the mean and the
                        // component along xhat (the two normalization
                        // constraints), then rescale.
                        let mut mean_dxh = E::ZERO;
                        let mut mean_dxh_xh = E::ZERO;
                        for j in 0..n {
                            let dxh = gr[j] * gamma_v[j];
                            mean_dxh += dxh;
                            mean_dxh_xh += dxh * xh[j];
                        }
                        mean_dxh *= inv_n;
                        mean_dxh_xh *= inv_n;
                        let istd = inv_std[i];
                        let d = &mut dx[i * n..(i + 1) * n];
                        for j in 0..n {
                            let dxh = gr[j] * gamma_v[j];
                            d[j] += istd * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
                        }
                    }
                }
            },
        )
    }
}

/// Concatenates same-height 2-D tensors side by side.
pub fn concat_cols<E: Real>(parts: &[Tensor<E>]) -> Tensor<E> {
    assert!(!parts.is_empty(), "concat_cols of nothing");
    let m = parts[0].rows();
    let widths: Vec<usize> = parts.iter().map(|p| p.cols()).collect();
    for p in parts {
        assert_eq!(p.rows(), m, "concat_cols: row mismatch");
    }
    let total: usize = widths.iter().sum();
    let mut data = vec![E::ZERO; m * total];
    let mut offset = 0;
    for (p, &w) in parts.iter().zip(&widths) {
        let src = p.data();
        for i in 0..m {
            data[i * total + offset..i * total + offset + w]
                .copy_from_slice(&src[i * w..(i + 1) * w]);
        }
        offset += w;
    }
    Tensor::from_op(vec![m, total], data, parts.to_vec(), move |g, _, ps| {
        let mut offset = 0;
        for (p, &w) in ps.iter().zip(&widths) {
            if p.needs_grad() {
                let mut dp = p.grad_mut();
                for i in 0..m {
                    for j in 0..w {
                        dp[i * w + j] += g[i * total + offset + j];
                    }
                }
            }
            offset += w;
        }
    })
}

/// Embedding lookup: copies `table` rows at `indices` into a new
/// `[indices.len(), D]` tensor; gradients scatter-add back by row.
pub fn gather_rows<E: Real>(table: &Tensor<E>, indices: &[usize]) -> Tensor<E> {
    let (v, d) = (table.rows(), table.cols());
    let idx: Vec<usize> = indices.to_vec();
    for &i in &idx {
        assert!(i < v, "gather_rows: index {i} out of {v}");
    }
    let src = table.data();
    let mut data = Vec::with_capacity(idx.len() * d);
    for &i in &idx {
        data.extend_from_slice(&src[i * d..(i + 1) * d]);
    }
    drop(src);
    Tensor::from_op(vec![idx.len(), d], data, vec![table.clone()], move |g, _, ps| {
        let mut dt = ps[0].grad_mut();
        for (r, &i) in idx.iter().enumerate() {
            for j in 0..d {
                dt[i * d + j] += g[r * d + j];
            }
        }
    })
}
