use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ops::{concat_cols, gather_rows};
use crate::optim::ParamSet;
use crate::tensor::{Real, Tensor};
use crate::{Mode, NnError};

/// Standard sinusoidal positional encoding, sin/cos interleaved per
/// frequency: row `pos` is `[sin(pos*w_0), cos(pos*w_0), sin(pos*w_1), ...]`
/// with `w_i = 10000^(-2i/dim)`. Returned as a constant (non-trainable)
/// tensor to be added to an embedded sequence.
pub fn sinusoidal_pe<E: Real>(length: usize, dim: usize) -> Result<Tensor<E>, NnError> {
    if dim % 2 != 0 {
        return Err(NnError::OddPeDim(dim));
    }
    let mut data = vec![E::ZERO; length * dim];
    for pos in 0..length {
        for i in 0..dim / 2 {
            let omega = 10000f64.powf(-2.0 * i as f64 / dim as f64);
            let angle = pos as f64 * omega;
            data[pos * dim + 2 * i] = E::from_f64(angle.sin());
            data[pos * dim + 2 * i + 1] = E::from_f64(angle.cos());
        }
    }
    Ok(Tensor::constant(vec![length, dim], data))
}

/// Affine map `x W + b` with fan-in scaled uniform init. The bias is
/// optional: projections feeding a softmax over keys omit it, because a
/// constant added to every key shifts each attention row uniformly and
/// softmax is shift-invariant — such a bias has an identically zero
/// gradient and can never train.
pub struct Linear<E: Real> {
    pub w: Tensor<E>,
    pub b: Option<Tensor<E>>,
}

impl<E: Real> Linear<E> {
    pub fn new(rng: &mut ChaCha8Rng, in_dim: usize, out_dim: usize) -> Self {
        let mut lin = Self::new_no_bias(rng, in_dim, out_dim);
        lin.b = Some(Tensor::param(vec![out_dim], vec![E::ZERO; out_dim]));
        lin
    }

    pub fn new_no_bias(rng: &mut ChaCha8Rng, in_dim: usize, out_dim: usize) -> Self {
        let bound = (1.0 / in_dim as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| E::from_f64(rng.gen_range(-bound..bound)))
            .collect();
        Linear { w: Tensor::param(vec![in_dim, out_dim], w), b: None }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Tensor<E> {
        let y = x.matmul(&self.w);
        match &self.b {
            Some(b) => y.add_row(b),
            None => y,
        }
    }

    pub fn register(&self, params: &mut ParamSet<E>, prefix: &str) {
        params.register(format!("{prefix}.w"), self.w.clone());
        if let Some(b) = &self.b {
            params.register(format!("{prefix}.b"), b.clone());
        }
    }
}

/// Trainable lookup table, rows initialized from N(0, 1e-2).
pub struct Embedding<E: Real> {
    pub table: Tensor<E>,
}

impl<E: Real> Embedding<E> {
    pub fn new(rng: &mut ChaCha8Rng, vocab: usize, dim: usize) -> Self {
        let dist = Normal::new(0.0, 1e-2).expect("valid stddev");
        let data = (0..vocab * dim)
            .map(|_| E::from_f64(dist.sample(rng)))
            .collect();
        Embedding { table: Tensor::param(vec![vocab, dim], data) }
    }

    pub fn forward(&self, indices: &[usize]) -> Tensor<E> {
        gather_rows(&self.table, indices)
    }

    pub fn register(&self, params: &mut ParamSet<E>, prefix: &str) {
        params.register(format!("{prefix}.table"), self.table.clone());
    }
}

/// Row-wise layer normalization with learnable gain and bias.
pub struct LayerNorm<E: Real> {
    pub gamma: Tensor<E>,
    pub beta: Tensor<E>,
}

impl<E: Real> LayerNorm<E> {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Tensor::param(vec![dim], vec![E::ONE; dim]),
            beta: Tensor::param(vec![dim], vec![E::ZERO; dim]),
        }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Tensor<E> {
        x.layer_norm(&self.gamma, &self.beta)
    }

    pub fn register(&self, params: &mut ParamSet<E>, prefix: &str) {
        params.register(format!("{prefix}.gamma"), self.gamma.clone());
        params.register(format!("{prefix}.beta"), self.beta.clone());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerLayerConfig {
    pub model_dim: usize,
    pub mha_hidden: usize,
    pub num_heads: usize,
    pub ffn_hidden: usize,
    /// Kernel widths of the two position-wise convolutions.
    pub ffn_kernel_sizes: (usize, usize),
    pub dropout: f64,
}

impl Default for TransformerLayerConfig {
    fn default() -> Self {
        TransformerLayerConfig {
            model_dim: 128,
            mha_hidden: 128,
            num_heads: 2,
            ffn_hidden: 512,
            ffn_kernel_sizes: (9, 1),
            dropout: 0.2,
        }
    }
}

impl TransformerLayerConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.model_dim == 0 || self.mha_hidden == 0 || self.num_heads == 0 || self.ffn_hidden == 0
        {
            return Err(NnError::Shape("transformer dims must be nonzero".into()));
        }
        if self.mha_hidden % self.num_heads != 0 {
            return Err(NnError::Shape(format!(
                "mha_hidden {} not divisible by num_heads {}",
                self.mha_hidden, self.num_heads
            )));
        }
        let (k1, k2) = self.ffn_kernel_sizes;
        if k1 % 2 == 0 || k2 % 2 == 0 {
            return Err(NnError::Shape(format!(
                "ffn kernels must be odd for same padding, got {k1} and {k2}"
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NnError::Shape(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// One post-norm transformer block: multi-head self-attention and a
/// two-convolution feed-forward network, each followed by dropout, a
/// residual connection, and layer normalization.
pub struct TransformerLayer<E: Real> {
    cfg: TransformerLayerConfig,
    wq: Linear<E>,
    wk: Linear<E>,
    wv: Linear<E>,
    wo: Linear<E>,
    conv1: Linear<E>,
    conv2: Linear<E>,
    ln1: LayerNorm<E>,
    ln2: LayerNorm<E>,
}

impl<E: Real> TransformerLayer<E> {
    pub fn new(rng: &mut ChaCha8Rng, cfg: &TransformerLayerConfig) -> Result<Self, NnError> {
        cfg.validate()?;
        let (k1, k2) = cfg.ffn_kernel_sizes;
        Ok(TransformerLayer {
            cfg: cfg.clone(),
            wq: Linear::new(rng, cfg.model_dim, cfg.mha_hidden),
            wk: Linear::new_no_bias(rng, cfg.model_dim, cfg.mha_hidden),
            wv: Linear::new(rng, cfg.model_dim, cfg.mha_hidden),
            wo: Linear::new(rng, cfg.mha_hidden, cfg.model_dim),
            conv1: Linear::new(rng, k1 * cfg.model_dim, cfg.ffn_hidden),
            conv2: Linear::new(rng, k2 * cfg.ffn_hidden, cfg.model_dim),
            ln1: LayerNorm::new(cfg.model_dim),
            ln2: LayerNorm::new(cfg.model_dim),
        })
    }

    pub fn config(&self) -> &TransformerLayerConfig {
        &self.cfg
    }

    /// Multi-head self-attention sub-layer. `mask[j]` marks padded
    /// positions, which are excluded as keys (their attention weight is
    /// exactly zero for every query) and whose output rows are zeroed, so
    /// the convolution in the following sub-layer sees exactly the zeros
    /// its 'same' padding would produce at a true sequence end. Includes
    /// dropout, the residual connection, and layer norm.
    pub fn mha(&self, x: &Tensor<E>, mask: &[bool], mode: &mut Mode) -> Tensor<E> {
        assert_eq!(x.cols(), self.cfg.model_dim, "mha: input dim");
        assert_eq!(mask.len(), x.rows(), "mha: mask length");
        let q = self.wq.forward(x);
        let k = self.wk.forward(x);
        let v = self.wv.forward(x);
        let dh = self.cfg.mha_hidden / self.cfg.num_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.cfg.num_heads);
        for h in 0..self.cfg.num_heads {
            let qh = q.narrow_cols(h * dh, dh);
            let kh = k.narrow_cols(h * dh, dh);
            let vh = v.narrow_cols(h * dh, dh);
            let scores = qh.matmul(&kh.transpose()).scale(scale);
            let attn = scores.softmax_rows_masked(mask);
            heads.push(attn.matmul(&vh));
        }
        let out = self.wo.forward(&concat_cols(&heads)).dropout(self.cfg.dropout, mode);
        zero_masked_rows(&self.ln1.forward(&x.add(&out)), mask)
    }

    /// Position-wise feed-forward sub-layer: conv (kernel 9, 'same'
    /// padding) → ReLU → conv (kernel 1), then dropout, residual, and
    /// layer norm. Padded rows are zeroed on output, as in [`Self::mha`].
    pub fn ffn_conv(&self, x: &Tensor<E>, mask: &[bool], mode: &mut Mode) -> Tensor<E> {
        assert_eq!(x.cols(), self.cfg.model_dim, "ffn: input dim");
        assert_eq!(mask.len(), x.rows(), "ffn: mask length");
        let (k1, k2) = self.cfg.ffn_kernel_sizes;
        let h = conv1d(x, &self.conv1, k1).relu();
        let out = conv1d(&h, &self.conv2, k2).dropout(self.cfg.dropout, mode);
        zero_masked_rows(&self.ln2.forward(&x.add(&out)), mask)
    }

    pub fn forward(&self, x: &Tensor<E>, mask: &[bool], mode: &mut Mode) -> Tensor<E> {
        let h = self.mha(x, mask, mode);
        self.ffn_conv(&h, mask, mode)
    }

    pub fn register(&self, params: &mut ParamSet<E>, prefix: &str) {
        self.wq.register(params, &format!("{prefix}.wq"));
        self.wk.register(params, &format!("{prefix}.wk"));
        self.wv.register(params, &format!("{prefix}.wv"));
        self.wo.register(params, &format!("{prefix}.wo"));
        self.conv1.register(params, &format!("{prefix}.conv1"));
        self.conv2.register(params, &format!("{prefix}.conv2"));
        self.ln1.register(params, &format!("{prefix}.ln1"));
        self.ln2.register(params, &format!("{prefix}.ln2"));
    }
}

/// A 1-D convolution over the sequence dimension, expressed as im2col plus
/// one matrix multiply (kernel 1 degenerates to the plain linear map).
fn conv1d<E: Real>(x: &Tensor<E>, lin: &Linear<E>, kernel: usize) -> Tensor<E> {
    if kernel == 1 {
        lin.forward(x)
    } else {
        lin.forward(&x.im2col(kernel))
    }
}

/// Multiplies masked rows by zero (no-op when nothing is masked).
fn zero_masked_rows<E: Real>(x: &Tensor<E>, mask: &[bool]) -> Tensor<E> {
    if mask.iter().all(|&m| !m) {
        return x.clone();
    }
    let (l, d) = (x.rows(), x.cols());
    let mut keep = vec![E::ONE; l * d];
    for (t, &m) in mask.iter().enumerate() {
        if m {
            keep[t * d..(t + 1) * d].fill(E::ZERO);
        }
    }
    x.mul(&Tensor::constant(vec![l, d], keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn pe_position_zero_alternates_zero_one() {
        let pe = sinusoidal_pe::<f64>(4, 6).unwrap();
        assert_eq!(&pe.to_vec()[0..6], &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn pe_entries_bounded() {
        let pe = sinusoidal_pe::<f64>(50, 16).unwrap();
        assert!(pe.to_vec().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn pe_prefix_agrees_with_shorter_encoding() {
        let long = sinusoidal_pe::<f64>(20, 8).unwrap();
        let short = sinusoidal_pe::<f64>(10, 8).unwrap();
        assert_eq!(&long.to_vec()[..10 * 8], &short.to_vec()[..]);
    }

    #[test]
    fn pe_rejects_odd_dim() {
        assert!(matches!(sinusoidal_pe::<f64>(4, 7), Err(NnError::OddPeDim(7))));
    }

    #[test]
    fn transformer_layer_preserves_shape_for_all_short_lengths() {
        let cfg = TransformerLayerConfig {
            model_dim: 8,
            mha_hidden: 8,
            num_heads: 2,
            ffn_hidden: 16,
            ..TransformerLayerConfig::default()
        };
        let mut r = rng();
        let layer = TransformerLayer::<f64>::new(&mut r, &cfg).unwrap();
        for l in 1..=16 {
            let x = Tensor::param(vec![l, 8], (0..l * 8).map(|i| (i as f64).sin()).collect());
            let y = layer.forward(&x, &vec![false; l], &mut Mode::Eval);
            assert_eq!(y.shape(), &[l, 8]);
        }
    }

    #[test]
    fn config_rejects_bad_shapes() {
        let mut cfg = TransformerLayerConfig::default();
        cfg.num_heads = 3; // 128 % 3 != 0
        assert!(cfg.validate().is_err());
        let mut cfg = TransformerLayerConfig::default();
        cfg.ffn_kernel_sizes = (8, 1);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn kernel_one_identity_weights_feed_residual_with_2x() {
        // conv1 = conv2 = identity with kernel 1 and ffn_hidden = model_dim:
        // positive inputs pass ReLU unchanged, so the FFN output before
        // normalization is x + x. Layer norm then standardizes rows, which
        // for gamma=1, beta=0 equals layer_norm(x) up to the variance eps
        // (which does not scale with the row).
        let cfg = TransformerLayerConfig {
            model_dim: 4,
            mha_hidden: 4,
            num_heads: 1,
            ffn_hidden: 4,
            ffn_kernel_sizes: (1, 1),
            dropout: 0.0,
        };
        let mut r = rng();
        let mut layer = TransformerLayer::<f64>::new(&mut r, &cfg).unwrap();
        let eye = Tensor::param(
            vec![4, 4],
            (0..16).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect(),
        );
        layer.conv1 = Linear { w: eye.clone(), b: None };
        layer.conv2 = Linear { w: eye, b: None };
        let x = Tensor::param(vec![2, 4], vec![1.0, 2.0, 3.0, 4.0, 0.5, 1.0, 1.5, 2.0]);
        let y = layer.ffn_conv(&x, &[false; 2], &mut Mode::Eval);
        let expected = x.layer_norm(
            &Tensor::param(vec![4], vec![1.0; 4]),
            &Tensor::param(vec![4], vec![0.0; 4]),
        );
        for (a, b) in y.to_vec().iter().zip(expected.to_vec()) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn masked_key_leaves_other_queries_untouched() {
        let cfg = TransformerLayerConfig {
            model_dim: 6,
            mha_hidden: 6,
            num_heads: 2,
            ffn_hidden: 12,
            dropout: 0.0,
            ..TransformerLayerConfig::default()
        };
        let mut r = rng();
        let layer = TransformerLayer::<f64>::new(&mut r, &cfg).unwrap();
        let base: Vec<f64> = (0..4 * 6).map(|i| (i as f64 * 0.37).cos()).collect();
        let mut poked = base.clone();
        for v in &mut poked[2 * 6..3 * 6] {
            *v += 5.0; // perturb position 2 only
        }
        let mask = [false, false, true, false];
        let ya = layer.mha(&Tensor::param(vec![4, 6], base), &mask, &mut Mode::Eval);
        let yb = layer.mha(&Tensor::param(vec![4, 6], poked), &mask, &mut Mode::Eval);
        let (da, db) = (ya.to_vec(), yb.to_vec());
        for t in [0usize, 1, 3] {
            for j in 0..6 {
                let (a, b) = (da[t * 6 + j], db[t * 6 + j]);
                assert!((a - b).abs() < 1e-12, "query {t} changed: {a} vs {b}");
            }
        }
    }
}
