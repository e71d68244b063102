//! Finite-difference verification of every backward pass, op by op and
//! composed. Everything runs in f64, where central differences at
//! eps = 1e-5 are trustworthy to well below the 1e-5 acceptance bar.

use espressivo_nn::{
    concat_cols, gather_rows, grad_check, Embedding, LayerNorm, Linear, Mode, ParamSet, Tensor,
    TransformerLayer, TransformerLayerConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const BAR: f64 = 1e-5;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_param(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::param(shape, data)
}

#[test]
fn elementwise_ops_check_out() {
    let mut r = rng(1);
    let a = random_param(&mut r, vec![3, 4]);
    let b = random_param(&mut r, vec![3, 4]);
    let mut params = ParamSet::new();
    params.register("a".into(), a.clone());
    params.register("b".into(), b.clone());
    let err = grad_check(
        || a.add(&b).mul(&a).sub(&b.scale(0.3)).tanh().relu().mean(),
        &params,
        EPS,
        24,
    )
    .unwrap();
    assert!(err < BAR, "elementwise chain: {err}");
}

#[test]
fn matmul_and_bias_check_out() {
    let mut r = rng(2);
    let x = random_param(&mut r, vec![5, 3]);
    let w = random_param(&mut r, vec![3, 4]);
    let b = random_param(&mut r, vec![4]);
    let mut params = ParamSet::new();
    params.register("x".into(), x.clone());
    params.register("w".into(), w.clone());
    params.register("b".into(), b.clone());
    let err = grad_check(|| x.matmul(&w).add_row(&b).sum(), &params, EPS, 32).unwrap();
    assert!(err < BAR, "matmul+bias: {err}");
}

#[test]
fn transpose_narrow_concat_check_out() {
    let mut r = rng(3);
    let x = random_param(&mut r, vec![4, 6]);
    let mut params = ParamSet::new();
    params.register("x".into(), x.clone());
    let err = grad_check(
        || {
            let left = x.narrow_cols(0, 3);
            let right = x.narrow_cols(3, 3);
            concat_cols(&[right, left]).transpose().mul(&Tensor::constant(
                vec![6, 4],
                (0..24).map(|i| 0.1 * i as f64).collect(),
            )).sum()
        },
        &params,
        EPS,
        24,
    )
    .unwrap();
    assert!(err < BAR, "transpose/narrow/concat: {err}");
}

#[test]
fn masked_softmax_checks_out() {
    let mut r = rng(4);
    let x = random_param(&mut r, vec![5, 5]);
    let weights = Tensor::constant(vec![5, 5], (0..25).map(|i| ((i * 7) % 11) as f64 * 0.1).collect());
    let mask = [false, true, false, false, true];
    let mut params = ParamSet::new();
    params.register("x".into(), x.clone());
    let err = grad_check(
        || x.softmax_rows_masked(&mask).mul(&weights).sum(),
        &params,
        EPS,
        25,
    )
    .unwrap();
    assert!(err < BAR, "masked softmax: {err}");
}

#[test]
fn layer_norm_checks_out() {
    let mut r = rng(5);
    let x = random_param(&mut r, vec![4, 6]);
    let ln = LayerNorm::<f64>::new(6);
    let probe = Tensor::constant(vec![4, 6], (0..24).map(|i| (i as f64 * 0.7).sin()).collect());
    let mut params = ParamSet::new();
    params.register("x".into(), x.clone());
    ln.register(&mut params, "ln");
    let err = grad_check(|| ln.forward(&x).mul(&probe).sum(), &params, EPS, 24).unwrap();
    assert!(err < BAR, "layer norm: {err}");
}

#[test]
fn im2col_convolution_checks_out() {
    let mut r = rng(6);
    let x = random_param(&mut r, vec![7, 3]);
    let conv = Linear::<f64>::new(&mut r, 3 * 3, 5);
    let mut params = ParamSet::new();
    params.register("x".into(), x.clone());
    conv.register(&mut params, "conv");
    let err = grad_check(|| conv.forward(&x.im2col(3)).relu().mean(), &params, EPS, 32).unwrap();
    assert!(err < BAR, "im2col conv: {err}");
}

#[test]
fn embedding_gather_checks_out() {
    let mut r = rng(7);
    let emb = Embedding::<f64>::new(&mut r, 10, 4);
    // Repeated indices exercise the scatter-add path.
    let indices = [3usize, 1, 3, 7, 1];
    let probe = Tensor::constant(vec![5, 4], (0..20).map(|i| (i as f64).cos()).collect());
    let mut params = ParamSet::new();
    emb.register(&mut params, "emb");
    let err = grad_check(
        || gather_rows(&emb.table, &indices).mul(&probe).sum(),
        &params,
        EPS,
        40,
    )
    .unwrap();
    assert!(err < BAR, "embedding gather: {err}");
}

#[test]
fn two_layer_mlp_with_tanh_checks_out() {
    let mut r = rng(8);
    let x = Tensor::constant(vec![6, 4], (0..24).map(|_| r.gen_range(-1.0..1.0)).collect());
    let target = Tensor::constant(vec![6, 2], (0..12).map(|_| r.gen_range(-1.0..1.0)).collect());
    let l1 = Linear::<f64>::new(&mut r, 4, 8);
    let l2 = Linear::<f64>::new(&mut r, 8, 2);
    let mut params = ParamSet::new();
    l1.register(&mut params, "l1");
    l2.register(&mut params, "l2");
    let err = grad_check(
        || l2.forward(&l1.forward(&x).tanh()).mse(&target),
        &params,
        EPS,
        32,
    )
    .unwrap();
    assert!(err < BAR, "2-layer MLP: {err}");
}

#[test]
fn attention_sublayer_checks_out() {
    let cfg = TransformerLayerConfig {
        model_dim: 6,
        mha_hidden: 6,
        num_heads: 2,
        ffn_hidden: 12,
        ffn_kernel_sizes: (3, 1),
        dropout: 0.0,
    };
    let mut r = rng(9);
    let layer = TransformerLayer::<f64>::new(&mut r, &cfg).unwrap();
    let x = random_param(&mut r, vec![5, 6]);
    let mask = [false, false, true, false, false];
    let probe = Tensor::constant(vec![5, 6], (0..30).map(|i| (i as f64 * 0.3).sin()).collect());
    let mut params = ParamSet::new();
    params.register("x".into(), x.clone());
    layer.register(&mut params, "layer");
    let err = grad_check(
        || layer.mha(&x, &mask, &mut Mode::Eval).mul(&probe).sum(),
        &params,
        EPS,
        16,
    )
    .unwrap();
    assert!(err < BAR, "attention sublayer: {err}");
}

#[test]
fn ffn_sublayer_checks_out() {
    let cfg = TransformerLayerConfig {
        model_dim: 6,
        mha_hidden: 6,
        num_heads: 2,
        ffn_hidden: 12,
        ffn_kernel_sizes: (9, 1),
        dropout: 0.0,
    };
    let mut r = rng(10);
    let layer = TransformerLayer::<f64>::new(&mut r, &cfg).unwrap();
    let x = random_param(&mut r, vec![5, 6]);
    let probe = Tensor::constant(vec![5, 6], (0..30).map(|i| (i as f64 * 0.41).cos()).collect());
    let mut params = ParamSet::new();
    params.register("x".into(), x.clone());
    layer.register(&mut params, "layer");
    let err = grad_check(
        || layer.ffn_conv(&x, &[false; 5], &mut Mode::Eval).mul(&probe).sum(),
        &params,
        EPS,
        16,
    )
    .unwrap();
    assert!(err < BAR, "ffn sublayer: {err}");
}

#[test]
fn stacked_transformer_layers_check_out() {
    let cfg = TransformerLayerConfig {
        model_dim: 4,
        mha_hidden: 4,
        num_heads: 2,
        ffn_hidden: 8,
        ffn_kernel_sizes: (3, 1),
        dropout: 0.0,
    };
    let mut r = rng(11);
    let a = TransformerLayer::<f64>::new(&mut r, &cfg).unwrap();
    let b = TransformerLayer::<f64>::new(&mut r, &cfg).unwrap();
    let head = Linear::<f64>::new(&mut r, 4, 2);
    let x = random_param(&mut r, vec![6, 4]);
    let target = Tensor::constant(vec![6, 2], (0..12).map(|i| (i as f64 * 0.9).sin()).collect());
    let mask = [false; 6];
    let mut params = ParamSet::new();
    params.register("x".into(), x.clone());
    a.register(&mut params, "a");
    b.register(&mut params, "b");
    head.register(&mut params, "head");
    let err = grad_check(
        || {
            let h = a.forward(&x, &mask, &mut Mode::Eval);
            let h = b.forward(&h, &mask, &mut Mode::Eval);
            head.forward(&h).mse(&target)
        },
        &params,
        EPS,
        8,
    )
    .unwrap();
    assert!(err < BAR, "stacked layers: {err}");
}
