//! Run one hyper-convolution: the filters are predicted per input sample
//! by an MLP over pooled features, so two different inputs in the same
//! batch are convolved with two different kernels.

use hyperconv_kit::hyper::{hyperconv_forward, HyperConvConfig, HyperConvParams};
use hyperconv_kit::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hyperconv_kit::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut cfg = HyperConvConfig::new(3, 3, 4);
    cfg.n_hid = 16;
    let params = HyperConvParams::<f32>::init(&mut rng, &cfg)?;

    // batch of two distinct images
    let x = Tensor::rand_uniform(&mut rng, &[2, 3, 16, 16]);
    let y = hyperconv_forward(&params, &cfg, &x, &x)?;
    println!("input  {:?}", x.shape());
    println!("output {:?}", y.shape());

    // swap sample order; per-sample filters must follow their samples
    let a = x.slice(0, 0, 1)?;
    let b = x.slice(0, 1, 2)?;
    let swapped = Tensor::concat(&[&b, &a], 0)?;
    let y_swapped = hyperconv_forward(&params, &cfg, &swapped, &swapped)?;
    let diff = y.slice(0, 0, 1)?.max_abs_diff(&y_swapped.slice(0, 1, 2)?)?;
    println!("batch equivariance residual: {diff:e}");
    Ok(())
}
