//! Train a small model on synthetic pairs, checkpoint it, and verify the
//! reloaded model reproduces the forward pass bit-exactly.

use hyperconv_kit::arch::{build_hyper_unet, HyperUNetConfig, Model};
use hyperconv_kit::data::{procedural_texture, synth_pair, DegradationParams};
use hyperconv_kit::train::{evaluate, load_checkpoint, save_checkpoint, train, OptimConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hyperconv_kit::Result<()> {
    let data: Vec<_> = (0..8)
        .map(|i| {
            let clean = procedural_texture(i, 64)?;
            let mut deg = DegradationParams::clean(0);
            deg.sigma = 0.02;
            synth_pair(&clean, &deg, &format!("{i:02}"))
        })
        .collect::<hyperconv_kit::Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = build_hyper_unet::<f32>(&HyperUNetConfig::new(4, 4, 16), &mut rng)?;

    // lr well above the full-scale default: tiny model, tiny images
    let cfg = OptimConfig { lr: 1e-3, batch: 4, epochs: 10, ..OptimConfig::default() };
    let report = train(&mut model, &data, &cfg)?;
    let first = report.history.first().unwrap();
    let last = report.history.last().unwrap();
    println!("step {:>3}: loss {:.4}  mse {:.5}", first.step, first.loss, first.mse);
    println!("step {:>3}: loss {:.4}  mse {:.5}", last.step, last.loss, last.mse);

    let m = evaluate(&model, &data)?;
    println!("train-set eval: mse {:.5} ms_ssim {:.4}", m.mse, m.ms_ssim);

    let path = std::env::temp_dir().join("hckit_example.ckpt");
    save_checkpoint(&model, &path)?;
    let reloaded = load_checkpoint::<f32>(&path)?;
    let x = hyperconv_kit::tensor::Tensor::rand_uniform(&mut rng, &[1, 4, 32, 32]);
    let diff = model.forward(&x)?.max_abs_diff(&reloaded.forward(&x)?)?;
    println!("checkpoint forward residual: {diff:e}");
    Ok(())
}
