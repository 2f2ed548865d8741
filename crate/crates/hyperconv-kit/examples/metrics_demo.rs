//! SSIM / MS-SSIM under increasing noise.

use hyperconv_kit::data::procedural_texture;
use hyperconv_kit::metrics::{ms_ssim, psnr, ssim, MetricConfig};
use hyperconv_kit::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hyperconv_kit::Result<()> {
    let clean = procedural_texture(3, 192)?.reshape(&[1, 3, 192, 192])?;
    let cfg = MetricConfig::default(); // full 5-scale MS-SSIM needs >= 176 px

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for sigma in [0.0, 0.02, 0.05, 0.1] {
        let noise = Tensor::<f32>::randn(&mut rng, clean.shape(), sigma);
        let noisy = clean.add(&noise)?.clamp(0.0, 1.0);
        println!(
            "sigma {sigma:<5} psnr {:>7.2}  ssim {:.4}  ms_ssim {:.4}",
            psnr(&noisy, &clean, 1.0)?,
            ssim(&noisy, &clean, &cfg)?.item()?,
            ms_ssim(&noisy, &clean, &cfg)?.item()?,
        );
    }
    Ok(())
}
