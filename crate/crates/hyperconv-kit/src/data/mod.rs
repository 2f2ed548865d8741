//! Bayer packing, synthetic degradation pairs, procedural textures, and
//! the paired-directory dataset loader.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

mod io;

pub use io::{load_pair_dir, read_image, write_dataset, write_image, DatasetManifest, ImageFormat};

/// One training pair: packed RAW input and the clean RGB target at twice
/// the spatial resolution.
#[derive(Debug, Clone)]
pub struct PairedSample {
    /// (4, H, W) in [0,1]
    pub raw: Tensor<f32>,
    /// (3, 2H, 2W) in [0,1]
    pub target: Tensor<f32>,
    pub id: String,
}

impl PairedSample {
    pub fn validate(&self) -> Result<()> {
        let (r, t) = (self.raw.shape(), self.target.shape());
        if r.len() != 3 || t.len() != 3 || r[0] != 4 || t[0] != 3
            || t[1] != 2 * r[1] || t[2] != 2 * r[2]
        {
            return Err(Error::invalid(
                "PairedSample",
                format!("raw {:?} and target {:?} are not a 2x pair", r, t),
            ));
        }
        Ok(())
    }
}

/// Synthetic RAW degradation: white-balance gains and gamma are inverted
/// out of the clean image, then seeded heteroscedastic sensor noise with
/// variance `sigma^2 + shot_gain * signal` is added.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DegradationParams {
    /// read-noise standard deviation
    pub sigma: f64,
    /// shot-noise gain (variance per unit signal)
    pub shot_gain: f64,
    /// per-RGB-channel gains; both green phases share `gains[1]`
    pub gains: [f64; 3],
    /// display gamma of the clean target; inverted during RAW synthesis
    pub gamma: f64,
    pub seed: u64,
}

impl DegradationParams {
    /// Identity degradation: no noise, unit gains, linear gamma.
    pub fn clean(seed: u64) -> Self {
        DegradationParams { sigma: 0.0, shot_gain: 0.0, gains: [1.0; 3], gamma: 1.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma < 0.0 || self.shot_gain < 0.0 || self.gamma <= 0.0 {
            return Err(Error::invalid(
                "DegradationParams",
                "sigma/shot_gain must be >= 0 and gamma > 0",
            ));
        }
        if self.gains.iter().any(|&g| g <= 0.0) {
            return Err(Error::invalid("DegradationParams", "gains must be > 0"));
        }
        Ok(())
    }
}

/// The fixed RGGB phase layout: RGB channel index of each 2x2 position.
const PHASE_RGB: [usize; 4] = [0, 1, 1, 2]; // R, G1, G2, B

/// Packs a (1, 2H, 2W) Bayer mosaic into 4 half-resolution channels in
/// RGGB order: R=(0,0), G1=(0,1), G2=(1,0), B=(1,1).
pub fn pack_bayer(mosaic: &Tensor<f32>) -> Result<Tensor<f32>> {
    let s = mosaic.shape();
    if s.len() != 3 || s[0] != 1 || s[1] % 2 != 0 || s[2] % 2 != 0 {
        return Err(Error::invalid(
            "pack_bayer",
            format!("expected (1, 2H, 2W) with even extents, got {:?}", s),
        ));
    }
    let (h, w) = (s[1] / 2, s[2] / 2);
    let src = mosaic.data();
    let mut out = vec![0.0f32; 4 * h * w];
    for (c, (py, px)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                out[c * h * w + y * w + x] = src[(2 * y + py) * 2 * w + 2 * x + px];
            }
        }
    }
    Tensor::from_vec(out, &[4, h, w])
}

/// Inverse of `pack_bayer`.
pub fn unpack_bayer(packed: &Tensor<f32>) -> Result<Tensor<f32>> {
    let s = packed.shape();
    if s.len() != 3 || s[0] != 4 {
        return Err(Error::invalid(
            "unpack_bayer",
            format!("expected (4, H, W), got {:?}", s),
        ));
    }
    let (h, w) = (s[1], s[2]);
    let src = packed.data();
    let mut out = vec![0.0f32; 4 * h * w];
    for (c, (py, px)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                out[(2 * y + py) * 2 * w + 2 * x + px] = src[c * h * w + y * w + x];
            }
        }
    }
    Tensor::from_vec(out, &[1, 2 * h, 2 * w])
}

/// Derives the per-sample RNG seed from the global seed and the sample id
/// (FNV-1a over the id, then a golden-ratio mix).
pub fn sample_seed(global: u64, id: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in id.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    global ^ h.wrapping_mul(0x9E3779B97F4A7C15)
}

/// Builds a degraded-RAW / clean-RGB pair from a clean (3, 2H, 2W) image:
/// Bayer-phase sampling at half resolution, inverse gamma, inverse
/// per-channel gains, seeded heteroscedastic noise, clamp to [0,1].
pub fn synth_pair(clean: &Tensor<f32>, p: &DegradationParams, id: &str) -> Result<PairedSample> {
    p.validate()?;
    let s = clean.shape();
    if s.len() != 3 || s[0] != 3 || s[1] % 2 != 0 || s[2] % 2 != 0 {
        return Err(Error::invalid(
            "synth_pair",
            format!("expected clean (3, 2H, 2W) with even extents, got {:?}", s),
        ));
    }
    let (h, w) = (s[1] / 2, s[2] / 2);
    let src = clean.data();
    let plane = s[1] * s[2];
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(p.seed, id));
    let mut raw = vec![0.0f32; 4 * h * w];
    for (c, (py, px)) in [(0usize, 0usize), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
        let rgb = PHASE_RGB[c];
        for y in 0..h {
            for x in 0..w {
                let v = src[rgb * plane + (2 * y + py) * s[2] + 2 * x + px] as f64;
                // undo the display encoding, then the white balance
                let lin = v.powf(p.gamma) / p.gains[rgb];
                let std = (p.sigma * p.sigma + p.shot_gain * lin.max(0.0)).sqrt();
                let n: f64 = rng.sample(StandardNormal);
                raw[c * h * w + y * w + x] = (lin + std * n).clamp(0.0, 1.0) as f32;
            }
        }
    }
    let sample = PairedSample {
        raw: Tensor::from_vec(raw, &[4, h, w])?,
        target: clean.clone(),
        id: id.to_string(),
    };
    sample.validate()?;
    Ok(sample)
}

/// Seeded clean RGB test image: smooth gradients plus sinusoids plus a
/// few random soft rectangles, per channel, in [0,1].
pub fn procedural_texture(seed: u64, size: usize) -> Result<Tensor<f32>> {
    if size == 0 {
        return Err(Error::invalid("procedural_texture", "size must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0f32; 3 * size * size];
    for c in 0..3 {
        let (gx, gy): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let freq = rng.gen_range(2.0..12.0);
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let amp = rng.gen_range(0.1..0.35);
        let rects: Vec<(f64, f64, f64, f64, f64)> = (0..rng.gen_range(2..6))
            .map(|_| {
                (
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.05..0.4),
                    rng.gen_range(0.05..0.4),
                    rng.gen_range(-0.3..0.3),
                )
            })
            .collect();
        for y in 0..size {
            for x in 0..size {
                let (u, v) = (x as f64 / size as f64, y as f64 / size as f64);
                let mut val = 0.5 + 0.25 * (gx * (u - 0.5) + gy * (v - 0.5));
                val += amp * (freq * (u + v) + phase).sin() * 0.5;
                for &(rx, ry, rw, rh, delta) in &rects {
                    if u >= rx && u < rx + rw && v >= ry && v < ry + rh {
                        val += delta;
                    }
                }
                out[c * size * size + y * size + x] = val.clamp(0.0, 1.0) as f32;
            }
        }
    }
    Tensor::from_vec(out, &[3, size, size])
}
