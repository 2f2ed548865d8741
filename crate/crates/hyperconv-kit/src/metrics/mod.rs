//! Image fidelity metrics (MSE, PSNR, SSIM, MS-SSIM) and the training
//! loss `MSE + (1 - MS-SSIM)`. SSIM variants are differentiable.

use crate::error::{Error, Result};
use crate::image::{avg_pool2d, conv2d, Padding};
use crate::tensor::{Scalar, Tensor};


/// SSIM/MS-SSIM configuration. Defaults: 11-tap Gaussian window with
/// sigma 1.5, K1 = 0.01, K2 = 0.03 on dynamic range 1, and the standard
/// five-scale weights.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricConfig {
    pub window_size: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
    /// Per-scale weights; the length sets the scale count.
    pub weights: Vec<f64>,
}

/// The published five-scale weights. They sum to 1.0001 as printed, so
/// the default config renormalizes them by their sum.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

impl Default for MetricConfig {
    fn default() -> Self {
        let total: f64 = MS_SSIM_WEIGHTS.iter().sum();
        MetricConfig {
            window_size: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
            weights: MS_SSIM_WEIGHTS.iter().map(|w| w / total).collect(),
        }
    }
}

impl MetricConfig {
    /// Smallest spatial side MS-SSIM accepts at this scale count.
    pub fn min_side(&self) -> usize {
        self.window_size << (self.weights.len() - 1)
    }

    /// Reduced-scale variant for small images: keeps the longest weight
    /// prefix whose coarsest scale still fits an image of the given
    /// extent, renormalized to sum 1.
    pub fn for_size(h: usize, w: usize) -> Result<Self> {
        let base = MetricConfig::default();
        let side = h.min(w);
        let mut scales = 0;
        while scales < base.weights.len() && side >> scales >= base.window_size {
            scales += 1;
        }
        if scales == 0 {
            return Err(Error::invalid(
                "MetricConfig::for_size",
                format!("image {h}x{w} smaller than the {} window", base.window_size),
            ));
        }
        let total: f64 = base.weights[..scales].iter().sum();
        Ok(MetricConfig {
            weights: base.weights[..scales].iter().map(|w| w / total).collect(),
            ..base
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size == 0 || self.weights.is_empty() {
            return Err(Error::invalid("MetricConfig", "empty window or weights"));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(
                "MetricConfig",
                format!("weights sum to {sum}, expected 1"),
            ));
        }
        Ok(())
    }

    fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    /// Normalized separable Gaussian window as a flat vector of k*k taps.
    pub fn window(&self) -> Vec<f64> {
        let k = self.window_size;
        let c = (k - 1) as f64 / 2.0;
        let g: Vec<f64> = (0..k)
            .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let norm: f64 = g.iter().sum();
        let mut out = Vec::with_capacity(k * k);
        for gy in &g {
            for gx in &g {
                out.push(gy * gx / (norm * norm));
            }
        }
        out
    }
}

fn check_pair<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, op: &'static str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

/// Mean squared difference as a differentiable scalar.
pub fn mse<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    check_pair(a, b, "mse")?;
    let d = a.sub(b)?;
    Ok(d.mul(&d)?.mean_all())
}

/// Peak signal-to-noise ratio in dB; identical inputs report +infinity.
pub fn psnr<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, max: f64) -> Result<f64> {
    let e = mse(a, b)?.item()?.as_f64();
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max * max / e).log10())
}

/// Gaussian-windowed local statistics shared by ssim and ms_ssim:
/// the full SSIM map and the contrast-structure map, both over valid
/// window positions only.
fn ssim_maps<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    cfg: &MetricConfig,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let s = a.shape();
    if s.len() != 4 {
        return Err(Error::invalid(
            "ssim",
            format!("expected NCHW images, got shape {:?}", s),
        ));
    }
    let (c, h, w) = (s[1], s[2], s[3]);
    let k = cfg.window_size;
    if h < k || w < k {
        return Err(Error::invalid(
            "ssim",
            format!("image {h}x{w} smaller than the {k}x{k} window"),
        ));
    }
    let taps: Vec<T> = cfg
        .window()
        .iter()
        .cycle()
        .take(c * k * k)
        .map(|&v| T::from_f64(v))
        .collect();
    let win = Tensor::from_vec(taps, &[c, 1, k, k])?;
    let filt = |x: &Tensor<T>| conv2d(x, &win, c, Padding::Valid, 1);

    let mu_a = filt(a)?;
    let mu_b = filt(b)?;
    let mu_aa = mu_a.mul(&mu_a)?;
    let mu_bb = mu_b.mul(&mu_b)?;
    let mu_ab = mu_a.mul(&mu_b)?;
    let var_a = filt(&a.mul(a)?)?.sub(&mu_aa)?;
    let var_b = filt(&b.mul(b)?)?.sub(&mu_bb)?;
    let cov = filt(&a.mul(b)?)?.sub(&mu_ab)?;

    let c1 = T::from_f64(cfg.c1());
    let c2 = T::from_f64(cfg.c2());
    let two = T::from_f64(2.0);
    let lum = mu_ab.mul_scalar(two).add_scalar(c1).div(&mu_aa.add(&mu_bb)?.add_scalar(c1))?;
    let cs = cov.mul_scalar(two).add_scalar(c2).div(&var_a.add(&var_b)?.add_scalar(c2))?;
    Ok((lum.mul(&cs)?, cs))
}

/// Single-scale SSIM averaged over channels and valid window positions.
pub fn ssim<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, cfg: &MetricConfig) -> Result<Tensor<T>> {
    cfg.validate()?;
    check_pair(a, b, "ssim")?;
    let (full, _) = ssim_maps(a, b, cfg)?;
    Ok(full.mean_all())
}

/// Multi-scale SSIM: contrast-structure terms at every scale plus the
/// full SSIM at the coarsest scale, combined as a weighted geometric
/// mean with 2x average pooling between scales. Per-scale means are
/// clamped to a small positive floor before exponentiation so the
/// geometric mean stays defined for adversarial inputs.
pub fn ms_ssim<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, cfg: &MetricConfig) -> Result<Tensor<T>> {
    cfg.validate()?;
    check_pair(a, b, "ms_ssim")?;
    let s = a.shape();
    if s.len() != 4 || s[2] < cfg.min_side() || s[3] < cfg.min_side() {
        return Err(Error::invalid(
            "ms_ssim",
            format!(
                "input {:?} too small for {} scales; needs at least {px}x{px}",
                s,
                cfg.weights.len(),
                px = cfg.min_side()
            ),
        ));
    }
    let floor = T::from_f64(1e-6);
    let mut a = a.clone();
    let mut b = b.clone();
    let mut acc: Option<Tensor<T>> = None;
    let last = cfg.weights.len() - 1;
    for (i, &wt) in cfg.weights.iter().enumerate() {
        let (full, cs) = ssim_maps(&a, &b, cfg)?;
        let term = if i == last { full } else { cs };
        let term = term.mean_all().clamp(floor, T::one()).powf(T::from_f64(wt));
        acc = Some(match acc {
            None => term,
            Some(p) => p.mul(&term)?,
        });
        if i != last {
            a = avg_pool2d(&a, 2, 2)?;
            b = avg_pool2d(&b, 2, 2)?;
        }
    }
    Ok(acc.expect("weights validated non-empty"))
}

/// The training objective `mse + (1 - ms_ssim)`, differentiable.
pub fn training_loss<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    cfg: &MetricConfig,
) -> Result<Tensor<T>> {
    let e = mse(pred, target)?;
    let m = ms_ssim(pred, target, cfg)?;
    e.add(&m.neg().add_scalar(T::one()))
}
