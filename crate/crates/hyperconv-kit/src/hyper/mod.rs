//! Hyper-network convolution layers: per-sample filter banks predicted by
//! an MLP from globally pooled features, L1-normalized, then applied as a
//! grouped convolution. Includes the drop-in variant that derives the
//! filter input from an internal embedding CNN.

use crate::error::{Error, Result};
use crate::image::{
    conv2d, global_avg_pool, global_max_pool, leaky_relu, pad2d, relu, PadMode, Padding,
};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;


/// Global pooling applied to the filter-path input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PoolKind {
    Max,
    Avg,
}

/// Static shape/behaviour description of one hyper-convolution layer.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct HyperConvConfig {
    /// Channels of the tensor being convolved (C_I).
    pub n_in_forward: usize,
    /// Channels of the filter-path input after pooling (C_F).
    pub n_in_hyper: usize,
    /// Output channels (C_O).
    pub n_out: usize,
    /// Spatial filter extent; must be odd.
    pub f_size: usize,
    /// Hidden width of the filter-predicting MLP.
    pub n_hid: usize,
    pub use_bias: bool,
    pub use_gain: bool,
    pub pool: PoolKind,
    /// Padding of the forward convolution. Reflection by default; periodic
    /// makes the layer translation-equivariant.
    pub padding: Padding,
}

impl HyperConvConfig {
    pub fn new(n_in_forward: usize, n_in_hyper: usize, n_out: usize) -> Self {
        HyperConvConfig {
            n_in_forward,
            n_in_hyper,
            n_out,
            f_size: 3,
            n_hid: 256,
            use_bias: false,
            use_gain: false,
            pool: PoolKind::Max,
            padding: Padding::SameReflect,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_in_forward == 0 || self.n_in_hyper == 0 || self.n_out == 0 || self.n_hid == 0 {
            return Err(Error::invalid("HyperConvConfig", "channel counts must be >= 1"));
        }
        if self.f_size == 0 || self.f_size % 2 == 0 {
            return Err(Error::invalid(
                "HyperConvConfig",
                format!("f_size must be odd, got {}", self.f_size),
            ));
        }
        Ok(())
    }

    /// Flattened size of one predicted filter bank.
    pub fn filter_numel(&self) -> usize {
        self.f_size * self.f_size * self.n_in_forward * self.n_out
    }
}

/// One affine map `y = x W + b` over row vectors.
#[derive(Debug, Clone)]
pub struct Affine<T: Scalar> {
    /// (in, out)
    pub w: Tensor<T>,
    /// (1, out)
    pub b: Tensor<T>,
}

impl<T: Scalar> Affine<T> {
    /// Weights ~ N(0, 2/fan_in), biases zero.
    pub fn init(rng: &mut impl Rng, n_in: usize, n_out: usize) -> Self {
        let sigma = (2.0 / n_in as f64).sqrt();
        Affine {
            w: Tensor::randn(rng, &[n_in, n_out], sigma),
            b: Tensor::zeros(&[1, n_out]),
        }
    }

    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Affine {
            w: Tensor::zeros(&[n_in, n_out]),
            b: Tensor::zeros(&[1, n_out]),
        }
    }

    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.matmul(&self.w)?.add(&self.b)
    }
}

/// Learned state of a hyper-convolution layer.
#[derive(Debug, Clone)]
pub struct HyperConvParams<T: Scalar> {
    pub l1: Affine<T>,
    pub l2: Affine<T>,
    pub l3: Affine<T>,
    /// (1, C_O, C_I, f, f); the constant filter added after normalization.
    pub const_filter: Tensor<T>,
    pub bias_head: Option<Affine<T>>,
    pub gain_head: Option<Affine<T>>,
    /// Leaky rectifier inside the MLP (used by the embed variant).
    pub leaky_mlp: bool,
}

impl<T: Scalar> HyperConvParams<T> {
    pub fn init(rng: &mut impl Rng, cfg: &HyperConvConfig) -> Result<Self> {
        cfg.validate()?;
        // extra factor 1/2 on top of the 2/fan_in variance
        let cf_sigma = (2.0 / (cfg.n_in_forward * cfg.f_size * cfg.f_size) as f64).sqrt() / 2.0;
        Ok(HyperConvParams {
            l1: Affine::init(rng, cfg.n_in_hyper, cfg.n_hid),
            l2: Affine::init(rng, cfg.n_hid, cfg.n_hid),
            l3: Affine::init(rng, cfg.n_hid, cfg.filter_numel()),
            const_filter: Tensor::randn(
                rng,
                &[1, cfg.n_out, cfg.n_in_forward, cfg.f_size, cfg.f_size],
                cf_sigma,
            ),
            // heads start at zero so their clamped outputs begin inside
            // the clamp interval and gradients can flow from step one
            bias_head: cfg.use_bias.then(|| Affine::zeros(cfg.n_in_hyper, cfg.n_out)),
            gain_head: cfg.use_gain.then(|| Affine::zeros(cfg.n_in_hyper, cfg.n_out)),
            leaky_mlp: false,
        })
    }

    pub fn zeros(cfg: &HyperConvConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(HyperConvParams {
            l1: Affine::zeros(cfg.n_in_hyper, cfg.n_hid),
            l2: Affine::zeros(cfg.n_hid, cfg.n_hid),
            l3: Affine::zeros(cfg.n_hid, cfg.filter_numel()),
            const_filter: Tensor::zeros(&[1, cfg.n_out, cfg.n_in_forward, cfg.f_size, cfg.f_size]),
            bias_head: cfg.use_bias.then(|| Affine::zeros(cfg.n_in_hyper, cfg.n_out)),
            gain_head: cfg.use_gain.then(|| Affine::zeros(cfg.n_in_hyper, cfg.n_out)),
            leaky_mlp: false,
        })
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        f(format!("{prefix}.l1.w"), &self.l1.w);
        f(format!("{prefix}.l1.b"), &self.l1.b);
        f(format!("{prefix}.l2.w"), &self.l2.w);
        f(format!("{prefix}.l2.b"), &self.l2.b);
        f(format!("{prefix}.l3.w"), &self.l3.w);
        f(format!("{prefix}.l3.b"), &self.l3.b);
        f(format!("{prefix}.const_filter"), &self.const_filter);
        if let Some(h) = &self.bias_head {
            f(format!("{prefix}.bias.w"), &h.w);
            f(format!("{prefix}.bias.b"), &h.b);
        }
        if let Some(h) = &self.gain_head {
            f(format!("{prefix}.gain.w"), &h.w);
            f(format!("{prefix}.gain.b"), &h.b);
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(format!("{prefix}.l1.w"), &mut self.l1.w);
        f(format!("{prefix}.l1.b"), &mut self.l1.b);
        f(format!("{prefix}.l2.w"), &mut self.l2.w);
        f(format!("{prefix}.l2.b"), &mut self.l2.b);
        f(format!("{prefix}.l3.w"), &mut self.l3.w);
        f(format!("{prefix}.l3.b"), &mut self.l3.b);
        f(format!("{prefix}.const_filter"), &mut self.const_filter);
        if let Some(h) = &mut self.bias_head {
            f(format!("{prefix}.bias.w"), &mut h.w);
            f(format!("{prefix}.bias.b"), &mut h.b);
        }
        if let Some(h) = &mut self.gain_head {
            f(format!("{prefix}.gain.w"), &mut h.w);
            f(format!("{prefix}.gain.b"), &mut h.b);
        }
    }
}

/// Globally pools the filter-path input to a (N, C_F) feature matrix.
fn pool_features<T: Scalar>(
    cfg: &HyperConvConfig,
    filter_in: &Tensor<T>,
) -> Result<Tensor<T>> {
    let s = filter_in.shape();
    if s.len() != 4 || s[1] != cfg.n_in_hyper {
        return Err(Error::invalid(
            "hyperconv",
            format!(
                "filter input shape {:?} does not provide {} channels",
                s, cfg.n_in_hyper
            ),
        ));
    }
    let pooled = match cfg.pool {
        PoolKind::Max => global_max_pool(filter_in)?,
        PoolKind::Avg => global_avg_pool(filter_in)?,
    };
    pooled.reshape(&[s[0], cfg.n_in_hyper])
}

fn mlp<T: Scalar>(params: &HyperConvParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let act = if params.leaky_mlp { leaky_relu } else { relu };
    let h = act(&params.l1.apply(x)?);
    let h = act(&params.l2.apply(&h)?);
    params.l3.apply(&h)
}

/// Runs the pooled filter input through the MLP and reshapes to per-sample
/// filter banks (N, C_O, C_I, f, f). Not yet normalized.
pub fn predict_filters<T: Scalar>(
    params: &HyperConvParams<T>,
    cfg: &HyperConvConfig,
    filter_in: &Tensor<T>,
) -> Result<Tensor<T>> {
    cfg.validate()?;
    let pooled = pool_features(cfg, filter_in)?;
    let flat = mlp(params, &pooled)?;
    flat.reshape(&[
        filter_in.shape()[0],
        cfg.n_out,
        cfg.n_in_forward,
        cfg.f_size,
        cfg.f_size,
    ])
}

/// Rescales every (sample, c_out, c_in) spatial slice to L1 norm 1/2:
/// `f / (sum |f| + 1e-12) / 2`. Zero slices stay zero via the epsilon.
pub fn normalize_filters<T: Scalar>(f: &Tensor<T>) -> Result<Tensor<T>> {
    if f.shape().len() != 5 {
        return Err(Error::invalid(
            "normalize_filters",
            format!("expected (N,C_O,C_I,k,k), got {:?}", f.shape()),
        ));
    }
    let l1 = f.abs().sum_axes(&[3, 4], true)?;
    Ok(f.div(&l1.add_scalar(T::from_f64(1e-12)))?.mul_scalar(T::from_f64(0.5)))
}

fn apply_heads<T: Scalar>(
    params: &HyperConvParams<T>,
    cfg: &HyperConvConfig,
    pooled: &Tensor<T>,
    out: Tensor<T>,
) -> Result<Tensor<T>> {
    let n = out.shape()[0];
    let mut out = out;
    if let Some(head) = &params.bias_head {
        let b = head
            .apply(pooled)?
            .clamp(T::from_f64(-0.1), T::from_f64(0.1))
            .reshape(&[n, cfg.n_out, 1, 1])?;
        out = out.add(&b)?;
    }
    if let Some(head) = &params.gain_head {
        let g = head
            .apply(pooled)?
            .clamp(T::from_f64(-0.9), T::from_f64(0.1))
            .add_scalar(T::one())
            .reshape(&[n, cfg.n_out, 1, 1])?;
        out = out.mul(&g)?;
    }
    Ok(out)
}

/// Convolves each sample of `forward_in` with that sample's filter bank.
///
/// Filters are `normalize_filters(predict_filters(filter_in)) + const_filter`.
/// The batched application reshapes to a single grouped convolution with
/// `groups = N`. Optional per-channel bias (clamped to ±0.1) and gain
/// (clamped to [0.1, 1.1]) come from separate affine heads on the pooled
/// features.
pub fn hyperconv_forward<T: Scalar>(
    params: &HyperConvParams<T>,
    cfg: &HyperConvConfig,
    forward_in: &Tensor<T>,
    filter_in: &Tensor<T>,
) -> Result<Tensor<T>> {
    cfg.validate()?;
    let is = forward_in.shape();
    if is.len() != 4 || is[1] != cfg.n_in_forward {
        return Err(Error::invalid(
            "hyperconv_forward",
            format!(
                "forward input shape {:?} does not provide {} channels",
                is, cfg.n_in_forward
            ),
        ));
    }
    if filter_in.shape()[0] != is[0] {
        return Err(Error::shape("hyperconv_forward", is, filter_in.shape()));
    }
    let (n, h, w) = (is[0], is[2], is[3]);

    let pooled = pool_features(cfg, filter_in)?;
    let raw = predict_filters(params, cfg, filter_in)?;
    let filters = normalize_filters(&raw)?.add(&params.const_filter)?;

    let p = cfg.f_size / 2;
    let padded = match cfg.padding {
        Padding::Valid => forward_in.clone(),
        Padding::SameZero => pad2d(forward_in, p, p, PadMode::Zero)?,
        Padding::SameReflect => pad2d(forward_in, p, p, PadMode::Reflect)?,
        Padding::SamePeriodic => pad2d(forward_in, p, p, PadMode::Periodic)?,
    };
    let (ph, pw) = (padded.shape()[2], padded.shape()[3]);
    let grouped_in = padded.reshape(&[1, n * cfg.n_in_forward, ph, pw])?;
    let grouped_f = filters.reshape(&[
        n * cfg.n_out,
        cfg.n_in_forward,
        cfg.f_size,
        cfg.f_size,
    ])?;
    let out = conv2d(&grouped_in, &grouped_f, n, Padding::Valid, 1)?;
    let (oh, ow) = (out.shape()[2], out.shape()[3]);
    if cfg.padding != Padding::Valid && (oh != h || ow != w) {
        return Err(Error::invalid("hyperconv_forward", "same-padding extent drift"));
    }
    let out = out.reshape(&[n, cfg.n_out, oh, ow])?;
    apply_heads(params, cfg, &pooled, out)
}

/// The drop-in variant: a 3-layer stride-2 CNN embeds the forward input
/// itself, and its globally averaged features drive the filter MLP.
#[derive(Debug, Clone)]
pub struct HyperConvEmbedParams<T: Scalar> {
    /// Three stride-2 convs with channel ladder eb, 2eb, 4eb.
    pub embed_w: [Tensor<T>; 3],
    pub embed_b: [Tensor<T>; 3],
    pub inner: HyperConvParams<T>,
}

/// Base width of the embedding ladder; pooled features have 4x this many
/// channels.
pub const EMBED_BASE: usize = 32;

/// Config for the embed variant: filter input channels are fixed by the
/// embedding ladder, pooling is average.
pub fn embed_config(n_in_forward: usize, n_out: usize, n_hid: usize) -> HyperConvConfig {
    HyperConvConfig {
        n_in_forward,
        n_in_hyper: EMBED_BASE * 4,
        n_out,
        f_size: 3,
        n_hid,
        use_bias: false,
        use_gain: false,
        pool: PoolKind::Avg,
        padding: Padding::SameReflect,
    }
}

impl<T: Scalar> HyperConvEmbedParams<T> {
    pub fn init(rng: &mut impl Rng, cfg: &HyperConvConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.n_in_hyper != EMBED_BASE * 4 {
            return Err(Error::invalid(
                "HyperConvEmbedParams",
                format!("embed variant requires n_in_hyper = {}", EMBED_BASE * 4),
            ));
        }
        let he = |rng: &mut dyn rand::RngCore, c_out: usize, c_in: usize| {
            let sigma = (2.0 / (c_in * 9) as f64).sqrt();
            Tensor::randn(rng, &[c_out, c_in, 3, 3], sigma)
        };
        let mut inner = HyperConvParams::init(rng, cfg)?;
        inner.leaky_mlp = true;
        Ok(HyperConvEmbedParams {
            embed_w: [
                he(rng, EMBED_BASE, cfg.n_in_forward),
                he(rng, EMBED_BASE * 2, EMBED_BASE),
                he(rng, EMBED_BASE * 4, EMBED_BASE * 2),
            ],
            embed_b: [
                Tensor::zeros(&[1, EMBED_BASE, 1, 1]),
                Tensor::zeros(&[1, EMBED_BASE * 2, 1, 1]),
                Tensor::zeros(&[1, EMBED_BASE * 4, 1, 1]),
            ],
            inner,
        })
    }

    /// The embedding CNN: three stride-2 zero-padded convs with rectifiers
    /// between them.
    pub fn embed(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for (i, (w, b)) in self.embed_w.iter().zip(self.embed_b.iter()).enumerate() {
            h = conv2d(&h, w, 1, Padding::SameZero, 2)?.add(b)?;
            if i < 2 {
                h = relu(&h);
            }
        }
        Ok(h)
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        for i in 0..3 {
            f(format!("{prefix}.embed{i}.w"), &self.embed_w[i]);
            f(format!("{prefix}.embed{i}.b"), &self.embed_b[i]);
        }
        self.inner.visit(prefix, f);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        for i in 0..3 {
            f(format!("{prefix}.embed{i}.w"), &mut self.embed_w[i]);
            f(format!("{prefix}.embed{i}.b"), &mut self.embed_b[i]);
        }
        self.inner.visit_mut(prefix, f);
    }
}

/// Forward pass of the embed variant; equivalent to `hyperconv_forward`
/// with `filter_in = embed(forward_in)`.
pub fn hyperconv_embed_forward<T: Scalar>(
    params: &HyperConvEmbedParams<T>,
    cfg: &HyperConvConfig,
    forward_in: &Tensor<T>,
) -> Result<Tensor<T>> {
    let s = forward_in.shape();
    if s.len() != 4 || s[2] < 8 || s[3] < 8 {
        return Err(Error::invalid(
            "hyperconv_embed_forward",
            format!("input must be NCHW with spatial extent >= 8, got {:?}", s),
        ));
    }
    let filter_in = params.embed(forward_in)?;
    hyperconv_forward(&params.inner, cfg, forward_in, &filter_in)
}
