//! The HyperUNet architecture, its standard-convolution ablation, and the
//! abstract layer plans the cost accountant walks.
//!
//! Input convention: packed 4-channel half-resolution RAW `(N,4,H,W)`;
//! output is `(N,3,2H,2W)` RGB in [0,1].

use crate::cost::LayerDesc;
use crate::error::{Error, Result};
use crate::hyper::{hyperconv_forward, HyperConvConfig, HyperConvParams, PoolKind};
use crate::image::{conv2d, gelu, hard_sigmoid, max_pool2d, sigmoid, upsample_bilinear_2x, Padding};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;


/// Widths of a HyperUNet. `n_fwd` is the full-scale feature width,
/// `n_embed` the embedding ladder base, `n_hid` the filter-MLP hidden
/// width; half-scale paths use `n_fwd/2` and `n_hid/2`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct HyperUNetConfig {
    pub n_fwd: usize,
    pub n_embed: usize,
    pub n_hid: usize,
    pub n_in: usize,
    pub n_out: usize,
}

impl HyperUNetConfig {
    pub fn new(n_fwd: usize, n_embed: usize, n_hid: usize) -> Self {
        HyperUNetConfig { n_fwd, n_embed, n_hid, n_in: 4, n_out: 3 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_fwd", self.n_fwd),
            ("n_embed", self.n_embed),
            ("n_hid", self.n_hid),
        ] {
            if v < 2 || v % 2 != 0 {
                return Err(Error::invalid(
                    "HyperUNetConfig",
                    format!("{name} must be even and >= 2, got {v}"),
                ));
            }
        }
        if self.n_in == 0 || self.n_out == 0 {
            return Err(Error::invalid("HyperUNetConfig", "channel counts must be >= 1"));
        }
        Ok(())
    }

    /// The eleven hyper-layer configs in fixed order.
    fn hyper_layers(&self) -> Vec<(&'static str, HyperConvConfig)> {
        let (nf, eb, nh) = (self.n_fwd, self.n_embed, self.n_hid);
        let hc = |n_in_forward, n_in_hyper, n_out, n_hid| HyperConvConfig {
            n_in_forward,
            n_in_hyper,
            n_out,
            f_size: 3,
            n_hid,
            use_bias: true,
            use_gain: false,
            pool: PoolKind::Max,
            padding: Padding::SameReflect,
        };
        vec![
            ("hc0", hc(self.n_in, eb * 16, nf, nh)),
            ("hc1", hc(nf, eb * 16, nf, nh)),
            ("hc2", hc(nf, eb * 16, nf, nh)),
            ("hc4", hc(nf, eb * 16, self.n_out, nh)),
            ("hc1_2", hc(nf, eb * 8, nf / 2, nh / 2)),
            ("hc2_2", hc(nf / 2, eb * 8, nf, nh / 2)),
            ("hc1_4", hc(nf / 2, eb * 4, nf / 2, nh / 2)),
            ("hc2_4", hc(nf / 2, eb * 4, nf / 2, nh / 2)),
            ("hc1_8", hc(nf / 2, eb * 2, nf / 2, nh / 2)),
            ("hc2_8", hc(nf / 2, eb * 2, nf / 2, nh / 2)),
            ("hc1_16", hc(nf / 2, eb * 2, nf / 2, nh / 2)),
        ]
    }

    /// Stage lists (in_ch, out_ch, stride, pool_after) for the four
    /// embedding networks. The last stage of each has no pool and no
    /// activation.
    fn embedding_stages(&self) -> [Vec<(usize, usize, usize, usize)>; 4] {
        let (nf, eb) = (self.n_fwd, self.n_embed);
        [
            vec![
                (self.n_in, eb, 1, 2),
                (eb, eb * 2, 1, 2),
                (eb * 2, eb * 4, 1, 2),
                (eb * 4, eb * 8, 1, 4),
                (eb * 8, eb * 16, 1, 0),
            ],
            vec![
                (nf, eb, 2, 2),
                (eb, eb * 2, 1, 2),
                (eb * 2, eb * 4, 1, 4),
                (eb * 4, eb * 8, 1, 0),
            ],
            vec![
                (nf / 2, eb / 2, 1, 2),
                (eb / 2, eb * 2, 1, 4),
                (eb * 2, eb * 4, 1, 0),
            ],
            vec![(nf / 2, eb / 2, 1, 4), (eb / 2, eb * 2, 1, 0)],
        ]
    }
}

/// A learned standard convolution with per-channel bias.
#[derive(Debug, Clone)]
pub struct ConvLayer<T: Scalar> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
    pub stride: usize,
    pub padding: Padding,
}

impl<T: Scalar> ConvLayer<T> {
    /// He-initialized 3x3 conv.
    pub fn init(rng: &mut impl Rng, c_in: usize, c_out: usize, stride: usize, padding: Padding) -> Self {
        let sigma = (2.0 / (c_in * 9) as f64).sqrt();
        ConvLayer {
            w: Tensor::randn(rng, &[c_out, c_in, 3, 3], sigma),
            b: Tensor::zeros(&[1, c_out, 1, 1]),
            stride,
            padding,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d(x, &self.w, 1, self.padding, self.stride)?.add(&self.b)
    }
}

/// One embedding network: convs with optional pooling and GELU between
/// stages (none after the last).
#[derive(Debug, Clone)]
pub struct Embedding<T: Scalar> {
    pub convs: Vec<ConvLayer<T>>,
    /// max-pool window after each conv; 0 = none
    pub pools: Vec<usize>,
}

impl<T: Scalar> Embedding<T> {
    fn init(rng: &mut impl Rng, stages: &[(usize, usize, usize, usize)]) -> Self {
        let mut convs = Vec::new();
        let mut pools = Vec::new();
        for &(c_in, c_out, stride, pool) in stages {
            convs.push(ConvLayer::init(rng, c_in, c_out, stride, Padding::SameZero));
            pools.push(pool);
        }
        Embedding { convs, pools }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let last = self.convs.len() - 1;
        let mut h = x.clone();
        for (i, (conv, &pool)) in self.convs.iter().zip(self.pools.iter()).enumerate() {
            h = conv.forward(&h)?;
            if pool > 0 {
                h = max_pool2d(&h, pool, pool)?;
            }
            if i < last {
                h = gelu(&h);
            }
        }
        Ok(h)
    }
}

/// Any trainable network in this crate: a forward map plus named access
/// to every parameter tensor.
pub trait Model<T: Scalar> {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>>;
    fn visit_params(&self, f: &mut dyn FnMut(String, &Tensor<T>));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>));
    /// Architecture description for checkpoints.
    fn arch(&self) -> ArchConfig;

    fn param_count(&self) -> u64 {
        let mut n = 0u64;
        self.visit_params(&mut |_, t| n += t.numel() as u64);
        n
    }
}

/// Serializable architecture tag stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind")]
pub enum ArchConfig {
    Hyper(HyperUNetConfig),
    Plain(HyperUNetConfig),
}

impl ArchConfig {
    pub fn unet(&self) -> &HyperUNetConfig {
        match self {
            ArchConfig::Hyper(c) | ArchConfig::Plain(c) => c,
        }
    }
}

/// U-shaped network of eleven hyper-convolutions over five scales, fed by
/// four embedding networks.
#[derive(Debug, Clone)]
pub struct HyperUNet<T: Scalar> {
    pub cfg: HyperUNetConfig,
    pub embeds: [Embedding<T>; 4],
    /// In `hyper_layers()` order.
    pub layers: Vec<HyperConvParams<T>>,
}

pub fn build_hyper_unet<T: Scalar>(
    cfg: &HyperUNetConfig,
    rng: &mut impl Rng,
) -> Result<HyperUNet<T>> {
    cfg.validate()?;
    let stages = cfg.embedding_stages();
    let embeds = [
        Embedding::init(rng, &stages[0]),
        Embedding::init(rng, &stages[1]),
        Embedding::init(rng, &stages[2]),
        Embedding::init(rng, &stages[3]),
    ];
    let layers = cfg
        .hyper_layers()
        .iter()
        .map(|(_, lc)| HyperConvParams::init(rng, lc))
        .collect::<Result<Vec<_>>>()?;
    Ok(HyperUNet { cfg: cfg.clone(), embeds, layers })
}

fn check_input<T: Scalar>(x: &Tensor<T>, n_in: usize) -> Result<()> {
    let s = x.shape();
    if s.len() != 4 || s[1] != n_in {
        return Err(Error::invalid(
            "forward",
            format!("expected (N,{n_in},H,W) input, got {:?}", s),
        ));
    }
    if s[2] % 16 != 0 || s[3] % 16 != 0 {
        return Err(Error::invalid(
            "forward",
            format!("spatial extents must be divisible by 16, got {}x{}", s[2], s[3]),
        ));
    }
    Ok(())
}

/// Mean over the channel axis, kept as a 1-channel map.
fn chan_mean<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    x.mean_axes(&[1], true)
}

/// 2x bilinear upsample scaled by 0.25, the decoder skip form.
fn up_quarter<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(upsample_bilinear_2x(x)?.mul_scalar(T::from_f64(0.25)))
}

impl<T: Scalar> Model<T> for HyperUNet<T> {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        check_input(x, self.cfg.n_in)?;
        let lc: Vec<HyperConvConfig> =
            self.cfg.hyper_layers().into_iter().map(|(_, c)| c).collect();
        let hc = |i: usize, fwd: &Tensor<T>, filt: &Tensor<T>| {
            hyperconv_forward(&self.layers[i], &lc[i], fwd, filt)
        };
        // indices into `layers`, in hyper_layers() order
        let (hc0, hc1, hc2, hc4) = (0, 1, 2, 3);
        let (hc1_2, hc2_2, hc1_4, hc2_4) = (4, 5, 6, 7);
        let (hc1_8, hc2_8, hc1_16) = (8, 9, 10);

        let e = self.embeds[0].forward(x)?;
        let y = hc(hc0, x, &e)?;
        let y0 = hard_sigmoid(&y);
        let y = hc(hc1, &y0, &e)?.add(&y0)?;
        let y0 = hard_sigmoid(&y);

        let mut y2 = max_pool2d(&y0, 2, 2)?;
        let e2 = self.embeds[1].forward(&y0)?;
        y2 = gelu(&hc(hc1_2, &y2, &e2)?);

        let mut y4 = max_pool2d(&y2, 2, 2)?;
        let e4 = self.embeds[2].forward(&y4)?;
        y4 = gelu(&hc(hc1_4, &y4, &e4)?);

        let mut y8 = max_pool2d(&y4, 2, 2)?;
        let e8 = self.embeds[3].forward(&y8)?;
        y8 = gelu(&hc(hc1_8, &y8, &e8)?);

        let mut y16 = max_pool2d(&y8, 2, 2)?;
        // the 1/16 scale reuses the 1/8-scale embedding
        y16 = gelu(&hc(hc1_16, &y16, &e8)?);

        let y8 = gelu(&hc(hc2_8, &y8.add(&up_quarter(&y16)?)?, &e8)?.add(&y8)?);
        let y4 = gelu(&hc(hc2_4, &y4.add(&up_quarter(&y8)?)?, &e4)?.add(&y4)?);
        let y2 = gelu(&hc(hc2_2, &y2.add(&up_quarter(&y4)?)?, &e2)?.add(&chan_mean(&y2)?)?);
        let y = gelu(&hc(hc2, &y0.add(&up_quarter(&y2)?)?, &e)?.add(&y0)?);
        let y = y.add(&chan_mean(x)?)?;
        let y = upsample_bilinear_2x(&y)?;
        let y = hc(hc4, &y, &e)?;
        Ok(sigmoid(&y))
    }

    fn visit_params(&self, f: &mut dyn FnMut(String, &Tensor<T>)) {
        for (ei, emb) in self.embeds.iter().enumerate() {
            for (ci, conv) in emb.convs.iter().enumerate() {
                f(format!("embed{ei}.conv{ci}.w"), &conv.w);
                f(format!("embed{ei}.conv{ci}.b"), &conv.b);
            }
        }
        for ((name, _), layer) in self.cfg.hyper_layers().iter().zip(self.layers.iter()) {
            layer.visit(name, f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        for (ei, emb) in self.embeds.iter_mut().enumerate() {
            for (ci, conv) in emb.convs.iter_mut().enumerate() {
                f(format!("embed{ei}.conv{ci}.w"), &mut conv.w);
                f(format!("embed{ei}.conv{ci}.b"), &mut conv.b);
            }
        }
        for ((name, _), layer) in self.cfg.hyper_layers().iter().zip(self.layers.iter_mut()) {
            layer.visit_mut(name, f);
        }
    }

    fn arch(&self) -> ArchConfig {
        ArchConfig::Hyper(self.cfg.clone())
    }
}

/// The "no hyper-conv" ablation: same topology with each hyper layer
/// replaced by a learned standard conv and the embeddings removed.
#[derive(Debug, Clone)]
pub struct PlainUNet<T: Scalar> {
    pub cfg: HyperUNetConfig,
    pub convs: Vec<ConvLayer<T>>,
}

pub fn build_plain_unet<T: Scalar>(
    cfg: &HyperUNetConfig,
    rng: &mut impl Rng,
) -> Result<PlainUNet<T>> {
    cfg.validate()?;
    let convs = cfg
        .hyper_layers()
        .iter()
        .map(|(_, lc)| ConvLayer::init(rng, lc.n_in_forward, lc.n_out, 1, Padding::SameReflect))
        .collect();
    Ok(PlainUNet { cfg: cfg.clone(), convs })
}

impl<T: Scalar> Model<T> for PlainUNet<T> {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        check_input(x, self.cfg.n_in)?;
        let c = |i: usize, v: &Tensor<T>| self.convs[i].forward(v);
        let (hc0, hc1, hc2, hc4) = (0, 1, 2, 3);
        let (hc1_2, hc2_2, hc1_4, hc2_4) = (4, 5, 6, 7);
        let (hc1_8, hc2_8, hc1_16) = (8, 9, 10);

        let y = c(hc0, x)?;
        let y0 = hard_sigmoid(&y);
        let y = c(hc1, &y0)?.add(&y0)?;
        let y0 = hard_sigmoid(&y);

        let mut y2 = max_pool2d(&y0, 2, 2)?;
        y2 = gelu(&c(hc1_2, &y2)?);
        let mut y4 = max_pool2d(&y2, 2, 2)?;
        y4 = gelu(&c(hc1_4, &y4)?);
        let mut y8 = max_pool2d(&y4, 2, 2)?;
        y8 = gelu(&c(hc1_8, &y8)?);
        let mut y16 = max_pool2d(&y8, 2, 2)?;
        y16 = gelu(&c(hc1_16, &y16)?);

        let y8 = gelu(&c(hc2_8, &y8.add(&up_quarter(&y16)?)?)?.add(&y8)?);
        let y4 = gelu(&c(hc2_4, &y4.add(&up_quarter(&y8)?)?)?.add(&y4)?);
        let y2 = gelu(&c(hc2_2, &y2.add(&up_quarter(&y4)?)?)?.add(&chan_mean(&y2)?)?);
        let y = gelu(&c(hc2, &y0.add(&up_quarter(&y2)?)?)?.add(&y0)?);
        let y = y.add(&chan_mean(x)?)?;
        let y = upsample_bilinear_2x(&y)?;
        let y = c(hc4, &y)?;
        Ok(sigmoid(&y))
    }

    fn visit_params(&self, f: &mut dyn FnMut(String, &Tensor<T>)) {
        for ((name, _), conv) in self.cfg.hyper_layers().iter().zip(self.convs.iter()) {
            f(format!("{name}.w"), &conv.w);
            f(format!("{name}.b"), &conv.b);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        for ((name, _), conv) in self.cfg.hyper_layers().iter().zip(self.convs.iter_mut()) {
            f(format!("{name}.w"), &mut conv.w);
            f(format!("{name}.b"), &mut conv.b);
        }
    }

    fn arch(&self) -> ArchConfig {
        ArchConfig::Plain(self.cfg.clone())
    }
}

fn pool_out(h: usize, k: usize, name: &str) -> Result<usize> {
    if h < k {
        return Err(Error::invalid(
            "plan",
            format!("{name}: extent {h} too small for pool {k}"),
        ));
    }
    Ok((h - k) / k + 1)
}

/// Emits the layer descriptors of one embedding and returns its output
/// extent.
fn embedding_plan(
    name: &str,
    stages: &[(usize, usize, usize, usize)],
    h: usize,
    w: usize,
    out: &mut Vec<LayerDesc>,
) -> Result<(usize, usize)> {
    let (mut h, mut w) = (h, w);
    let last = stages.len() - 1;
    for (i, &(c_in, c_out, stride, pool)) in stages.iter().enumerate() {
        let (h_in, w_in) = (h, w);
        if stride > 1 {
            h = (h - 1) / stride + 1;
            w = (w - 1) / stride + 1;
        }
        out.push(LayerDesc::Conv {
            name: format!("{name}.conv{i}"),
            c_in,
            c_out,
            f: 3,
            h_in,
            w_in,
            h_out: h,
            w_out: w,
            bias: true,
            predicted: false,
        });
        if pool > 0 {
            h = pool_out(h, pool, name)?;
            w = pool_out(w, pool, name)?;
            out.push(LayerDesc::Elementwise {
                name: format!("{name}.pool{i}"),
                elems: c_out * h * w,
            });
        }
        if i < last {
            out.push(LayerDesc::Elementwise {
                name: format!("{name}.gelu{i}"),
                elems: c_out * h * w,
            });
        }
    }
    Ok((h, w))
}

/// Emits the descriptors of one hyper layer: filter-input pooling, the
/// MLP, the constant filter, the bias head, and the parameter-free
/// forward convolution.
fn hyperconv_plan(
    name: &str,
    lc: &HyperConvConfig,
    h: usize,
    w: usize,
    h_f: usize,
    w_f: usize,
    out: &mut Vec<LayerDesc>,
) {
    out.push(LayerDesc::Elementwise {
        name: format!("{name}.pool"),
        elems: lc.n_in_hyper * h_f * w_f,
    });
    out.push(LayerDesc::Mlp {
        name: format!("{name}.mlp"),
        dims: vec![lc.n_in_hyper, lc.n_hid, lc.n_hid, lc.filter_numel()],
    });
    out.push(LayerDesc::Weights {
        name: format!("{name}.const_filter"),
        numel: lc.n_out * lc.n_in_forward * lc.f_size * lc.f_size,
    });
    if lc.use_bias {
        out.push(LayerDesc::Mlp {
            name: format!("{name}.bias"),
            dims: vec![lc.n_in_hyper, lc.n_out],
        });
    }
    if lc.use_gain {
        out.push(LayerDesc::Mlp {
            name: format!("{name}.gain"),
            dims: vec![lc.n_in_hyper, lc.n_out],
        });
    }
    out.push(LayerDesc::Conv {
        name: format!("{name}.conv"),
        c_in: lc.n_in_forward,
        c_out: lc.n_out,
        f: lc.f_size,
        h_in: h,
        w_in: w,
        h_out: h,
        w_out: w,
        bias: false,
        predicted: true,
    });
}

/// Full abstract layer walk of the network for a given input extent.
/// `hyper` selects the hyper variant; the plain ablation replaces each
/// hyper layer with a learned biased conv and drops the embeddings.
/// Instantiates either variant behind the common `Model` interface.
pub fn build_model<T: Scalar>(
    arch: &ArchConfig,
    rng: &mut impl Rng,
) -> Result<Box<dyn Model<T>>> {
    Ok(match arch {
        ArchConfig::Hyper(cfg) => Box::new(build_hyper_unet::<T>(cfg, rng)?),
        ArchConfig::Plain(cfg) => Box::new(build_plain_unet::<T>(cfg, rng)?),
    })
}

pub fn network_plan(cfg: &HyperUNetConfig, hyper: bool, h: usize, w: usize) -> Result<Vec<LayerDesc>> {
    cfg.validate()?;
    let layers = cfg.hyper_layers();
    let stages = cfg.embedding_stages();
    let mut out = Vec::new();

    // scale extents down the encoder (truncating pools, so arbitrary
    // extents can be costed); output at 2x
    let mut exts = [(h, w); 5];
    for i in 1..5 {
        exts[i] = (
            pool_out(exts[i - 1].0, 2, "scale")?,
            pool_out(exts[i - 1].1, 2, "scale")?,
        );
    }
    let up = (2 * h, 2 * w);

    // embedding output extents (hyper only)
    let mut emb_ext = [(0usize, 0usize); 4];
    if hyper {
        for (i, st) in stages.iter().enumerate() {
            let (eh, ew) = exts[match i {
                0 => 0,
                1 => 0, // embed2 reads the full-scale features (stride-2 first conv)
                2 => 2,
                3 => 3,
                _ => unreachable!(),
            }];
            emb_ext[i] = embedding_plan(&format!("embed{i}"), st, eh, ew, &mut out)?;
        }
    }

    // (layer index, forward extent index, embedding index, act elems factor)
    let schedule: [(usize, usize, usize); 11] = [
        (0, 0, 0),  // hc0
        (1, 0, 0),  // hc1
        (4, 1, 1),  // hc1_2
        (6, 2, 2),  // hc1_4
        (8, 3, 3),  // hc1_8
        (10, 4, 3), // hc1_16 (e16 = e8)
        (9, 3, 3),  // hc2_8
        (7, 2, 2),  // hc2_4
        (5, 1, 1),  // hc2_2
        (2, 0, 0),  // hc2
        (3, 5, 0),  // hc4 at 2x
    ];
    for &(li, ei, mi) in &schedule {
        let (lh, lw) = if ei == 5 { up } else { exts[ei] };
        let (name, lc) = &layers[li];
        if hyper {
            let (fh, fw) = emb_ext[mi];
            hyperconv_plan(name, lc, lh, lw, fh, fw, &mut out);
        } else {
            out.push(LayerDesc::Conv {
                name: (*name).into(),
                c_in: lc.n_in_forward,
                c_out: lc.n_out,
                f: lc.f_size,
                h_in: lh,
                w_in: lw,
                h_out: lh,
                w_out: lw,
                bias: true,
                predicted: false,
            });
        }
        // post-layer activation (hard-sigmoid or gelu; sigmoid for hc4)
        out.push(LayerDesc::Elementwise {
            name: format!("{name}.act"),
            elems: lc.n_out * lh * lw,
        });
    }

    // forward-path pools and decoder upsamples; the first pool sees the
    // full-width y0, and the last upsample sees the n_fwd-wide hc2_2 output
    for (i, name) in ["pool2", "pool4", "pool8", "pool16"].iter().enumerate() {
        let (ph, pw) = exts[i + 1];
        let ch = if i == 0 { cfg.n_fwd } else { cfg.n_fwd / 2 };
        out.push(LayerDesc::Elementwise { name: (*name).into(), elems: ch * ph * pw });
    }
    for (i, name) in ["up8", "up4", "up2", "up1"].iter().enumerate() {
        let (uh, uw) = exts[3 - i];
        let ch = if i == 3 { cfg.n_fwd } else { cfg.n_fwd / 2 };
        out.push(LayerDesc::Elementwise { name: (*name).into(), elems: ch * uh * uw });
    }
    out.push(LayerDesc::Elementwise { name: "up_out".into(), elems: cfg.n_fwd * up.0 * up.1 });
    Ok(out)
}
