//! Analytic FLOP, parameter, and peak-activation-memory accounting.
//!
//! Conventions: one multiply-accumulate counts as 2 FLOPs; pooling,
//! activations and resampling cost 1 op per output element; bias
//! additions in convolutions are free (their parameters are counted);
//! activation memory is tallied per convolution as
//! `(input + output + filter) * 4` bytes at batch size 1.

use crate::error::{Error, Result};
use crate::hyper::HyperConvConfig;
use std::fmt::Write as _;


/// Cost of one named layer or sub-term.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LayerCost {
    pub name: String,
    pub flops: u64,
    pub params: u64,
    /// Convolution-adjacent activation bytes; zero for non-conv terms.
    pub act_bytes: u64,
}

/// Itemized cost report; totals are sums over the per-layer entries and
/// peak memory is the max.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CostReport {
    pub per_layer: Vec<LayerCost>,
}

impl CostReport {
    pub fn flops(&self) -> u64 {
        self.per_layer.iter().map(|l| l.flops).sum()
    }

    pub fn params(&self) -> u64 {
        self.per_layer.iter().map(|l| l.params).sum()
    }

    pub fn peak_activation_bytes(&self) -> u64 {
        self.per_layer.iter().map(|l| l.act_bytes).max().unwrap_or(0)
    }

    pub fn push(&mut self, layer: LayerCost) {
        self.per_layer.push(layer);
    }

    pub fn extend(&mut self, other: CostReport) {
        self.per_layer.extend(other.per_layer);
    }

    /// FLOPs per learnable parameter.
    pub fn ratio(&self) -> Result<f64> {
        let p = self.params();
        if p == 0 {
            return Err(Error::invalid("CostReport::ratio", "no parameters"));
        }
        Ok(self.flops() as f64 / p as f64)
    }

    /// Fixed-schema CSV: `layer,flops,params,act_bytes` plus a totals row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,flops,params,act_bytes\n");
        for l in &self.per_layer {
            writeln!(out, "{},{},{},{}", l.name, l.flops, l.params, l.act_bytes).unwrap();
        }
        writeln!(
            out,
            "TOTAL,{},{},{}",
            self.flops(),
            self.params(),
            self.peak_activation_bytes()
        )
        .unwrap();
        out
    }

    /// Human-readable table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{:<28} {:>16} {:>12} {:>14}", "layer", "flops", "params", "act_bytes")
            .unwrap();
        for l in &self.per_layer {
            writeln!(out, "{:<28} {:>16} {:>12} {:>14}", l.name, l.flops, l.params, l.act_bytes)
                .unwrap();
        }
        writeln!(
            out,
            "{:<28} {:>16} {:>12} {:>14}",
            "TOTAL",
            self.flops(),
            self.params(),
            self.peak_activation_bytes()
        )
        .unwrap();
        out
    }
}

/// One layer of an abstract network description for `count_network`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerDesc {
    /// A convolution producing `(c_out, h_out, w_out)` from
    /// `(c_in, h_in, w_in)`. `predicted` marks filters that are produced
    /// at runtime (hyper layers) and therefore carry no parameters here.
    Conv {
        name: String,
        c_in: usize,
        c_out: usize,
        f: usize,
        h_in: usize,
        w_in: usize,
        h_out: usize,
        w_out: usize,
        bias: bool,
        predicted: bool,
    },
    /// A chain of affine maps with the given widths (biases included).
    Mlp { name: String, dims: Vec<usize> },
    /// A bare learned tensor (e.g. a constant filter); parameters only.
    Weights { name: String, numel: usize },
    /// Pooling/activation/resampling: one op per output element.
    Elementwise { name: String, elems: usize },
}

/// Closed-form cost of a standard convolution with the given output
/// extent: `flops = 2*C_in*C_out*f_h*f_w*H*W`,
/// `params = C_in*C_out*f_h*f_w (+ C_out with bias)`.
#[allow(clippy::too_many_arguments)]
pub fn count_conv(
    c_in: usize,
    c_out: usize,
    f_h: usize,
    f_w: usize,
    h: usize,
    w: usize,
    bias: bool,
) -> Result<(u64, u64)> {
    if [c_in, c_out, f_h, f_w, h, w].contains(&0) {
        return Err(Error::invalid("count_conv", "extents must be positive"));
    }
    let macs = (c_in * c_out * f_h * f_w) as u64 * (h * w) as u64;
    let params = (c_in * c_out * f_h * f_w) as u64 + if bias { c_out as u64 } else { 0 };
    Ok((2 * macs, params))
}

/// Cost of an affine chain `dims[0] -> dims[1] -> ...`:
/// `flops = sum 2*in*out`, `params = sum (in*out + out)`.
pub fn count_mlp(dims: &[usize]) -> Result<(u64, u64)> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::invalid("count_mlp", "need >= 2 positive widths"));
    }
    let mut flops = 0u64;
    let mut params = 0u64;
    for pair in dims.windows(2) {
        let (i, o) = (pair[0] as u64, pair[1] as u64);
        flops += 2 * i * o;
        params += i * o + o;
    }
    Ok((flops, params))
}

/// Cost of one hyper-convolution applied to an `(C_I, H, W)` forward
/// input whose filter input shares the same spatial extent.
pub fn count_hyperconv(cfg: &HyperConvConfig, h: usize, w: usize) -> Result<CostReport> {
    count_hyperconv_at(cfg, "hyperconv", h, w, h, w)
}

/// As `count_hyperconv` but with an explicit filter-input extent, used by
/// the network walker where the two paths run at different scales.
pub fn count_hyperconv_at(
    cfg: &HyperConvConfig,
    name: &str,
    h: usize,
    w: usize,
    h_f: usize,
    w_f: usize,
) -> Result<CostReport> {
    cfg.validate()?;
    if h == 0 || w == 0 || h_f == 0 || w_f == 0 {
        return Err(Error::invalid("count_hyperconv", "extents must be positive"));
    }
    let mut report = CostReport::default();

    // global pooling of the filter input: one op per element
    report.push(LayerCost {
        name: format!("{name}.pool"),
        flops: (cfg.n_in_hyper * h_f * w_f) as u64,
        params: 0,
        act_bytes: 0,
    });

    let (mf, mp) = count_mlp(&[cfg.n_in_hyper, cfg.n_hid, cfg.n_hid, cfg.filter_numel()])?;
    report.push(LayerCost { name: format!("{name}.mlp"), flops: mf, params: mp, act_bytes: 0 });

    let cf_numel = cfg.n_out * cfg.n_in_forward * cfg.f_size * cfg.f_size;
    report.push(LayerCost {
        name: format!("{name}.const_filter"),
        flops: 0,
        params: cf_numel as u64,
        act_bytes: 0,
    });

    if cfg.use_bias {
        let (f, p) = count_mlp(&[cfg.n_in_hyper, cfg.n_out])?;
        report.push(LayerCost { name: format!("{name}.bias"), flops: f, params: p, act_bytes: 0 });
    }
    if cfg.use_gain {
        let (f, p) = count_mlp(&[cfg.n_in_hyper, cfg.n_out])?;
        report.push(LayerCost { name: format!("{name}.gain"), flops: f, params: p, act_bytes: 0 });
    }

    let (cf, _) = count_conv(cfg.n_in_forward, cfg.n_out, cfg.f_size, cfg.f_size, h, w, false)?;
    let act = 4 * ((cfg.n_in_forward * h * w) + (cfg.n_out * h * w) + cf_numel) as u64;
    report.push(LayerCost {
        name: format!("{name}.conv"),
        flops: cf,
        params: 0,
        act_bytes: act,
    });
    Ok(report)
}

/// Walks an abstract layer list, applying the closed-form counters.
pub fn count_network(layers: &[LayerDesc]) -> Result<CostReport> {
    let mut report = CostReport::default();
    for layer in layers {
        match layer {
            LayerDesc::Conv {
                name,
                c_in,
                c_out,
                f,
                h_in,
                w_in,
                h_out,
                w_out,
                bias,
                predicted,
            } => {
                let (flops, params) = count_conv(*c_in, *c_out, *f, *f, *h_out, *w_out, *bias)
                    .map_err(|e| Error::invalid("count_network", format!("{name}: {e}")))?;
                let filt = c_in * c_out * f * f;
                let act =
                    4 * ((c_in * h_in * w_in) + (c_out * h_out * w_out) + filt) as u64;
                report.push(LayerCost {
                    name: name.clone(),
                    flops,
                    params: if *predicted {
                        if *bias { *c_out as u64 } else { 0 }
                    } else {
                        params
                    },
                    act_bytes: act,
                });
            }
            LayerDesc::Mlp { name, dims } => {
                let (flops, params) = count_mlp(dims)
                    .map_err(|e| Error::invalid("count_network", format!("{name}: {e}")))?;
                report.push(LayerCost { name: name.clone(), flops, params, act_bytes: 0 });
            }
            LayerDesc::Weights { name, numel } => {
                report.push(LayerCost {
                    name: name.clone(),
                    flops: 0,
                    params: *numel as u64,
                    act_bytes: 0,
                });
            }
            LayerDesc::Elementwise { name, elems } => {
                report.push(LayerCost {
                    name: name.clone(),
                    flops: *elems as u64,
                    params: 0,
                    act_bytes: 0,
                });
            }
        }
    }
    Ok(report)
}
