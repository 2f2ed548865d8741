use super::pad::{pad2d, PadMode};
use super::Padding;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Tensor};

/// Grouped 2-D convolution (cross-correlation) over NCHW input.
///
/// `filters` has shape `(C_out, C_in / groups, f_h, f_w)`. With a `Same*`
/// padding mode the input is padded by `f/2` per side first, so odd filter
/// sizes at stride 1 preserve the spatial extent. Differentiable w.r.t.
/// both input and filters.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    filters: &Tensor<T>,
    groups: usize,
    pad: Padding,
    stride: usize,
) -> Result<Tensor<T>> {
    let ishape = input.shape();
    let fshape = filters.shape();
    if ishape.len() != 4 || fshape.len() != 4 {
        return Err(Error::shape("conv2d", ishape, fshape));
    }
    if groups == 0 || stride == 0 {
        return Err(Error::invalid("conv2d", "groups and stride must be >= 1"));
    }
    let (n, c_in, _, _) = (ishape[0], ishape[1], ishape[2], ishape[3]);
    let (c_out, f_cin, kh, kw) = (fshape[0], fshape[1], fshape[2], fshape[3]);
    if c_in % groups != 0 || c_out % groups != 0 {
        return Err(Error::invalid(
            "conv2d",
            format!("channels ({c_in} in, {c_out} out) not divisible by groups {groups}"),
        ));
    }
    if f_cin != c_in / groups {
        return Err(Error::invalid(
            "conv2d",
            format!(
                "filter expects {} channels per group, input provides {}",
                f_cin,
                c_in / groups
            ),
        ));
    }

    let padded = match pad {
        Padding::Valid => input.clone(),
        Padding::SameZero => pad2d(input, kh / 2, kw / 2, PadMode::Zero)?,
        Padding::SameReflect => pad2d(input, kh / 2, kw / 2, PadMode::Reflect)?,
        Padding::SamePeriodic => pad2d(input, kh / 2, kw / 2, PadMode::Periodic)?,
    };
    let (h, w) = (padded.shape()[2], padded.shape()[3]);
    if h < kh || w < kw {
        return Err(Error::invalid(
            "conv2d",
            format!("filter ({kh},{kw}) larger than padded input ({h},{w})"),
        ));
    }
    let oh = (h - kh) / stride + 1;
    let ow = (w - kw) / stride + 1;
    if oh == 0 || ow == 0 {
        return Err(Error::invalid("conv2d", "empty output"));
    }

    let cin_pg = c_in / groups;
    let cout_pg = c_out / groups;
    let out = conv_forward(
        padded.data(),
        filters.data(),
        n,
        c_in,
        h,
        w,
        c_out,
        kh,
        kw,
        groups,
        stride,
        oh,
        ow,
    );

    let out_shape = vec![n, c_out, oh, ow];
    let Some(tape) = Tape::of(&[&padded, filters], "conv2d")? else {
        return Tensor::from_vec(out, &out_shape);
    };

    let in_data = padded.data_arc();
    let f_data = filters.data_arc();
    let mut parents = Vec::new();
    let mut in_pi = None;
    let mut f_pi = None;
    if let Some(ni) = padded.node.clone() {
        in_pi = Some(parents.len());
        parents.push(ni);
    }
    if let Some(nf) = filters.node.clone() {
        f_pi = Some(parents.len());
        parents.push(nf);
    }
    Ok(tape.record(
        out_shape,
        out,
        parents,
        Box::new(move |g, sink| {
            let mut gin = in_pi.map(|_| vec![T::zero(); in_data.len()]);
            let mut gf = f_pi.map(|_| vec![T::zero(); f_data.len()]);
            for img in 0..n {
                for co in 0..c_out {
                    let grp = co / cout_pg;
                    let gobase = (img * c_out + co) * oh * ow;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let go = g[gobase + oy * ow + ox];
                            if go == T::zero() {
                                continue;
                            }
                            for cil in 0..cin_pg {
                                let ci = grp * cin_pg + cil;
                                let ibase = (img * c_in + ci) * h * w;
                                let fbase = (co * cin_pg + cil) * kh * kw;
                                for ky in 0..kh {
                                    let iy = oy * stride + ky;
                                    for kx in 0..kw {
                                        let ix = ox * stride + kx;
                                        if let Some(gi) = gin.as_mut() {
                                            gi[ibase + iy * w + ix] = gi[ibase + iy * w + ix]
                                                + go * f_data[fbase + ky * kw + kx];
                                        }
                                        if let Some(gw) = gf.as_mut() {
                                            gw[fbase + ky * kw + kx] = gw[fbase + ky * kw + kx]
                                                + go * in_data[ibase + iy * w + ix];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if let (Some(pi), Some(gi)) = (in_pi, gin) {
                sink(pi, gi);
            }
            if let (Some(pi), Some(gw)) = (f_pi, gf) {
                sink(pi, gw);
            }
        }),
    ))
}

#[allow(clippy::too_many_arguments)]
fn conv_forward<T: Scalar>(
    input: &[T],
    filters: &[T],
    n: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    groups: usize,
    stride: usize,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let cin_pg = c_in / groups;
    let cout_pg = c_out / groups;
    let mut out = vec![T::zero(); n * c_out * oh * ow];
    for img in 0..n {
        for co in 0..c_out {
            let grp = co / cout_pg;
            let obase = (img * c_out + co) * oh * ow;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = T::zero();
                    for cil in 0..cin_pg {
                        let ci = grp * cin_pg + cil;
                        let ibase = (img * c_in + ci) * h * w;
                        let fbase = (co * cin_pg + cil) * kh * kw;
                        for ky in 0..kh {
                            let irow = ibase + (oy * stride + ky) * w + ox * stride;
                            let frow = fbase + ky * kw;
                            for kx in 0..kw {
                                acc = acc + input[irow + kx] * filters[frow + kx];
                            }
                        }
                    }
                    out[obase + oy * ow + ox] = acc;
                }
            }
        }
    }
    out
}
