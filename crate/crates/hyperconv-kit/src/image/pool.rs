use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

fn check_nchw<T: Scalar>(x: &Tensor<T>, op: &'static str) -> Result<(usize, usize, usize, usize)> {
    let s = x.shape();
    if s.len() != 4 {
        return Err(Error::invalid(
            op,
            format!("expected NCHW tensor, got shape {:?}", s),
        ));
    }
    Ok((s[0], s[1], s[2], s[3]))
}

/// Max pooling with window `k` and stride `s`; truncating (floor) output
/// size. The subgradient routes to the first argmax position of each
/// window.
pub fn max_pool2d<T: Scalar>(x: &Tensor<T>, k: usize, s: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = check_nchw(x, "max_pool2d")?;
    if k == 0 || s == 0 || h < k || w < k {
        return Err(Error::invalid(
            "max_pool2d",
            format!("window {k} stride {s} invalid for extent ({h},{w})"),
        ));
    }
    let oh = (h - k) / s + 1;
    let ow = (w - k) / s + 1;
    let mut out = vec![T::zero(); n * c * oh * ow];
    let mut argmax = vec![0usize; n * c * oh * ow];
    {
        let src = x.data();
        for img in 0..n * c {
            let ibase = img * h * w;
            let obase = img * oh * ow;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = src[ibase + oy * s * w + ox * s];
                    let mut best_i = ibase + oy * s * w + ox * s;
                    for ky in 0..k {
                        for kx in 0..k {
                            let i = ibase + (oy * s + ky) * w + ox * s + kx;
                            if src[i] > best {
                                best = src[i];
                                best_i = i;
                            }
                        }
                    }
                    out[obase + oy * ow + ox] = best;
                    argmax[obase + oy * ow + ox] = best_i;
                }
            }
        }
    }
    let out_shape = vec![n, c, oh, ow];
    let Some(node) = x.node.clone() else {
        return Tensor::from_vec(out, &out_shape);
    };
    let in_len = x.numel();
    Ok(node.tape.clone().record(
        out_shape,
        out,
        vec![node],
        Box::new(move |g, sink| {
            let mut gx = vec![T::zero(); in_len];
            for (go, &i) in g.iter().zip(argmax.iter()) {
                gx[i] = gx[i] + *go;
            }
            sink(0, gx);
        }),
    ))
}

/// Average pooling with window `k` and stride `s`.
pub fn avg_pool2d<T: Scalar>(x: &Tensor<T>, k: usize, s: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = check_nchw(x, "avg_pool2d")?;
    if k == 0 || s == 0 || h < k || w < k {
        return Err(Error::invalid(
            "avg_pool2d",
            format!("window {k} stride {s} invalid for extent ({h},{w})"),
        ));
    }
    let oh = (h - k) / s + 1;
    let ow = (w - k) / s + 1;
    let inv = T::from_f64(1.0 / (k * k) as f64);
    let mut out = vec![T::zero(); n * c * oh * ow];
    {
        let src = x.data();
        for img in 0..n * c {
            let ibase = img * h * w;
            let obase = img * oh * ow;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = T::zero();
                    for ky in 0..k {
                        for kx in 0..k {
                            acc = acc + src[ibase + (oy * s + ky) * w + ox * s + kx];
                        }
                    }
                    out[obase + oy * ow + ox] = acc * inv;
                }
            }
        }
    }
    let out_shape = vec![n, c, oh, ow];
    let Some(node) = x.node.clone() else {
        return Tensor::from_vec(out, &out_shape);
    };
    let in_len = x.numel();
    Ok(node.tape.clone().record(
        out_shape,
        out,
        vec![node],
        Box::new(move |g, sink| {
            let mut gx = vec![T::zero(); in_len];
            for img in 0..n * c {
                let ibase = img * h * w;
                let obase = img * oh * ow;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let go = g[obase + oy * ow + ox] * inv;
                        for ky in 0..k {
                            for kx in 0..k {
                                let i = ibase + (oy * s + ky) * w + ox * s + kx;
                                gx[i] = gx[i] + go;
                            }
                        }
                    }
                }
            }
            sink(0, gx);
        }),
    ))
}

/// Per-sample per-channel max over all spatial positions -> (N, C, 1, 1).
pub fn global_max_pool<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = check_nchw(x, "global_max_pool")?;
    if h == 0 || w == 0 {
        return Err(Error::invalid("global_max_pool", "empty spatial extent"));
    }
    let mut out = vec![T::zero(); n * c];
    let mut argmax = vec![0usize; n * c];
    {
        let src = x.data();
        for img in 0..n * c {
            let base = img * h * w;
            let mut best = src[base];
            let mut best_i = base;
            for i in base..base + h * w {
                if src[i] > best {
                    best = src[i];
                    best_i = i;
                }
            }
            out[img] = best;
            argmax[img] = best_i;
        }
    }
    let out_shape = vec![n, c, 1, 1];
    let Some(node) = x.node.clone() else {
        return Tensor::from_vec(out, &out_shape);
    };
    let in_len = x.numel();
    Ok(node.tape.clone().record(
        out_shape,
        out,
        vec![node],
        Box::new(move |g, sink| {
            let mut gx = vec![T::zero(); in_len];
            for (go, &i) in g.iter().zip(argmax.iter()) {
                gx[i] = gx[i] + *go;
            }
            sink(0, gx);
        }),
    ))
}

/// Per-sample per-channel mean over all spatial positions -> (N, C, 1, 1).
pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    check_nchw(x, "global_avg_pool")?;
    x.mean_axes(&[2, 3], true)
}
