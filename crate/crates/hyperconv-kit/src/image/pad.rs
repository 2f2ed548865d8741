use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// How out-of-range source coordinates resolve during padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    Zero,
    Reflect,
    Periodic,
}

/// Source index for padded coordinate `j - p` over an extent of `n`,
/// or `None` for zero padding outside the image.
fn src_index(j: isize, n: isize, mode: PadMode) -> Option<isize> {
    match mode {
        PadMode::Zero => {
            if j < 0 || j >= n {
                None
            } else {
                Some(j)
            }
        }
        PadMode::Reflect => {
            // edge not repeated: [-1] maps to [1]
            let mut j = j;
            if j < 0 {
                j = -j;
            }
            if j >= n {
                j = 2 * n - 2 - j;
            }
            Some(j)
        }
        PadMode::Periodic => Some(((j % n) + n) % n),
    }
}

/// Pads the two spatial axes of an NCHW tensor by `ph`/`pw` on each side.
pub fn pad2d<T: Scalar>(
    x: &Tensor<T>,
    ph: usize,
    pw: usize,
    mode: PadMode,
) -> Result<Tensor<T>> {
    let shape = x.shape();
    if shape.len() != 4 {
        return Err(Error::invalid(
            "pad2d",
            format!("expected NCHW tensor, got shape {:?}", shape),
        ));
    }
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    if mode == PadMode::Reflect && (ph >= h || pw >= w) {
        return Err(Error::invalid(
            "pad2d",
            format!("reflection pad ({ph},{pw}) too large for extent ({h},{w})"),
        ));
    }
    if mode == PadMode::Periodic && (ph > h || pw > w) {
        return Err(Error::invalid(
            "pad2d",
            format!("periodic pad ({ph},{pw}) too large for extent ({h},{w})"),
        ));
    }
    let (oh, ow) = (h + 2 * ph, w + 2 * pw);

    // per-axis source maps; None marks zero fill
    let ymap: Vec<Option<usize>> = (0..oh)
        .map(|oy| src_index(oy as isize - ph as isize, h as isize, mode).map(|v| v as usize))
        .collect();
    let xmap: Vec<Option<usize>> = (0..ow)
        .map(|ox| src_index(ox as isize - pw as isize, w as isize, mode).map(|v| v as usize))
        .collect();

    let mut out = vec![T::zero(); n * c * oh * ow];
    {
        let src = x.data();
        for img in 0..n * c {
            let sbase = img * h * w;
            let dbase = img * oh * ow;
            for (oy, ym) in ymap.iter().enumerate() {
                let Some(iy) = ym else { continue };
                for (ox, xm) in xmap.iter().enumerate() {
                    let Some(ix) = xm else { continue };
                    out[dbase + oy * ow + ox] = src[sbase + iy * w + ix];
                }
            }
        }
    }

    let out_shape = vec![n, c, oh, ow];
    let Some(node) = x.node.clone() else {
        return Tensor::from_vec(out, &out_shape);
    };
    Ok(node.tape.clone().record(
        out_shape,
        out,
        vec![node],
        Box::new(move |g, sink| {
            let mut gx = vec![T::zero(); n * c * h * w];
            for img in 0..n * c {
                let sbase = img * h * w;
                let dbase = img * oh * ow;
                for (oy, ym) in ymap.iter().enumerate() {
                    let Some(iy) = ym else { continue };
                    for (ox, xm) in xmap.iter().enumerate() {
                        let Some(ix) = xm else { continue };
                        gx[sbase + iy * w + ix] =
                            gx[sbase + iy * w + ix] + g[dbase + oy * ow + ox];
                    }
                }
            }
            sink(0, gx);
        }),
    ))
}

/// Reflection padding by `p` on all spatial sides.
pub fn reflection_pad<T: Scalar>(x: &Tensor<T>, p: usize) -> Result<Tensor<T>> {
    pad2d(x, p, p, PadMode::Reflect)
}
