use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// 2x bilinear upsampling with corner alignment: output extent is doubled
/// and source coordinates follow `src = dst * (in - 1) / (out - 1)`.
pub fn upsample_bilinear_2x<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.len() != 4 {
        return Err(Error::invalid(
            "upsample_bilinear_2x",
            format!("expected NCHW tensor, got shape {:?}", s),
        ));
    }
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (oh, ow) = (2 * h, 2 * w);

    // per-axis (lo index, hi index, hi weight)
    let axis_map = |extent: usize, out_extent: usize| -> Vec<(usize, usize, f64)> {
        (0..out_extent)
            .map(|o| {
                if extent == 1 {
                    return (0, 0, 0.0);
                }
                let src = o as f64 * (extent - 1) as f64 / (out_extent - 1) as f64;
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(extent - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let ymap = axis_map(h, oh);
    let xmap = axis_map(w, ow);

    let mut out = vec![T::zero(); n * c * oh * ow];
    {
        let src = x.data();
        for img in 0..n * c {
            let ibase = img * h * w;
            let obase = img * oh * ow;
            for (oy, &(y0, y1, wy)) in ymap.iter().enumerate() {
                for (ox, &(x0, x1, wx)) in xmap.iter().enumerate() {
                    let v00 = src[ibase + y0 * w + x0].as_f64();
                    let v01 = src[ibase + y0 * w + x1].as_f64();
                    let v10 = src[ibase + y1 * w + x0].as_f64();
                    let v11 = src[ibase + y1 * w + x1].as_f64();
                    let top = v00 * (1.0 - wx) + v01 * wx;
                    let bot = v10 * (1.0 - wx) + v11 * wx;
                    out[obase + oy * ow + ox] = T::from_f64(top * (1.0 - wy) + bot * wy);
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
                for (oy, &(y0, y1, wy)) in ymap.iter().enumerate() {
                    for (ox, &(x0, x1, wx)) in xmap.iter().enumerate() {
                        let go = g[obase + oy * ow + ox].as_f64();
                        let add = |gx: &mut Vec<T>, idx: usize, v: f64| {
                            gx[idx] = gx[idx] + T::from_f64(v);
                        };
                        add(&mut gx, ibase + y0 * w + x0, go * (1.0 - wy) * (1.0 - wx));
                        add(&mut gx, ibase + y0 * w + x1, go * (1.0 - wy) * wx);
                        add(&mut gx, ibase + y1 * w + x0, go * wy * (1.0 - wx));
                        add(&mut gx, ibase + y1 * w + x1, go * wy * wx);
                    }
                }
            }
            sink(0, gx);
        }),
    ))
}
