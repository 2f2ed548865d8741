use crate::error::{Error, Result};

/// Row-major strides for a shape.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// NumPy-style broadcast of two shapes (right-aligned, extent-1 dims expand).
pub(crate) fn broadcast_shapes(
    a: &[usize],
    b: &[usize],
    op: &'static str,
) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            return Err(Error::shape(op, a, b));
        };
    }
    Ok(out)
}

/// Strides of `shape` aligned into a broadcast output of shape `out`,
/// with stride 0 on broadcast dimensions.
pub(crate) fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let s = strides(shape);
    let offset = out.len() - shape.len();
    let mut bs = vec![0; out.len()];
    for i in 0..out.len() {
        if i >= offset && shape[i - offset] != 1 {
            bs[i] = s[i - offset];
        }
    }
    bs
}

/// Visits every element of the broadcast output, yielding the linear
/// indices `(out, a, b)`.
pub(crate) fn for_each_broadcast2(
    out_shape: &[usize],
    a_shape: &[usize],
    b_shape: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let n: usize = out_shape.iter().product();
    let rank = out_shape.len();
    let sa = broadcast_strides(a_shape, out_shape);
    let sb = broadcast_strides(b_shape, out_shape);
    let mut coords = vec![0usize; rank];
    let mut ia = 0usize;
    let mut ib = 0usize;
    for io in 0..n {
        f(io, ia, ib);
        // odometer increment
        for d in (0..rank).rev() {
            coords[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if coords[d] < out_shape[d] {
                break;
            }
            ia -= sa[d] * out_shape[d];
            ib -= sb[d] * out_shape[d];
            coords[d] = 0;
        }
    }
}

/// Visits every element of a broadcast from `src_shape` to `out_shape`,
/// yielding `(out_index, src_index)`.
pub(crate) fn for_each_broadcast1(
    out_shape: &[usize],
    src_shape: &[usize],
    mut f: impl FnMut(usize, usize),
) {
    for_each_broadcast2(out_shape, src_shape, &[], |io, is, _| f(io, is));
}
