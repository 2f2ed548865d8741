//! Elementwise, reduction, shaping and matmul primitives with their
//! backward rules.

use super::broadcast::{broadcast_shapes, for_each_broadcast1, for_each_broadcast2, strides};
use super::tape::NodeRef;
use super::{Scalar, Tape, Tensor};
use crate::error::{Error, Result};
use std::sync::Arc;

impl<T: Scalar> Tensor<T> {
    /// Generic recorded unary op. `df(x, y)` is dy/dx at one element.
    pub(crate) fn unary(
        &self,
        _op: &'static str,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + 'static,
    ) -> Tensor<T> {
        let out: Vec<T> = self.data().iter().map(|&v| f(v)).collect();
        let Some(node) = self.node.clone() else {
            return Tensor::from_vec(out, self.shape()).unwrap();
        };
        let x = self.data_arc();
        let y = Arc::new(out.clone());
        node.tape.clone().record(
            self.shape().to_vec(),
            out,
            vec![node],
            Box::new(move |g, sink| {
                let gx = g
                    .iter()
                    .zip(x.iter().zip(y.iter()))
                    .map(|(&gi, (&xi, &yi))| gi * df(xi, yi))
                    .collect();
                sink(0, gx);
            }),
        )
    }

    /// Generic recorded broadcasting binary op. `dfa`/`dfb` give the local
    /// derivative w.r.t. each operand as `(a, b, grad_out) -> grad`.
    pub(crate) fn binary(
        &self,
        other: &Tensor<T>,
        op: &'static str,
        f: impl Fn(T, T) -> T,
        dfa: impl Fn(T, T, T) -> T + 'static,
        dfb: impl Fn(T, T, T) -> T + 'static,
    ) -> Result<Tensor<T>> {
        let out_shape = broadcast_shapes(self.shape(), other.shape(), op)?;
        let n: usize = out_shape.iter().product();
        let mut out = vec![T::zero(); n];
        {
            let a = self.data();
            let b = other.data();
            for_each_broadcast2(&out_shape, self.shape(), other.shape(), |io, ia, ib| {
                out[io] = f(a[ia], b[ib]);
            });
        }
        let Some(tape) = Tape::of(&[self, other], op)? else {
            return Tensor::from_vec(out, &out_shape);
        };

        let a_data = self.data_arc();
        let b_data = other.data_arc();
        let a_shape = self.shape().to_vec();
        let b_shape = other.shape().to_vec();
        let oshape = out_shape.clone();
        let mut parents = Vec::new();
        let mut a_pi = None;
        let mut b_pi = None;
        if let Some(na) = self.node.clone() {
            a_pi = Some(parents.len());
            parents.push(na);
        }
        if let Some(nb) = other.node.clone() {
            b_pi = Some(parents.len());
            parents.push(nb);
        }
        Ok(tape.record(
            out_shape,
            out,
            parents,
            Box::new(move |g, sink| {
                if let Some(pi) = a_pi {
                    let mut ga = vec![T::zero(); a_data.len()];
                    for_each_broadcast2(&oshape, &a_shape, &b_shape, |io, ia, ib| {
                        ga[ia] = ga[ia] + dfa(a_data[ia], b_data[ib], g[io]);
                    });
                    sink(pi, ga);
                }
                if let Some(pi) = b_pi {
                    let mut gb = vec![T::zero(); b_data.len()];
                    for_each_broadcast2(&oshape, &a_shape, &b_shape, |io, ia, ib| {
                        gb[ib] = gb[ib] + dfb(a_data[ia], b_data[ib], g[io]);
                    });
                    sink(pi, gb);
                }
            }),
        ))
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, "add", |a, b| a + b, |_, _, g| g, |_, _, g| g)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, "sub", |a, b| a - b, |_, _, g| g, |_, _, g| -g)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(
            other,
            "mul",
            |a, b| a * b,
            |_, b, g| g * b,
            |a, _, g| g * a,
        )
    }

    pub fn div(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(
            other,
            "div",
            |a, b| a / b,
            |_, b, g| g / b,
            |a, b, g| -g * a / (b * b),
        )
    }

    pub fn neg(&self) -> Tensor<T> {
        self.unary("neg", |v| -v, |_, _| -T::one())
    }

    pub fn add_scalar(&self, c: T) -> Tensor<T> {
        self.unary("add_scalar", |v| v + c, |_, _| T::one())
    }

    pub fn mul_scalar(&self, c: T) -> Tensor<T> {
        self.unary("mul_scalar", move |v| v * c, move |_, _| c)
    }

    pub fn abs(&self) -> Tensor<T> {
        self.unary(
            "abs",
            |v| v.abs(),
            |x, _| {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    pub fn exp(&self) -> Tensor<T> {
        self.unary("exp", |v| v.exp(), |_, y| y)
    }

    pub fn ln(&self) -> Tensor<T> {
        self.unary("ln", |v| v.ln(), |x, _| T::one() / x)
    }

    pub fn sqrt(&self) -> Tensor<T> {
        self.unary(
            "sqrt",
            |v| v.sqrt(),
            |_, y| T::one() / (T::from_f64(2.0) * y),
        )
    }

    /// x^p for fixed exponent p.
    pub fn powf(&self, p: T) -> Tensor<T> {
        self.unary(
            "powf",
            move |v| v.powf(p),
            move |x, _| p * x.powf(p - T::one()),
        )
    }

    /// Zero gradient outside [lo, hi].
    pub fn clamp(&self, lo: T, hi: T) -> Tensor<T> {
        self.unary(
            "clamp",
            move |v| v.max(lo).min(hi),
            move |x, _| {
                if x >= lo && x <= hi {
                    T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    /// Sum over `axes`. With `keepdim`, reduced axes stay with extent 1.
    pub fn sum_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor<T>> {
        self.reduce_axes(axes, keepdim, false)
    }

    /// Mean over `axes`.
    pub fn mean_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor<T>> {
        self.reduce_axes(axes, keepdim, true)
    }

    fn reduce_axes(&self, axes: &[usize], keepdim: bool, mean: bool) -> Result<Tensor<T>> {
        let rank = self.shape().len();
        for &a in axes {
            if a >= rank {
                return Err(Error::invalid(
                    "sum_axes",
                    format!("axis {} out of range for shape {:?}", a, self.shape()),
                ));
            }
        }
        let reduced: Vec<bool> = (0..rank).map(|d| axes.contains(&d)).collect();
        let kept_shape: Vec<usize> = self
            .shape()
            .iter()
            .enumerate()
            .map(|(d, &e)| if reduced[d] { 1 } else { e })
            .collect();
        let out_shape: Vec<usize> = if keepdim {
            kept_shape.clone()
        } else {
            self.shape()
                .iter()
                .enumerate()
                .filter(|(d, _)| !reduced[*d])
                .map(|(_, &e)| e)
                .collect()
        };
        let count: T = T::from_f64(
            self.shape()
                .iter()
                .enumerate()
                .filter(|(d, _)| reduced[*d])
                .map(|(_, &e)| e as f64)
                .product(),
        );
        let out_n: usize = kept_shape.iter().product();
        let mut out = vec![T::zero(); out_n];
        {
            let x = self.data();
            // input broadcasts onto itself; map each input element to its
            // reduced slot
            let kstrides = strides(&kept_shape);
            let xstrides = strides(self.shape());
            for (i, &v) in x.iter().enumerate() {
                let mut ko = 0;
                for d in 0..rank {
                    let coord = (i / xstrides[d]) % self.shape()[d];
                    if !reduced[d] {
                        ko += coord * kstrides[d];
                    }
                }
                out[ko] = out[ko] + v;
            }
        }
        if mean {
            for v in out.iter_mut() {
                *v = *v / count;
            }
        }

        let Some(node) = self.node.clone() else {
            return Tensor::from_vec(out, &out_shape);
        };
        let in_shape = self.shape().to_vec();
        let scale = if mean { T::one() / count } else { T::one() };
        Ok(node.tape.clone().record(
            out_shape,
            out,
            vec![node],
            Box::new(move |g, sink| {
                let kstrides = strides(&kept_shape);
                let xstrides = strides(&in_shape);
                let n: usize = in_shape.iter().product();
                let mut gx = vec![T::zero(); n];
                for (i, gi) in gx.iter_mut().enumerate() {
                    let mut ko = 0;
                    for d in 0..in_shape.len() {
                        let coord = (i / xstrides[d]) % in_shape[d];
                        if !reduced[d] {
                            ko += coord * kstrides[d];
                        }
                    }
                    *gi = g[ko] * scale;
                }
                sink(0, gx);
            }),
        ))
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum_all(&self) -> Tensor<T> {
        let axes: Vec<usize> = (0..self.shape().len()).collect();
        self.sum_axes(&axes, false)
            .expect("sum_all axes are always valid")
    }

    /// Mean of all elements as a rank-0 tensor.
    pub fn mean_all(&self) -> Tensor<T> {
        let axes: Vec<usize> = (0..self.shape().len()).collect();
        self.mean_axes(&axes, false)
            .expect("mean_all axes are always valid")
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        let n: usize = shape.iter().product();
        if n != self.numel() {
            return Err(Error::invalid(
                "reshape",
                format!(
                    "cannot reshape {:?} ({} elements) into {:?} ({} elements)",
                    self.shape(),
                    self.numel(),
                    shape,
                    n
                ),
            ));
        }
        let out = self.data().to_vec();
        let Some(node) = self.node.clone() else {
            return Tensor::from_vec(out, shape);
        };
        Ok(node.tape.clone().record(
            shape.to_vec(),
            out,
            vec![node],
            Box::new(move |g, sink| sink(0, g.to_vec())),
        ))
    }

    /// Explicit broadcast; the gradient sums over broadcast axes.
    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Tensor<T>> {
        let out_shape = broadcast_shapes(self.shape(), shape, "broadcast_to")?;
        if out_shape != shape {
            return Err(Error::shape("broadcast_to", self.shape(), shape));
        }
        let n: usize = shape.iter().product();
        let mut out = vec![T::zero(); n];
        {
            let x = self.data();
            for_each_broadcast1(shape, self.shape(), |io, is| out[io] = x[is]);
        }
        let Some(node) = self.node.clone() else {
            return Tensor::from_vec(out, shape);
        };
        let in_shape = self.shape().to_vec();
        let in_len = self.numel();
        let oshape = shape.to_vec();
        Ok(node.tape.clone().record(
            shape.to_vec(),
            out,
            vec![node],
            Box::new(move |g, sink| {
                let mut gx = vec![T::zero(); in_len];
                for_each_broadcast1(&oshape, &in_shape, |io, is| gx[is] = gx[is] + g[io]);
                sink(0, gx);
            }),
        ))
    }

    /// Concatenation along `axis`.
    pub fn concat(parts: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        if parts.is_empty() {
            return Err(Error::invalid("concat", "no tensors given"));
        }
        let rank = parts[0].shape().len();
        if axis >= rank {
            return Err(Error::invalid(
                "concat",
                format!("axis {} out of range for rank {}", axis, rank),
            ));
        }
        let mut out_shape = parts[0].shape().to_vec();
        out_shape[axis] = 0;
        for p in parts {
            if p.shape().len() != rank {
                return Err(Error::shape("concat", parts[0].shape(), p.shape()));
            }
            for d in 0..rank {
                if d != axis && p.shape()[d] != out_shape[d] && parts[0].shape()[d] != p.shape()[d]
                {
                    return Err(Error::shape("concat", parts[0].shape(), p.shape()));
                }
            }
            out_shape[axis] += p.shape()[axis];
        }

        // outer = product of dims before axis, inner = product after
        let outer: usize = out_shape[..axis].iter().product();
        let inner: usize = out_shape[axis + 1..].iter().product();
        let total_axis = out_shape[axis];
        let mut out = vec![T::zero(); outer * total_axis * inner];
        let mut offset = 0;
        for p in parts {
            let e = p.shape()[axis];
            let x = p.data();
            for o in 0..outer {
                let src = o * e * inner;
                let dst = (o * total_axis + offset) * inner;
                out[dst..dst + e * inner].copy_from_slice(&x[src..src + e * inner]);
            }
            offset += e;
        }

        let refs: Vec<&Tensor<T>> = parts.to_vec();
        let Some(tape) = Tape::of(&refs, "concat")? else {
            return Tensor::from_vec(out, &out_shape);
        };
        let mut parents: Vec<NodeRef<T>> = Vec::new();
        // (parent index, axis offset, axis extent, element count)
        let mut segs: Vec<(Option<usize>, usize, usize, usize)> = Vec::new();
        let mut off = 0;
        for p in parts {
            let e = p.shape()[axis];
            let pi = p.node.clone().map(|n| {
                parents.push(n);
                parents.len() - 1
            });
            segs.push((pi, off, e, p.numel()));
            off += e;
        }
        Ok(tape.record(
            out_shape,
            out,
            parents,
            Box::new(move |g, sink| {
                for &(pi, off, e, numel) in &segs {
                    let Some(pi) = pi else { continue };
                    let mut gp = vec![T::zero(); numel];
                    for o in 0..outer {
                        let dst = o * e * inner;
                        let src = (o * total_axis + off) * inner;
                        gp[dst..dst + e * inner].copy_from_slice(&g[src..src + e * inner]);
                    }
                    sink(pi, gp);
                }
            }),
        ))
    }

    /// Contiguous slice `[start, end)` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Tensor<T>> {
        let rank = self.shape().len();
        if axis >= rank || start >= end || end > self.shape()[axis] {
            return Err(Error::invalid(
                "slice",
                format!(
                    "range {}..{} on axis {} invalid for shape {:?}",
                    start,
                    end,
                    axis,
                    self.shape()
                ),
            ));
        }
        let mut out_shape = self.shape().to_vec();
        out_shape[axis] = end - start;
        let outer: usize = self.shape()[..axis].iter().product();
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let full_axis = self.shape()[axis];
        let e = end - start;
        let mut out = vec![T::zero(); outer * e * inner];
        {
            let x = self.data();
            for o in 0..outer {
                let src = (o * full_axis + start) * inner;
                let dst = o * e * inner;
                out[dst..dst + e * inner].copy_from_slice(&x[src..src + e * inner]);
            }
        }
        let Some(node) = self.node.clone() else {
            return Tensor::from_vec(out, &out_shape);
        };
        let in_len = self.numel();
        Ok(node.tape.clone().record(
            out_shape,
            out,
            vec![node],
            Box::new(move |g, sink| {
                let mut gx = vec![T::zero(); in_len];
                for o in 0..outer {
                    let dst = (o * full_axis + start) * inner;
                    let src = o * e * inner;
                    gx[dst..dst + e * inner].copy_from_slice(&g[src..src + e * inner]);
                }
                sink(0, gx);
            }),
        ))
    }

    /// 2-D matrix product.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let (a_shape, b_shape) = (self.shape(), other.shape());
        if a_shape.len() != 2 || b_shape.len() != 2 || a_shape[1] != b_shape[0] {
            return Err(Error::shape("matmul", a_shape, b_shape));
        }
        let (m, k, n) = (a_shape[0], a_shape[1], b_shape[1]);
        let out = matmul_raw(self.data(), other.data(), m, k, n);
        let Some(tape) = Tape::of(&[self, other], "matmul")? else {
            return Tensor::from_vec(out, &[m, n]);
        };
        let a_data = self.data_arc();
        let b_data = other.data_arc();
        let mut parents = Vec::new();
        let mut a_pi = None;
        let mut b_pi = None;
        if let Some(na) = self.node.clone() {
            a_pi = Some(parents.len());
            parents.push(na);
        }
        if let Some(nb) = other.node.clone() {
            b_pi = Some(parents.len());
            parents.push(nb);
        }
        Ok(tape.record(
            vec![m, n],
            out,
            parents,
            Box::new(move |g, sink| {
                if let Some(pi) = a_pi {
                    // dA = G . B^T
                    let bt = transpose_raw(&b_data, k, n);
                    sink(pi, matmul_raw(g, &bt, m, n, k));
                }
                if let Some(pi) = b_pi {
                    // dB = A^T . G
                    let at = transpose_raw(&a_data, m, k);
                    sink(pi, matmul_raw(&at, g, k, m, n));
                }
            }),
        ))
    }
}

fn matmul_raw<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o = *o + aip * bv;
            }
        }
    }
    out
}

fn transpose_raw<T: Scalar>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}
