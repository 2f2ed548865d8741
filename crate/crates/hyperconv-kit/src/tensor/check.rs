use super::{Tape, Tensor};
use crate::error::{Error, Result};

/// Compares the tape gradient of a scalar-valued function against central
/// finite differences.
///
/// Returns the max over checked coordinates of
/// `|analytic - central| / (|central| + 1e-12)`. `coords` restricts the
/// check to a subset of input coordinates; `None` checks all of them.
pub fn finite_difference_check<F>(
    f: F,
    x: &Tensor<f64>,
    eps: f64,
    coords: Option<&[usize]>,
) -> Result<f64>
where
    F: Fn(&Tensor<f64>) -> Result<Tensor<f64>>,
{
    if !x.all_finite() {
        return Err(Error::invalid("finite_difference_check", "input not finite"));
    }

    let tape = Tape::new();
    let leaf = tape.leaf(x);
    let y = f(&leaf)?;
    if y.numel() != 1 {
        return Err(Error::invalid(
            "finite_difference_check",
            format!("function output must be scalar, got shape {:?}", y.shape()),
        ));
    }
    // a constant function never records onto the tape; its gradient is zero
    let analytic = if y.node.is_some() {
        tape.backward(&y)?
            .get(&leaf)
            .unwrap_or_else(|| Tensor::zeros(x.shape()))
    } else {
        Tensor::zeros(x.shape())
    };

    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..x.numel()).collect();
            &all
        }
    };

    let base = x.data().to_vec();
    let mut max_rel = 0.0f64;
    for &i in coords {
        let mut plus = base.clone();
        plus[i] += eps;
        let mut minus = base.clone();
        minus[i] -= eps;
        let yp = f(&Tensor::from_vec(plus, x.shape())?)?.item()?;
        let ym = f(&Tensor::from_vec(minus, x.shape())?)?.item()?;
        let numeric = (yp - ym) / (2.0 * eps);
        let rel = (analytic.data()[i] - numeric).abs() / (numeric.abs() + 1e-12);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}
