use crate::tensor::{Scalar, Tensor};

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.unary(
        "relu",
        |v| if v > T::zero() { v } else { T::zero() },
        |v, _| if v > T::zero() { T::one() } else { T::zero() },
    )
}

/// LeakyReLU with negative slope 0.01.
pub fn leaky_relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let slope = T::from_f64(0.01);
    x.unary(
        "leaky_relu",
        move |v| if v > T::zero() { v } else { v * slope },
        move |v, _| if v > T::zero() { T::one() } else { slope },
    )
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.unary(
        "sigmoid",
        |v| T::one() / (T::one() + (-v).exp()),
        |_, y| y * (T::one() - y),
    )
}

/// Exact GELU: `x * Phi(x)` with the Gaussian CDF evaluated via erf.
pub fn gelu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let half = T::from_f64(0.5);
    let inv_sqrt2 = T::from_f64(std::f64::consts::FRAC_1_SQRT_2);
    // 1/sqrt(2*pi), for the pdf term in the derivative
    let inv_sqrt_2pi = T::from_f64(0.3989422804014327);
    x.unary(
        "gelu",
        move |v| v * half * (T::one() + (v * inv_sqrt2).erf()),
        move |v, _| {
            let cdf = half * (T::one() + (v * inv_sqrt2).erf());
            let pdf = inv_sqrt_2pi * (-(v * v) * half).exp();
            cdf + v * pdf
        },
    )
}

/// Hard sigmoid used as a cheap bounded activation: `clamp(x, 0, 1)`.
pub fn hard_sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.clamp(T::zero(), T::one())
}
