//! Scalar activations: the logistic sigmoid and the Gallant–White cosine squasher.

use std::f64::consts::{FRAC_PI_2, PI};

/// Scalar nonlinearities. The Silvescu and Liu units are structural and live
/// in [`crate::models`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    Sigmoid,
    CosineSquasher,
}

impl ActivationKind {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::Sigmoid => sigmoid(x),
            Self::CosineSquasher => cosine_squasher(x),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        activation_derivative(self, x)
    }
}

/// `1 / (1 + e^{-x})`, evaluated so that `exp` never overflows.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// 0 below `-π/2`, `½(cos(x + 3π/2) + 1)` on `[-π/2, π/2]`, 1 above.
#[inline]
pub fn cosine_squasher(x: f64) -> f64 {
    if x < -FRAC_PI_2 {
        0.0
    } else if x > FRAC_PI_2 {
        1.0
    } else {
        0.5 * ((x + 1.5 * PI).cos() + 1.0)
    }
}

/// Exact derivative of the activation. For the squasher the value at `±π/2`
/// is 0, where both one-sided derivatives agree.
#[inline]
pub fn activation_derivative(kind: ActivationKind, x: f64) -> f64 {
    match kind {
        ActivationKind::Sigmoid => {
            let s = sigmoid(x);
            s * (1.0 - s)
        }
        ActivationKind::CosineSquasher => {
            if x.abs() >= FRAC_PI_2 {
                0.0
            } else {
                // d/dx ½cos(x + 3π/2) = -½ sin(x + 3π/2) = ½ cos x
                0.5 * x.cos()
            }
        }
    }
}
