//! Central finite-difference oracle for unit tests.

use crate::models::{Gradients, Parameterized};

pub const H: f64 = 1e-6;

/// Numerical gradient of `loss` at the current parameters of `model`, one
/// central difference per scalar parameter.
pub fn numerical_gradient<M, F>(model: &M, loss: F) -> Gradients
where
    M: Parameterized + Clone,
    F: Fn(&M) -> f64,
{
    let mut probe = model.clone();
    let shapes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
    let mut tensors = Vec::with_capacity(shapes.len());
    for (ti, &len) in shapes.iter().enumerate() {
        let mut g = vec![0.0; len];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = probe.tensors()[ti][i];
            probe.tensors_mut()[ti][i] = orig + H;
            let plus = loss(&probe);
            probe.tensors_mut()[ti][i] = orig - H;
            let minus = loss(&probe);
            probe.tensors_mut()[ti][i] = orig;
            *gi = (plus - minus) / (2.0 * H);
        }
        tensors.push(g);
    }
    Gradients { tensors }
}

/// First mismatch, as `(tensor, index, analytic, numerical)`.
pub fn compare(
    analytic: &Gradients,
    numerical: &Gradients,
    rel_tol: f64,
    abs_tol: f64,
    small: f64,
) -> Option<(usize, usize, f64, f64)> {
    for (ti, (a, n)) in analytic.tensors.iter().zip(&numerical.tensors).enumerate() {
        for (i, (&a, &n)) in a.iter().zip(n).enumerate() {
            let scale = a.abs().max(n.abs());
            let err = (a - n).abs();
            let ok = if scale < small {
                err < abs_tol
            } else {
                err / scale < rel_tol
            };
            if !ok {
                return Some((ti, i, a, n));
            }
        }
    }
    None
}
