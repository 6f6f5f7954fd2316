use crate::activations::ActivationKind;
use crate::numerics::{dot, Matrix, Rng};

/// One hidden layer of a single-hidden-layer network, without output weights.
#[derive(Clone, Debug, PartialEq)]
pub enum HiddenLayer {
    /// `σ(⟨x, w_k⟩ + b_k)` with a scalar squashing function.
    Squashing(SquashingLayer),
    /// `Π_j cos(ω_kj x_j + φ_kj)`.
    CosineProduct(CosineProductLayer),
    /// `cos(⟨w_k, x⟩ + b_k)` and `sin(⟨p_k, x⟩ + q_k)` as two separate banks.
    CosSin(CosSinLayer),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SquashingLayer {
    pub kind: ActivationKind,
    pub w: Matrix,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CosineProductLayer {
    pub omega: Matrix,
    pub phi: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CosSinLayer {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub p: Matrix,
    pub q: Vec<f64>,
}

/// Per-parameter-version precomputation shared by every sample of a batch.
///
/// For the cosine-product layer this holds `cos φ_kj` and `sin φ_kj`, the unit
/// factors for inputs that are exactly zero (most MNIST pixels).
#[derive(Clone, Debug, Default)]
pub struct Prepared {
    zero_input_cos: Vec<f64>,
    zero_input_sin: Vec<f64>,
}

/// Forward intermediates kept for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct HiddenCache {
    pub features: Vec<f64>,
    /// Squashing: `n` pre-activations. Cos/sin: `2n` (cos bank then sin bank).
    /// Cosine product: the `n × d` cosine arguments, row-major.
    pub preactivations: Vec<f64>,
    cos: Vec<f64>,
    sin: Vec<f64>,
    suffix: Vec<f64>,
}

impl HiddenLayer {
    pub fn squashing(kind: ActivationKind, d: usize, n: usize, rng: &mut Rng) -> Self {
        let s = 1.0 / (d as f64).sqrt();
        let w = Matrix::uniform(n, d, s, rng);
        let b = (0..n).map(|_| rng.uniform_range(-s, s)).collect();
        Self::Squashing(SquashingLayer { kind, w, b })
    }

    pub fn cosine_product(d: usize, n: usize, rng: &mut Rng) -> Self {
        let s = 1.0 / (d as f64).sqrt();
        Self::CosineProduct(CosineProductLayer {
            omega: Matrix::uniform(n, d, s, rng),
            phi: Matrix::zeros(n, d),
        })
    }

    pub fn cos_sin(d: usize, n: usize, rng: &mut Rng) -> Self {
        let s = 1.0 / (d as f64).sqrt();
        let w = Matrix::uniform(n, d, s, rng);
        let p = Matrix::uniform(n, d, s, rng);
        Self::CosSin(CosSinLayer {
            w,
            b: vec![0.0; n],
            p,
            q: vec![0.0; n],
        })
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Self::Squashing(l) => l.w.cols(),
            Self::CosineProduct(l) => l.omega.cols(),
            Self::CosSin(l) => l.w.cols(),
        }
    }

    /// Hidden size `n`.
    pub fn units(&self) -> usize {
        match self {
            Self::Squashing(l) => l.w.rows(),
            Self::CosineProduct(l) => l.omega.rows(),
            Self::CosSin(l) => l.w.rows(),
        }
    }

    /// `n`, or `2n` for the cos/sin layer.
    pub fn feature_count(&self) -> usize {
        match self {
            Self::CosSin(l) => 2 * l.w.rows(),
            _ => self.units(),
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        match self {
            Self::Squashing(l) => vec![l.w.as_slice(), &l.b],
            Self::CosineProduct(l) => vec![l.omega.as_slice(), l.phi.as_slice()],
            Self::CosSin(l) => vec![l.w.as_slice(), &l.b, l.p.as_slice(), &l.q],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Self::Squashing(l) => vec![l.w.as_mut_slice(), &mut l.b],
            Self::CosineProduct(l) => vec![l.omega.as_mut_slice(), l.phi.as_mut_slice()],
            Self::CosSin(l) => vec![l.w.as_mut_slice(), &mut l.b, l.p.as_mut_slice(), &mut l.q],
        }
    }

    pub fn tensor_count(&self) -> usize {
        match self {
            Self::Squashing(_) | Self::CosineProduct(_) => 2,
            Self::CosSin(_) => 4,
        }
    }

    pub fn prepare(&self) -> Prepared {
        match self {
            Self::CosineProduct(l) => {
                let (zero_input_sin, zero_input_cos) =
                    l.phi.as_slice().iter().map(|p| p.sin_cos()).unzip();
                Prepared {
                    zero_input_cos,
                    zero_input_sin,
                }
            }
            _ => Prepared::default(),
        }
    }

    /// Fills `cache` with features and pre-activations for input `x`.
    /// `x.len()` must equal [`Self::input_dim`]; callers validate.
    pub fn forward_into(&self, x: &[f64], prep: &Prepared, cache: &mut HiddenCache) {
        let n = self.units();
        cache.features.resize(self.feature_count(), 0.0);
        match self {
            Self::Squashing(l) => {
                cache.preactivations.resize(n, 0.0);
                for k in 0..n {
                    let z = dot(l.w.row(k), x) + l.b[k];
                    cache.preactivations[k] = z;
                    cache.features[k] = l.kind.apply(z);
                }
            }
            Self::CosineProduct(l) => {
                let d = x.len();
                cache.preactivations.resize(n * d, 0.0);
                cache.cos.resize(n * d, 0.0);
                cache.sin.resize(n * d, 0.0);
                let omega = l.omega.as_slice();
                let phi = l.phi.as_slice();
                let prepared = prep.zero_input_cos.len() == n * d;
                for k in 0..n {
                    let mut product = 1.0;
                    for (j, &xj) in x.iter().enumerate() {
                        let idx = k * d + j;
                        let (s, c) = if xj == 0.0 && prepared {
                            cache.preactivations[idx] = phi[idx];
                            (prep.zero_input_sin[idx], prep.zero_input_cos[idx])
                        } else {
                            let arg = omega[idx] * xj + phi[idx];
                            cache.preactivations[idx] = arg;
                            arg.sin_cos()
                        };
                        cache.cos[idx] = c;
                        cache.sin[idx] = s;
                        product *= c;
                    }
                    cache.features[k] = product;
                }
            }
            Self::CosSin(l) => {
                cache.preactivations.resize(2 * n, 0.0);
                for k in 0..n {
                    let a = dot(l.w.row(k), x) + l.b[k];
                    let c = dot(l.p.row(k), x) + l.q[k];
                    cache.preactivations[k] = a;
                    cache.preactivations[n + k] = c;
                    cache.features[k] = a.cos();
                    cache.features[n + k] = c.sin();
                }
            }
        }
    }

    /// Accumulates `∂L/∂θ` for the hidden tensors into `grads` (in
    /// [`Self::tensors`] order) given `∂L/∂features`. Uses the intermediates
    /// left in `cache` by the matching [`Self::forward_into`] call.
    pub fn backward_into(
        &self,
        x: &[f64],
        cache: &mut HiddenCache,
        dfeatures: &[f64],
        grads: &mut [Vec<f64>],
    ) {
        let n = self.units();
        let d = x.len();
        match self {
            Self::Squashing(l) => {
                let (gw, rest) = grads.split_at_mut(1);
                let (gw, gb) = (&mut gw[0], &mut rest[0]);
                for k in 0..n {
                    let g = dfeatures[k] * l.kind.derivative(cache.preactivations[k]);
                    if g == 0.0 {
                        continue;
                    }
                    axpy(&mut gw[k * d..(k + 1) * d], g, x);
                    gb[k] += g;
                }
            }
            Self::CosineProduct(_) => {
                let (gomega, rest) = grads.split_at_mut(1);
                let (gomega, gphi) = (&mut gomega[0], &mut rest[0]);
                cache.suffix.resize(d + 1, 0.0);
                for k in 0..n {
                    let g = dfeatures[k];
                    if g == 0.0 {
                        continue;
                    }
                    let cos = &cache.cos[k * d..(k + 1) * d];
                    let sin = &cache.sin[k * d..(k + 1) * d];
                    // Leave-one-out products via prefix/suffix, no division.
                    cache.suffix[d] = 1.0;
                    for j in (0..d).rev() {
                        cache.suffix[j] = cache.suffix[j + 1] * cos[j];
                    }
                    let mut prefix = 1.0;
                    for j in 0..d {
                        let dcos = -g * prefix * cache.suffix[j + 1] * sin[j];
                        gphi[k * d + j] += dcos;
                        gomega[k * d + j] += dcos * x[j];
                        prefix *= cos[j];
                    }
                }
            }
            Self::CosSin(_) => {
                let [gw, gb, gp, gq] = grads else {
                    unreachable!("cos/sin layer has four tensors")
                };
                for k in 0..n {
                    let ga = -dfeatures[k] * cache.preactivations[k].sin();
                    if ga != 0.0 {
                        axpy(&mut gw[k * d..(k + 1) * d], ga, x);
                        gb[k] += ga;
                    }
                    let gc = dfeatures[n + k] * cache.preactivations[n + k].cos();
                    if gc != 0.0 {
                        axpy(&mut gp[k * d..(k + 1) * d], gc, x);
                        gq[k] += gc;
                    }
                }
            }
        }
    }

    /// Reorders hidden units so that new unit `k` is old unit `perm[k]`.
    pub fn permute_units(&self, perm: &[usize]) -> Self {
        let pick = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
        match self {
            Self::Squashing(l) => Self::Squashing(SquashingLayer {
                kind: l.kind,
                w: l.w.permute_rows(perm),
                b: pick(&l.b),
            }),
            Self::CosineProduct(l) => Self::CosineProduct(CosineProductLayer {
                omega: l.omega.permute_rows(perm),
                phi: l.phi.permute_rows(perm),
            }),
            Self::CosSin(l) => Self::CosSin(CosSinLayer {
                w: l.w.permute_rows(perm),
                b: pick(&l.b),
                p: l.p.permute_rows(perm),
                q: pick(&l.q),
            }),
        }
    }
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
