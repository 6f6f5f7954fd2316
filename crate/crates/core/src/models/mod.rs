//! The four single-hidden-layer architectures, exact backpropagation, a
//! softmax classification head, and the pre-activation probe.
//!
//! Every network is a [`HiddenLayer`] producing a feature vector followed by a
//! linear read-out:
//!
//! | architecture | hidden layer                  | features |
//! |--------------|-------------------------------|----------|
//! | vanilla      | sigmoid of `⟨x,w_k⟩+b_k`      | `n`      |
//! | Gallant–White| cosine squasher of the same   | `n`      |
//! | Silvescu     | `Π_j cos(ω_kj x_j + φ_kj)`    | `n`      |
//! | Liu          | `cos(⟨w_k,x⟩+b_k)`, `sin(⟨p_k,x⟩+q_k)` | `2n` |
//!
//! For regression the read-out is `v0 + ⟨v, features⟩` (for Liu the first `n`
//! read-out weights are `v`, the last `n` are `u`). For classification it is a
//! `features × C` matrix plus a bias, followed by softmax.
//!
//! Parameter tensors are always listed hidden-first, read-out last; gradients
//! ([`Gradients`]) and the serialized form use the same order.

mod hidden;
pub mod io;
mod probe;

pub use hidden::{
    CosSinLayer, CosineProductLayer, HiddenCache, HiddenLayer, Prepared, SquashingLayer,
};
pub use probe::{preactivation_probe, Histogram, PreactivationReport};

use std::fmt;
use std::str::FromStr;

use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::numerics::{softmax_in_place, Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Architecture {
    Vanilla,
    GallantWhite,
    Silvescu,
    Liu,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Vanilla,
        Architecture::GallantWhite,
        Architecture::Silvescu,
        Architecture::Liu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Vanilla => "vanilla",
            Self::GallantWhite => "gw",
            Self::Silvescu => "silvescu",
            Self::Liu => "liu",
        }
    }

    pub fn tag(self) -> u32 {
        match self {
            Self::Vanilla => 0,
            Self::GallantWhite => 1,
            Self::Silvescu => 2,
            Self::Liu => 3,
        }
    }

    pub(crate) fn from_tag(tag: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.tag() == tag)
    }

    /// Freshly initialized hidden layer for `d` inputs and `n` units.
    pub fn init_hidden(self, d: usize, n: usize, rng: &mut Rng) -> HiddenLayer {
        match self {
            Self::Vanilla => HiddenLayer::squashing(ActivationKind::Sigmoid, d, n, rng),
            Self::GallantWhite => HiddenLayer::squashing(ActivationKind::CosineSquasher, d, n, rng),
            Self::Silvescu => HiddenLayer::cosine_product(d, n, rng),
            Self::Liu => HiddenLayer::cos_sin(d, n, rng),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vanilla" | "sigmoid" => Ok(Self::Vanilla),
            "gw" | "gallant-white" => Ok(Self::GallantWhite),
            "silvescu" => Ok(Self::Silvescu),
            "liu" => Ok(Self::Liu),
            other => Err(Error::Domain(format!("unknown architecture '{other}'"))),
        }
    }
}

impl HiddenLayer {
    pub fn architecture(&self) -> Architecture {
        match self {
            Self::Squashing(l) if l.kind == ActivationKind::Sigmoid => Architecture::Vanilla,
            Self::Squashing(_) => Architecture::GallantWhite,
            Self::CosineProduct(_) => Architecture::Silvescu,
            Self::CosSin(_) => Architecture::Liu,
        }
    }
}

/// Anything with an ordered list of trainable tensors.
pub trait Parameterized {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn zero_gradients(&self) -> Gradients {
        Gradients {
            tensors: self.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// One gradient array per parameter tensor, same order and lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn fill_zero(&mut self) {
        for t in &mut self.tensors {
            t.fill(0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.tensors.iter_mut().flatten() {
            *v *= factor;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|v| v.is_finite())
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tensors.iter().map(Vec::len).collect()
    }
}

/// Hidden features together with the pre-activations that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenOutput {
    pub features: Vec<f64>,
    pub preactivations: Vec<f64>,
}

/// Reusable buffers for forward/backward passes over a batch.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    prepared: Prepared,
    cache: HiddenCache,
    dfeatures: Vec<f64>,
    logits: Vec<f64>,
}

impl Workspace {
    /// Refreshes per-batch precomputation; call after every parameter update.
    pub fn prepare(&mut self, hidden: &HiddenLayer) {
        self.prepared = hidden.prepare();
    }

    pub fn features(&self) -> &[f64] {
        &self.cache.features
    }
}

fn check_input(hidden: &HiddenLayer, x: &[f64]) -> Result<()> {
    if x.len() != hidden.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "network input",
            expected: hidden.input_dim(),
            found: x.len(),
        });
    }
    Ok(())
}

pub fn hidden_features(hidden: &HiddenLayer, x: &[f64]) -> Result<HiddenOutput> {
    check_input(hidden, x)?;
    let mut cache = HiddenCache::default();
    hidden.forward_into(x, &hidden.prepare(), &mut cache);
    Ok(HiddenOutput {
        features: cache.features,
        preactivations: cache.preactivations,
    })
}

/// Single-output network `x ↦ v0 + ⟨v, features(x)⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionNet {
    pub hidden: HiddenLayer,
    /// Read-out weights, one per feature.
    pub out: Vec<f64>,
    pub bias: f64,
}

impl RegressionNet {
    pub fn new(arch: Architecture, d: usize, n: usize, rng: &mut Rng) -> Self {
        let hidden = arch.init_hidden(d, n, rng);
        let fc = hidden.feature_count();
        let s = 1.0 / (fc as f64).sqrt();
        let out = (0..fc).map(|_| rng.uniform_range(-s, s)).collect();
        Self {
            hidden,
            out,
            bias: 0.0,
        }
    }

    pub fn from_parts(hidden: HiddenLayer, out: Vec<f64>, bias: f64) -> Result<Self> {
        if out.len() != hidden.feature_count() {
            return Err(Error::DimensionMismatch {
                context: "read-out weights",
                expected: hidden.feature_count(),
                found: out.len(),
            });
        }
        Ok(Self { hidden, out, bias })
    }

    pub fn architecture(&self) -> Architecture {
        self.hidden.architecture()
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.input_dim()
    }

    pub fn units(&self) -> usize {
        self.hidden.units()
    }

    /// Liu's `v` (cos bank) or the single read-out vector otherwise.
    pub fn v(&self) -> &[f64] {
        &self.out[..self.hidden.units()]
    }

    /// Liu's `u` (sin bank); empty for the other architectures.
    pub fn u(&self) -> &[f64] {
        &self.out[self.hidden.units()..]
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        check_input(&self.hidden, x)?;
        let mut ws = Workspace::default();
        ws.prepare(&self.hidden);
        Ok(self.forward_with(x, &mut ws))
    }

    /// Forward pass using prepared buffers; `x` must have the input dimension.
    pub fn forward_with(&self, x: &[f64], ws: &mut Workspace) -> f64 {
        self.hidden.forward_into(x, &ws.prepared, &mut ws.cache);
        self.bias
            + self
                .out
                .iter()
                .zip(&ws.cache.features)
                .map(|(v, f)| v * f)
                .sum::<f64>()
    }

    /// Adds `upstream · ∂output/∂θ` to `grads`. Must follow `forward_with(x, ws)`.
    pub fn backward_with(
        &self,
        x: &[f64],
        ws: &mut Workspace,
        upstream: f64,
        grads: &mut Gradients,
    ) {
        let h = self.hidden.tensor_count();
        let (hidden_grads, out_grads) = grads.tensors.split_at_mut(h);
        for (g, f) in out_grads[0].iter_mut().zip(&ws.cache.features) {
            *g += upstream * f;
        }
        out_grads[1][0] += upstream;
        ws.dfeatures.clear();
        ws.dfeatures.extend(self.out.iter().map(|v| upstream * v));
        self.hidden
            .backward_into(x, &mut ws.cache, &ws.dfeatures, hidden_grads);
    }

    /// Gradient of `upstream · output(x)` with respect to every tensor.
    pub fn backward(&self, x: &[f64], upstream: f64) -> Result<Gradients> {
        check_input(&self.hidden, x)?;
        let mut ws = Workspace::default();
        ws.prepare(&self.hidden);
        let mut grads = self.zero_gradients();
        self.forward_with(x, &mut ws);
        self.backward_with(x, &mut ws, upstream, &mut grads);
        Ok(grads)
    }

    pub fn permute_units(&self, perm: &[usize]) -> Self {
        let n = self.units();
        let out = if self.hidden.feature_count() == 2 * n {
            perm.iter()
                .map(|&i| self.out[i])
                .chain(perm.iter().map(|&i| self.out[n + i]))
                .collect()
        } else {
            perm.iter().map(|&i| self.out[i]).collect()
        };
        Self {
            hidden: self.hidden.permute_units(perm),
            out,
            bias: self.bias,
        }
    }
}

impl Parameterized for RegressionNet {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.hidden.tensors();
        t.push(&self.out);
        t.push(std::slice::from_ref(&self.bias));
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.hidden.tensors_mut();
        t.push(&mut self.out);
        t.push(std::slice::from_mut(&mut self.bias));
        t
    }
}

/// Hidden features followed by a linear map to `C` logits and softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHead {
    pub hidden: HiddenLayer,
    /// `feature_count × C`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl ClassifierHead {
    pub fn new(
        arch: Architecture,
        d: usize,
        n: usize,
        classes: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Domain(format!(
                "classifier needs at least 2 classes, got {classes}"
            )));
        }
        let hidden = arch.init_hidden(d, n, rng);
        let fc = hidden.feature_count();
        let weights = Matrix::uniform(fc, classes, 1.0 / (fc as f64).sqrt(), rng);
        Ok(Self {
            hidden,
            weights,
            bias: vec![0.0; classes],
        })
    }

    pub fn from_parts(hidden: HiddenLayer, weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() != hidden.feature_count() {
            return Err(Error::DimensionMismatch {
                context: "classifier weights rows",
                expected: hidden.feature_count(),
                found: weights.rows(),
            });
        }
        if bias.len() != weights.cols() {
            return Err(Error::DimensionMismatch {
                context: "classifier bias",
                expected: weights.cols(),
                found: bias.len(),
            });
        }
        if bias.len() < 2 {
            return Err(Error::Domain("classifier needs at least 2 classes".into()));
        }
        Ok(Self {
            hidden,
            weights,
            bias,
        })
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn architecture(&self) -> Architecture {
        self.hidden.architecture()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_input(&self.hidden, x)?;
        let mut ws = Workspace::default();
        ws.prepare(&self.hidden);
        Ok(self.forward_with(x, &mut ws).to_vec())
    }

    /// Logits before softmax, left in the workspace.
    pub fn logits_with<'w>(&self, x: &[f64], ws: &'w mut Workspace) -> &'w [f64] {
        self.hidden.forward_into(x, &ws.prepared, &mut ws.cache);
        ws.logits.clear();
        ws.logits.extend_from_slice(&self.bias);
        crate::numerics::add_row_times_matrix(&mut ws.logits, &ws.cache.features, &self.weights);
        &ws.logits
    }

    /// Class probabilities; `x` must have the input dimension.
    pub fn forward_with<'w>(&self, x: &[f64], ws: &'w mut Workspace) -> &'w [f64] {
        self.logits_with(x, ws);
        softmax_in_place(&mut ws.logits);
        &ws.logits
    }

    /// Adds `Σ_c dlogits_c · ∂logit_c/∂θ` to `grads`. Must follow a forward call on `x`.
    pub fn backward_with(
        &self,
        x: &[f64],
        ws: &mut Workspace,
        dlogits: &[f64],
        grads: &mut Gradients,
    ) {
        let h = self.hidden.tensor_count();
        let classes = self.classes();
        let (hidden_grads, out_grads) = grads.tensors.split_at_mut(h);
        let fc = self.hidden.feature_count();
        ws.dfeatures.clear();
        ws.dfeatures.resize(fc, 0.0);
        for f in 0..fc {
            let feat = ws.cache.features[f];
            let grow = &mut out_grads[0][f * classes..(f + 1) * classes];
            let wrow = self.weights.row(f);
            let mut acc = 0.0;
            for c in 0..classes {
                grow[c] += feat * dlogits[c];
                acc += wrow[c] * dlogits[c];
            }
            ws.dfeatures[f] = acc;
        }
        for (g, d) in out_grads[1].iter_mut().zip(dlogits) {
            *g += d;
        }
        self.hidden
            .backward_into(x, &mut ws.cache, &ws.dfeatures, hidden_grads);
    }

    pub fn backward(&self, x: &[f64], dlogits: &[f64]) -> Result<Gradients> {
        check_input(&self.hidden, x)?;
        if dlogits.len() != self.classes() {
            return Err(Error::DimensionMismatch {
                context: "upstream logit gradient",
                expected: self.classes(),
                found: dlogits.len(),
            });
        }
        let mut ws = Workspace::default();
        ws.prepare(&self.hidden);
        let mut grads = self.zero_gradients();
        self.logits_with(x, &mut ws);
        self.backward_with(x, &mut ws, dlogits, &mut grads);
        Ok(grads)
    }

    pub fn predict(&self, x: &[f64], ws: &mut Workspace) -> usize {
        argmax(self.logits_with(x, ws))
    }
}

impl Parameterized for ClassifierHead {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.hidden.tensors();
        t.push(self.weights.as_slice());
        t.push(&self.bias);
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.hidden.tensors_mut();
        t.push(self.weights.as_mut_slice());
        t.push(&mut self.bias);
        t
    }
}

/// Index of the largest entry; first wins on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
