//! Structurally constrained recurrent language model with a swappable hidden
//! nonlinearity.
//!
//! Row-vector convention, with `B[w]` the row of `B` for word `w`:
//!
//! ```text
//! s_t = (1 − α) B[w_t] + α s_{t−1}
//! z_t = A[w_t] + s_t P + h_{t−1} R
//! h_t = layer(z_t)
//! p(w_{t+1}) = softmax(s_t U + h_t V)
//! ```

use std::f64::consts::PI;
use std::io::Write;

use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::models::io::{Container, SCRN_TAG};
use crate::models::{Architecture, Gradients, Parameterized};
use crate::numerics::{add_row_times_matrix, dot, log_sum_exp, softmax_in_place, Matrix, Rng};
use crate::training::AdamState;

/// Elementwise hidden nonlinearity. The Fourier variants carry per-unit
/// trainable scalars.
#[derive(Clone, Debug, PartialEq)]
pub enum ScrnLayer {
    Sigmoid,
    GallantWhite,
    /// `h_j = cos(ω_j z_j + φ_j)`.
    Silvescu {
        omega: Vec<f64>,
        phi: Vec<f64>,
    },
    /// `h_j = a_j cos z_j + b_j sin z_j`.
    Liu {
        a: Vec<f64>,
        b: Vec<f64>,
    },
}

impl ScrnLayer {
    pub fn architecture(&self) -> Architecture {
        match self {
            ScrnLayer::Sigmoid => Architecture::Vanilla,
            ScrnLayer::GallantWhite => Architecture::GallantWhite,
            ScrnLayer::Silvescu { .. } => Architecture::Silvescu,
            ScrnLayer::Liu { .. } => Architecture::Liu,
        }
    }

    fn init(arch: Architecture, d_h: usize, rng: &mut Rng) -> Self {
        match arch {
            Architecture::Vanilla => ScrnLayer::Sigmoid,
            Architecture::GallantWhite => ScrnLayer::GallantWhite,
            Architecture::Silvescu => ScrnLayer::Silvescu {
                omega: vec![1.0; d_h],
                phi: (0..d_h).map(|_| rng.uniform_range(-PI, PI)).collect(),
            },
            Architecture::Liu => ScrnLayer::Liu {
                a: (0..d_h).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
                b: (0..d_h).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
            },
        }
    }

    fn apply(&self, z: &[f64], h: &mut [f64]) {
        match self {
            ScrnLayer::Sigmoid => h
                .iter_mut()
                .zip(z)
                .for_each(|(h, &z)| *h = ActivationKind::Sigmoid.apply(z)),
            ScrnLayer::GallantWhite => h
                .iter_mut()
                .zip(z)
                .for_each(|(h, &z)| *h = ActivationKind::CosineSquasher.apply(z)),
            ScrnLayer::Silvescu { omega, phi } => {
                for j in 0..z.len() {
                    h[j] = (omega[j] * z[j] + phi[j]).cos();
                }
            }
            ScrnLayer::Liu { a, b } => {
                for j in 0..z.len() {
                    h[j] = a[j] * z[j].cos() + b[j] * z[j].sin();
                }
            }
        }
    }

    /// Turns `dh` into `dz` in place and accumulates per-unit parameter
    /// gradients into `g0`, `g1` (unused by the parameter-free variants).
    fn backward(&self, z: &[f64], dh_dz: &mut [f64], g0: &mut [f64], g1: &mut [f64]) {
        match self {
            ScrnLayer::Sigmoid | ScrnLayer::GallantWhite => {
                let kind = if matches!(self, ScrnLayer::Sigmoid) {
                    ActivationKind::Sigmoid
                } else {
                    ActivationKind::CosineSquasher
                };
                for j in 0..z.len() {
                    dh_dz[j] *= kind.derivative(z[j]);
                }
            }
            ScrnLayer::Silvescu { omega, phi } => {
                for j in 0..z.len() {
                    let s = (omega[j] * z[j] + phi[j]).sin();
                    let dh = dh_dz[j];
                    g0[j] -= dh * s * z[j];
                    g1[j] -= dh * s;
                    dh_dz[j] = -dh * s * omega[j];
                }
            }
            ScrnLayer::Liu { a, b } => {
                for j in 0..z.len() {
                    let (s, c) = z[j].sin_cos();
                    let dh = dh_dz[j];
                    g0[j] += dh * c;
                    g1[j] += dh * s;
                    dh_dz[j] = dh * (b[j] * c - a[j] * s);
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScrnParams {
    /// `|W| × d_s` slow embedding.
    pub b: Matrix,
    /// `|W| × d_h` fast embedding.
    pub a: Matrix,
    /// `d_s × d_h`.
    pub p: Matrix,
    /// `d_h × d_h` recurrence.
    pub r: Matrix,
    /// `d_s × |W|` read-out from the slow state.
    pub u: Matrix,
    /// `d_h × |W|` read-out from the hidden state.
    pub v: Matrix,
    /// Fixed context decay in `[0, 1)`.
    pub alpha: f64,
    pub layer: ScrnLayer,
}

/// Recurrent state `(s, h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScrnState {
    pub s: Vec<f64>,
    pub h: Vec<f64>,
}

impl ScrnState {
    pub fn zeros(d_s: usize, d_h: usize) -> Self {
        Self {
            s: vec![0.0; d_s],
            h: vec![0.0; d_h],
        }
    }
}

impl ScrnParams {
    /// Embeddings and recurrences uniform in `±init_scale` (scaled by `1/√fan_in`
    /// for `P` and `R`); read-outs zero, so the untrained model predicts uniformly.
    pub fn init(
        arch: Architecture,
        vocab: usize,
        d_s: usize,
        d_h: usize,
        alpha: f64,
        init_scale: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if vocab < 2 || d_s == 0 || d_h == 0 {
            return Err(Error::Domain(
                "SCRN needs a vocabulary of at least 2 and nonzero state sizes".into(),
            ));
        }
        check_alpha(alpha)?;
        let b = Matrix::uniform(vocab, d_s, init_scale, rng);
        let a = Matrix::uniform(vocab, d_h, init_scale, rng);
        let p = Matrix::uniform(d_s, d_h, init_scale / (d_s as f64).sqrt(), rng);
        let r = Matrix::uniform(d_h, d_h, init_scale / (d_h as f64).sqrt(), rng);
        let layer = ScrnLayer::init(arch, d_h, rng);
        Ok(Self {
            b,
            a,
            p,
            r,
            u: Matrix::zeros(d_s, vocab),
            v: Matrix::zeros(d_h, vocab),
            alpha,
            layer,
        })
    }

    pub fn vocab(&self) -> usize {
        self.b.rows()
    }

    pub fn d_s(&self) -> usize {
        self.b.cols()
    }

    pub fn d_h(&self) -> usize {
        self.a.cols()
    }

    pub fn initial_state(&self) -> ScrnState {
        ScrnState::zeros(self.d_s(), self.d_h())
    }

    /// Checks every shape against `(|W|, d_s, d_h)` taken from `B` and `A`.
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        let (w, ds, dh) = (self.vocab(), self.d_s(), self.d_h());
        let shapes = [
            ("SCRN A rows", self.a.rows(), w),
            ("SCRN P rows", self.p.rows(), ds),
            ("SCRN P cols", self.p.cols(), dh),
            ("SCRN R rows", self.r.rows(), dh),
            ("SCRN R cols", self.r.cols(), dh),
            ("SCRN U rows", self.u.rows(), ds),
            ("SCRN U cols", self.u.cols(), w),
            ("SCRN V rows", self.v.rows(), dh),
            ("SCRN V cols", self.v.cols(), w),
        ];
        for (context, found, expected) in shapes {
            if found != expected {
                return Err(Error::DimensionMismatch {
                    context,
                    expected,
                    found,
                });
            }
        }
        let unit_lens = match &self.layer {
            ScrnLayer::Silvescu { omega, phi } => Some((omega.len(), phi.len())),
            ScrnLayer::Liu { a, b } => Some((a.len(), b.len())),
            _ => None,
        };
        if let Some((x, y)) = unit_lens {
            for found in [x, y] {
                if found != dh {
                    return Err(Error::DimensionMismatch {
                        context: "SCRN per-unit parameters",
                        expected: dh,
                        found,
                    });
                }
            }
        }
        if self
            .tensors()
            .iter()
            .any(|t| t.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite("SCRN parameters".into()));
        }
        Ok(())
    }

    fn logits_into(&self, state: &ScrnState, logits: &mut [f64]) {
        logits.fill(0.0);
        add_row_times_matrix(logits, &state.s, &self.u);
        add_row_times_matrix(logits, &state.h, &self.v);
    }

    fn check_word(&self, w: usize) -> Result<()> {
        if w >= self.vocab() {
            return Err(Error::LabelOutOfRange {
                label: w,
                classes: self.vocab(),
            });
        }
        Ok(())
    }

    /// Relabels words: new id `j` takes the parameters of old id `perm[j]`.
    pub fn permute_vocab(&self, perm: &[usize]) -> Self {
        Self {
            b: self.b.permute_rows(perm),
            a: self.a.permute_rows(perm),
            u: self.u.permute_cols(perm),
            v: self.v.permute_cols(perm),
            ..self.clone()
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Domain(format!(
            "alpha must lie in [0, 1), got {alpha}"
        )));
    }
    Ok(())
}

impl Parameterized for ScrnParams {
    /// `[B, A, P, R, U, V]`, then `[ω, φ]` or `[a, b]` for the Fourier layers.
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = vec![
            self.b.as_slice(),
            self.a.as_slice(),
            self.p.as_slice(),
            self.r.as_slice(),
            self.u.as_slice(),
            self.v.as_slice(),
        ];
        match &self.layer {
            ScrnLayer::Silvescu { omega, phi } => t.extend([omega.as_slice(), phi.as_slice()]),
            ScrnLayer::Liu { a, b } => t.extend([a.as_slice(), b.as_slice()]),
            _ => {}
        }
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = vec![
            self.b.as_mut_slice(),
            self.a.as_mut_slice(),
            self.p.as_mut_slice(),
            self.r.as_mut_slice(),
            self.u.as_mut_slice(),
            self.v.as_mut_slice(),
        ];
        match &mut self.layer {
            ScrnLayer::Silvescu { omega, phi } => {
                t.extend([omega.as_mut_slice(), phi.as_mut_slice()])
            }
            ScrnLayer::Liu { a, b } => t.extend([a.as_mut_slice(), b.as_mut_slice()]),
            _ => {}
        }
        t
    }
}

/// Pre-activation `z_t` and the next state.
fn step_with_z(params: &ScrnParams, w: usize, prev: &ScrnState, z: &mut [f64]) -> ScrnState {
    let alpha = params.alpha;
    let s: Vec<f64> = params
        .b
        .row(w)
        .iter()
        .zip(&prev.s)
        .map(|(bw, sp)| (1.0 - alpha) * bw + alpha * sp)
        .collect();
    z.copy_from_slice(params.a.row(w));
    add_row_times_matrix(z, &s, &params.p);
    add_row_times_matrix(z, &prev.h, &params.r);
    let mut h = vec![0.0; z.len()];
    params.layer.apply(z, &mut h);
    ScrnState { s, h }
}

pub fn scrn_step(params: &ScrnParams, w: usize, prev: &ScrnState) -> Result<ScrnState> {
    params.check_word(w)?;
    if prev.s.len() != params.d_s() || prev.h.len() != params.d_h() {
        return Err(Error::DimensionMismatch {
            context: "SCRN state",
            expected: params.d_s() + params.d_h(),
            found: prev.s.len() + prev.h.len(),
        });
    }
    let mut z = vec![0.0; params.d_h()];
    Ok(step_with_z(params, w, prev, &mut z))
}

pub fn next_word_distribution(params: &ScrnParams, state: &ScrnState) -> Vec<f64> {
    let mut p = vec![0.0; params.vocab()];
    params.logits_into(state, &mut p);
    softmax_in_place(&mut p);
    p
}

/// Summed next-word negative log-likelihood over one window and the state
/// after it. `inputs[t]` predicts `targets[t]`. With `grads`, also
/// accumulates the full-window BPTT gradient (the incoming state is treated
/// as a constant).
pub fn window_loss(
    params: &ScrnParams,
    inputs: &[usize],
    targets: &[usize],
    start: &ScrnState,
    grads: Option<&mut Gradients>,
) -> Result<(f64, ScrnState)> {
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            context: "SCRN window targets",
            expected: inputs.len(),
            found: targets.len(),
        });
    }
    for &w in inputs.iter().chain(targets) {
        params.check_word(w)?;
    }
    let (vocab, d_h) = (params.vocab(), params.d_h());
    let steps = inputs.len();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(start.clone());
    let mut zs = vec![0.0; steps * d_h];
    let mut probs = vec![0.0; steps * vocab];
    let mut loss = 0.0;
    for t in 0..steps {
        let next = step_with_z(
            params,
            inputs[t],
            &states[t],
            &mut zs[t * d_h..(t + 1) * d_h],
        );
        let p = &mut probs[t * vocab..(t + 1) * vocab];
        params.logits_into(&next, p);
        loss += log_sum_exp(p) - p[targets[t]];
        softmax_in_place(p);
        states.push(next);
    }
    let end = states[steps].clone();
    let Some(g) = grads else {
        return Ok((loss, end));
    };
    if g.tensors.len() != params.tensors().len() {
        return Err(Error::DimensionMismatch {
            context: "SCRN gradient tensors",
            expected: params.tensors().len(),
            found: g.tensors.len(),
        });
    }
    let d_s = params.d_s();
    let alpha = params.alpha;
    let mut ds_next = vec![0.0; d_s];
    let mut dh_next = vec![0.0; d_h];
    let mut ds = vec![0.0; d_s];
    let mut dz = vec![0.0; d_h];
    let (base, extra) = g.tensors.split_at_mut(6);
    let [gb, ga, gp, gr, gu, gv] = base else {
        unreachable!()
    };
    let (mut unused0, mut unused1) = (Vec::new(), Vec::new());
    let (g0, g1) = match extra {
        [x, y] => (x, y),
        _ => (&mut unused0, &mut unused1),
    };
    for t in (0..steps).rev() {
        let (cur, prev) = (&states[t + 1], &states[t]);
        let mut dlogit = probs[t * vocab..(t + 1) * vocab].to_vec();
        dlogit[targets[t]] -= 1.0;
        for i in 0..d_s {
            let row = &mut gu[i * vocab..(i + 1) * vocab];
            row.iter_mut()
                .zip(&dlogit)
                .for_each(|(g, d)| *g += cur.s[i] * d);
            ds[i] = dot(params.u.row(i), &dlogit) + ds_next[i];
        }
        for j in 0..d_h {
            let row = &mut gv[j * vocab..(j + 1) * vocab];
            row.iter_mut()
                .zip(&dlogit)
                .for_each(|(g, d)| *g += cur.h[j] * d);
            dz[j] = dot(params.v.row(j), &dlogit) + dh_next[j];
        }
        let z = &zs[t * d_h..(t + 1) * d_h];
        params.layer.backward(z, &mut dz, g0, g1);
        let w = inputs[t];
        ga[w * d_h..(w + 1) * d_h]
            .iter_mut()
            .zip(&dz)
            .for_each(|(g, d)| *g += d);
        for i in 0..d_s {
            let row = &mut gp[i * d_h..(i + 1) * d_h];
            row.iter_mut()
                .zip(&dz)
                .for_each(|(g, d)| *g += cur.s[i] * d);
            ds[i] += dot(params.p.row(i), &dz);
        }
        for i in 0..d_h {
            let row = &mut gr[i * d_h..(i + 1) * d_h];
            row.iter_mut()
                .zip(&dz)
                .for_each(|(g, d)| *g += prev.h[i] * d);
            dh_next[i] = dot(params.r.row(i), &dz);
        }
        let gbw = &mut gb[w * d_s..(w + 1) * d_s];
        for i in 0..d_s {
            gbw[i] += (1.0 - alpha) * ds[i];
            ds_next[i] = alpha * ds[i];
        }
    }
    Ok((loss, end))
}

/// `exp` of the mean next-word negative log-likelihood, running the model
/// from a zero state over the whole sequence.
pub fn perplexity(params: &ScrnParams, ids: &[usize]) -> Result<f64> {
    if ids.len() < 2 {
        return Err(Error::Empty("perplexity needs at least two tokens"));
    }
    let (nll, _) = window_loss(
        params,
        &ids[..ids.len() - 1],
        &ids[1..],
        &params.initial_state(),
        None,
    )?;
    Ok((nll / (ids.len() - 1) as f64).exp())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmConfig {
    pub d_s: usize,
    pub d_h: usize,
    pub alpha: f64,
    pub bptt_window: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Multiplies the learning rate after every epoch.
    pub lr_decay: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            d_s: 10,
            d_h: 40,
            alpha: 0.95,
            bptt_window: 10,
            epochs: 10,
            lr: 0.01,
            lr_decay: 0.9,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmEpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_ppl: f64,
    pub valid_ppl: Option<f64>,
    pub test_ppl: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmOutcome {
    pub params: ScrnParams,
    /// Row 0 is the model before training.
    pub curve: Vec<LmEpochRecord>,
}

/// Evaluation sequences for the per-epoch curve. Splits shorter than two
/// tokens are skipped.
#[derive(Clone, Copy, Debug, Default)]
pub struct LmEval<'a> {
    pub valid: &'a [usize],
    pub test: &'a [usize],
}

fn optional_ppl(params: &ScrnParams, ids: &[usize]) -> Result<Option<f64>> {
    if ids.len() < 2 {
        return Ok(None);
    }
    perplexity(params, ids).map(Some)
}

fn record(
    params: &ScrnParams,
    epoch: usize,
    lr: f64,
    train: &[usize],
    eval: LmEval,
) -> Result<LmEpochRecord> {
    Ok(LmEpochRecord {
        epoch,
        lr,
        train_ppl: perplexity(params, train)?,
        valid_ppl: optional_ppl(params, eval.valid)?,
        test_ppl: optional_ppl(params, eval.test)?,
    })
}

/// Truncated BPTT with Adam: one update per window of `bptt_window` tokens,
/// state carried across windows and reset at each epoch.
pub fn train_lm(
    mut params: ScrnParams,
    train: &[usize],
    eval: LmEval,
    config: &LmConfig,
) -> Result<LmOutcome> {
    params.validate()?;
    if config.bptt_window == 0 {
        return Err(Error::Domain("bptt window must be positive".into()));
    }
    if train.len() <= config.bptt_window {
        return Err(Error::Domain(format!(
            "corpus of {} tokens is not longer than the bptt window {}",
            train.len(),
            config.bptt_window
        )));
    }
    if !(config.lr >= 0.0 && config.lr.is_finite() && config.lr_decay > 0.0) {
        return Err(Error::Domain(
            "learning rate must be ≥ 0 and decay > 0".into(),
        ));
    }
    let mut adam = AdamState::new(&params, config.lr);
    let mut grads = params.zero_gradients();
    let mut curve = vec![record(&params, 0, config.lr, train, eval)?];
    for epoch in 1..=config.epochs {
        let mut state = params.initial_state();
        let mut pos = 0;
        while pos + 1 < train.len() {
            let end = (pos + config.bptt_window).min(train.len() - 1);
            grads.fill_zero();
            let (loss, next) = window_loss(
                &params,
                &train[pos..end],
                &train[pos + 1..end + 1],
                &state,
                Some(&mut grads),
            )?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::NonFiniteSequenceLoss { position: pos });
            }
            grads.scale(1.0 / (end - pos) as f64);
            adam.step(&mut params, &grads)?;
            state = next;
            pos = end;
        }
        curve.push(record(&params, epoch, adam.lr, train, eval)?);
        adam.lr *= config.lr_decay;
    }
    Ok(LmOutcome { params, curve })
}

/// Rows `layer,epoch,lr,train_ppl,valid_ppl,test_ppl`; missing splits are empty.
pub fn write_lm_curve_csv(
    out: &mut impl Write,
    layer: &str,
    curve: &[LmEpochRecord],
) -> Result<()> {
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for r in curve {
        writeln!(
            out,
            "{layer},{},{},{},{},{}",
            r.epoch,
            r.lr,
            r.train_ppl,
            opt(r.valid_ppl),
            opt(r.test_ppl)
        )?;
    }
    Ok(())
}

impl ScrnParams {
    pub fn to_container(&self) -> Container {
        Container {
            tag: SCRN_TAG,
            dims: vec![
                self.layer.architecture().tag() as u64,
                self.vocab() as u64,
                self.d_s() as u64,
                self.d_h() as u64,
            ],
            scalars: vec![self.alpha],
            tensors: self.tensors().iter().map(|t| t.to_vec()).collect(),
        }
    }

    pub fn from_container(c: Container) -> Result<Self> {
        if c.tag != SCRN_TAG {
            return Err(Error::Format(format!("tag {} is not an SCRN model", c.tag)));
        }
        let ([layer, w, ds, dh], [alpha]) = (&c.dims[..], &c.scalars[..]) else {
            return Err(Error::Format(
                "SCRN header needs 4 dims and 1 scalar".into(),
            ));
        };
        let arch = Architecture::from_tag(*layer as u32)
            .ok_or_else(|| Error::Format(format!("unknown SCRN layer tag {layer}")))?;
        let (w, ds, dh) = (*w as usize, *ds as usize, *dh as usize);
        let expected = if matches!(arch, Architecture::Silvescu | Architecture::Liu) {
            8
        } else {
            6
        };
        if c.tensors.len() != expected {
            return Err(Error::Format(format!(
                "SCRN model has {} tensors, expected {expected}",
                c.tensors.len()
            )));
        }
        let mut t = c.tensors.into_iter();
        let mut m = |rows: usize, cols: usize| {
            Matrix::from_vec(rows, cols, t.next().unwrap())
                .map_err(|e| Error::Format(e.to_string()))
        };
        let (b, a, p, r, u, v) = (
            m(w, ds)?,
            m(w, dh)?,
            m(ds, dh)?,
            m(dh, dh)?,
            m(ds, w)?,
            m(dh, w)?,
        );
        let mut rest = t;
        let layer = match arch {
            Architecture::Vanilla => ScrnLayer::Sigmoid,
            Architecture::GallantWhite => ScrnLayer::GallantWhite,
            Architecture::Silvescu => ScrnLayer::Silvescu {
                omega: rest.next().unwrap(),
                phi: rest.next().unwrap(),
            },
            Architecture::Liu => ScrnLayer::Liu {
                a: rest.next().unwrap(),
                b: rest.next().unwrap(),
            },
        };
        let params = Self {
            b,
            a,
            p,
            r,
            u,
            v,
            alpha: *alpha,
            layer,
        };
        params
            .validate()
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok(params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_container().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_container(Container::from_bytes(bytes)?)
    }
}
