use std::f64::consts::FRAC_PI_2;

use super::{HiddenLayer, RegressionNet};
use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix};

/// Fixed-width histogram over `[lo, hi)` with one underflow and one overflow bin.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        assert!(hi > lo && bins > 0);
        Self {
            lo,
            hi,
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
        }
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    /// `[lo, hi)` edges of bin `i`.
    pub fn edges(&self, i: usize) -> (f64, f64) {
        let w = self.bin_width();
        (self.lo + w * i as f64, self.lo + w * (i + 1) as f64)
    }

    pub fn add(&mut self, value: f64) {
        if value < self.lo {
            self.underflow += 1;
        } else if value >= self.hi {
            self.overflow += 1;
        } else {
            let last = self.bins() - 1;
            let i = ((value - self.lo) / self.bin_width()) as usize;
            self.counts[i.min(last)] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreactivationReport {
    pub histogram: Histogram,
    /// Share of pre-activations with `|z| > π/2`.
    pub out_of_range_fraction: f64,
}

/// Histograms every `⟨x, w_k⟩ + b_k` over the inputs (rows of `inputs`) and
/// reports how many fall where the cosine squasher is flat.
pub fn preactivation_probe(
    net: &RegressionNet,
    inputs: &Matrix,
    mut histogram: Histogram,
) -> Result<PreactivationReport> {
    let HiddenLayer::Squashing(layer) = &net.hidden else {
        return Err(Error::Domain(
            "pre-activation probe needs a vanilla or Gallant–White network".into(),
        ));
    };
    if inputs.rows() == 0 {
        return Err(Error::Empty("probe inputs"));
    }
    if inputs.cols() != layer.w.cols() {
        return Err(Error::DimensionMismatch {
            context: "probe inputs",
            expected: layer.w.cols(),
            found: inputs.cols(),
        });
    }
    let mut outside = 0u64;
    let mut total = 0u64;
    for t in 0..inputs.rows() {
        let x = inputs.row(t);
        for k in 0..layer.w.rows() {
            let z = dot(layer.w.row(k), x) + layer.b[k];
            histogram.add(z);
            if z.abs() > FRAC_PI_2 {
                outside += 1;
            }
            total += 1;
        }
    }
    Ok(PreactivationReport {
        histogram,
        out_of_range_fraction: outside as f64 / total as f64,
    })
}
