//! Synthetic regression tasks, dataset splitting, and loaders for MNIST and
//! plain-text corpora.

mod corpus;
mod mnist;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

pub use corpus::{load_corpus, Corpus, Vocab, EOS, UNK};
pub use mnist::{
    load_mnist, parse_idx_images, parse_idx_labels, write_mnist, MnistDataset, CLASSES,
    IMAGE_MAGIC, LABEL_MAGIC, PIXELS,
};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionDataset {
    pub inputs: Matrix,
    pub targets: Vec<f64>,
    pub split: Split,
}

impl RegressionDataset {
    pub fn new(inputs: Matrix, targets: Vec<f64>, split: Split) -> Result<Self> {
        if inputs.rows() != targets.len() {
            return Err(Error::DimensionMismatch {
                context: "regression targets",
                expected: inputs.rows(),
                found: targets.len(),
            });
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("regression targets".into()));
        }
        Ok(Self {
            inputs,
            targets,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn select(&self, indices: &[usize], split: Split) -> Self {
        Self {
            inputs: self.inputs.select_rows(indices),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            split,
        }
    }
}

/// `x ~ U[-π, π]`, `y = |x|`.
pub fn sample_abs(count: usize, seed: u64) -> Result<RegressionDataset> {
    if count == 0 {
        return Err(Error::Empty("sample count"));
    }
    let mut rng = Rng::new(seed);
    let x: Vec<f64> = (0..count).map(|_| rng.uniform_range(-PI, PI)).collect();
    let y = x.iter().map(|v| v.abs()).collect();
    RegressionDataset::new(Matrix::from_vec(count, 1, x)?, y, Split::Train)
}

/// How the radius of a ball sample is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RadialMode {
    /// `R·U^{1/d}`: uniform over the ball's volume.
    VolumeUniform,
    /// `R·U`: uniform over the radius.
    RadiusUniform,
}

impl RadialMode {
    pub fn name(self) -> &'static str {
        match self {
            RadialMode::VolumeUniform => "volume_uniform",
            RadialMode::RadiusUniform => "radius_uniform",
        }
    }
}

impl fmt::Display for RadialMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RadialMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "volume_uniform" | "volume" => Ok(RadialMode::VolumeUniform),
            "radius_uniform" | "radius" => Ok(RadialMode::RadiusUniform),
            _ => Err(Error::Domain(format!("unknown radial mode {s:?}"))),
        }
    }
}

/// Points in the `d`-ball of radius `outer_radius`, labelled by membership of
/// the unit ball.
pub fn sample_ball_indicator(
    count: usize,
    d: usize,
    outer_radius: f64,
    seed: u64,
    mode: RadialMode,
) -> Result<RegressionDataset> {
    if count == 0 {
        return Err(Error::Empty("sample count"));
    }
    if d == 0 {
        return Err(Error::UnsupportedDimension(0));
    }
    if !(outer_radius.is_finite() && outer_radius > 1.0) {
        return Err(Error::Domain(format!(
            "outer radius must exceed 1, got {outer_radius}"
        )));
    }
    let mut rng = Rng::new(seed);
    let mut x = Vec::with_capacity(count * d);
    let mut y = Vec::with_capacity(count);
    let mut dir = vec![0.0; d];
    for _ in 0..count {
        let norm = loop {
            dir.iter_mut().for_each(|v| *v = rng.normal());
            let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                break n;
            }
        };
        let u = rng.uniform();
        let radius = match mode {
            RadialMode::VolumeUniform => outer_radius * u.powf(1.0 / d as f64),
            RadialMode::RadiusUniform => outer_radius * u,
        };
        x.extend(dir.iter().map(|v| v / norm * radius));
        y.push(if radius <= 1.0 { 1.0 } else { 0.0 });
    }
    RegressionDataset::new(Matrix::from_vec(count, d, x)?, y, Split::Train)
}

/// Requested split sizes.
#[derive(Clone, Debug, PartialEq)]
pub enum SplitSizes {
    Counts(Vec<usize>),
    /// Each part gets `⌊f·total⌋`.
    Fractions(Vec<f64>),
}

/// Shuffles `0..total` once and cuts consecutive runs of the requested sizes.
/// Indices left over after the last part are dropped.
pub fn split_indices(total: usize, sizes: &SplitSizes, seed: u64) -> Result<Vec<Vec<usize>>> {
    let counts: Vec<usize> = match sizes {
        SplitSizes::Counts(c) => c.clone(),
        SplitSizes::Fractions(f) => {
            if f.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Domain("split fractions must lie in [0, 1]".into()));
            }
            f.iter()
                .map(|v| (v * total as f64).floor() as usize)
                .collect()
        }
    };
    let requested: usize = counts.iter().sum();
    if requested > total {
        return Err(Error::Oversubscribed {
            requested,
            available: total,
        });
    }
    let perm = Rng::new(seed).permutation(total);
    let mut out = Vec::with_capacity(counts.len());
    let mut start = 0;
    for c in counts {
        out.push(perm[start..start + c].to_vec());
        start += c;
    }
    Ok(out)
}

/// Train / valid / test parts of a regression dataset.
pub fn split_regression(
    data: &RegressionDataset,
    sizes: &SplitSizes,
    seed: u64,
) -> Result<Vec<RegressionDataset>> {
    let parts = split_indices(data.len(), sizes, seed)?;
    if parts.len() > 3 {
        return Err(Error::Domain("at most three split parts".into()));
    }
    Ok(parts
        .iter()
        .zip(Split::ALL)
        .map(|(idx, split)| data.select(idx, split))
        .collect())
}

/// Target function of a synthetic regression study.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SyntheticTask {
    Abs,
    Ball {
        d: usize,
        outer_radius: f64,
        mode: RadialMode,
    },
}

impl SyntheticTask {
    pub fn sample(&self, count: usize, seed: u64) -> Result<RegressionDataset> {
        match *self {
            SyntheticTask::Abs => sample_abs(count, seed),
            SyntheticTask::Ball {
                d,
                outer_radius,
                mode,
            } => sample_ball_indicator(count, d, outer_radius, seed, mode),
        }
    }

    /// Draws `train + valid + test` points and splits them.
    pub fn generate_splits(
        &self,
        train: usize,
        valid: usize,
        test: usize,
        seed: u64,
    ) -> Result<[RegressionDataset; 3]> {
        let all = self.sample(train + valid + test, seed)?;
        let parts = split_regression(
            &all,
            &SplitSizes::Counts(vec![train, valid, test]),
            crate::numerics::derive_seed(seed, 1),
        )?;
        let [a, b, c]: [RegressionDataset; 3] = parts.try_into().expect("three parts");
        Ok([a, b, c])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn abs_targets() {
        let ds = sample_abs(1000, 3).unwrap();
        for (x, y) in ds.inputs.as_slice().iter().zip(&ds.targets) {
            assert_eq!(*y, x.abs());
            assert!((0.0..=PI).contains(y));
        }
        assert_eq!(ds, sample_abs(1000, 3).unwrap());
        assert_ne!(ds, sample_abs(1000, 4).unwrap());
        assert!(sample_abs(0, 1).is_err());
    }

    #[test]
    fn abs_mean_near_zero() {
        let ds = sample_abs(100_000, 0).unwrap();
        let mean = ds.inputs.as_slice().iter().sum::<f64>() / ds.len() as f64;
        assert!(mean.abs() < 0.02, "{mean}");
    }

    #[test]
    fn abs_ks_distance() {
        let ds = sample_abs(100_000, 0).unwrap();
        let mut x = ds.inputs.into_vec();
        x.sort_by(f64::total_cmp);
        let n = x.len() as f64;
        let mut d: f64 = 0.0;
        for (i, v) in x.iter().enumerate() {
            let f = (v + PI) / (2.0 * PI);
            d = d
                .max((f - i as f64 / n).abs())
                .max(((i + 1) as f64 / n - f).abs());
        }
        assert!(d < 0.01, "KS distance {d}");
    }

    fn positive_fraction(ds: &RegressionDataset) -> f64 {
        ds.targets.iter().sum::<f64>() / ds.len() as f64
    }

    #[test]
    fn ball_small_d_fraction() {
        let ds = sample_ball_indicator(100_000, 2, 2.0, 9, RadialMode::VolumeUniform).unwrap();
        for i in 0..ds.len() {
            let r = ds.inputs.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(r <= 2.0 + 1e-12);
            assert_eq!(ds.targets[i], if r <= 1.0 { 1.0 } else { 0.0 });
        }
        let p = positive_fraction(&ds);
        let se = (0.25f64 * 0.75 / 1e5).sqrt();
        assert!((p - 0.25).abs() < 3.0 * se, "{p}");
    }

    #[test]
    fn ball_high_d_modes() {
        let vol = sample_ball_indicator(20_000, 100, 2.0, 1, RadialMode::VolumeUniform).unwrap();
        assert_eq!(positive_fraction(&vol), 0.0);
        let rad = sample_ball_indicator(20_000, 100, 2.0, 1, RadialMode::RadiusUniform).unwrap();
        assert!((positive_fraction(&rad) - 0.5).abs() < 0.01);
    }

    #[test]
    fn ball_rejects_bad_arguments() {
        assert!(sample_ball_indicator(10, 2, 1.0, 0, RadialMode::VolumeUniform).is_err());
        assert!(sample_ball_indicator(10, 0, 2.0, 0, RadialMode::VolumeUniform).is_err());
        assert!(sample_ball_indicator(0, 2, 2.0, 0, RadialMode::VolumeUniform).is_err());
        assert_eq!(
            "radius_uniform".parse::<RadialMode>().unwrap(),
            RadialMode::RadiusUniform
        );
        assert!("cube".parse::<RadialMode>().is_err());
    }

    #[test]
    fn splits_are_disjoint_and_deterministic() {
        let parts = split_indices(100, &SplitSizes::Counts(vec![70, 20, 10]), 5).unwrap();
        let mut all: Vec<usize> = parts.concat();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(
            parts,
            split_indices(100, &SplitSizes::Counts(vec![70, 20, 10]), 5).unwrap()
        );
        let frac = split_indices(10, &SplitSizes::Fractions(vec![0.5, 0.25]), 5).unwrap();
        assert_eq!((frac[0].len(), frac[1].len()), (5, 2));
        assert!(matches!(
            split_indices(10, &SplitSizes::Counts(vec![8, 3]), 0),
            Err(Error::Oversubscribed {
                requested: 11,
                available: 10
            })
        ));
    }

    #[test]
    fn synthetic_splits_have_tags() {
        let [tr, va, te] = SyntheticTask::Abs.generate_splits(50, 20, 10, 2).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (50, 20, 10));
        assert_eq!(
            (tr.split, va.split, te.split),
            (Split::Train, Split::Valid, Split::Test)
        );
    }

    proptest! {
        #[test]
        fn split_partitions(total in 0usize..200, a in 0usize..100, b in 0usize..100, seed: u64) {
            let sizes = SplitSizes::Counts(vec![a, b]);
            match split_indices(total, &sizes, seed) {
                Ok(parts) => {
                    prop_assert_eq!(parts[0].len(), a);
                    prop_assert_eq!(parts[1].len(), b);
                    let mut all = parts.concat();
                    all.sort();
                    all.dedup();
                    prop_assert_eq!(all.len(), a + b);
                    prop_assert!(all.iter().all(|&i| i < total));
                }
                Err(_) => prop_assert!(a + b > total),
            }
        }
    }
}
