//! Command-line flags, the flat `key=value` config file, and presets.
//!
//! Every setting is resolved as flag, then config file, then preset default.

use std::collections::BTreeMap;
use std::fmt::{self, Display};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fnn_core::datasets::RadialMode;
use fnn_core::models::Architecture;
use fnn_core::training::DEFAULT_LR_GRID;

use crate::CliError;

#[derive(Parser, Debug)]
#[command(name = "fnn", version, about = "Fourier neural network experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Hidden-size sweep on x ↦ |x|.
    SynthAbs(SynthArgs),
    /// Hidden-size sweep on the unit-ball indicator.
    SynthBall(SynthArgs),
    /// Tail-sum and lattice checks of the two series error laws.
    FourierVerify(FourierArgs),
    /// Four classifiers on MNIST with a chi-square comparison.
    Mnist(MnistArgs),
    /// Recurrent language model with each hidden layer variant.
    Scrn(ScrnArgs),
    /// Pre-activation histogram of a trained Gallant–White network.
    PreactHist(PreactArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Comma-separated subset of vanilla,gw,silvescu,liu.
    #[arg(long)]
    pub models: Option<String>,
    /// Comma-separated hidden sizes.
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub lr_grid: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Flat `key=value` file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Caps every data split at this many samples.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Input dimension of the ball task.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub outer_radius: Option<f64>,
    /// volume_uniform or radius_uniform.
    #[arg(long)]
    pub radial_mode: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct FourierArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Largest n of the tail sandwich check.
    #[arg(long)]
    pub lemma1_max: Option<usize>,
    #[arg(long)]
    pub radii_d2: Option<String>,
    #[arg(long)]
    pub radii_d3: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct MnistArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Defaults to `$MNIST_DIR/train-images-idx3-ubyte`.
    #[arg(long)]
    pub mnist_images: Option<PathBuf>,
    #[arg(long)]
    pub mnist_labels: Option<PathBuf>,
    /// Defaults to `t10k-images-idx3-ubyte` next to the training images.
    #[arg(long)]
    pub mnist_test_images: Option<PathBuf>,
    #[arg(long)]
    pub mnist_test_labels: Option<PathBuf>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Samples held out from the shuffled training set.
    #[arg(long)]
    pub valid: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ScrnArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Plain-text corpus; the bundled toy corpus when absent.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub d_h: Option<usize>,
    #[arg(long)]
    pub d_s: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub bptt: Option<usize>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub init_scale: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct PreactArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// A trained Gallant–White regression model; one is trained when absent.
    #[arg(long)]
    pub model_file: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Paper,
    Desk,
}

impl Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Paper => "paper",
            Preset::Desk => "desk",
        })
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            _ => Err(format!("unknown preset {s:?}")),
        }
    }
}

/// Parsed `key=value` lines. Keys accept `-` or `_`; `#` starts a comment.
#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {}: expected key=value", i + 1))
            })?;
            values.insert(k.trim().replace('-', "_"), v.trim().to_owned());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Flag value if set, else the parsed file entry under `key`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| CliError::Usage(format!("config key {key}: {e}")))
            })
            .transpose()
    }
}

fn parse_list<T: FromStr>(text: &str, what: &str) -> Result<Vec<T>, CliError>
where
    T::Err: Display,
{
    let items: Vec<T> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|e| CliError::Usage(format!("bad {what} entry {s:?}: {e}")))
        })
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(CliError::Usage(format!("{what} list is empty")));
    }
    Ok(items)
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

/// Sample counts for the three splits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitCounts {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl SplitCounts {
    fn capped(self, limit: Option<usize>) -> Self {
        let cap = |v: usize| limit.map_or(v, |l| v.min(l));
        Self {
            train: cap(self.train),
            valid: cap(self.valid),
            test: cap(self.test),
        }
    }
}

/// Settings shared by every experiment after resolution.
#[derive(Clone, Debug)]
pub struct Common {
    pub experiment: &'static str,
    pub preset: Preset,
    pub seed: u64,
    pub out: PathBuf,
    pub models: Vec<Architecture>,
    pub lr_grid: Vec<f64>,
    pub epochs: usize,
    pub limit: Option<usize>,
}

impl Common {
    fn provenance(&self) -> Vec<(String, String)> {
        let mut p = vec![
            ("experiment".into(), self.experiment.into()),
            ("version".into(), env!("CARGO_PKG_VERSION").into()),
            ("preset".into(), self.preset.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("models".into(), join(&self.models)),
            ("lr_grid".into(), join(&self.lr_grid)),
            ("epochs".into(), self.epochs.to_string()),
        ];
        if let Some(l) = self.limit {
            p.push(("limit".into(), l.to_string()));
        }
        p
    }
}

struct Resolver {
    file: ConfigFile,
    preset: Preset,
}

impl Resolver {
    fn new(common: &CommonArgs) -> Result<Self, CliError> {
        let file = match &common.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let preset = file.pick(common.preset, "preset")?.unwrap_or(Preset::Desk);
        Ok(Self { file, preset })
    }

    fn get<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        Ok(self.file.pick(flag, key)?.unwrap_or(default))
    }

    fn opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.file.pick(flag, key)
    }

    fn common(
        &self,
        args: &CommonArgs,
        experiment: &'static str,
        default_epochs: usize,
        default_grid: &[f64],
    ) -> Result<Common, CliError> {
        let models = match self.opt(args.models.clone(), "models")? {
            Some(s) => parse_list(&s, "model")?,
            None => Architecture::ALL.to_vec(),
        };
        let lr_grid = match self.opt(args.lr_grid.clone(), "lr_grid")? {
            Some(s) => parse_list(&s, "learning rate")?,
            None => default_grid.to_vec(),
        };
        if lr_grid
            .iter()
            .any(|lr: &f64| !(lr.is_finite() && *lr > 0.0))
        {
            return Err(CliError::Usage("learning rates must be positive".into()));
        }
        let limit = self.opt(args.limit, "limit")?;
        if limit == Some(0) {
            return Err(CliError::Usage("limit must be positive".into()));
        }
        Ok(Common {
            experiment,
            preset: self.preset,
            seed: self.get(args.seed, "seed", 0)?,
            out: self.get(args.out.clone(), "out", PathBuf::from("results"))?,
            models,
            lr_grid,
            epochs: self.get(args.epochs, "epochs", default_epochs)?,
            limit,
        })
    }

    fn sweep(&self, args: &CommonArgs, default: &[usize]) -> Result<Vec<usize>, CliError> {
        let ns = match self.opt(args.n.clone(), "n")? {
            Some(s) => parse_list(&s, "hidden size")?,
            None => default.to_vec(),
        };
        if ns.contains(&0) || ns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Usage(
                "hidden sizes must be positive and strictly ascending".into(),
            ));
        }
        Ok(ns)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthTask {
    Abs,
    Ball,
}

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub common: Common,
    pub task: SynthTask,
    pub ns: Vec<usize>,
    pub sizes: SplitCounts,
    pub dim: usize,
    pub outer_radius: f64,
    pub radial_mode: RadialMode,
}

/// Volume-uniform sampling unless it leaves under 1% positives, the share
/// being `outer_radius^{-d}`.
pub fn default_radial_mode(dim: usize, outer_radius: f64) -> RadialMode {
    if outer_radius.powi(dim as i32) <= 100.0 {
        RadialMode::VolumeUniform
    } else {
        RadialMode::RadiusUniform
    }
}

impl SynthConfig {
    pub fn resolve(args: &SynthArgs, task: SynthTask) -> Result<Self, CliError> {
        let r = Resolver::new(&args.common)?;
        let name = match task {
            SynthTask::Abs => "synth-abs",
            SynthTask::Ball => "synth-ball",
        };
        let common = r.common(&args.common, name, 20, &DEFAULT_LR_GRID)?;
        let (sizes, ns, dim) = match r.preset {
            Preset::Desk => (
                SplitCounts {
                    train: 50_000,
                    valid: 5_000,
                    test: 5_000,
                },
                vec![25, 50, 100, 200],
                10,
            ),
            Preset::Paper => (
                SplitCounts {
                    train: 500_000,
                    valid: 50_000,
                    test: 50_000,
                },
                (1..=8).map(|k| 100 * k).collect(),
                100,
            ),
        };
        let ns = r.sweep(&args.common, &ns)?;
        let dim = r.get(args.dim, "dim", dim)?;
        let outer_radius = r.get(args.outer_radius, "outer_radius", 2.0)?;
        let radial_mode = match r.opt(args.radial_mode.clone(), "radial_mode")? {
            Some(s) => s
                .parse()
                .map_err(|e: fnn_core::Error| CliError::Usage(e.to_string()))?,
            None => default_radial_mode(dim, outer_radius),
        };
        if dim == 0 || outer_radius.is_nan() || outer_radius <= 1.0 {
            return Err(CliError::Usage(
                "ball task needs dim ≥ 1 and outer radius > 1".into(),
            ));
        }
        Ok(Self {
            sizes: sizes.capped(common.limit),
            common,
            task,
            ns,
            dim,
            outer_radius,
            radial_mode,
        })
    }

    pub fn provenance(&self) -> Vec<(String, String)> {
        let mut p = self.common.provenance();
        p.push(("n".into(), join(&self.ns)));
        p.push((
            "sizes".into(),
            format!(
                "{};{};{}",
                self.sizes.train, self.sizes.valid, self.sizes.test
            ),
        ));
        if self.task == SynthTask::Ball {
            p.push(("dim".into(), self.dim.to_string()));
            p.push(("outer_radius".into(), self.outer_radius.to_string()));
            p.push(("radial_mode".into(), self.radial_mode.to_string()));
        }
        p
    }
}

#[derive(Clone, Debug)]
pub struct FourierConfig {
    pub common: Common,
    pub lemma1_max: usize,
    pub radii_d2: Vec<f64>,
    pub radii_d3: Vec<f64>,
}

impl FourierConfig {
    pub fn resolve(args: &FourierArgs) -> Result<Self, CliError> {
        let r = Resolver::new(&args.common)?;
        let common = r.common(&args.common, "fourier-verify", 0, &DEFAULT_LR_GRID)?;
        let radii =
            |flag: Option<String>, key: &str, default: &[f64]| -> Result<Vec<f64>, CliError> {
                match r.opt(flag, key)? {
                    Some(s) => parse_list(&s, "radius"),
                    None => Ok(default.to_vec()),
                }
            };
        let lemma1_max = r.get(args.lemma1_max, "lemma1_max", 100)?;
        if lemma1_max == 0 {
            return Err(CliError::Usage("lemma1-max must be at least 1".into()));
        }
        Ok(Self {
            radii_d2: radii(args.radii_d2.clone(), "radii_d2", &[4.0, 8.0, 16.0, 32.0])?,
            radii_d3: radii(args.radii_d3.clone(), "radii_d3", &[3.0, 5.0, 8.0, 12.0])?,
            common,
            lemma1_max,
        })
    }

    pub fn provenance(&self) -> Vec<(String, String)> {
        vec![
            ("experiment".into(), "fourier-verify".into()),
            ("version".into(), env!("CARGO_PKG_VERSION").into()),
            ("lemma1_max".into(), self.lemma1_max.to_string()),
            ("radii_d2".into(), join(&self.radii_d2)),
            ("radii_d3".into(), join(&self.radii_d3)),
        ]
    }
}

#[derive(Clone, Debug)]
pub struct MnistConfig {
    pub common: Common,
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    pub hidden: usize,
    pub valid: usize,
}

const MNIST_DESK_GRID: [f64; 3] = [0.001, 0.003, 0.01];

impl MnistConfig {
    pub fn resolve(args: &MnistArgs) -> Result<Self, CliError> {
        let r = Resolver::new(&args.common)?;
        let (epochs, grid): (usize, &[f64]) = match r.preset {
            Preset::Desk => (5, &MNIST_DESK_GRID),
            Preset::Paper => (10, &DEFAULT_LR_GRID),
        };
        let common = r.common(&args.common, "mnist", epochs, grid)?;
        let env_dir = std::env::var_os("MNIST_DIR").map(PathBuf::from);
        let from_env = |name: &str| env_dir.as_ref().map(|d| d.join(name));
        let train_images = r
            .opt(args.mnist_images.clone(), "mnist_images")?
            .or_else(|| from_env("train-images-idx3-ubyte"))
            .ok_or_else(|| CliError::Usage("--mnist-images (or MNIST_DIR) is required".into()))?;
        let train_labels = r
            .opt(args.mnist_labels.clone(), "mnist_labels")?
            .or_else(|| from_env("train-labels-idx1-ubyte"))
            .ok_or_else(|| CliError::Usage("--mnist-labels (or MNIST_DIR) is required".into()))?;
        let sibling = |name: &str| {
            train_images
                .parent()
                .map_or_else(|| PathBuf::from(name), |d| d.join(name))
        };
        let test_images = r.get(
            args.mnist_test_images.clone(),
            "mnist_test_images",
            sibling("t10k-images-idx3-ubyte"),
        )?;
        let test_labels = r.get(
            args.mnist_test_labels.clone(),
            "mnist_test_labels",
            sibling("t10k-labels-idx1-ubyte"),
        )?;
        let hidden = r.get(args.hidden, "hidden", 64)?;
        let valid = r.get(args.valid, "valid", 5_000)?;
        if hidden == 0 {
            return Err(CliError::Usage("hidden size must be positive".into()));
        }
        Ok(Self {
            common,
            train_images,
            train_labels,
            test_images,
            test_labels,
            hidden,
            valid,
        })
    }

    /// File names only, so that copies of the data in other directories give
    /// identical headers.
    pub fn provenance(&self) -> Vec<(String, String)> {
        let name = |p: &Path| {
            p.file_name()
                .map_or_else(String::new, |n| n.to_string_lossy().into_owned())
        };
        let mut p = self.common.provenance();
        p.push(("hidden".into(), self.hidden.to_string()));
        p.push(("valid".into(), self.valid.to_string()));
        p.push(("train_images".into(), name(&self.train_images)));
        p.push(("train_labels".into(), name(&self.train_labels)));
        p.push(("test_images".into(), name(&self.test_images)));
        p.push(("test_labels".into(), name(&self.test_labels)));
        p
    }
}

#[derive(Clone, Debug)]
pub struct ScrnConfig {
    pub common: Common,
    pub corpus: Option<PathBuf>,
    pub d_h: usize,
    pub d_s: usize,
    pub alpha: f64,
    pub bptt: usize,
    pub lr_decay: f64,
    pub init_scale: f64,
}

const SCRN_GRID: [f64; 3] = [0.003, 0.01, 0.03];

impl ScrnConfig {
    pub fn resolve(args: &ScrnArgs) -> Result<Self, CliError> {
        let r = Resolver::new(&args.common)?;
        let common = r.common(&args.common, "scrn", 10, &SCRN_GRID)?;
        let defaults = fnn_core::scrn::LmConfig::default();
        let cfg = Self {
            corpus: r.opt(args.corpus.clone(), "corpus")?,
            d_h: r.get(args.d_h, "d_h", defaults.d_h)?,
            d_s: r.get(args.d_s, "d_s", defaults.d_s)?,
            alpha: r.get(args.alpha, "alpha", defaults.alpha)?,
            bptt: r.get(args.bptt, "bptt", defaults.bptt_window)?,
            lr_decay: r.get(args.lr_decay, "lr_decay", defaults.lr_decay)?,
            init_scale: r.get(args.init_scale, "init_scale", defaults.init_scale)?,
            common,
        };
        if cfg.d_h == 0 || cfg.d_s == 0 || cfg.bptt == 0 {
            return Err(CliError::Usage("d-h, d-s and bptt must be positive".into()));
        }
        if !(0.0..1.0).contains(&cfg.alpha) || cfg.lr_decay.is_nan() || cfg.lr_decay <= 0.0 {
            return Err(CliError::Usage(
                "alpha must lie in [0, 1) and lr-decay be positive".into(),
            ));
        }
        Ok(cfg)
    }

    pub fn provenance(&self) -> Vec<(String, String)> {
        let corpus = self.corpus.as_ref().map_or_else(
            || "builtin-toy".to_owned(),
            |p| {
                p.file_name()
                    .map_or_else(String::new, |n| n.to_string_lossy().into_owned())
            },
        );
        let mut p = self.common.provenance();
        p.extend([
            ("corpus".into(), corpus),
            ("d_h".into(), self.d_h.to_string()),
            ("d_s".into(), self.d_s.to_string()),
            ("alpha".into(), self.alpha.to_string()),
            ("bptt".into(), self.bptt.to_string()),
            ("lr_decay".into(), self.lr_decay.to_string()),
            ("init_scale".into(), self.init_scale.to_string()),
        ]);
        p
    }
}

#[derive(Clone, Debug)]
pub struct PreactConfig {
    pub synth: SynthConfig,
    pub model_file: Option<PathBuf>,
}

impl PreactConfig {
    pub fn resolve(args: &PreactArgs) -> Result<Self, CliError> {
        let r = Resolver::new(&args.common)?;
        let synth_args = SynthArgs {
            common: CommonArgs {
                models: Some("gw".into()),
                n: Some("100".into()),
                ..args.common.clone()
            },
            ..SynthArgs::default()
        };
        let mut synth = SynthConfig::resolve(&synth_args, SynthTask::Abs)?;
        synth.common.experiment = "preact-hist";
        Ok(Self {
            synth,
            model_file: r.opt(args.model_file.clone(), "model_file")?,
        })
    }

    pub fn provenance(&self) -> Vec<(String, String)> {
        let mut p = self.synth.provenance();
        if let Some(f) = &self.model_file {
            let name = f
                .file_name()
                .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
            p.push(("model_file".into(), name));
        }
        p
    }
}
