//! The six studies. Each returns a report and writes its CSV files under the
//! configured output directory.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fnn_core::datasets::{
    load_corpus, load_mnist, Corpus, MnistDataset, SyntheticTask, CLASSES, PIXELS,
};
use fnn_core::fourier::{
    abs_tail_error, abs_tail_rate, verify_lemma1, verify_lemma2, write_lemma1_csv, Lemma1Row,
    Lemma2Table,
};
use fnn_core::models::{
    preactivation_probe, Architecture, ClassifierHead, Histogram, PreactivationReport,
    RegressionNet,
};
use fnn_core::numerics::{
    chi_square_independence, derive_seed, loglog_fit, ChiSquare, ContingencyTable, LogLogFit,
};
use fnn_core::scrn::{train_lm, write_lm_curve_csv, LmConfig, LmEpochRecord, LmEval, ScrnParams};
use fnn_core::training::{
    tune_lr, ClassificationObjective, EpochRecord, Objective, RegressionObjective, TrainConfig,
    DEFAULT_BATCH_SIZE,
};
use fnn_core::{Error, Rng};

use crate::config::{FourierConfig, MnistConfig, PreactConfig, ScrnConfig, SynthConfig, SynthTask};
use crate::output::{opt, quote, write_csv};
use crate::CliError;

/// Bundled corpus used when `--corpus` is not given.
pub const TOY_CORPUS: &str = include_str!("../data/toy_corpus.txt");

/// Seed of one (model, n) cell; independent of which other cells run.
pub fn cell_seed(seed: u64, arch: Architecture, n: usize) -> u64 {
    derive_seed(derive_seed(seed, 100 + arch.tag() as u64), n as u64)
}

fn data_seed(seed: u64) -> u64 {
    derive_seed(seed, 0)
}

fn train_config(seed: u64, epochs: usize, lr_grid: &[f64]) -> TrainConfig {
    TrainConfig {
        batch_size: DEFAULT_BATCH_SIZE,
        epochs,
        lr_grid: lr_grid.to_vec(),
        seed,
    }
}

#[derive(Clone, Debug)]
pub struct SynthCell {
    pub model: Architecture,
    pub n: usize,
    pub test_mse: Option<f64>,
    pub tuned_lr: Option<f64>,
    pub best_epoch: Option<usize>,
    pub error: Option<String>,
    pub curve: Vec<EpochRecord>,
}

#[derive(Clone, Debug)]
pub struct SlopeRow {
    pub model: String,
    pub fit: Option<LogLogFit>,
    pub points: usize,
}

#[derive(Clone, Debug)]
pub struct SynthReport {
    pub cells: Vec<SynthCell>,
    /// Mean-square error of the `n`-term Fourier series of |x| (abs task only).
    pub reference: Vec<(usize, f64)>,
    pub slopes: Vec<SlopeRow>,
    pub files: Vec<PathBuf>,
}

impl SynthReport {
    pub fn cell(&self, model: Architecture, n: usize) -> Option<&SynthCell> {
        self.cells.iter().find(|c| c.model == model && c.n == n)
    }

    pub fn slope(&self, model: &str) -> Option<f64> {
        self.slopes
            .iter()
            .find(|s| s.model == model)
            .and_then(|s| s.fit.map(|f| f.slope))
    }

    pub fn reference_at(&self, n: usize) -> Option<f64> {
        self.reference.iter().find(|r| r.0 == n).map(|r| r.1)
    }
}

fn slope_row(model: String, points: &[(f64, f64)]) -> SlopeRow {
    SlopeRow {
        fit: loglog_fit(points).ok(),
        points: points.len(),
        model,
    }
}

/// Hidden-size sweep: per (model, n) tune the learning rate on the validation
/// split and record test MSE, then fit `log MSE` against `log n`.
pub fn run_synth_sweep(cfg: &SynthConfig) -> Result<SynthReport, CliError> {
    let c = &cfg.common;
    let (task, name) = match cfg.task {
        SynthTask::Abs => (SyntheticTask::Abs, "abs"),
        SynthTask::Ball => (
            SyntheticTask::Ball {
                d: cfg.dim,
                outer_radius: cfg.outer_radius,
                mode: cfg.radial_mode,
            },
            "ball",
        ),
    };
    let [train, valid, test] = task.generate_splits(
        cfg.sizes.train,
        cfg.sizes.valid,
        cfg.sizes.test,
        data_seed(c.seed),
    )?;
    let d = train.dim();
    let tro = RegressionObjective::new(&train.inputs, &train.targets)?;
    let vao = RegressionObjective::new(&valid.inputs, &valid.targets)?;
    let teo = RegressionObjective::new(&test.inputs, &test.targets)?;

    let mut cells = Vec::new();
    for &arch in &c.models {
        for &n in &cfg.ns {
            let tc = train_config(cell_seed(c.seed, arch, n), c.epochs, &c.lr_grid);
            let cell = match tune_lr(
                |rng: &mut Rng| RegressionNet::new(arch, d, n, rng),
                &tro,
                &vao,
                &tc,
            ) {
                Ok(t) => {
                    let mse = teo.metric(&t.best.model);
                    let finite = mse.is_finite();
                    SynthCell {
                        model: arch,
                        n,
                        test_mse: finite.then_some(mse),
                        tuned_lr: Some(t.best_lr),
                        best_epoch: Some(t.best.best_epoch),
                        error: (!finite).then(|| "non-finite test MSE".to_owned()),
                        curve: t.best.curve,
                    }
                }
                Err(e) => SynthCell {
                    model: arch,
                    n,
                    test_mse: None,
                    tuned_lr: None,
                    best_epoch: None,
                    error: Some(e.to_string()),
                    curve: Vec::new(),
                },
            };
            cells.push(cell);
        }
    }

    let reference: Vec<(usize, f64)> = match cfg.task {
        SynthTask::Abs => cfg
            .ns
            .iter()
            .map(|&n| (n, abs_tail_error(n) / (2.0 * PI)))
            .collect(),
        SynthTask::Ball => Vec::new(),
    };

    let mut slopes: Vec<SlopeRow> = c
        .models
        .iter()
        .map(|&arch| {
            let pts: Vec<(f64, f64)> = cells
                .iter()
                .filter(|cell| cell.model == arch)
                .filter_map(|cell| {
                    cell.test_mse
                        .filter(|m| *m > 0.0)
                        .map(|m| (cell.n as f64, m))
                })
                .collect();
            slope_row(arch.to_string(), &pts)
        })
        .collect();
    if !reference.is_empty() {
        let pts: Vec<(f64, f64)> = reference.iter().map(|&(n, m)| (n as f64, m)).collect();
        slopes.push(slope_row("fourier".into(), &pts));
    }

    let prov = cfg.provenance();
    let mut table = String::from("model,n,test_mse,tuned_lr,best_epoch,error\n");
    for cell in &cells {
        let _ = writeln!(
            table,
            "{},{},{},{},{},{}",
            cell.model,
            cell.n,
            opt(cell.test_mse),
            opt(cell.tuned_lr),
            opt(cell.best_epoch),
            quote(cell.error.as_deref().unwrap_or(""))
        );
    }
    for &(n, mse) in &reference {
        let _ = writeln!(table, "fourier,{n},{mse},,,");
    }
    let mut slope_csv = String::from("model,slope,intercept,points\n");
    for s in &slopes {
        let _ = writeln!(
            slope_csv,
            "{},{},{},{}",
            s.model,
            opt(s.fit.map(|f| f.slope)),
            opt(s.fit.map(|f| f.intercept)),
            s.points
        );
    }
    let mut curves = String::from("model,n,epoch,train_mse,valid_mse,lr\n");
    for cell in &cells {
        for r in &cell.curve {
            let _ = writeln!(
                curves,
                "{},{},{},{},{},{}",
                cell.model,
                cell.n,
                r.epoch,
                r.train_metric,
                r.valid_metric,
                opt(cell.tuned_lr)
            );
        }
    }
    let files = vec![
        write_csv(&c.out, &format!("synth_{name}.csv"), &prov, &table)?,
        write_csv(
            &c.out,
            &format!("synth_{name}_slopes.csv"),
            &prov,
            &slope_csv,
        )?,
        write_csv(&c.out, &format!("synth_{name}_curves.csv"), &prov, &curves)?,
    ];
    Ok(SynthReport {
        cells,
        reference,
        slopes,
        files,
    })
}

/// Sample sizes of the |x| tail-rate fit.
pub const LEMMA1_RATE_NS: [usize; 6] = [4, 8, 16, 32, 64, 128];
/// Accepted distance of the tail-rate slope from −3.
pub const LEMMA1_RATE_TOL: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct FourierReport {
    pub lemma1: Vec<Lemma1Row>,
    pub rate: LogLogFit,
    pub lemma2: Vec<Lemma2Table>,
    pub files: Vec<PathBuf>,
}

impl FourierReport {
    pub fn lemma1_passed(&self) -> bool {
        self.lemma1.iter().all(Lemma1Row::passed)
    }

    pub fn rate_passed(&self) -> bool {
        (self.rate.slope + 3.0).abs() <= LEMMA1_RATE_TOL
    }

    /// `Err` with exit status 3 naming every failed check.
    pub fn check(&self) -> Result<(), CliError> {
        let mut failed = Vec::new();
        if let Some(r) = self.lemma1.iter().find(|r| !r.passed()) {
            failed.push(format!("tail sandwich at n={}", r.n));
        }
        if !self.rate_passed() {
            failed.push(format!("tail rate slope {}", self.rate.slope));
        }
        for t in self.lemma2.iter().filter(|t| !t.passed()) {
            failed.push(format!("ball slope {} at d={}", t.fit.slope, t.d));
        }
        if failed.is_empty() {
            Ok(())
        } else {
            Err(CliError::Verification(failed.join("; ")))
        }
    }
}

fn lemma2(d: usize, radii: &[f64]) -> Result<Lemma2Table, CliError> {
    verify_lemma2(d, radii).map_err(|e| match e {
        Error::Resource { .. } => CliError::Verification(format!(
            "d={d}, R={}: {e}",
            radii.last().copied().unwrap_or(f64::NAN)
        )),
        other => other.into(),
    })
}

pub fn run_fourier_verify(cfg: &FourierConfig) -> Result<FourierReport, CliError> {
    let lemma1 = verify_lemma1(1..=cfg.lemma1_max)?;
    let rate = abs_tail_rate(&LEMMA1_RATE_NS)?;
    let lemma2 = vec![lemma2(2, &cfg.radii_d2)?, lemma2(3, &cfg.radii_d3)?];
    let prov = cfg.provenance();
    let out = &cfg.common.out;

    let mut l1 = Vec::new();
    write_lemma1_csv(&mut l1, &lemma1)?;
    let mut files = vec![write_csv(
        out,
        "lemma1.csv",
        &prov,
        &String::from_utf8_lossy(&l1),
    )?];
    for t in &lemma2 {
        let mut buf = Vec::new();
        t.write_csv(&mut buf)?;
        files.push(write_csv(
            out,
            &format!("lemma2_d{}.csv", t.d),
            &prov,
            &String::from_utf8_lossy(&buf),
        )?);
    }

    let report = FourierReport {
        lemma1,
        rate,
        lemma2,
        files: Vec::new(),
    };
    let mut summary = String::from("check,value,lower,upper,passed\n");
    let _ = writeln!(
        summary,
        "tail_sandwich_n1_to_{},{},,,{}",
        cfg.lemma1_max,
        report.lemma1.iter().filter(|r| r.passed()).count(),
        report.lemma1_passed()
    );
    let _ = writeln!(
        summary,
        "tail_rate_slope,{},{},{},{}",
        report.rate.slope,
        -3.0 - LEMMA1_RATE_TOL,
        -3.0 + LEMMA1_RATE_TOL,
        report.rate_passed()
    );
    for t in &report.lemma2 {
        let (lo, hi) = t.slope_window();
        let _ = writeln!(
            summary,
            "ball_slope_d{},{},{lo},{hi},{}",
            t.d,
            t.fit.slope,
            t.passed()
        );
    }
    files.push(write_csv(out, "fourier_summary.csv", &prov, &summary)?);
    Ok(FourierReport { files, ..report })
}

/// Test-set counts behind the published MNIST accuracies, one row per model.
pub const PUBLISHED_MNIST_COUNTS: [[u64; 2]; 4] =
    [[9648, 352], [9695, 305], [9659, 341], [9638, 362]];

#[derive(Clone, Debug)]
pub struct MnistRow {
    pub model: Architecture,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub tuned_lr: f64,
    pub best_epoch: usize,
    pub curve: Vec<EpochRecord>,
}

#[derive(Clone, Debug)]
pub struct MnistReport {
    pub rows: Vec<MnistRow>,
    /// Absent with fewer than two models.
    pub chi_square: Option<ChiSquare>,
    pub published_chi_square: ChiSquare,
    pub files: Vec<PathBuf>,
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Data(format!(
            "MNIST file not found: {}",
            path.display()
        )))
    }
}

fn chi_square_of(rows: &[[u64; 2]]) -> Result<ChiSquare, CliError> {
    let counts: Vec<Vec<u64>> = rows.iter().map(|r| r.to_vec()).collect();
    Ok(chi_square_independence(&ContingencyTable::new(&counts)?)?)
}

pub fn run_mnist(cfg: &MnistConfig) -> Result<MnistReport, CliError> {
    let c = &cfg.common;
    for p in [
        &cfg.train_images,
        &cfg.train_labels,
        &cfg.test_images,
        &cfg.test_labels,
    ] {
        require_file(p)?;
    }
    let full = load_mnist(&cfg.train_images, &cfg.train_labels)?;
    let test = load_mnist(&cfg.test_images, &cfg.test_labels)?;
    let (train, valid) = full.hold_out(cfg.valid, data_seed(c.seed))?;
    let cap = |ds: MnistDataset| match c.limit {
        Some(l) => ds.truncate(l),
        None => ds,
    };
    let (train, valid, test) = (cap(train), cap(valid), cap(test));
    let tro = ClassificationObjective::new(&train.images, &train.labels)?;
    let vao = ClassificationObjective::new(&valid.images, &valid.labels)?;
    let teo = ClassificationObjective::new(&test.images, &test.labels)?;

    let mut rows = Vec::new();
    for &arch in &c.models {
        let tc = train_config(cell_seed(c.seed, arch, cfg.hidden), c.epochs, &c.lr_grid);
        let factory = |rng: &mut Rng| {
            ClassifierHead::new(arch, PIXELS, cfg.hidden, CLASSES, rng)
                .expect("hidden size checked positive")
        };
        let t = tune_lr(factory, &tro, &vao, &tc)?;
        let correct = teo.correct(&t.best.model);
        rows.push(MnistRow {
            model: arch,
            accuracy: correct as f64 / test.len() as f64,
            correct,
            total: test.len(),
            tuned_lr: t.best_lr,
            best_epoch: t.best.best_epoch,
            curve: t.best.curve,
        });
    }
    let measured: Vec<[u64; 2]> = rows
        .iter()
        .map(|r| [r.correct as u64, (r.total - r.correct) as u64])
        .collect();
    let chi_square = if measured.len() >= 2 {
        Some(chi_square_of(&measured)?)
    } else {
        None
    };
    let published_chi_square = chi_square_of(&PUBLISHED_MNIST_COUNTS)?;

    let prov = cfg.provenance();
    let mut table = String::from("model,accuracy,correct,total,tuned_lr,best_epoch\n");
    for r in &rows {
        let _ = writeln!(
            table,
            "{},{},{},{},{},{}",
            r.model, r.accuracy, r.correct, r.total, r.tuned_lr, r.best_epoch
        );
    }
    let mut chi = String::from("source,statistic,dof,significant_at_0.10\n");
    if let Some(x) = chi_square {
        let _ = writeln!(
            chi,
            "measured,{},{},{}",
            x.statistic,
            x.dof,
            opt(x.significant_at_010())
        );
    }
    let x = published_chi_square;
    let _ = writeln!(
        chi,
        "published_table,{},{},{}",
        x.statistic,
        x.dof,
        opt(x.significant_at_010())
    );
    let mut curves = String::from("model,epoch,train_error,valid_error,lr\n");
    for r in &rows {
        for e in &r.curve {
            let _ = writeln!(
                curves,
                "{},{},{},{},{}",
                r.model, e.epoch, e.train_metric, e.valid_metric, r.tuned_lr
            );
        }
    }
    let files = vec![
        write_csv(&c.out, "mnist.csv", &prov, &table)?,
        write_csv(&c.out, "mnist_chi2.csv", &prov, &chi)?,
        write_csv(&c.out, "mnist_curves.csv", &prov, &curves)?,
    ];
    Ok(MnistReport {
        rows,
        chi_square,
        published_chi_square,
        files,
    })
}

#[derive(Clone, Debug)]
pub struct ScrnRun {
    pub model: Architecture,
    pub tuned_lr: f64,
    pub curve: Vec<LmEpochRecord>,
    /// Grid learning rates whose run failed, with the reason.
    pub failures: Vec<(f64, String)>,
}

#[derive(Clone, Debug)]
pub struct ScrnReport {
    pub vocab: usize,
    pub runs: Vec<ScrnRun>,
    pub files: Vec<PathBuf>,
}

fn selection_ppl(r: &LmEpochRecord) -> f64 {
    r.valid_ppl.unwrap_or(r.train_ppl)
}

/// Trains every layer variant per grid learning rate and keeps, per variant,
/// the run with the lowest final validation perplexity.
pub fn run_scrn(cfg: &ScrnConfig) -> Result<ScrnReport, CliError> {
    let c = &cfg.common;
    let corpus = match &cfg.corpus {
        Some(p) => {
            load_corpus(p).map_err(|e| CliError::Data(format!("corpus {}: {e}", p.display())))?
        }
        None => Corpus::from_text(TOY_CORPUS)?,
    };
    let vocab = corpus.vocab.len();
    let eval = LmEval {
        valid: &corpus.valid,
        test: &corpus.test,
    };
    let mut runs = Vec::new();
    for &arch in &c.models {
        let seed = derive_seed(c.seed, 100 + arch.tag() as u64);
        let mut best: Option<(f64, Vec<LmEpochRecord>)> = None;
        let mut failures = Vec::new();
        for &lr in &c.lr_grid {
            let lm = LmConfig {
                d_s: cfg.d_s,
                d_h: cfg.d_h,
                alpha: cfg.alpha,
                bptt_window: cfg.bptt,
                epochs: c.epochs,
                lr,
                lr_decay: cfg.lr_decay,
                init_scale: cfg.init_scale,
                seed,
            };
            let params = ScrnParams::init(
                arch,
                vocab,
                lm.d_s,
                lm.d_h,
                lm.alpha,
                lm.init_scale,
                &mut Rng::new(seed),
            )?;
            match train_lm(params, &corpus.train, eval, &lm) {
                Ok(out) => {
                    let last = selection_ppl(out.curve.last().expect("curve has the initial row"));
                    let better = last.is_finite()
                        && best
                            .as_ref()
                            .is_none_or(|(_, b)| last < selection_ppl(b.last().unwrap()));
                    if better {
                        best = Some((lr, out.curve));
                    }
                }
                Err(e @ Error::NonFiniteSequenceLoss { .. }) => failures.push((lr, e.to_string())),
                Err(e) => return Err(e.into()),
            }
        }
        let (tuned_lr, curve) = best.ok_or_else(|| {
            CliError::Numerical(format!("every learning rate diverged for the {arch} layer"))
        })?;
        runs.push(ScrnRun {
            model: arch,
            tuned_lr,
            curve,
            failures,
        });
    }

    let prov = cfg.provenance();
    let mut table = Vec::from(&b"layer,epoch,lr,train_ppl,valid_ppl,test_ppl\n"[..]);
    for r in &runs {
        write_lm_curve_csv(&mut table, r.model.name(), &r.curve)?;
    }
    let mut summary =
        String::from("layer,tuned_lr,initial_train_ppl,final_train_ppl,final_valid_ppl,final_test_ppl,vocab,failed_lrs\n");
    for r in &runs {
        let (first, last) = (&r.curve[0], r.curve.last().unwrap());
        let failed: Vec<String> = r.failures.iter().map(|f| f.0.to_string()).collect();
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{vocab},{}",
            r.model,
            r.tuned_lr,
            first.train_ppl,
            last.train_ppl,
            opt(last.valid_ppl),
            opt(last.test_ppl),
            failed.join(";")
        );
    }
    let files = vec![
        write_csv(&c.out, "scrn.csv", &prov, &String::from_utf8_lossy(&table))?,
        write_csv(&c.out, "scrn_summary.csv", &prov, &summary)?,
    ];
    Ok(ScrnReport { vocab, runs, files })
}

/// Share of pre-activations outside `[−π/2, π/2]` reported for the trained
/// Gallant–White network on |x|.
pub const REFERENCE_OUT_OF_RANGE_FRACTION: f64 = 0.08;
pub const PREACT_BINS: usize = 64;
pub const PREACT_MODEL_FILE: &str = "preact_model.fnn";

#[derive(Clone, Debug)]
pub struct PreactReport {
    pub report: PreactivationReport,
    pub units: usize,
    pub samples: usize,
    /// Learning rate of the network trained here; `None` for a loaded model.
    pub tuned_lr: Option<f64>,
    pub files: Vec<PathBuf>,
}

pub fn run_preact_hist(cfg: &PreactConfig) -> Result<PreactReport, CliError> {
    let s = &cfg.synth;
    let c = &s.common;
    let [train, valid, _] = SyntheticTask::Abs.generate_splits(
        s.sizes.train,
        s.sizes.valid,
        s.sizes.test,
        data_seed(c.seed),
    )?;
    let mut files = Vec::new();
    let (net, tuned_lr) = match &cfg.model_file {
        Some(path) => {
            let bytes = std::fs::read(path)
                .map_err(|e| CliError::Data(format!("model file {}: {e}", path.display())))?;
            (RegressionNet::from_bytes(&bytes)?, None)
        }
        None => {
            let arch = Architecture::GallantWhite;
            let n = s.ns[0];
            let tro = RegressionObjective::new(&train.inputs, &train.targets)?;
            let vao = RegressionObjective::new(&valid.inputs, &valid.targets)?;
            let tc = train_config(cell_seed(c.seed, arch, n), c.epochs, &c.lr_grid);
            let t = tune_lr(
                |rng: &mut Rng| RegressionNet::new(arch, 1, n, rng),
                &tro,
                &vao,
                &tc,
            )?;
            std::fs::create_dir_all(&c.out)?;
            let path = c.out.join(PREACT_MODEL_FILE);
            std::fs::write(&path, t.best.model.to_bytes())?;
            files.push(path);
            (t.best.model, Some(t.best_lr))
        }
    };
    let histogram = Histogram::new(-2.0 * PI, 2.0 * PI, PREACT_BINS);
    let report = preactivation_probe(&net, &valid.inputs, histogram)?;

    let prov = cfg.provenance();
    let h = &report.histogram;
    let mut hist = String::from("bin,lo,hi,count\n");
    let _ = writeln!(hist, "underflow,-inf,{},{}", h.lo, h.underflow);
    for (i, count) in h.counts.iter().enumerate() {
        let (lo, hi) = h.edges(i);
        let _ = writeln!(hist, "{i},{lo},{hi},{count}");
    }
    let _ = writeln!(hist, "overflow,{},inf,{}", h.hi, h.overflow);
    let summary = format!(
        "model,units,samples,total,out_of_range_fraction,reference_fraction,tuned_lr\n{},{},{},{},{},{},{}\n",
        net.architecture(),
        net.units(),
        valid.len(),
        h.total(),
        report.out_of_range_fraction,
        REFERENCE_OUT_OF_RANGE_FRACTION,
        opt(tuned_lr)
    );
    files.push(write_csv(&c.out, "preact_hist.csv", &prov, &hist)?);
    files.push(write_csv(&c.out, "preact_summary.csv", &prov, &summary)?);
    Ok(PreactReport {
        units: net.units(),
        samples: valid.len(),
        report,
        tuned_lr,
        files,
    })
}
