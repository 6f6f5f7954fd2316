use std::path::Path;
use std::process::{Command, Output};

use fnn_cli::config::{
    CommonArgs, FourierArgs, FourierConfig, ScrnArgs, ScrnConfig, SynthArgs, SynthConfig, SynthTask,
};
use fnn_cli::experiments::{run_fourier_verify, run_scrn, run_synth_sweep};
use fnn_core::models::{Architecture, Parameterized, RegressionNet};
use fnn_core::Rng;

fn fnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fnn"))
        .args(args)
        .output()
        .unwrap()
}

fn code(args: &[&str]) -> i32 {
    fnn(args).status.code().unwrap()
}

fn out_args(dir: &Path) -> CommonArgs {
    CommonArgs {
        out: Some(dir.to_path_buf()),
        ..CommonArgs::default()
    }
}

#[test]
fn usage_exit_codes() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["fit-everything"]), 1);
    assert_eq!(code(&["synth-abs", "--epochs", "many"]), 1);
    assert_eq!(code(&["synth-abs", "--models", "relu"]), 1);
    assert_eq!(code(&["synth-abs", "--n", "50,25"]), 1);
}

#[test]
fn missing_mnist_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing-here");
    let m = missing.to_str().unwrap();
    let o = fnn(&["mnist", "--mnist-images", m, "--mnist-labels", m]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nothing-here"));
}

#[test]
fn lattice_limit_is_a_verification_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = fnn(&[
        "fourier-verify",
        "--radii-d3",
        "1,300",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("R=300"));
}

#[test]
fn fourier_checks_and_failure_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = FourierConfig::resolve(&FourierArgs {
        common: out_args(dir.path()),
        ..FourierArgs::default()
    })
    .unwrap();
    let mut report = run_fourier_verify(&cfg).unwrap();
    assert!(report.check().is_ok());
    assert_eq!(report.lemma1.len(), 100);
    let summary = std::fs::read_to_string(dir.path().join("fourier_summary.csv")).unwrap();
    assert!(summary.starts_with("# fnn experiment=fourier-verify"));
    assert_eq!(summary.matches(",true").count(), 4);

    report.rate.slope = -2.5;
    assert_eq!(report.check().unwrap_err().exit_code(), 3);
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out = dir.path().join("out");
    std::fs::write(
        &cfg,
        format!(
            "out = {}\nlimit = 200\nepochs = 1\nn = 3\nlr-grid = 0.01\nmodels = gw\n",
            out.display()
        ),
    )
    .unwrap();
    let o = fnn(&[
        "synth-abs",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("synth_abs.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(
        header.contains("seed=4") && header.contains("epochs=1") && header.contains("models=gw")
    );
    assert!(!header.contains(out.to_str().unwrap()));
    assert_eq!(
        lines.next(),
        Some("model,n,test_mse,tuned_lr,best_epoch,error")
    );
    assert!(lines.next().unwrap().starts_with("gw,3,"));
    assert!(lines.next().unwrap().starts_with("fourier,3,"));
}

#[test]
fn diverging_cells_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let args = SynthArgs {
        common: CommonArgs {
            limit: Some(200),
            epochs: Some(2),
            n: Some("3,6".into()),
            lr_grid: Some("1e300".into()),
            models: Some("vanilla".into()),
            ..out_args(dir.path())
        },
        ..SynthArgs::default()
    };
    let report = run_synth_sweep(&SynthConfig::resolve(&args, SynthTask::Abs).unwrap()).unwrap();
    assert_eq!(report.cells.len(), 2);
    for c in &report.cells {
        assert!(c.test_mse.is_none() && c.error.is_some(), "{c:?}");
    }
    assert!(report.slope("vanilla").is_none());
}

#[test]
fn scrn_sections_and_sanity_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScrnConfig::resolve(&ScrnArgs {
        common: CommonArgs {
            epochs: Some(2),
            lr_grid: Some("0.01".into()),
            ..out_args(dir.path())
        },
        d_h: Some(8),
        d_s: Some(4),
        ..ScrnArgs::default()
    })
    .unwrap();
    let report = run_scrn(&cfg).unwrap();
    assert_eq!(report.runs.len(), 4);
    for r in &report.runs {
        let first = &r.curve[0];
        let last = r.curve.last().unwrap();
        assert!(last.train_ppl < first.train_ppl, "{}", r.model);
        let test0 = first.test_ppl.unwrap();
        assert!((test0 - report.vocab as f64).abs() <= 0.02 * report.vocab as f64);
    }
    let text = std::fs::read_to_string(dir.path().join("scrn.csv")).unwrap();
    let layers: Vec<&str> = text
        .lines()
        .skip(2)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    let mut sections: Vec<&str> = layers.clone();
    sections.dedup();
    assert_eq!(sections, ["vanilla", "gw", "silvescu", "liu"]);
    assert_eq!(layers.len(), 4 * 3);
}

#[test]
fn diverging_scrn_is_a_numerical_abort() {
    let dir = tempfile::tempdir().unwrap();
    let o = fnn(&[
        "scrn",
        "--models",
        "vanilla",
        "--epochs",
        "1",
        "--lr-grid",
        "1e300",
        "--d-h",
        "4",
        "--d-s",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn zero_weight_model_has_no_out_of_range_preactivations() {
    let dir = tempfile::tempdir().unwrap();
    let mut net = RegressionNet::new(Architecture::GallantWhite, 1, 100, &mut Rng::new(0));
    for t in net.tensors_mut() {
        t.fill(0.0);
    }
    let model = dir.path().join("zero.fnn");
    std::fs::write(&model, net.to_bytes()).unwrap();
    let out = dir.path().join("out");
    let o = fnn(&[
        "preact-hist",
        "--limit",
        "250",
        "--model-file",
        model.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let summary = std::fs::read_to_string(out.join("preact_summary.csv")).unwrap();
    let row: Vec<&str> = summary.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(row[0], "gw");
    assert_eq!(row[3], (100 * 250).to_string());
    assert_eq!(row[4], "0");

    let hist = std::fs::read_to_string(out.join("preact_hist.csv")).unwrap();
    let counts: Vec<u64> = hist
        .lines()
        .skip(2)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(counts.len(), 66);
    assert_eq!(counts.iter().sum::<u64>(), 100 * 250);
}
