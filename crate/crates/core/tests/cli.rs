//! Command-line contract: outputs, sidecars, exit codes and reproducibility.

use std::fs;
use std::path::Path;
use std::process::Command;

use annpricer::calibrator::QuoteSet;
use annpricer::cli::{run, EXIT_CONFIG, EXIT_DEGENERATE, EXIT_IO, EXIT_OK};

fn cli(args: &[&str]) -> i32 {
    let mut full = vec!["annpricer"];
    full.extend_from_slice(args);
    run(full)
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn small_dataset(dir: &Path, n: &str) -> String {
    let data = p(dir, "data.csv");
    assert_eq!(cli(&["generate", "--n", n, "--seed", "5", "--out", &data]), EXIT_OK);
    data
}

#[test]
fn generate_writes_data_and_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path(), "500");
    let meta = fs::read_to_string(format!("{data}.meta")).unwrap();
    assert!(meta.contains("seed = 5"));
    assert!(meta.contains("requested = 500"));
    let config = fs::read_to_string(format!("{data}.config")).unwrap();
    assert!(config.contains("n = 500"));
    let rows = fs::read_to_string(&data).unwrap().lines().count() - 1;
    assert!(meta.contains(&format!("kept = {rows}")));
}

#[test]
fn generate_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let a = p(dir.path(), "a.csv");
    let b = p(dir.path(), "b.csv");
    for out in [&a, &b] {
        assert_eq!(cli(&["generate", "--n", "300", "--seed", "9", "--out", out]), EXIT_OK);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "x.csv");
    assert_eq!(cli(&["generate", "--n", "0", "--out", &out]), EXIT_CONFIG);
    assert_eq!(cli(&["generate", "--range", "sigma=0.5:0.1", "--out", &out]), EXIT_CONFIG);
    assert_eq!(cli(&["generate", "--range", "rho=0:1", "--out", &out]), EXIT_CONFIG);

    let cfg = p(dir.path(), "run.cfg");
    fs::write(&cfg, "n = 10\nlearning_rate = 0.1\n").unwrap();
    assert_eq!(cli(&["generate", "--config", &cfg, "--out", &out]), EXIT_CONFIG);

    let data = small_dataset(dir.path(), "200");
    let model = p(dir.path(), "m.txt");
    for bad in [
        vec!["--optimizer", "sgd"],
        vec!["--lambda", "1,2"],
        vec!["--lambda=-1"],
        vec!["--clip", "sometimes"],
        vec!["--inverse", "--lambda", "1"],
        vec!["--inverse"],
    ] {
        let mut args = vec!["train", "--data", &data, "--out", &model, "--epochs", "1"];
        args.extend(bad.iter());
        assert_eq!(cli(&args), EXIT_CONFIG, "{bad:?}");
    }
    assert_eq!(cli(&["train", "--bogus-flag"]), EXIT_CONFIG);
}

#[test]
fn missing_files_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = p(dir.path(), "nope.csv");
    let out = p(dir.path(), "m.txt");
    assert_eq!(cli(&["train", "--data", &missing, "--out", &out]), EXIT_IO);
    let rep = p(dir.path(), "rep");
    assert_eq!(cli(&["report", "--data", &missing, "--oracle", "--out", &rep]), EXIT_IO);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = p(dir.path(), "gen.cfg");
    fs::write(&cfg, "# small run\nn = 50\nseed = 1\nsigma = 0.2:0.3\n").unwrap();
    let out = p(dir.path(), "d.csv");
    assert_eq!(cli(&["generate", "--config", &cfg, "--seed", "2", "--out", &out]), EXIT_OK);
    let resolved = fs::read_to_string(format!("{out}.config")).unwrap();
    assert!(resolved.contains("n = 50"));
    assert!(resolved.contains("seed = 2"));
    assert!(resolved.contains("sigma = 0.2:0.3"));
}

#[test]
fn train_is_reproducible_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path(), "400");
    let a = p(dir.path(), "a.model");
    let b = p(dir.path(), "b.model");
    for out in [&a, &b] {
        let code = cli(&[
            "train", "--data", &data, "--out", out, "--epochs", "2", "--hidden", "8,8", "--lambda", "1",
        ]);
        assert_eq!(code, EXIT_OK);
    }
    for suffix in ["", ".metrics.csv"] {
        let x = fs::read(format!("{a}{suffix}")).unwrap();
        let y = fs::read(format!("{b}{suffix}")).unwrap();
        assert_eq!(x, y, "{suffix}");
    }
    let metrics = fs::read_to_string(format!("{a}.metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    assert!(fs::read_to_string(format!("{a}.summary.txt")).unwrap().contains("P10"));
    let config = fs::read_to_string(format!("{a}.config")).unwrap();
    assert!(config.contains("epochs = 2"));
    assert!(config.contains("clip = off"));
}

#[test]
fn report_on_closed_form_pricer_counts_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path(), "300");
    let out = p(dir.path(), "rep");
    assert_eq!(cli(&["report", "--data", &data, "--oracle", "--out", &out]), EXIT_OK);
    let csv = fs::read_to_string(Path::new(&out).join("arbitrage.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "total,0"), "{csv}");
}

#[test]
fn report_on_model_writes_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path(), "300");
    let model = p(dir.path(), "m.model");
    assert_eq!(cli(&["train", "--data", &data, "--out", &model, "--epochs", "1", "--hidden", "6"]), EXIT_OK);
    let out = p(dir.path(), "rep");
    assert_eq!(
        cli(&["report", "--data", &data, "--model", &model, "--out", &out, "--bins", "7"]),
        EXIT_OK
    );
    let out = Path::new(&out);
    for f in ["arbitrage_train.csv", "arbitrage_test.csv", "scatter.csv", "error_hist.csv", "summary.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let hist = fs::read_to_string(out.join("error_hist.csv")).unwrap();
    assert_eq!(hist.lines().count(), 8);
    let scatter = fs::read_to_string(out.join("scatter.csv")).unwrap();
    assert_eq!(scatter.lines().next(), Some("y_true,y_pred"));
}

#[test]
fn calibration_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path(), "300");
    let inv = p(dir.path(), "inv.model");
    let code = cli(&[
        "train", "--inverse", "--price-source", "model", "--data", &data, "--out", &inv, "--epochs", "1",
        "--hidden", "6",
    ]);
    assert_eq!(code, EXIT_OK);

    let empty = p(dir.path(), "empty.csv");
    fs::write(&empty, "").unwrap();
    let out = p(dir.path(), "cal.csv");
    let args = |quotes: &str| {
        vec![
            "calibrate".to_string(),
            "--quotes".into(),
            quotes.to_string(),
            "--inverse-model".into(),
            inv.clone(),
            "--weights".into(),
            "vega".into(),
            "--out".into(),
            out.clone(),
        ]
    };
    let mut full = vec!["annpricer".to_string()];
    full.extend(args(&empty));
    assert_eq!(run(full), EXIT_DEGENERATE);

    let quotes = p(dir.path(), "quotes.csv");
    QuoteSet::synthetic(16.0, 0.01, 0.0, 0.25, &[0.5, 1.0], &[12.0, 16.0, 20.0])
        .unwrap()
        .save_csv(&quotes)
        .unwrap();
    let mut full = vec!["annpricer".to_string()];
    full.extend(args(&quotes));
    assert_eq!(run(full), EXIT_OK);
    // One epoch leaves the map crude, so only the at-the-money exclusions are
    // predictable: strike 16 at both maturities.
    let rows = fs::read_to_string(&out).unwrap();
    let atm: Vec<&str> = rows.lines().filter(|l| l.contains("at the money")).collect();
    assert_eq!(atm.len(), 2, "{rows}");
    assert!(atm.iter().all(|l| l.split(',').nth(4) == Some("1.6000000000000000e1")));
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_annpricer");
    let status = Command::new(bin).args(["generate", "--n", "0"]).status().unwrap();
    assert_eq!(status.code(), Some(EXIT_CONFIG));
    let status = Command::new(bin).arg("--help").status().unwrap();
    assert_eq!(status.code(), Some(EXIT_OK));
}
