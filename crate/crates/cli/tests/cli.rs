use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use propfault_cli::CliConfig;
use propfault_core::dataset::{BundleManifest, DatasetManifest};

fn propfault(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_propfault"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path) {
    let o = propfault(&["simulate", "--scale", "desk", "--out", p(dir)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|f| f.file_name().unwrap() != "timing.log")
        .map(|f| {
            (
                f.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&f).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn defaults_round_trip_and_hold_training_settings() {
    let o = propfault(&["defaults"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let cfg = CliConfig::from_toml(&text).unwrap();
    assert_eq!(cfg, CliConfig::default());
    let t = &cfg.train;
    assert_eq!(
        (t.batch_size, t.learning_rate, t.epochs, t.dropout, t.lambda),
        (128, 5e-4, 10, 0.2, 0.1)
    );
    assert!(text.contains("optimizer = \"adam\""));
}

#[test]
fn config_typos_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[dataset]\nscael = \"full\"\n").unwrap();
    let o = propfault(&["--config", p(&bad), "defaults"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("scael"));

    fs::write(&bad, "[train]\nlambda = -1.0\n").unwrap();
    simulate(&dir.path().join("b"));
    let o = propfault(&[
        "--config",
        p(&bad),
        "train",
        "--bundle",
        p(&dir.path().join("b")),
        "--out",
        p(&dir.path().join("t")),
    ]);
    assert_eq!(code(&o), 1);

    let o = propfault(&["simulate", "--scale", "huge", "--out", p(dir.path())]);
    assert_eq!(code(&o), 1);
}

#[test]
fn missing_bundle_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = propfault(&[
        "train",
        "--bundle",
        p(&dir.path().join("nope")),
        "--out",
        p(&dir.path().join("t")),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_writes_manifests_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = (dir.path().join("x"), dir.path().join("y"));
    simulate(&x);
    simulate(&y);
    let m: BundleManifest =
        serde_json::from_slice(&fs::read(x.join("bundle.json")).unwrap()).unwrap();
    assert_eq!(
        (m.counts.a_per_label, m.counts.b, m.counts.c_per_label),
        (600, 600, 200)
    );
    let a: DatasetManifest = serde_json::from_slice(&fs::read(x.join("a.json")).unwrap()).unwrap();
    assert_eq!(a.counts_per_label, [600; 5]);
    let c: DatasetManifest = serde_json::from_slice(&fs::read(x.join("c.json")).unwrap()).unwrap();
    assert_eq!(c.counts_per_label, [200; 5]);
    assert!(x.join("config.toml").is_file());
    assert!(x.join("timing.log").is_file());
    assert_eq!(read_dir_sorted(&x), read_dir_sorted(&y));
}

#[test]
fn train_export_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle");
    simulate(&bundle);

    let dcnn = dir.path().join("dcnn");
    let o = propfault(&[
        "train",
        "--bundle",
        p(&bundle),
        "--variant",
        "dcnn",
        "--epochs",
        "1",
        "--out",
        p(&dcnn),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dcnn.join("run_result.json").is_file());
    assert!(!dcnn.join("reference.json").exists());
    let saved =
        CliConfig::from_toml(&fs::read_to_string(dcnn.join("config.toml")).unwrap()).unwrap();
    assert_eq!(saved.train.epochs, 1);

    let o = propfault(&[
        "export-features",
        "--checkpoint",
        p(&dcnn),
        "--bundle",
        p(&bundle),
        "--out",
        p(&dir.path().join("f0")),
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unsupported variant"));

    let da = dir.path().join("da");
    let args = [
        "train",
        "--bundle",
        p(&bundle),
        "--variant",
        "ddcnn-da",
        "--epochs",
        "1",
        "--seed",
        "3",
        "--out",
        p(&da),
    ];
    assert_eq!(code(&propfault(&args)), 0);
    assert!(da.join("reference.json").is_file());
    let history = fs::read_to_string(da.join("loss_history.csv")).unwrap();
    assert!(history.starts_with("step,L_c,L_DA,L\n"));
    assert_eq!(history.lines().count(), 1 + 3000 / 128);

    // rerunning gives identical outputs
    let again = dir.path().join("da2");
    let args2 = [
        "train",
        "--bundle",
        p(&bundle),
        "--variant",
        "ddcnn-da",
        "--epochs",
        "1",
        "--seed",
        "3",
        "--out",
        p(&again),
    ];
    assert_eq!(code(&propfault(&args2)), 0);
    assert_eq!(read_dir_sorted(&da), read_dir_sorted(&again));

    let feats = dir.path().join("features");
    let o = propfault(&[
        "export-features",
        "--checkpoint",
        p(&da),
        "--bundle",
        p(&bundle),
        "--out",
        p(&feats),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(feats.join("features.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "label,feature,mean,std,domain,peak_abs_mean"
    );
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(rows.len(), 2 * 5 * 64);
    for domain in ["source", "target"] {
        for label in 1..=5 {
            let mut idx: Vec<usize> = rows
                .iter()
                .filter(|r| r[4] == domain && r[0] == label.to_string())
                .map(|r| r[1].parse().unwrap())
                .collect();
            idx.sort();
            assert_eq!(idx, (0..64).collect::<Vec<_>>());
        }
    }
    assert!(feats.join("config.toml").is_file());

    let cmp = dir.path().join("cmp");
    let o = propfault(&[
        "compare",
        "--bundle",
        p(&bundle),
        "--seeds",
        "0,1",
        "--epochs",
        "1",
        "--out",
        p(&cmp),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(cmp.join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2);
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(cmp.join("comparison.json")).unwrap()).unwrap();
    for s in report["summaries"].as_array().unwrap() {
        let variant = s["variant"].as_str().unwrap();
        let accs: Vec<f64> = csv
            .lines()
            .skip(1)
            .filter(|l| l.starts_with(&format!("{variant},")))
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect();
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((s["mean_accuracy"].as_f64().unwrap() - mean).abs() < 1e-12);
    }
}
