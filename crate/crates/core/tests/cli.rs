use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use laeh::data::synth_dataset;
use laeh::{LaehModel, ModelShape, PairedDataset, SeededRng, SynthParams, ZeroShotSplit};

fn laeh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_laeh"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = laeh(args);
    assert!(
        out.status.success(),
        "laeh {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn fails(args: &[&str]) -> String {
    let out = laeh(args);
    assert!(!out.status.success(), "laeh {args:?} should fail");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small dataset and split on disk: 6 classes of 12, 2 unseen.
fn small_inputs(dir: &Path) -> (PathBuf, PathBuf) {
    let data = dir.join("data");
    ok(&[
        "synth",
        "--out",
        s(&data),
        "--classes",
        "6",
        "--per-class",
        "12",
        "--d1",
        "8",
        "--d2",
        "6",
        "--v",
        "5",
        "--seed",
        "1",
    ]);
    let manifest = data.join("manifest.txt");
    let split = dir.join("split.txt");
    ok(&[
        "split",
        "--data",
        s(&manifest),
        "--out",
        s(&split),
        "--unseen",
        "2",
        "--query-per-class",
        "3",
        "--seed",
        "1",
    ]);
    (manifest, split)
}

const FAST: [&str; 8] = [
    "--hidden",
    "8",
    "--feature-dim",
    "6",
    "--epochs",
    "3",
    "--inner-iters",
    "2",
];

#[test]
fn synth_writes_four_matrix_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    ok(&[
        "synth",
        "--out",
        s(&out),
        "--classes",
        "12",
        "--per-class",
        "60",
        "--seed",
        "7",
    ]);
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    let files: Vec<&str> = manifest
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(_, v)| v)
        .collect();
    assert_eq!(files.len(), 4);
    for f in files {
        assert!(out.join(f).is_file(), "{f}");
    }
    let d = PairedDataset::load(&out.join("manifest.txt")).unwrap();
    assert_eq!((d.len(), d.num_classes()), (720, 12));
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&[
            "synth",
            "--out",
            s(out),
            "--classes",
            "4",
            "--per-class",
            "5",
            "--v",
            "7",
            "--seed",
            "7",
        ]);
    }
    for f in [
        "manifest.txt",
        "x1.txt",
        "x2.txt",
        "labels.txt",
        "semantics.txt",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn synth_rejects_zero_classes() {
    let dir = tempfile::tempdir().unwrap();
    let err = fails(&["synth", "--out", s(&dir.path().join("d")), "--classes", "0"]);
    assert!(err.contains("positive"), "{err}");
}

#[test]
fn split_counts_seen_classes() {
    let dir = tempfile::tempdir().unwrap();
    for (classes, seen) in [(30, 20), (50, 40)] {
        let data = dir.path().join(format!("d{classes}"));
        ok(&[
            "synth",
            "--out",
            s(&data),
            "--classes",
            &classes.to_string(),
            "--per-class",
            "4",
            "--d1",
            "3",
            "--d2",
            "3",
            "--v",
            "3",
        ]);
        let split = dir.path().join(format!("split{classes}.txt"));
        ok(&[
            "split",
            "--data",
            s(&data.join("manifest.txt")),
            "--out",
            s(&split),
            "--unseen",
            "10",
            "--query-per-class",
            "1",
        ]);
        let z = ZeroShotSplit::load(&split).unwrap();
        assert_eq!(z.seen_classes.len(), seen);
        assert_eq!(z.unseen_classes.len(), 10);
    }
}

#[test]
fn split_reports_missing_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere").join("manifest.txt");
    let err = fails(&[
        "split",
        "--data",
        s(&missing),
        "--out",
        s(&dir.path().join("x.txt")),
    ]);
    assert!(err.contains(s(&missing)), "{err}");
}

#[test]
fn split_rejects_too_many_unseen() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = small_inputs(dir.path());
    fails(&[
        "split",
        "--data",
        s(&manifest),
        "--out",
        s(&dir.path().join("x.txt")),
        "--unseen",
        "6",
    ]);
}

#[test]
fn train_records_bits_and_beta() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, split) = small_inputs(dir.path());
    let ckpt = dir.path().join("model");
    let mut args = vec![
        "train",
        "--data",
        s(&manifest),
        "--split",
        s(&split),
        "--out",
        s(&ckpt),
        "--bits",
        "32",
        "--beta",
        "100",
    ];
    args.extend(FAST);
    ok(&args);
    let m = fs::read_to_string(ckpt.join("manifest.txt")).unwrap();
    assert!(m.lines().any(|l| l == "c=32"), "{m}");
    let log = fs::read_to_string(ckpt.join("train_log.csv")).unwrap();
    let header = log.lines().next().unwrap();
    assert!(
        header.starts_with('#') && header.contains("beta=100"),
        "{header}"
    );
    assert_eq!(log.lines().count(), 2 + 3);
    assert_eq!(LaehModel::load(&ckpt).unwrap().code_len(), 32);
}

#[test]
fn train_requires_split_file() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = small_inputs(dir.path());
    let missing = dir.path().join("absent.txt");
    let err = fails(&[
        "train",
        "--data",
        s(&manifest),
        "--split",
        s(&missing),
        "--out",
        s(&dir.path().join("m")),
    ]);
    assert!(err.contains("absent.txt"), "{err}");
}

#[test]
fn config_file_layers_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, split) = small_inputs(dir.path());
    let cfg = dir.path().join("train.cfg");
    fs::write(
        &cfg,
        "# small run\nbits=16\nepochs=2\nhidden=8\nfeature_dim=6\nbeta=0.5\n",
    )
    .unwrap();
    let ckpt = dir.path().join("m");
    ok(&[
        "train",
        "--data",
        s(&manifest),
        "--split",
        s(&split),
        "--out",
        s(&ckpt),
        "--config",
        s(&cfg),
        "--bits",
        "8",
    ]);
    let m = fs::read_to_string(ckpt.join("manifest.txt")).unwrap();
    assert!(m.contains("c=8\n"));
    let log = fs::read_to_string(ckpt.join("train_log.csv")).unwrap();
    assert!(log.lines().next().unwrap().contains("beta=0.5"));
    assert_eq!(log.lines().count(), 2 + 2);

    fs::write(&cfg, "bitz=16\n").unwrap();
    let err = fails(&[
        "train",
        "--data",
        s(&manifest),
        "--split",
        s(&split),
        "--out",
        s(&ckpt),
        "--config",
        s(&cfg),
    ]);
    assert!(err.contains("bitz"), "{err}");
}

#[test]
fn eval_writes_six_deterministic_lines() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, split) = small_inputs(dir.path());
    let ckpt = dir.path().join("model");
    let mut args = vec![
        "train",
        "--data",
        s(&manifest),
        "--split",
        s(&split),
        "--out",
        s(&ckpt),
        "--bits",
        "16",
    ];
    args.extend(FAST);
    ok(&args);
    let (r1, r2) = (dir.path().join("r1.csv"), dir.path().join("r2.csv"));
    for r in [&r1, &r2] {
        ok(&[
            "eval",
            "--data",
            s(&manifest),
            "--split",
            s(&split),
            "--model",
            s(&ckpt),
            "--out",
            s(r),
        ]);
    }
    let text = fs::read_to_string(&r1).unwrap();
    assert_eq!(text, fs::read_to_string(&r2).unwrap());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    for (line, prefix) in lines.iter().zip([
        "i2t,all,16,",
        "i2t,unseen,16,",
        "i2t,seen,16,",
        "t2i,all,16,",
        "t2i,unseen,16,",
        "t2i,seen,16,",
    ]) {
        assert!(line.starts_with(prefix), "{line}");
        assert_eq!(line.split(',').count(), 9);
    }

    let err = fails(&[
        "eval",
        "--data",
        s(&manifest),
        "--split",
        s(&split),
        "--out",
        s(&r1),
    ]);
    assert!(err.contains("--model"), "{err}");
}

#[test]
fn eval_rejects_mismatched_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, split) = small_inputs(dir.path());
    let shape = ModelShape {
        d1: 9,
        d2: 6,
        v: 5,
        feature_dim: 4,
        code_len: 8,
        n_train: 3,
        hidden: vec![],
        normalize_text: false,
    };
    let ckpt = dir.path().join("wrong");
    LaehModel::init(&shape, &mut SeededRng::new(0))
        .unwrap()
        .save(&ckpt)
        .unwrap();
    let err = fails(&[
        "eval",
        "--data",
        s(&manifest),
        "--split",
        s(&split),
        "--model",
        s(&ckpt),
        "--out",
        s(&dir.path().join("r.csv")),
    ]);
    assert!(err.contains("shape mismatch"), "{err}");
}

fn mean_map(report: &str) -> f64 {
    let maps: Vec<f64> = report
        .lines()
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    maps.iter().sum::<f64>() / maps.len() as f64
}

#[test]
fn untrained_checkpoint_scores_near_chance() {
    let dir = tempfile::tempdir().unwrap();
    let params = SynthParams {
        classes: 10,
        per_class: 40,
        ..SynthParams::default()
    };
    let dataset = synth_dataset(&params, &mut SeededRng::named(0, "data")).unwrap();
    let manifest = dataset.save(&dir.path().join("data")).unwrap();
    let split = dir.path().join("split.txt");
    ok(&[
        "split",
        "--data",
        s(&manifest),
        "--out",
        s(&split),
        "--unseen",
        "3",
        "--query-per-class",
        "5",
    ]);
    let train_n = ZeroShotSplit::load(&split).unwrap().train_idx.len();
    let shape = ModelShape {
        d1: 64,
        d2: 64,
        v: 300,
        feature_dim: 128,
        code_len: 64,
        n_train: train_n,
        hidden: vec![512, 512],
        normalize_text: false,
    };
    let ckpt = dir.path().join("init");
    LaehModel::init(&shape, &mut SeededRng::named(0, "init"))
        .unwrap()
        .save(&ckpt)
        .unwrap();
    let report = dir.path().join("r.csv");
    ok(&[
        "eval",
        "--data",
        s(&manifest),
        "--split",
        s(&split),
        "--model",
        s(&ckpt),
        "--out",
        s(&report),
    ]);
    let untrained = mean_map(&fs::read_to_string(&report).unwrap());
    ok(&[
        "eval",
        "--data",
        s(&manifest),
        "--split",
        s(&split),
        "--random-baseline",
        "64",
        "--out",
        s(&report),
    ]);
    let random = mean_map(&fs::read_to_string(&report).unwrap());
    println!("untrained checkpoint MAP {untrained:.4}, random codes MAP {random:.4}");
    assert!((0.05..=0.15).contains(&random), "{random}");
    assert!((0.05..=0.15).contains(&untrained), "{untrained}");
}

#[test]
fn sweep_grid_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, split) = small_inputs(dir.path());
    let out = dir.path().join("sweep.csv");
    let mut args = vec![
        "sweep",
        "--data",
        s(&manifest),
        "--split",
        s(&split),
        "--out",
        s(&out),
        "--alpha1",
        "0.1,1,10",
        "--alpha2",
        "0.1,1,10",
        "--bits",
        "8",
    ];
    args.extend(FAST);
    ok(&args);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r.split(',').count() == 9));

    let mut args = vec![
        "sweep",
        "--data",
        s(&manifest),
        "--split",
        s(&split),
        "--out",
        s(&out),
        "--beta",
        "1,1",
        "--bits",
        "8",
    ];
    args.extend(FAST);
    ok(&args);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], rows[1]);
}

#[test]
fn sweep_guard_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, split) = small_inputs(dir.path());
    let err = fails(&[
        "sweep",
        "--data",
        s(&manifest),
        "--split",
        s(&split),
        "--out",
        s(&dir.path().join("o.csv")),
        "--alpha1",
        "1,2,3,4,5",
        "--alpha2",
        "1,2,3,4",
        "--beta",
        "1,2,3,4",
    ]);
    assert!(err.contains("--force"), "{err}");
}

#[test]
fn help_documents_each_key() {
    let keys: [(&str, &[&str]); 5] = [
        (
            "synth",
            &[
                "--classes",
                "--per-class",
                "--d1",
                "--d2",
                "--v",
                "--noise",
                "--seed",
                "--config",
            ],
        ),
        (
            "split",
            &["--unseen", "--query-per-class", "--seed", "--config"],
        ),
        (
            "train",
            &[
                "--alpha1",
                "--alpha2",
                "--beta",
                "--bits",
                "--feature-dim",
                "--hidden",
                "--lr",
                "--lr-decay",
                "--epochs",
                "--batch-size",
                "--inner-iters",
                "--clip-norm",
                "--normalize-text",
                "--scale-attr",
                "--seed",
                "--config",
            ],
        ),
        ("eval", &["--model", "--random-baseline", "--seed"]),
        (
            "sweep",
            &[
                "--alpha1", "--alpha2", "--beta", "--force", "--config", "--epochs",
            ],
        ),
    ];
    for (cmd, flags) in keys {
        let help = ok(&[cmd, "--help"]);
        for f in flags {
            assert!(help.contains(f), "{cmd} --help lacks {f}");
        }
    }
}
