//! Command-line behavior: exit codes, configuration layering and the staged
//! pipeline on a small synthetic set.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nasa_cli::report::parse_kv;

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("commands").join(name);
    if dir.exists() {
        fs::remove_dir_all(&dir).unwrap();
    }
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn nasa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nasa")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = nasa(args);
    assert!(out.status.success(), "nasa {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn value(text: &str, key: &str) -> String {
    parse_kv(text).into_iter().find(|(k, _)| k == key).unwrap_or_else(|| panic!("no {key} in {text}")).1
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, seed: u64) -> (PathBuf, PathBuf) {
    let f = dir.join(format!("{name}.bin"));
    let l = dir.join(format!("{name}.labels"));
    ok(&[
        "synth",
        "--classes",
        "12",
        "--size",
        "10",
        "--dim",
        "16",
        "--noise",
        "0.15",
        "--seed",
        &seed.to_string(),
        "--out-features",
        s(&f),
        "--out-labels",
        s(&l),
    ]);
    (f, l)
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(nasa(&["--help"]).status.code(), Some(0));
    assert_eq!(nasa(&["--version"]).status.code(), Some(0));
    assert_eq!(nasa(&["run-all", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(nasa(&[]).status.code(), Some(1));
    assert_eq!(nasa(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(nasa(&["knn"]).status.code(), Some(1));
    assert_eq!(nasa(&["--preset", "imagenet", "show-config"]).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = scratch("runtime");
    let missing = dir.join("absent.bin");
    let out = nasa(&["knn", "--features", s(&missing), "--out", s(&dir.join("k.bin"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    assert_eq!(nasa(&["--set", "nasa.nope=1", "show-config"]).status.code(), Some(2));
    assert_eq!(nasa(&["--set", "nasa.t1=2.0", "show-config"]).status.code(), Some(2));
}

#[test]
fn large_scale_preset_values() {
    let text = ok(&["--preset", "ms1m", "show-config"]);
    assert_eq!(value(&text, "nasa.t1"), "0.8");
    assert_eq!(value(&text, "nasa.k"), "80");
    assert_eq!(value(&text, "nasa.k1"), "60");
    assert_eq!(value(&text, "nasa.k2"), "10");
    assert_eq!(value(&text, "nasa.fd_hidden"), "512,512,512,512,512,256,256,40");
    assert_eq!(value(&text, "gcn.k_test"), "40");
    assert_eq!(value(&text, "gcn.scale"), "40.0");
    assert_eq!(value(&text, "gcn.margin"), "0.25");
}

#[test]
fn config_file_round_trips_and_layers() {
    let dir = scratch("config");
    let text = ok(&["--preset", "deepfashion", "--set", "nasa.epochs=3", "show-config"]);
    let path = dir.join("run.kv");
    fs::write(&path, &text).unwrap();
    assert_eq!(ok(&["--config", s(&path), "show-config"]), text);
    // --set beats the file, --seed beats both
    let layered = ok(&["--config", s(&path), "--set", "nasa.epochs=5", "--seed", "7", "show-config"]);
    assert_eq!(value(&layered, "nasa.epochs"), "5");
    assert_eq!(value(&layered, "seed"), "7");
    assert_eq!(value(&layered, "preset"), "deepfashion");
}

#[test]
fn eval_of_labels_against_themselves_is_perfect() {
    let dir = scratch("eval");
    let (_, labels) = synth(&dir, "set", 1);
    let out = dir.join("report.kv");
    let text = ok(&["eval", "--pred", s(&labels), "--labels", s(&labels), "--out", s(&out)]);
    for key in ["pairwise_precision", "pairwise_recall", "pairwise_f", "bcubed_f"] {
        assert_eq!(value(&text, key), "1.000000", "{key}");
    }
    assert_eq!(fs::read_to_string(out).unwrap(), text);
}

#[test]
fn eval_rejects_length_mismatch() {
    let dir = scratch("mismatch");
    fs::write(dir.join("a.txt"), "0\n0\n1\n").unwrap();
    fs::write(dir.join("b.txt"), "0\n1\n").unwrap();
    let out = nasa(&["eval", "--pred", s(&dir.join("a.txt")), "--labels", s(&dir.join("b.txt"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn staged_pipeline_matches_expected_artifacts() {
    let dir = scratch("staged");
    let (ftr, ltr) = synth(&dir, "train", 1);
    let (fte, lte) = synth(&dir, "test", 2);
    let quick = [
        "--preset",
        "synth",
        "--set",
        "nasa.epochs=2",
        "--set",
        "gcn.epochs=2",
        "--set",
        "nasa.k=8",
        "--set",
        "nasa.k1=4",
        "--set",
        "nasa.k2=2",
        "--set",
        "gcn.k_train=8",
        "--set",
        "gcn.k_test=8",
        "--set",
        "dpc.k=8",
    ];
    let with = |rest: &[&str]| -> String {
        let args: Vec<&str> = quick.iter().copied().chain(rest.iter().copied()).collect();
        ok(&args)
    };
    let p = |name: &str| dir.join(name);

    with(&["knn", "--features", s(&ftr), "--out", s(&p("train.knn"))]);
    let log = p("nasa.log");
    with(&[
        "train-nasa",
        "--features",
        s(&ftr),
        "--labels",
        s(&ltr),
        "--knn",
        s(&p("train.knn")),
        "--out-model",
        s(&p("nasa.ckpt")),
        "--log",
        s(&log),
    ]);
    assert_eq!(fs::read_to_string(&log).unwrap().lines().count(), 2);

    with(&["knn", "--features", s(&fte), "--out", s(&p("test.knn"))]);
    let pairs = with(&[
        "adjust",
        "--features",
        s(&fte),
        "--model",
        s(&p("nasa.ckpt")),
        "--knn",
        s(&p("test.knn")),
        "--out",
        s(&p("test.adj")),
        "--labels",
        s(&lte),
    ]);
    let acc: f64 = value(&pairs, "pair_accuracy").parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    with(&[
        "adjust",
        "--features",
        s(&ftr),
        "--model",
        s(&p("nasa.ckpt")),
        "--knn",
        s(&p("train.knn")),
        "--out",
        s(&p("train.adj")),
    ]);
    with(&[
        "train-gcn",
        "--features",
        s(&ftr),
        "--labels",
        s(&ltr),
        "--graph",
        s(&p("train.adj")),
        "--out-model",
        s(&p("gcn.ckpt")),
    ]);
    with(&[
        "aggregate",
        "--features",
        s(&fte),
        "--model",
        s(&p("gcn.ckpt")),
        "--graph",
        s(&p("test.adj")),
        "--out",
        s(&p("agg.bin")),
    ]);
    with(&["cluster", "--features", s(&p("agg.bin")), "--out", s(&p("clusters.txt"))]);
    let report = with(&["eval", "--pred", s(&p("clusters.txt")), "--labels", s(&lte)]);
    let f: f64 = value(&report, "pairwise_f").parse().unwrap();
    assert!((0.0..=1.0).contains(&f));
    assert_eq!(fs::read_to_string(p("clusters.txt")).unwrap().lines().count(), 120);

    // threshold clustering straight from features, and a too-high cutoff gives singletons
    with(&["cluster", "--features", s(&fte), "--method", "threshold", "--tau", "1.5", "--out", s(&p("single.txt"))]);
    let single = fs::read_to_string(p("single.txt")).unwrap();
    let ids: Vec<&str> = single.lines().collect();
    assert_eq!(ids, (0..120).map(|i| i.to_string()).collect::<Vec<_>>());
}

#[test]
fn run_all_writes_every_artifact() {
    let dir = scratch("run-all");
    let (ftr, ltr) = synth(&dir, "train", 3);
    let (fte, lte) = synth(&dir, "test", 4);
    let out = dir.join("out");
    let text = ok(&[
        "--preset",
        "synth",
        "--set",
        "nasa.epochs=2",
        "--set",
        "gcn.epochs=2",
        "run-all",
        "--train-features",
        s(&ftr),
        "--train-labels",
        s(&ltr),
        "--test-features",
        s(&fte),
        "--test-labels",
        s(&lte),
        "--out-dir",
        s(&out),
    ]);
    for name in ["nasa.ckpt", "gcn.ckpt", "train.log", "config.kv", "clusters.txt", "report.kv"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    assert!(value(&text, "pairwise_f").parse::<f64>().is_ok());
    let cfg = fs::read_to_string(out.join("config.kv")).unwrap();
    assert_eq!(value(&cfg, "nasa.epochs"), "2");
}
