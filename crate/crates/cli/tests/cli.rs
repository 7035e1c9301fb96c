use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bigconv(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bigconv"))
        .args(args)
        .current_dir(cwd)
        .env("BIGC_THREADS", "1")
        .output()
        .expect("spawn bigconv")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// A 32-pixel dataset and matching flags, small enough for quick runs.
fn small_dataset(dir: &Path) {
    let o = bigconv(
        &[
            "synth", "--seed", "3", "--count", "16", "--size", "32", "--out", "data",
        ],
        dir,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

const SMALL: &[&str] = &[
    "--data",
    "data",
    "--image-size",
    "32",
    "--iterations",
    "6",
    "--batch-size",
    "2",
];

#[test]
fn synth_writes_triples_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = bigconv(
        &[
            "synth", "--seed", "7", "--count", "64", "--size", "64", "--out", "data/",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let data = dir.path().join("data");
    for sub in ["images", "regions", "boundaries"] {
        assert_eq!(
            std::fs::read_dir(data.join(sub)).unwrap().count(),
            64,
            "{sub}"
        );
    }
    let manifest = read_json(&data.join("manifest.json"));
    let samples = manifest["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 64);
    let test = samples.iter().filter(|s| s["split"] == "test").count();
    assert_eq!(test, 16);
    assert_eq!(read_json(&data.join("synth.json"))["count"], 64);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = bigconv(&["frobnicate"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("Usage"));
    let o = bigconv(&["synth", "--out", "d", "--colour", "red"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("Usage"));
    let o = bigconv(&[], dir.path());
    assert_eq!(code(&o), 1);
    let o = bigconv(&["verify"], dir.path());
    assert_eq!(code(&o), 1);
    assert_eq!(code(&bigconv(&["--help"], dir.path())), 0);
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_bigconv"))
        .args(["verify", "--residual", "--seeds", "1"])
        .current_dir(dir.path())
        .env("BIGC_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("BIGC_THREADS"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    std::fs::write(dir.path().join("run.json"), r#"{"pipeline": {"lr": 0.1}}"#).unwrap();
    let o = bigconv(
        &[
            "train", "--config", "run.json", "--data", "data", "--out", "r",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("unknown field"), "{}", stderr(&o));
    assert!(!dir.path().join("r").exists());
}

#[test]
fn invalid_pipeline_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let o = bigconv(
        &[
            "train",
            "--data",
            "data",
            "--out",
            "r",
            "--image-size",
            "40",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("image_size"), "{}", stderr(&o));
}

#[test]
fn train_then_eval_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    std::fs::write(
        dir.path().join("run.json"),
        r#"{"pipeline": {"seed": 5, "alpha": 0.5}}"#,
    )
    .unwrap();
    let mut args = vec![
        "train",
        "--config",
        "run.json",
        "--out",
        "run",
        "--checkpoint-every",
        "3",
    ];
    args.extend_from_slice(SMALL);
    let o = bigconv(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let run = dir.path().join("run");

    let echo = read_json(&run.join("config.json"));
    assert_eq!(echo["pipeline"]["seed"], 5);
    assert_eq!(echo["pipeline"]["alpha"], 0.5);
    assert_eq!(echo["pipeline"]["iterations"], 6);
    assert_eq!(echo["checkpoint_every"], 3);

    let log = std::fs::read_to_string(run.join("loss.csv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "iteration,total,L_R,L_B");
    assert_eq!(lines.len(), 7);
    for (i, line) in lines[1..].iter().enumerate() {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(f[0], i as f64);
        // total = L_R + alpha * L_B
        assert!((f[1] - (f[2] + 0.5 * f[3])).abs() < 1e-12, "{line}");
    }
    assert!(run.join("checkpoint_000003.bigc").exists());
    assert!(run.join("model.bigc").exists());

    let o = bigconv(&["eval", "--run", "run"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = read_json(&run.join("metrics.json"));
    assert_eq!(m["seed"], 5);
    assert_eq!(m["split"], "test");
    assert_eq!(m["iteration"], 6);
    assert_eq!(m["samples"], 4);
    for class in ["foreground", "background"] {
        for key in ["dice", "bacc", "biou"] {
            let v = m[class][key].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&v), "{class}.{key} = {v}");
        }
    }
    assert_eq!(m["config"], echo);
}

#[test]
fn variant_list_runs_sibling_directories() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let mut args = vec![
        "train",
        "--out",
        "sweep",
        "--variant",
        "boundary,channel_spatial,classic",
    ];
    args.extend_from_slice(SMALL);
    let o = bigconv(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut seeds = Vec::new();
    for v in ["boundary", "channel_spatial", "classic"] {
        let sub = dir.path().join("sweep").join(v);
        let echo = read_json(&sub.join("config.json"));
        assert_eq!(echo["pipeline"]["grm"]["variant"], v);
        seeds.push(echo["pipeline"]["seed"].clone());
        assert!(sub.join("loss.csv").exists());
    }
    assert!(seeds.windows(2).all(|w| w[0] == w[1]));
    let o = bigconv(
        &[
            "train",
            "--out",
            "x",
            "--variant",
            "boundary,nope",
            "--data",
            "data",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn mismatched_checkpoint_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let mut args = vec!["train", "--out", "run"];
    args.extend_from_slice(SMALL);
    assert_eq!(code(&bigconv(&args, dir.path())), 0);
    std::fs::write(
        dir.path().join("wide.json"),
        r#"{"data": "data", "pipeline": {"image_size": 32, "region_grid": 8, "boundary_grid": 16, "aggregation_channels": 8}}"#,
    )
    .unwrap();
    let o = bigconv(
        &[
            "eval",
            "--config",
            "wide.json",
            "--checkpoint",
            "run/model.bigc",
            "--out",
            "ev",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("does not match"), "{err}");
    assert!(err.contains("(16, 16)") && err.contains("(16, 8)"), "{err}");
    assert!(!dir.path().join("ev").join("metrics.json").exists());
}

#[test]
fn identical_runs_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let mut args = vec!["train", "--out", "run"];
    args.extend_from_slice(SMALL);
    let mut outputs = Vec::new();
    for _ in 0..2 {
        assert_eq!(code(&bigconv(&args, dir.path())), 0);
        assert_eq!(code(&bigconv(&["eval", "--run", "run"], dir.path())), 0);
        let run = dir.path().join("run");
        outputs.push((
            std::fs::read(run.join("loss.csv")).unwrap(),
            std::fs::read(run.join("metrics.json")).unwrap(),
            std::fs::read(run.join("model.bigc")).unwrap(),
        ));
    }
    assert!(outputs[0] == outputs[1]);
}

#[test]
fn verify_all_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = bigconv(
        &["verify", "--all", "--seeds", "1", "--out", "v"],
        dir.path(),
    );
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{out}");
    assert!(out.contains("verify: all pass"));
    let report = read_json(&dir.path().join("v").join("verify.json"));
    assert_eq!(report["pass"], true);
    assert_eq!(report["suites"].as_array().unwrap().len(), 7);
}

#[test]
fn verify_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // No finite-difference estimate agrees to a relative 1e-15.
    let o = bigconv(
        &[
            "verify",
            "--gradients",
            "--seeds",
            "1",
            "--grad-tolerance",
            "1e-15",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = bigconv(
        &[
            "bench",
            "--sizes",
            "16,64",
            "--repeats",
            "1",
            "--channels",
            "2",
            "--out",
            "b",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("b").join("bench.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,N,C,median_seconds");
    assert_eq!(lines.len(), 5);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 4));
    let o = bigconv(&["bench", "--sizes", "64,16", "--out", "b2"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn toy_training_reaches_dice_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let o = bigconv(
        &[
            "synth", "--seed", "7", "--count", "64", "--size", "64", "--out", "data",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let o = bigconv(&["train", "--data", "data", "--out", "run"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = bigconv(&["eval", "--run", "run"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dice = read_json(&dir.path().join("run").join("metrics.json"))["foreground"]["dice"]
        .as_f64()
        .unwrap();
    assert!(dice >= 0.95, "dice {dice}");
}
