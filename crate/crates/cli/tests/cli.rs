use probekit::fixtures::PlantedSignal;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn probekit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_probekit"))
        .args(args)
        .current_dir(dir)
        .env_remove("PROBEKIT_SEED")
        .output()
        .expect("binary runs")
}

fn planted_stores(dir: &Path) {
    let mut p = PlantedSignal::new(1);
    p.layers = vec![0, 1, 2];
    let (train, test) = p.train_test(120, 60);
    train.save(&dir.join("stores/train")).unwrap();
    test.save(&dir.join("stores/test")).unwrap();
}

#[test]
fn sweep_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    planted_stores(dir.path());
    fs::write(
        dir.path().join("c.toml"),
        r#"out_dir = "run"

[sweep]
train_store = "stores/train"
test_store = "stores/test"
poolings = ["mean"]
classifiers = ["logistic_regression"]
trials = 2
"#,
    )
    .unwrap();
    let out = probekit(dir.path(), &["sweep", "--config", "c.toml"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["cells.csv", "report.json", "top3.md", "layers_mean.svg", "layers_band.svg"] {
        assert!(dir.path().join("run/sweep").join(f).exists(), "{f}");
    }
    let saved = fs::read_to_string(dir.path().join("run/config.sweep.toml")).unwrap();
    assert!(saved.contains("seed = 42"), "{saved}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("best: 1 / Logistic Reg. / Mean"), "{stdout}");
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    planted_stores(dir.path());
    fs::write(dir.path().join("c.toml"), "seed = 5\n[sweep]\ntrain_store = \"stores/train\"\ntest_store = \"stores/test\"\nlayers = [1]\npoolings = [\"mean\"]\nclassifiers = [\"knn\"]\n").unwrap();
    let out = probekit(dir.path(), &["--out", "r", "sweep", "--config", "c.toml", "--seed", "9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let saved = fs::read_to_string(dir.path().join("r/config.sweep.toml")).unwrap();
    assert!(saved.contains("seed = 9"), "{saved}");
}

#[test]
fn unknown_subcommand_fails_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = probekit(dir.path(), &["frobnicate"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn missing_store_names_field() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[sweep]\ntest_store = \"x\"\n").unwrap();
    let out = probekit(dir.path(), &["sweep", "--config", "c.toml"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("sweep.train_store"), "{err}");
}

#[test]
fn malformed_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[sweep\n").unwrap();
    let out = probekit(dir.path(), &["sweep", "--config", "c.toml"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: config c.toml"));
}

#[test]
fn build_and_classify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let lines: String = (0..40)
        .map(|i| {
            let (w, l) = if i % 2 == 0 { ("dreadful", 0) } else { ("splendid", 1) };
            format!("{{\"text\":\"the film was {w} {i}\",\"label\":{l}}}\n")
        })
        .collect();
    fs::write(d.join("toy_train.jsonl"), &lines).unwrap();
    fs::write(d.join("toy_test.jsonl"), &lines).unwrap();
    let ok = |args: &[&str]| {
        let out = probekit(d, args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8_lossy(&out.stdout).into_owned()
    };
    ok(&["--out", "r", "extract", "--toy-layers", "2", "--toy-hidden-dim", "16", "--toy-vocab-size", "256", "--train", "toy_train.jsonl", "--test", "toy_test.jsonl"]);
    let manifest = fs::read_to_string(d.join("r/stores/train/manifest.json")).unwrap();
    assert!(manifest.contains("\"dataset_id\": \"toy\""), "{manifest}");
    ok(&["--out", "r", "build", "--model-dir", "r/model", "--train-store", "r/stores/train", "--layer", "1", "--pooling", "mean", "--classifier", "knn", "--trials", "2"]);
    let out = ok(&["--out", "r", "classify", "--pipeline-dir", "r/pipeline", "the film was dreadful 0", "the film was splendid 1"]);
    let labels: Vec<&str> = out.lines().map(|l| l.split('\t').nth(1).unwrap()).collect();
    assert_eq!(labels, ["negative", "positive"]);
    assert_eq!(fs::read_to_string(d.join("r/predictions.jsonl")).unwrap().lines().count(), 2);
}
