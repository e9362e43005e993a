use std::path::{Path, PathBuf};

use deep_koopman::cli::{content_hash, run, EXIT_USAGE, EXIT_DATASET_NOT_FOUND, EXIT_FORMAT, EXIT_MODEL_NOT_FOUND};
use deep_koopman::datagen::Dataset;
use deep_koopman::modelfile::SavedModel;

const CONFIG: &str = r#"
env = "cartpole"
method = "dkac"
seed = 3

[data]
n_traj = 60
test_traj = 10
test_horizon = 20

[model]
embed_dim = 4
hidden = [8, 8]

[model.train]
epochs = 2

[control]
steps = 40
"#;

struct Session {
    _dir: tempfile::TempDir,
    config: PathBuf,
    out: PathBuf,
}

impl Session {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("exp.toml");
        std::fs::write(&config, CONFIG).unwrap();
        let out = dir.path().join("runs");
        Self { _dir: dir, config, out }
    }

    fn koopman(&self, args: &[&str]) -> i32 {
        let mut argv = vec!["koopman", "--config", self.config.to_str().unwrap(), "--out", self.out.to_str().unwrap()];
        argv.extend_from_slice(args);
        run(argv)
    }

    fn run_dir(&self, prefix: &str) -> PathBuf {
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(&self.out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with(&format!("{prefix}-")))
            .collect();
        dirs.sort();
        dirs.pop().unwrap_or_else(|| panic!("no {prefix} run"))
    }
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pipeline_writes_artifacts_and_manifests() {
    let sx = Session::new();
    assert_eq!(sx.koopman(&["collect"]), 0);
    let collect = sx.run_dir("collect");
    let train_data = Dataset::load(&collect.join("train.kpds")).unwrap();
    assert_eq!((train_data.env.as_str(), train_data.len()), ("cartpole", 60));

    assert_eq!(sx.koopman(&["train", "--data", s(&collect.join("train.kpds"))]), 0);
    let train = sx.run_dir("train");
    let model = train.join("model.kpmd");
    assert_eq!(SavedModel::load(&model).unwrap().method_name(), "dkac");
    let losses = std::fs::read_to_string(train.join("loss.csv")).unwrap();
    assert_eq!(losses.lines().next(), Some("epoch,train_loss,validation_loss"));
    assert_eq!(losses.lines().count(), 3);

    let m = manifest(&train);
    let input = &m["inputs"][0];
    assert_eq!(input["role"], "train_data");
    assert_eq!(input["hash"], content_hash(&std::fs::read(collect.join("train.kpds")).unwrap()));
    assert_eq!(m["config"]["env"], "cartpole");
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for name in &outputs {
        assert!(train.join(name).exists(), "{name} listed but missing");
    }

    assert_eq!(sx.koopman(&["predict", "--model", s(&model), "--test", s(&collect.join("test.kpds"))]), 0);
    let predict = sx.run_dir("predict");
    let table = std::fs::read_to_string(predict.join("table1.csv")).unwrap();
    assert!(table.lines().nth(1).unwrap().starts_with("dkac,cartpole,"), "{table}");
    let prediction = std::fs::read_to_string(predict.join("prediction.csv")).unwrap();
    assert_eq!(prediction.lines().count(), 1 + 20);

    let code = sx.koopman(&["control", "--model", s(&model)]);
    assert!(code == 0 || code == 6 || code == 7, "control exit {code}");
    let control = sx.run_dir("control");
    assert!(control.join("control.json").exists());
    if code == 0 {
        let trajectory = std::fs::read_to_string(control.join("trajectory.csv")).unwrap();
        assert_eq!(trajectory.lines().count(), 1 + 40);
    }
}

#[test]
fn failures_map_to_exit_codes() {
    let sx = Session::new();
    assert_eq!(sx.koopman(&["train", "--data", "nowhere.kpds"]), EXIT_DATASET_NOT_FOUND);
    assert_eq!(sx.koopman(&["control", "--model", "nowhere.kpmd"]), EXIT_MODEL_NOT_FOUND);
    assert_eq!(sx.koopman(&["--env", "acrobot", "collect"]), EXIT_USAGE);
    assert_eq!(sx.koopman(&["reproduce", "table9"]), EXIT_USAGE);
    assert_eq!(run(["koopman", "--help"]), 0);

    let junk = sx.out.with_file_name("junk.kpmd");
    std::fs::write(&junk, b"not a model").unwrap();
    assert_eq!(sx.koopman(&["control", "--model", s(&junk)]), EXIT_FORMAT);
}

#[test]
fn dataset_env_must_match_config() {
    let sx = Session::new();
    assert_eq!(sx.koopman(&["--env", "pendulum", "collect"]), 0);
    let data = sx.run_dir("collect").join("train.kpds");
    assert_eq!(sx.koopman(&["train", "--data", s(&data)]), EXIT_USAGE);
}

#[test]
fn runs_never_overwrite_each_other() {
    let sx = Session::new();
    assert_eq!(sx.koopman(&["collect"]), 0);
    let first = sx.run_dir("collect");
    assert_eq!(sx.koopman(&["collect"]), 0);
    let second = sx.run_dir("collect");
    assert_ne!(first, second);
    assert_eq!(std::fs::read(first.join("train.kpds")).unwrap(), std::fs::read(second.join("train.kpds")).unwrap());
}
