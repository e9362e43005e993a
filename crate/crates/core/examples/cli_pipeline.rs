//! Drive the `koopman` command line in-process: collect, train, predict, control.

use std::path::{Path, PathBuf};

use deep_koopman::cli::run;

fn newest(dir: &Path, prefix: &str) -> PathBuf {
    let mut runs: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with(prefix))
        .collect();
    runs.sort();
    runs.pop().unwrap()
}

fn main() {
    let work = tempfile::tempdir().unwrap();
    let config = work.path().join("experiment.toml");
    std::fs::write(
        &config,
        "env = \"damping_pendulum\"\nmethod = \"dkuc\"\n\n[data]\nn_traj = 300\ntest_traj = 50\n\n\
         [model]\nembed_dim = 8\na_init = 0.0\nhidden = [32, 32]\n\n[model.train]\nepochs = 5\n",
    )
    .unwrap();
    let out = work.path().join("runs");
    let base = |cmd: &[&str]| {
        let mut args = vec!["koopman", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(cmd);
        let code = run(args);
        println!("koopman {} -> exit {code}", cmd.join(" "));
        code
    };

    base(&["collect"]);
    let data = newest(&out, "collect-");
    base(&["train", "--data", data.join("train.kpds").to_str().unwrap()]);
    let model = newest(&out, "train-").join("model.kpmd");
    base(&["predict", "--model", model.to_str().unwrap(), "--test", data.join("test.kpds").to_str().unwrap()]);
    print!("{}", std::fs::read_to_string(newest(&out, "predict-").join("table1.csv")).unwrap());
    base(&["control", "--model", model.to_str().unwrap()]);
    base(&["train", "--data", "missing.kpds"]);

    let manifest = std::fs::read_to_string(newest(&out, "predict-").join("manifest.json")).unwrap();
    println!("{}", manifest.lines().filter(|l| l.contains("\"hash\"")).collect::<Vec<_>>().join("\n"));
}
