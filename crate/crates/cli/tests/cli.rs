use std::path::Path;
use std::process::{Command, Output};

fn vsi(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vsi")).current_dir(dir).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

const SMALL: &str = "seed = 3\n[data]\nsource = \"synthetic\"\nn = 800\n[train]\nmax_epochs = 2\nbins = 10\n[eval]\niw_samples = 10\npredictive_samples = 10\npoint_samples = 10\nnoq_eval_samples = 10\n[metrics]\nbootstrap_resamples = 20\n";

#[test]
fn simulate_train_evaluate_succeed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    let out = vsi(dir.path(), &["simulate", "--config", "c.toml", "--out", "o", "--event-rate", "50"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let data = std::fs::read_to_string(dir.path().join("o/data.csv")).unwrap();
    assert!(data.lines().nth(1).unwrap() == "age,radon,time,event");
    for model in ["vsi", "aft_weibull"] {
        let args = ["--config", "c.toml", "--out", "o", "--event-rate", "50", "--model", model];
        assert_eq!(code(&vsi(dir.path(), &[&["train"], &args[..]].concat())), 0);
        let out = vsi(dir.path(), &[&["evaluate"], &args[..]].concat());
        assert_eq!(code(&out), 0);
        assert!(String::from_utf8_lossy(&out.stdout).starts_with("model,dataset,seed,config_hash"));
    }
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "seed = 1\nlearning_rate = 0.1\n").unwrap();
    assert_eq!(code(&vsi(dir.path(), &["simulate", "--config", "bad.toml"])), 1);
    assert_eq!(code(&vsi(dir.path(), &["simulate", "--event-rate", "40"])), 1);
    assert_eq!(code(&vsi(dir.path(), &["train", "--model", "cox"])), 1);
    std::fs::write(dir.path().join("c.toml"), "[data]\nsource = \"synthetic\"\ncensor_horizon = -5.0\n").unwrap();
    assert_eq!(code(&vsi(dir.path(), &["simulate", "--config", "c.toml"])), 1);
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let csv = "[data]\nsource = \"csv\"\npath = \"missing.csv\"\ntime_column = \"t\"\nevent_column = \"e\"\n";
    std::fs::write(dir.path().join("c.toml"), csv).unwrap();
    assert_eq!(code(&vsi(dir.path(), &["train", "--config", "c.toml"])), 2);
    std::fs::write(dir.path().join("missing.csv"), "t,e,x\n1.0,yes,2\n").unwrap();
    assert_eq!(code(&vsi(dir.path(), &["train", "--config", "c.toml"])), 2);
    // No trained artifact to evaluate.
    std::fs::write(dir.path().join("s.toml"), SMALL).unwrap();
    assert_eq!(code(&vsi(dir.path(), &["evaluate", "--config", "s.toml", "--out", "empty"])), 2);
}
