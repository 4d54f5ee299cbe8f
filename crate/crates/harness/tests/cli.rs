use std::path::Path;
use std::process::Command;

fn egno(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_egno")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "egno {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        r#"
model = "egno"
batch_size = 10
max_epochs = 2
patience = 5

[egno]
layers = 1
hidden = 8
time_emb = 4

[optimizer]
lr = 1e-3

[dataset]
train = 20
valid = 10
test = 10
"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn gen_train_eval_super_res() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let (data_s, run_s) = (data.to_str().unwrap(), run.to_str().unwrap());

    let listed = egno(&["gen", "--config", &cfg, "--out", data_s, "--seed", "3"]);
    assert_eq!(listed.lines().count(), 3);
    for f in ["train.egnods", "valid.egnods", "test.egnods"] {
        assert!(data.join(f).exists());
    }

    let printed = egno(&["train", "--config", &cfg, "--data", data_s, "--out", run_s, "--seed", "1"]);
    assert!(printed.starts_with("metric,value\n"));
    let history = std::fs::read_to_string(run.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,valid_loss\n"));
    assert_eq!(history.lines().count(), 4);
    let metrics = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("metric,value\nf_mse,"));

    let ck = run.join("best.egnockpt");
    let ck_s = ck.to_str().unwrap();
    let eval = egno(&["eval", "--checkpoint", ck_s, "--data", data_s]);
    let f_line = |s: &str| s.lines().find(|l| l.starts_with("f_mse,")).unwrap().to_string();
    assert_eq!(f_line(&eval), f_line(&metrics));

    let sr_dir = dir.path().join("sr");
    egno(&["super-res", "--checkpoint", ck_s, "--data", data_s, "--out", sr_dir.to_str().unwrap()]);
    let sr = std::fs::read_to_string(sr_dir.join("superres.csv")).unwrap();
    assert!(sr.contains("fine_mse@1,") && sr.contains("fine_mse@10,"));
}

#[test]
fn flags_override_the_config_and_bad_input_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let data = dir.path().join("data");
    let data_s = data.to_str().unwrap();
    egno(&["gen", "--config", &cfg, "--out", data_s]);

    let run = dir.path().join("egnn");
    egno(&[
        "train", "--config", &cfg, "--data", data_s, "--out", run.to_str().unwrap(), "--model", "egnn",
        "--train-size", "7",
    ]);
    let metrics = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert!(metrics.contains("train_samples,7\n"));
    assert!(metrics.contains("mse@10,") && !metrics.contains("mse@2,"));
    let echoed = std::fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(echoed.contains("model = \"egnn\""));

    let fail = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_egno")).args(args).output().unwrap();
        assert!(!out.status.success(), "{args:?} should fail");
        String::from_utf8_lossy(&out.stderr).to_string()
    };
    let err = fail(&["train", "--config", &cfg, "--data", data_s, "--p-steps", "4"]);
    assert!(err.contains("p_steps"), "{err}");
    fail(&["train", "--config", &cfg, "--data", data_s, "--model", "lstm"]);
    fail(&["train", "--config", &cfg, "--data", data_s, "--discretization", "middle"]);
    fail(&["eval", "--data", data_s]);

    let names = egno(&["variants"]);
    assert_eq!(names.lines().count(), 7);
}
