use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robust-intent"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .unwrap()
}

fn stderr_lines(o: &Output) -> Vec<String> {
    String::from_utf8_lossy(&o.stderr).lines().map(String::from).collect()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("c.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const TINY: &str = r#"
seeds = [1]
[corpus]
train_size = 24
dev_size = 8
test_size = 8
[lm]
d_e = 6
d_h = 6
[lm.pretrain]
epochs = 1
[calibration]
epochs = 1
[classifier]
hidden = 6
heads = 2
[classifier.prm]
embed_dim = 3
hidden = 3
[train]
epochs = 1
"#;

#[test]
fn config_errors_exit_nonzero_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        "[lm]\nwidth = 3\n",
        "[confusion]\nmethod = \"wcn\"\n",
        "seeds = []\n",
        "[confusion]\nmethod = \"nbest\"\n",
        "[calibration]\nlambda = -1.0\n",
    ];
    for body in cases {
        let cfg = write_config(dir.path(), body);
        let o = run(&["--config", &cfg, "prepare"]);
        assert!(!o.status.success(), "{body}");
        let lines = stderr_lines(&o);
        assert_eq!(lines.len(), 1, "{body}: {lines:?}");
        assert!(lines[0].starts_with("error:"), "{lines:?}");
    }
    let o = run(&["--config", "/nonexistent/c.toml", "prepare"]);
    assert!(!o.status.success());
    assert_eq!(stderr_lines(&o).len(), 1);
}

#[test]
fn negative_sweep_weight_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    assert!(run(&["--config", &cfg, "--out", out, "prepare"]).status.success());
    let o = run(&["--config", &cfg, "--out", out, "sweep-lambda", "--lambdas=1,-2"]);
    assert!(!o.status.success());
    assert!(stderr_lines(&o)[0].contains("lambda"));
}

#[test]
fn staged_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let o = run(&["--config", &cfg, "--out", out, "train"]);
    assert!(!o.status.success());
    assert!(stderr_lines(&o)[0].contains("prepare"));
    for cmd in ["prepare", "pretrain-lm", "finetune-lm", "train", "eval"] {
        let o = run(&["--config", &cfg, "--out", out, "--seed", "2", cmd]);
        assert!(o.status.success(), "{cmd}: {:?}", stderr_lines(&o));
    }
    let stdout = String::from_utf8(run(&["--config", &cfg, "--out", out, "--seed", "2", "eval"]).stdout).unwrap();
    assert!(stdout.contains("test/asr") && stdout.contains("test/manual"));
    assert!(Path::new(out).join("models/classifier-seed2.json").exists());
}

#[test]
fn help_lists_every_subcommand() {
    let o = run(&["--help"]);
    let text = String::from_utf8(o.stdout).unwrap();
    for cmd in [
        "prepare",
        "pretrain-lm",
        "finetune-lm",
        "train",
        "eval",
        "run-full",
        "ablate",
        "compare-losses",
        "sweep-lambda",
        "plot",
    ] {
        assert!(text.contains(cmd), "{cmd}");
    }
    for flag in ["--config", "--seed", "--out"] {
        assert!(text.contains(flag), "{flag}");
    }
}
