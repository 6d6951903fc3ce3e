use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lambertpo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lambertpo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

const SHORT_RUN: &str = "objective = regression\nadvantage = shifted_mean\nbeta = 0.01\nsteps = 12\nlag = 4\n";

#[test]
fn verify_suite_passes() {
    let o = lambertpo(&["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    assert!(!out.contains("FAIL"));
    assert!(out.contains("prop2_group"));
}

#[test]
fn verify_single_check_and_unknown_check() {
    let o = lambertpo(&["verify", "--check", "lambert_identity"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 2);

    let o = lambertpo(&["verify", "--check", "no_such_check"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no_such_check"));
}

#[test]
fn impossible_tolerance_exits_three() {
    let o = lambertpo(&["verify", "--check", "gradient_fd", "--tolerance", "1e-30"]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn lambert_w_values() {
    let o = lambertpo(&["w", "--z", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let v: f64 = stdout(&o).lines().next().unwrap().strip_prefix("value ").unwrap().parse().unwrap();
    assert!((v - 0.567_143_290_409_783_8).abs() < 1e-15);

    let o = lambertpo(&["w", "--z", "-0.5"]);
    assert_eq!(o.status.code(), Some(1), "below the branch point");

    let o = lambertpo(&["w", "--exp-arg", "1"]);
    let v: f64 = stdout(&o).lines().next().unwrap().strip_prefix("value ").unwrap().parse().unwrap();
    assert!((v - 1.0).abs() < 1e-15);
    assert!(stdout(&o).contains("residual"));

    assert_eq!(lambertpo(&["w"]).status.code(), Some(1));
}

#[test]
fn advantage_and_target_print_tables() {
    let o = lambertpo(&["advantage", "--method", "shifted_mean", "--rewards", "1,0,0.5", "--beta", "0.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().next(), Some("index,reward,advantage"));
    assert_eq!(out.lines().count(), 6);
    let mean: f64 = out.lines().find_map(|l| l.strip_prefix("mean ")).unwrap().parse().unwrap();
    assert!((mean - 0.5).abs() < 1e-12, "shifted-mean advantages average to beta");

    let o = lambertpo(&["advantage", "--method", "oapl", "--rewards", "1,0,0.25", "--beta", "0.1"]);
    let m: f64 = stdout(&o).lines().find_map(|l| l.strip_prefix("mean_exp ")).unwrap().parse().unwrap();
    assert!((m - 1.0).abs() < 1e-12);

    let o = lambertpo(&["advantage", "--method", "oapl", "--rewards", "1,0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--beta"));

    let o = lambertpo(&["target", "--advantages", "0.5,-0.2,0.1", "--beta", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("regime pessimistic\n"));
    let mass: f64 = out
        .lines()
        .skip(4)
        .map(|l| l.split(',').nth(3).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((mass - 1.0).abs() < 1e-12);
}

#[test]
fn target_file_matches_inline_advantages() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("problem.txt");
    fs::write(&file, "behavior 0.5 0.5\nadvantages 1.5 0.5\nbeta 1\n").unwrap();
    let from_file = lambertpo(&["target", "--instance", file.to_str().unwrap()]);
    assert_eq!(from_file.status.code(), Some(0), "{}", stderr(&from_file));
    let inline = lambertpo(&["target", "--advantages", "1.5,0.5", "--behavior", "0.5,0.5", "--beta", "1"]);
    assert_eq!(stdout(&from_file), stdout(&inline));
    let tau: f64 = stdout(&inline).lines().find_map(|l| l.strip_prefix("tau ")).unwrap().parse().unwrap();
    assert!(tau > 1.0 && tau < 1.1);

    let inst = dir.path().join("bandit.txt");
    lambertpo(&["instance", "gen", "--contexts", "2", "--outcomes", "6", "--out", inst.to_str().unwrap()]);
    assert!(dir.path().join("bandit.manifest.json").exists());
    let o = lambertpo(&["target", "--instance", inst.to_str().unwrap(), "--context", "1", "--beta", "0.1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("regime pessimistic\n"), "shifted-mean targets are pessimistic");
    let o = lambertpo(&["target", "--instance", inst.to_str().unwrap(), "--context", "5", "--beta", "0.1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_target_file_is_reported_by_path() {
    let o = lambertpo(&["target", "--instance", "missing.txt", "--beta", "1"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("missing.txt"), "{}", stderr(&o));
}

#[test]
fn missing_instance_is_reported_by_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT_RUN);
    let missing = dir.path().join("absent-instance.txt");
    let o = lambertpo(&[
        "train",
        "--config",
        &cfg,
        "--instance",
        missing.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("absent-instance.txt"), "{}", stderr(&o));
}

#[test]
fn unknown_subcommand_fails() {
    let o = lambertpo(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    let o = lambertpo(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn invalid_configs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for (body, needle) in [
        ("objective = regression\nadvantage = oapl\nbeta = -1\n", "beta"),
        ("objective = regression\nadvantage = oapl\n", "beta"),
        ("objective = regression\nadvantage = oapl\nbeta = 0.1\ncolour = red\n", "colour"),
        ("objective = regression\nadvantage = oapl\nbeta = 0.1\nlag = 0\n", "lag"),
        ("objective = regression\nadvantage = oapl\nbeta = 0.1\nbeta2 = 0.2\n", "beta2"),
    ] {
        let cfg = write_config(dir.path(), body);
        let o = lambertpo(&["train", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1), "{body}");
        assert!(stderr(&o).contains(needle), "{body}: {}", stderr(&o));
    }
}

#[test]
fn training_is_bitwise_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT_RUN);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = lambertpo(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read(out.join("metrics.csv")).unwrap()
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next(), Some("step,expected_reward,entropy,kl,max_ratio,regime"));
    assert_eq!(text.lines().count(), 13);
}

#[test]
fn saved_instance_reproduces_the_default_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT_RUN);
    let inst = dir.path().join("inst.txt");
    let o = lambertpo(&["instance", "gen", "--out", inst.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));

    let d = dir.path().join("default");
    let f = dir.path().join("from-file");
    lambertpo(&["train", "--config", &cfg, "--out", d.to_str().unwrap()]);
    lambertpo(&["train", "--config", &cfg, "--instance", inst.to_str().unwrap(), "--out", f.to_str().unwrap()]);
    assert_eq!(fs::read(d.join("metrics.csv")).unwrap(), fs::read(f.join("metrics.csv")).unwrap());

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(f.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["config_echo"]["lag"], "4");
    assert_eq!(manifest["config_echo"]["optimizer"], "adam");
    assert_eq!(manifest["output_paths"].as_array().unwrap().len(), 3);
}

#[test]
fn sweep_writes_one_summary_line_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT_RUN);
    let out = dir.path().join("sweep");
    let o = lambertpo(&[
        "sweep", "--config", &cfg, "--axis", "beta", "--values", "0.01,0.1", "--seeds", "2", "--jobs", "2", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.jsonl")).unwrap();
    let rows: Vec<serde_json::Value> = summary.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 8);
    for r in &rows {
        assert!(Path::new(r["metrics"].as_str().unwrap()).exists());
        assert!(r["terminal_entropy"].as_f64().unwrap() > 0.0);
    }

    // Parallel scheduling does not change per-run output.
    let serial = dir.path().join("serial");
    lambertpo(&[
        "sweep", "--config", &cfg, "--axis", "beta", "--values", "0.01,0.1", "--seeds", "2", "--jobs", "1", "--out",
        serial.to_str().unwrap(),
    ]);
    let name = "shifted_mean_beta-0.1_seed-1.csv";
    assert_eq!(fs::read(out.join("runs").join(name)).unwrap(), fs::read(serial.join("runs").join(name)).unwrap());
}
