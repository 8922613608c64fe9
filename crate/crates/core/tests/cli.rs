use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chiller-dpc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn out_dir(dir: &Path) -> &str {
    dir.to_str().unwrap()
}

#[test]
fn unknown_flag_exits_with_usage() {
    let o = cli(&["simulate", "--controller", "rbc", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(cli(&["--help"]).status.code(), Some(0));
}

#[test]
fn rbc_reruns_write_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = cli(&[
            "simulate",
            "--controller",
            "rbc",
            "--days",
            "7",
            "--seed",
            "7",
            "--out-dir",
            out_dir(d.path()),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["trace.csv", "metrics.json", "config.json"] {
        let x = std::fs::read(a.path().join("run_rbc").join(f)).unwrap();
        let y = std::fs::read(b.path().join("run_rbc").join(f)).unwrap();
        assert!(x == y, "{f} differs between reruns");
    }
}

#[test]
fn compare_writes_a_report() {
    let d = tempfile::tempdir().unwrap();
    let run = d.path().join("run_rbc");
    cli(&[
        "simulate",
        "--controller",
        "rbc",
        "--days",
        "1",
        "--seed",
        "2",
        "--out-dir",
        out_dir(d.path()),
    ]);
    let o = cli(&[
        "compare",
        run.to_str().unwrap(),
        run.to_str().unwrap(),
        "--out-dir",
        out_dir(d.path()),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("savings 0.00%"));
    let csv = std::fs::read_to_string(d.path().join("comparison.csv")).unwrap();
    assert!(csv.starts_with("metric,rbc,rbc"));
    assert!(d.path().join("comparison.json").exists());
}

#[test]
fn oracle_solves_a_context_file() {
    let d = tempfile::tempdir().unwrap();
    let ctx = d.path().join("ctx.json");
    std::fs::write(
        &ctx,
        r#"{"t_r0": 20.0, "t_s0": [10.0, 10.0], "load_history0": [300, 300, 300, 300, 300, 300],
            "preview": [300, 300, 300, 300, 300, 300]}"#,
    )
    .unwrap();
    let o = cli(&[
        "oracle",
        "--context",
        ctx.to_str().unwrap(),
        "--horizon",
        "2",
        "--out-dir",
        out_dir(d.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let sol: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("oracle.json")).unwrap()).unwrap();
    assert_eq!(sol["sequences_evaluated"], 4);
    assert_eq!(sol["sequence"].as_array().unwrap().len(), 2);
}

#[test]
fn numeric_fault_exits_with_2() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("plant.toml");
    std::fs::write(&cfg, "[plant]\nC_r = 1e-300\n").unwrap();
    let o = cli(&[
        "simulate",
        "--controller",
        "rbc",
        "--days",
        "1",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out_dir(d.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_config_exits_with_1() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.toml");
    std::fs::write(&cfg, "[plant]\nbogus = 1\n").unwrap();
    let o = cli(&[
        "simulate",
        "--controller",
        "rbc",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out_dir(d.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = cli(&[
        "simulate",
        "--controller",
        "/no/such.ckpt",
        "--out-dir",
        out_dir(d.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn tiny_training_run_writes_checkpoint_and_log() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("train.toml");
    std::fs::write(
        &cfg,
        "[train]\nn_train = 8\nn_dev = 4\nbatch_size = 4\nmax_epochs = 2\nmicro_batch = 4\n",
    )
    .unwrap();
    let o = cli(&[
        "train",
        "--horizon",
        "2",
        "--seed",
        "1",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out_dir(d.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt = d.path().join("policy_m2_n2.ckpt");
    assert!(ckpt.exists());
    let log = std::fs::read_to_string(d.path().join("train_log_m2_n2.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    let o = cli(&[
        "simulate",
        "--controller",
        ckpt.to_str().unwrap(),
        "--days",
        "1",
        "--out-dir",
        out_dir(d.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn benchmark_writes_table_columns() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("train.toml");
    std::fs::write(
        &cfg,
        "[train]\nn_train = 4\nn_dev = 2\nbatch_size = 4\nmax_epochs = 1\nmicro_batch = 4\n",
    )
    .unwrap();
    let o = cli(&[
        "benchmark",
        "--chillers",
        "2",
        "--horizons",
        "2",
        "--days",
        "1",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out_dir(d.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(d.path().join("benchmark.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "Controller,M,N,EC,Savings,COP,switches,RCE,MIT,TT,NTP"
    );
    assert_eq!(lines.count(), 2);
}
