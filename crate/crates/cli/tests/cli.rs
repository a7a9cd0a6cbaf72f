//! End-to-end exercise of the binary: gen -> run -> report -> dump-check,
//! plus exit-code behavior for bad inputs.

use std::path::Path;
use std::process::{Command, Output};

fn smite(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smite"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

#[test]
fn full_offline_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let gen = smite(
        &["gen", "--out", "work", "--rows", "280", "--seed", "9"],
        root,
    );
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    assert!(root.join("work/synthetic.csv").exists());
    assert!(root.join("work/synthetic.schema.toml").exists());

    let run = smite(
        &[
            "run",
            "--config",
            "work/config.toml",
            "--method",
            "zero_shot,smite",
        ],
        root,
    );
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("zero_shot"), "{stdout}");
    assert!(stdout.contains("smite"), "{stdout}");

    let runs = root.join("work/runs");
    let reports: Vec<_> = std::fs::read_dir(runs.join("reports")).unwrap().collect();
    assert_eq!(reports.len(), 6, "2 methods x 3 seeds x 1 repeat");
    assert!(runs.join("timings.txt").exists());
    let traces: Vec<_> = std::fs::read_dir(runs.join("traces")).unwrap().collect();
    assert!(!traces.is_empty(), "selection traces persisted");

    let report = smite(&["report", "--in", "work/runs"], root);
    assert!(report.status.success());
    assert!(runs.join("summary.json").exists());

    let check = smite(&["dump-check", "--in", "work/runs"], root);
    assert!(check.status.success(), "{}", String::from_utf8_lossy(&check.stderr));
    let check_out = String::from_utf8_lossy(&check.stdout);
    assert!(check_out.contains("all dumps match"), "{check_out}");
}

#[test]
fn missing_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = smite(&["run", "--config", "nope.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.toml"),
        "n_test = 30\nm = 20\n\n[dataset]\npreset = \"adult\"\ndata = \"x.csv\"\n",
    )
    .unwrap();
    let out = smite(&["run", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_test"));
}

#[test]
fn unknown_method_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let gen = smite(&["gen", "--out", "w", "--rows", "140"], dir.path());
    assert!(gen.status.success());
    let out = smite(
        &["run", "--config", "w/config.toml", "--method", "banana"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn tampered_dump_fails_check_with_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let gen = smite(&["gen", "--out", "w", "--rows", "140", "--seed", "3"], root);
    assert!(gen.status.success());
    let run = smite(
        &[
            "run",
            "--config",
            "w/config.toml",
            "--method",
            "zero_shot",
        ],
        root,
    );
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    // flip one prediction in one dump
    let dumps_dir = root.join("w/runs/dumps");
    let dump = std::fs::read_dir(&dumps_dir).unwrap().next().unwrap().unwrap().path();
    let text = std::fs::read_to_string(&dump).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let tampered = lines[1].replacen(",0,", ",1,", 1);
    assert_ne!(tampered, lines[1], "tamper changed a field");
    lines[1] = tampered;
    std::fs::write(&dump, lines.join("\n") + "\n").unwrap();

    let check = smite(&["dump-check", "--in", "w/runs"], root);
    assert_eq!(check.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&check.stderr).contains("mismatch"));
}

#[test]
fn unreachable_http_backend_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let gen = smite(&["gen", "--out", "w", "--rows", "140", "--seed", "5"], root);
    assert!(gen.status.success());
    let mut config = std::fs::read_to_string(root.join("w/config.toml")).unwrap();
    config.push_str(
        "\n[backend]\nkind = \"http\"\nendpoint = \"http://127.0.0.1:9\"\nmodel = \"none\"\n",
    );
    std::fs::write(root.join("w/config.toml"), config).unwrap();
    let out = smite(
        &["run", "--config", "w/config.toml", "--method", "zero_shot"],
        root,
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
