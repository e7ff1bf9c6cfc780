use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use patron::dataset::read_selection;
use patron::synth::{write_synthetic, SynthSpec};

fn patron(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patron")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = patron(args);
    assert!(
        out.status.success(),
        "patron {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn dataset(dir: &Path, separation: f64) -> PathBuf {
    let mut spec = SynthSpec::new(300, 6, 3, 11);
    spec.cluster_separation = separation;
    write_synthetic(&spec, dir, "toy").unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SELECT: [&str; 10] = ["--budget", "6", "--k-support", "20", "--rho", "0.1", "--beta", "0.5", "--gamma", "0.3"];

#[test]
fn select_output_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 4.0);
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "2", "1"].iter().enumerate() {
        let out = dir.path().join(format!("sel{i}.toml"));
        let mut args = vec!["select", "--manifest", s(&m), "--out", s(&out), "--threads", threads, "--normalize"];
        args.extend(SELECT);
        ok(&args);
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let sel = read_selection(&dir.path().join("sel0.toml")).unwrap();
    assert_eq!(sel.selected.len(), 6);
    assert!(sel.metrics.is_some());
}

#[test]
fn budget_above_pool_fails_validation_at_partition() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 4.0);
    let out = patron(&[
        "select", "--manifest", s(&m), "--budget", "301", "--k-support", "5", "--rho", "0.1", "--beta", "0.5",
        "--gamma", "0.3",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage partition"));
}

#[test]
fn missing_required_flags_exit_two() {
    let out = patron(&["select"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 4.0);
    // no budget and no preset
    let out = patron(&["select", "--manifest", s(&m), "--rho", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage config"));
}

#[test]
fn missing_manifest_reports_load_stage() {
    let mut args = vec!["select", "--manifest", "/nonexistent/m.toml"];
    args.extend(SELECT);
    let out = patron(&args);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage load"));
}

#[test]
fn round_with_empty_pool_equals_select_and_rejects_bad_indices() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 4.0);
    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "# nothing labeled yet\n").unwrap();
    let a = dir.path().join("a.toml");
    let b = dir.path().join("b.toml");
    let mut args = vec!["select", "--manifest", s(&m), "--out", s(&a)];
    args.extend(SELECT);
    ok(&args);
    let mut args = vec!["round", "--manifest", s(&m), "--out", s(&b), "--labeled-pool", s(&empty)];
    args.extend(SELECT);
    ok(&args);
    assert_eq!(read_selection(&a).unwrap().selected, read_selection(&b).unwrap().selected);

    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "3 17 300\n").unwrap();
    let mut args = vec!["round", "--manifest", s(&m), "--labeled-pool", s(&bad)];
    args.extend(SELECT);
    let out = patron(&args);
    assert_eq!(out.status.code(), Some(2));

    let labeled = dir.path().join("labeled.txt");
    let first = read_selection(&a).unwrap().selected;
    fs::write(&labeled, format!("{} {}\n", first[0], first[1])).unwrap();
    let mut args = vec!["round", "--manifest", s(&m), "--out", s(&b), "--labeled-pool", s(&labeled)];
    args.extend(SELECT);
    ok(&args);
    let second = read_selection(&b).unwrap().selected;
    assert!(!second.contains(&first[0]) && !second.contains(&first[1]));
}

#[test]
fn stage_chaining_matches_single_select() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 4.0);
    let raw = dir.path().join("raw.toml");
    let prop = dir.path().join("prop.toml");
    let direct = dir.path().join("direct.toml");
    let chained = dir.path().join("chained.toml");
    ok(&["calibrate", "--manifest", s(&m), "--k-support", "20", "--out", s(&raw)]);
    ok(&[
        "propagate", "--manifest", s(&m), "--k-support", "20", "--rho", "0.1", "--uncertainty", s(&raw), "--out",
        s(&prop),
    ]);
    let mut args = vec!["select", "--manifest", s(&m), "--out", s(&direct)];
    args.extend(SELECT);
    ok(&args);
    let mut args = vec!["select", "--manifest", s(&m), "--out", s(&chained), "--uncertainty", s(&prop)];
    args.extend(SELECT);
    ok(&args);
    let (d, c) = (read_selection(&direct).unwrap(), read_selection(&chained).unwrap());
    assert_eq!(d.selected, c.selected);
    assert_eq!(d.objective_trace, c.objective_trace);

    // a stage file built with different settings is refused
    let mut args = vec!["select", "--manifest", s(&m), "--uncertainty", s(&prop), "--normalize"];
    args.extend(SELECT);
    assert_eq!(patron(&args).status.code(), Some(2));
}

#[test]
fn metrics_subcommand_recomputes_report() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 4.0);
    let sel = dir.path().join("sel.toml");
    let report = dir.path().join("report.toml");
    let mut args = vec!["select", "--manifest", s(&m), "--out", s(&sel)];
    args.extend(SELECT);
    ok(&args);
    let out = ok(&["metrics", "--manifest", s(&m), "--selection", s(&sel), "--out", s(&report)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("imb"));
    let text = fs::read_to_string(&report).unwrap();
    let embedded = read_selection(&sel).unwrap().metrics.unwrap();
    assert!(text.contains(&format!("imb = {}", embedded.imb)));
}

#[test]
fn far_apart_selections_ignore_the_penalty() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 60.0);
    let mut selections = Vec::new();
    for gamma in ["0", "2.0"] {
        let out = dir.path().join(format!("g{gamma}.toml"));
        ok(&[
            "select", "--manifest", s(&m), "--out", s(&out), "--budget", "3", "--k-support", "20", "--rho", "0.1",
            "--beta", "0.5", "--gamma", gamma, "--iterations", "5",
        ]);
        selections.push(read_selection(&out).unwrap().selected);
    }
    assert_eq!(selections[0], selections[1]);
}

#[test]
fn preset_supplies_hyperparameters() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 4.0);
    let out = dir.path().join("p.toml");
    ok(&["select", "--manifest", s(&m), "--preset", "trec", "--budget", "5", "--out", s(&out)]);
    let sel = read_selection(&out).unwrap();
    assert_eq!(sel.config_echo.params.k_support, 50);
    assert_eq!(sel.config_echo.preset.as_deref(), Some("trec"));
    let bad = patron(&["select", "--manifest", s(&m), "--preset", "unknown", "--budget", "5"]);
    assert_eq!(bad.status.code(), Some(2));
}
