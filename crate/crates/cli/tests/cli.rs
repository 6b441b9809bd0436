use std::path::Path;
use std::process::{Command, Output};

use bellfilter::io::{read_counts, read_json};
use bellfilter::pipeline::diagnose_and_repair;
use bellfilter::superop::Superoperator;
use bellfilter::FilterModel;
use bellfilter_cli::{ProcessOutput, RepairFile};

fn bellfilter(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bellfilter")).args(args).current_dir(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = bellfilter(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn ideal_preset_blocks_hh() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--preset", "ideal", "--rate-scale", "1e5", "--out", "sim"]);
    let record = read_counts(&dir.path().join("sim/counts.csv"), None).unwrap();
    assert_eq!(record.rate_scale, 1e5);
    assert_eq!(record.row("HH".parse().unwrap()).unwrap(), &[0; 16]);
    assert!(record.row("HV".parse().unwrap()).unwrap().iter().sum::<u64>() > 0);
}

#[test]
fn zero_count_row_warns() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--preset", "ideal", "--out", "sim"]);
    let stdout = ok(dir.path(), &["tomo-state", "--input", "sim/counts.csv", "--row", "HH", "--replicas", "0", "--out", "st"]);
    assert!(stdout.contains("warning: every count is zero"), "{stdout}");
    assert!(dir.path().join("st/state.json").exists());
}

#[test]
fn bad_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = bellfilter(dir.path(), &["tomo-process", "--input", "missing.csv", "--out", "p"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = bellfilter(dir.path(), &["simulate", "--preset", "nonsense", "--out", "s"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn iteration_cap_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--out", "sim"]);
    let out = bellfilter(dir.path(), &["tomo-process", "--input", "sim/counts.csv", "--replicas", "0", "--max-iterations", "1", "--out", "p"]);
    assert_eq!(out.status.code(), Some(3));
    // The estimate is still written.
    assert!(dir.path().join("p/process.json").exists());
}

#[test]
fn fully_distinguishable_photons_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let e = FilterModel::ideal().with_visibility(0.0).superoperator().unwrap();
    std::fs::write(dir.path().join("e.json"), serde_json::to_string(&Superoperator::Matrix(e)).unwrap()).unwrap();
    let out = bellfilter(dir.path(), &["diagnose-repair", "--input", "e.json", "--out", "r"]);
    assert_eq!(out.status.code(), Some(4));
    let repair: RepairFile = read_json(&dir.path().join("r/repair.json")).unwrap();
    assert!(repair.refused);
}

#[test]
fn command_chain_matches_in_process_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--seed", "5", "--out", "sim"]);
    ok(dir.path(), &["tomo-process", "--input", "sim/counts.csv", "--replicas", "0", "--out", "p"]);
    ok(dir.path(), &["diagnose-repair", "--input", "p/process.json", "--out", "r"]);
    let fit: ProcessOutput = read_json(&dir.path().join("p/process.json")).unwrap();
    let expected = diagnose_and_repair(&fit.process.to_matrix()).unwrap();
    let repair: RepairFile = read_json(&dir.path().join("r/repair.json")).unwrap();
    assert!(!repair.refused);
    assert_eq!(repair.report.as_ref(), Some(&expected.report));
    assert_eq!(repair.shifter_phase, Some(expected.shifter_phase));
}
