use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use drillmae::ingest::write_well;
use drillmae::synthetic::{two_well_dataset, SyntheticTarget};

fn dataset(dir: &Path, grid: &str) -> PathBuf {
    let mut manifest = String::new();
    for well in two_well_dataset(12_000, SyntheticTarget::CopyOf("Total Pump Output".into()), 7) {
        let file = format!("{}.csv", well.well_id);
        write_well(&well, &dir.join(&file)).unwrap();
        manifest.push_str(&format!("well.{} = {file}\n", well.well_id));
    }
    manifest.push_str(&format!(
        "window.len = 20\nwindow.stride = 10\n\
         train.pretrain_epochs = 1\ntrain.finetune_epochs = 1\ntrain.baseline_epochs = 1\n\
         grid = {grid}\nseed = 3\nworkers = 2\nout = runs\n"
    ));
    let path = dir.join("manifest.txt");
    std::fs::write(&path, manifest).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drillmae")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn ledger_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().skip(1).filter(|l| !l.is_empty()).count()
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn search_then_report_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let m = dataset(tmp.path(), "ae1-lat80-hd1-GRU-m20, ae1-lat50-hd2-LSTM-m50, ae2-lat20-hd1-GRU-m80, ae2-lat80-hd2-LSTM-m20");
    let m = m.to_str().unwrap();
    let runs = tmp.path().join("runs");

    let seg = ok(&["-m", m, "segment"]);
    assert!(seg.contains("wrote"), "{seg}");
    assert!(ok(&["-m", m, "segment"]).contains("cached"));

    let stdout = ok(&["-m", m, "dse", "--no-snapshots"]);
    assert!(stdout.contains("ledger:"), "{stdout}");
    assert_eq!(ledger_rows(&runs.join("ledger.csv")), 6);

    let reports = runs.join("reports");
    let first = snapshot(&reports);
    assert!(!first.is_empty());
    let again = tmp.path().join("again");
    ok(&["report", "--ledger", runs.join("ledger.csv").to_str().unwrap(), "--to", again.to_str().unwrap()]);
    assert_eq!(first, snapshot(&again));
    ok(&["report", "--ledger", runs.join("ledger.csv").to_str().unwrap(), "--to", again.to_str().unwrap()]);
    assert_eq!(first, snapshot(&again));
}

#[test]
fn grid_override_controls_ledger_size() {
    let tmp = tempfile::tempdir().unwrap();
    let m = dataset(tmp.path(), "ae1-lat80-hd1-GRU-m20");
    let m = m.to_str().unwrap();
    ok(&["-m", m, "--set", "grid=ae1-lat50-hd1-GRU-m20,ae1-lat80-hd1-LSTM-m50", "dse", "--no-snapshots"]);
    assert_eq!(ledger_rows(&tmp.path().join("runs/ledger.csv")), 4);
}

#[test]
fn finetune_requires_pretrain() {
    let tmp = tempfile::tempdir().unwrap();
    let m = dataset(tmp.path(), "ae1-lat80-hd1-GRU-m20");
    let m = m.to_str().unwrap();
    let out = run(&["-m", m, "finetune", "--config", "ae1-lat80-hd1-GRU-m20"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("pretrain --config"));

    ok(&["-m", m, "pretrain", "--config", "ae1-lat80-hd1-GRU-m20"]);
    let tuned = ok(&["-m", m, "finetune", "--config", "ae1-lat80-hd1-GRU-m20"]);
    assert!(tuned.contains("test MAE"), "{tuned}");
}

#[test]
fn missing_inputs_are_named() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["-m", tmp.path().join("nope.txt").to_str().unwrap(), "segment"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.txt"));

    let m = tmp.path().join("manifest.txt");
    std::fs::write(&m, "well.X = absent.csv\n").unwrap();
    let out = run(&["-m", m.to_str().unwrap(), "segment"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("well.X") && err.contains("absent.csv"), "{err}");
}
