//! Acceptance suite: runs `lipmbrl run-all` twice with the same seed, prints
//! one PASS/FAIL line per criterion and fails if any criterion fails or the
//! two runs' CSVs differ.

use std::fs;
use std::path::Path;
use std::time::Instant;

use lipmbrl::cli::{run, EXIT_FAILURE, EXIT_OK};

fn run_all(out: &Path) -> i32 {
    run([
        "lipmbrl",
        "run-all",
        "--seed",
        "0",
        "--skip-determinism",
        "true",
        "--out",
        out.to_str().unwrap(),
    ])
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    names
}

fn main() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();

    println!("acceptance: first run-all");
    let code = run_all(first.path());
    assert!(
        code == EXIT_OK || code == EXIT_FAILURE,
        "run-all exited with {code}"
    );

    let summary = fs::read_to_string(first.path().join("summary.csv")).unwrap();
    let mut reader = csv::Reader::from_reader(summary.as_bytes());
    let mut failed = Vec::new();
    let mut seen = 0;
    for record in reader.records() {
        let r = record.unwrap();
        seen += 1;
        if &r[2] != "true" {
            failed.push(format!("{} {}", &r[0], &r[1]));
        }
    }

    println!("acceptance: second run-all");
    let start = Instant::now();
    assert_eq!(run_all(second.path()), code);
    let names = csv_files(first.path());
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| fs::read(first.path().join(n)).ok() != fs::read(second.path().join(n)).ok())
        .collect();
    let same_set = names == csv_files(second.path());
    let deterministic = differing.is_empty() && same_set;
    println!(
        "[{}] 13 {:<28} {} CSVs compared, differing: {:?} ({:.1}s)",
        if deterministic { "PASS" } else { "FAIL" },
        "determinism",
        names.len(),
        differing,
        start.elapsed().as_secs_f64()
    );
    if !deterministic {
        failed.push("13 determinism".into());
    }

    println!(
        "acceptance: {} of {} criteria passed",
        seen + 1 - failed.len(),
        seen + 1
    );
    if seen != 12 || !failed.is_empty() {
        eprintln!("acceptance failures: {failed:?} (criteria seen: {seen})");
        std::process::exit(1);
    }
}
