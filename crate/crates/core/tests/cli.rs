use std::fs;
use std::path::Path;

use lipmbrl::cli::{run, EXIT_OK, EXIT_USAGE};

fn lipmbrl(out: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["lipmbrl".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.push("--out".into());
    argv.push(out.display().to_string());
    run(argv)
}

#[test]
fn metric_compare_reports_the_shifted_constants_row() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        lipmbrl(dir.path(), &["metric-compare", "--c1", "2", "--c2", "0.5"]),
        EXIT_OK
    );
    let csv = fs::read_to_string(dir.path().join("metric_compare.csv")).unwrap();
    assert!(csv.contains(",1.5,1,inf"), "{csv}");
}

#[test]
fn identical_fixture_pair_gives_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("pairs.json");
    fs::write(
        &fixture,
        r#"{"support": [0, 1, 3], "pairs": [{"name": "same", "mu1": [0.2, 0.3, 0.5], "mu2": [0.2, 0.3, 0.5]}]}"#,
    )
    .unwrap();
    let code = lipmbrl(
        dir.path(),
        &["metric-compare", "--fixture", fixture.to_str().unwrap()],
    );
    assert_eq!(code, EXIT_OK);
    let csv = fs::read_to_string(dir.path().join("metric_compare.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "same,0,0,0"), "{csv}");
}

#[test]
fn missing_fixture_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let code = lipmbrl(
        dir.path(),
        &["metric-compare", "--fixture", "/does/not/exist.json"],
    );
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn zero_tolerance_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        lipmbrl(dir.path(), &["run-all", "--tol", "duality=0"]),
        EXIT_USAGE
    );
    let config = dir.path().join("bad.toml");
    fs::write(&config, "[tolerances]\none_d = 0.0\n").unwrap();
    assert_eq!(
        lipmbrl(
            dir.path(),
            &["run-all", "--config", config.to_str().unwrap()]
        ),
        EXIT_USAGE
    );
}

#[test]
fn unwritable_output_directory_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    assert_eq!(lipmbrl(&blocker.join("sub"), &["value-bound"]), EXIT_USAGE);
}

#[test]
fn flags_override_the_config_file_and_the_config_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        "seed = 5\n[value_bound]\ndelta = 0.5\ngamma = 0.5\n",
    )
    .unwrap();
    let code = lipmbrl(
        dir.path(),
        &[
            "value-bound",
            "--config",
            config.to_str().unwrap(),
            "--delta",
            "0.2",
        ],
    );
    assert_eq!(code, EXIT_OK);
    let echoed = fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert!(echoed.contains("seed = 5"));
    assert!(echoed.contains("delta = 0.2"));
    assert!(echoed.contains("gamma = 0.5"));
    let csv = fs::read_to_string(dir.path().join("value_bound.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("0.2,"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, "[value_bound]\ndelat = 0.5\n").unwrap();
    assert_eq!(
        lipmbrl(
            dir.path(),
            &["value-bound", "--config", config.to_str().unwrap()]
        ),
        EXIT_USAGE
    );
}

#[test]
fn correlation_reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = [
        "correlation",
        "--trials",
        "40",
        "--seed",
        "3",
        "--gammas",
        "0.5,0.9",
    ];
    assert_eq!(lipmbrl(a.path(), &args), EXIT_OK);
    assert_eq!(lipmbrl(b.path(), &args), EXIT_OK);
    for name in ["trials.csv", "correlations.csv"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name} differs"
        );
    }
    let trials = fs::read_to_string(a.path().join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 1 + 40 * 2);
}

#[test]
fn too_few_trials_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        lipmbrl(dir.path(), &["correlation", "--trials", "10"]),
        EXIT_USAGE
    );
}

#[test]
fn small_commands_succeed() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["decompose", "--fixture", "gridworld"],
        vec![
            "gvi",
            "--operator",
            "mellowmax",
            "--param",
            "5",
            "--discount",
            "0.4",
        ],
        vec!["layer-lipschitz", "--widths", "2,8,1", "--norm", "2"],
        vec![
            "operator-check",
            "--operator",
            "boltzmann:1",
            "--pairs",
            "500",
        ],
        vec!["compounding", "--instances", "10"],
        vec!["em-train", "--k", "1", "--iters", "3", "--steps", "5"],
    ] {
        assert_eq!(lipmbrl(dir.path(), &args), EXIT_OK, "{args:?}");
    }
    assert_eq!(
        lipmbrl(dir.path(), &["gvi", "--fixture", "nope"]),
        EXIT_USAGE
    );
    assert_eq!(
        lipmbrl(
            dir.path(),
            &["gvi", "--operator", "eps_greedy", "--param", "2"]
        ),
        EXIT_USAGE
    );
    assert_eq!(
        lipmbrl(dir.path(), &["layer-lipschitz", "--norm", "3"]),
        EXIT_USAGE
    );
}
