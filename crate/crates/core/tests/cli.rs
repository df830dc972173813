mod common;

use std::process::{Command, Output};

use common::criteria::cli_outputs;
use dfl_core::sim::ExperimentConfig;

fn dfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dfl")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn short_config(extra: &str) -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, format!("rounds = 3\ntrials = 1\n{extra}")).unwrap();
    let path = path.to_string_lossy().into_owned();
    (dir, path)
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = dfl(&["simulate", "/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn no_subcommand_is_a_usage_error() {
    assert_eq!(dfl(&[]).status.code(), Some(2));
}

#[test]
fn unknown_flag_is_rejected() {
    assert!(!dfl(&["simulate", "--bogus"]).status.success());
}

#[test]
fn printed_schema_is_a_loadable_default() {
    let o = dfl(&["--print-schema"]);
    assert!(o.status.success());
    let cfg = ExperimentConfig::from_toml(&stdout(&o)).unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
}

#[test]
fn invalid_config_names_the_problem() {
    let (_dir, path) = short_config("[roles]\nmalicious_ratio = 1.5\n");
    let o = dfl(&["simulate", &path]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("malicious_ratio"));
}

#[test]
fn simulate_reports_final_metrics() {
    let (_dir, path) = short_config("");
    let o = dfl(&["simulate", &path, "--seed", "2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().last().unwrap().starts_with("final acc "), "{text}");
    assert_eq!(text, stdout(&dfl(&["simulate", &path, "--seed", "2"])));
}

#[test]
fn simulate_writes_identical_files_for_one_seed() {
    let (dir, _) = short_config("");
    let config = dir.path().join("run.toml");
    let a = cli_outputs(&["simulate"], 1, &config);
    assert!(!a.is_empty());
    assert_eq!(a, cli_outputs(&["simulate"], 2, &config));
}

#[test]
fn topology_places_defenders() {
    let o = dfl(&["topology", "scale_free:20:2", "--place", "--budget", "4", "--seed", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("connected"), "{text}");
    let line = text.lines().find(|l| l.starts_with("defense set")).unwrap();
    assert_eq!(line.split_whitespace().count(), 2 + 4, "{line}");
    assert!(text.lines().any(|l| l.starts_with("coverage")));
}

#[test]
fn topology_rejects_malformed_specs() {
    assert!(!dfl(&["topology", "scale_free:x"]).status.success());
}

#[test]
fn diffusion_bound_csv_has_one_row_per_node() {
    let (_dir, path) = short_config("");
    let o = dfl(&["diffusion-bound", &path, "--t", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "node_id,distance_to_nearest_source,bound_t,simulated_s_t");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 20);
    for r in rows {
        if let (Ok(b), Ok(s)) = (r[2].parse::<f64>(), r[3].parse::<f64>()) {
            assert!(s <= b + 1e-12);
        }
    }
}
