use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::experiments::{BenchmarkReport, CorrelationReport};
use super::run::RunResult;
use crate::Result;

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct RoundRow {
    round: usize,
    mean_acc: f64,
    mean_asr: f64,
    rho_d: Option<f64>,
    rho_u: Option<f64>,
    rho_err: Option<f64>,
}

/// `rounds.csv`, `nodes.csv`, `audit.csv`, `malicious.csv` and
/// `selections.jsonl` under `dir`.
pub fn write_run(dir: &Path, result: &RunResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let rounds: Vec<RoundRow> = result
        .records
        .iter()
        .map(|r| RoundRow {
            round: r.round,
            mean_acc: r.mean_acc,
            mean_asr: r.mean_asr,
            rho_d: r.error_radius.map(|e| e.rho_d),
            rho_u: r.error_radius.map(|e| e.rho_u),
            rho_err: r.error_radius.map(|e| e.rho_err).filter(|v| v.is_finite()),
        })
        .collect();
    write_csv(&dir.join("rounds.csv"), &rounds)?;
    let nodes: Vec<_> = result.records.iter().flat_map(|r| r.nodes.iter()).collect();
    write_csv(&dir.join("nodes.csv"), &nodes)?;
    let audits: Vec<_> = result.records.iter().flat_map(|r| r.audits.iter()).collect();
    write_csv(&dir.join("audit.csv"), &audits)?;
    let mal: Vec<_> = result.records.iter().flat_map(|r| r.malicious.iter()).collect();
    write_csv(&dir.join("malicious.csv"), &mal)?;
    let sel: Vec<_> = result.records.iter().flat_map(|r| r.selections.iter()).collect();
    write_jsonl(&dir.join("selections.jsonl"), &sel)?;
    Ok(())
}

pub fn write_benchmark(dir: &Path, report: &BenchmarkReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join("benchmark.csv"), &report.cells)?;
    write_csv(&dir.join("benchmark_runs.csv"), &report.runs)?;
    std::fs::write(dir.join("benchmark.txt"), report.to_table())?;
    Ok(())
}

pub fn write_correlation(dir: &Path, report: &CorrelationReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join("correlation.csv"), &report.runs)?;
    write_csv(&dir.join("correlation_nodes.csv"), &report.nodes)?;
    Ok(())
}
