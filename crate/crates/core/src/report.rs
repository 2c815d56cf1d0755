//! Metrics files: per-round CSV/JSON and sweep summaries.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::orchestrator::{MatrixOutput, RoundMetrics};

pub const METRICS_HEADER: &str = "round,client,acc,pl_count,pl_precision,a_i,disagreement";
pub const SUMMARY_HEADER: &str = "alpha,r,method,runs,mean_acc,std_acc,mean_client_std";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One line per (round, client). Missing values are empty fields.
pub fn metrics_csv(rounds: &[RoundMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rounds {
        for c in &r.clients {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.round,
                c.client,
                c.acc,
                c.pl_count,
                opt(c.pl_precision),
                opt(c.a_i),
                c.disagreement
            )
            .unwrap();
        }
    }
    out
}

pub fn metrics_json(rounds: &[RoundMetrics]) -> String {
    serde_json::to_string_pretty(rounds).expect("metrics serialize")
}

pub fn summary_csv(matrix: &MatrixOutput) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for row in &matrix.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.alpha, row.r, row.method, row.runs, row.mean_acc, row.std_acc, row.mean_client_std
        )
        .unwrap();
    }
    out
}

pub fn summary_json(matrix: &MatrixOutput) -> String {
    serde_json::to_string_pretty(matrix).expect("summary serializes")
}

/// Writes `metrics.{csv,json}` into `dir`, creating it if needed.
pub fn write_metrics(dir: &Path, rounds: &[RoundMetrics], format: Format) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("metrics.{}", format.extension()));
    let body = match format {
        Format::Csv => metrics_csv(rounds),
        Format::Json => metrics_json(rounds),
    };
    fs::write(&path, body)?;
    Ok(path)
}

/// Writes `summary.{csv,json}` into `dir`.
pub fn write_summary(dir: &Path, matrix: &MatrixOutput, format: Format) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("summary.{}", format.extension()));
    let body = match format {
        Format::Csv => summary_csv(matrix),
        Format::Json => summary_json(matrix),
    };
    fs::write(&path, body)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::ClientMetrics;

    fn rounds() -> Vec<RoundMetrics> {
        vec![RoundMetrics {
            round: 1,
            clients: vec![
                ClientMetrics { client: 0, acc: 0.5, pl_count: 0, pl_precision: None, a_i: Some(0.25), disagreement: 0.0 },
                ClientMetrics { client: 1, acc: 0.75, pl_count: 3, pl_precision: Some(1.0), a_i: None, disagreement: 0.125 },
            ],
            mean_acc: 0.625,
            std_acc: 0.125,
            max_disagreement: 0.25,
            generated: false,
        }]
    }

    #[test]
    fn csv_layout() {
        let csv = metrics_csv(&rounds());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines, vec![METRICS_HEADER, "1,0,0.5,0,,0.25,0", "1,1,0.75,3,1,,0.125"]);
    }

    #[test]
    fn json_round_trips() {
        let r = rounds();
        let back: Vec<RoundMetrics> = serde_json::from_str(&metrics_json(&r)).unwrap();
        assert_eq!(back, r);
        assert!(metrics_json(&r).contains("\"pl_precision\": null"));
    }
}
