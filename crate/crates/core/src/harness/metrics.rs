//! Per-episode metrics and their CSV representation.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const METRICS_HEADER: &str = "episode,return_a,return_b,epsilon,loss_alpha,loss_beta,wall_ms";

/// One row per episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub episode: u64,
    pub return_a: f64,
    /// Platform B's return, recorded for evaluation only.
    pub return_b: f64,
    pub epsilon: f64,
    /// Mean alpha-side loss over the episode's learning rounds (0 when none
    /// ran).
    pub loss_alpha: f64,
    pub loss_beta: f64,
    pub wall_ms: u64,
}

pub fn write_metrics_csv<W: Write>(w: &mut W, records: &[MetricsRecord]) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.episode, r.return_a, r.return_b, r.epsilon, r.loss_alpha, r.loss_beta, r.wall_ms
        )?;
    }
    Ok(())
}

pub fn write_metrics_file(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, records)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_metrics_csv(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == METRICS_HEADER => {}
        other => {
            return Err(Error::contract(format!(
                "unexpected metrics header: {other:?}"
            )))
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::contract(format!(
                "metrics row {i} has {} fields",
                fields.len()
            )));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::contract(format!("bad float {s:?} in metrics row {i}")))
        };
        out.push(MetricsRecord {
            episode: fields[0]
                .parse()
                .map_err(|_| Error::contract(format!("bad episode in row {i}")))?,
            return_a: parse_f(fields[1])?,
            return_b: parse_f(fields[2])?,
            epsilon: parse_f(fields[3])?,
            loss_alpha: parse_f(fields[4])?,
            loss_beta: parse_f(fields[5])?,
            wall_ms: fields[6]
                .parse()
                .map_err(|_| Error::contract(format!("bad wall_ms in row {i}")))?,
        });
    }
    Ok(out)
}

pub fn read_metrics_file(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path)?;
    read_metrics_csv(&text)
}
