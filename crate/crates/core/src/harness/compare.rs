//! Cross-run comparison: ETROR, optimal reward and mean reward per run, for
//! both platform sides.

use std::io::Write;

use super::etror::{compute_etror, EtrorResult};
use super::metrics::MetricsRecord;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub name: String,
    pub episodes: usize,
    pub etror_a: EtrorResult,
    pub etror_b: EtrorResult,
    pub mean_a: f64,
    pub mean_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub window: usize,
    pub epsilon_term: f64,
    pub runs: Vec<RunSummary>,
    /// True when inputs had mismatched lengths and were truncated to the
    /// shortest.
    pub truncated: bool,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values {
        sum += v;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Summarize several runs side by side. Mismatched episode counts are
/// truncated to the shortest series (flagged in the result).
pub fn compare_runs(
    inputs: &[(String, Vec<MetricsRecord>)],
    epsilon_term: f64,
    window: usize,
) -> Comparison {
    let shortest = inputs.iter().map(|(_, m)| m.len()).min().unwrap_or(0);
    let truncated = inputs.iter().any(|(_, m)| m.len() != shortest);
    let runs = inputs
        .iter()
        .map(|(name, records)| {
            let records = &records[..shortest];
            let returns_a: Vec<f64> = records.iter().map(|r| r.return_a).collect();
            let returns_b: Vec<f64> = records.iter().map(|r| r.return_b).collect();
            RunSummary {
                name: name.clone(),
                episodes: shortest,
                etror_a: compute_etror(&returns_a, epsilon_term, window),
                etror_b: compute_etror(&returns_b, epsilon_term, window),
                mean_a: mean(returns_a.iter().copied()),
                mean_b: mean(returns_b.iter().copied()),
            }
        })
        .collect();
    Comparison {
        window,
        epsilon_term,
        runs,
        truncated,
    }
}

fn fmt_opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "N/A".into())
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "N/A".into())
}

impl Comparison {
    /// CSV form; the first line records the smoothing window and slack used.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(
            w,
            "# etror_window={},etror_epsilon={}",
            self.window, self.epsilon_term
        )?;
        writeln!(
            w,
            "run,episodes,etror_a,optimal_reward_a,mean_reward_a,etror_b,optimal_reward_b,mean_reward_b"
        )?;
        for r in &self.runs {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.name,
                r.episodes,
                fmt_opt_usize(r.etror_a.m_prime),
                fmt_opt_f64(r.etror_a.optimal_reward),
                r.mean_a,
                fmt_opt_usize(r.etror_b.m_prime),
                fmt_opt_f64(r.etror_b.optimal_reward),
                r.mean_b,
            )?;
        }
        Ok(())
    }

    /// Aligned plain-text table, metrics as rows and runs as columns.
    pub fn render_text(&self) -> String {
        let headers: Vec<String> = self.runs.iter().map(|r| r.name.clone()).collect();
        let rows: Vec<(&str, Vec<String>)> = vec![
            (
                "ETROR (A)",
                self.runs
                    .iter()
                    .map(|r| fmt_opt_usize(r.etror_a.m_prime))
                    .collect(),
            ),
            (
                "Optimal Reward (A)",
                self.runs
                    .iter()
                    .map(|r| fmt_opt_f64(r.etror_a.optimal_reward))
                    .collect(),
            ),
            (
                "Mean Reward (A)",
                self.runs.iter().map(|r| format!("{:.3}", r.mean_a)).collect(),
            ),
            (
                "ETROR (B)",
                self.runs
                    .iter()
                    .map(|r| fmt_opt_usize(r.etror_b.m_prime))
                    .collect(),
            ),
            (
                "Optimal Reward (B)",
                self.runs
                    .iter()
                    .map(|r| fmt_opt_f64(r.etror_b.optimal_reward))
                    .collect(),
            ),
            (
                "Mean Reward (B)",
                self.runs.iter().map(|r| format!("{:.3}", r.mean_b)).collect(),
            ),
        ];
        let label_width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
        let col_widths: Vec<usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| {
                rows.iter()
                    .map(|(_, cells)| cells[i].len())
                    .chain(std::iter::once(h.len()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        out.push_str(&format!(
            "window={} epsilon_term={}\n",
            self.window, self.epsilon_term
        ));
        out.push_str(&format!("{:label_width$}", ""));
        for (h, w) in headers.iter().zip(&col_widths) {
            out.push_str(&format!("  {h:>w$}"));
        }
        out.push('\n');
        for (label, cells) in &rows {
            out.push_str(&format!("{label:label_width$}"));
            for (c, w) in cells.iter().zip(&col_widths) {
                out.push_str(&format!("  {c:>w$}"));
            }
            out.push('\n');
        }
        out
    }
}
