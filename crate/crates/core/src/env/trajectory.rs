//! Trajectory log export: one CSV row per platform interaction.

use std::io::Write;

use crate::env::PlatformTag;
use crate::Result;

pub const TRAJECTORY_HEADER: &str = "episode,step,platform,slate,chosen_slot,engagement,sat,nke,budget";

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub episode: u64,
    pub step: u64,
    pub platform: PlatformTag,
    pub slate: Vec<usize>,
    pub chosen_slot: Option<usize>,
    pub engagement: f64,
    pub sat: f64,
    pub nke: f64,
    pub budget: f64,
}

/// In-memory trajectory log with a CSV exporter. Slate ids are joined with
/// ';' inside a single CSV field.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryLog {
    rows: Vec<TrajectoryRow>,
}

impl TrajectoryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: TrajectoryRow) {
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[TrajectoryRow] {
        &self.rows
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{TRAJECTORY_HEADER}")?;
        for r in &self.rows {
            let slate = r
                .slate
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(";");
            let chosen = r
                .chosen_slot
                .map(|s| s.to_string())
                .unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.episode, r.step, r.platform, slate, chosen, r.engagement, r.sat, r.nke, r.budget
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_fixed_header_and_one_row_per_interaction() {
        let mut log = TrajectoryLog::new();
        log.push(TrajectoryRow {
            episode: 0,
            step: 0,
            platform: PlatformTag::A,
            slate: vec![2, 0, 1],
            chosen_slot: Some(1),
            engagement: 3.5,
            sat: 0.5,
            nke: 0.0,
            budget: 119.0,
        });
        log.push(TrajectoryRow {
            episode: 0,
            step: 0,
            platform: PlatformTag::B,
            slate: vec![1, 2],
            chosen_slot: None,
            engagement: 0.0,
            sat: 0.5,
            nke: 0.0,
            budget: 118.0,
        });
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRAJECTORY_HEADER);
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "0,0,A,2;0;1,1,3.5,0.5,0,119");
        assert_eq!(lines[2], "0,0,B,1;2,,0,0.5,0,118");
    }
}
