use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::generators::{Stage, StageCounters};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStats {
    pub generated: usize,
    pub auto_filtered: usize,
    pub manually_filtered: usize,
    #[serde(rename = "final")]
    pub kept: usize,
}

impl StageStats {
    pub fn is_conserved(&self) -> bool {
        self.generated >= self.auto_filtered + self.manually_filtered
            && self.kept == self.generated - self.auto_filtered - self.manually_filtered
    }
}

/// Per-stage counts for a run. Stages appear in pipeline order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub stages: IndexMap<Stage, StageStats>,
}

impl Default for RunStats {
    fn default() -> Self {
        Self {
            stages: Stage::ALL.iter().map(|s| (*s, StageStats::default())).collect(),
        }
    }
}

impl RunStats {
    pub fn get(&self, stage: Stage) -> StageStats {
        self.stages.get(&stage).copied().unwrap_or_default()
    }

    /// Records automatic counts for a stage and recomputes its final count.
    /// Manual counts are kept.
    pub fn set_auto(&mut self, stage: Stage, counters: StageCounters) {
        let s = self.stages.entry(stage).or_default();
        s.generated = counters.generated;
        s.auto_filtered = counters.auto_filtered;
        s.manually_filtered = s.manually_filtered.min(s.generated - s.auto_filtered);
        s.kept = s.generated - s.auto_filtered - s.manually_filtered;
    }

    /// Records how many of the automatically kept items were removed by
    /// annotators. Clamped to what is left after automatic filtering.
    pub fn set_manual(&mut self, stage: Stage, removed: usize) {
        let s = self.stages.entry(stage).or_default();
        s.manually_filtered = removed.min(s.generated - s.auto_filtered);
        s.kept = s.generated - s.auto_filtered - s.manually_filtered;
    }

    pub fn is_conserved(&self) -> bool {
        self.stages.values().all(StageStats::is_conserved)
    }

    /// Table with one column per stage and rows for the count after
    /// generation, after automatic filters, after manual filters, and the
    /// final count.
    pub fn render(&self) -> String {
        let mut header = vec![String::new()];
        header.extend(self.stages.keys().map(|s| s.as_str().to_string()));
        let row = |label: &str, f: &dyn Fn(&StageStats) -> usize| -> Vec<String> {
            let mut r = vec![label.to_string()];
            r.extend(self.stages.values().map(|s| f(s).to_string()));
            r
        };
        let rows = vec![
            header,
            row("Generated", &|s| s.generated),
            row("+ auto filters", &|s| s.generated - s.auto_filtered),
            row("+ manual filters", &|s| s.generated - s.auto_filtered - s.manually_filtered),
            row("Final", &|s| s.kept),
        ];
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|i| rows.iter().map(|r| r[i].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in rows {
            let line: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_run_is_all_zeros() {
        let s = RunStats::default();
        assert_eq!(s.stages.len(), 7);
        assert!(s.is_conserved());
        let table = s.render();
        for line in table.lines().skip(1) {
            assert!(line.split_whitespace().rev().take(7).all(|c| c == "0"), "{line}");
        }
    }

    #[test]
    fn one_discarded_flowgraph() {
        let mut s = RunStats::default();
        s.set_auto(
            Stage::Flowgraphs,
            StageCounters {
                generated: 3,
                auto_filtered: 1,
            },
        );
        assert_eq!(s.get(Stage::Flowgraphs).auto_filtered, 1);
        assert_eq!(s.get(Stage::Flowgraphs).kept, 2);
        s.set_manual(Stage::Flowgraphs, 5);
        assert_eq!(s.get(Stage::Flowgraphs).manually_filtered, 2);
        assert!(s.is_conserved());
    }

    #[test]
    fn final_is_serialized_under_its_name() {
        let v = serde_json::to_value(StageStats::default()).unwrap();
        assert!(v.get("final").is_some());
    }
}
