//! Exclusion rules, go-past durations, and data partitioning.

mod et;
mod gopast;
mod partition;
mod spr;

pub use et::{attach_go_past, filter_et};
pub use gopast::{compute_go_past, read_fixations, FixationRecord, GoPastIndex, GoPastMeasure};
pub use partition::{
    partition, read_partition_file, ExternalPartition, Label, PartitionAssignment, PartitionMode,
    CV_FOLDS,
};
pub use spr::{filter_spr, read_comprehension_scores, ComprehensionScore, ComprehensionScores};

use crate::corpus::Flags;

/// Whether the comprehension threshold applies to a participant overall or
/// separately to each story they read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComprehensionScope {
    Subject,
    Story,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    /// Closed interval of admissible SPR reading times, in milliseconds.
    pub rt_window_ms: (f64, f64),
    /// A first fixation launched from more than this many words back is excluded.
    pub max_skip_words: u32,
    pub comprehension_min_correct: u32,
    pub comprehension_scope: ComprehensionScope,
    /// Drop LINE_BOUNDARY / SCREEN_BOUNDARY rows (Dundee-style layout annotations).
    pub filter_layout_boundaries: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            rt_window_ms: (100.0, 3000.0),
            max_skip_words: 4,
            comprehension_min_correct: 4,
            comprehension_scope: ComprehensionScope::Subject,
            filter_layout_boundaries: true,
        }
    }
}

/// Per-rule exclusion counts. A row is charged to the first rule that removes it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExclusionAudit {
    pub rows_in: usize,
    pub retained: usize,
    pub by_rule: Vec<(&'static str, usize)>,
}

impl ExclusionAudit {
    fn new(rows_in: usize, rules: &[&'static str]) -> Self {
        ExclusionAudit {
            rows_in,
            retained: 0,
            by_rule: rules.iter().map(|r| (*r, 0)).collect(),
        }
    }

    fn charge(&mut self, rule: &'static str) {
        if let Some(slot) = self.by_rule.iter_mut().find(|(r, _)| *r == rule) {
            slot.1 += 1;
        }
    }

    pub fn count(&self, rule: &str) -> usize {
        self.by_rule
            .iter()
            .find(|(r, _)| *r == rule)
            .map(|(_, c)| *c)
            .unwrap_or(0)
    }

    pub fn excluded(&self) -> usize {
        self.by_rule.iter().map(|(_, c)| c).sum()
    }
}

pub(crate) const SENTENCE_EDGES: Flags = Flags::SENTENCE_INITIAL.union(Flags::SENTENCE_FINAL);
pub(crate) const DOC_EDGES: Flags = Flags::DOC_INITIAL.union(Flags::DOC_FINAL);
pub(crate) const LAYOUT_EDGES: Flags = Flags::LINE_BOUNDARY.union(Flags::SCREEN_BOUNDARY);
