use std::collections::HashMap;
use std::path::Path;

use super::{ComprehensionScope, ExclusionAudit, PreprocessConfig, SENTENCE_EDGES};
use crate::corpus::{CorpusKind, ResponseTable};
use crate::error::{Error, Result};

/// Number of comprehension questions asked after each story.
pub const QUESTIONS_PER_STORY: u32 = 6;

/// Correct comprehension answers for a subject, either for one story
/// (`doc_id` set) or as a per-story aggregate (`doc_id` unset).
#[derive(Debug, Clone, PartialEq)]
pub struct ComprehensionScore {
    pub subject_id: String,
    pub doc_id: Option<String>,
    pub correct_answers: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ComprehensionScores {
    aggregate: HashMap<String, f64>,
    per_story: HashMap<String, HashMap<String, f64>>,
}

impl ComprehensionScores {
    pub fn new(scores: impl IntoIterator<Item = ComprehensionScore>) -> Result<Self> {
        let mut out = ComprehensionScores::default();
        for s in scores {
            if !(0.0..=QUESTIONS_PER_STORY as f64).contains(&s.correct_answers) {
                return Err(Error::Config(format!(
                    "subject {} has {} correct answers; expected 0..={QUESTIONS_PER_STORY}",
                    s.subject_id, s.correct_answers
                )));
            }
            let dup = match s.doc_id {
                None => out.aggregate.insert(s.subject_id.clone(), s.correct_answers).is_some(),
                Some(doc) => out
                    .per_story
                    .entry(s.subject_id.clone())
                    .or_default()
                    .insert(doc, s.correct_answers)
                    .is_some(),
            };
            if dup {
                return Err(Error::Config(format!(
                    "duplicate comprehension score for subject {}",
                    s.subject_id
                )));
            }
        }
        Ok(out)
    }

    /// Subject-level score: the explicit aggregate if given, else the mean
    /// over that subject's stories.
    pub fn subject_score(&self, subject: &str) -> Option<f64> {
        if let Some(&a) = self.aggregate.get(subject) {
            return Some(a);
        }
        let stories = self.per_story.get(subject)?;
        if stories.is_empty() {
            return None;
        }
        Some(stories.values().sum::<f64>() / stories.len() as f64)
    }

    pub fn story_score(&self, subject: &str, doc: &str) -> Option<f64> {
        self.per_story.get(subject).and_then(|m| m.get(doc)).copied()
    }
}

/// Reads `subject_id  [doc_id]  correct` rows (tab-delimited, with header).
pub fn read_comprehension_scores(path: impl AsRef<Path>) -> Result<ComprehensionScores> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .from_reader(std::fs::File::open(path).map_err(|e| Error::io(path, e))?);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema(e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let subj = col("subject_id").ok_or_else(|| Error::Schema("comprehension file needs subject_id".into()))?;
    let correct = col("correct").ok_or_else(|| Error::Schema("comprehension file needs correct".into()))?;
    let doc = col("doc_id");
    let mut scores = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            row: i + 1,
            column: String::new(),
            message: e.to_string(),
        })?;
        let value = row.get(correct).unwrap_or("").trim();
        let correct_answers = value.parse::<f64>().map_err(|_| Error::Parse {
            row: i + 1,
            column: "correct".into(),
            message: format!("`{value}` is not a number"),
        })?;
        scores.push(ComprehensionScore {
            subject_id: row.get(subj).unwrap_or("").trim().to_string(),
            doc_id: doc
                .and_then(|d| row.get(d))
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string),
            correct_answers,
        });
    }
    ComprehensionScores::new(scores)
}

/// Applies the self-paced-reading exclusions: sentence-initial/-final words,
/// subjects below the comprehension threshold, and reading times outside the
/// closed window.
pub fn filter_spr(
    table: &ResponseTable,
    scores: &ComprehensionScores,
    cfg: &PreprocessConfig,
) -> Result<(ResponseTable, ExclusionAudit)> {
    if table.kind() != CorpusKind::Spr {
        return Err(Error::Precondition(format!("filter_spr given a {} table", table.kind())));
    }
    let (lo, hi) = cfg.rt_window_ms;
    let min_correct = cfg.comprehension_min_correct as f64;

    let mut failing: HashMap<(String, Option<String>), bool> = HashMap::new();
    for r in table.records() {
        let key = match cfg.comprehension_scope {
            ComprehensionScope::Subject => (r.subject_id.clone(), None),
            ComprehensionScope::Story => (r.subject_id.clone(), Some(r.doc_id.clone())),
        };
        if failing.contains_key(&key) {
            continue;
        }
        let score = match &key.1 {
            None => scores.subject_score(&key.0),
            Some(doc) => scores.story_score(&key.0, doc),
        };
        let score = score.ok_or_else(|| {
            Error::Config(format!(
                "no comprehension score for subject {}{}",
                key.0,
                key.1.as_ref().map(|d| format!(" on {d}")).unwrap_or_default()
            ))
        })?;
        failing.insert(key, score < min_correct);
    }

    let mut audit = ExclusionAudit::new(table.len(), &["sentence_boundary", "comprehension", "rt_window"]);
    let kept = table.retain(|r| {
        if r.flags.intersects(SENTENCE_EDGES) {
            audit.charge("sentence_boundary");
            return false;
        }
        let key = match cfg.comprehension_scope {
            ComprehensionScope::Subject => (r.subject_id.clone(), None),
            ComprehensionScope::Story => (r.subject_id.clone(), Some(r.doc_id.clone())),
        };
        if failing[&key] {
            audit.charge("comprehension");
            return false;
        }
        match r.response {
            Some(rt) if (lo..=hi).contains(&rt) => true,
            _ => {
                audit.charge("rt_window");
                false
            }
        }
    });
    audit.retained = kept.len();
    Ok((kept, audit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Flags, ResponseRecord};

    fn rec(subject: &str, word: u32, rt: f64, flags: Flags) -> ResponseRecord {
        ResponseRecord {
            subject_id: subject.into(),
            doc_id: "story1".into(),
            sentence_id: 0,
            word_index: word,
            word_text: String::new(),
            response: Some(rt),
            onset_time: None,
            word_position: None,
            region: None,
            flags,
        }
    }

    fn scores(pairs: &[(&str, f64)]) -> ComprehensionScores {
        ComprehensionScores::new(pairs.iter().map(|(s, c)| ComprehensionScore {
            subject_id: s.to_string(),
            doc_id: None,
            correct_answers: *c,
        }))
        .unwrap()
    }

    #[test]
    fn window_is_closed() {
        let t = ResponseTable::new(
            CorpusKind::Spr,
            vec![
                rec("a", 1, 99.0, Flags::empty()),
                rec("a", 2, 100.0, Flags::empty()),
                rec("a", 3, 3000.0, Flags::empty()),
                rec("a", 4, 3000.5, Flags::empty()),
            ],
        )
        .unwrap();
        let (kept, audit) = filter_spr(&t, &scores(&[("a", 6.0)]), &PreprocessConfig::default()).unwrap();
        let words: Vec<u32> = kept.records().iter().map(|r| r.word_index).collect();
        assert_eq!(words, vec![2, 3]);
        assert_eq!(audit.count("rt_window"), 2);
    }

    #[test]
    fn low_comprehension_subject_dropped_entirely() {
        let t = ResponseTable::new(
            CorpusKind::Spr,
            vec![rec("good", 1, 300.0, Flags::empty()), rec("bad", 1, 300.0, Flags::empty()), rec("bad", 2, 280.0, Flags::empty())],
        )
        .unwrap();
        let (kept, audit) =
            filter_spr(&t, &scores(&[("good", 4.0), ("bad", 3.0)]), &PreprocessConfig::default()).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept.records()[0].subject_id, "good");
        assert_eq!(audit.count("comprehension"), 2);
    }

    #[test]
    fn missing_subject_score_is_config_error() {
        let t = ResponseTable::new(CorpusKind::Spr, vec![rec("ghost", 1, 300.0, Flags::empty())]).unwrap();
        let err = filter_spr(&t, &scores(&[("a", 6.0)]), &PreprocessConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn sentence_edges_removed_and_idempotent() {
        let t = ResponseTable::new(
            CorpusKind::Spr,
            vec![
                rec("a", 0, 300.0, Flags::SENTENCE_INITIAL),
                rec("a", 1, 300.0, Flags::empty()),
                rec("a", 2, 300.0, Flags::SENTENCE_FINAL),
            ],
        )
        .unwrap();
        let s = scores(&[("a", 5.0)]);
        let cfg = PreprocessConfig::default();
        let (once, _) = filter_spr(&t, &s, &cfg).unwrap();
        let (twice, audit) = filter_spr(&once, &s, &cfg).unwrap();
        assert_eq!(once, twice);
        assert_eq!(once.len(), 1);
        assert_eq!(audit.excluded(), 0);
    }

    #[test]
    fn story_scope_uses_story_scores() {
        let mut r2 = rec("a", 1, 300.0, Flags::empty());
        r2.doc_id = "story2".into();
        let t = ResponseTable::new(CorpusKind::Spr, vec![rec("a", 1, 300.0, Flags::empty()), r2]).unwrap();
        let s = ComprehensionScores::new(vec![
            ComprehensionScore { subject_id: "a".into(), doc_id: Some("story1".into()), correct_answers: 2.0 },
            ComprehensionScore { subject_id: "a".into(), doc_id: Some("story2".into()), correct_answers: 6.0 },
        ])
        .unwrap();
        let cfg = PreprocessConfig { comprehension_scope: ComprehensionScope::Story, ..Default::default() };
        let (kept, _) = filter_spr(&t, &s, &cfg).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept.records()[0].doc_id, "story2");
        // Subject scope averages the two stories: 4.0, which passes.
        let (kept, _) = filter_spr(&t, &s, &PreprocessConfig::default()).unwrap();
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn scores_are_bounded() {
        let bad = ComprehensionScores::new(vec![ComprehensionScore {
            subject_id: "a".into(),
            doc_id: None,
            correct_answers: 7.0,
        }]);
        assert!(bad.is_err());
    }
}
