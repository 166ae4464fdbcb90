use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// One fixation from an eye-tracking trial.
#[derive(Debug, Clone, PartialEq)]
pub struct FixationRecord {
    pub subject_id: String,
    pub doc_id: String,
    /// Document-linear position of the fixated word.
    pub word_position: u32,
    /// Milliseconds, > 0.
    pub duration: f64,
    /// Temporal order within `(subject_id, doc_id)`.
    pub sequence_index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoPastMeasure {
    /// Sum of fixation durations from first entering the word until the
    /// first fixation to its right.
    pub go_past: f64,
    pub first_fixation: f64,
    /// Signed position change of the saccade that first landed on the word;
    /// `None` for the first fixation of a trial.
    pub launch_delta: Option<i64>,
}

/// Go-past measures keyed by `(subject_id, doc_id, word_position)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GoPastIndex {
    measures: HashMap<(String, String, u32), GoPastMeasure>,
}

impl GoPastIndex {
    pub fn get(&self, subject: &str, doc: &str, position: u32) -> Option<&GoPastMeasure> {
        self.measures
            .get(&(subject.to_string(), doc.to_string(), position))
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, String, u32), &GoPastMeasure)> {
        self.measures.iter()
    }
}

/// Computes go-past durations for every fixated word of every trial.
///
/// Fixations must arrive grouped per `(subject, doc)` in strictly increasing
/// `sequence_index` order; anything else is a precondition error. Words that
/// are never fixated get no entry.
pub fn compute_go_past(fixations: &[FixationRecord]) -> Result<GoPastIndex> {
    let mut trials: Vec<(&str, &str, Vec<&FixationRecord>)> = Vec::new();
    let mut trial_of: HashMap<(&str, &str), usize> = HashMap::new();
    for f in fixations {
        if !(f.duration > 0.0 && f.duration.is_finite()) {
            return Err(Error::Precondition(format!(
                "fixation {} of subject {} in {} has non-positive duration {}",
                f.sequence_index, f.subject_id, f.doc_id, f.duration
            )));
        }
        let key = (f.subject_id.as_str(), f.doc_id.as_str());
        let idx = *trial_of.entry(key).or_insert_with(|| {
            trials.push((key.0, key.1, Vec::new()));
            trials.len() - 1
        });
        let trial = &mut trials[idx].2;
        if let Some(prev) = trial.last() {
            if f.sequence_index <= prev.sequence_index {
                return Err(Error::Precondition(format!(
                    "fixations for subject {} in {} are not sorted by sequence_index ({} after {})",
                    f.subject_id, f.doc_id, f.sequence_index, prev.sequence_index
                )));
            }
        }
        trial.push(f);
    }

    let mut index = GoPastIndex::default();
    for (subject, doc, trial) in trials {
        let mut seen = std::collections::HashSet::new();
        for (i, f) in trial.iter().enumerate() {
            let w = f.word_position;
            if !seen.insert(w) {
                continue;
            }
            let go_past: f64 = trial[i..]
                .iter()
                .take_while(|g| g.word_position <= w)
                .map(|g| g.duration)
                .sum();
            let launch_delta = i
                .checked_sub(1)
                .map(|p| w as i64 - trial[p].word_position as i64);
            index.measures.insert(
                (subject.to_string(), doc.to_string(), w),
                GoPastMeasure {
                    go_past,
                    first_fixation: f.duration,
                    launch_delta,
                },
            );
        }
    }
    Ok(index)
}

/// Reads `subject_id doc_id word_position duration sequence_index` (tab-delimited).
pub fn read_fixations(path: impl AsRef<Path>) -> Result<Vec<FixationRecord>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .from_reader(std::fs::File::open(path).map_err(|e| Error::io(path, e))?);
    let headers = rdr.headers().map_err(|e| Error::Schema(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("fixation file is missing column `{name}`")))
    };
    let (cs, cd, cp, cdur, cseq) = (
        col("subject_id")?,
        col("doc_id")?,
        col("word_position")?,
        col("duration")?,
        col("sequence_index")?,
    );
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            row: i + 1,
            column: String::new(),
            message: e.to_string(),
        })?;
        let get = |c: usize| row.get(c).unwrap_or("").trim();
        let bad = |column: &str, v: &str| Error::Parse {
            row: i + 1,
            column: column.into(),
            message: format!("`{v}` is not valid"),
        };
        out.push(FixationRecord {
            subject_id: get(cs).to_string(),
            doc_id: get(cd).to_string(),
            word_position: get(cp).parse().map_err(|_| bad("word_position", get(cp)))?,
            duration: get(cdur).parse().map_err(|_| bad("duration", get(cdur)))?,
            sequence_index: get(cseq).parse().map_err(|_| bad("sequence_index", get(cseq)))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trial(fix: &[(u32, f64)]) -> Vec<FixationRecord> {
        fix.iter()
            .enumerate()
            .map(|(i, &(w, d))| FixationRecord {
                subject_id: "s".into(),
                doc_id: "d".into(),
                word_position: w,
                duration: d,
                sequence_index: i as u64,
            })
            .collect()
    }

    fn gp(idx: &GoPastIndex, w: u32) -> f64 {
        idx.get("s", "d", w).unwrap().go_past
    }

    /// Hand-traced oracle: the regression from w3 to w2 and back stays inside
    /// w3's go-past region, which ends when w4 is fixated.
    #[test]
    fn regression_path_accumulates() {
        let idx = compute_go_past(&trial(&[(3, 200.0), (2, 150.0), (3, 100.0), (4, 180.0)])).unwrap();
        assert_eq!(gp(&idx, 3), 450.0);
        assert_eq!(gp(&idx, 2), 150.0);
        assert_eq!(gp(&idx, 4), 180.0);
        assert_eq!(idx.get("s", "d", 2).unwrap().launch_delta, Some(-1));
    }

    #[test]
    fn forward_reading() {
        let idx = compute_go_past(&trial(&[(1, 250.0), (2, 300.0)])).unwrap();
        assert_eq!(gp(&idx, 1), 250.0);
        let idx = compute_go_past(&trial(&[(5, 120.0), (6, 90.0)])).unwrap();
        assert_eq!((gp(&idx, 5), gp(&idx, 6)), (120.0, 90.0));
        assert_eq!(idx.get("s", "d", 5).unwrap().launch_delta, None);
        assert_eq!(idx.get("s", "d", 6).unwrap().launch_delta, Some(1));
        assert!(idx.get("s", "d", 7).is_none());
    }

    #[test]
    fn unsorted_trial_is_rejected() {
        let mut f = trial(&[(1, 100.0), (2, 100.0)]);
        f[1].sequence_index = 0;
        assert!(matches!(compute_go_past(&f), Err(Error::Precondition(_))));
    }

    proptest! {
        #[test]
        fn go_past_at_least_first_fixation(fix in proptest::collection::vec((0u32..30, 1.0f64..600.0), 1..60)) {
            let idx = compute_go_past(&trial(&fix)).unwrap();
            for (_, m) in idx.iter() {
                prop_assert!(m.go_past >= m.first_fixation);
            }
            let distinct: std::collections::HashSet<u32> = fix.iter().map(|f| f.0).collect();
            prop_assert_eq!(idx.len(), distinct.len());
        }
    }
}
