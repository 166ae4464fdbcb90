//! Deterministic fit / exploratory / held-out assignment and by-subject folds.
//!
//! Labels are pure functions of record keys and the seed, so they do not
//! depend on row order. Keys are hashed with seeded XxHash64 over
//! `subject_id \x1f doc_id \x1f sentence_id` (three-way) or
//! `doc_id \x1f sentence_id` (folds).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use twox_hash::XxHash64;

use crate::corpus::{ResponseRecord, ResponseTable};
use crate::error::{Error, Result};

pub const CV_FOLDS: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Fit,
    Explore,
    Heldout,
    Fold(u8),
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Fit => f.write_str("fit"),
            Label::Explore => f.write_str("explore"),
            Label::Heldout => f.write_str("heldout"),
            Label::Fold(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fit" => Ok(Label::Fit),
            "explore" | "exploratory" | "expl" => Ok(Label::Explore),
            "heldout" | "held-out" | "test" => Ok(Label::Heldout),
            other => other
                .parse::<u8>()
                .ok()
                .filter(|k| *k < CV_FOLDS)
                .map(Label::Fold)
                .ok_or_else(|| Error::Config(format!("unknown partition label `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMode {
    ThreeWay,
    Cv5BySubject,
}

impl FromStr for PartitionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "three_way" | "threeway" => Ok(PartitionMode::ThreeWay),
            "cv5_by_subject" | "cv5" => Ok(PartitionMode::Cv5BySubject),
            other => Err(Error::Config(format!("unknown partition mode `{other}`"))),
        }
    }
}

/// One label per row of the table it was computed for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionAssignment {
    mode: PartitionMode,
    labels: Vec<Label>,
}

impl PartitionAssignment {
    pub fn from_labels(mode: PartitionMode, labels: Vec<Label>) -> Result<Self> {
        let ok = labels.iter().all(|l| match mode {
            PartitionMode::ThreeWay => !matches!(l, Label::Fold(_)),
            PartitionMode::Cv5BySubject => matches!(l, Label::Fold(k) if *k < CV_FOLDS),
        });
        if !ok {
            return Err(Error::Config(format!("labels do not match partition mode {mode:?}")));
        }
        Ok(PartitionAssignment { mode, labels })
    }

    pub fn mode(&self) -> PartitionMode {
        self.mode
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Row indices carrying `label`, in row order.
    pub fn indices(&self, label: Label) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == label)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn counts(&self) -> BTreeMap<Label, usize> {
        let mut m = BTreeMap::new();
        for l in &self.labels {
            *m.entry(*l).or_insert(0) += 1;
        }
        m
    }
}

fn key_hash(seed: u64, parts: &[&str]) -> u64 {
    XxHash64::oneshot(seed, parts.join("\u{1f}").as_bytes())
}

fn three_way_label(seed: u64, r: &ResponseRecord) -> Label {
    match key_hash(seed, &[&r.subject_id, &r.doc_id, &r.sentence_id.to_string()]) % 4 {
        0 | 1 => Label::Fit,
        2 => Label::Explore,
        _ => Label::Heldout,
    }
}

/// Assigns every row of `table` a partition label.
///
/// Three-way mode gives roughly 50/25/25 fit/explore/held-out with all rows
/// of a subject-sentence pair sharing a label. CV mode ranks each subject's
/// sentences by hash and deals them round-robin into five folds.
pub fn partition(table: &ResponseTable, mode: PartitionMode, seed: u64) -> Result<PartitionAssignment> {
    if table.is_empty() {
        return Err(Error::Precondition("cannot partition an empty table".into()));
    }
    let labels = match mode {
        PartitionMode::ThreeWay => table.records().iter().map(|r| three_way_label(seed, r)).collect(),
        PartitionMode::Cv5BySubject => {
            let mut items: BTreeMap<&str, Vec<(u64, &str, u32)>> = BTreeMap::new();
            for r in table.records() {
                let h = key_hash(seed, &[&r.doc_id, &r.sentence_id.to_string()]);
                items.entry(&r.subject_id).or_default().push((h, &r.doc_id, r.sentence_id));
            }
            let mut fold_of: HashMap<(&str, &str, u32), u8> = HashMap::new();
            for (subject, mut list) in items {
                list.sort_unstable();
                list.dedup();
                for (rank, (_, doc, sent)) in list.into_iter().enumerate() {
                    fold_of.insert((subject, doc, sent), (rank % CV_FOLDS as usize) as u8);
                }
            }
            table
                .records()
                .iter()
                .map(|r| Label::Fold(fold_of[&(r.subject_id.as_str(), r.doc_id.as_str(), r.sentence_id)]))
                .collect()
        }
    };
    Ok(PartitionAssignment { mode, labels })
}

/// Labels supplied from a file, keyed by `(subject_id, doc_id, sentence_id)`.
#[derive(Debug, Clone, Default)]
pub struct ExternalPartition {
    labels: HashMap<(String, String, u32), Label>,
}

impl ExternalPartition {
    pub fn insert(&mut self, subject: &str, doc: &str, sentence: u32, label: Label) {
        self.labels.insert((subject.to_string(), doc.to_string(), sentence), label);
    }

    /// Applies the external labels to `table`; every row must be covered.
    pub fn assign(&self, table: &ResponseTable) -> Result<PartitionAssignment> {
        let mut missing = Vec::new();
        let mut labels = Vec::with_capacity(table.len());
        for r in table.records() {
            match self.labels.get(&(r.subject_id.clone(), r.doc_id.clone(), r.sentence_id)) {
                Some(l) => labels.push(*l),
                None => missing.push(r.row_key().to_string()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingAlignment { missing });
        }
        let mode = if labels.iter().all(|l| matches!(l, Label::Fold(_))) {
            PartitionMode::Cv5BySubject
        } else {
            PartitionMode::ThreeWay
        };
        PartitionAssignment::from_labels(mode, labels)
    }
}

/// Reads `subject_id doc_id sentence_id label` rows (tab-delimited).
pub fn read_partition_file(path: impl AsRef<Path>) -> Result<ExternalPartition> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .from_reader(std::fs::File::open(path).map_err(|e| Error::io(path, e))?);
    let headers = rdr.headers().map_err(|e| Error::Schema(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("partition file is missing column `{name}`")))
    };
    let (cs, cd, cn, cl) = (col("subject_id")?, col("doc_id")?, col("sentence_id")?, col("label")?);
    let mut out = ExternalPartition::default();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::Parse { row: i + 1, column: String::new(), message: e.to_string() })?;
        let get = |c: usize| row.get(c).unwrap_or("").trim();
        let sentence = get(cn).parse::<u32>().map_err(|_| Error::Parse {
            row: i + 1,
            column: "sentence_id".into(),
            message: format!("`{}` is not a non-negative integer", get(cn)),
        })?;
        out.insert(get(cs), get(cd), sentence, get(cl).parse()?);
    }
    Ok(out)
}
