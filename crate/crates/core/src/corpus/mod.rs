//! In-memory data model for human responses and per-token model vectors,
//! plus the on-disk formats both are exchanged in.
//!
//! Responses live in delimited text tables ([`table`]); vectors live in a
//! little-endian binary container ([`bundle`]). Words are always keyed by the
//! triple `(doc_id, sentence_id, word_index)`, never by a corpus-global offset.

pub mod bundle;
pub mod catalog;
pub mod table;

use std::fmt;
use std::str::FromStr;

use bitflags::bitflags;

use crate::error::{Error, Result};

pub use bundle::{read_vector_bundle, write_vector_bundle, ModelMeta, Token, VectorBundle};
pub use table::{read_response_table, read_response_table_lenient, write_response_table, ReadOutcome};

/// Fully trained Pythia checkpoint step.
pub const FULLY_TRAINED_STEPS: u64 = 143_000;

bitflags! {
    /// Per-record annotations that drive the exclusion rules.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
    pub struct Flags: u8 {
        const SENTENCE_INITIAL = 1 << 0;
        const SENTENCE_FINAL = 1 << 1;
        const DOC_INITIAL = 1 << 2;
        const DOC_FINAL = 1 << 3;
        const LINE_BOUNDARY = 1 << 4;
        const SCREEN_BOUNDARY = 1 << 5;
        const UNFIXATED = 1 << 6;
    }
}

impl Flags {
    /// Column names used in response tables, in bit order.
    pub const COLUMNS: [(&'static str, Flags); 7] = [
        ("sentence_initial", Flags::SENTENCE_INITIAL),
        ("sentence_final", Flags::SENTENCE_FINAL),
        ("doc_initial", Flags::DOC_INITIAL),
        ("doc_final", Flags::DOC_FINAL),
        ("line_boundary", Flags::LINE_BOUNDARY),
        ("screen_boundary", Flags::SCREEN_BOUNDARY),
        ("unfixated", Flags::UNFIXATED),
    ];
}

/// The kind of response data a table holds. Each kind has its own schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorpusKind {
    /// Self-paced reading times, one row per subject and word.
    Spr,
    /// Eye-tracking go-past durations, one row per subject and word.
    EyeTracking,
    /// BOLD time series sampled on a scan grid, one row per scan (and region).
    FmriTimeSeries,
    /// Per-sentence BOLD responses (Pereira-style), one row per subject and sentence.
    FmriSentence,
}

impl CorpusKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CorpusKind::Spr => "spr",
            CorpusKind::EyeTracking => "et",
            CorpusKind::FmriTimeSeries => "fmri",
            CorpusKind::FmriSentence => "pereira",
        }
    }

    /// Whether responses are durations in milliseconds (and must be positive).
    pub fn is_milliseconds(self) -> bool {
        matches!(self, CorpusKind::Spr | CorpusKind::EyeTracking)
    }
}

impl fmt::Display for CorpusKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorpusKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spr" => Ok(CorpusKind::Spr),
            "et" | "eye_tracking" | "eyetracking" => Ok(CorpusKind::EyeTracking),
            "fmri" | "fmri_timeseries" => Ok(CorpusKind::FmriTimeSeries),
            "pereira" | "fmri_sentence" => Ok(CorpusKind::FmriSentence),
            other => Err(Error::Config(format!("unknown corpus kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WordKey {
    pub doc_id: String,
    pub sentence_id: u32,
    pub word_index: u32,
}

impl WordKey {
    pub fn new(doc_id: impl Into<String>, sentence_id: u32, word_index: u32) -> Self {
        WordKey {
            doc_id: doc_id.into(),
            sentence_id,
            word_index,
        }
    }

    pub fn sentence(&self) -> SentenceKey {
        SentenceKey {
            doc_id: self.doc_id.clone(),
            sentence_id: self.sentence_id,
        }
    }
}

impl fmt::Display for WordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.doc_id, self.sentence_id, self.word_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SentenceKey {
    pub doc_id: String,
    pub sentence_id: u32,
}

impl fmt::Display for SentenceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.doc_id, self.sentence_id)
    }
}

/// One human response event.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseRecord {
    pub subject_id: String,
    pub doc_id: String,
    pub sentence_id: u32,
    pub word_index: u32,
    pub word_text: String,
    /// Milliseconds for SPR/ET, arbitrary units for BOLD. Absent only on
    /// eye-tracking rows whose go-past duration has not been attached yet.
    pub response: Option<f64>,
    /// Scan time in seconds; time-series fMRI only.
    pub onset_time: Option<f64>,
    /// Document-linear word position; links ET rows to fixation streams.
    pub word_position: Option<u32>,
    /// fMRI region label (fROI or parcel) before aggregation.
    pub region: Option<String>,
    pub flags: Flags,
}

impl ResponseRecord {
    pub fn word_key(&self) -> WordKey {
        WordKey::new(self.doc_id.clone(), self.sentence_id, self.word_index)
    }

    pub fn sentence_key(&self) -> SentenceKey {
        SentenceKey {
            doc_id: self.doc_id.clone(),
            sentence_id: self.sentence_id,
        }
    }

    pub fn row_key(&self) -> RowKey {
        RowKey {
            subject_id: self.subject_id.clone(),
            doc_id: self.doc_id.clone(),
            sentence_id: self.sentence_id,
            word_index: self.word_index,
            onset_bits: self.onset_time.map(f64::to_bits),
            region: self.region.clone(),
        }
    }
}

/// Unique identity of a response row within a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowKey {
    pub subject_id: String,
    pub doc_id: String,
    pub sentence_id: u32,
    pub word_index: u32,
    onset_bits: Option<u64>,
    pub region: Option<String>,
}

impl RowKey {
    pub fn onset_time(&self) -> Option<f64> {
        self.onset_bits.map(f64::from_bits)
    }
}

impl fmt::Display for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "subject={} doc={} sentence={} word={}",
            self.subject_id, self.doc_id, self.sentence_id, self.word_index
        )?;
        if let Some(t) = self.onset_time() {
            write!(f, " onset={t}")?;
        }
        if let Some(r) = &self.region {
            write!(f, " region={r}")?;
        }
        Ok(())
    }
}

/// A validated collection of response records of a single corpus kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTable {
    kind: CorpusKind,
    records: Vec<ResponseRecord>,
}

impl ResponseTable {
    /// Builds a table after checking the record invariants for `kind`.
    pub fn new(kind: CorpusKind, records: Vec<ResponseRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            validate_record(kind, r).map_err(|msg| Error::Parse {
                row: i + 1,
                column: "response".into(),
                message: msg,
            })?;
        }
        let mut seen = std::collections::HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if !seen.insert(r.row_key()) {
                return Err(Error::Precondition(format!(
                    "duplicate response key at row {}: {}",
                    i + 1,
                    r.row_key()
                )));
            }
        }
        Ok(ResponseTable { kind, records })
    }

    pub fn kind(&self) -> CorpusKind {
        self.kind
    }

    pub fn records(&self) -> &[ResponseRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<ResponseRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Response column; errors if any row still lacks a response.
    pub fn responses(&self) -> Result<Vec<f64>> {
        self.records
            .iter()
            .map(|r| {
                r.response.ok_or_else(|| {
                    Error::Precondition(format!("row {} has no response value", r.row_key()))
                })
            })
            .collect()
    }

    /// Keeps the records for which `keep` returns true, preserving order.
    pub fn retain(&self, mut keep: impl FnMut(&ResponseRecord) -> bool) -> ResponseTable {
        ResponseTable {
            kind: self.kind,
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> ResponseTable {
        ResponseTable {
            kind: self.kind,
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    pub fn subjects(&self) -> Vec<String> {
        let mut s: Vec<String> = self.records.iter().map(|r| r.subject_id.clone()).collect();
        s.sort();
        s.dedup();
        s
    }
}

pub(crate) fn validate_record(kind: CorpusKind, r: &ResponseRecord) -> std::result::Result<(), String> {
    match r.response {
        Some(v) if !v.is_finite() => return Err(format!("response {v} is not finite")),
        Some(v) if kind.is_milliseconds() && v <= 0.0 => {
            return Err(format!("duration {v} ms must be positive"))
        }
        None if kind != CorpusKind::EyeTracking => {
            return Err("response is required for this corpus kind".into())
        }
        _ => {}
    }
    if let Some(t) = r.onset_time {
        if !t.is_finite() {
            return Err(format!("onset time {t} is not finite"));
        }
    }
    if kind == CorpusKind::FmriTimeSeries && r.onset_time.is_none() {
        return Err("time-series fMRI rows need an onset_time".into());
    }
    Ok(())
}
