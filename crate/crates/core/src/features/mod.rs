//! Turning per-token model vectors into per-response predictor rows.

mod bold;
mod hrf;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use nalgebra::DMatrix;

pub use bold::{aggregate_bold, aggregate_regions, BoldAggregation, RegionMode};
pub use hrf::{hrf_convolve, scan_grid, HrfKernel};

use crate::corpus::{ResponseRecord, ResponseTable, RowKey, SentenceKey, VectorBundle, WordKey};
use crate::error::{Error, Result};

/// Predictor matrix with one row per response row.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
    row_keys: Vec<RowKey>,
}

impl DesignMatrix {
    pub fn new(values: DMatrix<f64>, row_keys: Vec<RowKey>) -> Result<Self> {
        if values.nrows() != row_keys.len() {
            return Err(Error::Precondition(format!(
                "{} rows but {} row keys",
                values.nrows(),
                row_keys.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let row = pos % values.nrows().max(1);
            return Err(Error::Numerical(format!(
                "non-finite predictor at row {} ({})",
                row, row_keys[row]
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(row_keys.len());
        if let Some(dup) = row_keys.iter().find(|k| !seen.insert(*k)) {
            return Err(Error::Precondition(format!("duplicate design row key {dup}")));
        }
        Ok(DesignMatrix { values, row_keys })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn row_keys(&self) -> &[RowKey] {
        &self.row_keys
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn select_rows(&self, indices: &[usize]) -> DesignMatrix {
        DesignMatrix {
            values: self.values.select_rows(indices),
            row_keys: indices.iter().map(|&i| self.row_keys[i].clone()).collect(),
        }
    }

    /// Column-wise concatenation of two designs over the same rows.
    pub fn hstack(&self, other: &DesignMatrix) -> Result<DesignMatrix> {
        if self.row_keys != other.row_keys {
            return Err(Error::Precondition("hstack of designs over different rows".into()));
        }
        let (n, a, b) = (self.nrows(), self.ncols(), other.ncols());
        let mut values = DMatrix::zeros(n, a + b);
        values.columns_mut(0, a).copy_from(&self.values);
        values.columns_mut(a, b).copy_from(&other.values);
        Ok(DesignMatrix { values, row_keys: self.row_keys.clone() })
    }
}

/// Source of one feature vector per response record.
pub trait FeatureLookup: Sync {
    fn width(&self) -> usize;
    fn features(&self, record: &ResponseRecord) -> Option<&[f64]>;
    /// Human-readable key, used to report misses.
    fn describe(&self, record: &ResponseRecord) -> String;
}

/// Word-level vectors: the mean over each word's subword tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectors {
    width: usize,
    map: BTreeMap<WordKey, Vec<f64>>,
}

impl WordVectors {
    pub fn get(&self, key: &WordKey) -> Option<&[f64]> {
        self.map.get(key).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&WordKey, &[f64])> {
        self.map.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

impl FeatureLookup for WordVectors {
    fn width(&self) -> usize {
        self.width
    }
    fn features(&self, r: &ResponseRecord) -> Option<&[f64]> {
        self.get(&r.word_key())
    }
    fn describe(&self, r: &ResponseRecord) -> String {
        format!("word {}", r.word_key())
    }
}

/// Averages subword-token vectors into word vectors (in f64).
pub fn word_vectors(bundle: &VectorBundle) -> WordVectors {
    let d = bundle.d_model();
    let mut sums: BTreeMap<WordKey, (Vec<f64>, usize)> = BTreeMap::new();
    for (tok, v) in bundle.iter() {
        let (acc, n) = sums
            .entry(tok.word_key.clone())
            .or_insert_with(|| (vec![0.0; d], 0));
        for (a, x) in acc.iter_mut().zip(v) {
            *a += *x as f64;
        }
        *n += 1;
    }
    let map = sums
        .into_iter()
        .map(|(k, (mut acc, n))| {
            let inv = 1.0 / n as f64;
            acc.iter_mut().for_each(|a| *a *= inv);
            (k, acc)
        })
        .collect();
    WordVectors { width: d, map }
}

/// Per-sentence vectors taken from each sentence's last word.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceVectors {
    width: usize,
    map: BTreeMap<SentenceKey, Vec<f64>>,
}

impl SentenceVectors {
    pub fn get(&self, key: &SentenceKey) -> Option<&[f64]> {
        self.map.get(key).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl FeatureLookup for SentenceVectors {
    fn width(&self) -> usize {
        self.width
    }
    fn features(&self, r: &ResponseRecord) -> Option<&[f64]> {
        self.get(&r.sentence_key())
    }
    fn describe(&self, r: &ResponseRecord) -> String {
        format!("sentence {}", r.sentence_key())
    }
}

/// The subword-averaged vector of the highest-indexed word in each sentence.
pub fn sentence_final_vector(bundle: &VectorBundle) -> Result<SentenceVectors> {
    if bundle.is_empty() {
        return Err(Error::MissingAlignment {
            missing: vec![format!("bundle {} has no tokens", bundle.meta().model_name)],
        });
    }
    let words = word_vectors(bundle);
    let mut last: BTreeMap<SentenceKey, (&WordKey, &[f64])> = BTreeMap::new();
    // BTreeMap iteration is ordered by word_index within a sentence, so the
    // final insert per sentence wins.
    for (k, v) in words.iter() {
        last.insert(k.sentence(), (k, v));
    }
    let map = last.into_iter().map(|(s, (_, v))| (s, v.to_vec())).collect();
    Ok(SentenceVectors { width: words.width, map })
}

/// Scan-level predictors for time-series BOLD, keyed by `(doc_id, scan time)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanFeatures {
    width: usize,
    map: HashMap<(String, u64), Vec<f64>>,
}

impl FeatureLookup for ScanFeatures {
    fn width(&self) -> usize {
        self.width
    }
    fn features(&self, r: &ResponseRecord) -> Option<&[f64]> {
        let t = r.onset_time?;
        self.map.get(&(r.doc_id.clone(), t.to_bits())).map(Vec::as_slice)
    }
    fn describe(&self, r: &ResponseRecord) -> String {
        format!("scan doc={} t={:?}", r.doc_id, r.onset_time)
    }
}

/// Word onset times (seconds) for audio-presented stories.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordOnsets {
    onsets: BTreeMap<WordKey, f64>,
}

impl WordOnsets {
    pub fn insert(&mut self, key: WordKey, onset: f64) {
        self.onsets.insert(key, onset);
    }

    pub fn get(&self, key: &WordKey) -> Option<f64> {
        self.onsets.get(key).copied()
    }
}

impl FromIterator<(WordKey, f64)> for WordOnsets {
    fn from_iter<I: IntoIterator<Item = (WordKey, f64)>>(iter: I) -> Self {
        WordOnsets { onsets: iter.into_iter().collect() }
    }
}

/// Reads `doc_id sentence_id word_index onset_time` rows (tab-delimited).
pub fn read_word_onsets(path: impl AsRef<Path>) -> Result<WordOnsets> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .from_reader(std::fs::File::open(path).map_err(|e| Error::io(path, e))?);
    let headers = rdr.headers().map_err(|e| Error::Schema(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("onset file is missing column `{name}`")))
    };
    let (cd, cs, cw, ct) = (col("doc_id")?, col("sentence_id")?, col("word_index")?, col("onset_time")?);
    let mut out = WordOnsets::default();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::Parse { row: i + 1, column: String::new(), message: e.to_string() })?;
        let get = |c: usize| row.get(c).unwrap_or("").trim();
        let bad = |column: &str| Error::Parse {
            row: i + 1,
            column: column.into(),
            message: "not a valid number".into(),
        };
        let key = WordKey::new(
            get(cd),
            get(cs).parse().map_err(|_| bad("sentence_id"))?,
            get(cw).parse().map_err(|_| bad("word_index"))?,
        );
        let t: f64 = get(ct).parse().map_err(|_| bad("onset_time"))?;
        if !t.is_finite() {
            return Err(bad("onset_time"));
        }
        out.insert(key, t);
    }
    Ok(out)
}

/// HRF-convolved word vectors evaluated at every scan time present in `table`.
///
/// Each document is convolved once for the union of its scan times; every
/// subject's scans then look up their row by `(doc_id, onset_time)`.
pub fn scan_features(
    table: &ResponseTable,
    words: &WordVectors,
    onsets: &WordOnsets,
    kernel: &HrfKernel,
) -> Result<ScanFeatures> {
    let mut scans: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in table.records() {
        let t = r.onset_time.ok_or_else(|| {
            Error::Precondition(format!("scan row {} has no onset_time", r.row_key()))
        })?;
        scans.entry(&r.doc_id).or_default().push(t);
    }
    let mut events: BTreeMap<&str, Vec<(f64, &[f64])>> = BTreeMap::new();
    let mut missing = Vec::new();
    for (k, v) in words.iter() {
        if !scans.contains_key(k.doc_id.as_str()) {
            continue;
        }
        match onsets.get(k) {
            Some(t) => events.entry(k.doc_id.as_str()).or_default().push((t, v)),
            None => missing.push(format!("onset for word {k}")),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingAlignment { missing });
    }

    let d = words.width();
    let mut map = HashMap::new();
    for (doc, mut times) in scans {
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut ev = events.remove(doc).unwrap_or_default();
        ev.sort_by(|a, b| a.0.total_cmp(&b.0));
        let onset_list: Vec<f64> = ev.iter().map(|e| e.0).collect();
        let vectors = DMatrix::from_fn(ev.len(), d, |i, j| ev[i].1[j]);
        let conv = hrf_convolve(&vectors, &onset_list, &times, kernel)?;
        for (i, t) in times.iter().enumerate() {
            map.insert((doc.to_string(), t.to_bits()), conv.row(i).iter().copied().collect());
        }
    }
    Ok(ScanFeatures { width: d, map })
}

/// Joins `table` against `features`, producing rows in table order.
///
/// Every row must have features; all misses are reported together.
pub fn build_design(table: &ResponseTable, features: &dyn FeatureLookup) -> Result<DesignMatrix> {
    let d = features.width();
    let n = table.len();
    let mut values = DMatrix::<f64>::zeros(n, d);
    let mut missing = Vec::new();
    for (i, r) in table.records().iter().enumerate() {
        match features.features(r) {
            Some(v) if v.len() == d => {
                for (j, x) in v.iter().enumerate() {
                    values[(i, j)] = *x;
                }
            }
            Some(v) => {
                return Err(Error::Precondition(format!(
                    "{} has width {}, expected {d}",
                    features.describe(r),
                    v.len()
                )))
            }
            None => missing.push(format!("{} (row {})", features.describe(r), r.row_key())),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingAlignment { missing });
    }
    DesignMatrix::new(values, table.records().iter().map(ResponseRecord::row_key).collect())
}
