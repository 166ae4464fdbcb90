//! Tab-delimited response tables.
//!
//! Every table has a header row. The columns understood by the reader are:
//!
//! | column | kinds | notes |
//! |---|---|---|
//! | `subject_id`, `doc_id`, `sentence_id`, `word_index` | all | mandatory |
//! | `response` | all | mandatory except for `et`, where `NA`/empty marks "not yet attached" |
//! | `word` | all | optional word text |
//! | `onset_time` | `fmri` (mandatory), others optional | seconds |
//! | `word_position` | `et` (mandatory), others optional | document-linear position |
//! | `region` | optional | fROI / parcel label, aggregated away before regression |
//! | `sentence_initial` ... `unfixated` | optional | `0`/`1` flag columns, see [`Flags::COLUMNS`] |
//!
//! Unknown columns are ignored. Data rows are numbered from 1, excluding the header.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{validate_record, CorpusKind, Flags, ResponseRecord, ResponseTable};
use crate::error::{Error, Result};

/// A row the reader refused, with its 1-based data-row number.
#[derive(Debug, Clone, PartialEq)]
pub struct RowRejection {
    pub row: usize,
    pub column: String,
    pub message: String,
}

/// Result of a lenient read: `rows_read == table.len() + rejected.len()`.
#[derive(Debug, Clone)]
pub struct ReadOutcome {
    pub table: ResponseTable,
    pub rejected: Vec<RowRejection>,
    pub rows_read: usize,
}

fn mandatory_columns(kind: CorpusKind) -> Vec<&'static str> {
    let mut cols = vec!["subject_id", "doc_id", "sentence_id", "word_index"];
    if kind != CorpusKind::EyeTracking {
        cols.push("response");
    }
    match kind {
        CorpusKind::FmriTimeSeries => cols.push("onset_time"),
        CorpusKind::EyeTracking => cols.push("word_position"),
        _ => {}
    }
    cols
}

/// Reads a response table, failing on the first malformed row.
pub fn read_response_table(path: impl AsRef<Path>, kind: CorpusKind) -> Result<ResponseTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let outcome = parse_response_table(file, kind)?;
    if let Some(first) = outcome.rejected.first() {
        let err = Error::Parse {
            row: first.row,
            column: first.column.clone(),
            message: if outcome.rejected.len() > 1 {
                format!("{} ({} malformed rows in total)", first.message, outcome.rejected.len())
            } else {
                first.message.clone()
            },
        };
        return Err(err.context(path.display().to_string()));
    }
    Ok(outcome.table)
}

/// Reads a response table, collecting malformed rows instead of failing.
///
/// Schema problems (missing mandatory columns) are still hard errors.
pub fn read_response_table_lenient(path: impl AsRef<Path>, kind: CorpusKind) -> Result<ReadOutcome> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_response_table(file, kind).map_err(|e| e.context(path.display().to_string()))
}

pub fn parse_response_table(reader: impl Read, kind: CorpusKind) -> Result<ReadOutcome> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header: {e}")))?
        .clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    let missing: Vec<&str> = mandatory_columns(kind)
        .into_iter()
        .filter(|c| !index.contains_key(c))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Schema(format!(
            "{kind} table is missing mandatory column(s): {}",
            missing.join(", ")
        )));
    }

    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut rows_read = 0;
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        rows_read += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                rejected.push(RowRejection {
                    row: row_no,
                    column: String::new(),
                    message: e.to_string(),
                });
                continue;
            }
        };
        match parse_row(&row, &index, kind) {
            Ok(rec) => records.push(rec),
            Err((column, message)) => rejected.push(RowRejection {
                row: row_no,
                column,
                message,
            }),
        }
    }
    let table = ResponseTable::new(kind, records)?;
    Ok(ReadOutcome {
        table,
        rejected,
        rows_read,
    })
}

type CellError = (String, String);

fn parse_row(
    row: &csv::StringRecord,
    index: &HashMap<&str, usize>,
    kind: CorpusKind,
) -> std::result::Result<ResponseRecord, CellError> {
    let cell = |name: &str| -> Option<&str> { index.get(name).and_then(|&i| row.get(i)).map(str::trim) };
    let required = |name: &str| -> std::result::Result<&str, CellError> {
        cell(name).ok_or_else(|| (name.to_string(), "missing cell".to_string()))
    };
    let parse_u32 = |name: &str, s: &str| -> std::result::Result<u32, CellError> {
        s.parse::<u32>()
            .map_err(|_| (name.to_string(), format!("`{s}` is not a non-negative integer")))
    };
    let parse_f64 = |name: &str, s: &str| -> std::result::Result<f64, CellError> {
        s.parse::<f64>()
            .map_err(|_| (name.to_string(), format!("`{s}` is not a number")))
    };
    let is_na = |s: &str| s.is_empty() || s.eq_ignore_ascii_case("na");

    let subject_id = required("subject_id")?.to_string();
    let doc_id = required("doc_id")?.to_string();
    let sentence_id = parse_u32("sentence_id", required("sentence_id")?)?;
    let word_index = parse_u32("word_index", required("word_index")?)?;

    let response = match cell("response") {
        Some(s) if kind == CorpusKind::EyeTracking && is_na(s) => None,
        Some(s) => Some(parse_f64("response", s)?),
        None if kind == CorpusKind::EyeTracking => None,
        None => return Err(("response".into(), "missing cell".into())),
    };
    let onset_time = match cell("onset_time") {
        Some(s) if !is_na(s) => Some(parse_f64("onset_time", s)?),
        _ => None,
    };
    let word_position = match cell("word_position") {
        Some(s) if !is_na(s) => Some(parse_u32("word_position", s)?),
        _ => None,
    };
    if kind == CorpusKind::EyeTracking && word_position.is_none() {
        return Err(("word_position".into(), "eye-tracking rows need a word position".into()));
    }
    let region = cell("region").filter(|s| !s.is_empty()).map(str::to_string);
    let word_text = cell("word").unwrap_or("").to_string();

    let mut flags = Flags::empty();
    for (name, flag) in Flags::COLUMNS {
        match cell(name) {
            None | Some("") | Some("0") => {}
            Some("1") => flags |= flag,
            Some(other) => return Err((name.to_string(), format!("flag value `{other}` is not 0 or 1"))),
        }
    }

    let rec = ResponseRecord {
        subject_id,
        doc_id,
        sentence_id,
        word_index,
        word_text,
        response,
        onset_time,
        word_position,
        region,
        flags,
    };
    validate_record(kind, &rec).map_err(|m| ("response".to_string(), m))?;
    Ok(rec)
}

/// Writes a table in the same format [`read_response_table`] accepts.
///
/// Optional columns are emitted only when at least one record uses them;
/// flag columns are always emitted. Floats use the shortest representation
/// that parses back to the same bits.
pub fn write_response_table(table: &ResponseTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    format_response_table(table, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn format_response_table(table: &ResponseTable, out: &mut impl Write) -> std::io::Result<()> {
    let recs = table.records();
    let has_onset = recs.iter().any(|r| r.onset_time.is_some());
    let has_pos = recs.iter().any(|r| r.word_position.is_some());
    let has_region = recs.iter().any(|r| r.region.is_some());

    let mut wtr = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    let mut header = vec!["subject_id", "doc_id", "sentence_id", "word_index", "word", "response"];
    if has_onset {
        header.push("onset_time");
    }
    if has_pos {
        header.push("word_position");
    }
    if has_region {
        header.push("region");
    }
    header.extend(Flags::COLUMNS.iter().map(|(n, _)| *n));
    wtr.write_record(&header)?;

    let opt_f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into());
    for r in recs {
        let mut row = vec![
            r.subject_id.clone(),
            r.doc_id.clone(),
            r.sentence_id.to_string(),
            r.word_index.to_string(),
            r.word_text.clone(),
            opt_f(r.response),
        ];
        if has_onset {
            row.push(opt_f(r.onset_time));
        }
        if has_pos {
            row.push(r.word_position.map(|p| p.to_string()).unwrap_or_else(|| "NA".into()));
        }
        if has_region {
            row.push(r.region.clone().unwrap_or_default());
        }
        for (_, flag) in Flags::COLUMNS {
            row.push(if r.flags.contains(flag) { "1" } else { "0" }.into());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()
}
