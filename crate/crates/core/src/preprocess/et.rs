use super::{ExclusionAudit, GoPastIndex, PreprocessConfig, DOC_EDGES, LAYOUT_EDGES, SENTENCE_EDGES};
use crate::corpus::{CorpusKind, Flags, ResponseRecord, ResponseTable};
use crate::error::{Error, Result};

fn position(r: &ResponseRecord) -> Result<u32> {
    r.word_position.ok_or_else(|| {
        Error::Config(format!(
            "eye-tracking row {} has no word_position linking it to fixations",
            r.row_key()
        ))
    })
}

fn check_et(table: &ResponseTable) -> Result<()> {
    if table.kind() != CorpusKind::EyeTracking {
        return Err(Error::Precondition(format!("expected an et table, got {}", table.kind())));
    }
    table.records().iter().try_for_each(|r| position(r).map(|_| ()))
}

/// Sets each row's response to its go-past duration, or marks it UNFIXATED.
pub fn attach_go_past(table: &ResponseTable, go_past: &GoPastIndex) -> Result<ResponseTable> {
    check_et(table)?;
    let records = table
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            match go_past.get(&r.subject_id, &r.doc_id, r.word_position.unwrap_or_default()) {
                Some(m) => r.response = Some(m.go_past),
                None => {
                    r.response = None;
                    r.flags |= Flags::UNFIXATED;
                }
            }
            r
        })
        .collect();
    ResponseTable::new(CorpusKind::EyeTracking, records)
}

/// Applies the eye-tracking exclusions and attaches go-past responses to the
/// rows that survive.
///
/// Rules, in charging order: unfixated words; words whose first fixation
/// follows a forward saccade skipping more than `max_skip_words` words;
/// sentence edges; document edges; line/screen edges (when enabled).
pub fn filter_et(
    table: &ResponseTable,
    go_past: &GoPastIndex,
    cfg: &PreprocessConfig,
) -> Result<(ResponseTable, ExclusionAudit)> {
    check_et(table)?;
    let max_delta = cfg.max_skip_words as i64 + 1;
    let mut audit = ExclusionAudit::new(
        table.len(),
        &["unfixated", "skip", "sentence_boundary", "doc_boundary", "layout_boundary"],
    );
    let mut kept = Vec::new();
    for r in table.records() {
        let m = go_past.get(&r.subject_id, &r.doc_id, position(r)?);
        let rule = match m {
            _ if r.flags.contains(Flags::UNFIXATED) => Some("unfixated"),
            None => Some("unfixated"),
            Some(m) if m.launch_delta.is_some_and(|d| d > max_delta) => Some("skip"),
            _ if r.flags.intersects(SENTENCE_EDGES) => Some("sentence_boundary"),
            _ if r.flags.intersects(DOC_EDGES) => Some("doc_boundary"),
            _ if cfg.filter_layout_boundaries && r.flags.intersects(LAYOUT_EDGES) => Some("layout_boundary"),
            _ => None,
        };
        match (rule, m) {
            (Some(rule), _) => audit.charge(rule),
            (None, Some(m)) => {
                let mut r = r.clone();
                r.response = Some(m.go_past);
                kept.push(r);
            }
            (None, None) => unreachable!("rows without a measure are charged as unfixated"),
        }
    }
    audit.retained = kept.len();
    Ok((ResponseTable::new(CorpusKind::EyeTracking, kept)?, audit))
}
