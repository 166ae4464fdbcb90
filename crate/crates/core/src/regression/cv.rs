use std::collections::BTreeMap;

use log::warn;
use rayon::prelude::*;

use super::{fit_linear, pearson, predict, FitOptions, ScoreResult};
use crate::error::{Error, Result};
use crate::corpus::RowKey;
use crate::features::DesignMatrix;
use crate::preprocess::{Label, PartitionAssignment, PartitionMode, CV_FOLDS};

#[derive(Debug, Clone, PartialEq)]
pub struct FoldScore {
    pub subject_id: String,
    pub fold: u8,
    pub n_train: usize,
    pub n_test: usize,
    pub score: ScoreResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvSummary {
    /// Mean over subjects of each subject's mean over defined folds.
    pub score: ScoreResult,
    pub folds: Vec<FoldScore>,
    pub undefined_folds: usize,
}

/// One within-subject fold: train on the subject's other folds, test on `fold`.
#[derive(Debug, Clone, PartialEq)]
pub struct CvSplit {
    pub subject_id: String,
    pub fold: u8,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl CvSplit {
    /// Folds with fewer than two test rows or no training rows cannot be scored.
    pub fn is_scorable(&self) -> bool {
        self.test.len() >= 2 && !self.train.is_empty()
    }
}

/// Splits in (subject, fold) order for the rows keyed by `row_keys`.
pub fn cv_splits(row_keys: &[RowKey], assignment: &PartitionAssignment) -> Result<Vec<CvSplit>> {
    if assignment.mode() != PartitionMode::Cv5BySubject {
        return Err(Error::Precondition("cross-validation needs a fold assignment".into()));
    }
    if assignment.len() != row_keys.len() {
        return Err(Error::Precondition(format!(
            "{} rows but {} fold labels",
            row_keys.len(),
            assignment.len()
        )));
    }
    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, key) in row_keys.iter().enumerate() {
        by_subject.entry(key.subject_id.as_str()).or_default().push(i);
    }
    let mut out = Vec::with_capacity(by_subject.len() * CV_FOLDS as usize);
    for (subject, rows) in by_subject {
        for k in 0..CV_FOLDS {
            let (test, train) = rows.iter().partition(|&&i| assignment.labels()[i] == Label::Fold(k));
            out.push(CvSplit { subject_id: subject.to_string(), fold: k, train, test });
        }
    }
    Ok(out)
}

/// Averages fold scores within each subject, then across subjects.
/// Undefined folds are left out of both averages and counted.
pub fn summarize_folds(folds: Vec<FoldScore>) -> CvSummary {
    let mut undefined = 0;
    let mut subject_means = Vec::new();
    let mut n_scored = 0;
    for group in folds.chunk_by(|a, b| a.subject_id == b.subject_id) {
        let defined: Vec<f64> = group.iter().filter_map(|f| f.score.pearson_r).collect();
        undefined += group.iter().filter(|f| f.n_test > 0 && f.score.is_undefined()).count();
        n_scored += group.iter().filter(|f| !f.score.is_undefined()).map(|f| f.n_test).sum::<usize>();
        if !defined.is_empty() {
            subject_means.push(defined.iter().sum::<f64>() / defined.len() as f64);
        }
    }
    if undefined > 0 {
        warn!("{undefined} cross-validation folds had an undefined score and were skipped");
    }
    let score = if subject_means.is_empty() {
        ScoreResult::undefined(n_scored)
    } else {
        ScoreResult {
            pearson_r: Some(subject_means.iter().sum::<f64>() / subject_means.len() as f64),
            n: n_scored,
            normalized_r: None,
        }
    };
    CvSummary { score, folds, undefined_folds: undefined }
}

/// Scores every split with `score_fold` (in parallel) and summarizes.
pub fn crossval_with<F>(splits: &[CvSplit], score_fold: F) -> Result<CvSummary>
where
    F: Fn(&CvSplit) -> Result<ScoreResult> + Sync,
{
    let folds = splits
        .par_iter()
        .map(|s| {
            let score = if s.is_scorable() { score_fold(s)? } else { ScoreResult::undefined(s.test.len()) };
            Ok(FoldScore {
                subject_id: s.subject_id.clone(),
                fold: s.fold,
                n_train: s.train.len(),
                n_test: s.test.len(),
                score,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_folds(folds))
}

/// Within-subject k-fold cross-validation of a linear fit: each subject's
/// model is fitted on that subject's other folds and scored on the held-out
/// one.
pub fn crossval_by_subject(
    x: &DesignMatrix,
    y: &[f64],
    assignment: &PartitionAssignment,
    opts: &FitOptions,
) -> Result<CvSummary> {
    if y.len() != x.nrows() {
        return Err(Error::Precondition(format!("{} design rows, {} responses", x.nrows(), y.len())));
    }
    let splits = cv_splits(x.row_keys(), assignment)?;
    crossval_with(&splits, |s| {
        let model = fit_linear(x.select_rows(&s.train).values(), &gather(y, &s.train), opts)?;
        let yhat = predict(&model, x.select_rows(&s.test).values())?;
        pearson(&yhat, &gather(y, &s.test))
    })
}

pub(crate) fn gather(y: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| y[i]).collect()
}
