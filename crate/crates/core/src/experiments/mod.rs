//! Per-variant scoring, trained-vs-untrained comparison, residualization,
//! and scaling statistics.

mod report;
mod scaling;

use log::{info, warn};
use rayon::prelude::*;

pub use report::{render_scaling_svg, write_plot_data, write_scaling_summary, write_scores};
pub use scaling::{
    fit_scaling_line, permutation_test_slope, scaling_by_family, scaling_report, PermutationTest, ScalingReport,
};

use crate::corpus::{ModelMeta, ResponseTable, VectorBundle};
use crate::error::{Error, Result};
use crate::features::{
    build_design, scan_features, sentence_final_vector, word_vectors, DesignMatrix, HrfKernel, WordOnsets,
};
use crate::preprocess::{Label, PartitionAssignment, PartitionMode};
use crate::regression::{
    crossval_by_subject, crossval_with, cv_splits, fit_linear, gather, pearson, predict, FitOptions, ScoreResult,
};

/// How bundle vectors become predictors for a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMode {
    /// Subword-averaged word vectors, one per response word.
    Word,
    /// The last word's vector, one per sentence.
    SentenceFinal,
    /// Word vectors convolved with an HRF and sampled at scan times.
    Hrf { kernel: HrfKernel, onsets: WordOnsets },
}

/// A preprocessed, partitioned response table ready for scoring.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub id: String,
    table: ResponseTable,
    responses: Vec<f64>,
    assignment: PartitionAssignment,
    pub features: FeatureMode,
    /// Noise ceiling for normalized scores, if any.
    pub ceiling: Option<f64>,
}

impl Dataset {
    pub fn new(
        id: impl Into<String>,
        table: ResponseTable,
        assignment: PartitionAssignment,
        features: FeatureMode,
        ceiling: Option<f64>,
    ) -> Result<Self> {
        if assignment.len() != table.len() {
            return Err(Error::Precondition(format!(
                "{} partition labels for {} response rows",
                assignment.len(),
                table.len()
            )));
        }
        if table.is_empty() {
            return Err(Error::Precondition("dataset has no response rows".into()));
        }
        let responses = table.responses()?;
        Ok(Dataset { id: id.into(), table, responses, assignment, features, ceiling })
    }

    pub fn table(&self) -> &ResponseTable {
        &self.table
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn assignment(&self) -> &PartitionAssignment {
        &self.assignment
    }

    /// Aligns `bundle` to every response row.
    pub fn design(&self, bundle: &VectorBundle) -> Result<DesignMatrix> {
        let built = match &self.features {
            FeatureMode::Word => build_design(&self.table, &word_vectors(bundle)),
            FeatureMode::SentenceFinal => build_design(&self.table, &sentence_final_vector(bundle)?),
            FeatureMode::Hrf { kernel, onsets } => {
                let scans = scan_features(&self.table, &word_vectors(bundle), onsets, kernel)?;
                build_design(&self.table, &scans)
            }
        };
        built.map_err(|e| e.context(format!("aligning bundle `{}`", bundle.meta().model_name)))
    }

    fn holdout_rows(&self) -> Result<(Vec<usize>, Vec<usize>)> {
        let fit = self.assignment.indices(Label::Fit);
        let held = self.assignment.indices(Label::Heldout);
        if fit.is_empty() || held.len() < 2 {
            return Err(Error::Precondition(format!(
                "dataset `{}` has {} fit rows and {} held-out rows",
                self.id,
                fit.len(),
                held.len()
            )));
        }
        Ok((fit, held))
    }

    fn finish(&self, score: ScoreResult) -> Result<ScoreResult> {
        match self.ceiling {
            Some(c) => score.with_ceiling(c),
            None => Ok(score),
        }
    }

    /// Fit on the fit partition and correlate on the held-out partition, or
    /// the by-subject cross-validated mean for fold assignments.
    pub fn score_design(&self, x: &DesignMatrix, opts: &FitOptions) -> Result<ScoreResult> {
        let y = &self.responses;
        let score = match self.assignment.mode() {
            PartitionMode::ThreeWay => {
                let (fit, held) = self.holdout_rows()?;
                let model = fit_linear(x.select_rows(&fit).values(), &gather(y, &fit), opts)?;
                let yhat = predict(&model, x.select_rows(&held).values())?;
                pearson(&yhat, &gather(y, &held))?
            }
            PartitionMode::Cv5BySubject => crossval_by_subject(x, y, &self.assignment, opts)?.score,
        };
        self.finish(score)
    }
}

/// One model variant's score on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantScore {
    pub model_name: String,
    pub family: String,
    pub parameter_count: u64,
    pub training_steps: u64,
    pub dataset_id: String,
    pub pearson_r: Option<f64>,
    pub normalized_r: Option<f64>,
    pub n_heldout: usize,
}

impl VariantScore {
    pub fn new(meta: &ModelMeta, dataset_id: &str, score: ScoreResult) -> Self {
        VariantScore {
            model_name: meta.model_name.clone(),
            family: meta.family.clone(),
            parameter_count: meta.parameter_count,
            training_steps: meta.training_steps,
            dataset_id: dataset_id.to_string(),
            pearson_r: score.pearson_r,
            normalized_r: score.normalized_r,
            n_heldout: score.n,
        }
    }

    pub fn is_undefined(&self) -> bool {
        self.pearson_r.is_none()
    }
}

fn score_bundle(bundle: &VectorBundle, ds: &Dataset, opts: &FitOptions) -> Result<VariantScore> {
    let x = ds.design(bundle)?;
    let score = ds
        .score_design(&x, opts)
        .map_err(|e| e.context(format!("scoring bundle `{}`", bundle.meta().model_name)))?;
    if score.is_undefined() {
        warn!("{}: score is UNDEFINED on {}", bundle.meta().model_name, ds.id);
    } else {
        info!("{}: r = {:?} on {}", bundle.meta().model_name, score.pearson_r, ds.id);
    }
    Ok(VariantScore::new(bundle.meta(), &ds.id, score))
}

/// Scores each bundle on `ds`; results keep the order of `bundles`.
pub fn run_experiment1(bundles: &[VectorBundle], ds: &Dataset, opts: &FitOptions) -> Result<Vec<VariantScore>> {
    bundles.par_iter().map(|b| score_bundle(b, ds, opts)).collect()
}

/// An untrained bundle and its trained counterpart of the same architecture.
pub type BundlePair = (VectorBundle, VectorBundle);

fn check_pair((untrained, trained): &BundlePair) -> Result<()> {
    let (u, t) = (untrained.meta(), trained.meta());
    if u.d_model != t.d_model || u.parameter_count != t.parameter_count {
        return Err(Error::Precondition(format!(
            "bundle pair `{}` / `{}` differs in architecture (d_model {} vs {}, parameters {} vs {})",
            u.model_name, t.model_name, u.d_model, t.d_model, u.parameter_count, t.parameter_count
        )));
    }
    if !u.is_untrained() {
        warn!("`{}` is paired as untrained but has {} training steps", u.model_name, u.training_steps);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment2 {
    pub untrained: Vec<VariantScore>,
    pub trained: Vec<VariantScore>,
}

/// Experiment-1 scoring applied separately to both members of each pair.
pub fn run_experiment2(pairs: &[BundlePair], ds: &Dataset, opts: &FitOptions) -> Result<Experiment2> {
    pairs.iter().try_for_each(check_pair)?;
    let (untrained, trained): (Vec<_>, Vec<_>) = pairs.iter().map(|(u, t)| (u.clone(), t.clone())).unzip();
    Ok(Experiment2 {
        untrained: run_experiment1(&untrained, ds, opts)?,
        trained: run_experiment1(&trained, ds, opts)?,
    })
}

fn residual_split(
    untrained: &DesignMatrix,
    trained: &DesignMatrix,
    y: &[f64],
    fit: &[usize],
    held: &[usize],
    opts: &FitOptions,
) -> Result<ScoreResult> {
    let u_fit = untrained.select_rows(fit);
    let y_fit = gather(y, fit);
    let u_model = fit_linear(u_fit.values(), &y_fit, opts)?;
    let r_fit: Vec<f64> = y_fit.iter().zip(predict(&u_model, u_fit.values())?).map(|(a, b)| a - b).collect();
    let t_model = fit_linear(trained.select_rows(fit).values(), &r_fit, opts)?;

    let u_held = predict(&u_model, untrained.select_rows(held).values())?;
    let r_held: Vec<f64> = gather(y, held).iter().zip(u_held).map(|(a, b)| a - b).collect();
    let t_held = predict(&t_model, trained.select_rows(held).values())?;
    pearson(&t_held, &r_held)
}

/// What the trained design explains beyond its untrained counterpart.
///
/// Fits `U` on the untrained design, fits `T` on the trained design against
/// `U`'s fit-partition residuals, and correlates `T`'s held-out predictions
/// with `U`'s held-out residuals. Under fold assignments the score is
/// averaged the same way as cross-validated scores.
pub fn residual_contribution(
    untrained: &DesignMatrix,
    trained: &DesignMatrix,
    y: &[f64],
    assignment: &PartitionAssignment,
    opts: &FitOptions,
) -> Result<ScoreResult> {
    if untrained.row_keys() != trained.row_keys() {
        return Err(Error::Precondition("untrained and trained designs cover different rows".into()));
    }
    if y.len() != untrained.nrows() || assignment.len() != untrained.nrows() {
        return Err(Error::Precondition(format!(
            "{} design rows, {} responses, {} partition labels",
            untrained.nrows(),
            y.len(),
            assignment.len()
        )));
    }
    match assignment.mode() {
        PartitionMode::ThreeWay => {
            let fit = assignment.indices(Label::Fit);
            let held = assignment.indices(Label::Heldout);
            if fit.is_empty() || held.len() < 2 {
                return Err(Error::Precondition(format!(
                    "{} fit rows and {} held-out rows",
                    fit.len(),
                    held.len()
                )));
            }
            residual_split(untrained, trained, y, &fit, &held, opts)
        }
        PartitionMode::Cv5BySubject => {
            let splits = cv_splits(untrained.row_keys(), assignment)?;
            let summary =
                crossval_with(&splits, |s| residual_split(untrained, trained, y, &s.train, &s.test, opts))?;
            Ok(summary.score)
        }
    }
}

/// Residual-contribution score of each trained bundle over its untrained pair.
pub fn run_experiment3(pairs: &[BundlePair], ds: &Dataset, opts: &FitOptions) -> Result<Vec<VariantScore>> {
    pairs.iter().try_for_each(check_pair)?;
    pairs
        .par_iter()
        .map(|(u, t)| {
            let name = &t.meta().model_name;
            let xu = ds.design(u)?;
            let xt = ds.design(t)?;
            let score = residual_contribution(&xu, &xt, ds.responses(), ds.assignment(), opts)
                .and_then(|s| ds.finish(s))
                .map_err(|e| e.context(format!("residualizing `{name}`")))?;
            if score.is_undefined() {
                warn!("{name}: residual contribution is UNDEFINED (constant predictions)");
            }
            Ok(VariantScore::new(t.meta(), &ds.id, score))
        })
        .collect()
}
