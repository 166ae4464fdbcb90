use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use readscale_core::experiments::{
    residual_contribution, run_experiment1, run_experiment2, run_experiment3, scaling_report, Dataset, FeatureMode,
};
use readscale_core::features::DesignMatrix;
use readscale_core::preprocess::{partition, Label, PartitionMode};
use readscale_core::regression::{crossval_by_subject, fit_linear, predict, FitOptions};
use readscale_core::synth::{gen_bundle_pair, gen_latent_regression, gen_random_feature_bundle, SynthData, SynthSpec};
use readscale_core::ErrorClass;

fn spec(seed: u64, subjects: usize, docs: usize, sigma: f64) -> SynthSpec {
    SynthSpec {
        n_subjects: subjects,
        n_docs: docs,
        sentences_per_doc: 10,
        words_per_sentence: 10,
        latent_dim: 8,
        noise_sigma: sigma,
        feature_widths: vec![],
        seed,
    }
}

fn dataset(data: &SynthData, mode: PartitionMode, seed: u64) -> Dataset {
    let asg = partition(&data.table, mode, seed).unwrap();
    Dataset::new("synth", data.table.clone(), asg, FeatureMode::Word, None).unwrap()
}

fn latent_design(data: &SynthData) -> DesignMatrix {
    let keys = data.table.records().iter().map(|r| r.row_key()).collect();
    DesignMatrix::new(data.latents.clone(), keys).unwrap()
}

#[test]
fn perfect_signal_scores_near_one() {
    let data = gen_latent_regression(&spec(1, 1, 10, 0.0)).unwrap();
    let ds = dataset(&data, PartitionMode::ThreeWay, 1);
    let bundles: Vec<_> = [8, 16, 64]
        .iter()
        .map(|&d| gen_random_feature_bundle(&data.word_latents, d, 40 + d as u64, 1.0).unwrap())
        .collect();
    let scores = run_experiment1(&bundles, &ds, &FitOptions::default()).unwrap();
    assert_eq!(scores.len(), 3);
    for (s, b) in scores.iter().zip(&bundles) {
        assert_eq!(s.model_name, b.meta().model_name);
        let r = s.pearson_r.unwrap();
        assert!(r > 0.999, "{}: r = {r}", s.model_name);
        assert!(s.n_heldout > 0);
    }
}

#[test]
fn experiment2_identical_bundles_score_identically() {
    let data = gen_latent_regression(&spec(2, 1, 6, 0.5)).unwrap();
    let ds = dataset(&data, PartitionMode::ThreeWay, 2);
    let (u, t) = gen_bundle_pair(&data.word_latents, 16, 9, 0.3, 0.3).unwrap();
    let out = run_experiment2(&[(u, t)], &ds, &FitOptions::default()).unwrap();
    assert_eq!(out.untrained[0].pearson_r, out.trained[0].pearson_r);
    assert_eq!(out.untrained[0].training_steps, 0);
    assert_eq!(out.trained[0].training_steps, 143_000);
}

#[test]
fn experiment2_rejects_mismatched_pairs() {
    let data = gen_latent_regression(&spec(3, 1, 2, 0.5)).unwrap();
    let ds = dataset(&data, PartitionMode::ThreeWay, 3);
    let u = gen_random_feature_bundle(&data.word_latents, 8, 1, 0.0).unwrap();
    let t = gen_random_feature_bundle(&data.word_latents, 16, 1, 0.5).unwrap();
    let e = run_experiment2(&[(u, t)], &ds, &FitOptions::default()).unwrap_err();
    assert_eq!(e.class(), ErrorClass::Data);
    assert!(e.to_string().contains("d_model"), "{e}");
}

#[test]
fn alignment_failure_names_the_bundle() {
    let data = gen_latent_regression(&spec(4, 1, 2, 0.5)).unwrap();
    let other = gen_latent_regression(&spec(4, 1, 1, 0.5)).unwrap();
    let ds = dataset(&data, PartitionMode::ThreeWay, 4);
    let b = gen_random_feature_bundle(&other.word_latents, 8, 1, 0.0).unwrap();
    let e = run_experiment1(&[b.clone()], &ds, &FitOptions::default()).unwrap_err();
    assert!(e.to_string().contains(&b.meta().model_name), "{e}");
}

#[test]
fn crossval_perfect_fit() {
    let data = gen_latent_regression(&spec(5, 3, 2, 0.0)).unwrap();
    let x = latent_design(&data);
    let asg = partition(&data.table, PartitionMode::Cv5BySubject, 5).unwrap();
    let cv = crossval_by_subject(&x, &data.y, &asg, &FitOptions::default()).unwrap();
    assert!((cv.score.pearson_r.unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(cv.folds.len(), 15);
    assert_eq!(cv.undefined_folds, 0);
}

#[test]
fn crossval_null_is_near_zero() {
    let data = gen_latent_regression(&spec(6, 10, 1, 1.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let noise = DMatrix::from_fn(data.table.len(), 1, |_, _| rng.sample(StandardNormal));
    let keys = data.table.records().iter().map(|r| r.row_key()).collect();
    let x = DesignMatrix::new(noise, keys).unwrap();
    let asg = partition(&data.table, PartitionMode::Cv5BySubject, 6).unwrap();
    let cv = crossval_by_subject(&x, &data.y, &asg, &FitOptions::default()).unwrap();
    let r = cv.score.pearson_r.unwrap();
    assert!(r.abs() < 0.1, "mean r = {r}");
}

#[test]
fn experiment3_fit_residuals_orthogonal_to_untrained_design() {
    let data = gen_latent_regression(&spec(7, 1, 4, 0.5)).unwrap();
    let ds = dataset(&data, PartitionMode::ThreeWay, 7);
    let u = gen_random_feature_bundle(&data.word_latents, 24, 3, 0.3).unwrap();
    let xu = ds.design(&u).unwrap();
    let fit = ds.assignment().indices(Label::Fit);
    let xf = xu.select_rows(&fit);
    let yf: Vec<f64> = fit.iter().map(|&i| ds.responses()[i]).collect();
    let m = fit_linear(xf.values(), &yf, &FitOptions::default()).unwrap();
    let res: Vec<f64> = yf.iter().zip(predict(&m, xf.values()).unwrap()).map(|(a, b)| a - b).collect();
    let r = nalgebra::DVector::from_vec(res);
    let dots = xf.values().transpose() * &r;
    assert!(dots.amax() < 1e-7 * xf.values().norm() * r.norm());
    assert!(r.mean().abs() < 1e-9 * r.norm());
}

#[test]
fn experiment3_sign_property() {
    let opts = FitOptions::default();
    let (mut sig, mut null) = (Vec::new(), Vec::new());
    for s in 0..20u64 {
        let data = gen_latent_regression(&spec(100 + s, 1, 4, 0.5)).unwrap();
        let ds = dataset(&data, PartitionMode::ThreeWay, s);
        let xu = ds.design(&gen_random_feature_bundle(&data.word_latents, 8, s, 0.0).unwrap()).unwrap();
        let xn = ds.design(&gen_random_feature_bundle(&data.word_latents, 8, 1000 + s, 0.0).unwrap()).unwrap();
        let signal = DMatrix::from_column_slice(xu.nrows(), 1, (&data.latents * &data.true_weights).as_slice());
        let xs = xu.hstack(&DesignMatrix::new(signal, xu.row_keys().to_vec()).unwrap()).unwrap();
        let score = |t: &DesignMatrix| {
            residual_contribution(&xu, t, ds.responses(), ds.assignment(), &opts).unwrap().pearson_r.unwrap()
        };
        sig.push(score(&xs));
        null.push(score(&xn));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let se = |v: &[f64]| {
        let m = mean(v);
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64 / v.len() as f64).sqrt()
    };
    assert!(mean(&sig) > 0.5, "signal mean {}", mean(&sig));
    assert!(mean(&null).abs() < 3.0 * se(&null), "null mean {} se {}", mean(&null), se(&null));
}

#[test]
fn experiment3_identical_pair_is_undefined_under_cv() {
    let data = gen_latent_regression(&spec(8, 2, 2, 0.5)).unwrap();
    let ds = dataset(&data, PartitionMode::Cv5BySubject, 8);
    let (u, _) = gen_bundle_pair(&data.word_latents, 16, 2, 0.3, 0.6).unwrap();
    let t = u.clone().with_meta(readscale_core::corpus::ModelMeta { training_steps: 143_000, ..u.meta().clone() });
    let out = run_experiment3(&[(u, t.unwrap())], &ds, &FitOptions::default()).unwrap();
    assert!(out[0].is_undefined());
}

#[test]
fn scaling_report_excludes_undefined_points() {
    let data = gen_latent_regression(&spec(9, 1, 4, 0.5)).unwrap();
    let ds = dataset(&data, PartitionMode::ThreeWay, 9);
    let bundles: Vec<_> = [4, 16, 64]
        .iter()
        .map(|&d| gen_random_feature_bundle(&data.word_latents, d, d as u64, 0.3).unwrap())
        .collect();
    let mut scores = run_experiment1(&bundles, &ds, &FitOptions::default()).unwrap();
    let mut undefined = scores[0].clone();
    undefined.pearson_r = None;
    undefined.parameter_count = 5;
    scores.push(undefined);
    let rep = scaling_report(scores, 200, 1).unwrap();
    assert_eq!(rep.n_undefined, 1);
    assert_eq!(rep.xy().len(), 3);
    assert!(rep.slope.is_finite());
    assert!(rep.p_positive > 0.0 && rep.p_negative > 0.0);
}
