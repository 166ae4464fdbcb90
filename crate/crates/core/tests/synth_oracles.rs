use readscale_core::experiments::{Dataset, FeatureMode};
use readscale_core::features::DesignMatrix;
use readscale_core::preprocess::{partition, PartitionMode};
use readscale_core::synth::{gen_latent_regression, gen_random_feature_bundle, SynthSpec, RESPONSE_OFFSET_MS, RESPONSE_SCALE_MS};
use readscale_core::regression::FitOptions;

fn spec(seed: u64, k: usize, sigma: f64, docs: usize) -> SynthSpec {
    SynthSpec {
        n_subjects: 1,
        n_docs: docs,
        sentences_per_doc: 50,
        words_per_sentence: 10,
        latent_dim: k,
        noise_sigma: sigma,
        feature_widths: vec![],
        seed,
    }
}

#[test]
fn held_out_r_matches_signal_to_noise_oracle() {
    let data = gen_latent_regression(&spec(31, 4, 1.0, 10)).unwrap();
    assert_eq!(data.table.len(), 5000);
    let asg = partition(&data.table, PartitionMode::ThreeWay, 31).unwrap();
    let ds = Dataset::new("snr", data.table.clone(), asg, FeatureMode::Word, None).unwrap();
    let keys = data.table.records().iter().map(|r| r.row_key()).collect();
    let x = DesignMatrix::new(data.latents.clone(), keys).unwrap();
    let r = ds.score_design(&x, &FitOptions::default()).unwrap().pearson_r.unwrap();
    let var_signal = data.true_weights.norm_squared();
    let oracle = (var_signal / (var_signal + 1.0)).sqrt();
    assert!((r - oracle).abs() < 0.05, "r {r} vs oracle {oracle}");
}

#[test]
fn responses_follow_the_millisecond_mapping() {
    let data = gen_latent_regression(&spec(32, 4, 0.5, 1)).unwrap();
    for (rec, y) in data.table.records().iter().zip(&data.y) {
        let want = (RESPONSE_OFFSET_MS + RESPONSE_SCALE_MS * y).max(1.0);
        assert_eq!(rec.response, Some(want));
    }
}

#[test]
fn zero_leak_single_feature_is_null() {
    let data = gen_latent_regression(&spec(33, 4, 0.5, 10)).unwrap();
    let asg = partition(&data.table, PartitionMode::ThreeWay, 33).unwrap();
    let ds = Dataset::new("null", data.table.clone(), asg, FeatureMode::Word, None).unwrap();
    let b = gen_random_feature_bundle(&data.word_latents, 1, 5, 0.0).unwrap();
    let s = ds.score_design(&ds.design(&b).unwrap(), &FitOptions::default()).unwrap();
    assert!(s.pearson_r.unwrap().abs() < 3.0 / (s.n as f64).sqrt(), "{s:?}");
}

#[test]
fn full_leak_noiseless_recovers_signal() {
    let data = gen_latent_regression(&spec(34, 4, 0.0, 4)).unwrap();
    let asg = partition(&data.table, PartitionMode::ThreeWay, 34).unwrap();
    let ds = Dataset::new("clean", data.table.clone(), asg, FeatureMode::Word, None).unwrap();
    for d in [4, 12, 48] {
        let b = gen_random_feature_bundle(&data.word_latents, d, d as u64, 1.0).unwrap();
        let r = ds.score_design(&ds.design(&b).unwrap(), &FitOptions::default()).unwrap().pearson_r.unwrap();
        assert!((1.0 - r) < 1e-3, "d={d}: r={r}");
    }
}
