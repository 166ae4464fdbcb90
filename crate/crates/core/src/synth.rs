//! Synthetic corpora, fixation streams, and feature bundles with known
//! ground truth.
//!
//! Every generator is a pure function of its spec and seed. Randomness is
//! split into independent ChaCha8 streams of the one seed:
//! stream 0 draws word latents, stream 1 the true weights, stream `2 + s`
//! the response noise of subject `s`. Bundles use stream 0 for the
//! projection, stream 1 for per-word noise and stream 2 for subword splits.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::corpus::{
    CorpusKind, Flags, ModelMeta, ResponseRecord, ResponseTable, Token, VectorBundle, WordKey,
    FULLY_TRAINED_STEPS,
};
use crate::error::{Error, Result};
use crate::preprocess::FixationRecord;

/// Synthetic responses are stored as reading times `offset + scale * y`.
pub const RESPONSE_OFFSET_MS: f64 = 350.0;
pub const RESPONSE_SCALE_MS: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_subjects: usize,
    pub n_docs: usize,
    pub sentences_per_doc: usize,
    pub words_per_sentence: usize,
    pub latent_dim: usize,
    pub noise_sigma: f64,
    pub feature_widths: Vec<usize>,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_subjects", self.n_subjects),
            ("n_docs", self.n_docs),
            ("sentences_per_doc", self.sentences_per_doc),
            ("words_per_sentence", self.words_per_sentence),
            ("latent_dim", self.latent_dim),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("synth {name} must be positive")));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!("synth noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if self.feature_widths.contains(&0) {
            return Err(Error::Config("synth feature widths must be positive".into()));
        }
        Ok(())
    }

    pub fn n_words(&self) -> usize {
        self.n_docs * self.sentences_per_doc * self.words_per_sentence
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn doc_name(d: usize) -> String {
    format!("doc{d:03}")
}

/// Standard-normal latent vectors, one row per corpus word.
#[derive(Debug, Clone, PartialEq)]
pub struct WordLatents {
    pub keys: Vec<WordKey>,
    pub values: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    /// Self-paced-reading table; responses are `RESPONSE_OFFSET_MS +
    /// RESPONSE_SCALE_MS * y`, floored at 1 ms.
    pub table: ResponseTable,
    /// Latent-unit responses `y`, aligned to table rows.
    pub y: Vec<f64>,
    /// Latent rows aligned to table rows.
    pub latents: DMatrix<f64>,
    pub word_latents: WordLatents,
    pub true_weights: DVector<f64>,
}

fn word_flags(spec: &SynthSpec, s: usize, w: usize) -> Flags {
    let mut f = Flags::empty();
    if w == 0 {
        f |= Flags::SENTENCE_INITIAL;
        if s == 0 {
            f |= Flags::DOC_INITIAL;
        }
    }
    if w + 1 == spec.words_per_sentence {
        f |= Flags::SENTENCE_FINAL;
        if s + 1 == spec.sentences_per_doc {
            f |= Flags::DOC_FINAL;
        }
    }
    f
}

/// Every subject reads every word; `y = latent . true_weights + N(0, sigma^2)`.
/// Latents are shared across subjects, noise is drawn per row. True weights
/// are `N(0, 1/k)`, so the signal variance is about 1.
pub fn gen_latent_regression(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let k = spec.latent_dim;
    let n_words = spec.n_words();
    let mut rng = stream(spec.seed, 0);
    let word_values = DMatrix::from_fn(n_words, k, |_, _| StandardNormal.sample(&mut rng));
    let mut keys = Vec::with_capacity(n_words);
    let mut flags = Vec::with_capacity(n_words);
    for d in 0..spec.n_docs {
        for s in 0..spec.sentences_per_doc {
            for w in 0..spec.words_per_sentence {
                keys.push(WordKey::new(doc_name(d), s as u32, w as u32));
                flags.push(word_flags(spec, s, w));
            }
        }
    }
    let mut rng = stream(spec.seed, 1);
    let wstd = 1.0 / (k as f64).sqrt();
    let true_weights = DVector::from_fn(k, |_, _| wstd * gauss(&mut rng));
    let signal = &word_values * &true_weights;
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;

    let n = n_words * spec.n_subjects;
    let mut records = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut latents = DMatrix::zeros(n, k);
    for subj in 0..spec.n_subjects {
        let mut rng = stream(spec.seed, 2 + subj as u64);
        for (i, key) in keys.iter().enumerate() {
            let yi = signal[i] + noise.sample(&mut rng);
            let row = records.len();
            latents.row_mut(row).copy_from(&word_values.row(i));
            records.push(ResponseRecord {
                subject_id: format!("s{subj:02}"),
                doc_id: key.doc_id.clone(),
                sentence_id: key.sentence_id,
                word_index: key.word_index,
                word_text: format!("w{}_{}", key.sentence_id, key.word_index),
                response: Some((RESPONSE_OFFSET_MS + RESPONSE_SCALE_MS * yi).max(1.0)),
                onset_time: None,
                word_position: None,
                region: None,
                flags: flags[i],
            });
            y.push(yi);
        }
    }
    Ok(SynthData {
        table: ResponseTable::new(CorpusKind::Spr, records)?,
        y,
        latents,
        word_latents: WordLatents { keys, values: word_values },
        true_weights,
    })
}

/// Nominal parameter count for a synthetic width, used as the scaling abscissa.
pub fn nominal_parameters(d: usize) -> u64 {
    12 * (d as u64) * (d as u64)
}

/// Random features for every latent word: `leak * z P + sqrt(1 - leak^2) * noise`
/// with a Gaussian projection `P` (k x d, entries `N(0, 1/k)`) and standard
/// normal noise, so every column has unit variance. About a quarter of the
/// words are emitted as two subword tokens `f + e` and `f - e`.
///
/// Bundles of the same seed share `P` and the noise and differ only in `leak`.
pub fn gen_random_feature_bundle(latents: &WordLatents, d: usize, seed: u64, leak: f64) -> Result<VectorBundle> {
    if d == 0 {
        return Err(Error::Config("feature width must be positive".into()));
    }
    if !(0.0..=1.0).contains(&leak) {
        return Err(Error::Config(format!("signal_leak must lie in [0, 1], got {leak}")));
    }
    let k = latents.values.ncols();
    let mut rng = stream(seed, 0);
    let pstd = 1.0 / (k as f64).sqrt();
    let proj = DMatrix::from_fn(k, d, |_, _| pstd * gauss(&mut rng));
    let signal = &latents.values * proj;
    let mix = (1.0 - leak * leak).max(0.0).sqrt();

    let mut noise_rng = stream(seed, 1);
    let mut split_rng = stream(seed, 2);
    let mut tokens = Vec::new();
    let mut vectors = Vec::new();
    let mut next_index: std::collections::HashMap<&str, u64> = Default::default();
    let mut f = vec![0.0f64; d];
    for (i, key) in latents.keys.iter().enumerate() {
        for (j, fj) in f.iter_mut().enumerate() {
            let eta: f64 = StandardNormal.sample(&mut noise_rng);
            *fj = leak * signal[(i, j)] + mix * eta;
        }
        let split = split_rng.random_bool(0.25);
        let mut emit = |v: &mut dyn Iterator<Item = f32>| {
            let idx = next_index.entry(&key.doc_id).or_insert(0);
            tokens.push(Token { token_index: *idx, word_key: key.clone() });
            *idx += 1;
            vectors.extend(v);
        };
        if split {
            let e: Vec<f64> = (0..d).map(|_| 0.1 * gauss(&mut split_rng)).collect();
            emit(&mut f.iter().zip(&e).map(|(a, b)| (a + b) as f32));
            emit(&mut f.iter().zip(&e).map(|(a, b)| (a - b) as f32));
        } else {
            emit(&mut f.iter().map(|a| *a as f32));
        }
    }
    let meta = ModelMeta {
        model_name: format!("synth-d{d}-leak{leak}-seed{seed}"),
        family: "synth".into(),
        parameter_count: nominal_parameters(d),
        d_model: d,
        n_layers: 1,
        n_heads: 1,
        training_steps: 0,
        init_seed: Some(seed as i64),
    };
    VectorBundle::new(meta, tokens, vectors)
}

/// Untrained and trained analogues of one width: same projection and noise,
/// different signal leak.
pub fn gen_bundle_pair(
    latents: &WordLatents,
    d: usize,
    seed: u64,
    leak_untrained: f64,
    leak_trained: f64,
) -> Result<(VectorBundle, VectorBundle)> {
    let relabel = |b: VectorBundle, name: String, steps: u64| {
        let meta = ModelMeta { model_name: name, training_steps: steps, ..b.meta().clone() };
        b.with_meta(meta)
    };
    let u = gen_random_feature_bundle(latents, d, seed, leak_untrained)?;
    let t = gen_random_feature_bundle(latents, d, seed, leak_trained)?;
    Ok((
        relabel(u, format!("synth-{d}-untrained"), 0)?,
        relabel(t, format!("synth-{d}-trained"), FULLY_TRAINED_STEPS)?,
    ))
}

/// Eye-tracking rows (response not yet attached) and the fixation stream
/// that produces them. Readers mostly step forward one word, sometimes skip
/// one, occasionally regress, and rarely jump five to eight words ahead.
/// Every twelfth word ends a line.
pub fn gen_eye_tracking(spec: &SynthSpec) -> Result<(ResponseTable, Vec<FixationRecord>)> {
    spec.validate()?;
    let words_per_doc = spec.sentences_per_doc * spec.words_per_sentence;
    let mut records = Vec::new();
    let mut fixations = Vec::new();
    for subj in 0..spec.n_subjects {
        let subject_id = format!("s{subj:02}");
        for d in 0..spec.n_docs {
            let doc_id = doc_name(d);
            for s in 0..spec.sentences_per_doc {
                for w in 0..spec.words_per_sentence {
                    let pos = s * spec.words_per_sentence + w;
                    let mut flags = word_flags(spec, s, w);
                    if pos % 12 == 11 {
                        flags |= Flags::LINE_BOUNDARY;
                    }
                    records.push(ResponseRecord {
                        subject_id: subject_id.clone(),
                        doc_id: doc_id.clone(),
                        sentence_id: s as u32,
                        word_index: w as u32,
                        word_text: format!("w{s}_{w}"),
                        response: None,
                        onset_time: None,
                        word_position: Some(pos as u32),
                        region: None,
                        flags,
                    });
                }
            }
            let mut rng = stream(spec.seed, 1000 + (subj * spec.n_docs + d) as u64);
            let mut pos: i64 = 0;
            let mut seq = 0u64;
            while (pos as usize) < words_per_doc {
                fixations.push(FixationRecord {
                    subject_id: subject_id.clone(),
                    doc_id: doc_id.clone(),
                    word_position: pos as u32,
                    duration: (rng.random_range(120.0..320.0f64)).round(),
                    sequence_index: seq,
                });
                seq += 1;
                let u: f64 = rng.random();
                let step = if u < 0.70 {
                    1
                } else if u < 0.85 {
                    2
                } else if u < 0.95 {
                    -rng.random_range(1..=2)
                } else {
                    rng.random_range(5..=8)
                };
                pos = (pos + step).max(0);
            }
        }
    }
    Ok((ResponseTable::new(CorpusKind::EyeTracking, records)?, fixations))
}

/// Writes a comprehension-score file with `correct` answers for each subject.
pub fn write_comprehension(subjects: &[(String, u32)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("subject_id\tcorrect\n");
    for (s, c) in subjects {
        out.push_str(&format!("{s}\t{c}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes fixations in the layout [`crate::preprocess::read_fixations`] expects.
pub fn write_fixations(fixations: &[FixationRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "subject_id\tdoc_id\tword_position\tduration\tsequence_index")?;
        for f in fixations {
            writeln!(w, "{}\t{}\t{}\t{}\t{}", f.subject_id, f.doc_id, f.word_position, f.duration, f.sequence_index)?;
        }
        w.flush()
    };
    body().map_err(|e| Error::io(path, e))
}
