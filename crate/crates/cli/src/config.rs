//! Run configuration, read from a single TOML file.
//!
//! Relative paths are resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use readscale_core::corpus::CorpusKind;
use readscale_core::features::{BoldAggregation, HrfKernel, RegionMode};
use readscale_core::preprocess::{ComprehensionScope, PartitionMode, PreprocessConfig};
use readscale_core::regression::{FitOptions, Solver};
use readscale_core::synth::SynthSpec;
use readscale_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Seeds every random choice of the run: partitions, permutations, synthesis.
    pub seed: u64,
    /// Worker threads; 0 uses one per core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub preprocess: PreprocessSection,
    #[serde(default)]
    pub features: FeaturesSection,
    #[serde(default)]
    pub regression: RegressionSection,
    #[serde(default)]
    pub scaling: ScalingSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bundles: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<PairConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub id: String,
    /// spr | et | fmri | pereira
    pub kind: String,
    pub responses: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comprehension: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixations: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub onsets: Option<PathBuf>,
    /// Fixed partition labels; overrides hashed assignment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessSection {
    pub rt_window_ms: [f64; 2],
    pub max_skip_words: u32,
    pub comprehension_min_correct: u32,
    /// subject | story
    pub comprehension_scope: String,
    pub filter_layout_boundaries: bool,
    /// three_way | cv5; defaults to cv5 for pereira data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partition: Option<String>,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        let d = PreprocessConfig::default();
        PreprocessSection {
            rt_window_ms: [d.rt_window_ms.0, d.rt_window_ms.1],
            max_skip_words: d.max_skip_words,
            comprehension_min_correct: d.comprehension_min_correct,
            comprehension_scope: "subject".into(),
            filter_layout_boundaries: d.filter_layout_boundaries,
            partition: None,
        }
    }
}

impl PreprocessSection {
    pub fn to_core(&self) -> Result<PreprocessConfig> {
        let [lo, hi] = self.rt_window_ms;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Config(format!("rt_window_ms [{lo}, {hi}] is not a valid interval")));
        }
        let scope = match self.comprehension_scope.as_str() {
            "subject" => ComprehensionScope::Subject,
            "story" => ComprehensionScope::Story,
            other => return Err(Error::Config(format!("unknown comprehension_scope `{other}`"))),
        };
        Ok(PreprocessConfig {
            rt_window_ms: (lo, hi),
            max_skip_words: self.max_skip_words,
            comprehension_min_correct: self.comprehension_min_correct,
            comprehension_scope: scope,
            filter_layout_boundaries: self.filter_layout_boundaries,
        })
    }

    pub fn partition_mode(&self, kind: CorpusKind) -> Result<PartitionMode> {
        match &self.partition {
            Some(m) => m.parse(),
            None if kind == CorpusKind::FmriSentence => Ok(PartitionMode::Cv5BySubject),
            None => Ok(PartitionMode::ThreeWay),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HrfSection {
    pub peak_delay: f64,
    pub undershoot_delay: f64,
    pub peak_dispersion: f64,
    pub undershoot_dispersion: f64,
    pub peak_undershoot_ratio: f64,
    pub resolution: f64,
    pub length: f64,
}

impl Default for HrfSection {
    fn default() -> Self {
        let k = HrfKernel::default();
        HrfSection {
            peak_delay: k.peak_delay,
            undershoot_delay: k.undershoot_delay,
            peak_dispersion: k.peak_dispersion,
            undershoot_dispersion: k.undershoot_dispersion,
            peak_undershoot_ratio: k.peak_undershoot_ratio,
            resolution: k.resolution,
            length: k.length,
        }
    }
}

impl HrfSection {
    pub fn kernel(&self) -> Result<HrfKernel> {
        HrfKernel::new(
            self.peak_delay,
            self.undershoot_delay,
            self.peak_dispersion,
            self.undershoot_dispersion,
            self.peak_undershoot_ratio,
            self.resolution,
            self.length,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesSection {
    /// word | sentence_final | hrf; defaults by data kind.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    /// Scan repetition time in seconds.
    pub tr: f64,
    pub bold_aggregation: String,
    pub region_mode: String,
    /// Noise ceiling for normalized scores; defaults to 0.32 for pereira data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ceiling: Option<f64>,
    pub hrf: HrfSection,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        FeaturesSection {
            mode: None,
            tr: 2.0,
            bold_aggregation: "mean".into(),
            region_mode: "aggregate".into(),
            ceiling: None,
            hrf: HrfSection::default(),
        }
    }
}

impl FeaturesSection {
    pub fn aggregation(&self) -> Result<BoldAggregation> {
        self.bold_aggregation.parse()
    }

    pub fn regions(&self) -> Result<RegionMode> {
        self.region_mode.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressionSection {
    pub ridge_lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank_rtol: Option<f64>,
    /// auto | svd | gram
    pub solver: String,
    pub svd_max_elements: usize,
}

impl Default for RegressionSection {
    fn default() -> Self {
        let d = FitOptions::default();
        RegressionSection {
            ridge_lambda: d.ridge_lambda,
            rank_rtol: d.rank_rtol,
            solver: "auto".into(),
            svd_max_elements: d.svd_max_elements,
        }
    }
}

impl RegressionSection {
    pub fn to_core(&self) -> Result<FitOptions> {
        if !(self.ridge_lambda.is_finite() && self.ridge_lambda >= 0.0) {
            return Err(Error::Config(format!("ridge_lambda must be >= 0, got {}", self.ridge_lambda)));
        }
        if let Some(t) = self.rank_rtol {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::Config(format!("rank_rtol must be >= 0, got {t}")));
            }
        }
        Ok(FitOptions {
            ridge_lambda: self.ridge_lambda,
            rank_rtol: self.rank_rtol,
            solver: self.solver.parse::<Solver>()?,
            svd_max_elements: self.svd_max_elements,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingSection {
    pub n_permutations: usize,
    /// Also fit one line per model family.
    pub per_family: bool,
}

impl Default for ScalingSection {
    fn default() -> Self {
        ScalingSection { n_permutations: 1000, per_family: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    pub untrained: PathBuf,
    pub trained: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub n_subjects: usize,
    pub n_docs: usize,
    pub sentences_per_doc: usize,
    pub words_per_sentence: usize,
    pub latent_dim: usize,
    pub noise_sigma: f64,
    pub feature_widths: Vec<usize>,
    pub leak_untrained: f64,
    pub leak_trained: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            n_subjects: 2,
            n_docs: 8,
            sentences_per_doc: 30,
            words_per_sentence: 12,
            latent_dim: 8,
            noise_sigma: 0.5,
            feature_widths: vec![8, 32, 128, 512],
            leak_untrained: 0.3,
            leak_trained: 0.6,
        }
    }
}

impl SynthSection {
    pub fn spec(&self, seed: u64) -> SynthSpec {
        SynthSpec {
            n_subjects: self.n_subjects,
            n_docs: self.n_docs,
            sentences_per_doc: self.sentences_per_doc,
            words_per_sentence: self.words_per_sentence,
            latent_dim: self.latent_dim,
            noise_sigma: self.noise_sigma,
            feature_widths: self.feature_widths.clone(),
            seed,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<(Config, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Config =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    /// Checks every section that can be checked without reading data.
    pub fn validate(&self) -> Result<()> {
        self.preprocess.to_core()?;
        self.regression.to_core()?;
        self.features.aggregation()?;
        self.features.regions()?;
        self.features.hrf.kernel()?;
        if let Some(p) = &self.preprocess.partition {
            p.parse::<PartitionMode>()?;
        }
        if let Some(d) = &self.data {
            d.kind.parse::<CorpusKind>()?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }
}

/// `p` if absolute, else `base/p`.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
