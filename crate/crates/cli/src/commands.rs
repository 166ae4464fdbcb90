use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use log::{info, warn};

use readscale_core::corpus::{
    read_response_table, read_vector_bundle, write_response_table, write_vector_bundle, CorpusKind,
    ResponseTable, VectorBundle,
};
use readscale_core::experiments::{
    render_scaling_svg, run_experiment1, run_experiment2, run_experiment3, scaling_by_family, scaling_report,
    write_plot_data, write_scaling_summary, write_scores, BundlePair, Dataset, FeatureMode, ScalingReport,
    VariantScore,
};
use readscale_core::features::{aggregate_regions, read_word_onsets, RegionMode};
use readscale_core::preprocess::{
    compute_go_past, filter_et, filter_spr, partition, read_comprehension_scores, read_fixations,
    read_partition_file, ExclusionAudit, PartitionAssignment,
};
use readscale_core::regression::PEREIRA_CEILING;
use readscale_core::synth::{gen_bundle_pair, gen_latent_regression, write_comprehension};
use readscale_core::{Error, Result};

use crate::config::{resolve, Config, DataConfig, PairConfig};

/// A loaded config plus where it came from and where outputs go.
pub struct Run {
    pub cfg: Config,
    pub base: PathBuf,
    pub out: PathBuf,
}

impl Run {
    fn path(&self, p: &Path) -> PathBuf {
        resolve(&self.base, p)
    }

    fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let path = self.out.join(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }

    /// Records the effective configuration next to the outputs.
    fn write_config(&self) -> Result<()> {
        self.write("run_config.toml", self.cfg.to_toml()?)
    }

    fn data(&self) -> Result<&DataConfig> {
        self.cfg
            .data
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a [data] section".into()))
    }

    fn load_bundle(&self, p: &Path) -> Result<VectorBundle> {
        let path = self.path(p);
        read_vector_bundle(&path).map_err(|e| e.context(format!("loading bundle {}", path.display())))
    }

    fn bundles(&self) -> Result<Vec<VectorBundle>> {
        self.cfg.bundles.iter().map(|p| self.load_bundle(p)).collect()
    }

    fn pairs(&self) -> Result<Vec<BundlePair>> {
        self.cfg
            .pairs
            .iter()
            .map(|PairConfig { untrained, trained }| Ok((self.load_bundle(untrained)?, self.load_bundle(trained)?)))
            .collect()
    }
}

struct Prepared {
    table: ResponseTable,
    audit: ExclusionAudit,
    assignment: PartitionAssignment,
}

fn check_scan_grid(table: &ResponseTable, tr: f64) {
    let mut per_doc: std::collections::BTreeMap<&str, Vec<f64>> = Default::default();
    for r in table.records() {
        if let Some(t) = r.onset_time {
            per_doc.entry(&r.doc_id).or_default().push(t);
        }
    }
    for (doc, mut times) in per_doc {
        times.sort_by(f64::total_cmp);
        times.dedup();
        let off_grid = times.windows(2).any(|w| {
            let steps = (w[1] - w[0]) / tr;
            (steps - steps.round()).abs() > 1e-6
        });
        if off_grid {
            warn!("scan times of `{doc}` are not spaced by multiples of TR = {tr} s");
        }
    }
}

fn prepare(run: &Run) -> Result<Prepared> {
    let data = run.data()?;
    let kind: CorpusKind = data.kind.parse()?;
    let pre = run.cfg.preprocess.to_core()?;
    let raw = read_response_table(run.path(&data.responses), kind)?;
    let need = |p: &Option<PathBuf>, what: &str| {
        p.as_ref()
            .map(|p| run.path(p))
            .ok_or_else(|| Error::Config(format!("{kind} data needs `data.{what}`")))
    };
    let (table, audit) = match kind {
        CorpusKind::Spr => {
            let scores = read_comprehension_scores(need(&data.comprehension, "comprehension")?)?;
            filter_spr(&raw, &scores, &pre)?
        }
        CorpusKind::EyeTracking => {
            let fixations = read_fixations(need(&data.fixations, "fixations")?)?;
            filter_et(&raw, &compute_go_past(&fixations)?, &pre)?
        }
        CorpusKind::FmriTimeSeries | CorpusKind::FmriSentence => {
            let rows_in = raw.len();
            let table = match run.cfg.features.regions()? {
                RegionMode::Aggregate => aggregate_regions(&raw, run.cfg.features.aggregation()?)?,
                RegionMode::Stacked => raw,
            };
            if kind == CorpusKind::FmriTimeSeries {
                check_scan_grid(&table, run.cfg.features.tr);
            }
            let audit = ExclusionAudit {
                rows_in,
                retained: table.len(),
                by_rule: vec![("region_aggregation", rows_in - table.len())],
            };
            (table, audit)
        }
    };
    if table.is_empty() {
        return Err(Error::Precondition("no rows survive preprocessing".into()));
    }
    let assignment = match &data.partition_file {
        Some(p) => read_partition_file(run.path(p))?.assign(&table)?,
        None => partition(&table, run.cfg.preprocess.partition_mode(kind)?, run.cfg.seed)?,
    };
    info!("{}: {} of {} rows retained", data.id, audit.retained, audit.rows_in);
    Ok(Prepared { table, audit, assignment })
}

fn dataset(run: &Run) -> Result<Dataset> {
    let data = run.data()?;
    let kind: CorpusKind = data.kind.parse()?;
    let feats = &run.cfg.features;
    let mode = match feats.mode.as_deref() {
        Some(m) => m.to_string(),
        None => match kind {
            CorpusKind::FmriTimeSeries => "hrf".into(),
            CorpusKind::FmriSentence => "sentence_final".into(),
            _ => "word".into(),
        },
    };
    let features = match mode.as_str() {
        "word" => FeatureMode::Word,
        "sentence_final" => FeatureMode::SentenceFinal,
        "hrf" => {
            let onsets = data
                .onsets
                .as_ref()
                .ok_or_else(|| Error::Config("hrf features need `data.onsets`".into()))?;
            FeatureMode::Hrf { kernel: feats.hrf.kernel()?, onsets: read_word_onsets(run.path(onsets))? }
        }
        other => return Err(Error::Config(format!("unknown feature mode `{other}`"))),
    };
    let ceiling = feats.ceiling.or((kind == CorpusKind::FmriSentence).then_some(PEREIRA_CEILING));
    let p = prepare(run)?;
    Dataset::new(data.id.clone(), p.table, p.assignment, features, ceiling)
}

fn format_audit(audit: &ExclusionAudit) -> String {
    let mut s = format!("rows_in: {}\n", audit.rows_in);
    for (rule, n) in &audit.by_rule {
        s.push_str(&format!("{rule}: {n}\n"));
    }
    s.push_str(&format!("retained: {}\n", audit.retained));
    s
}

fn scores_tsv(scores: &[VariantScore]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_scores(scores, &mut out).map_err(|e| Error::io("<scores>", e))?;
    Ok(out)
}

fn require_bundles(run: &Run, pairs_only: bool) -> Result<()> {
    let none = if pairs_only { run.cfg.pairs.is_empty() } else { run.cfg.bundles.is_empty() && run.cfg.pairs.is_empty() };
    if none {
        let what = if pairs_only { "`[[pairs]]`" } else { "`bundles` or `[[pairs]]`" };
        return Err(Error::Config(format!("no vector bundles configured; list them under {what}")));
    }
    Ok(())
}

pub fn preprocess(run: &Run) -> Result<()> {
    let p = prepare(run)?;
    run.write_config()?;
    run.write("audit.log", format_audit(&p.audit))?;
    let path = run.out.join("responses.tsv");
    write_response_table(&p.table, &path)?;

    let mut seen = BTreeSet::new();
    let mut labels = String::from("subject_id\tdoc_id\tsentence_id\tlabel\n");
    for (r, label) in p.table.records().iter().zip(p.assignment.labels()) {
        if seen.insert((r.subject_id.as_str(), r.doc_id.as_str(), r.sentence_id)) {
            labels.push_str(&format!("{}\t{}\t{}\t{label}\n", r.subject_id, r.doc_id, r.sentence_id));
        }
    }
    run.write("partition.tsv", labels)
}

pub fn evaluate(run: &Run) -> Result<()> {
    require_bundles(run, false)?;
    let ds = dataset(run)?;
    let opts = run.cfg.regression.to_core()?;
    let mut scores = run_experiment1(&run.bundles()?, &ds, &opts)?;
    let pairs = run.pairs()?;
    if !pairs.is_empty() {
        let e2 = run_experiment2(&pairs, &ds, &opts)?;
        scores.extend(e2.untrained);
        scores.extend(e2.trained);
    }
    run.write_config()?;
    run.write("scores.tsv", scores_tsv(&scores)?)
}

pub fn residualize(run: &Run) -> Result<()> {
    require_bundles(run, true)?;
    let ds = dataset(run)?;
    let opts = run.cfg.regression.to_core()?;
    let scores = run_experiment3(&run.pairs()?, &ds, &opts)?;
    run.write_config()?;
    run.write("residual_scores.tsv", scores_tsv(&scores)?)
}

pub fn scaling(run: &Run) -> Result<()> {
    require_bundles(run, false)?;
    let ds = dataset(run)?;
    let opts = run.cfg.regression.to_core()?;
    let (n_perm, seed) = (run.cfg.scaling.n_permutations, run.cfg.seed);

    let mut groups: Vec<(String, Vec<VariantScore>)> = Vec::new();
    let bundles = run.bundles()?;
    if !bundles.is_empty() {
        groups.push(("bundles".into(), run_experiment1(&bundles, &ds, &opts)?));
    }
    let pairs = run.pairs()?;
    let mut residual = Vec::new();
    if !pairs.is_empty() {
        let e2 = run_experiment2(&pairs, &ds, &opts)?;
        groups.push(("untrained".into(), e2.untrained));
        groups.push(("trained".into(), e2.trained));
        residual = run_experiment3(&pairs, &ds, &opts)?;
    }
    let all: Vec<VariantScore> = groups.iter().flat_map(|(_, s)| s.iter().cloned()).collect();

    let mut reports: Vec<(String, ScalingReport)> = Vec::new();
    let residual_group = (!residual.is_empty()).then(|| ("residualized".to_string(), residual.clone()));
    for (name, pts) in groups.iter().chain(residual_group.iter()) {
        match scaling_report(pts.clone(), n_perm, seed) {
            Ok(r) => reports.push((name.clone(), r)),
            Err(e @ Error::Precondition(_)) => warn!("skipping scaling fit `{name}`: {e}"),
            Err(e) => return Err(e),
        }
        if run.cfg.scaling.per_family {
            for (family, r) in scaling_by_family(pts, n_perm, seed)? {
                reports.push((format!("{name}:{family}"), r));
            }
        }
    }
    if reports.is_empty() {
        return Err(Error::Precondition(
            "no analysis has three defined scores at two or more model sizes".into(),
        ));
    }

    let refs: Vec<(&str, &ScalingReport)> = reports.iter().map(|(n, r)| (n.as_str(), r)).collect();
    let mut summary = Vec::new();
    write_scaling_summary(&refs, &mut summary).map_err(|e| Error::io("<summary>", e))?;
    let mut points = Vec::new();
    write_plot_data(&refs, &mut points).map_err(|e| Error::io("<points>", e))?;
    let svg = render_scaling_svg(&refs, &format!("Predictive power vs. model size: {}", ds.id));

    run.write_config()?;
    run.write("scores.tsv", scores_tsv(&all)?)?;
    if !residual.is_empty() {
        run.write("residual_scores.tsv", scores_tsv(&residual)?)?;
    }
    run.write("scaling_summary.tsv", summary)?;
    run.write("scaling_points.tsv", points)?;
    run.write("scaling.svg", svg)
}

/// Writes a synthetic corpus, bundle pairs for each width, and a ready-to-run
/// `pipeline.toml` referencing them. Width `d` uses bundle seed `seed + d`.
pub fn synth(run: &Run) -> Result<()> {
    let section = run.cfg.synth.clone().unwrap_or_default();
    let spec = section.spec(run.cfg.seed);
    if spec.feature_widths.is_empty() {
        return Err(Error::Config("synth.feature_widths is empty".into()));
    }
    let data = gen_latent_regression(&spec)?;
    std::fs::create_dir_all(&run.out).map_err(|e| Error::io(&run.out, e))?;
    write_response_table(&data.table, run.out.join("responses.tsv"))?;
    let subjects: Vec<(String, u32)> = data.table.subjects().into_iter().map(|s| (s, 6)).collect();
    write_comprehension(&subjects, run.out.join("comprehension.tsv"))?;

    let mut pairs = Vec::new();
    for &d in &spec.feature_widths {
        let (u, t) =
            gen_bundle_pair(&data.word_latents, d, run.cfg.seed + d as u64, section.leak_untrained, section.leak_trained)?;
        let names = (format!("bundles/synth-{d}-untrained.rsvb"), format!("bundles/synth-{d}-trained.rsvb"));
        std::fs::create_dir_all(run.out.join("bundles")).map_err(|e| Error::io(run.out.join("bundles"), e))?;
        write_vector_bundle(&u, run.out.join(&names.0))?;
        write_vector_bundle(&t, run.out.join(&names.1))?;
        pairs.push(PairConfig { untrained: names.0.into(), trained: names.1.into() });
    }

    let pipeline = Config {
        seed: run.cfg.seed,
        workers: 0,
        output_dir: Some("results".into()),
        data: Some(DataConfig {
            id: "synthetic".into(),
            kind: "spr".into(),
            responses: "responses.tsv".into(),
            comprehension: Some("comprehension.tsv".into()),
            fixations: None,
            onsets: None,
            partition_file: None,
        }),
        preprocess: run.cfg.preprocess.clone(),
        features: run.cfg.features.clone(),
        regression: run.cfg.regression.clone(),
        scaling: run.cfg.scaling.clone(),
        bundles: Vec::new(),
        pairs,
        synth: None,
    };
    run.write("pipeline.toml", pipeline.to_toml()?)?;
    run.write_config()
}
