//! End-to-end orchestration: ingest → sample → extract → select → classify.
//!
//! Every stage is exposed on its own so the CLI can persist intermediates
//! and rerun any step; [`run_pipeline`] chains them and always feeds later
//! stages from the persisted feature CSV so that a staged run and a
//! single-shot run see identical inputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{ClassifierConfig, ClassifierKind, KnnConfig, NbConfig, RfConfig};
use crate::corpus::{self, CaseId, Channel, ClassificationCase, SetLabel, SyntheticConfig};
use crate::error::{Error, Result};
use crate::evaluation::{self, CaseResult, CvConfig, CvOutcome, EvaluationReport, SelectionMode};
use crate::features::{self, FeatureConfig, FeatureMatrix};
use crate::sampler::{self, AllocationResult, SamplingConfig, SelectionPolicy, StratificationPlan};
use crate::seed;
use crate::selection::{self, SelectionConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Use the synthetic corpus instead of files on disk.
    pub synthetic: bool,
    /// Corpus root with one sub-directory per set (A..E or Z/O/N/F/S).
    pub root: Option<PathBuf>,
    /// `label = path` mapping file; overrides `root`.
    pub set_config: Option<PathBuf>,
    /// Explicit set directories; override both of the above.
    pub sets: BTreeMap<SetLabel, PathBuf>,
    pub per_set: usize,
    pub length: usize,
    pub burst_amplitude: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let s = SyntheticConfig::default();
        DataConfig {
            synthetic: true,
            root: None,
            set_config: None,
            sets: BTreeMap::new(),
            per_set: s.per_set,
            length: s.length,
            burst_amplitude: s.burst_amplitude,
        }
    }
}

impl DataConfig {
    pub fn synthetic_config(&self) -> SyntheticConfig {
        SyntheticConfig {
            per_set: self.per_set,
            length: self.length,
            burst_amplitude: self.burst_amplitude,
        }
    }

    /// Resolved set directories for file-backed runs.
    pub fn set_dirs(&self) -> Result<BTreeMap<SetLabel, PathBuf>> {
        let mut dirs = match &self.root {
            Some(root) => corpus::discover_set_dirs(root),
            None => BTreeMap::new(),
        };
        if let Some(path) = &self.set_config {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let base = path.parent().unwrap_or(Path::new("."));
            dirs.extend(corpus::parse_set_config(&text, base)?);
        }
        dirs.extend(self.sets.iter().map(|(k, v)| (*k, v.clone())));
        Ok(dirs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub p: f64,
    pub e: f64,
    pub n_strata: usize,
    pub policy: SelectionPolicy,
}

impl Default for SamplingSection {
    fn default() -> Self {
        SamplingSection {
            p: 0.5,
            e: 0.01,
            n_strata: 4,
            policy: SelectionPolicy::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSection {
    pub mode: SelectionMode,
    /// 0 disables the stall limit.
    pub stall_limit: usize,
    pub threshold: f64,
}

impl Default for SelectionSection {
    fn default() -> Self {
        SelectionSection {
            mode: SelectionMode::PerFold,
            stall_limit: 5,
            threshold: 0.8,
        }
    }
}

impl SelectionSection {
    pub fn selection_config(&self) -> SelectionConfig {
        SelectionConfig {
            stall_limit: (self.stall_limit > 0).then_some(self.stall_limit),
            threshold: self.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSection {
    pub folds: usize,
    pub repeats: usize,
    pub stratified: bool,
}

impl Default for CvSection {
    fn default() -> Self {
        let d = CvConfig::default();
        CvSection {
            folds: d.n_folds,
            repeats: d.n_repeats,
            stratified: d.stratified,
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub cases: Vec<CaseId>,
    /// Confidence presets in percent (70, 85, 95, 99).
    pub confidence_levels: Vec<u32>,
    /// Explicit standard normal variate; replaces `confidence_levels`.
    pub z: Option<f64>,
    pub classifiers: Vec<ClassifierKind>,
    pub data: DataConfig,
    pub sampling: SamplingSection,
    pub features: FeatureConfig,
    pub selection: SelectionSection,
    pub knn: KnnConfig,
    pub nb: NbConfig,
    pub rf: RfConfig,
    pub cv: CvSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 1,
            out_dir: None,
            cases: CaseId::ALL.to_vec(),
            confidence_levels: vec![95],
            z: None,
            classifiers: vec![ClassifierKind::Rf],
            data: DataConfig::default(),
            sampling: SamplingSection::default(),
            features: FeatureConfig::default(),
            selection: SelectionSection::default(),
            knn: KnnConfig::default(),
            nb: NbConfig::default(),
            rf: RfConfig::default(),
            cv: CvSection::default(),
        }
    }
}

/// One point of the confidence sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub confidence: Option<u32>,
    pub z: f64,
}

impl Level {
    pub fn label(&self) -> String {
        match self.confidence {
            Some(c) => c.to_string(),
            None => format!("z{}", self.z),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config file; relative data paths resolve against its
    /// directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.data.root.as_mut() {
            fix(p);
        }
        if let Some(p) = cfg.data.set_config.as_mut() {
            fix(p);
        }
        cfg.data.sets.values_mut().for_each(fix);
        Ok(cfg)
    }

    pub fn levels(&self) -> Result<Vec<Level>> {
        if let Some(z) = self.z {
            return Ok(vec![Level { confidence: None, z }]);
        }
        self.confidence_levels
            .iter()
            .map(|&c| {
                sampler::z_for_confidence(c)
                    .map(|z| Level { confidence: Some(c), z })
                    .ok_or_else(|| Error::Config(format!("no z preset for confidence {c}%; use `z`")))
            })
            .collect()
    }

    pub fn classifier_config(&self, kind: ClassifierKind) -> ClassifierConfig {
        match kind {
            ClassifierKind::Knn => ClassifierConfig::Knn(self.knn.clone()),
            ClassifierKind::Nb => ClassifierConfig::Nb(self.nb.clone()),
            ClassifierKind::Rf => ClassifierConfig::Rf(self.rf.clone()),
        }
    }

    pub fn cv_config(&self) -> CvConfig {
        CvConfig {
            n_folds: self.cv.folds,
            n_repeats: self.cv.repeats,
            seed: self.seed,
            stratified: self.cv.stratified,
        }
    }

    pub fn sampling_config(&self, level: &Level, population_size: usize) -> SamplingConfig {
        SamplingConfig {
            z: level.z,
            p: self.sampling.p,
            e: self.sampling.e,
            population_size,
            n_strata: self.sampling.n_strata,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cases.is_empty() {
            return Err(Error::Config("no cases requested".into()));
        }
        if self.classifiers.is_empty() {
            return Err(Error::Config("no classifiers requested".into()));
        }
        let levels = self.levels()?;
        if levels.is_empty() {
            return Err(Error::Config("no confidence levels requested".into()));
        }
        for l in &levels {
            self.sampling_config(l, self.sampling.n_strata.max(1)).validate()?;
        }
        if !(0.0..=1.0).contains(&self.selection.threshold) {
            return Err(Error::Config("selection.threshold must lie in [0, 1]".into()));
        }
        if self.cv.folds < 2 || self.cv.repeats == 0 {
            return Err(Error::Config("cv needs folds >= 2 and repeats >= 1".into()));
        }
        if self.knn.k == 0 {
            return Err(Error::Config("knn.k must be at least 1".into()));
        }
        if self.rf.trees == 0 {
            return Err(Error::Config("rf.trees must be at least 1".into()));
        }
        if self.nb.var_floor.is_nan() || self.nb.var_floor <= 0.0 {
            return Err(Error::Config("nb.var_floor must be positive".into()));
        }
        if !self.data.synthetic && self.data.set_dirs()?.is_empty() {
            return Err(Error::Config("data.synthetic is off but no set directories are configured".into()));
        }
        Ok(())
    }
}

/// Loads (or synthesizes) one classification case.
pub fn ingest(cfg: &PipelineConfig, case_id: CaseId) -> Result<ClassificationCase> {
    if cfg.data.synthetic {
        corpus::synthetic_case(case_id, &cfg.data.synthetic_config(), seed::derive(cfg.seed, &[case_id as u64]))
    } else {
        corpus::build_case(case_id, &cfg.data.set_dirs()?)
    }
}

/// One reduced channel and the stratum layout of its samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedChannel {
    pub id: String,
    pub set_label: SetLabel,
    pub label: u8,
    pub sampling_rate_hz: f64,
    pub strata: Vec<usize>,
    pub samples: Vec<f64>,
}

impl ReducedChannel {
    pub fn channel(&self) -> Channel {
        Channel {
            id: self.id.clone(),
            set_label: self.set_label,
            samples: self.samples.clone(),
            sampling_rate_hz: self.sampling_rate_hz,
        }
    }
}

/// Output of the sampling stage for one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedCase {
    pub case_id: CaseId,
    pub sampling: SamplingConfig,
    pub n_bar: usize,
    pub stratum_sizes: Vec<usize>,
    /// Allocation per class label ("0", "1").
    pub allocations: BTreeMap<String, AllocationResult>,
    pub channels: Vec<ReducedChannel>,
}

/// Stratifies every channel, allocates per class and reduces.
pub fn sample_case(
    case: &ClassificationCase,
    sampling: &SamplingConfig,
    policy: SelectionPolicy,
    base_seed: u64,
) -> Result<ReducedCase> {
    let first = case
        .channels
        .first()
        .ok_or_else(|| Error::Config(format!("{}: no channels", case.case_id)))?;
    let length = first.channel.len();
    if let Some(bad) = case.channels.iter().find(|c| c.channel.len() != length) {
        return Err(Error::Config(format!(
            "{}: channel {} has {} samples, expected {length}",
            case.case_id,
            bad.channel.id,
            bad.channel.len()
        )));
    }
    let sampling = SamplingConfig {
        population_size: length,
        ..sampling.clone()
    };
    let n_bar = sampler::required_sample_size(&sampling)?;
    let plan = sampler::stratify(length, sampling.n_strata)?;
    let mut allocations = BTreeMap::new();
    for label in [0u8, 1] {
        let chans = case.class_channels(label);
        if chans.is_empty() {
            return Err(Error::ClassCount(1));
        }
        let alloc = sampler::allocate(&chans, &plan, n_bar)?;
        log::info!(
            "{} class {label}: n_bar = {n_bar}, per-stratum = {:?}",
            case.case_id,
            alloc.per_stratum
        );
        allocations.insert(label.to_string(), alloc);
    }
    let channels = case
        .channels
        .par_iter()
        .map(|lc| {
            let alloc = &allocations[&lc.label.to_string()];
            let seed = seed::derive_str(base_seed, &lc.channel.id);
            let reduced = sampler::reduce_channel(&lc.channel, &plan, alloc, policy, seed)?;
            Ok(ReducedChannel {
                id: reduced.id,
                set_label: reduced.set_label,
                label: lc.label,
                sampling_rate_hz: reduced.sampling_rate_hz,
                strata: alloc.per_stratum.clone(),
                samples: reduced.samples,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReducedCase {
        case_id: case.case_id,
        sampling,
        n_bar,
        stratum_sizes: plan.sizes(),
        allocations,
        channels,
    })
}

/// Feature matrix of a reduced case, one row per channel in case order.
pub fn extract_case(reduced: &ReducedCase, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    for ch in &reduced.channels {
        cfg.check_plan(&StratificationPlan::from_sizes(&ch.strata))
            .map_err(|e| Error::Config(format!("{}: channel {}: {e}", reduced.case_id, ch.id)))?;
    }
    let vectors = reduced
        .channels
        .par_iter()
        .map(|ch| {
            let plan = StratificationPlan::from_sizes(&ch.strata);
            let mut v = features::extract_vector(&ch.channel(), &plan, cfg)?;
            v.label = ch.label;
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::from_vectors(vectors)
}

/// Passes a matrix through its CSV form, as persisted between stages.
pub fn persisted(fm: &FeatureMatrix) -> Result<FeatureMatrix> {
    FeatureMatrix::from_csv_str(&fm.to_csv_string())
}

/// Cross-validates one classifier and assembles its per-case summary.
pub fn classify(
    fm: &FeatureMatrix,
    case_id: &str,
    classifier: &ClassifierConfig,
    cfg: &PipelineConfig,
) -> Result<CaseResult> {
    let sel = cfg.selection.selection_config();
    let outcome: CvOutcome = evaluation::run_cv(fm, classifier, &cfg.cv_config(), cfg.selection.mode, &sel)?;
    let (selected, cfs_only) = match cfg.selection.mode {
        SelectionMode::None => (None, None),
        _ => (
            Some(selection::select_features(fm, &sel)?),
            Some(selection::select_cfs_only(fm, &sel)?.len()),
        ),
    };
    Ok(CaseResult {
        case_id: case_id.to_string(),
        mean: outcome.mean,
        std: outcome.std,
        weight: fm.n_rows(),
        per_repeat: outcome.per_repeat,
        mean_features: outcome.mean_features,
        selected_features: selected,
        cfs_only_size: cfs_only,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: String,
    pub confidence: Option<u32>,
    pub z: f64,
    /// Corrected total sample size per case.
    pub n_bar: BTreeMap<String, usize>,
    /// case → class label → per-stratum sample counts.
    pub allocations: BTreeMap<String, BTreeMap<String, Vec<usize>>>,
    pub evaluations: Vec<EvaluationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub levels: Vec<LevelReport>,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Runs every requested (level, case, classifier) combination.
///
/// When `out_dir` is set, writes `resolved_config.json`, per-level feature
/// matrices `<level>/<case>.features.csv`, selection reports
/// `<level>/<case>.selection.json` and the report in JSON, table and CSV
/// form.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    let out = cfg.out_dir.as_deref();
    if let Some(dir) = out {
        write_file(&dir.join("resolved_config.json"), to_json(cfg).as_bytes())?;
    }
    let cases = cfg
        .cases
        .iter()
        .map(|&c| ingest(cfg, c))
        .collect::<Result<Vec<_>>>()?;
    let mut levels = Vec::new();
    for level in cfg.levels()? {
        let mut n_bar = BTreeMap::new();
        let mut allocations = BTreeMap::new();
        let mut per_classifier: BTreeMap<ClassifierKind, Vec<CaseResult>> = BTreeMap::new();
        for case in &cases {
            let name = case.case_id.to_string();
            let sampling = cfg.sampling_config(&level, 0);
            let reduced = sample_case(case, &sampling, cfg.sampling.policy, cfg.seed)?;
            log::info!("level {} {name}: n_bar = {}", level.label(), reduced.n_bar);
            n_bar.insert(name.clone(), reduced.n_bar);
            allocations.insert(
                name.clone(),
                reduced
                    .allocations
                    .iter()
                    .map(|(k, a)| (k.clone(), a.per_stratum.clone()))
                    .collect(),
            );
            let csv = extract_case(&reduced, &cfg.features)?.to_csv_string();
            let fm = FeatureMatrix::from_csv_str(&csv)?;
            if let Some(dir) = out {
                let base = dir.join(level.label());
                write_file(&base.join(format!("{name}.features.csv")), csv.as_bytes())?;
            }
            for &kind in &cfg.classifiers {
                let result = classify(&fm, &name, &cfg.classifier_config(kind), cfg)?;
                if let (Some(dir), Some(sel)) = (out, &result.selected_features) {
                    let path = dir.join(level.label()).join(format!("{name}.selection.json"));
                    write_file(&path, to_json(sel).as_bytes())?;
                }
                per_classifier.entry(kind).or_default().push(result);
            }
        }
        let evaluations = cfg
            .classifiers
            .iter()
            .map(|k| EvaluationReport::new(k.as_str(), per_classifier.remove(k).unwrap_or_default()))
            .collect::<Result<Vec<_>>>()?;
        levels.push(LevelReport {
            level: level.label(),
            confidence: level.confidence,
            z: level.z,
            n_bar,
            allocations,
            evaluations,
        });
    }
    let report = PipelineReport { seed: cfg.seed, levels };
    if let Some(dir) = out {
        write_file(&dir.join("report.json"), to_json(&report).as_bytes())?;
        write_file(&dir.join("report.txt"), crate::report::render_table(&report).as_bytes())?;
        write_file(&dir.join("report.csv"), crate::report::render_csv(&report).as_bytes())?;
    }
    Ok(report)
}
