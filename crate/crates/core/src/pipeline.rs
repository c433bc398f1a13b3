//! End-to-end experiment: generate datasets, score the MTR methods on each,
//! extract meta-features, evaluate recommenders at the meta level and write
//! the report.
//!
//! Every stage reads its inputs from and writes its outputs to one run
//! directory, so any stage can be re-run alone. All randomness is derived
//! from the manifest's master seed and all numbers are written in shortest
//! round-trip form, so a run is byte-reproducible.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{fmt_f64, load_csv, save_csv, split_stratified, Dataset};
use crate::error::{Error, Result};
use crate::generator::{generate_grid, GridSpec};
use crate::metafeatures::{extract_all_with, ExtractionConfig, META_FEATURE_NAMES};
use crate::metalearn::{
    class_counts, fit_forest, oob_permutation_importance, ForestConfig, ImportanceReport, LearnerSpec, MetaDataset,
    MetaLearner,
};
use crate::methods::{cv_evaluate_all, MtrConfig, MtrMethodId};
use crate::rng::{derive_seed, derive_seed_str, PRNG_NAME};
use crate::stats::{
    average_ranks, classification_metrics, connected_pairs, friedman_test, nemenyi_cd, ConfusionMatrix,
    FriedmanResult, MetricSet,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATASET_DIR: &str = "datasets";
pub const DATASET_INDEX: &str = "datasets.csv";
pub const BASE_RESULTS: &str = "base_results.csv";
pub const META_LABELS: &str = "meta_labels.csv";
pub const LABEL_DISTRIBUTION: &str = "label_distribution.csv";
pub const EXCLUDED: &str = "excluded.csv";
pub const META_FEATURES: &str = "meta_features.csv";
pub const EXTRACTION_LOG: &str = "extraction_log.csv";
pub const EVAL_REPORT: &str = "eval_report.json";
pub const MODEL_DIR: &str = "models";
pub const METRICS: &str = "metrics.csv";
pub const CD_ANALYSIS: &str = "cd_analysis.json";
pub const IMPORTANCE: &str = "importance.csv";
pub const SUMMARY: &str = "summary.md";

pub const TRUTH: &str = "Truth";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub prng: String,
    pub master_seed: u64,
    /// Absent when the datasets were supplied rather than generated.
    pub grid: Option<GridSpec>,
    pub mtr: MtrConfig,
    pub base_folds: usize,
    pub meta_folds: usize,
    pub learners: Vec<LearnerSpec>,
    pub alpha: f64,
    pub extraction: ExtractionConfig,
    /// Largest fraction of datasets the base level may drop before the run aborts.
    pub max_excluded_fraction: f64,
    /// Stage name -> artifacts it wrote, relative to the run directory.
    pub artifacts: BTreeMap<String, Vec<String>>,
}

impl RunManifest {
    pub fn new(master_seed: u64, grid: Option<GridSpec>) -> Self {
        RunManifest {
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            prng: PRNG_NAME.to_string(),
            master_seed,
            grid,
            mtr: MtrConfig::default(),
            base_folds: 10,
            meta_folds: 10,
            learners: vec![LearnerSpec::Rf(ForestConfig::default()), LearnerSpec::Nb],
            alpha: 0.05,
            extraction: ExtractionConfig::default(),
            max_excluded_fraction: 0.05,
            artifacts: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.prng != PRNG_NAME {
            return Err(Error::InvalidConfig(format!(
                "manifest was produced with PRNG {:?}, this build provides {PRNG_NAME:?}",
                self.prng
            )));
        }
        self.mtr.base.validate()?;
        if self.mtr.n_chains == 0 {
            return Err(Error::InvalidConfig("n_chains must be at least 1".into()));
        }
        if self.base_folds < 2 || self.meta_folds < 2 {
            return Err(Error::InvalidConfig("fold counts must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.max_excluded_fraction) {
            return Err(Error::InvalidConfig("max_excluded_fraction must lie in [0, 1]".into()));
        }
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        crate::stats::nemenyi_q(2, self.alpha)?;
        Ok(())
    }

    fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed_str(self.master_seed, stage)
    }

    fn record(&mut self, stage: &str, files: &[&str]) {
        self.artifacts
            .insert(stage.to_string(), files.iter().map(|f| f.to_string()).collect());
    }
}

pub fn load_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    m.validate()?;
    Ok(m)
}

pub fn save_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    write_text(&dir.join(MANIFEST_FILE), &text)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::from(e).context(path.display().to_string()))
}

fn write_csv_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Header and rows of a CSV file, as strings.
fn read_csv_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok((header, rows))
}

fn column(header: &[String], name: &str, path: &Path) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::InvalidDataset(format!("{} has no column {name:?}", path.display())))
}

fn parse_f64(s: &str, row: usize, column: usize) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse { row, column, value: s.to_string() })?;
    if !v.is_finite() {
        return Err(Error::NonFinite { row, column });
    }
    Ok(v)
}

// ---------------------------------------------------------------- datasets

/// One entry of the dataset index: where the file is and how many trailing
/// columns are targets.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub name: String,
    pub n_targets: usize,
}

/// Reads `datasets.csv`. Only the `name` and `n_targets` columns are
/// required, so hand-made indexes can bring external datasets into a run.
pub fn read_dataset_index(dir: &Path) -> Result<Vec<DatasetEntry>> {
    let path = dir.join(DATASET_INDEX);
    let (header, rows) = read_csv_table(&path)?;
    let ni = column(&header, "name", &path)?;
    let ti = column(&header, "n_targets", &path)?;
    let mut seen = std::collections::HashSet::new();
    rows.iter()
        .enumerate()
        .map(|(r, row)| {
            let name = row[ni].clone();
            if !seen.insert(name.clone()) {
                return Err(Error::InvalidDataset(format!("dataset {name:?} listed twice in {DATASET_INDEX}")));
            }
            let n_targets = row[ti].trim().parse().map_err(|_| Error::Parse {
                row: r + 2,
                column: ti + 1,
                value: row[ti].clone(),
            })?;
            Ok(DatasetEntry { name, n_targets })
        })
        .collect()
}

pub fn load_dataset(dir: &Path, entry: &DatasetEntry) -> Result<Dataset> {
    let path = dir.join(DATASET_DIR).join(format!("{}.csv", entry.name));
    load_csv(&path, entry.n_targets).map_err(|e| e.context(format!("dataset {}", entry.name)))
}

/// Generates every dataset of `grid` (with its master seed replaced by
/// `seed`) into `dir` and starts a fresh manifest.
pub fn run_generate(dir: &Path, mut grid: GridSpec, seed: u64) -> Result<RunManifest> {
    grid.master_seed = seed;
    let mut manifest = RunManifest::new(seed, Some(grid.clone()));
    manifest.validate()?;
    let data = generate_grid(&grid)?;
    let ds_dir = dir.join(DATASET_DIR);
    fs::create_dir_all(&ds_dir).map_err(|e| Error::io(&ds_dir, e))?;
    data.par_iter()
        .map(|(_, ds)| save_csv(ds, ds_dir.join(format!("{}.csv", ds.name()))))
        .collect::<Result<()>>()?;
    let rows: Vec<Vec<String>> = data
        .iter()
        .map(|(cfg, ds)| {
            vec![
                ds.name().to_string(),
                cfg.n_targets.to_string(),
                cfg.n_instances.to_string(),
                cfg.n_features.to_string(),
                cfg.n_groups.to_string(),
                fmt_f64(cfg.noise_pct),
                cfg.function_family.as_str().to_string(),
                cfg.seed.to_string(),
            ]
        })
        .collect();
    write_csv_rows(
        &dir.join(DATASET_INDEX),
        &["name", "n_targets", "n_instances", "n_features", "n_groups", "noise_pct", "family", "seed"],
        &rows,
    )?;
    manifest.record("generate", &[DATASET_INDEX, DATASET_DIR]);
    save_manifest(dir, &manifest)?;
    log::info!("generated {} datasets into {}", data.len(), dir.display());
    Ok(manifest)
}

// ---------------------------------------------------------------- base level

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseResult {
    pub dataset: String,
    /// aRRMSE indexed by [`MtrMethodId::index`].
    pub scores: [f64; 4],
    /// Per-fold aRRMSE by method; empty when read back from `meta_labels.csv`.
    #[serde(default)]
    pub per_fold: [Vec<f64>; 4],
    pub label: MtrMethodId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseLevelOutput {
    pub results: Vec<BaseResult>,
    pub excluded: Vec<(String, String)>,
}

/// Cross-validated aRRMSE of every method on every indexed dataset, plus the
/// meta-labels. Datasets that fail are excluded and reported; the stage
/// aborts with [`Error::Degenerate`] when too many are lost.
pub fn run_base_level(dir: &Path, manifest: &mut RunManifest) -> Result<BaseLevelOutput> {
    manifest.validate()?;
    let entries = read_dataset_index(dir)?;
    if entries.is_empty() {
        return Err(Error::InvalidDataset(format!("{DATASET_INDEX} lists no datasets")));
    }
    let stage_seed = manifest.stage_seed("base-eval");
    let outcomes: Vec<Result<BaseResult>> = entries
        .par_iter()
        .enumerate()
        .map(|(i, entry)| {
            let ds = load_dataset(dir, entry)?;
            let scores = cv_evaluate_all(&ds, &manifest.mtr, manifest.base_folds, derive_seed(stage_seed, i as u64))?;
            let mut arr = [0.0; 4];
            let mut per_fold: [Vec<f64>; 4] = Default::default();
            for s in &scores {
                arr[s.method.index()] = s.arrmse;
                per_fold[s.method.index()] = s.per_fold.clone();
            }
            if arr.iter().any(|v| !v.is_finite()) {
                return Err(Error::Degenerate("non-finite aRRMSE".into()));
            }
            let label = crate::methods::select_best_method(&scores)?;
            Ok(BaseResult { dataset: entry.name.clone(), scores: arr, per_fold, label })
        })
        .collect();

    let mut results = Vec::new();
    let mut excluded = Vec::new();
    for (entry, outcome) in entries.iter().zip(outcomes) {
        match outcome {
            Ok(r) => results.push(r),
            Err(e) if is_load_error(&e) => return Err(e),
            Err(e) => {
                log::warn!("excluding {}: {e}", entry.name);
                excluded.push((entry.name.clone(), e.to_string()));
            }
        }
    }
    write_csv_rows(
        &dir.join(EXCLUDED),
        &["dataset", "reason"],
        &excluded.iter().map(|(d, r)| vec![d.clone(), r.clone()]).collect::<Vec<_>>(),
    )?;
    let fraction = excluded.len() as f64 / entries.len() as f64;
    if fraction > manifest.max_excluded_fraction {
        return Err(Error::Degenerate(format!(
            "{} of {} datasets failed the base level (limit {}%)",
            excluded.len(),
            entries.len(),
            fmt_f64(manifest.max_excluded_fraction * 100.0)
        )));
    }

    // One row per (dataset, method): fold scores, their mean, and a winner flag.
    let k = manifest.base_folds;
    let mut header = vec!["dataset".to_string(), "method".to_string()];
    header.extend((1..=k).map(|f| format!("fold{f}")));
    header.extend(["arrmse".to_string(), "winner".to_string()]);
    let mut base_rows = Vec::with_capacity(results.len() * 4);
    for r in &results {
        for m in MtrMethodId::ALL {
            let mut row = vec![r.dataset.clone(), m.to_string()];
            row.extend(r.per_fold[m.index()].iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(r.scores[m.index()]));
            row.push(u8::from(r.label == m).to_string());
            base_rows.push(row);
        }
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv_rows(&dir.join(BASE_RESULTS), &header, &base_rows)?;

    let label_rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            let mut row = vec![r.dataset.clone(), r.label.to_string()];
            row.extend(r.scores.iter().map(|v| fmt_f64(*v)));
            row
        })
        .collect();
    write_csv_rows(&dir.join(META_LABELS), &["dataset", "label", "ST", "SST", "MOTC", "ERC"], &label_rows)?;

    let labels: Vec<MtrMethodId> = results.iter().map(|r| r.label).collect();
    write_csv_rows(&dir.join(LABEL_DISTRIBUTION), &["method", "count", "fraction"], &distribution_rows(&labels))?;

    manifest.record("base-eval", &[BASE_RESULTS, META_LABELS, LABEL_DISTRIBUTION, EXCLUDED]);
    save_manifest(dir, manifest)?;
    Ok(BaseLevelOutput { results, excluded })
}

/// Missing or malformed dataset files are user errors, not degenerate data.
fn is_load_error(e: &Error) -> bool {
    match e {
        Error::Context { context, source } => {
            context.starts_with("dataset ") && (source.is_validation() || matches!(**source, Error::Io { .. }))
        }
        _ => false,
    }
}

fn distribution_rows(labels: &[MtrMethodId]) -> Vec<Vec<String>> {
    let counts = class_counts(labels);
    let total = labels.len().max(1) as f64;
    MtrMethodId::ALL
        .iter()
        .map(|m| {
            let c = counts[m.index()];
            vec![m.to_string(), c.to_string(), fmt_f64(c as f64 / total)]
        })
        .collect()
}

pub fn read_meta_labels(dir: &Path) -> Result<Vec<BaseResult>> {
    let path = dir.join(META_LABELS);
    let (header, rows) = read_csv_table(&path)?;
    let di = column(&header, "dataset", &path)?;
    let li = column(&header, "label", &path)?;
    let si: Vec<usize> = MtrMethodId::ALL
        .iter()
        .map(|m| column(&header, m.as_str(), &path))
        .collect::<Result<_>>()?;
    rows.iter()
        .enumerate()
        .map(|(r, row)| {
            let mut scores = [0.0; 4];
            for (k, &c) in si.iter().enumerate() {
                scores[k] = parse_f64(&row[c], r + 2, c + 1)?;
            }
            let label: MtrMethodId = row[li].parse()?;
            if label != crate::methods::best_of(&scores) {
                return Err(Error::InvalidDataset(format!(
                    "{}: label {label} is not the best-scoring method",
                    row[di]
                )));
            }
            Ok(BaseResult { dataset: row[di].clone(), scores, per_fold: Default::default(), label })
        })
        .collect()
}

// ---------------------------------------------------------------- meta-features

/// Extracts the 58 meta-features of every indexed dataset.
pub fn run_meta_features(dir: &Path, manifest: &mut RunManifest) -> Result<Vec<(String, Vec<f64>)>> {
    manifest.validate()?;
    let entries = read_dataset_index(dir)?;
    let cfg = manifest.extraction.clone();
    let extracted: Vec<(String, crate::metafeatures::MetaFeatureVector)> = entries
        .par_iter()
        .map(|entry| {
            let ds = load_dataset(dir, entry)?;
            Ok((entry.name.clone(), extract_all_with(&ds, &cfg)))
        })
        .collect::<Result<_>>()?;

    let mut header = vec!["dataset"];
    header.extend(META_FEATURE_NAMES);
    let rows: Vec<Vec<String>> = extracted
        .iter()
        .map(|(name, v)| {
            let mut row = vec![name.clone()];
            row.extend(v.values.iter().map(|x| fmt_f64(*x)));
            row
        })
        .collect();
    write_csv_rows(&dir.join(META_FEATURES), &header, &rows)?;

    let log_rows: Vec<Vec<String>> = extracted
        .iter()
        .flat_map(|(name, v)| v.log.iter().map(move |msg| vec![name.clone(), msg.clone()]))
        .collect();
    write_csv_rows(&dir.join(EXTRACTION_LOG), &["dataset", "message"], &log_rows)?;

    manifest.record("meta-features", &[META_FEATURES, EXTRACTION_LOG]);
    save_manifest(dir, manifest)?;
    Ok(extracted.into_iter().map(|(n, v)| (n, v.values)).collect())
}

pub fn read_meta_features(dir: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let path = dir.join(META_FEATURES);
    let (header, rows) = read_csv_table(&path)?;
    let di = column(&header, "dataset", &path)?;
    let cols: Vec<usize> = META_FEATURE_NAMES
        .iter()
        .map(|n| column(&header, n, &path))
        .collect::<Result<_>>()?;
    rows.iter()
        .enumerate()
        .map(|(r, row)| {
            let values = cols.iter().map(|&c| parse_f64(&row[c], r + 2, c + 1)).collect::<Result<_>>()?;
            Ok((row[di].clone(), values))
        })
        .collect()
}

/// Joins meta-features and meta-labels by dataset name, in label order.
pub fn build_meta_dataset(features: &[(String, Vec<f64>)], labels: &[BaseResult]) -> Result<MetaDataset> {
    let by_name: HashMap<&str, &Vec<f64>> = features.iter().map(|(n, v)| (n.as_str(), v)).collect();
    let m = META_FEATURE_NAMES.len();
    let mut cells = Vec::with_capacity(labels.len() * m);
    for r in labels {
        let v = by_name
            .get(r.dataset.as_str())
            .ok_or_else(|| Error::InvalidDataset(format!("no meta-features for dataset {:?}", r.dataset)))?;
        if v.len() != m {
            return Err(Error::DimensionMismatch { expected: m, actual: v.len() });
        }
        cells.extend_from_slice(v);
    }
    MetaDataset::new(
        META_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        DMatrix::from_row_slice(labels.len(), m, &cells),
        labels.iter().map(|r| r.scores).collect(),
        labels.iter().map(|r| r.dataset.clone()).collect(),
    )
}

// ---------------------------------------------------------------- meta level

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommenderEval {
    pub name: String,
    /// Mean of the per-fold metric sets.
    pub metrics: MetricSet,
    /// Metrics of the confusion matrix pooled over folds.
    pub pooled_metrics: MetricSet,
    pub fold_metrics: Vec<MetricSet>,
    pub confusion: Vec<Vec<u64>>,
    /// Recommended method per dataset (dataset order of the report).
    pub predictions: Vec<MtrMethodId>,
    /// Base-level aRRMSE of the recommended method per dataset.
    pub realized: Vec<f64>,
    pub mean_realized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdAnalysis {
    pub systems: Vec<String>,
    pub average_ranks: Vec<f64>,
    pub n_datasets: usize,
    pub alpha: f64,
    pub critical_difference: f64,
    pub friedman: FriedmanResult,
    /// Pairs whose average ranks differ by less than the critical difference.
    pub connected: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub toolkit_version: String,
    pub master_seed: u64,
    pub folds: usize,
    /// False when some class was too rare for stratified folds.
    pub stratified: bool,
    pub fold_assignments: Vec<usize>,
    pub datasets: Vec<String>,
    pub truth: Vec<MtrMethodId>,
    pub label_distribution: BTreeMap<String, usize>,
    pub recommenders: Vec<RecommenderEval>,
    pub cd: CdAnalysis,
    pub importance: ImportanceReport,
    pub log: Vec<String>,
}

impl EvalReport {
    pub fn recommender(&self, name: &str) -> Option<&RecommenderEval> {
        self.recommenders.iter().find(|r| r.name == name)
    }

    /// Best non-Truth recommender by balanced accuracy (first listed on ties).
    pub fn winner(&self) -> Option<&RecommenderEval> {
        self.recommenders
            .iter()
            .filter(|r| r.name != TRUTH)
            .fold(None, |best: Option<&RecommenderEval>, r| match best {
                Some(b) if b.metrics.balanced_accuracy >= r.metrics.balanced_accuracy => Some(b),
                _ => Some(r),
            })
    }
}

/// Learned recommenders from the manifest followed by the two baselines,
/// without duplicates.
fn recommender_lineup(manifest: &RunManifest) -> Vec<LearnerSpec> {
    let mut out: Vec<LearnerSpec> = Vec::new();
    for l in manifest
        .learners
        .iter()
        .cloned()
        .chain([LearnerSpec::Majority, LearnerSpec::Random])
    {
        if !out.iter().any(|o| o.name() == l.name()) {
            out.push(l);
        }
    }
    out
}

fn mean_metrics(sets: &[MetricSet]) -> MetricSet {
    let n = sets.len() as f64;
    let mut acc = [0.0; 7];
    for s in sets {
        for (a, v) in acc.iter_mut().zip(s.to_array()) {
            *a += v;
        }
    }
    let a = acc.map(|v| v / n);
    MetricSet {
        accuracy: a[0],
        balanced_accuracy: a[1],
        precision: a[2],
        recall: a[3],
        f1: a[4],
        sensitivity: a[5],
        specificity: a[6],
    }
}

/// Meta-level cross-validation of every recommender on one shared fold plan,
/// the rank analysis of their realized aRRMSE and the forest importances.
pub fn evaluate_meta(md: &MetaDataset, manifest: &RunManifest) -> Result<EvalReport> {
    manifest.validate()?;
    let n = md.len();
    let k = manifest.meta_folds;
    if n < k {
        return Err(Error::InvalidDataset(format!(
            "meta-level {k}-fold CV needs at least {k} datasets, got {n}"
        )));
    }
    let mut log_lines = Vec::new();
    let seed = manifest.stage_seed("meta-eval");
    let label_idx: Vec<usize> = md.labels().iter().map(|l| l.index()).collect();
    let (plan, stratified) = split_stratified(&label_idx, k, derive_seed(seed, 0))?;
    if !stratified {
        log_lines.push(format!("some class has fewer than {k} datasets; meta-level folds are not stratified"));
    }

    let lineup = recommender_lineup(manifest);
    // predictions[r][i]: recommender r on dataset i, filled fold by fold.
    let mut predictions = vec![vec![MtrMethodId::St; n]; lineup.len() + 1];
    predictions[0] = md.labels().to_vec();
    let mut fold_cms: Vec<Vec<ConfusionMatrix>> = vec![Vec::with_capacity(k); lineup.len() + 1];
    for fold in 0..k {
        let train_rows = plan.train_indices(fold);
        let test_rows = plan.test_indices(fold);
        let train = md.select_rows(&train_rows)?;
        let test_x = md.features().select_rows(&test_rows);
        let counts = train.class_counts();
        for m in MtrMethodId::ALL {
            if counts[m.index()] == 0 && md.class_counts()[m.index()] > 0 {
                log_lines.push(format!("fold {fold}: class {m} absent from training data"));
            }
        }
        let fold_seed = derive_seed(seed, fold as u64 + 1);
        let fold_preds = lineup
            .par_iter()
            .map(|l| {
                let model = l.fit(&train, derive_seed_str(fold_seed, l.name()))?;
                model.predict(&test_x)
            })
            .collect::<Result<Vec<_>>>()?;
        for (r, preds) in std::iter::once(test_rows.iter().map(|&i| md.labels()[i]).collect::<Vec<_>>())
            .chain(fold_preds)
            .enumerate()
        {
            let truth: Vec<usize> = test_rows.iter().map(|&i| label_idx[i]).collect();
            let pred: Vec<usize> = preds.iter().map(|p| p.index()).collect();
            fold_cms[r].push(ConfusionMatrix::from_labels(4, &truth, &pred)?);
            for (&i, &p) in test_rows.iter().zip(&preds) {
                predictions[r][i] = p;
            }
        }
    }

    let names: Vec<String> = std::iter::once(TRUTH.to_string())
        .chain(lineup.iter().map(|l| l.name().to_string()))
        .collect();
    let mut recommenders = Vec::with_capacity(names.len());
    for (r, name) in names.iter().enumerate() {
        let mut pooled = ConfusionMatrix::new(4);
        for cm in &fold_cms[r] {
            pooled.merge(cm)?;
        }
        let fold_metrics = fold_cms[r].iter().map(classification_metrics).collect::<Result<Vec<_>>>()?;
        let realized: Vec<f64> = (0..n).map(|i| md.scores()[i][predictions[r][i].index()]).collect();
        recommenders.push(RecommenderEval {
            name: name.clone(),
            metrics: mean_metrics(&fold_metrics),
            pooled_metrics: classification_metrics(&pooled)?,
            fold_metrics,
            confusion: pooled.rows(),
            predictions: predictions[r].clone(),
            mean_realized: realized.iter().sum::<f64>() / n as f64,
            realized,
        });
    }

    let realized = DMatrix::from_fn(n, names.len(), |i, r| recommenders[r].realized[i]);
    let friedman = friedman_test(&realized, manifest.alpha)?;
    let avg = average_ranks(&realized)?;
    let cd = nemenyi_cd(names.len(), n, manifest.alpha)?;
    let connected = connected_pairs(&avg, cd)
        .into_iter()
        .map(|(a, b)| (names[a].clone(), names[b].clone()))
        .collect();

    let forest_cfg = manifest
        .learners
        .iter()
        .find_map(|l| match l {
            LearnerSpec::Rf(c) => Some(c.clone()),
            _ => None,
        })
        .unwrap_or_default();
    let imp_seed = derive_seed_str(seed, "importance");
    let forest = fit_forest(md, &forest_cfg, derive_seed(imp_seed, 0))?;
    let importance = oob_permutation_importance(&forest, md, derive_seed(imp_seed, 1))?;

    let counts = md.class_counts();
    Ok(EvalReport {
        toolkit_version: manifest.toolkit_version.clone(),
        master_seed: manifest.master_seed,
        folds: k,
        stratified,
        fold_assignments: plan.assignments.clone(),
        datasets: md.dataset_names().to_vec(),
        truth: md.labels().to_vec(),
        label_distribution: MtrMethodId::ALL.iter().map(|m| (m.to_string(), counts[m.index()])).collect(),
        recommenders,
        cd: CdAnalysis {
            systems: names,
            average_ranks: avg,
            n_datasets: n,
            alpha: manifest.alpha,
            critical_difference: cd,
            friedman,
            connected,
        },
        importance,
        log: log_lines,
    })
}

/// Meta-level stage: evaluates recommenders, stores the report and the
/// recommenders refitted on the whole meta-dataset.
pub fn run_meta_level(dir: &Path, manifest: &mut RunManifest) -> Result<EvalReport> {
    let labels = read_meta_labels(dir)?;
    let features = read_meta_features(dir)?;
    let md = build_meta_dataset(&features, &labels)?;
    let report = evaluate_meta(&md, manifest)?;
    for line in &report.log {
        log::warn!("{line}");
    }
    write_json(&dir.join(EVAL_REPORT), &report)?;

    let seed = derive_seed_str(manifest.stage_seed("meta-eval"), "final-models");
    let mut files = vec![EVAL_REPORT.to_string()];
    for l in recommender_lineup(manifest) {
        let model = l.fit(&md, derive_seed_str(seed, l.name()))?;
        if let Some(saved) = model.to_saved() {
            let rel = format!("{MODEL_DIR}/{}.json", l.name().to_ascii_lowercase());
            write_text(&dir.join(&rel), &(saved.to_json()? + "\n"))?;
            files.push(rel);
        }
    }
    let refs: Vec<&str> = files.iter().map(String::as_str).collect();
    manifest.record("meta-eval", &refs);
    save_manifest(dir, manifest)?;
    Ok(report)
}

pub fn read_eval_report(dir: &Path) -> Result<EvalReport> {
    read_json(&dir.join(EVAL_REPORT))
}

// ---------------------------------------------------------------- report

/// Writes metrics.csv, cd_analysis.json, importance.csv and summary.md.
pub fn emit_report(report: &EvalReport, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut header = vec!["recommender"];
    header.extend(MetricSet::NAMES);
    let rows: Vec<Vec<String>> = report
        .recommenders
        .iter()
        .map(|r| {
            let mut row = vec![r.name.clone()];
            row.extend(r.metrics.to_array().iter().map(|v| fmt_f64(*v)));
            row
        })
        .collect();
    let metrics = out.join(METRICS);
    write_csv_rows(&metrics, &header, &rows)?;

    let cd = out.join(CD_ANALYSIS);
    write_json(&cd, &report.cd)?;

    let imp_rows: Vec<Vec<String>> = report
        .importance
        .feature_names
        .iter()
        .zip(&report.importance.importance)
        .map(|(n, v)| vec![n.clone(), fmt_f64(*v)])
        .collect();
    let importance = out.join(IMPORTANCE);
    write_csv_rows(&importance, &["feature", "importance"], &imp_rows)?;

    let summary = out.join(SUMMARY);
    write_text(&summary, &summary_markdown(report))?;
    Ok(vec![metrics, cd, importance, summary])
}

fn summary_markdown(report: &EvalReport) -> String {
    let mut s = String::new();
    let w = &mut s;
    let n = report.datasets.len();
    let _ = writeln!(w, "# Meta-level evaluation\n");
    let _ = writeln!(
        w,
        "{n} datasets, {}-fold cross-validation at the meta level ({}), master seed {}.\n",
        report.folds,
        if report.stratified { "stratified" } else { "not stratified" },
        report.master_seed
    );
    if let Some(best) = report.winner() {
        let _ = writeln!(
            w,
            "Best recommender by balanced accuracy: **{}** ({:.4}).\n",
            best.name, best.metrics.balanced_accuracy
        );
    }
    let _ = writeln!(w, "## Meta-label distribution\n");
    let _ = writeln!(w, "| method | datasets | share |\n|---|---:|---:|");
    for (m, c) in &report.label_distribution {
        let _ = writeln!(w, "| {m} | {c} | {:.1}% |", 100.0 * *c as f64 / n.max(1) as f64);
    }
    let _ = writeln!(w, "\n## Recommenders\n");
    let _ = writeln!(w, "| recommender | {} | mean aRRMSE | avg rank |", MetricSet::NAMES.join(" | "));
    let _ = writeln!(w, "|---|{}---:|---:|", "---:|".repeat(7));
    for (r, rank) in report.recommenders.iter().zip(&report.cd.average_ranks) {
        let vals: Vec<String> = r.metrics.to_array().iter().map(|v| format!("{v:.4}")).collect();
        let _ = writeln!(w, "| {} | {} | {:.4} | {:.3} |", r.name, vals.join(" | "), r.mean_realized, rank);
    }
    let f = &report.cd.friedman;
    let _ = writeln!(
        w,
        "\nFriedman statistic {:.4} (critical {:.4} at alpha {}): {}. Nemenyi critical difference {:.4}.",
        f.statistic,
        f.critical,
        report.cd.alpha,
        if f.reject { "the recommenders differ" } else { "no significant difference" },
        report.cd.critical_difference
    );
    if !report.cd.connected.is_empty() {
        let pairs: Vec<String> = report.cd.connected.iter().map(|(a, b)| format!("{a}–{b}")).collect();
        let _ = writeln!(w, "Not significantly different: {}.", pairs.join(", "));
    }
    let _ = writeln!(w, "\n## Most important meta-features\n");
    let _ = writeln!(w, "| meta-feature | importance |\n|---|---:|");
    for &i in report.importance.ranking().iter().take(10) {
        let _ = writeln!(
            w,
            "| {} | {:.5} |",
            report.importance.feature_names[i], report.importance.importance[i]
        );
    }
    s
}

pub fn run_report(dir: &Path, out: &Path, manifest: &mut RunManifest) -> Result<Vec<PathBuf>> {
    let report = read_eval_report(dir)?;
    let files = emit_report(&report, out)?;
    if out == dir {
        manifest.record("report", &[METRICS, CD_ANALYSIS, IMPORTANCE, SUMMARY]);
        save_manifest(dir, manifest)?;
    }
    Ok(files)
}

/// All stages in order into `dir`.
pub fn run_all(dir: &Path, grid: GridSpec, seed: u64, configure: impl FnOnce(&mut RunManifest)) -> Result<EvalReport> {
    let mut manifest = run_generate(dir, grid, seed)?;
    configure(&mut manifest);
    manifest.validate()?;
    save_manifest(dir, &manifest)?;
    run_base_level(dir, &mut manifest)?;
    run_meta_features(dir, &mut manifest)?;
    let report = run_meta_level(dir, &mut manifest)?;
    run_report(dir, dir, &mut manifest)?;
    Ok(report)
}
