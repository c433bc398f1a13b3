//! Meta-level learners: a bagged CART forest with out-of-bag permutation
//! importance, Gaussian naive Bayes and the Majority / Random baselines.
//!
//! Class ties are always resolved toward the lower [`MtrMethodId`] index.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::methods::{best_of, MtrMethodId};
use crate::rng::{derive_seed, SplitMix64};

pub const N_CLASSES: usize = 4;

/// Version tag of the JSON model format.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaDataset {
    feature_names: Vec<String>,
    features: DMatrix<f64>,
    labels: Vec<MtrMethodId>,
    scores: Vec<[f64; 4]>,
    dataset_names: Vec<String>,
}

impl MetaDataset {
    /// Labels are derived from the scores (lowest aRRMSE, ties by method order).
    pub fn new(
        feature_names: Vec<String>,
        features: DMatrix<f64>,
        scores: Vec<[f64; 4]>,
        dataset_names: Vec<String>,
    ) -> Result<Self> {
        let (n, m) = features.shape();
        if feature_names.len() != m {
            return Err(Error::DimensionMismatch { expected: m, actual: feature_names.len() });
        }
        if scores.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: scores.len() });
        }
        if dataset_names.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: dataset_names.len() });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("meta-features must be finite".into()));
        }
        if scores.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("method scores must be finite".into()));
        }
        let labels = scores.iter().map(best_of).collect();
        Ok(MetaDataset { feature_names, features, labels, scores, dataset_names })
    }

    /// Meta-dataset for experiments that only have labels: each row scores 0
    /// for its label and 1 for every other method.
    pub fn from_labels(feature_names: Vec<String>, features: DMatrix<f64>, labels: &[MtrMethodId]) -> Result<Self> {
        let scores = labels
            .iter()
            .map(|l| {
                let mut s = [1.0; 4];
                s[l.index()] = 0.0;
                s
            })
            .collect();
        let names = (0..labels.len()).map(|i| format!("row{i}")).collect();
        MetaDataset::new(feature_names, features, scores, names)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[MtrMethodId] {
        &self.labels
    }

    pub fn scores(&self) -> &[[f64; 4]] {
        &self.scores
    }

    pub fn dataset_names(&self) -> &[String] {
        &self.dataset_names
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_counts(&self) -> [usize; N_CLASSES] {
        class_counts(&self.labels)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<MetaDataset> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.len()) {
            return Err(Error::InvalidConfig(format!("row {bad} out of range")));
        }
        Ok(MetaDataset {
            feature_names: self.feature_names.clone(),
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            scores: rows.iter().map(|&r| self.scores[r]).collect(),
            dataset_names: rows.iter().map(|&r| self.dataset_names[r].clone()).collect(),
        })
    }
}

pub fn class_counts(labels: &[MtrMethodId]) -> [usize; N_CLASSES] {
    let mut c = [0; N_CLASSES];
    for l in labels {
        c[l.index()] += 1;
    }
    c
}

/// Index of the largest count, lowest index on ties.
fn plurality(counts: &[usize; N_CLASSES]) -> MtrMethodId {
    let mut best = 0;
    for c in 1..N_CLASSES {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    MtrMethodId::from_index(best).expect("class index in range")
}

fn check_width(x: &DMatrix<f64>, expected: usize) -> Result<()> {
    if x.ncols() != expected {
        return Err(Error::DimensionMismatch { expected, actual: x.ncols() });
    }
    Ok(())
}

// ---------------------------------------------------------------- forest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub mtry: usize,
    /// Sample n rows with replacement per tree; off means every tree sees all rows.
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 500, mtry: 7, bootstrap: true }
    }
}

impl ForestConfig {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidConfig("n_trees must be at least 1".into()));
        }
        if self.mtry == 0 || self.mtry > n_features {
            return Err(Error::InvalidConfig(format!(
                "mtry must lie in 1..={n_features}, got {}",
                self.mtry
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Leaf { class: MtrMethodId },
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: &DMatrix<f64>, r: usize) -> MtrMethodId {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { class } => return class,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[(r, feature)] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

fn gini(counts: &[usize; N_CLASSES], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

struct Grower<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [MtrMethodId],
    mtry: usize,
    rng: SplitMix64,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    /// Best (weighted child Gini, feature, threshold) among mtry features that
    /// are not constant within the node.
    fn best_split(&mut self, rows: &[usize]) -> Option<(usize, f64)> {
        let m = self.x.ncols();
        let mut candidates: Vec<usize> = (0..m).collect();
        self.rng.shuffle(&mut candidates);
        let mut tried = 0;
        let mut best: Option<(f64, usize, f64)> = None;
        let n = rows.len();
        for f in candidates {
            if tried == self.mtry {
                break;
            }
            let mut vals: Vec<(f64, usize)> = rows.iter().map(|&r| (self.x[(r, f)], self.y[r].index())).collect();
            vals.sort_by(|a, b| a.0.total_cmp(&b.0));
            if vals[0].0 == vals[n - 1].0 {
                continue;
            }
            tried += 1;
            let mut total = [0usize; N_CLASSES];
            for &(_, c) in &vals {
                total[c] += 1;
            }
            let mut left = [0usize; N_CLASSES];
            for i in 0..n - 1 {
                left[vals[i].1] += 1;
                if vals[i].0 == vals[i + 1].0 {
                    continue;
                }
                let nl = i + 1;
                let mut right = total;
                for c in 0..N_CLASSES {
                    right[c] -= left[c];
                }
                let score = (nl as f64 * gini(&left, nl) + (n - nl) as f64 * gini(&right, n - nl)) / n as f64;
                if best.is_none_or(|(s, _, _)| score < s) {
                    let (a, b) = (vals[i].0, vals[i + 1].0);
                    let mid = a + (b - a) / 2.0;
                    let threshold = if mid < b { mid } else { a };
                    best = Some((score, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, rows: &[usize]) -> usize {
        let counts = class_counts(&rows.iter().map(|&r| self.y[r]).collect::<Vec<_>>());
        let id = self.nodes.len();
        let leaf = Node::Leaf { class: plurality(&counts) };
        self.nodes.push(leaf);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || rows.len() < 2 {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(rows) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[(i, feature)] <= threshold);
        let left = self.grow(&l);
        let right = self.grow(&r);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
}

/// Grows one unpruned CART tree on `rows` (repeats allowed).
pub fn fit_tree(x: &DMatrix<f64>, y: &[MtrMethodId], rows: &[usize], mtry: usize, seed: u64) -> Result<Tree> {
    if rows.is_empty() {
        return Err(Error::InvalidDataset("cannot grow a tree on an empty sample".into()));
    }
    if mtry == 0 || mtry > x.ncols() {
        return Err(Error::InvalidConfig(format!("mtry must lie in 1..={}, got {mtry}", x.ncols())));
    }
    let mut g = Grower { x, y, mtry, rng: SplitMix64::new(seed), nodes: Vec::new() };
    g.grow(rows);
    Ok(Tree { nodes: g.nodes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub n_features: usize,
    pub trees: Vec<Tree>,
    /// Sorted out-of-bag rows of each tree (empty without bootstrap).
    pub oob: Vec<Vec<usize>>,
}

pub fn fit_forest(md: &MetaDataset, cfg: &ForestConfig, seed: u64) -> Result<ForestModel> {
    if md.is_empty() {
        return Err(Error::InvalidDataset("meta-dataset is empty".into()));
    }
    cfg.validate(md.n_features())?;
    let n = md.len();
    let grown: Vec<(Tree, Vec<usize>)> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = derive_seed(seed, t as u64);
            let (rows, oob) = if cfg.bootstrap {
                let mut rng = SplitMix64::new(derive_seed(tree_seed, 0));
                let rows: Vec<usize> = (0..n).map(|_| rng.below(n)).collect();
                let mut in_bag = vec![false; n];
                for &r in &rows {
                    in_bag[r] = true;
                }
                (rows, (0..n).filter(|&i| !in_bag[i]).collect())
            } else {
                ((0..n).collect(), Vec::new())
            };
            fit_tree(md.features(), md.labels(), &rows, cfg.mtry, derive_seed(tree_seed, 1)).map(|tree| (tree, oob))
        })
        .collect::<Result<_>>()?;
    let (trees, oob) = grown.into_iter().unzip();
    Ok(ForestModel { config: cfg.clone(), n_features: md.n_features(), trees, oob })
}

impl ForestModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<MtrMethodId>> {
        check_width(x, self.n_features)?;
        Ok((0..x.nrows())
            .into_par_iter()
            .map(|r| {
                let mut votes = [0usize; N_CLASSES];
                for t in &self.trees {
                    votes[t.predict_row(x, r).index()] += 1;
                }
                plurality(&votes)
            })
            .collect())
    }

    /// Out-of-bag accuracy over rows that were OOB for at least one tree.
    pub fn oob_accuracy(&self, md: &MetaDataset) -> Option<f64> {
        let mut votes = vec![[0usize; N_CLASSES]; md.len()];
        for (tree, oob) in self.trees.iter().zip(&self.oob) {
            for &r in oob {
                votes[r][tree.predict_row(md.features(), r).index()] += 1;
            }
        }
        let scored: Vec<bool> = votes
            .iter()
            .zip(md.labels())
            .filter(|(v, _)| v.iter().any(|&c| c > 0))
            .map(|(v, l)| plurality(v) == *l)
            .collect();
        if scored.is_empty() {
            return None;
        }
        Some(scored.iter().filter(|&&ok| ok).count() as f64 / scored.len() as f64)
    }
}

pub fn predict_forest(model: &ForestModel, x: &DMatrix<f64>) -> Result<Vec<MtrMethodId>> {
    model.predict(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub feature_names: Vec<String>,
    /// Mean increase of the per-tree OOB error rate after permuting the feature.
    pub importance: Vec<f64>,
    /// Trees that contributed (non-empty OOB set).
    pub n_trees_used: usize,
}

impl ImportanceReport {
    /// Feature indices by decreasing importance, lower index first on ties.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.importance.len()).collect();
        idx.sort_by(|&a, &b| self.importance[b].total_cmp(&self.importance[a]).then(a.cmp(&b)));
        idx
    }
}

/// Permutation of 0..n that moves something whenever n >= 2.
fn non_identity_permutation(n: usize, rng: &mut SplitMix64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut p);
    if n >= 2 && p.iter().enumerate().all(|(i, &v)| i == v) {
        p.rotate_left(1);
    }
    p
}

pub fn oob_permutation_importance(model: &ForestModel, md: &MetaDataset, seed: u64) -> Result<ImportanceReport> {
    check_width(md.features(), model.n_features)?;
    if model.oob.iter().flatten().any(|&r| r >= md.len()) {
        return Err(Error::InvalidConfig("forest OOB sets do not match this meta-dataset".into()));
    }
    let m = model.n_features;
    let x = md.features();
    let labels = md.labels();
    let per_tree: Vec<Vec<f64>> = model
        .trees
        .par_iter()
        .zip(&model.oob)
        .enumerate()
        .filter(|(_, (_, oob))| !oob.is_empty())
        .map(|(t, (tree, oob))| {
            let k = oob.len() as f64;
            let errors = |xm: &DMatrix<f64>| {
                (0..oob.len()).filter(|&i| tree.predict_row(xm, i) != labels[oob[i]]).count() as f64 / k
            };
            let mut sub = x.select_rows(oob);
            let base = errors(&sub);
            let tree_seed = derive_seed(seed, t as u64);
            (0..m)
                .map(|f| {
                    let mut rng = SplitMix64::new(derive_seed(tree_seed, f as u64));
                    let perm = non_identity_permutation(oob.len(), &mut rng);
                    let original: Vec<f64> = sub.column(f).iter().copied().collect();
                    for (i, &p) in perm.iter().enumerate() {
                        sub[(i, f)] = original[p];
                    }
                    let e = errors(&sub);
                    for (i, v) in original.iter().enumerate() {
                        sub[(i, f)] = *v;
                    }
                    e - base
                })
                .collect()
        })
        .collect();
    let used = per_tree.len();
    let mut importance = vec![0.0; m];
    if used > 0 {
        for row in &per_tree {
            for (acc, v) in importance.iter_mut().zip(row) {
                *acc += v;
            }
        }
        for v in &mut importance {
            *v /= used as f64;
        }
    }
    Ok(ImportanceReport {
        feature_names: md.feature_names().to_vec(),
        importance,
        n_trees_used: used,
    })
}

// ---------------------------------------------------------------- naive Bayes

pub const GNB_VAR_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnbModel {
    pub n_features: usize,
    /// Empirical class frequencies; absent classes have prior 0.
    pub priors: [f64; N_CLASSES],
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

pub fn fit_gnb(md: &MetaDataset) -> Result<GnbModel> {
    if md.is_empty() {
        return Err(Error::InvalidDataset("meta-dataset is empty".into()));
    }
    let m = md.n_features();
    let counts = md.class_counts();
    let n = md.len() as f64;
    let mut means = vec![vec![0.0; m]; N_CLASSES];
    let mut variances = vec![vec![1.0; m]; N_CLASSES];
    for c in 0..N_CLASSES {
        if counts[c] == 0 {
            continue;
        }
        let rows: Vec<usize> = (0..md.len()).filter(|&r| md.labels()[r].index() == c).collect();
        let k = rows.len() as f64;
        for f in 0..m {
            let mean = rows.iter().map(|&r| md.features()[(r, f)]).sum::<f64>() / k;
            let var = rows.iter().map(|&r| (md.features()[(r, f)] - mean).powi(2)).sum::<f64>() / k;
            means[c][f] = mean;
            variances[c][f] = var.max(GNB_VAR_FLOOR);
        }
    }
    let priors = counts.map(|c| c as f64 / n);
    Ok(GnbModel { n_features: m, priors, means, variances })
}

impl GnbModel {
    /// Unnormalized log posterior per class (-inf for absent classes).
    pub fn log_joint(&self, x: &DMatrix<f64>, r: usize) -> [f64; N_CLASSES] {
        let mut out = [f64::NEG_INFINITY; N_CLASSES];
        for (c, o) in out.iter_mut().enumerate() {
            if self.priors[c] == 0.0 {
                continue;
            }
            let mut lp = self.priors[c].ln();
            for f in 0..self.n_features {
                let v = self.variances[c][f];
                let d = x[(r, f)] - self.means[c][f];
                lp -= 0.5 * (2.0 * std::f64::consts::PI * v).ln() + d * d / (2.0 * v);
            }
            *o = lp;
        }
        out
    }

    pub fn posterior(&self, x: &DMatrix<f64>, r: usize) -> [f64; N_CLASSES] {
        let lj = self.log_joint(x, r);
        let top = lj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w = lj.map(|v| if v == f64::NEG_INFINITY { 0.0 } else { (v - top).exp() });
        let s: f64 = w.iter().sum();
        w.map(|v| v / s)
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<MtrMethodId>> {
        check_width(x, self.n_features)?;
        Ok((0..x.nrows())
            .map(|r| {
                let lj = self.log_joint(x, r);
                let mut best = 0;
                for c in 1..N_CLASSES {
                    if lj[c] > lj[best] {
                        best = c;
                    }
                }
                MtrMethodId::from_index(best).expect("class index in range")
            })
            .collect())
    }
}

pub fn predict_gnb(model: &GnbModel, x: &DMatrix<f64>) -> Result<Vec<MtrMethodId>> {
    model.predict(x)
}

// ---------------------------------------------------------------- baselines

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MajorityModel {
    pub class: MtrMethodId,
}

impl MajorityModel {
    /// Features are ignored; any row count is answered.
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<MtrMethodId> {
        vec![self.class; x.nrows()]
    }
}

pub fn baseline_majority(labels: &[MtrMethodId]) -> Result<MajorityModel> {
    if labels.is_empty() {
        return Err(Error::InvalidDataset("majority baseline needs at least one label".into()));
    }
    Ok(MajorityModel { class: plurality(&class_counts(labels)) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomModel {
    pub seed: u64,
}

impl RandomModel {
    /// One uniform draw per row from a single seeded stream.
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<MtrMethodId> {
        let mut rng = SplitMix64::new(self.seed);
        (0..x.nrows())
            .map(|_| MtrMethodId::from_index(rng.below(N_CLASSES)).expect("class index in range"))
            .collect()
    }
}

pub fn baseline_random(seed: u64) -> RandomModel {
    RandomModel { seed }
}

// ---------------------------------------------------------------- learner interface

/// A recommender that can be trained on a meta-dataset and applied to
/// meta-feature rows. External learners plug into the meta-level evaluation
/// by implementing this trait.
pub trait MetaLearner: Send + Sync {
    fn name(&self) -> &str;
    fn fit(&self, train: &MetaDataset, seed: u64) -> Result<Box<dyn Recommender>>;
}

pub trait Recommender: Send + Sync {
    fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<MtrMethodId>>;
    /// Serializable form, when the model has one.
    fn to_saved(&self) -> Option<SavedModel> {
        None
    }
}

/// The built-in learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "lowercase")]
pub enum LearnerSpec {
    Rf(ForestConfig),
    Nb,
    Majority,
    Random,
}

impl LearnerSpec {
    pub fn parse(name: &str) -> Result<LearnerSpec> {
        match name.trim().to_ascii_lowercase().as_str() {
            "rf" => Ok(LearnerSpec::Rf(ForestConfig::default())),
            "nb" => Ok(LearnerSpec::Nb),
            "majority" => Ok(LearnerSpec::Majority),
            "random" => Ok(LearnerSpec::Random),
            other => Err(Error::InvalidConfig(format!(
                "unknown learner '{other}' (expected rf, nb, majority or random)"
            ))),
        }
    }
}

impl MetaLearner for LearnerSpec {
    fn name(&self) -> &str {
        match self {
            LearnerSpec::Rf(_) => "RF",
            LearnerSpec::Nb => "NB",
            LearnerSpec::Majority => "Majority",
            LearnerSpec::Random => "Random",
        }
    }

    fn fit(&self, train: &MetaDataset, seed: u64) -> Result<Box<dyn Recommender>> {
        let model = match self {
            LearnerSpec::Rf(cfg) => ModelKind::Forest(fit_forest(train, cfg, seed)?),
            LearnerSpec::Nb => ModelKind::Gnb(fit_gnb(train)?),
            LearnerSpec::Majority => ModelKind::Majority(baseline_majority(train.labels())?),
            LearnerSpec::Random => ModelKind::Random(baseline_random(seed)),
        };
        Ok(Box::new(model))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelKind {
    Forest(ForestModel),
    Gnb(GnbModel),
    Majority(MajorityModel),
    Random(RandomModel),
}

impl Recommender for ModelKind {
    fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<MtrMethodId>> {
        match self {
            ModelKind::Forest(m) => m.predict(x),
            ModelKind::Gnb(m) => m.predict(x),
            ModelKind::Majority(m) => Ok(m.predict(x)),
            ModelKind::Random(m) => Ok(m.predict(x)),
        }
    }

    fn to_saved(&self) -> Option<SavedModel> {
        Some(SavedModel { format_version: MODEL_FORMAT_VERSION, model: self.clone() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub format_version: u32,
    pub model: ModelKind,
}

impl SavedModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<SavedModel> {
        let saved: SavedModel = serde_json::from_str(s)?;
        if saved.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                saved.format_version
            )));
        }
        Ok(saved)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use MtrMethodId::*;

    fn names(m: usize) -> Vec<String> {
        (0..m).map(|j| format!("f{j}")).collect()
    }

    #[test]
    fn labels_follow_scores() {
        let md = MetaDataset::new(
            names(1),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            vec![[0.5, 0.4, 0.4, 0.9], [0.1, 0.2, 0.3, 0.4]],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        assert_eq!(md.labels(), &[Sst, St]);
    }

    #[test]
    fn majority_counts_from_the_benchmark() {
        let mut labels = vec![Erc; 166];
        labels.extend(vec![Motc; 89]);
        labels.extend(vec![Sst; 362]);
        labels.extend(vec![St; 31]);
        let maj = baseline_majority(&labels).unwrap();
        assert_eq!(maj.class, Sst);
        let pred = maj.predict(&DMatrix::zeros(labels.len(), 0));
        let acc = pred.iter().zip(&labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64;
        assert!((acc - 0.558).abs() < 0.001);
    }

    #[test]
    fn majority_tie_goes_to_lower_order() {
        assert_eq!(baseline_majority(&[Erc, Sst]).unwrap().class, Sst);
        assert!(baseline_majority(&[]).is_err());
    }

    #[test]
    fn single_class_forest() {
        let x = DMatrix::from_fn(8, 3, |i, j| (i * 3 + j) as f64);
        let md = MetaDataset::from_labels(names(3), x.clone(), &[Motc; 8]).unwrap();
        let f = fit_forest(&md, &ForestConfig { n_trees: 5, mtry: 2, bootstrap: true }, 1).unwrap();
        assert!(f.predict(&x).unwrap().iter().all(|&p| p == Motc));
        assert!(f.trees.iter().all(|t| t.nodes.len() == 1));
    }

    #[test]
    fn oob_disjoint_from_bag() {
        let x = DMatrix::from_fn(30, 2, |i, j| ((i * 7 + j * 3) % 11) as f64);
        let labels: Vec<_> = (0..30).map(|i| MtrMethodId::from_index(i % 3).unwrap()).collect();
        let md = MetaDataset::from_labels(names(2), x, &labels).unwrap();
        let f = fit_forest(&md, &ForestConfig { n_trees: 20, mtry: 1, bootstrap: true }, 9).unwrap();
        for (t, oob) in f.oob.iter().enumerate() {
            let mut rng = SplitMix64::new(derive_seed(derive_seed(9, t as u64), 0));
            let bag: Vec<usize> = (0..30).map(|_| rng.below(30)).collect();
            assert!(oob.iter().all(|r| !bag.contains(r)));
            assert_eq!(oob.len() + { let mut b = bag.clone(); b.sort_unstable(); b.dedup(); b.len() }, 30);
        }
    }

    #[test]
    fn config_validation() {
        let md = MetaDataset::from_labels(names(2), DMatrix::zeros(3, 2), &[St, St, Sst]).unwrap();
        assert!(fit_forest(&md, &ForestConfig { n_trees: 0, mtry: 1, bootstrap: true }, 0).is_err());
        assert!(fit_forest(&md, &ForestConfig { n_trees: 1, mtry: 3, bootstrap: true }, 0).is_err());
    }

    #[test]
    fn derangement_for_two() {
        let mut rng = SplitMix64::new(0);
        for _ in 0..20 {
            assert_eq!(non_identity_permutation(2, &mut rng), vec![1, 0]);
        }
        assert_eq!(non_identity_permutation(1, &mut rng), vec![0]);
    }

    #[test]
    fn gnb_posterior_sums_to_one() {
        let x = DMatrix::from_row_slice(6, 2, &[0.0, 1.0, 0.2, 0.9, 0.1, 1.1, 3.0, 0.0, 3.2, 0.1, 2.9, -0.1]);
        let md = MetaDataset::from_labels(names(2), x.clone(), &[St, St, St, Erc, Erc, Erc]).unwrap();
        let g = fit_gnb(&md).unwrap();
        for r in 0..6 {
            let p = g.posterior(&x, r);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert_eq!(p[1], 0.0);
        }
        assert_eq!(g.predict(&x).unwrap(), md.labels());
    }

    #[test]
    fn gnb_identical_classes_pick_lowest() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 1.0, 2.0]);
        let md = MetaDataset::from_labels(names(1), x.clone(), &[Erc, Erc, Motc, Motc]).unwrap();
        let g = fit_gnb(&md).unwrap();
        assert_eq!(g.predict(&x).unwrap(), vec![Motc; 4]);
    }

    #[test]
    fn random_baseline_is_seeded_and_uniform() {
        let x = DMatrix::zeros(10_000, 0);
        let a = baseline_random(3).predict(&x);
        assert_eq!(a, baseline_random(3).predict(&x));
        let counts = class_counts(&a);
        assert!(counts.iter().all(|&c| (c as f64 / 10_000.0 - 0.25).abs() < 0.05));
    }

    #[test]
    fn saved_model_roundtrip() {
        let x = DMatrix::from_fn(12, 2, |i, j| (i as f64) * if j == 0 { 1.0 } else { -0.5 });
        let labels: Vec<_> = (0..12).map(|i| if i < 6 { St } else { Erc }).collect();
        let md = MetaDataset::from_labels(names(2), x.clone(), &labels).unwrap();
        for spec in [
            LearnerSpec::Rf(ForestConfig { n_trees: 7, mtry: 2, bootstrap: true }),
            LearnerSpec::Nb,
            LearnerSpec::Majority,
            LearnerSpec::Random,
        ] {
            let model = spec.fit(&md, 4).unwrap();
            let saved = model.to_saved().unwrap();
            let back = SavedModel::from_json(&saved.to_json().unwrap()).unwrap();
            assert_eq!(back, saved);
            assert_eq!(back.model.predict(&x).unwrap(), model.predict(&x).unwrap());
        }
        let mut bad = serde_json::to_value(LearnerSpec::Majority.fit(&md, 0).unwrap().to_saved().unwrap()).unwrap();
        bad["format_version"] = 99.into();
        assert!(SavedModel::from_json(&bad.to_string()).is_err());
    }
}
