//! Multi-target regression methods (ST, SST, ERC, MOTC), aRRMSE under
//! k-fold cross-validation, and best-method selection.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_kfold, Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::regressors::{BaseModel, BaseRegressorSpec};
use crate::rng::{derive_seed, SplitMix64};

/// Candidate methods. Declaration order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MtrMethodId {
    #[serde(rename = "ST")]
    St,
    #[serde(rename = "SST")]
    Sst,
    #[serde(rename = "MOTC")]
    Motc,
    #[serde(rename = "ERC")]
    Erc,
}

impl MtrMethodId {
    pub const ALL: [MtrMethodId; 4] = [MtrMethodId::St, MtrMethodId::Sst, MtrMethodId::Motc, MtrMethodId::Erc];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MtrMethodId::St => "ST",
            MtrMethodId::Sst => "SST",
            MtrMethodId::Motc => "MOTC",
            MtrMethodId::Erc => "ERC",
        }
    }
}

impl fmt::Display for MtrMethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MtrMethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// How SST builds the stage-2 augmentation on the training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SstVariant {
    /// In-sample stage-1 predictions.
    #[default]
    InSample,
    /// Out-of-fold stage-1 predictions from an internal k-fold split.
    InternalCv { folds: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtrConfig {
    pub base: BaseRegressorSpec,
    pub n_chains: usize,
    #[serde(default)]
    pub sst_variant: SstVariant,
}

impl Default for MtrConfig {
    fn default() -> Self {
        MtrConfig {
            base: BaseRegressorSpec::default(),
            n_chains: 10,
            sst_variant: SstVariant::InSample,
        }
    }
}

impl MtrConfig {
    pub fn with_base(base: BaseRegressorSpec) -> Self {
        MtrConfig {
            base,
            ..Default::default()
        }
    }
}

/// Average relative root mean squared error over targets.
///
/// The reference mean is taken over the evaluated rows, so predicting each
/// target's mean scores exactly 1. A target that is constant in `y_true`
/// contributes 0 when predicted exactly and is an error otherwise.
pub fn arrmse(y_true: &DMatrix<f64>, y_pred: &DMatrix<f64>) -> Result<f64> {
    if y_true.shape() != y_pred.shape() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            actual: y_pred.len(),
        });
    }
    let (n, d) = y_true.shape();
    if n == 0 || d == 0 {
        return Err(Error::InvalidDataset("aRRMSE on an empty matrix".into()));
    }
    let mut total = 0.0;
    for t in 0..d {
        let truth = y_true.column(t);
        let mean = truth.sum() / n as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            num += (truth[i] - y_pred[(i, t)]).powi(2);
            den += (truth[i] - mean).powi(2);
        }
        if den == 0.0 {
            if num == 0.0 {
                continue;
            }
            return Err(Error::DegenerateTarget { target: t });
        }
        total += (num / den).sqrt();
    }
    Ok(total / d as f64)
}

/// Rooted tree over target indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetTree {
    pub root: usize,
    pub parent: Vec<Option<usize>>,
}

impl TargetTree {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn children(&self, t: usize) -> Vec<usize> {
        (0..self.len()).filter(|&c| self.parent[c] == Some(t)).collect()
    }

    /// Undirected edges as (low, high) pairs, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .parent
            .iter()
            .enumerate()
            .filter_map(|(c, p)| p.map(|p| (c.min(p), c.max(p))))
            .collect();
        e.sort_unstable();
        e
    }

    /// Children before parents; siblings in ascending index order.
    pub fn post_order(&self) -> Vec<usize> {
        fn visit(tree: &TargetTree, t: usize, out: &mut Vec<usize>) {
            for c in tree.children(t) {
                visit(tree, c, out);
            }
            out.push(t);
        }
        let mut out = Vec::with_capacity(self.len());
        visit(self, self.root, &mut out);
        out
    }

    /// Build from a root and undirected edges; fails unless they form a spanning tree.
    pub fn from_edges(n: usize, root: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if root >= n || edges.len() + 1 != n {
            return Err(Error::InvalidConfig("edges do not form a spanning tree".into()));
        }
        let mut parent = vec![None; n];
        let mut seen = vec![false; n];
        seen[root] = true;
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            for &(a, b) in edges {
                let v = if a == u { b } else if b == u { a } else { continue };
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some(u);
                    stack.push(v);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidConfig("edges do not connect every target".into()));
        }
        Ok(TargetTree { root, parent })
    }
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (da, db) = (x - ma, y - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// |Pearson| between every pair of columns; the diagonal is 0.
pub fn abs_correlation_matrix(y: &DMatrix<f64>) -> DMatrix<f64> {
    let d = y.ncols();
    let cols: Vec<Vec<f64>> = y.column_iter().map(|c| c.iter().copied().collect()).collect();
    let mut c = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i + 1..d {
            let r = pearson(&cols[i], &cols[j]).abs();
            c[(i, j)] = r;
            c[(j, i)] = r;
        }
    }
    c
}

/// Maximum spanning tree of the targets under |Pearson| weights.
///
/// Kruskal over edges sorted by weight descending, then (i, j) ascending.
/// The root is the target with the largest summed |correlation|, lowest index
/// on ties.
pub fn build_target_tree(y: &DMatrix<f64>) -> TargetTree {
    tree_from_weights(&abs_correlation_matrix(y))
}

pub(crate) fn tree_from_weights(w: &DMatrix<f64>) -> TargetTree {
    let d = w.nrows();
    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            edges.push((w[(i, j)], i, j));
        }
    }
    edges.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut comp: Vec<usize> = (0..d).collect();
    fn find(comp: &mut [usize], mut v: usize) -> usize {
        while comp[v] != v {
            comp[v] = comp[comp[v]];
            v = comp[v];
        }
        v
    }
    let mut chosen = Vec::with_capacity(d.saturating_sub(1));
    for (_, i, j) in edges {
        let (ri, rj) = (find(&mut comp, i), find(&mut comp, j));
        if ri != rj {
            comp[ri] = rj;
            chosen.push((i, j));
        }
    }
    let mut root = 0;
    let mut best = f64::NEG_INFINITY;
    for t in 0..d {
        let s: f64 = (0..d).filter(|&u| u != t).map(|u| w[(t, u)]).sum();
        if s > best {
            best = s;
            root = t;
        }
    }
    TargetTree::from_edges(d, root, &chosen).expect("Kruskal yields a spanning tree")
}

/// One regressor chain: `models[j]` predicts target `order[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub order: Vec<usize>,
    pub models: Vec<BaseModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MtrStructure {
    St {
        models: Vec<BaseModel>,
    },
    Sst {
        stage1: Vec<BaseModel>,
        stage2: Vec<BaseModel>,
    },
    Erc {
        chains: Vec<Chain>,
    },
    /// `models[t]` consumes X followed by the predictions of `tree.children(t)`.
    Motc {
        tree: TargetTree,
        models: Vec<BaseModel>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtrModel {
    pub method: MtrMethodId,
    pub base: BaseRegressorSpec,
    pub n_features: usize,
    pub n_targets: usize,
    pub structure: MtrStructure,
}

impl MtrModel {
    pub fn n_base_models(&self) -> usize {
        match &self.structure {
            MtrStructure::St { models } | MtrStructure::Motc { models, .. } => models.len(),
            MtrStructure::Sst { stage1, stage2 } => stage1.len() + stage2.len(),
            MtrStructure::Erc { chains } => chains.iter().map(|c| c.models.len()).sum(),
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: x.ncols(),
            });
        }
        let (n, d) = (x.nrows(), self.n_targets);
        match &self.structure {
            MtrStructure::St { models } => predict_columns(models, x),
            MtrStructure::Sst { stage1, stage2 } => {
                let first = predict_columns(stage1, x)?;
                predict_columns(stage2, &hstack(x, &first))
            }
            MtrStructure::Erc { chains } => {
                let mut sum = DMatrix::zeros(n, d);
                for chain in chains {
                    sum += predict_chain(chain, x)?;
                }
                Ok(sum / chains.len() as f64)
            }
            MtrStructure::Motc { tree, models } => {
                let mut out = DMatrix::zeros(n, d);
                for t in tree.post_order() {
                    let input = with_children(x, &out, &tree.children(t));
                    out.set_column(t, &models[t].predict(&input)?);
                }
                Ok(out)
            }
        }
    }
}

pub fn predict(model: &MtrModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    model.predict(x)
}

fn hstack(x: &DMatrix<f64>, extra: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = x.shape();
    let mut out = DMatrix::zeros(n, m + extra.ncols());
    out.columns_mut(0, m).copy_from(x);
    out.columns_mut(m, extra.ncols()).copy_from(extra);
    out
}

fn with_children(x: &DMatrix<f64>, y: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    hstack(x, &y.select_columns(cols))
}

fn predict_columns(models: &[BaseModel], x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(x.nrows(), models.len());
    for (t, model) in models.iter().enumerate() {
        out.set_column(t, &model.predict(x)?);
    }
    Ok(out)
}

fn predict_chain(chain: &Chain, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(x.nrows(), chain.order.len());
    for (j, model) in chain.models.iter().enumerate() {
        let input = with_children(x, &out, &chain.order[..j]);
        out.set_column(chain.order[j], &model.predict(&input)?);
    }
    Ok(out)
}

fn fit_target(spec: &BaseRegressorSpec, x: &DMatrix<f64>, y: DVector<f64>, what: impl Fn() -> String) -> Result<BaseModel> {
    spec.fit(x, &y).map_err(|e| e.context(what()))
}

fn fit_columns(spec: &BaseRegressorSpec, x: &DMatrix<f64>, y: &DMatrix<f64>, stage: &str) -> Result<Vec<BaseModel>> {
    (0..y.ncols())
        .map(|t| fit_target(spec, x, y.column(t).into_owned(), || format!("{stage} target {t}")))
        .collect()
}

fn model(ds: &Dataset, method: MtrMethodId, base: BaseRegressorSpec, structure: MtrStructure) -> MtrModel {
    MtrModel {
        method,
        base,
        n_features: ds.n_features(),
        n_targets: ds.n_targets(),
        structure,
    }
}

/// One independent model per target.
pub fn fit_st(ds: &Dataset, spec: &BaseRegressorSpec) -> Result<MtrModel> {
    let models = fit_columns(spec, ds.x(), ds.y(), "ST")?;
    Ok(model(ds, MtrMethodId::St, *spec, MtrStructure::St { models }))
}

/// Stacked single-target with in-sample stage-1 augmentation.
pub fn fit_sst(ds: &Dataset, spec: &BaseRegressorSpec) -> Result<MtrModel> {
    fit_sst_variant(ds, spec, SstVariant::InSample, 0)
}

pub fn fit_sst_variant(ds: &Dataset, spec: &BaseRegressorSpec, variant: SstVariant, seed: u64) -> Result<MtrModel> {
    let stage1 = fit_columns(spec, ds.x(), ds.y(), "SST stage 1")?;
    let meta = match variant {
        SstVariant::InSample => predict_columns(&stage1, ds.x())?,
        SstVariant::InternalCv { folds } => {
            let plan = split_kfold(ds.n_rows(), folds, seed)?;
            let mut oof = DMatrix::zeros(ds.n_rows(), ds.n_targets());
            for f in 0..plan.k {
                let train = plan.train_indices(f);
                let test = plan.test_indices(f);
                let models = fit_columns(spec, &ds.x().select_rows(&train), &ds.y().select_rows(&train), "SST inner fold")?;
                let pred = predict_columns(&models, &ds.x().select_rows(&test))?;
                for (r, &i) in test.iter().enumerate() {
                    oof.set_row(i, &pred.row(r));
                }
            }
            oof
        }
    };
    let stage2 = fit_columns(spec, &hstack(ds.x(), &meta), ds.y(), "SST stage 2")?;
    Ok(model(ds, MtrMethodId::Sst, *spec, MtrStructure::Sst { stage1, stage2 }))
}

fn factorial_capped(d: usize, cap: usize) -> usize {
    let mut f: usize = 1;
    for i in 2..=d {
        f = match f.checked_mul(i) {
            Some(v) if v <= cap => v,
            _ => return cap.saturating_add(1),
        };
    }
    f
}

fn all_permutations(d: usize) -> Vec<Vec<usize>> {
    // Lexicographic order via next-permutation.
    let mut p: Vec<usize> = (0..d).collect();
    let mut out = vec![p.clone()];
    loop {
        let Some(i) = (0..d.saturating_sub(1)).rev().find(|&i| p[i] < p[i + 1]) else {
            return out;
        };
        let j = (i + 1..d).rev().find(|&j| p[j] > p[i]).unwrap();
        p.swap(i, j);
        p[i + 1..].reverse();
        out.push(p.clone());
    }
}

/// `min(n_chains, d!)` distinct target orders. When `d! <= n_chains` every
/// permutation is used in lexicographic order; otherwise orders are drawn by
/// shuffling until enough distinct ones are found.
pub fn sample_chain_orders(d: usize, n_chains: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n_chains < 1 {
        return Err(Error::InvalidConfig("ERC needs at least one chain".into()));
    }
    if factorial_capped(d, n_chains) <= n_chains {
        return Ok(all_permutations(d));
    }
    let mut rng = SplitMix64::new(seed);
    let mut orders: Vec<Vec<usize>> = Vec::with_capacity(n_chains);
    while orders.len() < n_chains {
        let mut p: Vec<usize> = (0..d).collect();
        rng.shuffle(&mut p);
        if !orders.contains(&p) {
            orders.push(p);
        }
    }
    Ok(orders)
}

/// Ensemble of regressor chains trained on true values of earlier targets.
pub fn fit_erc(ds: &Dataset, spec: &BaseRegressorSpec, n_chains: usize, seed: u64) -> Result<MtrModel> {
    let orders = sample_chain_orders(ds.n_targets(), n_chains, seed)?;
    fit_erc_with_orders(ds, spec, &orders)
}

pub fn fit_erc_with_orders(ds: &Dataset, spec: &BaseRegressorSpec, orders: &[Vec<usize>]) -> Result<MtrModel> {
    let d = ds.n_targets();
    if orders.is_empty() {
        return Err(Error::InvalidConfig("ERC needs at least one chain".into()));
    }
    let mut chains = Vec::with_capacity(orders.len());
    for (c, order) in orders.iter().enumerate() {
        let mut sorted = order.clone();
        sorted.sort_unstable();
        if sorted != (0..d).collect::<Vec<_>>() {
            return Err(Error::InvalidConfig(format!("chain {c} is not a permutation of the targets")));
        }
        let models = order
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                let input = with_children(ds.x(), ds.y(), &order[..j]);
                fit_target(spec, &input, ds.target(t), || format!("ERC chain {c} target {t}"))
            })
            .collect::<Result<Vec<_>>>()?;
        chains.push(Chain {
            order: order.clone(),
            models,
        });
    }
    Ok(model(ds, MtrMethodId::Erc, *spec, MtrStructure::Erc { chains }))
}

/// Multi-output tree chaining over the correlation tree of the training targets.
pub fn fit_motc(ds: &Dataset, spec: &BaseRegressorSpec) -> Result<MtrModel> {
    fit_motc_with_tree(ds, spec, build_target_tree(ds.y()))
}

/// Train leaves first; each target's model sees X plus the in-sample
/// predictions of its children.
pub fn fit_motc_with_tree(ds: &Dataset, spec: &BaseRegressorSpec, tree: TargetTree) -> Result<MtrModel> {
    let (n, d) = (ds.n_rows(), ds.n_targets());
    if tree.len() != d {
        return Err(Error::DimensionMismatch { expected: d, actual: tree.len() });
    }
    let mut preds = DMatrix::zeros(n, d);
    let mut slots: Vec<Option<BaseModel>> = vec![None; d];
    for t in tree.post_order() {
        let input = with_children(ds.x(), &preds, &tree.children(t));
        let m = fit_target(spec, &input, ds.target(t), || format!("MOTC node {t}"))?;
        preds.set_column(t, &m.predict(&input)?);
        slots[t] = Some(m);
    }
    let models = slots.into_iter().map(|m| m.expect("post-order visits every node")).collect();
    Ok(model(ds, MtrMethodId::Motc, *spec, MtrStructure::Motc { tree, models }))
}

/// Fit any method. `seed` drives ERC chain sampling and the SST inner split.
pub fn fit_method(ds: &Dataset, method: MtrMethodId, cfg: &MtrConfig, seed: u64) -> Result<MtrModel> {
    cfg.base.validate()?;
    match method {
        MtrMethodId::St => fit_st(ds, &cfg.base),
        MtrMethodId::Sst => fit_sst_variant(ds, &cfg.base, cfg.sst_variant, seed),
        MtrMethodId::Erc => fit_erc(ds, &cfg.base, cfg.n_chains, seed),
        MtrMethodId::Motc => fit_motc(ds, &cfg.base),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: MtrMethodId,
    /// Mean of `per_fold`.
    pub arrmse: f64,
    pub per_fold: Vec<f64>,
}

fn fold_score(ds: &Dataset, method: MtrMethodId, cfg: &MtrConfig, plan: &FoldPlan, fold: usize, seed: u64) -> Result<f64> {
    let train = ds.select_rows(&plan.train_indices(fold))?;
    let test = plan.test_indices(fold);
    let model = fit_method(&train, method, cfg, derive_seed(seed, fold as u64 + 1))?;
    let pred = model.predict(&ds.x().select_rows(&test))?;
    arrmse(&ds.y().select_rows(&test), &pred)
}

/// k-fold CV score of one method on a given fold plan.
pub fn cv_evaluate_with_plan(ds: &Dataset, method: MtrMethodId, cfg: &MtrConfig, plan: &FoldPlan, seed: u64) -> Result<MethodScore> {
    if plan.n() != ds.n_rows() {
        return Err(Error::DimensionMismatch { expected: ds.n_rows(), actual: plan.n() });
    }
    let per_fold = (0..plan.k)
        .into_par_iter()
        .map(|f| {
            fold_score(ds, method, cfg, plan, f, seed)
                .map_err(|e| e.context(format!("{method} fold {f}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let arrmse = per_fold.iter().sum::<f64>() / per_fold.len() as f64;
    Ok(MethodScore { method, arrmse, per_fold })
}

/// The fold plan used by [`cv_evaluate`] for a dataset of `n` rows.
pub fn cv_plan(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    split_kfold(n, k, derive_seed(seed, 0))
}

pub fn cv_evaluate(ds: &Dataset, method: MtrMethodId, cfg: &MtrConfig, k: usize, seed: u64) -> Result<MethodScore> {
    let plan = cv_plan(ds.n_rows(), k, seed)?;
    cv_evaluate_with_plan(ds, method, cfg, &plan, seed)
}

/// Scores for all four methods on one shared fold plan, in [`MtrMethodId::ALL`] order.
pub fn cv_evaluate_all(ds: &Dataset, cfg: &MtrConfig, k: usize, seed: u64) -> Result<Vec<MethodScore>> {
    let plan = cv_plan(ds.n_rows(), k, seed)?;
    MtrMethodId::ALL
        .par_iter()
        .map(|&m| cv_evaluate_with_plan(ds, m, cfg, &plan, seed))
        .collect()
}

/// Argmin of aRRMSE; exact ties resolve to the earlier method in [`MtrMethodId::ALL`].
pub fn select_best_method(scores: &[MethodScore]) -> Result<MtrMethodId> {
    let mut by_method: [Option<f64>; 4] = [None; 4];
    for s in scores {
        let slot = &mut by_method[s.method.index()];
        if slot.is_some() {
            return Err(Error::InvalidConfig(format!("duplicate score for {}", s.method)));
        }
        *slot = Some(s.arrmse);
    }
    let mut best: Option<(MtrMethodId, f64)> = None;
    for m in MtrMethodId::ALL {
        let v = by_method[m.index()].ok_or_else(|| Error::InvalidConfig(format!("missing score for {m}")))?;
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((m, v));
        }
    }
    Ok(best.expect("four methods").0)
}

/// Same rule over a plain score array indexed by [`MtrMethodId::index`].
pub fn best_of(scores: &[f64; 4]) -> MtrMethodId {
    let mut best = 0;
    for i in 1..4 {
        if scores[i] < scores[best] {
            best = i;
        }
    }
    MtrMethodId::ALL[best]
}
