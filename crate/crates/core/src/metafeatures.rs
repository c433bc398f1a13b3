//! Data-complexity meta-features for multi-target regression datasets.
//!
//! The 58 values fall into five families: STAT (7), DIM (3), COR (20),
//! LIN (12) and SMO (16). Single-output measures are computed once per
//! target and summarized by [`Aggregate`] as avg, max, min and sd.
//!
//! Every measure runs on the min-max scaled dataset with rows in a canonical
//! order, and the randomness used by L3/S4 is seeded from a hash of that
//! canonical content. Extraction is therefore a pure function of the data and
//! does not depend on the input row order.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{minmax_scale, Dataset};
use crate::methods::pearson;
use crate::regressors::fit_ridge;
use crate::rng::{derive_seed, SplitMix64};

pub const N_META_FEATURES: usize = 58;

pub const META_FEATURE_NAMES: [&str; N_META_FEATURES] = [
    "n.samples", "n.attributes", "n.targets", "target.ratio", "pc1", "pc2", "pc3",
    "T2", "T3", "T4",
    "cor.targets.avg", "cor.targets.max", "cor.targets.min", "cor.targets.sd",
    "C1.avg", "C1.max", "C1.min", "C1.sd",
    "C2.avg", "C2.max", "C2.min", "C2.sd",
    "C3.avg", "C3.max", "C3.min", "C3.sd",
    "C4.avg", "C4.max", "C4.min", "C4.sd",
    "L1.avg", "L1.max", "L1.min", "L1.sd",
    "L2.avg", "L2.max", "L2.min", "L2.sd",
    "L3.avg", "L3.max", "L3.min", "L3.sd",
    "S1.avg", "S1.max", "S1.min", "S1.sd",
    "S2.avg", "S2.max", "S2.min", "S2.sd",
    "S3.avg", "S3.max", "S3.min", "S3.sd",
    "S4.avg", "S4.max", "S4.min", "S4.sd",
];

/// Position of a meta-feature in the canonical order.
pub fn meta_feature_index(name: &str) -> Option<usize> {
    META_FEATURE_NAMES.iter().position(|n| *n == name)
}

/// Tunable thresholds of the complexity measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    /// |Spearman| that C3 must reach.
    pub c3_threshold: f64,
    /// Residual magnitude (scaled units) under which C4 treats an example as explained.
    pub c4_residual: f64,
    /// Stabilizer of the LIN least-squares fit.
    pub lin_lambda: f64,
    /// Variance fraction that defines the intrinsic dimensionality.
    pub variance_kept: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            c3_threshold: 0.9,
            c4_residual: 0.1,
            lin_lambda: 1e-8,
            variance_kept: 0.95,
        }
    }
}

/// avg, max, min and sample sd of per-target values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub avg: f64,
    pub max: f64,
    pub min: f64,
    pub sd: f64,
}

impl Aggregate {
    pub const ZERO: Aggregate = Aggregate { avg: 0.0, max: 0.0, min: 0.0, sd: 0.0 };

    /// Sample sd (divisor count - 1); singletons and empty lists give sd = 0.
    pub fn of(values: &[f64]) -> Aggregate {
        if values.is_empty() {
            return Aggregate::ZERO;
        }
        let n = values.len() as f64;
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let avg = (values.iter().sum::<f64>() / n).clamp(min, max);
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - avg).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Aggregate { avg, max, min, sd }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.avg, self.max, self.min, self.sd]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaFeatureVector {
    pub values: Vec<f64>,
    /// Degenerate cases met during extraction.
    #[serde(default)]
    pub log: Vec<String>,
}

impl MetaFeatureVector {
    pub fn names() -> &'static [&'static str; N_META_FEATURES] {
        &META_FEATURE_NAMES
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        meta_feature_index(name).map(|i| self.values[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Scaled, canonically ordered view of a dataset plus its content seed.
struct Prepared {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    seed: u64,
}

impl Prepared {
    fn new(ds: &Dataset) -> Prepared {
        let (scaled, _) = minmax_scale(ds);
        let n = scaled.n_rows();
        let row = |i: usize| {
            scaled
                .x()
                .row(i)
                .iter()
                .chain(scaled.y().row(i).iter())
                .copied()
                .collect::<Vec<f64>>()
        };
        let rows: Vec<Vec<f64>> = (0..n).map(row).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            rows[a]
                .iter()
                .zip(&rows[b])
                .map(|(u, v)| u.total_cmp(v))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let x = scaled.x().select_rows(&order);
        let y = scaled.y().select_rows(&order);

        let mut hasher = Sha256::new();
        hasher.update((n as u64).to_le_bytes());
        hasher.update((x.ncols() as u64).to_le_bytes());
        hasher.update((y.ncols() as u64).to_le_bytes());
        for &i in &order {
            for v in &rows[i] {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        let mut first = [0u8; 8];
        first.copy_from_slice(&digest[..8]);
        Prepared {
            x,
            y,
            seed: u64::from_le_bytes(first),
        }
    }

    fn n(&self) -> usize {
        self.x.nrows()
    }

    fn m(&self) -> usize {
        self.x.ncols()
    }

    fn d(&self) -> usize {
        self.y.ncols()
    }

    fn feature(&self, j: usize) -> Vec<f64> {
        self.x.column(j).iter().copied().collect()
    }

    fn target(&self, t: usize) -> Vec<f64> {
        self.y.column(t).iter().copied().collect()
    }
}

/// 1-based midranks.
pub fn midranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson on midranks); 0 if either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&midranks(a), &midranks(b))
}

/// Eigenvalues of the feature correlation matrix, descending, clamped at 0.
/// Constant columns contribute a zero eigenvalue.
fn pca_spectrum(x: &DMatrix<f64>) -> Vec<f64> {
    let (n, m) = x.shape();
    let nf = n as f64;
    let mut z = DMatrix::zeros(n, m);
    for j in 0..m {
        let col = x.column(j);
        let mean = col.sum() / nf;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf).sqrt();
        if sd > 0.0 {
            for i in 0..n {
                z[(i, j)] = (x[(i, j)] - mean) / sd;
            }
        }
    }
    let corr = z.tr_mul(&z) / nf;
    let mut eig: Vec<f64> = SymmetricEigen::new(corr)
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0))
        .collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig
}

fn stat_values(p: &Prepared) -> [f64; 7] {
    let spectrum = pca_spectrum(&p.x);
    let total: f64 = spectrum.iter().sum();
    let pc = |i: usize| {
        if total > 0.0 {
            spectrum.get(i).map_or(0.0, |v| v / total)
        } else {
            0.0
        }
    };
    [
        p.n() as f64,
        p.m() as f64,
        p.d() as f64,
        p.d() as f64 / p.m() as f64,
        pc(0),
        pc(1),
        pc(2),
    ]
}

/// Smallest number of components whose variance fraction reaches `kept`.
fn intrinsic_dim(x: &DMatrix<f64>, kept: f64) -> usize {
    let spectrum = pca_spectrum(x);
    let total: f64 = spectrum.iter().sum();
    if total <= 0.0 {
        return 0;
    }
    let mut acc = 0.0;
    for (i, v) in spectrum.iter().enumerate() {
        acc += v;
        if acc / total >= kept - 1e-12 {
            return i + 1;
        }
    }
    spectrum.len()
}

fn dim_values(p: &Prepared, cfg: &ExtractionConfig) -> [f64; 3] {
    let (n, m) = (p.n() as f64, p.m() as f64);
    let md = intrinsic_dim(&p.x, cfg.variance_kept) as f64;
    [n / m, md / n, md / m]
}

/// Examples that must be removed before |Spearman(a, b)| reaches `threshold`.
///
/// Greedy: each step removes the example whose ranks disagree most with the
/// current direction of association, |ra - rb| when rho >= 0 and
/// |ra + rb - (n + 1)| otherwise, lowest index on ties. Ranks are updated
/// incrementally. Returns `None` once `bound` removals have been made without
/// success, and `Some(n)` when the threshold is unreachable.
pub(crate) fn c3_removals(a: &[f64], b: &[f64], threshold: f64, bound: usize) -> Option<usize> {
    let n = a.len();
    let mut ra = midranks(a);
    let mut rb = midranks(b);
    let mut alive: Vec<usize> = (0..n).collect();
    let mut removed = 0;
    loop {
        let cnt = alive.len();
        let cf = cnt as f64;
        let mean = (cf + 1.0) / 2.0;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for &i in &alive {
            let (da, db) = (ra[i] - mean, rb[i] - mean);
            sab += da * db;
            saa += da * da;
            sbb += db * db;
        }
        let rho = if saa == 0.0 || sbb == 0.0 { 0.0 } else { sab / (saa * sbb).sqrt() };
        if rho.abs() >= threshold {
            return Some(removed);
        }
        if saa == 0.0 || sbb == 0.0 || cnt <= 2 {
            return Some(n);
        }
        if removed >= bound {
            return None;
        }
        let mut worst = alive[0];
        let mut worst_gap = f64::NEG_INFINITY;
        for &i in &alive {
            let gap = if rho >= 0.0 {
                (ra[i] - rb[i]).abs()
            } else {
                (ra[i] + rb[i] - (cf + 1.0)).abs()
            };
            if gap > worst_gap {
                worst_gap = gap;
                worst = i;
            }
        }
        let (va, vb) = (a[worst], b[worst]);
        alive.retain(|&i| i != worst);
        for &i in &alive {
            if a[i] > va {
                ra[i] -= 1.0;
            } else if a[i] == va {
                ra[i] -= 0.5;
            }
            if b[i] > vb {
                rb[i] -= 1.0;
            } else if b[i] == vb {
                rb[i] -= 0.5;
            }
        }
        removed += 1;
    }
}

/// Fraction of examples that remain unexplained after iteratively fitting
/// univariate linear models on the most correlated unused feature and
/// dropping examples with |residual| <= `residual`.
pub(crate) fn c4_remaining(features: &[Vec<f64>], y: &[f64], residual: f64) -> f64 {
    let n = y.len();
    let mut rows: Vec<usize> = (0..n).collect();
    let mut target: Vec<f64> = y.to_vec();
    let mut unused: Vec<usize> = (0..features.len()).collect();
    while !unused.is_empty() && !rows.is_empty() {
        let r: Vec<f64> = rows.iter().map(|&i| target[i]).collect();
        let mut best = unused[0];
        let mut best_rho = f64::NEG_INFINITY;
        for &f in &unused {
            let xf: Vec<f64> = rows.iter().map(|&i| features[f][i]).collect();
            let rho = spearman(&xf, &r).abs();
            if rho > best_rho {
                best_rho = rho;
                best = f;
            }
        }
        let xf: Vec<f64> = rows.iter().map(|&i| features[best][i]).collect();
        let cnt = rows.len() as f64;
        let mx = xf.iter().sum::<f64>() / cnt;
        let mr = r.iter().sum::<f64>() / cnt;
        let sxx: f64 = xf.iter().map(|v| (v - mx).powi(2)).sum();
        let sxr: f64 = xf.iter().zip(&r).map(|(u, v)| (u - mx) * (v - mr)).sum();
        let slope = if sxx > 0.0 { sxr / sxx } else { 0.0 };
        let intercept = mr - slope * mx;
        unused.retain(|&f| f != best);
        let mut kept = Vec::with_capacity(rows.len());
        for (k, &i) in rows.iter().enumerate() {
            let e = r[k] - (intercept + slope * xf[k]);
            if e.abs() > residual {
                target[i] = e;
                kept.push(i);
            }
        }
        if kept.len() == rows.len() {
            break;
        }
        rows = kept;
    }
    rows.len() as f64 / n as f64
}

fn cor_values(p: &Prepared, cfg: &ExtractionConfig) -> [f64; 20] {
    let (n, m, d) = (p.n(), p.m(), p.d());
    let features: Vec<Vec<f64>> = (0..m).map(|j| p.feature(j)).collect();
    let feature_ranks: Vec<Vec<f64>> = features.iter().map(|f| midranks(f)).collect();
    let targets: Vec<Vec<f64>> = (0..d).map(|t| p.target(t)).collect();

    let mut pairs = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            pairs.push(pearson(&targets[i], &targets[j]).abs());
        }
    }

    let (mut c1, mut c2, mut c3, mut c4) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for y in &targets {
        let yr = midranks(y);
        let rhos: Vec<f64> = feature_ranks.iter().map(|fr| pearson(fr, &yr).abs()).collect();
        c1.push(rhos.iter().copied().fold(0.0, f64::max));
        c2.push(rhos.iter().sum::<f64>() / m as f64);

        // Visit features by decreasing |rho| so the pruning bound tightens early.
        let mut visit: Vec<usize> = (0..m).collect();
        visit.sort_by(|&a, &b| rhos[b].total_cmp(&rhos[a]).then(a.cmp(&b)));
        let mut best = n;
        for j in visit {
            if let Some(r) = c3_removals(&features[j], y, cfg.c3_threshold, best) {
                best = best.min(r);
            }
        }
        c3.push(best as f64 / n as f64);
        c4.push(c4_remaining(&features, y, cfg.c4_residual));
    }

    let mut out = [0.0; 20];
    for (k, agg) in [
        Aggregate::of(&pairs),
        Aggregate::of(&c1),
        Aggregate::of(&c2),
        Aggregate::of(&c3),
        Aggregate::of(&c4),
    ]
    .iter()
    .enumerate()
    {
        out[4 * k..4 * k + 4].copy_from_slice(&agg.to_array());
    }
    out
}

/// Synthetic points made by interpolating pairs of examples that are
/// neighbours in target order. One uniform weight per point, shared by X and y.
fn interpolation_set(x: &DMatrix<f64>, y: &[f64], seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let (n, m) = x.shape();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    let mut rng = SplitMix64::new(seed);
    let mut xs = DMatrix::zeros(n, m);
    let mut ys = Vec::with_capacity(n);
    for r in 0..n {
        let p = rng.below(n - 1);
        let (a, b) = (order[p], order[p + 1]);
        let u = rng.next_f64();
        for c in 0..m {
            xs[(r, c)] = u * x[(a, c)] + (1.0 - u) * x[(b, c)];
        }
        ys.push(u * y[a] + (1.0 - u) * y[b]);
    }
    (xs, ys)
}

fn lin_values(p: &Prepared, cfg: &ExtractionConfig, log: &mut Vec<String>) -> [f64; 12] {
    let (n, m, d) = (p.n(), p.m(), p.d());
    if n <= m {
        log.push(format!("LIN: n={n} <= m={m}, fit relies on the ridge stabilizer"));
    }
    let (mut l1, mut l2, mut l3) = (Vec::new(), Vec::new(), Vec::new());
    for t in 0..d {
        let y = p.target(t);
        let yv = DVector::from_column_slice(&y);
        let (a, b, c) = match fit_ridge(&p.x, &yv, cfg.lin_lambda) {
            Ok(model) => {
                let w = DVector::from_column_slice(&model.weights);
                let fitted = (&p.x * &w).add_scalar(model.intercept);
                let res = &yv - &fitted;
                let l1 = res.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
                let l2 = res.iter().map(|v| v * v).sum::<f64>() / n as f64;
                let (xs, ys) = interpolation_set(&p.x, &y, derive_seed(p.seed, t as u64));
                let pred = (&xs * &w).add_scalar(model.intercept);
                let l3 = pred.iter().zip(&ys).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64;
                (l1, l2, l3)
            }
            Err(e) => {
                log.push(format!("LIN target {t}: {e}"));
                (0.0, 0.0, 0.0)
            }
        };
        l1.push(a);
        l2.push(b);
        l3.push(c);
    }
    let mut out = [0.0; 12];
    for (k, v) in [&l1, &l2, &l3].iter().enumerate() {
        out[4 * k..4 * k + 4].copy_from_slice(&Aggregate::of(v).to_array());
    }
    out
}

fn sq_dist(x: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    (0..x.ncols()).map(|c| (x[(i, c)] - x[(j, c)]).powi(2)).sum()
}

/// Euclidean MST edges by Prim's algorithm, comparing edges by
/// (squared length, low vertex, high vertex) so ties resolve to the
/// lexicographically smaller pair and the tree is unique.
pub fn euclidean_mst(x: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = x.nrows();
    if n < 2 {
        return Vec::new();
    }
    let key_of = |w: f64, u: usize, v: usize| (w, u.min(v), u.max(v));
    let less = |a: &(f64, usize, usize), b: &(f64, usize, usize)| {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)).is_lt()
    };
    let mut in_tree = vec![false; n];
    let mut key: Vec<(f64, usize, usize)> = (0..n).map(|v| key_of(sq_dist(x, 0, v), 0, v)).collect();
    in_tree[0] = true;
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 1..n {
        let mut pick = usize::MAX;
        for v in 0..n {
            if !in_tree[v] && (pick == usize::MAX || less(&key[v], &key[pick])) {
                pick = v;
            }
        }
        in_tree[pick] = true;
        edges.push((key[pick].1, key[pick].2));
        for v in 0..n {
            if !in_tree[v] {
                let cand = key_of(sq_dist(x, pick, v), pick, v);
                if less(&cand, &key[v]) {
                    key[v] = cand;
                }
            }
        }
    }
    edges
}

/// Index of each row's nearest other row (ties to the lower index).
fn nearest_other(x: &DMatrix<f64>) -> Vec<usize> {
    let n = x.nrows();
    (0..n)
        .map(|i| {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d = sq_dist(x, i, j);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect()
}

fn nearest_to(x: &DMatrix<f64>, q: &DMatrix<f64>, r: usize) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for j in 0..x.nrows() {
        let d: f64 = (0..x.ncols()).map(|c| (x[(j, c)] - q[(r, c)]).powi(2)).sum();
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

fn smo_values(p: &Prepared) -> [f64; 16] {
    let (n, d) = (p.n(), p.d());
    let mst = euclidean_mst(&p.x);
    let nn = nearest_other(&p.x);
    let (mut s1, mut s2, mut s3, mut s4) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for t in 0..d {
        let y = p.target(t);
        s1.push(mst.iter().map(|&(a, b)| (y[a] - y[b]).abs()).sum::<f64>() / mst.len() as f64);

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
        s2.push(
            order.windows(2).map(|w| sq_dist(&p.x, w[0], w[1]).sqrt()).sum::<f64>() / (n - 1) as f64,
        );

        s3.push((0..n).map(|i| (y[nn[i]] - y[i]).powi(2)).sum::<f64>() / n as f64);

        let (xs, ys) = interpolation_set(&p.x, &y, derive_seed(p.seed, t as u64));
        s4.push((0..n).map(|r| (y[nearest_to(&p.x, &xs, r)] - ys[r]).powi(2)).sum::<f64>() / n as f64);
    }
    let mut out = [0.0; 16];
    for (k, v) in [&s1, &s2, &s3, &s4].iter().enumerate() {
        out[4 * k..4 * k + 4].copy_from_slice(&Aggregate::of(v).to_array());
    }
    out
}

/// STAT family: n.samples, n.attributes, n.targets, target.ratio, pc1..pc3.
pub fn extract_stat(ds: &Dataset) -> [f64; 7] {
    stat_values(&Prepared::new(ds))
}

/// DIM family: T2, T3, T4.
pub fn extract_dim(ds: &Dataset) -> [f64; 3] {
    dim_values(&Prepared::new(ds), &ExtractionConfig::default())
}

/// COR family: cor.targets, C1, C2, C3, C4, each as avg/max/min/sd.
pub fn extract_cor(ds: &Dataset) -> [f64; 20] {
    cor_values(&Prepared::new(ds), &ExtractionConfig::default())
}

/// LIN family: L1, L2, L3, each as avg/max/min/sd.
pub fn extract_lin(ds: &Dataset) -> [f64; 12] {
    lin_values(&Prepared::new(ds), &ExtractionConfig::default(), &mut Vec::new())
}

/// SMO family: S1, S2, S3, S4, each as avg/max/min/sd.
pub fn extract_smo(ds: &Dataset) -> [f64; 16] {
    smo_values(&Prepared::new(ds))
}

pub fn extract_all(ds: &Dataset) -> MetaFeatureVector {
    extract_all_with(ds, &ExtractionConfig::default())
}

/// All 58 meta-features in canonical order. Never fails: non-finite entries
/// are replaced by 0 and noted in the log.
pub fn extract_all_with(ds: &Dataset, cfg: &ExtractionConfig) -> MetaFeatureVector {
    let p = Prepared::new(ds);
    let mut log = Vec::new();
    let mut values = Vec::with_capacity(N_META_FEATURES);
    values.extend_from_slice(&stat_values(&p));
    values.extend_from_slice(&dim_values(&p, cfg));
    values.extend_from_slice(&cor_values(&p, cfg));
    values.extend_from_slice(&lin_values(&p, cfg, &mut log));
    values.extend_from_slice(&smo_values(&p));
    for (i, v) in values.iter_mut().enumerate() {
        if !v.is_finite() {
            log.push(format!("{} was not finite; set to 0", META_FEATURE_NAMES[i]));
            *v = 0.0;
        }
    }
    MetaFeatureVector { values, log }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_and_58() {
        let mut names = META_FEATURE_NAMES.to_vec();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 58);
        assert_eq!(meta_feature_index("cor.targets.sd"), Some(13));
        assert_eq!(meta_feature_index("S4.sd"), Some(57));
    }

    #[test]
    fn aggregate_rules() {
        let a = Aggregate::of(&[1.0, 2.0, 3.0]);
        assert_eq!((a.avg, a.max, a.min), (2.0, 3.0, 1.0));
        assert!((a.sd - 1.0).abs() < 1e-15);
        let s = Aggregate::of(&[0.1]);
        assert_eq!(s.sd, 0.0);
        let same = Aggregate::of(&[0.1, 0.1, 0.1]);
        assert!(same.min <= same.avg && same.avg <= same.max);
        assert_eq!(Aggregate::of(&[]), Aggregate::ZERO);
    }

    #[test]
    fn midranks_with_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 8.0, 27.0]), 1.0);
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 8.0, 27.0]), 0.0);
    }

    #[test]
    fn c3_already_correlated_needs_no_removal() {
        let a: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(c3_removals(&a, &a, 0.9, 10), Some(0));
        let constant = vec![1.0; 10];
        assert_eq!(c3_removals(&constant, &a, 0.9, 10), Some(10));
    }

    #[test]
    fn c3_bound_prunes() {
        let a: Vec<f64> = (0..20).map(f64::from).collect();
        let b: Vec<f64> = (0..20).map(|i| ((i * 7) % 20) as f64).collect();
        let full = c3_removals(&a, &b, 0.9, usize::MAX).unwrap();
        assert!(full > 1);
        assert_eq!(c3_removals(&a, &b, 0.9, full - 1), None);
        assert_eq!(c3_removals(&a, &b, 0.9, full), Some(full));
    }

    #[test]
    fn c4_single_linear_feature_explains_everything() {
        let f: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        let y = f.iter().map(|v| 0.5 * v + 0.1).collect::<Vec<_>>();
        assert_eq!(c4_remaining(&[f], &y, 0.1), 0.0);
    }

    #[test]
    fn pca_on_rank_one() {
        let x = DMatrix::from_fn(10, 2, |i, j| (i as f64) * if j == 0 { 1.0 } else { 2.0 });
        let spec = pca_spectrum(&x);
        assert!((spec[0] - 2.0).abs() < 1e-12);
        assert!(spec[1].abs() < 1e-12);
        assert_eq!(intrinsic_dim(&x, 0.95), 1);
    }

    #[test]
    fn mst_of_a_line() {
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 3.0, 1.0, 2.0]);
        let mut e = euclidean_mst(&x);
        e.sort_unstable();
        assert_eq!(e, vec![(0, 2), (1, 3), (2, 3)]);
    }
}
