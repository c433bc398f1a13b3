//! Dense multi-target datasets, CSV persistence, min-max scaling and k-fold plans.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// `n` rows of `m` input features and `d` continuous targets.
///
/// Immutable after construction; every constructor validates shape, finiteness
/// and column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    feature_names: Vec<String>,
    target_names: Vec<String>,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        x: DMatrix<f64>,
        y: DMatrix<f64>,
        feature_names: Vec<String>,
        target_names: Vec<String>,
    ) -> Result<Self> {
        let name = name.into();
        let (n, m) = x.shape();
        let d = y.ncols();
        if n < 2 {
            return Err(Error::InvalidDataset(format!("need at least 2 rows, got {n}")));
        }
        if m < 1 || d < 1 {
            return Err(Error::InvalidDataset(format!(
                "need at least one feature and one target, got m={m}, d={d}"
            )));
        }
        if y.nrows() != n {
            return Err(Error::InvalidDataset(format!(
                "X has {n} rows but Y has {}",
                y.nrows()
            )));
        }
        if feature_names.len() != m || target_names.len() != d {
            return Err(Error::InvalidDataset("column name count does not match shape".into()));
        }
        let mut all: Vec<&str> = feature_names
            .iter()
            .chain(target_names.iter())
            .map(String::as_str)
            .collect();
        if let Some(bad) = all.iter().find(|s| !valid_name(s)) {
            return Err(Error::InvalidDataset(format!(
                "column name {bad:?} must match [A-Za-z0-9_]+"
            )));
        }
        all.sort_unstable();
        if let Some(w) = all.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidDataset(format!("duplicate column name {:?}", w[0])));
        }
        for (block, offset) in [(&x, 0), (&y, m)] {
            for j in 0..block.ncols() {
                for i in 0..n {
                    if !block[(i, j)].is_finite() {
                        return Err(Error::NonFinite {
                            row: i + 2,
                            column: offset + j + 1,
                        });
                    }
                }
            }
        }
        Ok(Self {
            name,
            x,
            y,
            feature_names,
            target_names,
        })
    }

    /// Build with default column names `x1..xm` and `t1..td`.
    pub fn from_matrices(name: impl Into<String>, x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        let features = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        let targets = (1..=y.ncols()).map(|j| format!("t{j}")).collect();
        Self::new(name, x, y, features, targets)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_names(&self) -> &[String] {
        &self.target_names
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_targets(&self) -> usize {
        self.y.ncols()
    }

    pub fn target(&self, t: usize) -> DVector<f64> {
        self.y.column(t).into_owned()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Rows in the given order. Panics on out-of-range indices; callers
    /// must pass at least two rows.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        Dataset::new(
            self.name.clone(),
            self.x.select_rows(rows),
            self.y.select_rows(rows),
            self.feature_names.clone(),
            self.target_names.clone(),
        )
    }
}

/// Load a CSV whose trailing `n_targets` columns are targets.
///
/// Errors report 1-based file coordinates (the header is row 1).
pub fn load_csv(path: impl AsRef<Path>, n_targets: usize) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(file, &name, n_targets)
}

pub fn read_csv(reader: impl std::io::Read, name: &str, n_targets: usize) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let total = header.len();
    if n_targets == 0 || n_targets >= total {
        return Err(Error::InvalidConfig(format!(
            "n_targets must be in 1..{total} for a file with {total} columns, got {n_targets}"
        )));
    }
    let mut cells: Vec<f64> = Vec::new();
    let mut n = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 2;
        if record.len() != total {
            return Err(Error::InvalidDataset(format!(
                "row {row} has {} columns, expected {total}",
                record.len()
            )));
        }
        for (c, raw) in record.iter().enumerate() {
            let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
                row,
                column: c + 1,
                value: raw.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, column: c + 1 });
            }
            cells.push(v);
        }
        n += 1;
    }
    let all = DMatrix::from_row_slice(n, total, &cells);
    let m = total - n_targets;
    let x = all.columns(0, m).into_owned();
    let y = all.columns(m, n_targets).into_owned();
    Dataset::new(
        name,
        x,
        y,
        header[..m].to_vec(),
        header[m..].to_vec(),
    )
}

/// Write features then targets. Values use the shortest representation that
/// parses back to the same `f64`, so a save/load round trip is bit-exact.
pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_csv(ds, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_csv(ds: &Dataset, w: &mut impl Write) -> std::io::Result<()> {
    let header: Vec<&str> = ds
        .feature_names
        .iter()
        .chain(ds.target_names.iter())
        .map(String::as_str)
        .collect();
    writeln!(w, "{}", header.join(","))?;
    let mut line = String::new();
    for i in 0..ds.n_rows() {
        line.clear();
        let values = ds.x.row(i).iter().chain(ds.y.row(i).iter()).copied().collect::<Vec<_>>();
        for (j, v) in values.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&fmt_f64(*v));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Canonical float formatting for every artifact the toolkit writes.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Per-column minimum and maximum of features and targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub feature_min: Vec<f64>,
    pub feature_max: Vec<f64>,
    pub target_min: Vec<f64>,
    pub target_max: Vec<f64>,
}

impl ScaleParams {
    pub fn feature_is_constant(&self, j: usize) -> bool {
        self.feature_max[j] == self.feature_min[j]
    }

    pub fn target_is_constant(&self, t: usize) -> bool {
        self.target_max[t] == self.target_min[t]
    }
}

fn column_ranges(m: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    m.column_iter()
        .map(|c| (c.min(), c.max()))
        .unzip()
}

fn scale_block(m: &DMatrix<f64>, lo: &[f64], hi: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let range = hi[j] - lo[j];
        if range == 0.0 {
            col.fill(0.0);
        } else {
            col.apply(|v| *v = (*v - lo[j]) / range);
        }
    }
    out
}

fn unscale_block(m: &DMatrix<f64>, lo: &[f64], hi: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let range = hi[j] - lo[j];
        col.apply(|v| *v = lo[j] + *v * range);
    }
    out
}

/// Map every column to [0, 1]. Constant columns map to 0.
pub fn minmax_scale(ds: &Dataset) -> (Dataset, ScaleParams) {
    let (feature_min, feature_max) = column_ranges(&ds.x);
    let (target_min, target_max) = column_ranges(&ds.y);
    let scaled = Dataset {
        name: ds.name.clone(),
        x: scale_block(&ds.x, &feature_min, &feature_max),
        y: scale_block(&ds.y, &target_min, &target_max),
        feature_names: ds.feature_names.clone(),
        target_names: ds.target_names.clone(),
    };
    let params = ScaleParams {
        feature_min,
        feature_max,
        target_min,
        target_max,
    };
    (scaled, params)
}

/// Inverse of [`minmax_scale`]; exact up to rounding for non-constant columns,
/// constant columns come back as their stored minimum.
pub fn inverse_scale(ds: &Dataset, params: &ScaleParams) -> Dataset {
    Dataset {
        name: ds.name.clone(),
        x: unscale_block(&ds.x, &params.feature_min, &params.feature_max),
        y: unscale_block(&ds.y, &params.target_min, &params.target_max),
        feature_names: ds.feature_names.clone(),
        target_names: ds.target_names.clone(),
    }
}

/// Assignment of `n` examples to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignments[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }

    fn from_order(order: &[usize], k: usize) -> Self {
        let mut assignments = vec![0; order.len()];
        for (pos, &i) in order.iter().enumerate() {
            assignments[i] = pos % k;
        }
        FoldPlan { k, assignments }
    }
}

fn check_folds(n: usize, k: usize) -> Result<()> {
    if k < 2 || k > n {
        return Err(Error::InvalidConfig(format!("k-fold needs 2 <= k <= n, got k={k}, n={n}")));
    }
    Ok(())
}

/// Shuffle `0..n` with the seeded stream and deal positions round-robin into
/// `k` folds. The first `n % k` folds receive one extra example.
pub fn split_kfold(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    check_folds(n, k)?;
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    Ok(FoldPlan::from_order(&order, k))
}

/// Stratified variant: each class is shuffled and the classes are dealt in
/// ascending class order. Falls back to [`split_kfold`] when some class has
/// fewer than `k` members; the returned flag says whether stratification was used.
pub fn split_stratified(labels: &[usize], k: usize, seed: u64) -> Result<(FoldPlan, bool)> {
    let n = labels.len();
    check_folds(n, k)?;
    let n_classes = labels.iter().copied().max().map_or(0, |c| c + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in labels.iter().enumerate() {
        by_class[c].push(i);
    }
    let present: Vec<&Vec<usize>> = by_class.iter().filter(|c| !c.is_empty()).collect();
    if present.iter().any(|c| c.len() < k) {
        return Ok((split_kfold(n, k, seed)?, false));
    }
    let mut rng = SplitMix64::new(seed);
    let mut order = Vec::with_capacity(n);
    for members in by_class.iter_mut() {
        rng.shuffle(members);
        order.extend_from_slice(members);
    }
    Ok((FoldPlan::from_order(&order, k), true))
}
