//! Single-output base regressors: ridge and k-nearest neighbours.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which base learner each MTR method wraps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BaseRegressorSpec {
    Ridge { lambda: f64 },
    Knn { k: usize },
}

impl Default for BaseRegressorSpec {
    fn default() -> Self {
        BaseRegressorSpec::Ridge { lambda: 1.0 }
    }
}

impl BaseRegressorSpec {
    pub const DEFAULT_KNN: BaseRegressorSpec = BaseRegressorSpec::Knn { k: 5 };

    pub fn validate(&self) -> Result<()> {
        match *self {
            BaseRegressorSpec::Ridge { lambda } if !lambda.is_finite() || lambda < 0.0 => Err(
                Error::InvalidConfig(format!("ridge lambda must be finite and >= 0, got {lambda}")),
            ),
            BaseRegressorSpec::Knn { k: 0 } => Err(Error::InvalidConfig("knn k must be >= 1".into())),
            _ => Ok(()),
        }
    }

    pub fn fit(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<BaseModel> {
        match *self {
            BaseRegressorSpec::Ridge { lambda } => fit_ridge(x, y, lambda).map(BaseModel::Linear),
            BaseRegressorSpec::Knn { k } => fit_knn(x, y, k).map(BaseModel::Knn),
        }
    }
}

/// A fitted base learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BaseModel {
    Linear(LinearModel),
    Knn(KnnModel),
}

impl BaseModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        match self {
            BaseModel::Linear(m) => predict_linear(m, x),
            BaseModel::Knn(m) => predict_knn(m, x),
        }
    }

    pub fn n_inputs(&self) -> usize {
        match self {
            BaseModel::Linear(m) => m.weights.len(),
            BaseModel::Knn(m) => m.x.ncols(),
        }
    }
}

/// `y = x . weights + intercept`, with weights expressed on the original
/// column scale. The standardization used during fitting is kept alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub column_means: Vec<f64>,
    pub column_stds: Vec<f64>,
    /// Set when the penalized normal equations were singular and the
    /// pseudo-inverse was used instead.
    pub used_pseudo_inverse: bool,
}

/// Relative pivot size below which the Cholesky factor is treated as singular.
const SINGULAR_PIVOT: f64 = 1e-10;

/// Minimize ||y - Xw - b||^2 + lambda ||w||^2 over standardized columns.
///
/// Columns are centred and divided by their population standard deviation;
/// zero-variance columns get weight 0.
pub fn fit_ridge(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<LinearModel> {
    let (n, m) = x.shape();
    if n < 2 {
        return Err(Error::InvalidDataset(format!("ridge needs at least 2 rows, got {n}")));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: y.len() });
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidConfig(format!("ridge lambda must be finite and >= 0, got {lambda}")));
    }
    let nf = n as f64;
    let means: Vec<f64> = x.column_iter().map(|c| c.sum() / nf).collect();
    let stds: Vec<f64> = x
        .column_iter()
        .zip(&means)
        .map(|(c, mu)| (c.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / nf).sqrt())
        .collect();
    let active: Vec<usize> = (0..m).filter(|&j| stds[j] > 0.0).collect();
    let y_mean = y.sum() / nf;

    let mut weights = vec![0.0; m];
    let mut used_pseudo_inverse = false;
    if !active.is_empty() {
        let p = active.len();
        let mut z = DMatrix::zeros(n, p);
        for (a, &j) in active.iter().enumerate() {
            for i in 0..n {
                z[(i, a)] = (x[(i, j)] - means[j]) / stds[j];
            }
        }
        let yc = y.map(|v| v - y_mean);
        let mut gram = z.tr_mul(&z);
        for a in 0..p {
            gram[(a, a)] += lambda;
        }
        let rhs = z.tr_mul(&yc);
        let beta = match solve_spd(&gram, &rhs) {
            Some(b) => b,
            None => {
                used_pseudo_inverse = true;
                gram.clone()
                    .pseudo_inverse(1e-12)
                    .map_err(|e| Error::Degenerate(format!("ridge pseudo-inverse failed: {e}")))?
                    * rhs
            }
        };
        for (a, &j) in active.iter().enumerate() {
            weights[j] = beta[a] / stds[j];
        }
    }
    let intercept = y_mean - weights.iter().zip(&means).map(|(w, mu)| w * mu).sum::<f64>();
    Ok(LinearModel {
        weights,
        intercept,
        column_means: means,
        column_stds: stds,
        used_pseudo_inverse,
    })
}

/// Cholesky solve; `None` when the factor has a pivot too small to trust.
fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let chol = a.clone().cholesky()?;
    let l = chol.l_dirty();
    let diag: Vec<f64> = (0..a.nrows()).map(|i| l[(i, i)]).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if max <= 0.0 || min / max < SINGULAR_PIVOT {
        return None;
    }
    Some(chol.solve(b))
}

pub fn predict_linear(model: &LinearModel, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x.ncols() != model.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: model.weights.len(),
            actual: x.ncols(),
        });
    }
    let w = DVector::from_column_slice(&model.weights);
    Ok((x * w).add_scalar(model.intercept))
}

/// Stored training data for a k-NN regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub k: usize,
}

pub fn fit_knn(x: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<KnnModel> {
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), actual: y.len() });
    }
    if k == 0 || k > x.nrows() {
        return Err(Error::InvalidConfig(format!(
            "knn k must be in 1..={}, got {k}",
            x.nrows()
        )));
    }
    Ok(KnnModel {
        x: x.clone(),
        y: y.clone(),
        k,
    })
}

pub(crate) fn sq_dist_rows(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    (0..a.ncols()).map(|c| (a[(i, c)] - b[(j, c)]).powi(2)).sum()
}

/// Indices of the `k` nearest rows of `train` to row `q` of `queries`,
/// ordered by (distance, index).
pub(crate) fn nearest(train: &DMatrix<f64>, queries: &DMatrix<f64>, q: usize, k: usize) -> Vec<usize> {
    let mut cand: Vec<(f64, usize)> = (0..train.nrows())
        .map(|j| (sq_dist_rows(queries, q, train, j), j))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, cmp);
        cand.truncate(k);
    }
    cand.sort_unstable_by(cmp);
    cand.into_iter().map(|(_, j)| j).collect()
}

/// Unweighted mean of the `k` nearest training targets (Euclidean; ties go
/// to the lower training row).
pub fn predict_knn(model: &KnnModel, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x.ncols() != model.x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: model.x.ncols(),
            actual: x.ncols(),
        });
    }
    Ok(DVector::from_iterator(
        x.nrows(),
        (0..x.nrows()).map(|q| {
            let idx = nearest(&model.x, x, q, model.k);
            idx.iter().map(|&j| model.y[j]).sum::<f64>() / idx.len() as f64
        }),
    ))
}
