//! Classification metrics for recommenders plus the Friedman / Nemenyi
//! machinery used to compare them on per-dataset aRRMSE.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square count matrix indexed (true class, predicted class).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix { k, counts: vec![0; k * k] }
    }

    /// Builds a matrix from row-major rows.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidConfig("confusion matrix must be square and non-empty".into()));
        }
        Ok(ConfusionMatrix { k, counts: rows.concat() })
    }

    pub fn from_labels(k: usize, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::DimensionMismatch { expected: truth.len(), actual: predicted.len() });
        }
        let mut cm = ConfusionMatrix::new(k);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.add(t, p)?;
        }
        Ok(cm)
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.k || predicted >= self.k {
            return Err(Error::InvalidConfig(format!(
                "class index out of range for a {}-class matrix",
                self.k
            )));
        }
        self.counts[truth * self.k + predicted] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.k != self.k {
            return Err(Error::DimensionMismatch { expected: self.k, actual: other.k });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        (0..self.k).map(|p| self.get(class, p)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k).map(<[u64]>::to_vec).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

impl MetricSet {
    pub const NAMES: [&'static str; 7] = [
        "accuracy",
        "balanced_accuracy",
        "precision",
        "recall",
        "f1",
        "sensitivity",
        "specificity",
    ];

    pub fn to_array(self) -> [f64; 7] {
        [
            self.accuracy,
            self.balanced_accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.sensitivity,
            self.specificity,
        ]
    }
}

/// Accuracy plus one-vs-rest macro averages over the classes that have
/// support. A class that is never predicted has precision 0; f1 is 0 when
/// precision + recall is 0.
pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<MetricSet> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidConfig("confusion matrix is empty".into()));
    }
    let k = cm.k();
    let trace: u64 = (0..k).map(|c| cm.get(c, c)).sum();
    let (mut prec, mut rec, mut f1, mut spec) = (0.0, 0.0, 0.0, 0.0);
    let mut classes = 0usize;
    for c in 0..k {
        let support = cm.support(c);
        if support == 0 {
            log::debug!("class {c} has no support; left out of macro averages");
            continue;
        }
        classes += 1;
        let tp = cm.get(c, c) as f64;
        let predicted: u64 = (0..k).map(|t| cm.get(t, c)).sum();
        let fp = predicted as f64 - tp;
        let fn_ = support as f64 - tp;
        let tn = total as f64 - tp - fp - fn_;
        let p = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
        let r = tp / support as f64;
        prec += p;
        rec += r;
        f1 += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        spec += if tn + fp > 0.0 { tn / (tn + fp) } else { 1.0 };
    }
    let c = classes as f64;
    let recall = rec / c;
    Ok(MetricSet {
        accuracy: trace as f64 / total as f64,
        balanced_accuracy: recall,
        precision: prec / c,
        recall,
        f1: f1 / c,
        sensitivity: recall,
        specificity: spec / c,
    })
}

/// Ascending 1-based midranks of one row (lower score = better = rank 1).
pub fn rank_row(row: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
    let mut ranks = vec![0.0; row.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && row[idx[j + 1]] == row[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &s in &idx[i..=j] {
            ranks[s] = r;
        }
        i = j + 1;
    }
    ranks
}

fn check_scores(scores: &DMatrix<f64>) -> Result<()> {
    if scores.nrows() < 2 || scores.ncols() < 2 {
        return Err(Error::InvalidConfig(format!(
            "rank statistics need at least 2 datasets and 2 systems, got {}x{}",
            scores.nrows(),
            scores.ncols()
        )));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("scores must be finite".into()));
    }
    Ok(())
}

/// Per-dataset midranks, N x k.
pub fn rank_table(scores: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_scores(scores)?;
    let (n, k) = scores.shape();
    let mut out = DMatrix::zeros(n, k);
    for i in 0..n {
        let row: Vec<f64> = scores.row(i).iter().copied().collect();
        for (j, r) in rank_row(&row).into_iter().enumerate() {
            out[(i, j)] = r;
        }
    }
    Ok(out)
}

pub fn average_ranks(scores: &DMatrix<f64>) -> Result<Vec<f64>> {
    let ranks = rank_table(scores)?;
    let n = ranks.nrows() as f64;
    Ok((0..ranks.ncols()).map(|j| ranks.column(j).sum() / n).collect())
}

/// Pairs (a, b), a < b, whose average ranks differ by less than `cd`.
pub fn connected_pairs(avg_ranks: &[f64], cd: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..avg_ranks.len() {
        for b in a + 1..avg_ranks.len() {
            if (avg_ranks[a] - avg_ranks[b]).abs() < cd {
                out.push((a, b));
            }
        }
    }
    out
}

/// Significance levels with tabulated critical values.
pub const ALPHAS: [f64; 3] = [0.10, 0.05, 0.01];

fn alpha_index(alpha: f64) -> Result<usize> {
    ALPHAS
        .iter()
        .position(|a| (a - alpha).abs() < 1e-12)
        .ok_or_else(|| Error::InvalidConfig(format!("alpha {alpha} is not tabulated (use 0.10, 0.05 or 0.01)")))
}

// Upper-tail chi-square quantiles, df = 1..9.
const CHI2: [[f64; 9]; 3] = [
    [2.705543, 4.605170, 6.251389, 7.779440, 9.236357, 10.644641, 12.017037, 13.361566, 14.683657],
    [3.841459, 5.991465, 7.814728, 9.487729, 11.070498, 12.591587, 14.067140, 15.507313, 16.918978],
    [6.634897, 9.210340, 11.344867, 13.276704, 15.086272, 16.811894, 18.475307, 20.090235, 21.665994],
];

// Studentized range quantiles divided by sqrt(2), infinite df, k = 2..10.
const NEMENYI_Q: [[f64; 9]; 3] = [
    [1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920],
    [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164],
    [2.576, 2.913, 3.113, 3.255, 3.364, 3.452, 3.526, 3.590, 3.646],
];

pub fn chi2_critical(df: usize, alpha: f64) -> Result<f64> {
    let a = alpha_index(alpha)?;
    if !(1..=9).contains(&df) {
        return Err(Error::InvalidConfig(format!("chi-square df {df} is not tabulated (1..=9)")));
    }
    Ok(CHI2[a][df - 1])
}

pub fn nemenyi_q(k: usize, alpha: f64) -> Result<f64> {
    let a = alpha_index(alpha)?;
    if !(2..=10).contains(&k) {
        return Err(Error::InvalidConfig(format!("Nemenyi q is tabulated for 2..=10 systems, got {k}")));
    }
    Ok(NEMENYI_Q[a][k - 2])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub critical: f64,
    pub reject: bool,
}

pub fn friedman_test(scores: &DMatrix<f64>, alpha: f64) -> Result<FriedmanResult> {
    let ranks = rank_table(scores)?;
    let (n, k) = ranks.shape();
    let critical = chi2_critical(k - 1, alpha)?;
    let (nf, kf) = (n as f64, k as f64);
    let sum_sq: f64 = (0..k).map(|j| ranks.column(j).sum().powi(2)).sum();
    let stat = 12.0 / (nf * kf * (kf + 1.0)) * sum_sq - 3.0 * nf * (kf + 1.0);
    // Rounding can leave a tiny negative when every row is tied.
    let statistic = if stat.abs() < 1e-9 { 0.0 } else { stat };
    Ok(FriedmanResult {
        statistic,
        critical,
        reject: statistic > critical,
    })
}

pub fn nemenyi_cd(k: usize, n: usize, alpha: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("Nemenyi CD needs N >= 2, got {n}")));
    }
    let q = nemenyi_q(k, alpha)?;
    let kf = k as f64;
    Ok(q * (kf * (kf + 1.0) / (6.0 * n as f64)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_class_hand_example() {
        let cm = ConfusionMatrix::from_rows(&[vec![3, 1], vec![2, 4]]).unwrap();
        let m = classification_metrics(&cm).unwrap();
        assert!((m.accuracy - 0.7).abs() < 1e-12);
        assert!((m.precision - 0.7).abs() < 1e-12);
        // recalls 3/4 and 4/6
        assert!((m.recall - (0.75 + 4.0 / 6.0) / 2.0).abs() < 1e-12);
        assert_eq!(m.recall, m.balanced_accuracy);
    }

    #[test]
    fn diagonal_is_perfect() {
        let cm = ConfusionMatrix::from_rows(&[
            vec![5, 0, 0, 0],
            vec![0, 2, 0, 0],
            vec![0, 0, 7, 0],
            vec![0, 0, 0, 1],
        ])
        .unwrap();
        let m = classification_metrics(&cm).unwrap();
        assert!(m.to_array().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn predict_all_one_class() {
        // truth ST, SST, MOTC, ERC = 31, 362, 89, 166; everything predicted SST
        let cm = ConfusionMatrix::from_rows(&[
            vec![0, 31, 0, 0],
            vec![0, 362, 0, 0],
            vec![0, 89, 0, 0],
            vec![0, 166, 0, 0],
        ])
        .unwrap();
        let m = classification_metrics(&cm).unwrap();
        assert!((m.accuracy - 362.0 / 648.0).abs() < 1e-12);
        assert!((m.balanced_accuracy - 0.25).abs() < 1e-12);
    }

    #[test]
    fn zero_support_class_is_skipped() {
        let cm = ConfusionMatrix::from_rows(&[vec![2, 0, 0], vec![0, 0, 0], vec![1, 0, 3]]).unwrap();
        let m = classification_metrics(&cm).unwrap();
        assert!((m.recall - (1.0 + 0.75) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_matrix_errors() {
        assert!(classification_metrics(&ConfusionMatrix::new(4)).is_err());
    }

    #[test]
    fn friedman_hand_case() {
        let s = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let r = friedman_test(&s, 0.05).unwrap();
        assert!((r.statistic - 6.0).abs() < 1e-12);
        assert!(r.reject);
        assert_eq!(r.critical, 5.991465);
    }

    #[test]
    fn friedman_all_tied() {
        let s = DMatrix::from_element(5, 4, 0.3);
        let r = friedman_test(&s, 0.05).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(!r.reject);
        assert_eq!(average_ranks(&s).unwrap(), vec![2.5; 4]);
    }

    #[test]
    fn cd_values() {
        assert!((nemenyi_cd(7, 648, 0.05).unwrap() - 0.35).abs() < 0.005);
        assert!((nemenyi_cd(2, 100, 0.05).unwrap() - 0.196).abs() < 1e-3);
        let a = nemenyi_cd(5, 40, 0.05).unwrap();
        let b = nemenyi_cd(5, 160, 0.05).unwrap();
        assert!((a / 2.0 - b).abs() < 1e-12);
        assert!(nemenyi_cd(11, 40, 0.05).is_err());
        assert!(nemenyi_cd(5, 40, 0.2).is_err());
    }

    #[test]
    fn q_table_monotone() {
        for row in NEMENYI_Q {
            assert!(row.windows(2).all(|w| w[0] < w[1]));
        }
        for a in 0..2 {
            for k in 0..9 {
                assert!(NEMENYI_Q[a][k] < NEMENYI_Q[a + 1][k]);
                assert!(CHI2[a][k] < CHI2[a + 1][k]);
            }
        }
    }

    #[test]
    fn connected_relation() {
        assert_eq!(connected_pairs(&[1.0, 1.2, 2.0], 0.5), vec![(0, 1)]);
    }
}
