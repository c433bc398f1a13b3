//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's numeric code.
#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::DMatrix;

use mtr_meta::generator::{generate_dataset, FunctionFamily, GenConfig};
use mtr_meta::Dataset;

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

pub fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect()
}

/// Ridge on standardized columns (population sd, constant columns dropped)
/// with an unpenalized intercept. Returns original-scale weights and intercept.
pub fn ridge_oracle(x: &[Vec<f64>], y: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let n = x.len();
    let m = x[0].len();
    let nf = n as f64;
    let mean: Vec<f64> = (0..m).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let sd: Vec<f64> = (0..m)
        .map(|j| (x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / nf).sqrt())
        .collect();
    let active: Vec<usize> = (0..m).filter(|&j| sd[j] > 0.0).collect();
    let ym = y.iter().sum::<f64>() / nf;
    let z = |i: usize, j: usize| (x[i][j] - mean[j]) / sd[j];
    let p = active.len();
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for (u, &ju) in active.iter().enumerate() {
        for (v, &jv) in active.iter().enumerate() {
            a[u][v] = (0..n).map(|i| z(i, ju) * z(i, jv)).sum();
        }
        a[u][u] += lambda;
        b[u] = (0..n).map(|i| z(i, ju) * (y[i] - ym)).sum();
    }
    let beta = if p > 0 { solve(a, b) } else { vec![] };
    let mut w = vec![0.0; m];
    for (u, &j) in active.iter().enumerate() {
        w[j] = beta[u] / sd[j];
    }
    let intercept = ym - (0..m).map(|j| w[j] * mean[j]).sum::<f64>();
    (w, intercept)
}

pub fn linear_predict(x: &[Vec<f64>], w: &[f64], b: f64) -> Vec<f64> {
    x.iter().map(|r| b + r.iter().zip(w).map(|(a, c)| a * c).sum::<f64>()).collect()
}

/// Fitted values of unpenalized least squares with intercept, from the
/// normal equations on the raw columns.
pub fn ols_fitted(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let m = x[0].len() + 1;
    let design: Vec<Vec<f64>> = x.iter().map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect()).collect();
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    for (r, &yi) in design.iter().zip(y) {
        for u in 0..m {
            for v in 0..m {
                a[u][v] += r[u] * r[v];
            }
            b[u] += r[u] * yi;
        }
    }
    let beta = solve(a, b);
    design.iter().map(|r| r.iter().zip(&beta).map(|(a, c)| a * c).sum()).collect()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Kruskal with union-find; edges ordered by (squared length, i, j).
pub fn kruskal(points: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let n = points.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let w: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b).powi(2)).sum();
            edges.push((w, i, j));
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut v: usize) -> usize {
        while p[v] != v {
            p[v] = p[p[v]];
            v = p[v];
        }
        v
    }
    let mut out = Vec::new();
    for (_, i, j) in edges {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a] = b;
            out.push((i, j));
        }
    }
    out
}

/// Min-max scaling of every column, constant columns to 0.
pub fn minmax(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = x[0].len();
    let lo: Vec<f64> = (0..m).map(|j| x.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..m).map(|j| x.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
    x.iter()
        .map(|r| (0..m).map(|j| if hi[j] > lo[j] { (r[j] - lo[j]) / (hi[j] - lo[j]) } else { 0.0 }).collect())
        .collect()
}

/// Rank = 1 + number of smaller values + half the number of equal others.
pub fn naive_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .enumerate()
        .map(|(i, a)| {
            let less = v.iter().filter(|b| *b < a).count() as f64;
            let eq = v.iter().enumerate().filter(|(j, b)| *j != i && *b == a).count() as f64;
            1.0 + less + eq / 2.0
        })
        .collect()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&naive_ranks(a), &naive_ranks(b))
}

pub fn gen(n: usize, m: usize, d: usize, g: usize, eta: f64, family: FunctionFamily, seed: u64) -> Dataset {
    generate_dataset(&GenConfig {
        n_instances: n,
        n_features: m,
        n_targets: d,
        n_groups: g,
        noise_pct: eta,
        noise_sigma: 0.1,
        function_family: family,
        seed,
    })
    .unwrap()
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b} (tol {tol})");
}
