//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use mtr_meta::generator::{FunctionFamily, GridSpec};
use mtr_meta::metafeatures::{extract_all, extract_smo, N_META_FEATURES};
use mtr_meta::metalearn::{
    baseline_majority, fit_forest, oob_permutation_importance, ForestConfig, MetaDataset,
};
use mtr_meta::methods::{arrmse, fit_erc_with_orders, fit_motc_with_tree, MtrMethodId, TargetTree};
use mtr_meta::pipeline::{self, TRUTH};
use mtr_meta::regressors::{fit_ridge, BaseRegressorSpec};
use mtr_meta::rng::SplitMix64;
use mtr_meta::stats::{friedman_test, nemenyi_cd};
use nalgebra::{DMatrix, DVector};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn ac1() -> Outcome {
    let cd = nemenyi_cd(7, 648, 0.05).unwrap();
    outcome((cd - 0.35).abs() <= 0.005, format!("nemenyi_cd(7, 648, 0.05) = {cd:.4}, want 0.35 +- 0.005"))
}

fn ac2() -> Outcome {
    let mut labels = Vec::new();
    for (m, c) in [(MtrMethodId::Erc, 166), (MtrMethodId::Motc, 89), (MtrMethodId::Sst, 362), (MtrMethodId::St, 31)] {
        labels.extend(std::iter::repeat_n(m, c));
    }
    let model = baseline_majority(&labels).unwrap();
    let pred = model.predict(&DMatrix::zeros(labels.len(), 1));
    let acc = pred.iter().zip(&labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64;
    outcome((acc - 0.558).abs() <= 0.001, format!("majority = {}, accuracy = {acc:.4}, want 0.558 +- 0.001", model.class))
}

fn ac3() -> Outcome {
    let mut worst = Duration::ZERO;
    let mut bad = Vec::new();
    let mut count = 0;
    for (k, &(m, d)) in [(15, 3), (15, 6), (30, 3), (30, 6), (90, 6)].iter().enumerate() {
        for family in FunctionFamily::ALL {
            let ds = gen(200, m, d, if d == 6 { 2 } else { 1 }, 5.0, family, 1000 + k as u64);
            let t = Instant::now();
            let v = extract_all(&ds);
            worst = worst.max(t.elapsed());
            count += 1;
            if v.len() != N_META_FEATURES || v.values.iter().any(|x| !x.is_finite()) {
                bad.push(ds.name().to_string());
            }
        }
    }
    outcome(
        bad.is_empty() && worst < Duration::from_secs(1),
        format!("{count} datasets at N=200: {} non-conforming, slowest {:.3}s, want 58 finite values in < 1s", bad.len(), worst.as_secs_f64()),
    )
}

fn ac4() -> Outcome {
    let mut rng = SplitMix64::new(4);
    let y = DMatrix::from_fn(50, 4, |_, _| rng.normal() * 3.0 + 1.0);
    let mut mean = y.clone();
    for t in 0..4 {
        let m = y.column(t).mean();
        mean.column_mut(t).fill(m);
    }
    let a = arrmse(&y, &mean).unwrap();
    let b = arrmse(&y, &y).unwrap();
    outcome((a - 1.0).abs() <= 1e-9 && b == 0.0, format!("mean predictor {a:.12}, perfect predictor {b}"))
}

fn rows_of(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    rows(x)
}

fn col(y: &DMatrix<f64>, t: usize) -> Vec<f64> {
    y.column(t).iter().copied().collect()
}

fn augment(x: &[Vec<f64>], extra: &[&[f64]]) -> Vec<Vec<f64>> {
    x.iter()
        .enumerate()
        .map(|(i, r)| r.iter().copied().chain(extra.iter().map(|c| c[i])).collect())
        .collect()
}

fn fp(train: &[Vec<f64>], y: &[f64], test: &[Vec<f64>]) -> Vec<f64> {
    let (w, b) = ridge_oracle(train, y, 1.0);
    linear_predict(test, &w, b)
}

fn max_gap(got: &DMatrix<f64>, want: &[Vec<f64>]) -> f64 {
    let mut g: f64 = 0.0;
    for (t, c) in want.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            g = g.max((got[(i, t)] - v).abs());
        }
    }
    g
}

fn ac5() -> Outcome {
    let spec = BaseRegressorSpec::Ridge { lambda: 1.0 };
    let train = gen(60, 5, 3, 1, 5.0, FunctionFamily::Mixed, 51);
    let test = gen(25, 5, 3, 1, 5.0, FunctionFamily::Mixed, 52);
    let (x, xt) = (rows_of(train.x()), rows_of(test.x()));
    let y: Vec<Vec<f64>> = (0..3).map(|t| col(train.y(), t)).collect();

    // (a) chain 1, 2, 0
    let p1 = fp(&x, &y[1], &xt);
    let p2 = fp(&augment(&x, &[&y[1]]), &y[2], &augment(&xt, &[&p1]));
    let p0 = fp(&augment(&x, &[&y[1], &y[2]]), &y[0], &augment(&xt, &[&p1, &p2]));
    let erc = fit_erc_with_orders(&train, &spec, &[vec![1, 2, 0]]).unwrap().predict(test.x()).unwrap();
    let a = max_gap(&erc, &[p0, p1, p2]);

    // (b) chain tree 2 - 0 - 1 rooted at 2
    let in1 = fp(&x, &y[1], &x);
    let out1 = fp(&x, &y[1], &xt);
    let x0 = augment(&x, &[&in1]);
    let xt0 = augment(&xt, &[&out1]);
    let in0 = fp(&x0, &y[0], &x0);
    let out0 = fp(&x0, &y[0], &xt0);
    let out2 = fp(&augment(&x, &[&in0]), &y[2], &augment(&xt, &[&out0]));
    let tree = TargetTree::from_edges(3, 2, &[(2, 0), (0, 1)]).unwrap();
    let motc = fit_motc_with_tree(&train, &spec, tree).unwrap().predict(test.x()).unwrap();
    let b = max_gap(&motc, &[out0, out1, out2]);

    // (c) S1 on a single target
    let one = gen(40, 3, 1, 1, 5.0, FunctionFamily::Cubic, 53);
    let xs = minmax(&rows_of(one.x()));
    let ys: Vec<f64> = minmax(&rows_of(one.y())).iter().map(|r| r[0]).collect();
    let mst = kruskal(&xs);
    let s1 = mst.iter().map(|&(i, j)| (ys[i] - ys[j]).abs()).sum::<f64>() / mst.len() as f64;
    let c = (extract_smo(&one)[0] - s1).abs();

    // (d) three datasets, three systems, identical rankings: statistic 6
    let scores = DMatrix::from_row_slice(3, 3, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.1, 0.5, 0.9]);
    let d = (friedman_test(&scores, 0.05).unwrap().statistic - 6.0).abs();

    // (e) ridge
    let yv = DVector::from_column_slice(&y[0]);
    let model = fit_ridge(train.x(), &yv, 0.5).unwrap();
    let (w, bias) = ridge_oracle(&x, &y[0], 0.5);
    let e = model.weights.iter().zip(&w).map(|(p, q)| (p - q).abs()).fold((model.intercept - bias).abs(), f64::max);

    let gaps = [a, b, c, d, e];
    outcome(
        gaps.iter().all(|g| *g <= 1e-9),
        format!("max |diff|: erc {a:.1e}, motc {b:.1e}, s1 {c:.1e}, friedman {d:.1e}, ridge {e:.1e}; want <= 1e-9"),
    )
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn ac6() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let report = match pipeline::run_all(&a, GridSpec::demo(1), 1, |_| {}) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("pipeline failed: {e}")),
    };
    if let Err(e) = pipeline::run_all(&b, GridSpec::demo(1), 1, |_| {}) {
        return outcome(false, format!("second run failed: {e}"));
    }
    let identical = snapshot(&a) == snapshot(&b);
    let get = |n: &str| report.recommender(n).unwrap().metrics;
    let (rf, random, majority) = (get("RF"), get("Random"), get("Majority"));
    let ranks = &report.cd.average_ranks;
    let truth_at = report.cd.systems.iter().position(|s| s == TRUTH).unwrap();
    let truth_best = ranks.iter().enumerate().all(|(i, r)| i == truth_at || ranks[truth_at] < *r);
    let i = rf.balanced_accuracy > random.balanced_accuracy && rf.accuracy >= majority.accuracy;
    let ii = report.cd.friedman.reject && truth_best;
    outcome(
        i && ii && identical,
        format!(
            "{} datasets; RF bal.acc {:.4} vs Random {:.4}, RF acc {:.4} vs Majority {:.4}; Friedman {:.2} > {:.2}: {}; Truth avg rank {:.3} best: {}; byte-identical reruns: {}",
            report.datasets.len(),
            rf.balanced_accuracy,
            random.balanced_accuracy,
            rf.accuracy,
            majority.accuracy,
            report.cd.friedman.statistic,
            report.cd.friedman.critical,
            report.cd.friedman.reject,
            ranks[truth_at],
            truth_best,
            identical
        ),
    )
}

fn ac7() -> Outcome {
    let (n, m, key) = (300, 58, 17);
    let mut rng = SplitMix64::new(7);
    let x = DMatrix::from_fn(n, m, |_, _| rng.next_f64());
    let labels: Vec<MtrMethodId> = (0..n)
        .map(|i| MtrMethodId::from_index(((x[(i, key)] * 4.0) as usize).min(3)).unwrap())
        .collect();
    let names = (0..m).map(|j| format!("f{j}")).collect();
    let md = MetaDataset::from_labels(names, x, &labels).unwrap();
    let model = fit_forest(&md, &ForestConfig::default(), 8).unwrap();
    let imp = oob_permutation_importance(&model, &md, 9).unwrap();
    let ranking = imp.ranking();
    outcome(
        ranking[0] == key,
        format!("top feature f{} ({:.4}), runner-up f{} ({:.4}); want f{key}", ranking[0], imp.importance[ranking[0]], ranking[1], imp.importance[ranking[1]]),
    )
}

fn ac8() -> Outcome {
    let mut gaps = Vec::new();
    for seed in 0..20 {
        let ds = gen(200, 15, 6, 2, 1.0, FunctionFamily::Mixed, 8000 + seed);
        let (mut within, mut across) = (Vec::new(), Vec::new());
        for a in 0..6 {
            for b in a + 1..6 {
                let r = pearson(&col(ds.y(), a), &col(ds.y(), b)).abs();
                if (a < 3) == (b < 3) {
                    within.push(r);
                } else {
                    across.push(r);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        gaps.push((mean(&within), mean(&across)));
    }
    let w = gaps.iter().map(|g| g.0).sum::<f64>() / 20.0;
    let c = gaps.iter().map(|g| g.1).sum::<f64>() / 20.0;
    outcome(w - c >= 0.1, format!("within {w:.4}, across {c:.4}, gap {:.4}; want >= 0.1", w - c))
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 8] = [
        ("AC1", ac1, Duration::from_secs(1)),
        ("AC2", ac2, Duration::from_secs(1)),
        ("AC3", ac3, Duration::from_secs(60)),
        ("AC4", ac4, Duration::from_secs(1)),
        ("AC5", ac5, Duration::from_secs(10)),
        ("AC6", ac6, Duration::from_secs(15 * 60)),
        ("AC7", ac7, Duration::from_secs(30)),
        ("AC8", ac8, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (name, run, budget) in criteria {
        let t = Instant::now();
        let o = run();
        let took = t.elapsed();
        let pass = o.pass && took <= budget;
        if !pass {
            failed += 1;
        }
        println!(
            "{name} {} {} [{:.2}s, budget {}s]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
