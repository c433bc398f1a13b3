mod common;

use common::{gen, pearson};
use mtr_meta::generator::{generate_grid, FunctionFamily, GenConfig, GridSpec};

fn col(ds: &mtr_meta::Dataset, t: usize) -> Vec<f64> {
    ds.y().column(t).iter().copied().collect()
}

#[test]
fn deterministic_per_seed() {
    let a = gen(50, 5, 3, 2, 10.0, FunctionFamily::Mixed, 1);
    let b = gen(50, 5, 3, 2, 10.0, FunctionFamily::Mixed, 1);
    let c = gen(50, 5, 3, 2, 10.0, FunctionFamily::Mixed, 2);
    assert_eq!(a, b);
    assert_ne!(a.x(), c.x());
    assert!(a.x().iter().all(|v| (0.0..1.0).contains(v)));
}

#[test]
fn noise_touches_nested_row_sets() {
    let clean = gen(200, 5, 3, 1, 0.0, FunctionFamily::Cubic, 7);
    let mut previous: Vec<usize> = Vec::new();
    for eta in [1.0, 5.0, 10.0, 20.0, 50.0] {
        let noisy = gen(200, 5, 3, 1, eta, FunctionFamily::Cubic, 7);
        assert_eq!(noisy.x(), clean.x(), "X must not depend on the noise level");
        let changed: Vec<usize> = (0..200).filter(|&i| noisy.y().row(i) != clean.y().row(i)).collect();
        assert_eq!(changed.len(), (eta / 100.0 * 200.0).round() as usize);
        assert!(previous.iter().all(|r| changed.contains(r)), "noisy rows are not nested");
        previous = changed;
    }
}

#[test]
fn noise_lowers_fit_to_clean_targets() {
    let clean = gen(300, 5, 2, 1, 0.0, FunctionFamily::Identity, 9);
    let mut last = 1.0;
    for eta in [1.0, 10.0, 40.0, 100.0] {
        let noisy = gen(300, 5, 2, 1, eta, FunctionFamily::Identity, 9);
        let r = pearson(&col(&clean, 0), &col(&noisy, 0));
        assert!(r < last, "eta {eta}: {r} >= {last}");
        last = r;
    }
}

#[test]
fn grouped_targets_correlate_within_group() {
    let mut gaps = Vec::new();
    for seed in 0..10 {
        let ds = gen(200, 10, 6, 2, 0.0, FunctionFamily::Mixed, 100 + seed);
        let (mut within, mut across) = (Vec::new(), Vec::new());
        for a in 0..6 {
            for b in a + 1..6 {
                let r = pearson(&col(&ds, a), &col(&ds, b)).abs();
                if (a < 3) == (b < 3) {
                    within.push(r);
                } else {
                    across.push(r);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        gaps.push(mean(&within) - mean(&across));
    }
    assert!(gaps.iter().sum::<f64>() / gaps.len() as f64 >= 0.1, "{gaps:?}");
}

#[test]
fn group_ranges_cover_targets() {
    let cfg = GenConfig {
        n_instances: 10,
        n_features: 3,
        n_targets: 7,
        n_groups: 3,
        noise_pct: 0.0,
        noise_sigma: 0.1,
        function_family: FunctionFamily::Identity,
        seed: 0,
    };
    let groups = cfg.groups();
    assert_eq!(groups, vec![0..3, 3..5, 5..7]);
    assert!(GenConfig { n_groups: 8, ..cfg.clone() }.validate().is_err());
    assert!(GenConfig { noise_pct: 101.0, ..cfg }.validate().is_err());
}

#[test]
fn grid_is_reproducible_and_named_uniquely() {
    let mut grid = GridSpec::demo(3);
    grid.replications = 1;
    grid.n_instances = vec![40];
    grid.declared_total = None;
    let a = generate_grid(&grid).unwrap();
    let b = generate_grid(&grid).unwrap();
    assert_eq!(a.len(), grid.total());
    let mut names: Vec<&str> = a.iter().map(|(_, d)| d.name()).collect();
    names.sort_unstable();
    names.dedup();
    assert_eq!(names.len(), a.len());
    for ((_, x), (_, y)) in a.iter().zip(&b) {
        assert_eq!(x, y);
    }
}
