//! Synthetic multi-target regression problems with grouped targets.
//!
//! Targets are split into contiguous groups. Each group owns one latent
//! function, a weighted sum of identity/quadratic/cubic transforms over a
//! random subset of the features, and every target in the group is a small
//! re-weighting of that function. Targets in the same group are therefore
//! strongly correlated while targets in different groups only share
//! whatever features their subsets happen to overlap on.

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

/// Default std of injected noise, in units of the target's std.
pub const DEFAULT_NOISE_SIGMA: f64 = 0.1;

/// Half-width of the per-target multiplicative re-weighting around 1.
const REWEIGHT_SPREAD: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionFamily {
    Identity,
    Quadratic,
    Cubic,
    /// Each term independently picks identity, quadratic or cubic.
    Mixed,
}

impl FunctionFamily {
    pub const ALL: [FunctionFamily; 4] = [
        FunctionFamily::Identity,
        FunctionFamily::Quadratic,
        FunctionFamily::Cubic,
        FunctionFamily::Mixed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FunctionFamily::Identity => "identity",
            FunctionFamily::Quadratic => "quadratic",
            FunctionFamily::Cubic => "cubic",
            FunctionFamily::Mixed => "mixed",
        }
    }
}

impl fmt::Display for FunctionFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Transform {
    Identity,
    Square,
    Cube,
}

impl Transform {
    fn apply(self, v: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::Square => v * v,
            Transform::Cube => v * v * v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_instances: usize,
    pub n_features: usize,
    pub n_targets: usize,
    pub n_groups: usize,
    /// Percentage of instances (0..=100) that receive target noise.
    pub noise_pct: f64,
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
    pub function_family: FunctionFamily,
    pub seed: u64,
}

fn default_noise_sigma() -> f64 {
    DEFAULT_NOISE_SIGMA
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_instances < 2 {
            return fail(format!("n_instances must be >= 2, got {}", self.n_instances));
        }
        if self.n_features < 1 {
            return fail("n_features must be >= 1".into());
        }
        if self.n_targets < 1 {
            return fail("n_targets must be >= 1".into());
        }
        if self.n_groups < 1 || self.n_groups > self.n_targets {
            return fail(format!(
                "n_groups must be in 1..={}, got {}",
                self.n_targets, self.n_groups
            ));
        }
        if !(0.0..=100.0).contains(&self.noise_pct) {
            return fail(format!("noise_pct must be in [0, 100], got {}", self.noise_pct));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return fail(format!("noise_sigma must be finite and >= 0, got {}", self.noise_sigma));
        }
        Ok(())
    }

    /// Number of rows that receive noise: round(noise_pct / 100 * n_instances).
    pub fn noisy_rows(&self) -> usize {
        (self.noise_pct / 100.0 * self.n_instances as f64).round() as usize
    }

    /// Target index ranges of each group. Earlier groups take the remainder.
    pub fn groups(&self) -> Vec<std::ops::Range<usize>> {
        let base = self.n_targets / self.n_groups;
        let extra = self.n_targets % self.n_groups;
        let mut start = 0;
        (0..self.n_groups)
            .map(|g| {
                let len = base + usize::from(g < extra);
                let r = start..start + len;
                start += len;
                r
            })
            .collect()
    }

    /// Features per latent function: max(2, floor(m / 5)), capped at m.
    pub fn subset_size(&self) -> usize {
        (self.n_features / 5).max(2).min(self.n_features)
    }
}

struct Term {
    feature: usize,
    transform: Transform,
    weight: f64,
}

fn draw_terms(cfg: &GenConfig, rng: &mut SplitMix64) -> Vec<Term> {
    rng.sample_indices(cfg.n_features, cfg.subset_size())
        .into_iter()
        .map(|feature| {
            let transform = match cfg.function_family {
                FunctionFamily::Identity => Transform::Identity,
                FunctionFamily::Quadratic => Transform::Square,
                FunctionFamily::Cubic => Transform::Cube,
                FunctionFamily::Mixed => {
                    [Transform::Identity, Transform::Square, Transform::Cube][rng.below(3)]
                }
            };
            let sign = if rng.below(2) == 0 { -1.0 } else { 1.0 };
            Term {
                feature,
                transform,
                weight: sign * rng.uniform(0.5, 1.5),
            }
        })
        .collect()
}

fn population_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Generate one dataset. `cfg` fully determines the output.
///
/// Independent sub-streams drive the features, the latent functions, the
/// choice of noisy rows and the noise values, so two configs that differ only
/// in `noise_pct` share X and the noiseless targets.
pub fn generate_dataset(cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let (n, m, d) = (cfg.n_instances, cfg.n_features, cfg.n_targets);

    let mut feature_rng = SplitMix64::new(derive_seed(cfg.seed, 1));
    let mut x = DMatrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            x[(i, j)] = feature_rng.next_f64();
        }
    }

    let mut structure_rng = SplitMix64::new(derive_seed(cfg.seed, 2));
    let mut y = DMatrix::zeros(n, d);
    for range in cfg.groups() {
        let terms = draw_terms(cfg, &mut structure_rng);
        for t in range {
            let scale: Vec<f64> = terms
                .iter()
                .map(|_| 1.0 + structure_rng.uniform(-REWEIGHT_SPREAD, REWEIGHT_SPREAD))
                .collect();
            for i in 0..n {
                y[(i, t)] = terms
                    .iter()
                    .zip(&scale)
                    .map(|(term, s)| term.weight * s * term.transform.apply(x[(i, term.feature)]))
                    .sum();
            }
        }
    }

    let n_noisy = cfg.noisy_rows();
    if n_noisy > 0 && cfg.noise_sigma > 0.0 {
        let stds: Vec<f64> = (0..d).map(|t| population_std(y.column(t).iter().copied())).collect();
        let mut rows = SplitMix64::new(derive_seed(cfg.seed, 3)).sample_indices(n, n_noisy);
        rows.sort_unstable();
        let mut noise_rng = SplitMix64::new(derive_seed(cfg.seed, 4));
        for i in rows {
            for (t, std) in stds.iter().enumerate() {
                y[(i, t)] += cfg.noise_sigma * std * noise_rng.normal();
            }
        }
    }

    Dataset::from_matrices(dataset_name(cfg, None), x, y)
}

fn fmt_pct(p: f64) -> String {
    if p.fract() == 0.0 {
        format!("{}", p as i64)
    } else {
        format!("{p}").replace('.', "p")
    }
}

fn dataset_name(cfg: &GenConfig, index: Option<(usize, usize)>) -> String {
    let stem = format!(
        "n{}_m{}_d{}_g{}_e{}_{}",
        cfg.n_instances,
        cfg.n_features,
        cfg.n_targets,
        cfg.n_groups,
        fmt_pct(cfg.noise_pct),
        cfg.function_family
    );
    match index {
        Some((cell, rep)) => format!("ds{cell:04}_{stem}_r{rep}"),
        None => format!("synth_{stem}"),
    }
}

/// Candidate values for every generator parameter plus replication count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_instances: Vec<usize>,
    pub n_features: Vec<usize>,
    pub n_targets: Vec<usize>,
    pub n_groups: Vec<usize>,
    pub noise_pct: Vec<f64>,
    pub function_families: Vec<FunctionFamily>,
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
    pub replications: usize,
    pub master_seed: u64,
    /// When present, must equal cells x replications.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_total: Option<usize>,
}

impl GridSpec {
    /// Full-size grid: 2x6x2x2x3 = 144 cells of 500 or 1000 rows, mixed families.
    pub fn full(master_seed: u64) -> Self {
        GridSpec {
            n_instances: vec![500, 1000],
            n_features: vec![15, 30, 45, 60, 75, 90],
            n_targets: vec![3, 6],
            n_groups: vec![1, 2],
            noise_pct: vec![1.0, 5.0, 10.0],
            function_families: vec![FunctionFamily::Mixed],
            noise_sigma: DEFAULT_NOISE_SIGMA,
            replications: 1,
            master_seed,
            declared_total: Some(144),
        }
    }

    /// Desk-scale grid: 24 shape cells x 3 pure families x 2 replicas = 144 datasets of 200 rows.
    pub fn demo(master_seed: u64) -> Self {
        GridSpec {
            n_instances: vec![200],
            n_features: vec![15, 30],
            n_targets: vec![3, 6],
            n_groups: vec![1, 2],
            noise_pct: vec![1.0, 5.0, 10.0],
            function_families: vec![
                FunctionFamily::Identity,
                FunctionFamily::Quadratic,
                FunctionFamily::Cubic,
            ],
            noise_sigma: DEFAULT_NOISE_SIGMA,
            replications: 2,
            master_seed,
            declared_total: Some(144),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_instances.len()
            * self.n_features.len()
            * self.n_targets.len()
            * self.n_groups.len()
            * self.noise_pct.len()
            * self.function_families.len()
    }

    pub fn total(&self) -> usize {
        self.n_cells() * self.replications
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cells() == 0 || self.replications == 0 {
            return Err(Error::InvalidConfig("grid has no cells".into()));
        }
        if let Some(declared) = self.declared_total {
            if declared != self.total() {
                return Err(Error::InvalidConfig(format!(
                    "grid declares {declared} datasets but expands to {}",
                    self.total()
                )));
            }
        }
        Ok(())
    }

    /// Every (cell, replication) config in lexicographic grid order, with names.
    pub fn configs(&self) -> Result<Vec<(String, GenConfig)>> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.total());
        let mut cell = 0usize;
        for &n in &self.n_instances {
            for &m in &self.n_features {
                for &d in &self.n_targets {
                    for &g in &self.n_groups {
                        for &eta in &self.noise_pct {
                            for &family in &self.function_families {
                                let cell_seed = derive_seed(self.master_seed, cell as u64);
                                for rep in 0..self.replications {
                                    let cfg = GenConfig {
                                        n_instances: n,
                                        n_features: m,
                                        n_targets: d,
                                        n_groups: g,
                                        noise_pct: eta,
                                        noise_sigma: self.noise_sigma,
                                        function_family: family,
                                        seed: derive_seed(cell_seed, rep as u64),
                                    };
                                    cfg.validate().map_err(|e| e.context(format!("grid cell {cell}")))?;
                                    out.push((dataset_name(&cfg, Some((cell, rep))), cfg));
                                }
                                cell += 1;
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Generate every dataset of the grid, in grid order.
pub fn generate_grid(spec: &GridSpec) -> Result<Vec<(GenConfig, Dataset)>> {
    spec.configs()?
        .into_par_iter()
        .map(|(name, cfg)| {
            let ds = generate_dataset(&cfg)?.with_name(name);
            Ok((cfg, ds))
        })
        .collect()
}
