use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mtr_meta::generator::GridSpec;
use mtr_meta::metalearn::{ForestConfig, LearnerSpec};
use mtr_meta::pipeline::{self, RunManifest};
use mtr_meta::regressors::BaseRegressorSpec;
use mtr_meta::Error;

#[derive(Parser)]
#[command(name = "mtr-meta", version, about = "Recommend a multi-target regression method through meta-learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Base {
    Ridge,
    Knn,
}

#[derive(clap::Args, Clone)]
struct BaseArgs {
    /// Base regressor wrapped by every MTR method.
    #[arg(long, value_enum, default_value = "ridge")]
    base: Base,
    /// Ridge penalty.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Neighbours for the knn base regressor.
    #[arg(long, default_value_t = 5)]
    neighbors: usize,
    /// Folds of the base-level cross-validation.
    #[arg(long, default_value_t = 10)]
    k: usize,
}

#[derive(clap::Args, Clone)]
struct MetaArgs {
    /// Comma-separated learned recommenders (rf, nb); Majority and Random always run.
    #[arg(long, default_value = "rf,nb")]
    learners: String,
    /// Folds of the meta-level cross-validation.
    #[arg(long = "meta-k", default_value_t = 10)]
    meta_k: usize,
    #[arg(long, default_value_t = 500)]
    trees: usize,
    #[arg(long, default_value_t = 7)]
    mtry: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a grid of synthetic datasets and start a run directory.
    Generate {
        /// Grid JSON file, or one of the built-in grids `demo` and `full`.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Score ST, SST, MOTC and ERC on every dataset and derive meta-labels.
    BaseEval {
        #[arg(long, default_value = ".")]
        data: PathBuf,
        #[command(flatten)]
        base: BaseArgs,
    },
    /// Extract the 58 meta-features of every dataset.
    MetaFeatures {
        #[arg(long, default_value = ".")]
        data: PathBuf,
    },
    /// Cross-validate the recommenders at the meta level.
    MetaEval {
        #[arg(long, default_value = ".")]
        data: PathBuf,
        /// Same as --meta-k.
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        meta: MetaArgs,
    },
    /// Write metrics.csv, cd_analysis.json, importance.csv and summary.md.
    Report {
        #[arg(long, default_value = ".")]
        data: PathBuf,
        /// Defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// All stages in sequence.
    Run {
        #[arg(long, default_value = "demo")]
        grid: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        base: BaseArgs,
        #[command(flatten)]
        meta: MetaArgs,
    },
}

fn load_grid(arg: &str, seed: u64) -> mtr_meta::Result<GridSpec> {
    match arg {
        "demo" => Ok(GridSpec::demo(seed)),
        "full" => Ok(GridSpec::full(seed)),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{path}: {e}")))?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

fn apply_base(m: &mut RunManifest, b: &BaseArgs) {
    m.mtr.base = match b.base {
        Base::Ridge => BaseRegressorSpec::Ridge { lambda: b.lambda },
        Base::Knn => BaseRegressorSpec::Knn { k: b.neighbors },
    };
    m.base_folds = b.k;
}

fn parse_learners(a: &MetaArgs) -> mtr_meta::Result<Vec<LearnerSpec>> {
    let mut out = Vec::new();
    for name in a.learners.split(',').filter(|s| !s.trim().is_empty()) {
        let l = match LearnerSpec::parse(name)? {
            LearnerSpec::Rf(_) => {
                let cfg = ForestConfig { n_trees: a.trees, mtry: a.mtry, bootstrap: true };
                cfg.validate(mtr_meta::metafeatures::N_META_FEATURES)?;
                LearnerSpec::Rf(cfg)
            }
            other => other,
        };
        out.push(l);
    }
    Ok(out)
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn run(cli: Cli) -> mtr_meta::Result<()> {
    match cli.command {
        Command::Generate { grid, out, seed } => {
            let m = pipeline::run_generate(&out, load_grid(&grid, seed)?, seed)?;
            let n = m.grid.as_ref().map_or(0, GridSpec::total);
            println!("generated {n} datasets in {}", out.display());
        }
        Command::BaseEval { data, base } => {
            let mut m = pipeline::load_manifest(&data)?;
            apply_base(&mut m, &base);
            let out = pipeline::run_base_level(&data, &mut m)?;
            println!(
                "scored {} datasets ({} excluded)",
                out.results.len(),
                out.excluded.len()
            );
        }
        Command::MetaFeatures { data } => {
            let mut m = pipeline::load_manifest(&data)?;
            let rows = pipeline::run_meta_features(&data, &mut m)?;
            println!("extracted meta-features for {} datasets", rows.len());
        }
        Command::MetaEval { data, k, meta } => {
            let mut m = pipeline::load_manifest(&data)?;
            m.learners = parse_learners(&meta)?;
            m.meta_folds = k.unwrap_or(meta.meta_k);
            let report = pipeline::run_meta_level(&data, &mut m)?;
            for r in &report.recommenders {
                println!(
                    "{:<9} accuracy {:.4}  balanced accuracy {:.4}  mean aRRMSE {:.4}",
                    r.name, r.metrics.accuracy, r.metrics.balanced_accuracy, r.mean_realized
                );
            }
        }
        Command::Report { data, out } => {
            let mut m = pipeline::load_manifest(&data)?;
            let out = out.unwrap_or_else(|| data.clone());
            print_files(&pipeline::run_report(&data, &out, &mut m)?);
        }
        Command::Run { grid, out, seed, base, meta } => {
            let grid = load_grid(&grid, seed)?;
            let learners = parse_learners(&meta)?;
            let report = pipeline::run_all(&out, grid, seed, |m| {
                apply_base(m, &base);
                m.learners = learners;
                m.meta_folds = meta.meta_k;
            })?;
            if let Some(best) = report.winner() {
                println!("best recommender by balanced accuracy: {}", best.name);
            }
            print_files(&[Path::new(&out).join(pipeline::SUMMARY)]);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if is_degenerate(&e) {
                ExitCode::from(3)
            } else if is_input_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

/// Bad arguments, malformed files and unreadable inputs.
fn is_input_error(e: &Error) -> bool {
    match e {
        Error::Io { .. } => true,
        Error::Context { source, .. } => is_input_error(source),
        other => other.is_validation(),
    }
}

fn is_degenerate(e: &Error) -> bool {
    match e {
        Error::Degenerate(_) | Error::DegenerateTarget { .. } => true,
        Error::Context { source, .. } => is_degenerate(source),
        _ => false,
    }
}
