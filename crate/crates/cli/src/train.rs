use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::Args;
use hdsl_core::baselines::{train_diag, DiagTrainResult};
use hdsl_core::constraints::{build_triplets_knn, build_triplets_random, load_triplets};
use hdsl_core::eval::{emit_dimension_curve, knn_error, knn_error_with, write_curve_csv};
use hdsl_core::optim::{IterationRecord, Validation};
use hdsl_core::{ConstraintSet, Dataset, DiagConfig, OptimizerConfig, Regularizer, Split, Strategy, TrainerState};
use log::info;

use crate::config::ConfigFile;
use crate::io::{open, require_file, usage, write_atomic};

const CONFIG_KEYS: &[&str] = &[
    "train",
    "validation",
    "test",
    "dimension",
    "algo",
    "strategy",
    "lambda",
    "lambda-grid",
    "batch-size",
    "iterations",
    "constraints",
    "seed",
    "eval-every",
    "k",
    "reg",
    "reg-weight",
    "out-dir",
];

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training data (LIBSVM format, optionally gzipped).
    #[arg(long)]
    train: Option<PathBuf>,
    /// Validation data used for early stopping and λ selection.
    #[arg(long)]
    validation: Option<PathBuf>,
    /// Optional test data; reports test error and writes the dimension curve.
    #[arg(long)]
    test: Option<PathBuf>,
    /// `key = value` file with defaults for any of these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Feature dimension (default: largest index seen).
    #[arg(long)]
    dimension: Option<usize>,
    /// `hdsl` or `diag`.
    #[arg(long)]
    algo: Option<String>,
    /// `exact`, `minibatch` or `heuristic`.
    #[arg(long)]
    strategy: Option<String>,
    /// Scale λ of the basis elements.
    #[arg(long)]
    lambda: Option<f64>,
    /// Comma-separated λ values, picked by validation error.
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// Constraints sampled per iteration (default: all).
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// `knn:<targets>:<impostors>`, `random:<per instance>` or `file:<path>`.
    #[arg(long)]
    constraints: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Iterations between validation evaluations.
    #[arg(long)]
    eval_every: Option<usize>,
    /// Neighbors for kNN evaluation.
    #[arg(long)]
    k: Option<usize>,
    /// Regularizer for `diag`: `l1` or `l2`.
    #[arg(long)]
    reg: Option<String>,
    /// Regularization weight(s) for `diag`, comma-separated for a grid.
    #[arg(long, value_delimiter = ',')]
    reg_weight: Option<Vec<f64>>,
    /// Output directory (default: current directory).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Skip max-scaling of features.
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Algo {
    Hdsl,
    Diag,
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "hdsl" => Ok(Algo::Hdsl),
            "diag" => Ok(Algo::Diag),
            other => Err(format!("unknown algorithm {other:?} (expected hdsl or diag)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ConstraintSpec {
    Knn { targets: usize, impostors: usize },
    Random { per_instance: usize },
    File(PathBuf),
}

impl FromStr for ConstraintSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let bad = || format!("invalid constraint spec {s:?} (expected knn:K:I, random:N or file:PATH)");
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "knn" => {
                let (a, b) = rest.split_once(':').ok_or_else(bad)?;
                Ok(ConstraintSpec::Knn {
                    targets: a.parse().map_err(|_| bad())?,
                    impostors: b.parse().map_err(|_| bad())?,
                })
            }
            "random" => Ok(ConstraintSpec::Random {
                per_instance: rest.parse().map_err(|_| bad())?,
            }),
            "file" if !rest.is_empty() => Ok(ConstraintSpec::File(PathBuf::from(rest))),
            _ => Err(bad()),
        }
    }
}

/// Fully resolved settings.
#[derive(Debug)]
struct Settings {
    train: PathBuf,
    validation: PathBuf,
    test: Option<PathBuf>,
    dimension: Option<usize>,
    algo: Algo,
    strategy: Strategy,
    lambdas: Vec<f64>,
    batch_size: Option<usize>,
    iterations: usize,
    constraints: ConstraintSpec,
    seed: u64,
    eval_every: usize,
    k: usize,
    reg: Regularizer,
    reg_weights: Vec<f64>,
    out_dir: PathBuf,
    normalize: bool,
}

fn resolve(args: TrainArgs) -> Result<Settings> {
    let cfg = match &args.config {
        Some(p) => ConfigFile::load(p, CONFIG_KEYS)?,
        None => ConfigFile::default(),
    };
    let train = cfg
        .pick(args.train, "train")?
        .ok_or_else(|| usage("missing --train"))?;
    let validation = cfg
        .pick(args.validation, "validation")?
        .ok_or_else(|| usage("missing --validation"))?;
    let algo = cfg.pick(args.algo, "algo")?.unwrap_or_else(|| "hdsl".into());
    let algo: Algo = algo.parse().map_err(usage)?;
    let strategy = cfg.pick(args.strategy, "strategy")?.unwrap_or_else(|| "heuristic".into());
    let strategy: Strategy = strategy.parse().map_err(|e: hdsl_core::Error| usage(e.to_string()))?;
    let lambda = cfg.pick(args.lambda, "lambda")?;
    let grid = cfg.pick_list(args.lambda_grid, "lambda-grid")?;
    let lambdas = match (lambda, grid) {
        (Some(_), Some(_)) => return Err(usage("give either --lambda or --lambda-grid, not both")),
        (Some(l), None) => vec![l],
        (None, Some(g)) => g,
        (None, None) => vec![OptimizerConfig::default().lambda],
    };
    if lambdas.is_empty() || lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(usage("λ values must be positive"));
    }
    let constraints = cfg
        .pick(args.constraints, "constraints")?
        .unwrap_or_else(|| "knn:3:5".into());
    let constraints: ConstraintSpec = constraints.parse().map_err(usage)?;
    let reg = cfg.pick(args.reg, "reg")?.unwrap_or_else(|| "l2".into());
    let reg: Regularizer = reg.parse().map_err(|e: hdsl_core::Error| usage(e.to_string()))?;
    let reg_weights = cfg.pick_list(args.reg_weight, "reg-weight")?.unwrap_or_else(|| vec![0.0]);
    if reg_weights.is_empty() || reg_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(usage("regularization weights must be nonnegative"));
    }
    let k = cfg.pick(args.k, "k")?.unwrap_or(3);
    if k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    Ok(Settings {
        train,
        validation,
        test: cfg.pick(args.test, "test")?,
        dimension: cfg.pick(args.dimension, "dimension")?,
        algo,
        strategy,
        lambdas,
        batch_size: cfg.pick(args.batch_size, "batch-size")?,
        iterations: cfg.pick(args.iterations, "iterations")?.unwrap_or(1000),
        constraints,
        seed: cfg.pick(args.seed, "seed")?.unwrap_or(0),
        eval_every: cfg.pick(args.eval_every, "eval-every")?.unwrap_or(50).max(1),
        k,
        reg,
        reg_weights,
        out_dir: cfg.pick(args.out_dir, "out-dir")?.unwrap_or_else(|| PathBuf::from(".")),
        normalize: !args.no_normalize,
    })
}

fn build_constraints(spec: &ConstraintSpec, train: &Dataset, seed: u64) -> Result<ConstraintSet> {
    let set = match spec {
        ConstraintSpec::Knn { targets, impostors } => build_triplets_knn(train, *targets, *impostors)?,
        ConstraintSpec::Random { per_instance } => build_triplets_random(train, *per_instance, seed)?,
        ConstraintSpec::File(path) => {
            let triplets = load_triplets(open(path)?).with_context(|| format!("reading {}", path.display()))?;
            ConstraintSet::from_triplets(train, triplets)?
        }
    };
    if set.is_empty() {
        return Err(usage("no usable constraints could be built from the training data"));
    }
    Ok(set)
}

pub fn run(args: TrainArgs) -> Result<()> {
    let s = resolve(args)?;
    require_file(&s.train)?;
    require_file(&s.validation)?;
    if let Some(t) = &s.test {
        require_file(t)?;
    }
    if let ConstraintSpec::File(p) = &s.constraints {
        require_file(p)?;
    }

    let mut others = vec![(s.validation.as_path(), Split::Validation)];
    if let Some(t) = &s.test {
        others.push((t.as_path(), Split::Test));
    }
    let sets = crate::io::load_scaled(&s.train, &others, s.dimension, !s.normalize)?;
    let (train, validation, test) = (&sets[0], &sets[1], sets.get(2));
    info!(
        "loaded {} training, {} validation instances, dimension {}",
        train.len(),
        validation.len(),
        train.dimension()
    );
    let constraints = build_constraints(&s.constraints, train, s.seed)?;
    info!("{} triplet constraints", constraints.len());

    match s.algo {
        Algo::Hdsl => run_hdsl(&s, &constraints, train, validation, test),
        Algo::Diag => run_diag(&s, &constraints, train, validation, test),
    }
}

struct Trained {
    lambda: f64,
    validation_error: f64,
    state: TrainerState,
}

fn run_hdsl(
    s: &Settings,
    constraints: &ConstraintSet,
    train: &Dataset,
    validation: &Dataset,
    test: Option<&Dataset>,
) -> Result<()> {
    let mut grid_rows = Vec::new();
    let mut chosen: Option<Trained> = None;
    for &lambda in &s.lambdas {
        let config = OptimizerConfig {
            lambda,
            strategy: s.strategy,
            batch_size: s.batch_size,
            max_iterations: s.iterations,
            validation_every: s.eval_every,
            seed: s.seed,
            knn_k: s.k,
            keep_snapshots: test.is_some(),
            ..OptimizerConfig::default()
        };
        config.validate(constraints.len()).map_err(|e| usage(e.to_string()))?;
        let state = hdsl_core::train(&config, constraints, Some(Validation { train, validation }))?;
        let best = state.best.as_ref().context("training produced no validated iterate")?;
        let err = best.validation_error.unwrap_or(f64::INFINITY);
        let stats = best.model.structure_stats();
        eprintln!(
            "λ = {lambda}: validation error {err:.2}% at iteration {} [{} features], {} iterations, objective {:.6}",
            best.iteration,
            stats.active_features,
            state.iteration,
            state.objective()
        );
        grid_rows.push((lambda, err, best.iteration, stats.active_features, stats.n_atoms));
        if chosen.as_ref().is_none_or(|c| err < c.validation_error) {
            chosen = Some(Trained {
                lambda,
                validation_error: err,
                state,
            });
        }
    }
    let chosen = chosen.expect("at least one λ");
    let best = chosen.state.best_model();

    let test_error = test.map(|t| knn_error(best, train, t, s.k)).transpose()?;
    let curve = match test {
        Some(t) => Some(emit_dimension_curve(&chosen.state.snapshots, train, validation, t, s.k)?),
        None => None,
    };

    let out = &s.out_dir;
    write_atomic(&out.join("model.txt"), |w| Ok(best.save(w)?))?;
    write_atomic(&out.join("last_model.txt"), |w| Ok(chosen.state.model.save(w)?))?;
    write_atomic(&out.join("train_log.csv"), |w| Ok(IterationRecord::write_csv(&chosen.state.log, w)?))?;
    if s.lambdas.len() > 1 {
        write_grid(&out.join("lambda_grid.csv"), &grid_rows)?;
    }
    if let Some(rows) = &curve {
        write_atomic(&out.join("curve.csv"), |w| Ok(write_curve_csv(rows, w)?))?;
    }

    let stats = best.structure_stats();
    println!("lambda: {}", chosen.lambda);
    println!("validation error: {:.2}%", chosen.validation_error);
    if let Some(e) = test_error {
        println!("test error: {e:.2}% [{} features]", stats.active_features);
    }
    println!(
        "model: {} atoms, {} features, {} nonzeros -> {}",
        stats.n_atoms,
        stats.active_features,
        stats.nnz_entries,
        out.join("model.txt").display()
    );
    Ok(())
}

fn write_grid(path: &Path, rows: &[(f64, f64, usize, usize, usize)]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "lambda,validation_error,best_iteration,features,atoms")?;
        for (l, e, it, f, a) in rows {
            writeln!(w, "{l},{e},{it},{f},{a}")?;
        }
        Ok(())
    })
}

fn run_diag(
    s: &Settings,
    constraints: &ConstraintSet,
    train: &Dataset,
    validation: &Dataset,
    test: Option<&Dataset>,
) -> Result<()> {
    let mut chosen: Option<(f64, DiagTrainResult)> = None;
    for &weight in &s.reg_weights {
        let config = DiagConfig {
            regularizer: s.reg,
            reg_weight: weight,
            max_iterations: s.iterations,
            validation_every: s.eval_every,
            knn_k: s.k,
            ..DiagConfig::default()
        };
        let result = train_diag(constraints, &config, Some(Validation { train, validation }))?;
        let err = result.best_validation_error.unwrap_or(f64::INFINITY);
        eprintln!(
            "reg weight {weight}: validation error {err:.2}% at iteration {} [{} features]",
            result.best_iteration,
            result.model.n_nonzero()
        );
        if chosen.as_ref().is_none_or(|(e, _)| err < *e) {
            chosen = Some((err, result));
        }
    }
    let (err, result) = chosen.expect("at least one weight");
    let model = &result.model;
    let test_error = test.map(|t| knn_error_with(model, train, t, s.k)).transpose()?;

    let out = &s.out_dir;
    write_atomic(&out.join("model.txt"), |w| Ok(model.save(w)?))?;
    write_atomic(&out.join("train_log.csv"), |w| {
        writeln!(w, "k,objective")?;
        for (k, f) in result.objective_history.iter().enumerate() {
            writeln!(w, "{k},{f}")?;
        }
        Ok(())
    })?;

    println!("reg weight: {}", model.reg_weight);
    println!("validation error: {err:.2}%");
    if let Some(e) = test_error {
        println!("test error: {e:.2}% [{} features]", model.n_nonzero());
    }
    println!("model: {} nonzero weights -> {}", model.n_nonzero(), out.join("model.txt").display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constraint_specs() {
        assert_eq!("knn:3:5".parse(), Ok(ConstraintSpec::Knn { targets: 3, impostors: 5 }));
        assert_eq!("random:20".parse(), Ok(ConstraintSpec::Random { per_instance: 20 }));
        assert_eq!("file:t.txt".parse(), Ok(ConstraintSpec::File("t.txt".into())));
        assert!("knn:3".parse::<ConstraintSpec>().is_err());
        assert!("random:x".parse::<ConstraintSpec>().is_err());
        assert!("file:".parse::<ConstraintSpec>().is_err());
    }
}
