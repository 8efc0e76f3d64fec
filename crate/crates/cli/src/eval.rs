use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use hdsl_core::eval::{error_rate, knn_classify, knn_classify_embedded, write_predictions_csv, IdentityScorer};
use hdsl_core::Split;

use crate::io::{load_model, load_scaled, require_file, usage, write_atomic, LoadedModel};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Model file (bilinear or diagonal, detected from the header).
    #[arg(long, conflicts_with = "identity")]
    model: Option<PathBuf>,
    /// Use the plain dot product instead of a model.
    #[arg(long)]
    identity: bool,
    /// Training data the neighbors are drawn from.
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Write `query_id,predicted,true` rows here.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    dimension: Option<usize>,
    /// Skip max-scaling of features.
    #[arg(long)]
    no_normalize: bool,
}

pub fn run(args: EvalArgs) -> Result<()> {
    if args.model.is_none() && !args.identity {
        return Err(usage("give --model or --identity"));
    }
    if args.k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    require_file(&args.train)?;
    require_file(&args.test)?;
    let model = match &args.model {
        Some(p) => Some(load_model(p, args.dimension)?),
        None => None,
    };
    let sets = load_scaled(&args.train, &[(&args.test, Split::Test)], args.dimension, args.no_normalize)?;
    let (train, test) = (&sets[0], &sets[1]);

    let (predictions, summary) = match &model {
        None => (
            knn_classify(train, test, &IdentityScorer, args.k)?,
            format!("[{} features]", train.dimension()),
        ),
        Some(LoadedModel::Bilinear(m)) => {
            let stats = m.structure_stats();
            (
                knn_classify_embedded(m, train, test, args.k)?,
                format!(
                    "[{} features]\natoms: {}\nnonzeros: {}",
                    stats.active_features, stats.n_atoms, stats.nnz_entries
                ),
            )
        }
        Some(LoadedModel::Diag(m)) => (
            knn_classify(train, test, m, args.k)?,
            format!("[{} features]", m.n_nonzero()),
        ),
    };
    let error = error_rate(&predictions, test.labels())?;
    if let Some(path) = &args.predictions {
        write_atomic(path, |w| Ok(write_predictions_csv(&predictions, test.labels(), w)?))?;
    }
    println!("{}-NN test error: {error:.2}% {summary}", args.k);
    Ok(())
}
