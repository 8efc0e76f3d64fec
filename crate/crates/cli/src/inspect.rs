use std::path::PathBuf;

use anyhow::Result;
use clap::Args;

use crate::io::{load_model, LoadedModel};

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
}

pub fn run(args: InspectArgs) -> Result<()> {
    match load_model(&args.model, None)? {
        LoadedModel::Bilinear(m) => {
            let entries = m.nonzero_entries();
            for (i, j, v) in &entries {
                println!("{i} {j} {v}");
            }
            let positive = entries.iter().filter(|e| e.2 > 0.0).count();
            let stats = m.structure_stats();
            println!(
                "# atoms {} features {} nonzeros {} positive {} negative {} lambda {}",
                stats.n_atoms,
                stats.active_features,
                stats.nnz_entries,
                positive,
                entries.len() - positive,
                m.lambda()
            );
        }
        LoadedModel::Diag(m) => {
            for (f, &w) in m.weights.iter().enumerate() {
                if w != 0.0 {
                    println!("{f} {f} {w}");
                }
            }
            let positive = m.weights.iter().filter(|&&w| w > 0.0).count();
            println!(
                "# diagonal features {} positive {} negative {}",
                m.n_nonzero(),
                positive,
                m.n_nonzero() - positive
            );
        }
    }
    Ok(())
}
