use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use hdsl_core::Split;

use crate::io::{load_dataset, load_group, load_model, require_file, scale_like, usage, write_atomic, LoadedModel};

#[derive(Args, Debug)]
pub struct ProjectArgs {
    /// Bilinear model file.
    #[arg(long)]
    model: PathBuf,
    /// Data to project.
    #[arg(long)]
    data: PathBuf,
    /// Output CSV, one row per instance.
    #[arg(long)]
    out: PathBuf,
    /// Training data whose feature maxima scale `--data`; omit for raw features.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dimension: Option<usize>,
}

pub fn run(args: ProjectArgs) -> Result<()> {
    require_file(&args.data)?;
    let model = match load_model(&args.model, None)? {
        LoadedModel::Bilinear(m) => m,
        LoadedModel::Diag(_) => return Err(usage("projection needs a bilinear model, not a diagonal one")),
    };
    let data = match &args.train {
        Some(train) => {
            let mut sets = load_group(&[(train, Split::Train), (&args.data, Split::Test)], args.dimension)?;
            let data = sets.pop().expect("two datasets");
            scale_like(&sets[0], data)?
        }
        None => load_dataset(&args.data, args.dimension, Split::Test)?,
    };

    let width = model.n_atoms();
    write_atomic(&args.out, |w| {
        let header: Vec<String> = (0..width).map(|c| format!("e{c}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for x in data.instances() {
            let row: Vec<String> = model.embed(x).iter().map(f64::to_string).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    })?;
    eprintln!("wrote {} rows of dimension {width} to {}", data.len(), args.out.display());
    Ok(())
}
