use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hdsl_core::data::{load_libsvm, normalize_minmax, FeatureScaler};
use hdsl_core::{Dataset, DiagModel, SimilarityModel, Split};
use tempfile::NamedTempFile;

/// Bad invocation or unreadable input; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 2 for usage and I/O problems, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<std::io::Error>() {
            return 2;
        }
        if let Some(hdsl_core::Error::Io(_)) = cause.downcast_ref::<hdsl_core::Error>() {
            return 2;
        }
    }
    1
}

pub fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(usage(format!("cannot read {}: no such file", path.display())));
    }
    Ok(())
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    require_file(path)?;
    let file = File::open(path).map_err(|e| usage(format!("cannot open {}: {e}", path.display())))?;
    Ok(BufReader::new(file))
}

/// Writes through a temporary file in the destination directory so a failed
/// run never leaves a truncated file behind.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let tmp = NamedTempFile::new_in(&dir).with_context(|| format!("cannot write in {}", dir.display()))?;
    let mut out = BufWriter::new(tmp);
    fill(&mut out)?;
    let tmp = out.into_inner().map_err(|e| e.into_error())?;
    tmp.persist(path)
        .map_err(|e| e.error)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn load_dataset(path: &Path, dimension: Option<usize>, split: Split) -> Result<Dataset> {
    require_file(path)?;
    let ds = load_libsvm(path, dimension).with_context(|| format!("loading {}", path.display()))?;
    Ok(ds.with_split(split))
}

/// Loads datasets and gives them a shared dimension: the one requested, or
/// the largest seen.
pub fn load_group(files: &[(&Path, Split)], dimension: Option<usize>) -> Result<Vec<Dataset>> {
    let sets = files
        .iter()
        .map(|(p, s)| load_dataset(p, dimension, *s))
        .collect::<Result<Vec<_>>>()?;
    let dim = dimension.unwrap_or_else(|| sets.iter().map(Dataset::dimension).max().unwrap_or(0));
    sets.into_iter()
        .map(|d| d.with_dimension(dim).map_err(Into::into))
        .collect()
}

/// Loads the training set plus `others`, scaled by the training maxima unless
/// `raw` is set.
pub fn load_scaled(train: &Path, others: &[(&Path, Split)], dimension: Option<usize>, raw: bool) -> Result<Vec<Dataset>> {
    let mut files = vec![(train, Split::Train)];
    files.extend_from_slice(others);
    let sets = load_group(&files, dimension)?;
    if raw {
        return Ok(sets);
    }
    Ok(normalize_minmax(sets)?)
}

/// Scales `data` by the maxima of `train` (both already share a dimension).
pub fn scale_like(train: &Dataset, data: Dataset) -> Result<Dataset> {
    let scaler = FeatureScaler::fit(train)?;
    Ok(scaler.transform(data)?)
}

pub enum LoadedModel {
    Bilinear(SimilarityModel),
    Diag(DiagModel),
}

/// Reads either model format, telling them apart by the header.
pub fn load_model(path: &Path, dimension: Option<usize>) -> Result<LoadedModel> {
    let mut reader = open(path)?;
    let mut text = String::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        text.push_str(&line);
    }
    let first = text.split_whitespace().next().unwrap_or("");
    let loaded = if first == "diag" {
        LoadedModel::Diag(DiagModel::load(text.as_bytes(), dimension)?)
    } else {
        LoadedModel::Bilinear(SimilarityModel::load(text.as_bytes())?)
    };
    Ok(loaded)
}
