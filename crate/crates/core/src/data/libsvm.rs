//! LIBSVM text format: `label idx:val idx:val ...` with 1-based feature indices.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;

use super::{Dataset, SparseVector, Split};
use crate::error::{Error, Result};

/// Parses LIBSVM lines into a dataset tagged [`Split::Train`].
///
/// Blank lines and lines starting with `#` are skipped. The dimension is
/// `expected_dimension` when given, otherwise one past the largest index seen.
pub fn parse_libsvm<R: BufRead>(reader: R, expected_dimension: Option<usize>) -> Result<Dataset> {
    let mut instances = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0usize;

    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label = parse_label(label_tok).ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("invalid label {label_tok:?}"),
        })?;

        let mut pairs = Vec::new();
        for tok in tokens {
            if tok.starts_with('#') {
                break;
            }
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected idx:val, got {tok:?}"),
            })?;
            let idx: i64 = idx.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("invalid feature index {idx:?}"),
            })?;
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("invalid feature value {val:?}"),
            })?;
            if !val.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("non-finite feature value {val}"),
                });
            }
            let in_bounds = idx >= 1 && expected_dimension.is_none_or(|d| idx as usize <= d);
            if !in_bounds {
                return Err(Error::Bounds {
                    line: line_no,
                    index: idx,
                    dimension: expected_dimension.unwrap_or(0),
                });
            }
            let zero_based = (idx - 1) as usize;
            max_index = max_index.max(zero_based + 1);
            pairs.push((zero_based, val));
        }
        let x = SparseVector::from_pairs(pairs).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        instances.push(x);
        labels.push(label);
    }

    let dimension = expected_dimension.unwrap_or(max_index);
    Dataset::new(instances, labels, dimension, Split::Train)
}

fn parse_label(tok: &str) -> Option<i64> {
    if let Ok(v) = tok.parse::<i64>() {
        return Some(v);
    }
    let v: f64 = tok.parse().ok()?;
    (v.fract() == 0.0 && v.is_finite()).then_some(v as i64)
}

/// Reads a LIBSVM file from disk; names ending in `.gz` are decompressed.
pub fn load_libsvm<P: AsRef<Path>>(path: P, expected_dimension: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        parse_libsvm(BufReader::new(MultiGzDecoder::new(file)), expected_dimension)
    } else {
        parse_libsvm(BufReader::new(file), expected_dimension)
    }
}

/// Writes a dataset in LIBSVM format with shortest round-trip float formatting.
pub fn write_libsvm<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    for (x, label) in dataset.instances().iter().zip(dataset.labels()) {
        write!(out, "{label}")?;
        for (i, v) in x.iter() {
            write!(out, " {}:{}", i + 1, v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str, dim: Option<usize>) -> Result<Dataset> {
        parse_libsvm(text.as_bytes(), dim)
    }

    #[test]
    fn maps_one_based_indices() {
        let ds = parse("1 3:0.5 7:1.0\n", None).unwrap();
        assert_eq!(ds.label(0), 1);
        assert_eq!(ds.instance(0).indices(), &[2, 6]);
        assert_eq!(ds.instance(0).values(), &[0.5, 1.0]);
        assert_eq!(ds.dimension(), 7);
    }

    #[test]
    fn label_only_line_is_empty_instance() {
        let ds = parse("-1\n", None).unwrap();
        assert_eq!(ds.label(0), -1);
        assert!(ds.instance(0).is_empty());
    }

    #[test]
    fn dimension_from_max_index() {
        let ds = parse("+1 5:1 47236:0.25\n-1 100:2\n", None).unwrap();
        assert_eq!(ds.dimension(), 47_236);
        assert_eq!(ds.len(), 2);
    }

    #[test]
    fn expected_dimension_wins() {
        let ds = parse("1 2:1\n", Some(20_000)).unwrap();
        assert_eq!(ds.dimension(), 20_000);
    }

    #[test]
    fn malformed_token_reports_line() {
        match parse("1 1:1\n2 3-4\n", None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("x 1:1\n", None), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("1 1:abc\n", None), Err(Error::Parse { .. })));
    }

    #[test]
    fn index_bounds_are_checked() {
        assert!(matches!(parse("1 0:1\n", None), Err(Error::Bounds { index: 0, .. })));
        assert!(matches!(parse("1 -2:1\n", None), Err(Error::Bounds { .. })));
        assert!(matches!(
            parse("1 1:1\n1 11:1\n", Some(10)),
            Err(Error::Bounds { line: 2, index: 11, .. })
        ));
    }

    #[test]
    fn duplicate_index_is_a_parse_error() {
        assert!(matches!(parse("1 2:1 2:3\n", None), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn skips_blank_and_comment_lines() {
        let ds = parse("# header\n\n1 1:1\n   \n2 2:1 # trailing\n", None).unwrap();
        assert_eq!(ds.labels(), &[1, 2]);
    }

    #[test]
    fn reads_gzip_files() {
        use flate2::write::GzEncoder;
        use flate2::Compression;
        let dir = std::env::temp_dir().join(format!("hdsl-gz-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("data.svm.gz");
        let mut enc = GzEncoder::new(File::create(&path).unwrap(), Compression::default());
        enc.write_all(b"1 1:0.5\n-1 4:2\n").unwrap();
        enc.finish().unwrap();
        let ds = load_libsvm(&path, None).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dimension(), 4);
        std::fs::remove_dir_all(dir).ok();
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        let row = (
            -3i64..4,
            proptest::collection::btree_map(0usize..40, -1e3f64..1e3, 0..8),
        );
        proptest::collection::vec(row, 0..12).prop_map(|rows| {
            let (labels, xs): (Vec<_>, Vec<_>) = rows
                .into_iter()
                .map(|(l, m)| (l, SparseVector::from_pairs(m.into_iter().collect()).unwrap()))
                .unzip();
            Dataset::new(xs, labels, 40, Split::Train).unwrap()
        })
    }

    proptest! {
        #[test]
        fn write_then_parse_round_trips(ds in arb_dataset()) {
            let mut buf = Vec::new();
            write_libsvm(&ds, &mut buf).unwrap();
            let back = parse_libsvm(buf.as_slice(), Some(40)).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
