//! Matrix Market coordinate and dense whitespace text formats.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linops::{CsrOperator, DenseOperator, LinearOperator};

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads `.mtx` files as Matrix Market and anything else as dense text.
pub fn read_operator(path: &Path) -> Result<Arc<dyn LinearOperator>> {
    let is_mtx = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("mtx"));
    if is_mtx {
        Ok(Arc::new(read_matrix_market(path)?))
    } else {
        Ok(Arc::new(DenseOperator::new(read_dense(path)?)?))
    }
}

/// Square real coordinate matrices, `general` or `symmetric`.
pub fn read_matrix_market(path: &Path) -> Result<CsrOperator> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let fields: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(parse_err(path, 1, "missing %%MatrixMarket matrix header"));
    }
    if fields[2] != "coordinate" {
        return Err(parse_err(path, 1, format!("unsupported format '{}'", fields[2])));
    }
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(parse_err(path, 1, format!("unsupported field '{}'", fields[3])));
    }
    let symmetric = match fields[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(path, 1, format!("unsupported symmetry '{other}'"))),
    };
    let mut size: Option<(usize, usize)> = None;
    let mut trips = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match size {
            None => {
                if toks.len() != 3 {
                    return Err(parse_err(path, lineno, "expected 'rows cols nnz'"));
                }
                let nums: Vec<usize> = toks
                    .iter()
                    .map(|t| {
                        t.parse()
                            .map_err(|_| parse_err(path, lineno, format!("bad integer '{t}'")))
                    })
                    .collect::<Result<_>>()?;
                if nums[0] != nums[1] {
                    return Err(parse_err(path, lineno, "matrix is not square"));
                }
                size = Some((nums[0], nums[2]));
                trips.reserve(nums[2]);
            }
            Some((n, _)) => {
                if toks.len() != 3 {
                    return Err(parse_err(path, lineno, "expected 'row col value'"));
                }
                let i: usize = toks[0].parse().map_err(|_| parse_err(path, lineno, "bad row index"))?;
                let j: usize = toks[1]
                    .parse()
                    .map_err(|_| parse_err(path, lineno, "bad column index"))?;
                let v: f64 = toks[2].parse().map_err(|_| parse_err(path, lineno, "bad value"))?;
                if i == 0 || j == 0 || i > n || j > n {
                    return Err(parse_err(path, lineno, format!("index ({i}, {j}) out of range")));
                }
                if !v.is_finite() {
                    return Err(parse_err(path, lineno, "non-finite value"));
                }
                trips.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    trips.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (n, nnz) = size.ok_or_else(|| parse_err(path, 1, "missing size line"))?;
    let entries = if symmetric {
        trips.iter().filter(|(i, j, _)| i >= j).count()
    } else {
        trips.len()
    };
    if entries != nnz {
        return Err(parse_err(path, 1, format!("declared {nnz} entries, found {entries}")));
    }
    CsrOperator::from_triplets(n, trips)
}

/// One row per line, whitespace-separated; `#` starts a comment.
pub fn read_dense(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| match t.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(path, idx + 1, format!("bad number '{t}'"))),
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(path, idx + 1, "ragged row"));
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(parse_err(path, 1, "no rows"));
    }
    if rows[0].len() != n {
        return Err(parse_err(path, 1, "matrix is not square"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Writes the operator's entries as a `real general` coordinate file.
pub fn write_matrix_market(path: &Path, op: &dyn LinearOperator) -> Result<()> {
    let trips = op
        .triplets()
        .ok_or_else(|| Error::InvalidArgument("operator has no explicit entries".into()))?;
    let n = op.dim();
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{n} {n} {}", trips.len())?;
    for (i, j, v) in trips {
        writeln!(out, "{} {} {v:e}", i + 1, j + 1)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_dense(path: &Path, a: &DMatrix<f64>) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for row in a.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{build, ProblemKind, ProblemSpec};

    #[test]
    fn matrix_market_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = build(&ProblemSpec::with_default_u0(ProblemKind::Laplacian2D(5))).unwrap();
        let path = dir.path().join("lap.mtx");
        write_matrix_market(&path, p.operator.as_ref()).unwrap();
        let back = read_operator(&path).unwrap();
        assert_eq!(back.triplets(), p.operator.triplets());
    }

    #[test]
    fn symmetric_storage_is_expanded() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.mtx");
        fs::write(
            &path,
            "%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 2\n1 1 2.0\n2 1 -1.0\n",
        )
        .unwrap();
        let a = read_matrix_market(&path).unwrap().to_dense().unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 0.0]));
    }

    #[test]
    fn dense_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.txt");
        let a = DMatrix::from_row_slice(2, 2, &[0.1, 1.0 / 3.0, -2.5e-300, 7.0]);
        write_dense(&path, &a).unwrap();
        assert_eq!(read_dense(&path).unwrap(), a);
    }

    #[test]
    fn malformed_inputs_report_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.mtx");
        fs::write(&path, "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n").unwrap();
        match read_matrix_market(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let path = dir.path().join("bad.txt");
        fs::write(&path, "1 2\n3\n").unwrap();
        assert!(matches!(read_dense(&path), Err(Error::Parse { line: 2, .. })));
        fs::write(&path, "1 2\n3 x\n").unwrap();
        assert!(read_dense(&path).is_err());
        assert!(read_operator(&dir.path().join("missing.txt")).is_err());
    }
}
