//! `k,resnorm,step_kind` history files.

use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use ngmres_core::{ConvergenceHistory, StepKind};

pub const HEADER: [&str; 3] = ["k", "resnorm", "step_kind"];

/// One parsed row of a history file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub index: usize,
    pub residual_norm: f64,
    pub step_kind: StepKind,
}

pub fn rows_of(hist: &ConvergenceHistory) -> Vec<HistoryRow> {
    hist.records
        .iter()
        .map(|r| HistoryRow {
            index: r.index,
            residual_norm: r.residual_norm,
            step_kind: r.step_kind,
        })
        .collect()
}

/// Residual norms use the shortest round-tripping scientific notation.
pub fn write_history<W: Write>(out: W, hist: &ConvergenceHistory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in &hist.records {
        w.write_record([
            r.index.to_string(),
            format!("{:e}", r.residual_norm),
            r.step_kind.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_history_file(path: &Path, hist: &ConvergenceHistory) -> Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_history(std::io::BufWriter::new(file), hist)
}

pub fn read_history<R: Read>(input: R) -> Result<Vec<HistoryRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(HEADER) {
        bail!("unexpected header '{}'", header.iter().collect::<Vec<_>>().join(","));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != 3 {
            bail!("line {line}: expected 3 fields, found {}", rec.len());
        }
        let index = rec[0]
            .parse()
            .with_context(|| format!("line {line}: bad index '{}'", &rec[0]))?;
        let residual_norm = rec[1]
            .parse()
            .with_context(|| format!("line {line}: bad residual '{}'", &rec[1]))?;
        let step_kind =
            StepKind::parse(&rec[2]).with_context(|| format!("line {line}: bad step kind '{}'", &rec[2]))?;
        rows.push(HistoryRow {
            index,
            residual_norm,
            step_kind,
        });
    }
    Ok(rows)
}

pub fn read_history_file(path: &Path) -> Result<Vec<HistoryRow>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_history(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_header_and_kind() {
        assert!(read_history("k,res,kind\n0,1e0,INIT\n".as_bytes()).is_err());
        assert!(read_history("k,resnorm,step_kind\n0,1e0,BOGUS\n".as_bytes()).is_err());
        assert!(read_history("k,resnorm,step_kind\nx,1e0,FP\n".as_bytes()).is_err());
        let rows = read_history("k,resnorm,step_kind\n0,1.5e0,INIT\n1,2.5e-3,FP\n".as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].residual_norm, 2.5e-3);
        assert_eq!(rows[1].step_kind, StepKind::FixedPoint);
    }
}
