//! Matrix Market and plain-text vector / spectrum I/O.

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// Reads a real coordinate Matrix Market file. Symmetric storage is
/// expanded to full structure and the symmetric flag set.
pub fn read_matrix_market(path: &Path) -> Result<SparseMatrix> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, msg: "empty file".into() })?;
    let header = header?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() < 5 || fields[0] != "%%MatrixMarket" || fields[1] != "matrix" {
        return Err(Error::Parse { line: 1, msg: "not a MatrixMarket matrix header".into() });
    }
    if fields[2] != "coordinate" || fields[3] != "real" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unsupported format: {} {}", fields[2], fields[3]),
        });
    }
    let symmetric = match fields[4] {
        "general" => false,
        "symmetric" => true,
        other => {
            return Err(Error::Parse { line: 1, msg: format!("unsupported symmetry: {other}") })
        }
    };

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        if dims.is_none() {
            if toks.len() != 3 {
                return Err(Error::Parse { line: lineno, msg: "expected size line".into() });
            }
            let m = toks[0].parse().map_err(|e| Error::Parse { line: lineno, msg: format!("{e}") })?;
            let n = toks[1].parse().map_err(|e| Error::Parse { line: lineno, msg: format!("{e}") })?;
            let nnz = toks[2].parse().map_err(|e| Error::Parse { line: lineno, msg: format!("{e}") })?;
            dims = Some((m, n, nnz));
            continue;
        }
        if toks.len() != 3 {
            return Err(Error::Parse { line: lineno, msg: "expected 'i j value'".into() });
        }
        let i: usize = toks[0].parse().map_err(|e| Error::Parse { line: lineno, msg: format!("{e}") })?;
        let j: usize = toks[1].parse().map_err(|e| Error::Parse { line: lineno, msg: format!("{e}") })?;
        let v: f64 = toks[2].parse().map_err(|e| Error::Parse { line: lineno, msg: format!("{e}") })?;
        if i == 0 || j == 0 {
            return Err(Error::Parse { line: lineno, msg: "indices are 1-based".into() });
        }
        triplets.push((i - 1, j - 1, v));
        if symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
    }
    let (m, n, _) = dims.ok_or_else(|| Error::Parse { line: 0, msg: "missing size line".into() })?;
    let mut mat = SparseMatrix::from_triplets(m, n, &triplets)?;
    if symmetric {
        mat.set_symmetric()?;
    }
    Ok(mat)
}

/// Writes coordinate Matrix Market; symmetric-flagged matrices are stored
/// lower-triangular under the symmetric qualifier.
pub fn write_matrix_market(path: &Path, a: &SparseMatrix) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let symmetric = a.is_symmetric_flagged();
    let kind = if symmetric { "symmetric" } else { "general" };
    writeln!(w, "%%MatrixMarket matrix coordinate real {kind}")?;
    let triplets: Vec<_> = a
        .triplets()
        .into_iter()
        .filter(|&(i, j, _)| !symmetric || j <= i)
        .collect();
    writeln!(w, "{} {} {}", a.n_rows(), a.n_cols(), triplets.len())?;
    for (i, j, v) in triplets {
        writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

/// Plain-text vector: one value per line.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t
            .parse()
            .map_err(|e| Error::Parse { line: idx + 1, msg: format!("{e}") })?;
        out.push(v);
    }
    Ok(out)
}

pub fn write_vector(path: &Path, x: &[f64]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    for v in x {
        writeln!(w, "{v:.17e}")?;
    }
    Ok(())
}

/// Spectrum file: one eigenvalue per line, strictly positive and ascending.
pub fn read_spectrum(path: &Path) -> Result<Vec<f64>> {
    let vals = read_vector(path)?;
    validate_spectrum(&vals)?;
    Ok(vals)
}

pub fn validate_spectrum(vals: &[f64]) -> Result<()> {
    for (idx, pair) in vals.windows(2).enumerate() {
        if pair[1] < pair[0] {
            return Err(Error::Parse {
                line: idx + 2,
                msg: format!("spectrum not ascending: {} after {}", pair[1], pair[0]),
            });
        }
    }
    if let Some((idx, v)) = vals.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::Parse { line: idx + 1, msg: format!("non-positive eigenvalue {v}") });
    }
    Ok(())
}

pub fn write_spectrum(path: &Path, vals: &[f64]) -> Result<()> {
    write_vector(path, vals)
}
