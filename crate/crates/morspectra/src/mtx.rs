//! Matrix Market ingestion and emission for dense real matrices.
//!
//! Both `coordinate` and `array` formats are read; `general`, `symmetric`,
//! and `skew-symmetric` storage is honored. Writing always uses the `array`
//! format with full precision.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::prelude::*;

use crate::error::{Error, Result};
use crate::output::atomic_write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::MatrixMarket {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

/// Read a dense real matrix from a Matrix Market file.
pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();

    let header = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(parse_err(path, "empty file")),
        }
    };
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_lowercase()).collect();
    if tokens.len() < 4 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(path, format!("bad header line: {header}")));
    }
    let format = match tokens[2].as_str() {
        "coordinate" => Format::Coordinate,
        "array" => Format::Array,
        other => return Err(parse_err(path, format!("unsupported format {other}"))),
    };
    match tokens[3].as_str() {
        "real" | "integer" => {}
        other => return Err(parse_err(path, format!("unsupported field type {other}"))),
    }
    let symmetry = match tokens.get(4).map(|s| s.as_str()).unwrap_or("general") {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(parse_err(path, format!("unsupported symmetry {other}"))),
    };

    // skip comments and blanks up to the size line
    let size_line = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                let t = line.trim();
                if !t.is_empty() && !t.starts_with('%') {
                    break line;
                }
            }
            None => return Err(parse_err(path, "missing size line")),
        }
    };
    let sizes: Vec<&str> = size_line.split_whitespace().collect();

    match format {
        Format::Coordinate => {
            if sizes.len() != 3 {
                return Err(parse_err(path, "coordinate size line must be `rows cols nnz`"));
            }
            let rows: usize = sizes[0].parse().map_err(|_| parse_err(path, "bad row count"))?;
            let cols: usize = sizes[1].parse().map_err(|_| parse_err(path, "bad col count"))?;
            let nnz: usize = sizes[2].parse().map_err(|_| parse_err(path, "bad nnz count"))?;
            let mut mat = Array2::zeros((rows, cols));
            let mut seen = 0usize;
            for line in lines {
                let line = line?;
                let t = line.trim();
                if t.is_empty() || t.starts_with('%') {
                    continue;
                }
                let parts: Vec<&str> = t.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(parse_err(path, format!("bad coordinate entry: {t}")));
                }
                let i: usize = parts[0].parse().map_err(|_| parse_err(path, "bad row index"))?;
                let j: usize = parts[1].parse().map_err(|_| parse_err(path, "bad col index"))?;
                let v: f64 = parts[2].parse().map_err(|_| parse_err(path, "bad value"))?;
                if i < 1 || i > rows || j < 1 || j > cols {
                    return Err(parse_err(path, format!("index ({i},{j}) out of bounds")));
                }
                mat[[i - 1, j - 1]] = v;
                match symmetry {
                    Symmetry::Symmetric => mat[[j - 1, i - 1]] = v,
                    Symmetry::SkewSymmetric => mat[[j - 1, i - 1]] = -v,
                    Symmetry::General => {}
                }
                seen += 1;
            }
            if seen != nnz {
                return Err(parse_err(path, format!("expected {nnz} entries, found {seen}")));
            }
            Ok(mat)
        }
        Format::Array => {
            if sizes.len() != 2 {
                return Err(parse_err(path, "array size line must be `rows cols`"));
            }
            let rows: usize = sizes[0].parse().map_err(|_| parse_err(path, "bad row count"))?;
            let cols: usize = sizes[1].parse().map_err(|_| parse_err(path, "bad col count"))?;
            let mut values = Vec::new();
            for line in lines {
                let line = line?;
                let t = line.trim();
                if t.is_empty() || t.starts_with('%') {
                    continue;
                }
                for tok in t.split_whitespace() {
                    let v: f64 = tok.parse().map_err(|_| parse_err(path, "bad value"))?;
                    values.push(v);
                }
            }
            let mut mat = Array2::zeros((rows, cols));
            let mut it = values.iter();
            match symmetry {
                Symmetry::General => {
                    if values.len() != rows * cols {
                        return Err(parse_err(
                            path,
                            format!("expected {} values, found {}", rows * cols, values.len()),
                        ));
                    }
                    // column-major per the format
                    for j in 0..cols {
                        for i in 0..rows {
                            mat[[i, j]] = *it.next().unwrap();
                        }
                    }
                }
                Symmetry::Symmetric | Symmetry::SkewSymmetric => {
                    if rows != cols {
                        return Err(parse_err(path, "symmetric array matrix must be square"));
                    }
                    let expect = rows * (rows + 1) / 2;
                    if values.len() != expect {
                        return Err(parse_err(
                            path,
                            format!("expected {} values, found {}", expect, values.len()),
                        ));
                    }
                    // lower triangle, column-major
                    for j in 0..cols {
                        for i in j..rows {
                            let v = *it.next().unwrap();
                            mat[[i, j]] = v;
                            if i != j {
                                mat[[j, i]] = if symmetry == Symmetry::Symmetric { v } else { -v };
                            }
                        }
                    }
                }
            }
            Ok(mat)
        }
    }
}

/// Write a dense real matrix in array format. With `symmetric` only the lower
/// triangle is stored.
pub fn write_matrix(path: &Path, mat: &ArrayView2<'_, f64>, symmetric: bool) -> Result<()> {
    atomic_write(path, |file| {
        let mut w = BufWriter::new(file);
        let (rows, cols) = (mat.nrows(), mat.ncols());
        if symmetric {
            writeln!(w, "%%MatrixMarket matrix array real symmetric")?;
            writeln!(w, "{rows} {cols}")?;
            for j in 0..cols {
                for i in j..rows {
                    writeln!(w, "{:.16e}", mat[[i, j]])?;
                }
            }
        } else {
            writeln!(w, "%%MatrixMarket matrix array real general")?;
            writeln!(w, "{rows} {cols}")?;
            for j in 0..cols {
                for i in 0..rows {
                    writeln!(w, "{:.16e}", mat[[i, j]])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    })
}
