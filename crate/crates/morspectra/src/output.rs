//! File emission helpers: atomic writes and the `omega,sigma` spectrum CSV.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Write a file atomically (temp file in the same directory, then rename).
pub fn atomic_write<F>(path: &Path, write_fn: F) -> Result<()>
where
    F: FnOnce(&mut File) -> Result<()>,
{
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(dir) => tempfile::NamedTempFile::new_in(dir)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    write_fn(tmp.as_file_mut())?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Write a sampled spectrum as CSV with header `omega,sigma`, one row per
/// grid point, 17 significant digits (lossless for f64).
pub fn write_spectrum_csv(path: &Path, omegas: &[f64], sigma: &[f64]) -> Result<()> {
    assert_eq!(omegas.len(), sigma.len());
    atomic_write(path, |file| {
        let mut w = BufWriter::new(file);
        writeln!(w, "omega,sigma")?;
        for (o, s) in omegas.iter().zip(sigma.iter()) {
            writeln!(w, "{o:.16e},{s:.16e}")?;
        }
        w.flush()?;
        Ok(())
    })
}

/// Read a spectrum CSV written by [`write_spectrum_csv`].
pub fn read_spectrum_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let err = |msg: String| Error::Csv {
        path: path.display().to_string(),
        msg,
    };
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut omegas = Vec::new();
    let mut sigma = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if idx == 0 {
            if t != "omega,sigma" {
                return Err(err(format!("bad header: {t}")));
            }
            continue;
        }
        let mut parts = t.split(',');
        let o = parts
            .next()
            .and_then(|v| v.trim().parse::<f64>().ok())
            .ok_or_else(|| err(format!("bad row {idx}: {t}")))?;
        let s = parts
            .next()
            .and_then(|v| v.trim().parse::<f64>().ok())
            .ok_or_else(|| err(format!("bad row {idx}: {t}")))?;
        if parts.next().is_some() {
            return Err(err(format!("bad row {idx}: {t}")));
        }
        omegas.push(o);
        sigma.push(s);
    }
    Ok((omegas, sigma))
}

/// Normalize a spectrum by its own max-abs over the window; all-zero input is
/// returned unchanged.
pub fn normalize(sigma: &[f64]) -> Vec<f64> {
    let max = sigma.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if max == 0.0 {
        sigma.to_vec()
    } else {
        sigma.iter().map(|v| v / max).collect()
    }
}

/// Max-abs difference of two self-normalized spectra and the omega where it
/// occurs. Grids must be identical.
pub fn compare_normalized(
    omegas_a: &[f64],
    sigma_a: &[f64],
    omegas_b: &[f64],
    sigma_b: &[f64],
) -> Result<(f64, f64)> {
    if omegas_a.len() != omegas_b.len() || omegas_a != omegas_b {
        return Err(Error::DimensionMismatch(
            "spectra are sampled on different omega grids".into(),
        ));
    }
    let na = normalize(sigma_a);
    let nb = normalize(sigma_b);
    let mut max_diff = 0.0;
    let mut at = omegas_a.first().copied().unwrap_or(0.0);
    for ((&a, &b), &o) in na.iter().zip(nb.iter()).zip(omegas_a.iter()) {
        let diff = (a - b).abs();
        if diff > max_diff {
            max_diff = diff;
            at = o;
        }
    }
    Ok((max_diff, at))
}
