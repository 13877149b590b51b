//! Portable reduced-model persistence: a JSON document whose numeric arrays
//! are base64-encoded little-endian f64 in row-major order, so a saved model
//! can be re-evaluated on a different grid without re-solving.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::output::atomic_write;
use crate::pencil::ComplexShift;
use crate::rom::{DeflationEvent, ReducedModel, RomVariant};

pub const FORMAT: &str = "reduced-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ArrayBlob {
    rows: usize,
    cols: usize,
    /// base64 of rows*cols little-endian f64, row-major.
    data: String,
}

fn encode(arr: &Array2<f64>) -> ArrayBlob {
    let mut bytes = Vec::with_capacity(8 * arr.len());
    for row in arr.rows() {
        for &v in row {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    ArrayBlob {
        rows: arr.nrows(),
        cols: arr.ncols(),
        data: B64.encode(bytes),
    }
}

fn decode(blob: &ArrayBlob, what: &str) -> Result<Array2<f64>> {
    let bad = |msg: String| Error::InvalidConfig(format!("model file: {what}: {msg}"));
    let bytes = B64
        .decode(&blob.data)
        .map_err(|e| bad(format!("base64: {e}")))?;
    if bytes.len() != 8 * blob.rows * blob.cols {
        return Err(bad(format!(
            "expected {} bytes for {}x{}, got {}",
            8 * blob.rows * blob.cols,
            blob.rows,
            blob.cols,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((blob.rows, blob.cols), values)
        .map_err(|e| bad(format!("shape: {e}")))
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    variant: RomVariant,
    shifts: Vec<ComplexShift>,
    basis: ArrayBlob,
    operator: ArrayBlob,
    metric: Option<ArrayBlob>,
    d_hat: ArrayBlob,
    deflation_log: Vec<DeflationEvent>,
}

pub fn save_model(path: &Path, model: &ReducedModel) -> Result<()> {
    let file = ModelFile {
        format: FORMAT.into(),
        version: VERSION,
        variant: model.variant,
        shifts: model.shifts.clone(),
        basis: encode(&model.basis),
        operator: encode(&model.operator),
        metric: model.metric.as_ref().map(encode),
        d_hat: encode(&model.d_hat),
        deflation_log: model.deflation_log.clone(),
    };
    atomic_write(path, |out| {
        serde_json::to_writer(&mut *out, &file)?;
        use std::io::Write;
        writeln!(out)?;
        Ok(())
    })
}

pub fn load_model(path: &Path) -> Result<ReducedModel> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)?;
    if file.format != FORMAT {
        return Err(Error::InvalidConfig(format!(
            "not a reduced-model file: format {:?}",
            file.format
        )));
    }
    if file.version != VERSION {
        return Err(Error::InvalidConfig(format!(
            "unsupported model file version {}",
            file.version
        )));
    }
    let basis = decode(&file.basis, "basis")?;
    let operator = decode(&file.operator, "operator")?;
    let metric = file
        .metric
        .as_ref()
        .map(|m| decode(m, "metric"))
        .transpose()?;
    let d_hat = decode(&file.d_hat, "d_hat")?;
    let r = operator.nrows();
    if operator.ncols() != r || basis.ncols() != r || d_hat.nrows() != r || d_hat.ncols() != 3 {
        return Err(Error::InvalidConfig(
            "model file: inconsistent array dimensions".into(),
        ));
    }
    match (file.variant, &metric) {
        (RomVariant::FullPencil, None) => {
            return Err(Error::InvalidConfig(
                "model file: full-pencil model lacks its metric".into(),
            ))
        }
        (RomVariant::MkStructured, Some(_)) => {
            return Err(Error::InvalidConfig(
                "model file: unexpected metric on mk-structured model".into(),
            ))
        }
        _ => {}
    }
    if let Some(m) = &metric {
        if m.nrows() != r || m.ncols() != r {
            return Err(Error::InvalidConfig(
                "model file: inconsistent metric dimensions".into(),
            ));
        }
    }
    Ok(ReducedModel {
        variant: file.variant,
        basis,
        operator,
        metric,
        d_hat,
        shifts: file.shifts,
        deflation_log: file.deflation_log,
    })
}
