//! Displacement fields as two little-endian `f32` planes, row component then
//! column component, with a JSON sidecar at `<path>.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::displacement::DisplacementField;
use crate::error::{invalid, Error, Result};
use crate::grid::GridShape;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub h: usize,
    pub w: usize,
    pub planes: usize,
    pub dtype: String,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn write_field(path: impl AsRef<Path>, field: &DisplacementField) -> Result<()> {
    let path = path.as_ref();
    let shape = field.shape();
    let mut payload = Vec::with_capacity(8 * shape.len());
    for plane in 0..2 {
        for v in field.vectors() {
            payload.extend_from_slice(&(v[plane] as f32).to_le_bytes());
        }
    }
    let header = FieldHeader {
        h: shape.h,
        w: shape.w,
        planes: 2,
        dtype: "f32le".into(),
    };
    fs::write(path, payload)?;
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(&header)?)?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<DisplacementField> {
    let path = path.as_ref();
    let header: FieldHeader = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    if header.planes != 2 || header.dtype != "f32le" {
        return Err(invalid(format!(
            "field sidecar declares {} planes of {}, expected 2 of f32le",
            header.planes, header.dtype
        )));
    }
    let shape = GridShape::new(header.h, header.w)?;
    let payload = fs::read(path)?;
    let need = 8 * shape.len();
    if payload.len() != need {
        return Err(Error::Parse {
            offset: payload.len().min(need),
            msg: format!("field payload is {} bytes, expected {need}", payload.len()),
        });
    }
    let floats: Vec<f64> = payload
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect();
    let (rows, cols) = floats.split_at(shape.len());
    DisplacementField::new(
        shape,
        rows.iter().zip(cols).map(|(&r, &c)| [r, c]).collect(),
    )
}
