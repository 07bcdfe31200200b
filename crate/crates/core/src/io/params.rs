//! Layer parameters as flat little-endian `f32` tensors plus a JSON manifest.
//!
//! ```json
//! {"dtype": "f32le", "data": "block.bin",
//!  "tensors": [{"name": "mlp.w1", "shape": [4, 4], "offset": 0}, ...]}
//! ```
//!
//! `offset` is in bytes, `data` is relative to the manifest's directory.
//! Tensor names: `mlp.w1` (C x C, input-major), `mlp.b1` (C), `mlp.w2`
//! (C x n), `mlp.b2` (n), `norm.gamma` (C), `norm.beta` (C), and for blocks
//! `dwconv.weight` (C x k x k) and `pwconv.weight` (C x C, input-major).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};
use crate::getconv::{BlockParams, ChannelNorm, GetConvParams, Mlp};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub dtype: String,
    pub data: String,
    pub tensors: Vec<TensorEntry>,
}

fn conv_tensors(p: &GetConvParams) -> Vec<(&'static str, ArrayD<f64>)> {
    vec![
        ("mlp.w1", p.mlp.w1.clone().into_dyn()),
        ("mlp.b1", p.mlp.b1.clone().into_dyn()),
        ("mlp.w2", p.mlp.w2.clone().into_dyn()),
        ("mlp.b2", p.mlp.b2.clone().into_dyn()),
        ("norm.gamma", p.norm.gamma.clone().into_dyn()),
        ("norm.beta", p.norm.beta.clone().into_dyn()),
    ]
}

fn write_tensors(manifest_path: &Path, tensors: Vec<(&'static str, ArrayD<f64>)>) -> Result<()> {
    let data_name = manifest_path
        .file_stem()
        .map(|s| format!("{}.bin", s.to_string_lossy()))
        .ok_or_else(|| invalid("manifest path has no file name"))?;
    let mut payload = Vec::new();
    let mut entries = Vec::new();
    for (name, t) in tensors {
        entries.push(TensorEntry {
            name: name.into(),
            shape: t.shape().to_vec(),
            offset: payload.len(),
        });
        for v in t.iter() {
            payload.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let manifest = Manifest {
        dtype: "f32le".into(),
        data: data_name.clone(),
        tensors: entries,
    };
    fs::write(manifest_path.with_file_name(&data_name), payload)?;
    fs::write(manifest_path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

fn read_tensors(manifest_path: &Path) -> Result<BTreeMap<String, ArrayD<f64>>> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(manifest_path)?)?;
    if manifest.dtype != "f32le" {
        return Err(invalid(format!("unsupported dtype {}", manifest.dtype)));
    }
    let payload = fs::read(manifest_path.with_file_name(&manifest.data))?;
    let mut out = BTreeMap::new();
    for entry in manifest.tensors {
        let count: usize = entry.shape.iter().product();
        let end = entry.offset + 4 * count;
        if end > payload.len() {
            return Err(Error::Parse {
                offset: payload.len(),
                msg: format!("tensor {} needs bytes {}..{end}", entry.name, entry.offset),
            });
        }
        let values: Vec<f64> = payload[entry.offset..end]
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "tensor {} holds non-finite values",
                entry.name
            )));
        }
        let t = ArrayD::from_shape_vec(IxDyn(&entry.shape), values)
            .map_err(|e| mismatch(format!("tensor {}: {e}", entry.name)))?;
        if out.insert(entry.name.clone(), t).is_some() {
            return Err(invalid(format!("tensor {} listed twice", entry.name)));
        }
    }
    Ok(out)
}

fn take<D: ndarray::Dimension>(
    tensors: &mut BTreeMap<String, ArrayD<f64>>,
    name: &str,
) -> Result<ndarray::Array<f64, D>> {
    let t = tensors
        .remove(name)
        .ok_or_else(|| invalid(format!("manifest lacks tensor {name}")))?;
    t.into_dimensionality::<D>()
        .map_err(|_| mismatch(format!("tensor {name} has the wrong rank")))
}

fn conv_from(tensors: &mut BTreeMap<String, ArrayD<f64>>) -> Result<GetConvParams> {
    let mlp = Mlp {
        w1: take::<ndarray::Ix2>(tensors, "mlp.w1")?,
        b1: take::<ndarray::Ix1>(tensors, "mlp.b1")?,
        w2: take::<ndarray::Ix2>(tensors, "mlp.w2")?,
        b2: take::<ndarray::Ix1>(tensors, "mlp.b2")?,
    };
    let norm = ChannelNorm {
        gamma: take::<ndarray::Ix1>(tensors, "norm.gamma")?,
        beta: take::<ndarray::Ix1>(tensors, "norm.beta")?,
    };
    let (c, n) = (mlp.w1.nrows(), mlp.b2.len());
    if mlp.w1.dim() != (c, c)
        || mlp.b1.len() != c
        || mlp.w2.dim() != (c, n)
        || norm.gamma.len() != c
        || norm.beta.len() != c
    {
        return Err(mismatch(
            "perceptron and normalization tensors disagree on channel or stencil size",
        ));
    }
    Ok(GetConvParams { mlp, norm })
}

pub fn write_getconv_params(path: impl AsRef<Path>, params: &GetConvParams) -> Result<()> {
    write_tensors(path.as_ref(), conv_tensors(params))
}

pub fn write_block_params(path: impl AsRef<Path>, params: &BlockParams) -> Result<()> {
    let mut tensors = conv_tensors(&params.conv);
    tensors.push(("dwconv.weight", params.depthwise.clone().into_dyn()));
    tensors.push(("pwconv.weight", params.pointwise.clone().into_dyn()));
    write_tensors(path.as_ref(), tensors)
}

/// Reads the layer tensors; convolution tensors, if present, are ignored.
pub fn read_getconv_params(path: impl AsRef<Path>) -> Result<GetConvParams> {
    conv_from(&mut read_tensors(path.as_ref())?)
}

pub fn read_block_params(path: impl AsRef<Path>) -> Result<BlockParams> {
    let mut tensors = read_tensors(path.as_ref())?;
    let conv = conv_from(&mut tensors)?;
    let depthwise: Array3<f64> = take(&mut tensors, "dwconv.weight")?;
    let pointwise: Array2<f64> = take(&mut tensors, "pwconv.weight")?;
    let c = conv.channels();
    let (dc, k1, k2) = depthwise.dim();
    if dc != c || k1 != k2 || k1 % 2 == 0 || pointwise.dim() != (c, c) {
        return Err(mismatch(
            "convolution tensors do not fit the layer's channels",
        ));
    }
    Ok(BlockParams {
        depthwise,
        pointwise,
        conv,
    })
}
