//! Jacobian-vector products checked against central finite differences.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::block::getblock_jvp;
use super::{
    diffusivity, diffusivity_jvp, getblock_forward, getconv_forward, getconv_jvp, uniform2,
    Adjacency, BlockParams, GetConvParams, NormMode, QueryMessages,
};
use crate::error::Result;
use crate::field::NodeFeatures;
use crate::grid::{GridShape, Neighborhood};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckedOp {
    Diffusivity,
    GetConv,
    GetBlock,
}

/// Input point and tangent direction for one check.
#[derive(Debug, Clone)]
pub enum CheckPoint {
    Diffusivity {
        adj: Adjacency,
        h: QueryMessages,
        dh: QueryMessages,
    },
    GetConv {
        adj: Adjacency,
        z: NodeFeatures,
        dz: Array2<f64>,
        params: GetConvParams,
    },
    GetBlock {
        adj: Adjacency,
        z: NodeFeatures,
        dz: Array2<f64>,
        params: BlockParams,
    },
}

impl CheckPoint {
    /// Random point on a 4x4 grid with 4 channels and a 3x3 stencil.
    pub fn random(op: CheckedOp, seed: u64) -> Result<Self> {
        let adj = Adjacency::new(GridShape::new(4, 4)?, Neighborhood::square(3)?);
        let (nodes, channels, n) = (adj.shape().len(), 4, adj.degree());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(match op {
            CheckedOp::Diffusivity => CheckPoint::Diffusivity {
                h: uniform2(&mut rng, (nodes, n), 2.0),
                dh: uniform2(&mut rng, (nodes, n), 1.0),
                adj,
            },
            CheckedOp::GetConv => CheckPoint::GetConv {
                z: NodeFeatures::new(uniform2(&mut rng, (nodes, channels), 1.0))?,
                dz: uniform2(&mut rng, (nodes, channels), 1.0),
                params: GetConvParams::random(channels, n, &mut rng),
                adj,
            },
            CheckedOp::GetBlock => CheckPoint::GetBlock {
                z: NodeFeatures::new(uniform2(&mut rng, (nodes, channels), 1.0))?,
                dz: uniform2(&mut rng, (nodes, channels), 1.0),
                params: BlockParams::random(channels, n, 3, &mut rng),
                adj,
            },
        })
    }

    pub fn op(&self) -> CheckedOp {
        match self {
            CheckPoint::Diffusivity { .. } => CheckedOp::Diffusivity,
            CheckPoint::GetConv { .. } => CheckedOp::GetConv,
            CheckPoint::GetBlock { .. } => CheckedOp::GetBlock,
        }
    }

    /// Analytic Jacobian-vector product at the point.
    pub fn analytic(&self) -> Result<Vec<f64>> {
        Ok(match self {
            CheckPoint::Diffusivity { adj, h, dh } => {
                diffusivity_jvp(h, dh, adj)?.1.values().to_vec()
            }
            CheckPoint::GetConv { adj, z, dz, params } => {
                getconv_jvp(z, dz, adj, params, None, &NormMode::Batch)?
                    .1
                    .into_raw_vec_and_offset()
                    .0
            }
            CheckPoint::GetBlock { adj, z, dz, params } => {
                getblock_jvp(z, dz, adj, params, &NormMode::Batch)?
                    .1
                    .into_raw_vec_and_offset()
                    .0
            }
        })
    }

    /// Forward output at `point + t * direction`, flattened.
    pub fn forward_along(&self, t: f64) -> Result<Vec<f64>> {
        Ok(match self {
            CheckPoint::Diffusivity { adj, h, dh } => {
                diffusivity(&(h + &(dh * t)), adj)?.values().to_vec()
            }
            CheckPoint::GetConv { adj, z, dz, params } => {
                let moved = NodeFeatures::new(z.values() + &(dz * t))?;
                flatten(getconv_forward(&moved, adj, params, None)?)
            }
            CheckPoint::GetBlock { adj, z, dz, params } => {
                let moved = NodeFeatures::new(z.values() + &(dz * t))?;
                flatten(getblock_forward(&moved, adj, params, None)?)
            }
        })
    }
}

fn flatten(f: NodeFeatures) -> Vec<f64> {
    f.values().iter().copied().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JacobianReport {
    pub op: CheckedOp,
    /// `max|fd - analytic| / max(max|analytic|, max|fd|)`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub diagnostic: Option<String>,
}

pub fn jacobian_check(point: &CheckPoint, tolerance: f64) -> JacobianReport {
    let op = point.op();
    let failed = |msg: String| JacobianReport {
        op,
        max_rel_error: f64::INFINITY,
        max_abs_error: f64::INFINITY,
        tolerance,
        passed: false,
        diagnostic: Some(msg),
    };
    let evaluated = point.analytic().and_then(|an| {
        let plus = point.forward_along(FD_STEP)?;
        let minus = point.forward_along(-FD_STEP)?;
        Ok((an, plus, minus))
    });
    let (analytic, plus, minus) = match evaluated {
        Ok(v) => v,
        Err(e) => return failed(format!("evaluation failed: {e}")),
    };
    let fd: Vec<f64> = plus
        .iter()
        .zip(&minus)
        .map(|(p, m)| (p - m) / (2.0 * FD_STEP))
        .collect();
    if analytic.iter().chain(&fd).any(|v| !v.is_finite()) {
        return failed("non-finite derivative".into());
    }
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let max_abs_error = analytic
        .iter()
        .zip(&fd)
        .fold(0.0f64, |m, (a, f)| m.max((a - f).abs()));
    let scale = max_abs(&analytic).max(max_abs(&fd));
    let max_rel_error = if scale == 0.0 {
        0.0
    } else {
        max_abs_error / scale
    };
    JacobianReport {
        op,
        max_rel_error,
        max_abs_error,
        tolerance,
        passed: max_rel_error < tolerance,
        diagnostic: None,
    }
}
