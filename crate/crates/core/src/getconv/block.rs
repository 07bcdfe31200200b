use ndarray::{Array2, Array3};
use rand::Rng;

use super::{
    check_clusters, check_nodes, layer_tangent, uniform2, Adjacency, GetConvParams, LayerOutput,
    NormMode,
};
use crate::error::{mismatch, Result};
use crate::field::NodeFeatures;
use crate::gcm::InstanceMap;
use crate::grid::{GridShape, Neighborhood};

/// Blocks stacked in the semantic (energy) branch.
pub const SEMANTIC_BRANCH_BLOCKS: usize = 6;
/// Blocks stacked in the displacement branch.
pub const DISPLACEMENT_BRANCH_BLOCKS: usize = 4;
/// Diffusion neighborhood of the semantic branch.
pub const SEMANTIC_BRANCH_STENCIL: Neighborhood = Neighborhood::Square { side: 17 };
/// Diffusion neighborhood of the displacement branch.
pub const DISPLACEMENT_BRANCH_STENCIL: Neighborhood = Neighborhood::Disk { radius: 4 };

/// Depthwise `k x k` convolution, pointwise channel mix, then the diffusion
/// layer. The residual carries the block input.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    /// `C x k x k`, one kernel per channel, `k` odd.
    pub depthwise: Array3<f64>,
    /// `C x C`, input-major.
    pub pointwise: Array2<f64>,
    pub conv: GetConvParams,
}

impl BlockParams {
    /// Center-tap depthwise kernel and identity pointwise mix.
    pub fn identity_convs(conv: GetConvParams, k: usize) -> Self {
        let channels = conv.channels();
        let mut depthwise = Array3::zeros((channels, k, k));
        for ch in 0..channels {
            depthwise[[ch, k / 2, k / 2]] = 1.0;
        }
        Self {
            depthwise,
            pointwise: Array2::eye(channels),
            conv,
        }
    }

    pub fn random<R: Rng + ?Sized>(channels: usize, n: usize, k: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (k as f64);
        Self {
            depthwise: Array3::from_shape_fn((channels, k, k), |_| rng.random_range(-bound..bound)),
            pointwise: uniform2(rng, (channels, channels), 1.0 / (channels as f64).sqrt()),
            conv: GetConvParams::random(channels, n, rng),
        }
    }

    pub fn kernel_size(&self) -> usize {
        self.depthwise.dim().1
    }

    fn check(&self, channels: usize) -> Result<()> {
        let (c, k1, k2) = self.depthwise.dim();
        if c != channels || k1 != k2 || k1 % 2 == 0 {
            return Err(mismatch(format!(
                "depthwise kernel {:?} does not fit {channels} channels with an odd square window",
                self.depthwise.dim()
            )));
        }
        if self.pointwise.dim() != (channels, channels) {
            return Err(mismatch(format!(
                "pointwise kernel {:?} does not fit {channels} channels",
                self.pointwise.dim()
            )));
        }
        Ok(())
    }
}

/// Per-channel `k x k` cross-correlation, zero padding, stride 1. Rows of `z`
/// are grid nodes in row-major order.
pub fn depthwise_conv(z: &Array2<f64>, shape: GridShape, kernel: &Array3<f64>) -> Array2<f64> {
    let (channels, k, _) = kernel.dim();
    let half = (k / 2) as i64;
    let mut out = Array2::zeros((shape.len(), channels));
    for r in 0..shape.h as i64 {
        for c in 0..shape.w as i64 {
            let dst = r as usize * shape.w + c as usize;
            for a in 0..k as i64 {
                for b in 0..k as i64 {
                    let (sr, sc) = (r + a - half, c + b - half);
                    if !shape.contains(sr, sc) {
                        continue;
                    }
                    let src = sr as usize * shape.w + sc as usize;
                    for ch in 0..channels {
                        out[[dst, ch]] += kernel[[ch, a as usize, b as usize]] * z[[src, ch]];
                    }
                }
            }
        }
    }
    out
}

pub fn pointwise_conv(z: &Array2<f64>, weights: &Array2<f64>) -> Array2<f64> {
    z.dot(weights)
}

pub fn getblock_forward(
    z: &NodeFeatures,
    adj: &Adjacency,
    params: &BlockParams,
    clusters: Option<&InstanceMap>,
) -> Result<NodeFeatures> {
    Ok(getblock_forward_with(z, adj, params, clusters, &NormMode::Batch)?.features)
}

pub fn getblock_forward_with(
    z: &NodeFeatures,
    adj: &Adjacency,
    params: &BlockParams,
    clusters: Option<&InstanceMap>,
    mode: &NormMode,
) -> Result<LayerOutput> {
    check_nodes(z, adj)?;
    check_clusters(clusters, adj)?;
    params.check(z.channels())?;
    let zv = z.values();
    let y = pointwise_conv(
        &depthwise_conv(zv, adj.shape(), &params.depthwise),
        &params.pointwise,
    );
    Ok(layer_tangent(zv, None, &y, None, adj, &params.conv, clusters, mode)?.0)
}

pub(crate) fn getblock_jvp(
    z: &NodeFeatures,
    dz: &Array2<f64>,
    adj: &Adjacency,
    params: &BlockParams,
    mode: &NormMode,
) -> Result<(NodeFeatures, Array2<f64>)> {
    check_nodes(z, adj)?;
    params.check(z.channels())?;
    let zv = z.values();
    let conv = |x: &Array2<f64>| {
        pointwise_conv(
            &depthwise_conv(x, adj.shape(), &params.depthwise),
            &params.pointwise,
        )
    };
    let (y, dy) = (conv(zv), conv(dz));
    let (out, dout) = layer_tangent(zv, Some(dz), &y, Some(&dy), adj, &params.conv, None, mode)?;
    Ok((out.features, dout.expect("tangent requested")))
}

/// Applies `blocks` in sequence.
pub fn stack_forward(
    z: &NodeFeatures,
    adj: &Adjacency,
    blocks: &[BlockParams],
    clusters: Option<&InstanceMap>,
) -> Result<NodeFeatures> {
    blocks.iter().try_fold(z.clone(), |acc, block| {
        getblock_forward(&acc, adj, block, clusters)
    })
}
