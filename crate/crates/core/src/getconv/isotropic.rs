//! Isotropic baseline: diffusivity from node identities only.
//!
//! `s_ij = exp(min(q_i + k_j, 30))` with scalar per-node query and key maps.
//! The stencil position of `j` never enters, so the aggregate is a function
//! of the neighbor multiset. Neighbor terms are summed in value order to keep
//! that true in floating point too.

use ndarray::{Array1, Array2};
use rand::Rng;

use super::{
    aggregate, check_nodes, normalize_tangent, uniform1, Adjacency, ChannelNorm, LayerOutput,
    NormMode, Summation, EXP_CLAMP,
};
use crate::error::{mismatch, Result};
use crate::field::{EdgeField, NodeFeatures};

#[derive(Debug, Clone, PartialEq)]
pub struct IsotropicParams {
    pub query: Array1<f64>,
    pub query_bias: f64,
    pub key: Array1<f64>,
    pub key_bias: f64,
    pub norm: ChannelNorm,
}

impl IsotropicParams {
    pub fn zeros(channels: usize) -> Self {
        Self {
            query: Array1::zeros(channels),
            query_bias: 0.0,
            key: Array1::zeros(channels),
            key_bias: 0.0,
            norm: ChannelNorm::identity(channels),
        }
    }

    pub fn random<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (channels as f64).sqrt();
        Self {
            query: uniform1(rng, channels, bound),
            query_bias: rng.random_range(-bound..bound),
            key: uniform1(rng, channels, bound),
            key_bias: rng.random_range(-bound..bound),
            norm: ChannelNorm::random(channels, rng),
        }
    }
}

pub fn isotropic_attention_forward(
    z: &NodeFeatures,
    adj: &Adjacency,
    params: &IsotropicParams,
) -> Result<NodeFeatures> {
    Ok(isotropic_attention_forward_with(z, adj, params, &NormMode::Batch)?.features)
}

pub fn isotropic_attention_forward_with(
    z: &NodeFeatures,
    adj: &Adjacency,
    params: &IsotropicParams,
    mode: &NormMode,
) -> Result<LayerOutput> {
    check_nodes(z, adj)?;
    let channels = z.channels();
    if params.query.len() != channels || params.key.len() != channels {
        return Err(mismatch("query/key maps do not match channel count"));
    }
    params.norm.check(channels)?;
    let zv: &Array2<f64> = z.values();
    let q = zv.dot(&params.query) + params.query_bias;
    let k = zv.dot(&params.key) + params.key_bias;
    let s = EdgeField::from_fn(adj.shape(), adj.stencil().clone(), |i, _, j| {
        (q[i.0] + k[j.0]).min(EXP_CLAMP).exp()
    });
    let a = aggregate(&s, zv, Summation::OrderInvariant);
    let (normed, _, stats) = normalize_tangent(&a, None, &params.norm, mode)?;
    Ok(LayerOutput {
        features: NodeFeatures::new(zv + &normed)?,
        aggregate: a,
        diffusivity: s,
        stats,
    })
}
