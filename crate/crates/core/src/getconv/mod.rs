//! Anisotropic graph diffusion layer.
//!
//! Each node `i` emits one query scalar per stencil position through a
//! two-layer perceptron, `H = MLP(Z)` with `H` of shape `N x n`. The edge
//! diffusivity couples the query `i` sends toward `j`'s position with the one
//! `j` sends back toward `i`'s position:
//!
//! ```text
//! s_ij = exp(min(H[i, c_j] + H[j, c_i], 30))
//! ```
//!
//! so the weight depends on *where* a neighbor sits, not only on its features.
//! The layer output is `z_i + Norm(sum_j s_ij z_j)` with per-channel
//! standardization across nodes followed by a learned scale and shift.
//! Optional cluster ids zero every edge crossing a cluster boundary.

mod block;
mod isotropic;
mod jacobian;
mod probe;

pub use block::{
    depthwise_conv, getblock_forward, getblock_forward_with, pointwise_conv, stack_forward,
    BlockParams, DISPLACEMENT_BRANCH_BLOCKS, DISPLACEMENT_BRANCH_STENCIL, SEMANTIC_BRANCH_BLOCKS,
    SEMANTIC_BRANCH_STENCIL,
};
pub use isotropic::{
    isotropic_attention_forward, isotropic_attention_forward_with, IsotropicParams,
};
pub use jacobian::{jacobian_check, CheckPoint, CheckedOp, JacobianReport, FD_STEP};
pub use probe::{isomorphism_probe, isomorphism_probe_with, ProbeReport};

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{invalid, mismatch, Result};
use crate::field::{EdgeField, NodeFeatures};
use crate::gcm::{mask_diffusivity, InstanceMap};
use crate::grid::{GridShape, Neighborhood, Stencil};

/// Upper bound applied to the exponent of the diffusivity.
pub const EXP_CLAMP: f64 = 30.0;
/// Variance floor of the channel normalization.
pub const NORM_EPS: f64 = 1e-5;

/// Row `i`, column `c`: the query node `i` addresses to its `c`-th stencil position.
pub type QueryMessages = Array2<f64>;

/// Grid graph a layer runs on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    shape: GridShape,
    stencil: Stencil,
}

impl Adjacency {
    pub fn new(shape: GridShape, kind: Neighborhood) -> Self {
        Self {
            shape,
            stencil: Stencil::new(kind),
        }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    /// Stencil cardinality `n`.
    pub fn degree(&self) -> usize {
        self.stencil.len()
    }
}

/// `C -> C -> n` perceptron with a rectifier between the layers. Weights are
/// stored input-major: `w1` is `C x C`, `w2` is `C x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl Mlp {
    pub fn zeros(channels: usize, n: usize) -> Self {
        Self {
            w1: Array2::zeros((channels, channels)),
            b1: Array1::zeros(channels),
            w2: Array2::zeros((channels, n)),
            b2: Array1::zeros(n),
        }
    }

    /// Uniform init in `+-1/sqrt(fan_in)`.
    pub fn random<R: Rng + ?Sized>(channels: usize, n: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (channels as f64).sqrt();
        Self {
            w1: uniform2(rng, (channels, channels), bound),
            b1: uniform1(rng, channels, bound),
            w2: uniform2(rng, (channels, n), bound),
            b2: uniform1(rng, n, bound),
        }
    }

    fn check(&self, channels: usize, n: usize) -> Result<()> {
        if self.w1.dim() != (channels, channels)
            || self.b1.len() != channels
            || self.w2.dim() != (channels, n)
            || self.b2.len() != n
        {
            return Err(mismatch(format!(
                "perceptron shapes w1 {:?} b1 {} w2 {:?} b2 {} do not fit C={channels}, n={n}",
                self.w1.dim(),
                self.b1.len(),
                self.w2.dim(),
                self.b2.len()
            )));
        }
        Ok(())
    }
}

/// Per-channel scale and shift applied after standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl ChannelNorm {
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
        }
    }

    pub fn random<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Self {
        Self {
            gamma: Array1::from_shape_fn(channels, |_| rng.random_range(0.5..1.5)),
            beta: uniform1(rng, channels, 0.5),
        }
    }

    fn check(&self, channels: usize) -> Result<()> {
        if self.gamma.len() != channels || self.beta.len() != channels {
            return Err(mismatch(format!(
                "normalization has {}/{} channels, features have {channels}",
                self.gamma.len(),
                self.beta.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GetConvParams {
    pub mlp: Mlp,
    pub norm: ChannelNorm,
}

impl GetConvParams {
    /// Zero perceptron (all diffusivities 1) and identity normalization.
    pub fn neutral(channels: usize, n: usize) -> Self {
        Self {
            mlp: Mlp::zeros(channels, n),
            norm: ChannelNorm::identity(channels),
        }
    }

    pub fn random<R: Rng + ?Sized>(channels: usize, n: usize, rng: &mut R) -> Self {
        Self {
            mlp: Mlp::random(channels, n, rng),
            norm: ChannelNorm::random(channels, rng),
        }
    }

    pub fn channels(&self) -> usize {
        self.norm.gamma.len()
    }
}

/// Per-channel mean and (population) variance over nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

/// Where normalization statistics come from.
#[derive(Debug, Clone, PartialEq)]
pub enum NormMode {
    /// Statistics of the current aggregate.
    Batch,
    /// Fixed statistics; makes every node's output depend only on its own aggregate.
    Frozen(ChannelStats),
}

/// Everything a layer computed on the way to its output.
#[derive(Debug, Clone)]
pub struct LayerOutput {
    pub features: NodeFeatures,
    pub aggregate: Array2<f64>,
    pub diffusivity: EdgeField,
    pub stats: ChannelStats,
}

pub(crate) fn uniform1<R: Rng + ?Sized>(rng: &mut R, len: usize, bound: f64) -> Array1<f64> {
    Array1::from_shape_fn(len, |_| rng.random_range(-bound..bound))
}

pub(crate) fn uniform2<R: Rng + ?Sized>(
    rng: &mut R,
    dim: (usize, usize),
    bound: f64,
) -> Array2<f64> {
    Array2::from_shape_fn(dim, |_| rng.random_range(-bound..bound))
}

pub fn channel_stats(a: &Array2<f64>) -> ChannelStats {
    let n = a.nrows() as f64;
    let mean = a.sum_axis(Axis(0)) / n;
    let centered = a - &mean;
    let var = (&centered * &centered).sum_axis(Axis(0)) / n;
    ChannelStats { mean, var }
}

/// Query messages `H = MLP(Z)`, one row per node.
pub fn query_messages(z: &NodeFeatures, mlp: &Mlp) -> Result<QueryMessages> {
    mlp.check(z.channels(), mlp.b2.len())?;
    Ok(mlp_tangent(z.values(), None, mlp).0)
}

fn mlp_tangent(
    z: &Array2<f64>,
    dz: Option<&Array2<f64>>,
    mlp: &Mlp,
) -> (Array2<f64>, Option<Array2<f64>>) {
    let pre = z.dot(&mlp.w1) + &mlp.b1;
    let hidden = pre.mapv(|v| v.max(0.0));
    let h = hidden.dot(&mlp.w2) + &mlp.b2;
    let dh = dz.map(|dz| {
        let mut dpre = dz.dot(&mlp.w1);
        dpre.zip_mut_with(&pre, |d, &p| {
            if p <= 0.0 {
                *d = 0.0;
            }
        });
        dpre.dot(&mlp.w2)
    });
    (h, dh)
}

/// Edge diffusivities from query messages.
pub fn diffusivity(h: &QueryMessages, adj: &Adjacency) -> Result<EdgeField> {
    check_queries(h, adj)?;
    Ok(diffusivity_tangent(h, None, adj).0)
}

fn check_queries(h: &QueryMessages, adj: &Adjacency) -> Result<()> {
    if h.dim() != (adj.shape.len(), adj.degree()) {
        return Err(mismatch(format!(
            "query messages are {:?}, adjacency needs ({}, {})",
            h.dim(),
            adj.shape.len(),
            adj.degree()
        )));
    }
    Ok(())
}

fn diffusivity_tangent(
    h: &QueryMessages,
    dh: Option<&QueryMessages>,
    adj: &Adjacency,
) -> (EdgeField, Option<EdgeField>) {
    let stencil = &adj.stencil;
    let mut s = EdgeField::zeros(adj.shape, stencil.clone());
    let mut ds = dh.map(|_| EdgeField::zeros(adj.shape, stencil.clone()));
    for i in adj.shape.nodes() {
        for (c, j) in stencil.neighbors(i, adj.shape) {
            let back = stencil.opposite(c);
            let e = h[[i.0, c]] + h[[j.0, back]];
            let value = e.min(EXP_CLAMP).exp();
            s.set(i, c, value);
            if let (Some(ds), Some(dh)) = (ds.as_mut(), dh) {
                let slope = if e < EXP_CLAMP { value } else { 0.0 };
                ds.set(i, c, slope * (dh[[i.0, c]] + dh[[j.0, back]]));
            }
        }
    }
    (s, ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Summation {
    /// Stencil order.
    Sequential,
    /// Terms sorted by value before summing, so the result depends only on the
    /// multiset of neighbor messages.
    OrderInvariant,
}

/// `a_i = sum_j s_ij y_j`. Zero-weight edges are skipped.
pub(crate) fn aggregate(s: &EdgeField, y: &Array2<f64>, order: Summation) -> Array2<f64> {
    let shape = s.shape();
    let stencil = s.stencil();
    let channels = y.ncols();
    let mut out = Array2::zeros((shape.len(), channels));
    let mut terms: Vec<f64> = Vec::with_capacity(stencil.len());
    for i in shape.nodes() {
        match order {
            Summation::Sequential => {
                let mut row = out.row_mut(i.0);
                for (c, j) in stencil.neighbors(i, shape) {
                    let w = s.get(i, c);
                    if w != 0.0 {
                        row.scaled_add(w, &y.row(j.0));
                    }
                }
            }
            Summation::OrderInvariant => {
                for ch in 0..channels {
                    terms.clear();
                    terms.extend(
                        stencil
                            .neighbors(i, shape)
                            .filter(|&(c, _)| s.get(i, c) != 0.0)
                            .map(|(c, j)| s.get(i, c) * y[[j.0, ch]]),
                    );
                    terms.sort_by(f64::total_cmp);
                    out[[i.0, ch]] = terms.iter().sum();
                }
            }
        }
    }
    out
}

fn aggregate_tangent(
    s: &EdgeField,
    ds: &EdgeField,
    y: &Array2<f64>,
    dy: &Array2<f64>,
) -> Array2<f64> {
    let shape = s.shape();
    let mut out = Array2::zeros(y.dim());
    for i in shape.nodes() {
        let mut row = out.row_mut(i.0);
        for (c, j) in s.stencil().neighbors(i, shape) {
            let w = s.get(i, c);
            if w != 0.0 {
                row.scaled_add(ds.get(i, c), &y.row(j.0));
                row.scaled_add(w, &dy.row(j.0));
            }
        }
    }
    out
}

/// `gamma * (a - mean) / sqrt(var + eps) + beta` per channel.
fn normalize_tangent(
    a: &Array2<f64>,
    da: Option<&Array2<f64>>,
    norm: &ChannelNorm,
    mode: &NormMode,
) -> Result<(Array2<f64>, Option<Array2<f64>>, ChannelStats)> {
    let stats = match mode {
        NormMode::Batch => {
            if a.nrows() < 2 {
                return Err(invalid("channel normalization needs at least 2 nodes"));
            }
            channel_stats(a)
        }
        NormMode::Frozen(stats) => {
            if stats.mean.len() != a.ncols() || stats.var.len() != a.ncols() {
                return Err(mismatch("frozen statistics do not match channel count"));
            }
            stats.clone()
        }
    };
    let sigma = stats.var.mapv(|v| (v + NORM_EPS).sqrt());
    let centered = a - &stats.mean;
    let standardized = &centered / &sigma;
    let out = &standardized * &norm.gamma + &norm.beta;
    let dout = da.map(|da| {
        let dstd = match mode {
            NormMode::Frozen(_) => da / &sigma,
            NormMode::Batch => {
                let n = a.nrows() as f64;
                let dmean = da.sum_axis(Axis(0)) / n;
                let dcentered = da - &dmean;
                let dvar = (&centered * &dcentered).sum_axis(Axis(0)) * (2.0 / n);
                let sigma3 = sigma.mapv(|s| s * s * s);
                &dcentered / &sigma - &(&centered * &(dvar / (sigma3 * 2.0)))
            }
        };
        dstd * &norm.gamma
    });
    Ok((out, dout, stats))
}

/// Shared residual-diffusion core: queries and aggregation run on `y`, the
/// residual adds `z`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn layer_tangent(
    z: &Array2<f64>,
    dz: Option<&Array2<f64>>,
    y: &Array2<f64>,
    dy: Option<&Array2<f64>>,
    adj: &Adjacency,
    params: &GetConvParams,
    clusters: Option<&InstanceMap>,
    mode: &NormMode,
) -> Result<(LayerOutput, Option<Array2<f64>>)> {
    let channels = y.ncols();
    params.mlp.check(channels, adj.degree())?;
    params.norm.check(channels)?;
    let (h, dh) = mlp_tangent(y, dy, &params.mlp);
    let (mut s, mut ds) = diffusivity_tangent(&h, dh.as_ref(), adj);
    if let Some(cls) = clusters {
        s = mask_diffusivity(&s, cls)?;
        ds = ds.map(|ds| mask_diffusivity(&ds, cls)).transpose()?;
    }
    let a = aggregate(&s, y, Summation::Sequential);
    let da = match (&ds, dy) {
        (Some(ds), Some(dy)) => Some(aggregate_tangent(&s, ds, y, dy)),
        _ => None,
    };
    let (normed, dnormed, stats) = normalize_tangent(&a, da.as_ref(), &params.norm, mode)?;
    let out = z + &normed;
    let dout = match (dz, dnormed) {
        (Some(dz), Some(dn)) => Some(dz + &dn),
        _ => None,
    };
    Ok((
        LayerOutput {
            features: NodeFeatures::new(out)?,
            aggregate: a,
            diffusivity: s,
            stats,
        },
        dout,
    ))
}

pub(crate) fn check_nodes(z: &NodeFeatures, adj: &Adjacency) -> Result<()> {
    if z.nodes() != adj.shape.len() {
        return Err(mismatch(format!(
            "{} feature rows for a {}x{} grid",
            z.nodes(),
            adj.shape.h,
            adj.shape.w
        )));
    }
    Ok(())
}

pub(crate) fn check_clusters(clusters: Option<&InstanceMap>, adj: &Adjacency) -> Result<()> {
    match clusters {
        Some(cls) if cls.shape() != adj.shape => {
            Err(mismatch("cluster map does not match the layer grid"))
        }
        _ => Ok(()),
    }
}

/// One anisotropic diffusion layer with batch normalization statistics.
pub fn getconv_forward(
    z: &NodeFeatures,
    adj: &Adjacency,
    params: &GetConvParams,
    clusters: Option<&InstanceMap>,
) -> Result<NodeFeatures> {
    Ok(getconv_forward_with(z, adj, params, clusters, &NormMode::Batch)?.features)
}

pub fn getconv_forward_with(
    z: &NodeFeatures,
    adj: &Adjacency,
    params: &GetConvParams,
    clusters: Option<&InstanceMap>,
    mode: &NormMode,
) -> Result<LayerOutput> {
    check_nodes(z, adj)?;
    check_clusters(clusters, adj)?;
    let zv = z.values();
    Ok(layer_tangent(zv, None, zv, None, adj, params, clusters, mode)?.0)
}

/// Forward value and Jacobian-vector product along `dz`.
pub(crate) fn getconv_jvp(
    z: &NodeFeatures,
    dz: &Array2<f64>,
    adj: &Adjacency,
    params: &GetConvParams,
    clusters: Option<&InstanceMap>,
    mode: &NormMode,
) -> Result<(NodeFeatures, Array2<f64>)> {
    check_nodes(z, adj)?;
    check_clusters(clusters, adj)?;
    let zv = z.values();
    let (out, dout) = layer_tangent(zv, Some(dz), zv, Some(dz), adj, params, clusters, mode)?;
    Ok((out.features, dout.expect("tangent requested")))
}

pub(crate) fn diffusivity_jvp(
    h: &QueryMessages,
    dh: &QueryMessages,
    adj: &Adjacency,
) -> Result<(EdgeField, EdgeField)> {
    check_queries(h, adj)?;
    check_queries(dh, adj)?;
    let (s, ds) = diffusivity_tangent(h, Some(dh), adj);
    Ok((s, ds.expect("tangent requested")))
}
