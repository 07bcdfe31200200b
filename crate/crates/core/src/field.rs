//! Per-node feature matrices and per-edge scalar maps over a stencil graph.

use ndarray::{Array2, ArrayView1};

use crate::error::{invalid, Result};
use crate::grid::{GridShape, NodeId, Stencil};

/// `N x C` matrix of node features, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures(Array2<f64>);

impl NodeFeatures {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("node features must be finite"));
        }
        Ok(Self(values))
    }

    pub fn zeros(nodes: usize, channels: usize) -> Self {
        Self(Array2::zeros((nodes, channels)))
    }

    pub fn nodes(&self) -> usize {
        self.0.nrows()
    }

    pub fn channels(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// Scalar per directed stencil edge `(i, c)`, where `c` is the neighbor index
/// of `j` relative to `i`. Entries for out-of-grid positions exist and stay 0.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    shape: GridShape,
    stencil: Stencil,
    values: Vec<f64>,
}

impl EdgeField {
    pub fn zeros(shape: GridShape, stencil: Stencil) -> Self {
        let values = vec![0.0; shape.len() * stencil.len()];
        Self {
            shape,
            stencil,
            values,
        }
    }

    /// Fills every in-grid edge with `f(i, c, j)`.
    pub fn from_fn(
        shape: GridShape,
        stencil: Stencil,
        mut f: impl FnMut(NodeId, usize, NodeId) -> f64,
    ) -> Self {
        let mut field = Self::zeros(shape, stencil);
        let n = field.stencil.len();
        for i in shape.nodes() {
            for (c, j) in field.stencil.neighbors(i, shape) {
                field.values[i.0 * n + c] = f(i, c, j);
            }
        }
        field
    }

    /// Diffusivity `1 / |N_i|` on every live edge, so each node's row sums to 1.
    pub fn uniform_normalized(shape: GridShape, stencil: Stencil) -> Self {
        let mut field = Self::zeros(shape, stencil);
        let n = field.stencil.len();
        for i in shape.nodes() {
            let live: Vec<usize> = field.stencil.neighbors(i, shape).map(|(c, _)| c).collect();
            let weight = 1.0 / live.len().max(1) as f64;
            for c in live {
                field.values[i.0 * n + c] = weight;
            }
        }
        field
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    pub fn get(&self, i: NodeId, c: usize) -> f64 {
        self.values[i.0 * self.stencil.len() + c]
    }

    pub fn set(&mut self, i: NodeId, c: usize, v: f64) {
        let n = self.stencil.len();
        self.values[i.0 * n + c] = v;
    }

    /// Row of node `i`, indexed by stencil position.
    pub fn row(&self, i: NodeId) -> &[f64] {
        let n = self.stencil.len();
        &self.values[i.0 * n..(i.0 + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}
