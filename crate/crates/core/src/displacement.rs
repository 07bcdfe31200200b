//! Ground-truth displacement fields from instance labels.
//!
//! Every foreground pixel starts at its own `(row, col)` position and is
//! repeatedly replaced by the mean position of its same-instance neighbors
//! inside a disk stencil. After `iters` simultaneous updates, pixels of one
//! instance have drifted toward that instance's interior; the displacement is
//! the final position minus the starting one.

use rayon::prelude::*;

use crate::error::{invalid, mismatch, Result};
use crate::field::{EdgeField, NodeFeatures};
use crate::grid::{GridShape, Neighborhood, NodeId, Stencil};

/// Default disk radius for ground-truth synthesis.
pub const GT_RADIUS: usize = 5;
/// Default number of averaging iterations.
pub const GT_ITERS: usize = 96;

/// Per-pixel instance ids, 0 = background. Ids need not be contiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    shape: GridShape,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(shape: GridShape, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != shape.len() {
            return Err(mismatch(format!(
                "{} labels for a {}x{} grid",
                labels.len(),
                shape.h,
                shape.w
            )));
        }
        Ok(Self { shape, labels })
    }

    pub fn zeros(shape: GridShape) -> Self {
        Self {
            shape,
            labels: vec![0; shape.len()],
        }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u32] {
        &mut self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.shape.w + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: u32) {
        self.labels[row * self.shape.w + col] = v;
    }

    /// Sorted distinct nonzero ids.
    pub fn instance_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.labels.iter().copied().filter(|&l| l != 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn instance_count(&self) -> usize {
        self.instance_ids().len()
    }

    /// Binary foreground indicator as `f64` energies.
    pub fn foreground(&self) -> Vec<f64> {
        self.labels
            .iter()
            .map(|&l| if l > 0 { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Per-pixel `(row, col)` positions in pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordField {
    shape: GridShape,
    coords: Vec<[f64; 2]>,
}

impl CoordField {
    /// Each pixel at its own integer position.
    pub fn identity(shape: GridShape) -> Self {
        let coords = shape
            .nodes()
            .map(|id| {
                let (r, c) = shape.coord(id);
                [r as f64, c as f64]
            })
            .collect();
        Self { shape, coords }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }
}

/// Per-pixel `(d_row, d_col)` vectors in pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    shape: GridShape,
    vectors: Vec<[f64; 2]>,
}

impl DisplacementField {
    pub fn new(shape: GridShape, vectors: Vec<[f64; 2]>) -> Result<Self> {
        if vectors.len() != shape.len() {
            return Err(mismatch(format!(
                "{} vectors for a {}x{} grid",
                vectors.len(),
                shape.h,
                shape.w
            )));
        }
        if vectors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("displacement vectors must be finite"));
        }
        Ok(Self { shape, vectors })
    }

    pub fn zeros(shape: GridShape) -> Self {
        Self {
            shape,
            vectors: vec![[0.0; 2]; shape.len()],
        }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn vectors(&self) -> &[[f64; 2]] {
        &self.vectors
    }

    pub fn get(&self, row: usize, col: usize) -> [f64; 2] {
        self.vectors[row * self.shape.w + col]
    }
}

/// One explicit diffusion step
/// `z_i <- (1 - tau) z_i + tau * sum_j s_ij z_j`, evaluated from a frozen copy
/// of the input.
///
/// Each node's diffusivities must either sum to 1 (within 1e-6) or satisfy
/// `tau * sum_j s_ij <= 1`.
pub fn diffusion_step(z: &NodeFeatures, s: &EdgeField, tau: f64) -> Result<NodeFeatures> {
    let shape = s.shape();
    if z.nodes() != shape.len() {
        return Err(mismatch(format!(
            "{} feature rows for {} grid nodes",
            z.nodes(),
            shape.len()
        )));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(invalid(format!("tau must lie in [0, 1], got {tau}")));
    }
    if let Some(bad) = s.values().iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(invalid(format!(
            "diffusivity must be finite and non-negative, got {bad}"
        )));
    }
    let stencil = s.stencil();
    for i in shape.nodes() {
        let total: f64 = s.row(i).iter().sum();
        if (total - 1.0).abs() > 1e-6 && tau * total > 1.0 + 1e-12 {
            return Err(invalid(format!(
                "node {} has diffusivity sum {total} with tau {tau}",
                i.0
            )));
        }
    }

    let src = z.values();
    let mut out = src.clone();
    for i in shape.nodes() {
        let mut row = src.row(i.0).to_owned() * (1.0 - tau);
        for (c, j) in stencil.neighbors(i, shape) {
            let w = s.get(i, c);
            if w != 0.0 {
                row.scaled_add(tau * w, &src.row(j.0));
            }
        }
        out.row_mut(i.0).assign(&row);
    }
    NodeFeatures::new(out)
}

/// Simultaneous same-instance coordinate averaging over a disk stencil.
pub struct CoordinateDiffusion {
    labels: LabelMap,
    // CSR adjacency restricted to same-instance neighbors of foreground pixels
    offsets: Vec<usize>,
    adjacency: Vec<usize>,
    current: CoordField,
    steps: usize,
}

impl CoordinateDiffusion {
    pub fn new(labels: &LabelMap, radius: usize) -> Result<Self> {
        let stencil = Stencil::new(Neighborhood::disk(radius)?);
        let shape = labels.shape();
        let mut offsets = Vec::with_capacity(shape.len() + 1);
        let mut adjacency = Vec::new();
        offsets.push(0);
        for i in shape.nodes() {
            let li = labels.labels[i.0];
            if li != 0 {
                adjacency.extend(
                    stencil
                        .neighbors(i, shape)
                        .filter(|(_, j)| labels.labels[j.0] == li)
                        .map(|(_, j)| j.0),
                );
            }
            offsets.push(adjacency.len());
        }
        Ok(Self {
            labels: labels.clone(),
            offsets,
            adjacency,
            current: CoordField::identity(shape),
            steps: 0,
        })
    }

    /// Same-instance neighbors of `node` in stencil order (empty on background).
    pub fn same_instance_neighbors(&self, node: NodeId) -> &[usize] {
        &self.adjacency[self.offsets[node.0]..self.offsets[node.0 + 1]]
    }

    pub fn step(&mut self) {
        let prev = &self.current.coords;
        let next: Vec<[f64; 2]> = (0..prev.len())
            .into_par_iter()
            .map(|i| {
                let nbrs = &self.adjacency[self.offsets[i]..self.offsets[i + 1]];
                if nbrs.is_empty() {
                    // background or isolated pixel: no flow
                    return prev[i];
                }
                let mut acc = [0.0f64; 2];
                for &j in nbrs {
                    acc[0] += prev[j][0];
                    acc[1] += prev[j][1];
                }
                let inv = 1.0 / nbrs.len() as f64;
                [acc[0] * inv, acc[1] * inv]
            })
            .collect();
        self.current.coords = next;
        self.steps += 1;
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn coords(&self) -> &CoordField {
        &self.current
    }

    pub fn labels(&self) -> &LabelMap {
        &self.labels
    }

    /// Current position minus starting position; zero on background.
    pub fn displacement(&self) -> DisplacementField {
        let shape = self.labels.shape();
        let vectors = shape
            .nodes()
            .map(|id| {
                if self.labels.labels[id.0] == 0 {
                    return [0.0, 0.0];
                }
                let (r, c) = shape.coord(id);
                let p = self.current.coords[id.0];
                [p[0] - r as f64, p[1] - c as f64]
            })
            .collect();
        DisplacementField { shape, vectors }
    }
}

/// Ground-truth displacement field of a label map.
pub fn gt_displacement(
    labels: &LabelMap,
    radius: usize,
    iters: usize,
) -> Result<DisplacementField> {
    let mut diffusion = CoordinateDiffusion::new(labels, radius)?;
    for _ in 0..iters {
        diffusion.step();
    }
    Ok(diffusion.displacement())
}
