//! Graph cluster module.
//!
//! Recovers instances from a displacement field and an energy (foreground)
//! map in three stages:
//!
//! 1. Build a transmit graph with one out-edge per pixel, from the pixel to
//!    where its displacement lands, and push the energy along it `t0` times.
//!    Pixels nobody points at (instance borders) drain to zero, so the
//!    surviving support contracts into instance cores.
//! 2. Label 8-connected components of the contracted support.
//! 3. Reverse every edge and push the component ids back out `t1` times; each
//!    pixel ends up with the id of the core its displacement chain reaches.
//!
//! Pixels with zero energy are background in the result.

use std::collections::VecDeque;
use std::ops::AddAssign;

use crate::displacement::{DisplacementField, LabelMap};
use crate::error::{invalid, mismatch, Result};
use crate::field::EdgeField;
use crate::grid::{GridShape, NodeId};

/// Default number of contraction passes.
pub const T0: usize = 2;
/// Default number of label-recovery passes.
pub const T1: usize = 8;

/// Instance or cluster ids per pixel, 0 = background.
pub type InstanceMap = LabelMap;

/// Non-negative per-pixel energy.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMap {
    shape: GridShape,
    values: Vec<f64>,
}

impl EnergyMap {
    pub fn new(shape: GridShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(mismatch(format!(
                "{} energies for a {}x{} grid",
                values.len(),
                shape.h,
                shape.w
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(invalid(format!(
                "energy must be finite and non-negative, got {bad}"
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn constant(shape: GridShape, value: f64) -> Result<Self> {
        Self::new(shape, vec![value; shape.len()])
    }

    /// Foreground indicator of a label map.
    pub fn from_labels(labels: &LabelMap) -> Self {
        Self {
            shape: labels.shape(),
            values: labels.foreground(),
        }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Directed graph with exactly one out-edge per node, plus a scalar message.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitGraph {
    shape: GridShape,
    target: Vec<usize>,
    pub mes: Vec<f64>,
}

impl TransmitGraph {
    pub fn new(shape: GridShape, target: Vec<usize>, mes: Vec<f64>) -> Result<Self> {
        if target.len() != shape.len() || mes.len() != shape.len() {
            return Err(mismatch(
                "transmit graph needs one target and one message per node",
            ));
        }
        if let Some(&t) = target.iter().find(|&&t| t >= shape.len()) {
            return Err(invalid(format!("edge target {t} out of range")));
        }
        Ok(Self { shape, target, mes })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    /// Out-edge target of every node.
    pub fn targets(&self) -> &[usize] {
        &self.target
    }

    pub fn target(&self, node: NodeId) -> NodeId {
        NodeId(self.target[node.0])
    }

    /// Edges as `(source, destination)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.target.iter().enumerate().map(|(i, &t)| (i, t))
    }
}

/// Edge-reversed transmit graph: each node has exactly one in-edge, coming
/// from the node its transmit-graph edge pointed at.
#[derive(Debug, Clone, PartialEq)]
pub struct ReverseGraph {
    shape: GridShape,
    source: Vec<usize>,
    pub mes: Vec<u32>,
}

impl ReverseGraph {
    pub fn shape(&self) -> GridShape {
        self.shape
    }

    /// Unique in-neighbor of every node.
    pub fn sources(&self) -> &[usize] {
        &self.source
    }

    /// Edges as `(source, destination)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.source.iter().enumerate().map(|(i, &s)| (s, i))
    }

    /// Reverses back to a transmit graph carrying `mes`.
    pub fn reverse(&self, mes: Vec<f64>) -> Result<TransmitGraph> {
        TransmitGraph::new(self.shape, self.source.clone(), mes)
    }
}

/// One pass of `mes_i <- sum of mes_j over edges j -> i`, simultaneous.
fn propagate<T, I>(len: usize, edges: I, mes: &[T]) -> Vec<T>
where
    T: Copy + Default + AddAssign,
    I: Iterator<Item = (usize, usize)>,
{
    let mut next = vec![T::default(); len];
    for (src, dst) in edges {
        next[dst] += mes[src];
    }
    next
}

/// Transmit graph for a displacement field: pixel `p` points at
/// `round(p + F_p)` clamped into the grid, rounding half away from zero.
pub fn build_tg(field: &DisplacementField, energy: &EnergyMap) -> Result<TransmitGraph> {
    let shape = field.shape();
    if energy.shape() != shape {
        return Err(mismatch(
            "displacement field and energy map differ in shape",
        ));
    }
    let mut target = Vec::with_capacity(shape.len());
    for id in shape.nodes() {
        let (r, c) = shape.coord(id);
        let [dr, dc] = field.vectors()[id.0];
        if !dr.is_finite() || !dc.is_finite() {
            return Err(invalid(format!("non-finite displacement at ({r}, {c})")));
        }
        let tr = (r as f64 + dr).round().clamp(0.0, (shape.h - 1) as f64) as usize;
        let tc = (c as f64 + dc).round().clamp(0.0, (shape.w - 1) as f64) as usize;
        target.push(tr * shape.w + tc);
    }
    Ok(TransmitGraph {
        shape,
        target,
        mes: energy.values().to_vec(),
    })
}

/// Pushes messages along the out-edges `t0` times.
pub fn contract(tg: &TransmitGraph, t0: usize) -> TransmitGraph {
    let mut mes = tg.mes.clone();
    for _ in 0..t0 {
        mes = propagate(mes.len(), tg.edges(), &mes);
    }
    TransmitGraph {
        shape: tg.shape,
        target: tg.target.clone(),
        mes,
    }
}

/// 8-connected components of the nonzero support of `mes`. Ids run from 1 in
/// raster order of each component's first pixel.
pub fn connected_components(mes: &[f64], shape: GridShape) -> Result<InstanceMap> {
    if mes.len() != shape.len() {
        return Err(mismatch(format!(
            "{} messages for {} nodes",
            mes.len(),
            shape.len()
        )));
    }
    let mut ids = vec![0u32; shape.len()];
    let mut next_id = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..shape.len() {
        if mes[start] == 0.0 || ids[start] != 0 {
            continue;
        }
        next_id += 1;
        ids[start] = next_id;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            let (r, c) = (p / shape.w, p % shape.w);
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if !shape.contains(nr, nc) {
                        continue;
                    }
                    let q = nr as usize * shape.w + nc as usize;
                    if mes[q] != 0.0 && ids[q] == 0 {
                        ids[q] = next_id;
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    LabelMap::new(shape, ids)
}

pub fn reverse(tg: &TransmitGraph) -> ReverseGraph {
    ReverseGraph {
        shape: tg.shape,
        source: tg.target.clone(),
        mes: vec![0; tg.shape.len()],
    }
}

/// Seeds the reverse graph with `ins` and pushes ids along its edges `t1`
/// times. Every node has one in-edge, so each pass hands a node the id held
/// by the node its displacement points at.
pub fn recover(rg: &ReverseGraph, ins: &InstanceMap, t1: usize) -> Result<InstanceMap> {
    if ins.shape() != rg.shape {
        return Err(mismatch("instance map and reverse graph differ in shape"));
    }
    let mut mes = ins.labels().to_vec();
    for _ in 0..t1 {
        mes = propagate(mes.len(), rg.edges(), &mes);
    }
    LabelMap::new(rg.shape, mes)
}

/// Full clustering pipeline; output is zero wherever the energy is zero.
pub fn gcm(
    field: &DisplacementField,
    energy: &EnergyMap,
    t0: usize,
    t1: usize,
) -> Result<InstanceMap> {
    let tg = build_tg(field, energy)?;
    let contracted = contract(&tg, t0);
    let seeds = connected_components(&contracted.mes, tg.shape)?;
    let rg = reverse(&tg);
    let mut out = recover(&rg, &seeds, t1)?;
    for (id, e) in out.labels_mut().iter_mut().zip(energy.values()) {
        if *e == 0.0 {
            *id = 0;
        }
    }
    Ok(out)
}

/// Averages `field` over non-overlapping `patch x patch` blocks, rescales the
/// vectors to block units and clusters the coarse grid with unit energy.
pub fn cluster_for_masking(
    field: &DisplacementField,
    patch: usize,
    t0: usize,
    t1: usize,
) -> Result<InstanceMap> {
    let shape = field.shape();
    if patch == 0 || !shape.h.is_multiple_of(patch) || !shape.w.is_multiple_of(patch) {
        return Err(invalid(format!(
            "{}x{} grid is not divisible into {patch}x{patch} patches",
            shape.h, shape.w
        )));
    }
    let coarse = GridShape::new(shape.h / patch, shape.w / patch)?;
    let scale = 1.0 / (patch * patch) as f64 / patch as f64;
    let mut vectors = vec![[0.0f64; 2]; coarse.len()];
    for (k, v) in vectors.iter_mut().enumerate() {
        let (br, bc) = (k / coarse.w, k % coarse.w);
        let mut acc = [0.0f64; 2];
        for r in br * patch..(br + 1) * patch {
            for c in bc * patch..(bc + 1) * patch {
                let f = field.get(r, c);
                acc[0] += f[0];
                acc[1] += f[1];
            }
        }
        *v = [acc[0] * scale, acc[1] * scale];
    }
    let coarse_field = DisplacementField::new(coarse, vectors)?;
    gcm(&coarse_field, &EnergyMap::constant(coarse, 1.0)?, t0, t1)
}

/// Zeroes every edge whose endpoints lie in different clusters.
pub fn mask_diffusivity(s: &EdgeField, clusters: &InstanceMap) -> Result<EdgeField> {
    let shape = s.shape();
    if clusters.shape() != shape {
        return Err(mismatch("cluster map and edge field differ in shape"));
    }
    let cls = clusters.labels();
    let mut out = s.clone();
    for i in shape.nodes() {
        for (c, j) in s.stencil().neighbors(i, shape) {
            if cls[i.0] != cls[j.0] {
                out.set(i, c, 0.0);
            }
        }
    }
    Ok(out)
}
