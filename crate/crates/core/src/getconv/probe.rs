//! Distinguishing spatially permuted neighborhoods.
//!
//! On a 3x7 grid with a 3x3 stencil, nodes A=(1,1) and B=(1,5) carry the same
//! feature `w` and have disjoint neighborhoods. A sees `u` on its left and `v`
//! on its right; B sees them the other way round. Every other node holds `w`,
//! so both neighbor multisets are identical and only the arrangement differs.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    getconv_forward, isotropic_attention_forward, uniform1, Adjacency, GetConvParams,
    IsotropicParams,
};
use crate::error::Result;
use crate::field::NodeFeatures;
use crate::grid::{GridShape, Neighborhood};

const PROBE_CHANNELS: usize = 4;

/// Euclidean distance between the output rows of A and B for each layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeReport {
    pub seed: u64,
    pub anisotropic_gap: f64,
    pub isotropic_gap: f64,
}

pub fn isomorphism_probe(seed: u64) -> Result<ProbeReport> {
    isomorphism_probe_with(seed, PROBE_CHANNELS, false)
}

/// With `identical_pair`, `u` and `v` are the same vector and the two
/// neighborhoods coincide exactly.
pub fn isomorphism_probe_with(
    seed: u64,
    channels: usize,
    identical_pair: bool,
) -> Result<ProbeReport> {
    let shape = GridShape::new(3, 7)?;
    let adj = Adjacency::new(shape, Neighborhood::square(3)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let w = uniform1(&mut rng, channels, 1.0);
    let u = uniform1(&mut rng, channels, 1.0);
    let v = if identical_pair {
        u.clone()
    } else {
        uniform1(&mut rng, channels, 1.0)
    };
    let mut z = Array2::zeros((shape.len(), channels));
    for mut row in z.rows_mut() {
        row.assign(&w);
    }
    let at = |r: usize, c: usize| r * shape.w + c;
    z.row_mut(at(1, 0)).assign(&u);
    z.row_mut(at(1, 2)).assign(&v);
    z.row_mut(at(1, 4)).assign(&v);
    z.row_mut(at(1, 6)).assign(&u);
    let z = NodeFeatures::new(z)?;

    let aniso = GetConvParams::random(channels, adj.degree(), &mut rng);
    let iso = IsotropicParams::random(channels, &mut rng);
    let (a, b) = (at(1, 1), at(1, 5));
    let gap = |out: &NodeFeatures| (&out.row(a) - &out.row(b)).mapv(|d| d * d).sum().sqrt();
    Ok(ProbeReport {
        seed,
        anisotropic_gap: gap(&getconv_forward(&z, &adj, &aniso, None)?),
        isotropic_gap: gap(&isotropic_attention_forward(&z, &adj, &iso)?),
    })
}
