//! Synthetic label-map fixtures.
//!
//! Every generator is a pure function of `(name, shape, seed)`. Only
//! `random-voronoi` consumes the seed; the other fixtures are fully
//! determined by the shape.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::displacement::LabelMap;
use crate::error::{invalid, Error, Result};
use crate::grid::GridShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    TwoSquaresSeparated,
    TwoBlobsAdherent,
    ConcaveHorseshoe,
    GridOfInstances(usize),
    RandomVoronoi,
}

impl Fixture {
    /// Parses `two-squares-separated`, `two-blobs-adherent`,
    /// `concave-horseshoe`, `grid-of-<k>-instances` or `random-voronoi`.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "two-squares-separated" => Ok(Fixture::TwoSquaresSeparated),
            "two-blobs-adherent" => Ok(Fixture::TwoBlobsAdherent),
            "concave-horseshoe" => Ok(Fixture::ConcaveHorseshoe),
            "random-voronoi" => Ok(Fixture::RandomVoronoi),
            _ => name
                .strip_prefix("grid-of-")
                .and_then(|rest| rest.strip_suffix("-instances"))
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k >= 1)
                .map(Fixture::GridOfInstances)
                .ok_or_else(|| Error::UnknownFixture(name.to_string())),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Fixture::TwoSquaresSeparated => "two-squares-separated".into(),
            Fixture::TwoBlobsAdherent => "two-blobs-adherent".into(),
            Fixture::ConcaveHorseshoe => "concave-horseshoe".into(),
            Fixture::GridOfInstances(k) => format!("grid-of-{k}-instances"),
            Fixture::RandomVoronoi => "random-voronoi".into(),
        }
    }
}

pub fn synth(name: &str, shape: GridShape, seed: u64) -> Result<LabelMap> {
    generate(Fixture::parse(name)?, shape, seed)
}

pub fn generate(fixture: Fixture, shape: GridShape, seed: u64) -> Result<LabelMap> {
    if shape.h < 8 || shape.w < 8 {
        return Err(invalid(format!(
            "fixtures need at least an 8x8 grid, got {}x{}",
            shape.h, shape.w
        )));
    }
    Ok(match fixture {
        Fixture::TwoSquaresSeparated => two_squares(shape),
        Fixture::TwoBlobsAdherent => two_blobs(shape),
        Fixture::ConcaveHorseshoe => horseshoe(shape),
        Fixture::GridOfInstances(k) => grid_of(shape, k)?,
        Fixture::RandomVoronoi => voronoi(shape, seed),
    })
}

fn fill(map: &mut LabelMap, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>, id: u32) {
    for r in rows {
        for c in cols.clone() {
            map.set(r, c, id);
        }
    }
}

fn two_squares(shape: GridShape) -> LabelMap {
    let mut map = LabelMap::zeros(shape);
    let margin = (shape.h.min(shape.w) / 8).max(1);
    let gap = (shape.w / 16).max(2);
    let side = (shape.h - 2 * margin).min((shape.w - 2 * margin - gap) / 2);
    let top = (shape.h - side) / 2;
    let left = (shape.w - 2 * side - gap) / 2;
    fill(&mut map, top..top + side, left..left + side, 1);
    let left2 = left + side + gap;
    fill(&mut map, top..top + side, left2..left2 + side, 2);
    map
}

fn two_blobs(shape: GridShape) -> LabelMap {
    // two overlapping disks, the lens split along the perpendicular bisector
    let mut map = LabelMap::zeros(shape);
    let cy = (shape.h as f64 - 1.0) / 2.0;
    let cx = (shape.w as f64 - 1.0) / 2.0;
    let radius = 0.9 * (shape.h as f64 / 2.0).min(shape.w as f64 / 3.4) - 0.5;
    let d = 0.7 * radius;
    for r in 0..shape.h {
        for c in 0..shape.w {
            let (y, x) = (r as f64 - cy, c as f64 - cx);
            let dl = y * y + (x + d) * (x + d);
            let dr = y * y + (x - d) * (x - d);
            let rr = radius * radius;
            if dl <= rr || dr <= rr {
                map.set(r, c, if x < 0.0 { 1 } else { 2 });
            }
        }
    }
    map
}

fn horseshoe(shape: GridShape) -> LabelMap {
    // annulus with a wedge removed on the right
    let mut map = LabelMap::zeros(shape);
    let cy = (shape.h as f64 - 1.0) / 2.0;
    let cx = (shape.w as f64 - 1.0) / 2.0;
    let outer = 0.45 * shape.h.min(shape.w) as f64;
    let inner = 0.5 * outer;
    for r in 0..shape.h {
        for c in 0..shape.w {
            let (y, x) = (r as f64 - cy, c as f64 - cx);
            let rho = (y * y + x * x).sqrt();
            let opening = x > 0.0 && y.abs() < 0.6 * x;
            if rho <= outer && rho >= inner && !opening {
                map.set(r, c, 1);
            }
        }
    }
    map
}

fn grid_of(shape: GridShape, k: usize) -> Result<LabelMap> {
    // k edge-sharing rectangles tiling a centered block
    let cols = (k as f64).sqrt().ceil() as usize;
    let rows = k.div_ceil(cols);
    let margin = (shape.h.min(shape.w) / 16).max(1);
    let cell_h = (shape.h - 2 * margin) / rows;
    let cell_w = (shape.w - 2 * margin) / cols;
    if cell_h < 2 || cell_w < 2 {
        return Err(invalid(format!(
            "{}x{} grid too small for {k} instances",
            shape.h, shape.w
        )));
    }
    let mut map = LabelMap::zeros(shape);
    for idx in 0..k {
        let (br, bc) = (idx / cols, idx % cols);
        let top = margin + br * cell_h;
        let left = margin + bc * cell_w;
        fill(
            &mut map,
            top..top + cell_h,
            left..left + cell_w,
            idx as u32 + 1,
        );
    }
    Ok(map)
}

fn voronoi(shape: GridShape, seed: u64) -> LabelMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(3..=6usize);
    // keep sites apart so no cell degenerates to a sliver
    let min_dist = 0.3 * (shape.len() as f64 / count as f64).sqrt();
    let mut sites: Vec<(f64, f64)> = Vec::with_capacity(count);
    let mut attempts = 0;
    while sites.len() < count && attempts < 10_000 {
        attempts += 1;
        let p = (
            rng.random_range(0.0..shape.h as f64),
            rng.random_range(0.0..shape.w as f64),
        );
        if sites
            .iter()
            .all(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt() >= min_dist)
        {
            sites.push(p);
        }
    }
    let mut map = LabelMap::zeros(shape);
    for r in 0..shape.h {
        for c in 0..shape.w {
            let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
            let nearest = sites
                .iter()
                .enumerate()
                .map(|(k, s)| (k, (y - s.0).powi(2) + (x - s.1).powi(2)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(k, _)| k)
                .unwrap_or(0);
            map.set(r, c, nearest as u32 + 1);
        }
    }
    map
}
