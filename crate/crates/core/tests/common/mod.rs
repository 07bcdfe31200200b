#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use glandseg::displacement::LabelMap;
use glandseg::grid::GridShape;
use glandseg::synth::synth;
use rand::Rng;

pub fn shape(h: usize, w: usize) -> GridShape {
    GridShape::new(h, w).unwrap()
}

/// The fixture list: four named shapes plus Voronoi maps for the given seeds.
pub fn fixtures(shape: GridShape, voronoi_seeds: u64) -> Vec<(String, LabelMap)> {
    let mut out: Vec<(String, LabelMap)> = [
        "two-squares-separated",
        "two-blobs-adherent",
        "concave-horseshoe",
        "grid-of-9-instances",
    ]
    .iter()
    .map(|n| (n.to_string(), synth(n, shape, 0).unwrap()))
    .collect();
    for s in 0..voronoi_seeds {
        out.push((
            format!("random-voronoi/{s}"),
            synth("random-voronoi", shape, s).unwrap(),
        ));
    }
    out
}

/// True when both maps induce the same partition and the same background.
pub fn same_partition(a: &LabelMap, b: &LabelMap) -> bool {
    let (mut fwd, mut back) = (HashMap::new(), HashMap::new());
    a.labels().iter().zip(b.labels()).all(|(&x, &y)| {
        (x == 0) == (y == 0) && *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x
    })
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// 8-connected components of the `true` pixels, ids 1.. in raster order of
/// each component's first pixel.
pub fn union_find_components(mask: &[bool], shape: GridShape) -> Vec<u32> {
    let (h, w) = (shape.h, shape.w);
    let mut parent: Vec<usize> = (0..h * w).collect();
    for r in 0..h {
        for c in 0..w {
            if !mask[r * w + c] {
                continue;
            }
            for (dr, dc) in [(-1i64, -1i64), (-1, 0), (-1, 1), (0, -1)] {
                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                if rr < 0 || cc < 0 || cc >= w as i64 {
                    continue;
                }
                let q = rr as usize * w + cc as usize;
                if mask[q] {
                    let (a, b) = (find(&mut parent, r * w + c), find(&mut parent, q));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut ids = HashMap::new();
    (0..h * w)
        .map(|p| {
            if !mask[p] {
                return 0;
            }
            let root = find(&mut parent, p);
            let next = ids.len() as u32 + 1;
            *ids.entry(root).or_insert(next)
        })
        .collect()
}

pub fn random_binary(rng: &mut impl Rng, shape: GridShape, density: f64) -> Vec<bool> {
    (0..shape.len()).map(|_| rng.random_bool(density)).collect()
}

/// Random rectangles and disks painted over each other.
pub fn random_instances(rng: &mut impl Rng, shape: GridShape) -> LabelMap {
    let mut map = LabelMap::zeros(shape);
    let count = rng.random_range(1..=7);
    for _ in 0..count {
        let id = rng.random_range(1..20u32);
        let (r0, c0) = (rng.random_range(0..shape.h), rng.random_range(0..shape.w));
        let (a, b) = (rng.random_range(2..10usize), rng.random_range(2..10usize));
        let disk = rng.random_bool(0.5);
        for r in 0..shape.h {
            for c in 0..shape.w {
                let (dr, dc) = (r as f64 - r0 as f64, c as f64 - c0 as f64);
                let inside = if disk {
                    dr * dr + dc * dc <= (a * a) as f64
                } else {
                    r >= r0 && r < r0 + a && c >= c0 && c < c0 + b
                };
                if inside {
                    map.set(r, c, id);
                }
            }
        }
    }
    map
}

/// A perturbed copy: shifted, partly relabeled, with one object erased and
/// a stray object added.
pub fn perturbed(rng: &mut impl Rng, gt: &LabelMap) -> LabelMap {
    let shape = gt.shape();
    let (dr, dc) = (rng.random_range(-2i64..=2), rng.random_range(-2i64..=2));
    let erase = gt
        .instance_ids()
        .first()
        .copied()
        .filter(|_| rng.random_bool(0.3));
    let offset = rng.random_range(0..40u32);
    let mut out = LabelMap::zeros(shape);
    for r in 0..shape.h {
        for c in 0..shape.w {
            let (sr, sc) = (r as i64 - dr, c as i64 - dc);
            if shape.contains(sr, sc) {
                let l = gt.get(sr as usize, sc as usize);
                if l != 0 && Some(l) != erase {
                    out.set(r, c, l + offset);
                }
            }
        }
    }
    if rng.random_bool(0.5) {
        let (r0, c0) = (
            rng.random_range(0..shape.h - 4),
            rng.random_range(0..shape.w - 4),
        );
        for r in r0..r0 + 4 {
            for c in c0..c0 + 4 {
                out.set(r, c, 99);
            }
        }
    }
    out
}

struct Obj {
    id: u32,
    pixels: HashSet<(i64, i64)>,
    boundary: Vec<(i64, i64)>,
}

fn oracle_objects(map: &LabelMap) -> Vec<Obj> {
    let s = map.shape();
    let mut order: Vec<u32> = Vec::new();
    for &l in map.labels() {
        if l != 0 && !order.contains(&l) {
            order.push(l);
        }
    }
    order
        .into_iter()
        .map(|id| {
            let pixels: HashSet<(i64, i64)> = (0..s.h as i64)
                .flat_map(|r| (0..s.w as i64).map(move |c| (r, c)))
                .filter(|&(r, c)| map.get(r as usize, c as usize) == id)
                .collect();
            let mut boundary: Vec<(i64, i64)> = pixels
                .iter()
                .copied()
                .filter(|&(r, c)| {
                    [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)]
                        .iter()
                        .any(|q| !pixels.contains(q))
                })
                .collect();
            boundary.sort();
            Obj {
                id,
                pixels,
                boundary,
            }
        })
        .collect()
}

fn inter(a: &Obj, b: &Obj) -> usize {
    a.pixels.iter().filter(|p| b.pixels.contains(p)).count()
}

fn dist(p: (i64, i64), q: (i64, i64)) -> f64 {
    (((p.0 - q.0).pow(2) + (p.1 - q.1).pow(2)) as f64).sqrt()
}

fn hd(a: &[(i64, i64)], b: &[(i64, i64)]) -> f64 {
    let mut best = 0.0f64;
    for &p in a {
        best = best.max(b.iter().map(|&q| dist(p, q)).fold(f64::INFINITY, f64::min));
    }
    for &q in b {
        best = best.max(a.iter().map(|&p| dist(p, q)).fold(f64::INFINITY, f64::min));
    }
    best
}

/// First element with the strictly largest key.
fn argmax<'a, T>(items: impl Iterator<Item = (&'a T, f64)>) -> Option<&'a T> {
    let mut best: Option<(&T, f64)> = None;
    for (x, k) in items {
        if best.is_none_or(|(_, bk)| k > bk) {
            best = Some((x, k));
        }
    }
    best.map(|(x, _)| x)
}

fn side(from: &[Obj], to: &[Obj], diag: f64) -> (f64, f64) {
    if from.is_empty() {
        return (0.0, diag);
    }
    let total: usize = from.iter().map(|o| o.pixels.len()).sum();
    let (mut dice, mut hdist) = (0.0, 0.0);
    for o in from {
        let wgt = o.pixels.len() as f64 / total as f64;
        let best = argmax(
            to.iter()
                .filter(|t| inter(o, t) > 0)
                .map(|t| (t, inter(o, t) as f64)),
        );
        match best {
            Some(t) => {
                dice += wgt * 2.0 * inter(o, t) as f64 / (o.pixels.len() + t.pixels.len()) as f64;
                hdist += wgt * hd(&o.boundary, &t.boundary);
            }
            None => {
                let near = argmax(to.iter().map(|t| {
                    let d = o
                        .boundary
                        .iter()
                        .flat_map(|&p| t.boundary.iter().map(move |&q| dist(p, q)))
                        .fold(f64::INFINITY, f64::min);
                    (t, -d)
                }));
                hdist += wgt * near.map_or(diag, |t| hd(&o.boundary, &t.boundary));
            }
        }
    }
    (dice, hdist)
}

/// Brute-force `(f1, dice, hd)`.
pub fn oracle_metrics(pred: &LabelMap, gt: &LabelMap) -> (f64, f64, f64) {
    let (g, p) = (oracle_objects(gt), oracle_objects(pred));
    if g.is_empty() && p.is_empty() {
        return (1.0, 1.0, 0.0);
    }
    let s = gt.shape();
    let diag = ((s.h * s.h + s.w * s.w) as f64).sqrt();
    let mut claimed: HashSet<u32> = HashSet::new();
    for po in &p {
        let pick = argmax(
            g.iter()
                .filter(|go| !claimed.contains(&go.id) && 2 * inter(po, go) > go.pixels.len())
                .map(|go| (go, inter(po, go) as f64)),
        );
        if let Some(go) = pick {
            claimed.insert(go.id);
        }
    }
    let tp = claimed.len() as f64;
    let f1 = 2.0 * tp / (2.0 * tp + (p.len() as f64 - tp) + (g.len() as f64 - tp));
    let (gd, gh) = side(&g, &p, diag);
    let (pd, ph) = side(&p, &g, diag);
    (f1, 0.5 * (gd + pd), 0.5 * (gh + ph))
}

/// Direct transcription: every pixel averages the previous coordinates of all
/// same-label pixels within distance `radius`, itself excluded.
pub fn naive_displacement(labels: &LabelMap, radius: usize, iters: usize) -> Vec<[f64; 2]> {
    let shape = labels.shape();
    let (h, w, r) = (shape.h as i64, shape.w as i64, radius as i64);
    let mut d: Vec<[f64; 2]> = (0..shape.len())
        .map(|p| [(p / shape.w) as f64, (p % shape.w) as f64])
        .collect();
    for _ in 0..iters {
        let mut next = d.clone();
        for y in 0..h {
            for x in 0..w {
                let li = labels.get(y as usize, x as usize);
                if li == 0 {
                    continue;
                }
                let (mut sy, mut sx, mut n) = (0.0, 0.0, 0usize);
                for yy in (y - r).max(0)..(y + r + 1).min(h) {
                    for xx in (x - r).max(0)..(x + r + 1).min(w) {
                        let close = (yy - y).pow(2) + (xx - x).pow(2) <= r * r;
                        if close && (yy, xx) != (y, x) && labels.get(yy as usize, xx as usize) == li
                        {
                            let q = d[(yy * w + xx) as usize];
                            sy += q[0];
                            sx += q[1];
                            n += 1;
                        }
                    }
                }
                if n > 0 {
                    next[(y * w + x) as usize] = [sy / n as f64, sx / n as f64];
                }
            }
        }
        d = next;
    }
    (0..shape.len())
        .map(|p| {
            if labels.labels()[p] == 0 {
                [0.0, 0.0]
            } else {
                [
                    d[p][0] - (p / shape.w) as f64,
                    d[p][1] - (p % shape.w) as f64,
                ]
            }
        })
        .collect()
}
