//! Object-level F1, Dice and Hausdorff distance between instance maps.
//!
//! Conventions:
//!
//! * Detection: a predicted object is a true positive when it covers more
//!   than half of a ground-truth object not already claimed. Predicted
//!   objects are visited in raster order of their first pixel.
//! * Dice and Hausdorff are averaged twice, once over ground-truth objects
//!   paired with their largest-overlap prediction and once the other way,
//!   each weighted by object area, and the two halves are averaged.
//! * An object without any overlapping counterpart scores Dice 0. For the
//!   Hausdorff distance it is paired with the counterpart whose boundary is
//!   nearest, or scores the image diagonal when the other map is empty.
//! * Boundary pixels are object pixels with a 4-neighbor outside the object
//!   (the image border counts as outside).

use std::collections::BTreeMap;

use serde::Serialize;

use crate::displacement::LabelMap;
use crate::error::{mismatch, Result};
use crate::grid::GridShape;

#[derive(Debug, Clone)]
struct Object {
    id: u32,
    area: usize,
    first: usize,
    boundary: Vec<(i64, i64)>,
}

fn objects(map: &LabelMap) -> Vec<Object> {
    let shape = map.shape();
    let labels = map.labels();
    let mut by_id: BTreeMap<u32, Object> = BTreeMap::new();
    for (p, &id) in labels.iter().enumerate() {
        if id == 0 {
            continue;
        }
        let obj = by_id.entry(id).or_insert(Object {
            id,
            area: 0,
            first: p,
            boundary: Vec::new(),
        });
        obj.area += 1;
        let (r, c) = ((p / shape.w) as i64, (p % shape.w) as i64);
        let outside = [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().any(|&(dr, dc)| {
            let (nr, nc) = (r + dr, c + dc);
            !shape.contains(nr, nc) || labels[nr as usize * shape.w + nc as usize] != id
        });
        if outside {
            obj.boundary.push((r, c));
        }
    }
    let mut objs: Vec<Object> = by_id.into_values().collect();
    objs.sort_by_key(|o| o.first);
    objs
}

fn hausdorff(a: &[(i64, i64)], b: &[(i64, i64)]) -> f64 {
    let directed = |from: &[(i64, i64)], to: &[(i64, i64)]| {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| ((p.0 - q.0).pow(2) + (p.1 - q.1).pow(2)) as f64)
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0f64, f64::max)
    };
    directed(a, b).max(directed(b, a)).sqrt()
}

fn min_distance(a: &[(i64, i64)], b: &[(i64, i64)]) -> i64 {
    a.iter()
        .flat_map(|p| {
            b.iter()
                .map(move |q| (p.0 - q.0).pow(2) + (p.1 - q.1).pow(2))
        })
        .min()
        .unwrap_or(i64::MAX)
}

fn diagonal(shape: GridShape) -> f64 {
    ((shape.h * shape.h + shape.w * shape.w) as f64).sqrt()
}

/// Per-object line of the report, from the side of one map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectScore {
    pub id: u32,
    pub area: usize,
    /// Largest-overlap counterpart, if any overlap exists.
    pub partner: Option<u32>,
    pub overlap: usize,
    pub dice: f64,
    pub hausdorff: f64,
}

/// Detection bookkeeping and per-object scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Ground-truth id -> predicted id claimed under the detection rule.
    pub detections: BTreeMap<u32, u32>,
    /// `(gt id, pred id, shared pixels)` for every overlapping pair.
    pub overlaps: Vec<(u32, u32, usize)>,
    pub gt_objects: Vec<ObjectScore>,
    pub pred_objects: Vec<ObjectScore>,
    /// Image diagonal, the distance charged when one map has no objects.
    pub diagonal: f64,
}

/// Flat record emitted by the `eval` command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub obj_f1: f64,
    pub obj_dice: f64,
    pub obj_hd: f64,
    pub per_object: Vec<PerObject>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerObject {
    pub gt_id: u32,
    pub area: usize,
    pub matched_pred: Option<u32>,
    pub dice: f64,
    pub hausdorff: f64,
}

/// Scores each object of `from` against its partner in `to`.
fn score_side(
    from: &[Object],
    to: &[Object],
    overlap: &BTreeMap<(u32, u32), usize>,
    flip: bool,
    shape: GridShape,
) -> Vec<ObjectScore> {
    let key = |a: u32, b: u32| if flip { (b, a) } else { (a, b) };
    from.iter()
        .map(|obj| {
            // largest overlap, ties to the earliest counterpart in raster order
            let best = to
                .iter()
                .map(|other| {
                    (
                        other,
                        overlap.get(&key(obj.id, other.id)).copied().unwrap_or(0),
                    )
                })
                .filter(|&(_, n)| n > 0)
                .fold(None::<(&Object, usize)>, |acc, cand| match acc {
                    Some((_, n)) if n >= cand.1 => acc,
                    _ => Some(cand),
                });
            match best {
                Some((other, n)) => ObjectScore {
                    id: obj.id,
                    area: obj.area,
                    partner: Some(other.id),
                    overlap: n,
                    dice: 2.0 * n as f64 / (obj.area + other.area) as f64,
                    hausdorff: hausdorff(&obj.boundary, &other.boundary),
                },
                None => {
                    let nearest = to
                        .iter()
                        .map(|other| (other, min_distance(&obj.boundary, &other.boundary)))
                        .fold(None::<(&Object, i64)>, |acc, cand| match acc {
                            Some((_, d)) if d <= cand.1 => acc,
                            _ => Some(cand),
                        });
                    ObjectScore {
                        id: obj.id,
                        area: obj.area,
                        partner: None,
                        overlap: 0,
                        dice: 0.0,
                        hausdorff: nearest
                            .map(|(other, _)| hausdorff(&obj.boundary, &other.boundary))
                            .unwrap_or_else(|| diagonal(shape)),
                    }
                }
            }
        })
        .collect()
}

pub fn match_objects(pred: &LabelMap, gt: &LabelMap) -> Result<MatchReport> {
    if pred.shape() != gt.shape() {
        return Err(mismatch("prediction and ground truth differ in shape"));
    }
    let shape = gt.shape();
    let gt_objs = objects(gt);
    let pred_objs = objects(pred);
    let mut overlap: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for (&g, &p) in gt.labels().iter().zip(pred.labels()) {
        if g != 0 && p != 0 {
            *overlap.entry((g, p)).or_insert(0) += 1;
        }
    }

    let mut detections = BTreeMap::new();
    for p in &pred_objs {
        let claim = gt_objs
            .iter()
            .filter(|g| !detections.contains_key(&g.id))
            .filter_map(|g| {
                let n = overlap.get(&(g.id, p.id)).copied().unwrap_or(0);
                (2 * n > g.area).then_some((g.id, n))
            })
            .fold(None::<(u32, usize)>, |acc, cand| match acc {
                Some((_, n)) if n >= cand.1 => acc,
                _ => Some(cand),
            });
        if let Some((g, _)) = claim {
            detections.insert(g, p.id);
        }
    }
    let tp = detections.len();

    Ok(MatchReport {
        tp,
        fp: pred_objs.len() - tp,
        fn_: gt_objs.len() - tp,
        gt_objects: score_side(&gt_objs, &pred_objs, &overlap, false, shape),
        pred_objects: score_side(&pred_objs, &gt_objs, &overlap, true, shape),
        overlaps: overlap.into_iter().map(|((g, p), n)| (g, p, n)).collect(),
        detections,
        diagonal: diagonal(shape),
    })
}

fn weighted(scores: &[ObjectScore], value: impl Fn(&ObjectScore) -> f64) -> f64 {
    let total: usize = scores.iter().map(|s| s.area).sum();
    if total == 0 {
        return 0.0;
    }
    // divide once so that all-ones scores give exactly 1
    scores.iter().map(|s| s.area as f64 * value(s)).sum::<f64>() / total as f64
}

impl MatchReport {
    pub fn f1(&self) -> f64 {
        if self.tp + self.fp + self.fn_ == 0 {
            return 1.0;
        }
        2.0 * self.tp as f64 / (2 * self.tp + self.fp + self.fn_) as f64
    }

    pub fn dice(&self) -> f64 {
        if self.gt_objects.is_empty() && self.pred_objects.is_empty() {
            return 1.0;
        }
        0.5 * (weighted(&self.gt_objects, |s| s.dice) + weighted(&self.pred_objects, |s| s.dice))
    }

    pub fn hausdorff(&self) -> f64 {
        if self.gt_objects.is_empty() && self.pred_objects.is_empty() {
            return 0.0;
        }
        let half = |scores: &[ObjectScore]| {
            if scores.is_empty() {
                self.diagonal
            } else {
                weighted(scores, |s| s.hausdorff)
            }
        };
        0.5 * (half(&self.gt_objects) + half(&self.pred_objects))
    }

    pub fn record(&self) -> MetricsRecord {
        MetricsRecord {
            obj_f1: self.f1(),
            obj_dice: self.dice(),
            obj_hd: self.hausdorff(),
            per_object: self
                .gt_objects
                .iter()
                .map(|g| PerObject {
                    gt_id: g.id,
                    area: g.area,
                    matched_pred: self.detections.get(&g.id).copied(),
                    dice: g.dice,
                    hausdorff: g.hausdorff,
                })
                .collect(),
        }
    }
}

pub fn obj_f1(pred: &LabelMap, gt: &LabelMap) -> Result<f64> {
    Ok(match_objects(pred, gt)?.f1())
}

pub fn obj_dice(pred: &LabelMap, gt: &LabelMap) -> Result<f64> {
    Ok(match_objects(pred, gt)?.dice())
}

pub fn obj_hd(pred: &LabelMap, gt: &LabelMap) -> Result<f64> {
    Ok(match_objects(pred, gt)?.hausdorff())
}

pub fn evaluate(pred: &LabelMap, gt: &LabelMap) -> Result<MetricsRecord> {
    Ok(match_objects(pred, gt)?.record())
}
