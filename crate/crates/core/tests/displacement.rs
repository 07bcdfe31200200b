mod common;

use common::naive_displacement;
use glandseg::displacement::{gt_displacement, CoordinateDiffusion, DisplacementField, LabelMap};
use glandseg::grid::GridShape;
use glandseg::synth::synth;
use proptest::prelude::*;

fn max_diff(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x[0] - y[0]).abs().max((x[1] - y[1]).abs()))
        .fold(0.0, f64::max)
}

fn label_map() -> impl Strategy<Value = LabelMap> {
    (2usize..10, 2usize..10).prop_flat_map(|(h, w)| {
        proptest::collection::vec(prop_oneof![3 => Just(0u32), 4 => 1u32..4], h * w)
            .prop_map(move |v| LabelMap::new(GridShape::new(h, w).unwrap(), v).unwrap())
    })
}

fn rotate_labels(l: &LabelMap) -> LabelMap {
    // clockwise: (r, c) -> (c, h - 1 - r)
    let s = l.shape();
    let mut out = LabelMap::zeros(GridShape::new(s.w, s.h).unwrap());
    for r in 0..s.h {
        for c in 0..s.w {
            out.set(c, s.h - 1 - r, l.get(r, c));
        }
    }
    out
}

fn fixtures(shape: GridShape) -> Vec<LabelMap> {
    let mut out: Vec<LabelMap> = [
        "two-squares-separated",
        "two-blobs-adherent",
        "concave-horseshoe",
        "grid-of-9-instances",
    ]
    .iter()
    .map(|n| synth(n, shape, 0).unwrap())
    .collect();
    out.extend((0..3).map(|s| synth("random-voronoi", shape, s).unwrap()));
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matches_naive_oracle(labels in label_map(), radius in 1usize..4, iters in 0usize..6) {
        let fast = gt_displacement(&labels, radius, iters).unwrap();
        prop_assert!(max_diff(fast.vectors(), &naive_displacement(&labels, radius, iters)) <= 1e-9);
    }

    #[test]
    fn rotation_rotates_vectors(labels in label_map(), radius in 1usize..4, iters in 1usize..6) {
        let f = gt_displacement(&labels, radius, iters).unwrap();
        let g = gt_displacement(&rotate_labels(&labels), radius, iters).unwrap();
        let s = labels.shape();
        for r in 0..s.h {
            for c in 0..s.w {
                let [dr, dc] = f.get(r, c);
                let [er, ec] = g.get(c, s.h - 1 - r);
                prop_assert!((er - dc).abs() <= 1e-9 && (ec + dr).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn background_stays_still(labels in label_map(), radius in 1usize..4) {
        let f = gt_displacement(&labels, radius, 4).unwrap();
        for (v, &l) in f.vectors().iter().zip(labels.labels()) {
            if l == 0 {
                prop_assert_eq!(*v, [0.0, 0.0]);
            }
        }
    }

    #[test]
    fn relabeling_leaves_field_unchanged(labels in label_map(), shift in 1u32..50) {
        let relabeled = LabelMap::new(
            labels.shape(),
            labels.labels().iter().map(|&l| if l == 0 { 0 } else { 100 - l * 7 + shift }).collect(),
        )
        .unwrap();
        prop_assert_eq!(
            gt_displacement(&labels, 2, 5).unwrap(),
            gt_displacement(&relabeled, 2, 5).unwrap()
        );
    }
}

#[test]
fn contraction_on_fixtures() {
    let shape = GridShape::new(32, 32).unwrap();
    for labels in fixtures(shape) {
        let base = CoordinateDiffusion::new(&labels, 5).unwrap();
        for id in labels.instance_ids() {
            let pixels: Vec<usize> = (0..shape.len())
                .filter(|&p| labels.labels()[p] == id)
                .collect();
            let degree: Vec<f64> = pixels
                .iter()
                .map(|&p| {
                    base.same_instance_neighbors(glandseg::grid::NodeId(p))
                        .len() as f64
                })
                .collect();
            let total: f64 = degree.iter().sum();
            let n = pixels.len() as f64;
            let centroid = [
                pixels.iter().map(|&p| (p / shape.w) as f64).sum::<f64>() / n,
                pixels.iter().map(|&p| (p % shape.w) as f64).sum::<f64>() / n,
            ];
            let measure = |d: &CoordinateDiffusion| {
                let pts: Vec<[f64; 2]> = pixels.iter().map(|&p| d.coords().coords()[p]).collect();
                let max_dist = pts
                    .iter()
                    .map(|q| ((q[0] - centroid[0]).powi(2) + (q[1] - centroid[1]).powi(2)).sqrt())
                    .fold(0.0, f64::max);
                let wmean = [0, 1]
                    .map(|k| pts.iter().zip(&degree).map(|(q, w)| w * q[k]).sum::<f64>() / total);
                let wvar = pts
                    .iter()
                    .zip(&degree)
                    .map(|(q, w)| w * ((q[0] - wmean[0]).powi(2) + (q[1] - wmean[1]).powi(2)))
                    .sum::<f64>()
                    / total;
                (max_dist, wvar, wmean)
            };
            let mut probe = CoordinateDiffusion::new(&labels, 5).unwrap();
            let (mut max_prev, mut var_prev, mean0) = measure(&probe);
            while probe.steps() < 96 {
                probe.step();
                let (max_cur, var_cur, mean) = measure(&probe);
                assert!(
                    max_cur <= max_prev + 1e-9,
                    "max distance grew for instance {id}"
                );
                assert!(
                    var_cur <= var_prev + 1e-9,
                    "weighted variance grew for instance {id}"
                );
                assert!((mean[0] - mean0[0]).abs() < 1e-9 && (mean[1] - mean0[1]).abs() < 1e-9);
                (max_prev, var_prev) = (max_cur, var_cur);
            }
        }
    }
}

#[test]
fn parallel_and_serial_runs_agree_bitwise() {
    let labels = synth("random-voronoi", GridShape::new(48, 48).unwrap(), 3).unwrap();
    let run = |threads| -> DisplacementField {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| gt_displacement(&labels, 5, 96).unwrap())
    };
    assert_eq!(run(1), run(4));
}
