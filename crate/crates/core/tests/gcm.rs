mod common;

use common::{fixtures, random_binary, same_partition, shape, union_find_components};
use glandseg::displacement::{gt_displacement, DisplacementField, LabelMap, GT_ITERS, GT_RADIUS};
use glandseg::gcm::{build_tg, contract, gcm, EnergyMap, T0, T1};
use glandseg::metrics::evaluate;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn round_trip_recovers_fixtures() {
    for (h, w) in [(32, 32), (48, 48), (64, 64), (32, 48)] {
        for (name, labels) in fixtures(shape(h, w), 10) {
            let field = gt_displacement(&labels, GT_RADIUS, GT_ITERS).unwrap();
            let out = gcm(&field, &EnergyMap::from_labels(&labels), T0, T1).unwrap();
            assert!(same_partition(&out, &labels), "{name} at {h}x{w}");
            let rec = evaluate(&out, &labels).unwrap();
            assert_eq!(
                (rec.obj_f1, rec.obj_dice, rec.obj_hd),
                (1.0, 1.0, 0.0),
                "{name} at {h}x{w}"
            );
        }
    }
}

#[test]
fn adherent_blobs_need_the_field() {
    let labels = glandseg::synth::synth("two-blobs-adherent", shape(48, 48), 0).unwrap();
    let energy = EnergyMap::from_labels(&labels);
    let still = gcm(&DisplacementField::zeros(labels.shape()), &energy, T0, T1).unwrap();
    assert_eq!(still.instance_count(), 1);
    let field = gt_displacement(&labels, GT_RADIUS, GT_ITERS).unwrap();
    assert_eq!(gcm(&field, &energy, T0, T1).unwrap().instance_count(), 2);
}

#[test]
fn contraction_conserves_messages_on_fixtures() {
    for (name, labels) in fixtures(shape(40, 40), 5) {
        let field = gt_displacement(&labels, GT_RADIUS, GT_ITERS).unwrap();
        let tg = build_tg(&field, &EnergyMap::from_labels(&labels)).unwrap();
        let total: f64 = tg.mes.iter().sum();
        for t0 in [1, 2, 8] {
            let sum: f64 = contract(&tg, t0).mes.iter().sum();
            assert_eq!(sum, total, "{name}, T0={t0}");
        }
    }
}

#[test]
fn output_is_deterministic_across_thread_counts() {
    let labels = glandseg::synth::synth("random-voronoi", shape(48, 40), 7).unwrap();
    let run = |threads| -> LabelMap {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let field = gt_displacement(&labels, GT_RADIUS, GT_ITERS).unwrap();
                gcm(&field, &EnergyMap::from_labels(&labels), T0, T1).unwrap()
            })
    };
    let reference = run(1);
    assert_eq!(run(3), reference);
    assert_eq!(run(8), reference);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_field_gives_connected_components(seed in any::<u64>(), h in 1usize..24, w in 1usize..24, density in 0.1f64..0.8) {
        let s = shape(h, w);
        let mask = random_binary(&mut ChaCha8Rng::seed_from_u64(seed), s, density);
        let energy = EnergyMap::new(s, mask.iter().map(|&m| f64::from(u8::from(m))).collect()).unwrap();
        let out = gcm(&DisplacementField::zeros(s), &energy, T0, T1).unwrap();
        prop_assert_eq!(out.labels(), &union_find_components(&mask, s)[..]);
    }

    #[test]
    fn integer_energies_are_conserved(seed in any::<u64>(), t0 in 0usize..12) {
        let labels = glandseg::synth::synth("random-voronoi", shape(24, 24), seed % 50).unwrap();
        let field = gt_displacement(&labels, 3, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let energy = EnergyMap::new(
            labels.shape(),
            (0..labels.shape().len()).map(|_| f64::from(rand::Rng::random_range(&mut rng, 0..5u8))).collect(),
        )
        .unwrap();
        let tg = build_tg(&field, &energy).unwrap();
        prop_assert_eq!(contract(&tg, t0).mes.iter().sum::<f64>(), tg.mes.iter().sum::<f64>());
    }
}
