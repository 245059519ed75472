use comask_core::masking::{sample_pair, MaskConfig, PairKind};
use comask_core::recovery::*;
use comask_core::stats::Running;
use proptest::prelude::*;

fn pair(d: usize, kind: PairKind, seed: u64) -> comask_core::masking::MaskedPair {
    sample_pair(&MaskConfig::coordinates(&[d]).unwrap(), kind, seed).unwrap()
}

fn support(v: &nalgebra::DVector<f64>) -> Vec<usize> {
    v.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(i, _)| i).collect()
}

#[test]
fn random_pairs_omit_a_quarter_of_coordinates() {
    let d = 128;
    let mut acc = Running::default();
    for s in 0..1000 {
        let p = pair(d, PairKind::Random, s);
        let (a, b) = (p.first().bits(), p.second().bits());
        let neither = a.iter().zip(b).filter(|(x, y)| **x == 0 && **y == 0).count();
        acc.push(neither as f64 / d as f64);
    }
    assert!((acc.mean() - 0.25).abs() <= 0.01, "{}", acc.mean());
}

#[test]
fn row_counts_of_measurement_systems() {
    let d = 128;
    let inst = gen_instance(d, 256, 5, 0.0, 1).unwrap();
    let mut rows = Running::default();
    for s in 0..2000 {
        let c = build_measurement(&inst, &pair(d, PairKind::Complementary, s)).unwrap();
        assert_eq!(c.a.nrows(), d);
        rows.push(build_measurement(&inst, &pair(d, PairKind::Random, s)).unwrap().a.nrows() as f64);
    }
    let n = rows.count() as f64;
    assert!((rows.mean() - d as f64).abs() <= 3.0 * rows.std_error(), "mean {}", rows.mean());
    // Standard error of a sample variance of a near-normal count.
    let var_se = (d as f64 / 2.0) * (2.0 / (n - 1.0)).sqrt();
    assert!((rows.variance() - d as f64 / 2.0).abs() <= 3.0 * var_se, "variance {}", rows.variance());
}

#[test]
fn omp_recovers_noiseless_support_exactly() {
    for s in 0..20 {
        let inst = gen_instance(128, 256, 5, 0.0, s).unwrap();
        let sys = build_measurement(&inst, &pair(128, PairKind::Complementary, s + 1000)).unwrap();
        let r = omp_solve(&sys, 5).unwrap();
        assert_eq!(support(&r.estimate), support(&inst.z));
        assert!(r.error < 1e-10, "error {}", r.error);
        assert!(r.residual_norm < 1e-10 * sys.y.norm().max(1.0));
    }
}

#[test]
fn bpdn_and_omp_agree_without_noise() {
    let opts = BpdnOptions::default();
    for s in 0..50 {
        let inst = gen_instance(128, 256, 5, 0.0, 500 + s).unwrap();
        let sys = build_measurement(&inst, &pair(128, PairKind::Complementary, s)).unwrap();
        let b = bpdn_solve(&sys, 0.0, &opts).unwrap();
        let o = omp_solve(&sys, 5).unwrap();
        assert!((b.error - o.error).abs() < 1e-3, "seed {s}: bpdn {} omp {}", b.error, o.error);
    }
}

fn small_grid(sigmas: Vec<f64>, trials: usize) -> SweepGrid {
    SweepGrid {
        d: 64,
        n: 128,
        sigmas,
        ks: vec![3],
        trials,
        ..SweepGrid::default()
    }
}

#[test]
fn noiseless_cell_has_tiny_medians() {
    let r = sweep_compare(&small_grid(vec![0.0], 20), 3).unwrap();
    for c in &r.cells {
        assert!(c.median < 1e-3, "{}: {}", c.kind, c.median);
    }
}

#[test]
fn complementary_medians_grow_with_noise() {
    let r = sweep_compare(&small_grid(vec![0.01, 0.05, 0.2], 60), 4).unwrap();
    let med: Vec<f64> = r.cells.iter().filter(|c| c.kind == "complementary").map(|c| c.median).collect();
    assert!(med.windows(2).all(|w| w[0] <= w[1]), "{med:?}");
    assert_eq!(r.rows.len(), 3 * 60 * 2);
}

#[test]
fn restricted_condition_numbers_are_finite() {
    let inst = gen_instance(128, 256, 5, 0.0, 9).unwrap();
    let sys = build_measurement(&inst, &pair(128, PairKind::Complementary, 9)).unwrap();
    let kappa = restricted_condition_numbers(&sys.a, 10, 1000, 2).unwrap();
    assert_eq!(kappa.len(), 1000);
    assert!(kappa.iter().all(|k| k.is_finite() && *k >= 1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn measurement_residual_is_the_noise(seed in any::<u64>(), k in 1usize..6, sigma in 0.0f64..0.5, random in any::<bool>()) {
        let inst = gen_instance(32, 48, k, sigma, seed).unwrap();
        let kind = if random { PairKind::Random } else { PairKind::Complementary };
        let p = pair(32, kind, seed ^ 0x55);
        prop_assume!(p.masks().iter().all(|m| m.count_ones() > 0));
        let sys = build_measurement(&inst, &p).unwrap();
        let r = (&sys.y - &sys.a * &inst.z).norm();
        prop_assert!((r - sys.eta.norm()).abs() <= 1e-9);
    }
}
