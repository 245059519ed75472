use comask_core::masking::{sample_pair, MaskConfig, PairKind};
use comask_core::theory::*;
use comask_core::Tensor;
use proptest::prelude::*;

fn noise_only(sigma: f64) -> DataModelSpec {
    DataModelSpec {
        dims: vec![16, 16],
        support: 0,
        env_norm: 0.0,
        sigma,
        ..DataModelSpec::default()
    }
}

#[test]
fn fce_scales_with_noise_level() {
    let fmap = FeatureMapSpec {
        kind: FeatureKind::Linear,
        out_dim: 8,
        seed: 3,
        beta: 1.0,
    };
    let a = fce_experiment(&noise_only(0.1), &fmap, 10_000, 17).unwrap();
    let b = fce_experiment(&noise_only(0.2), &fmap, 10_000, 17).unwrap();
    for (x, y) in a.summaries.iter().zip(&b.summaries) {
        let ratio = y.mean / x.mean;
        assert!((ratio - 2.0).abs() <= 0.2, "{}: ratio {ratio}", x.kind);
    }
}

#[test]
fn random_ip_mean_within_four_standard_errors() {
    let x = gaussian_vector(256, 8);
    let s = ip_experiment(&x, PairKind::Random, 10_000, 21).unwrap();
    let se = (s.variance / s.trials as f64).sqrt();
    assert!((s.mean - 0.25).abs() <= 4.0 * se, "mean {} se {se}", s.mean);
}

#[test]
fn three_view_variance_respects_stated_bound() {
    let x = Tensor::ones(&[300]);
    let r = multiview_experiment(&x, 3, 10_000, 4).unwrap();
    assert!(r.variance_within_bound);
    assert_eq!(r.exact_partitions, 10_000);
}

#[test]
fn experiments_reproduce_from_seed() {
    let x = gaussian_vector(64, 2);
    assert_eq!(
        ip_experiment(&x, PairKind::Random, 500, 9).unwrap(),
        ip_experiment(&x, PairKind::Random, 500, 9).unwrap()
    );
    let fmap = FeatureMapSpec::default();
    let m = DataModelSpec::default();
    assert_eq!(fce_experiment(&m, &fmap, 50, 1).unwrap(), fce_experiment(&m, &fmap, 50, 1).unwrap());
    let gap = GapConfig {
        n_values: vec![8, 16],
        repetitions: 2,
        reference_size: 200,
        ..GapConfig::default()
    };
    assert_eq!(gap_experiment(&gap, 5).unwrap(), gap_experiment(&gap, 5).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn complementary_ip_vanishes_for_any_input(seed in any::<u64>(), d in 1usize..200, mask_seed in any::<u64>()) {
        let cfg = MaskConfig::coordinates(&[d]).unwrap();
        let x = gaussian_vector(d, seed).reshape(&cfg.dims).unwrap();
        let v = sample_pair(&cfg, PairKind::Complementary, mask_seed).unwrap().views(&x).unwrap();
        prop_assert_eq!(ip_metric(&v[0], &v[1], &x).unwrap(), 0.0);
    }

    #[test]
    fn fce_is_zero_on_equal_inputs_and_symmetric(
        seed in any::<u64>(),
        out_dim in 1usize..12,
        relu in any::<bool>(),
        beta in 0.1f64..3.0,
    ) {
        let spec = FeatureMapSpec {
            kind: if relu { FeatureKind::LinearRelu } else { FeatureKind::Linear },
            out_dim,
            seed,
            beta,
        };
        let map = FeatureMap::build(&spec, 20).unwrap();
        let a = gaussian_vector(20, seed ^ 1);
        let b = gaussian_vector(20, seed ^ 2);
        prop_assert_eq!(fce(&map, &a, &a).unwrap(), 0.0);
        prop_assert_eq!(fce(&map, &a, &b).unwrap(), fce(&map, &b, &a).unwrap());
    }
}
