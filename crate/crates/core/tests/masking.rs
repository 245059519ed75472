use comask_core::masking::*;
use comask_core::stats::Running;
use comask_core::Tensor;
use proptest::prelude::*;

#[test]
fn masked_fraction_matches_ratio() {
    let cfg = MaskConfig::new(&[64, 64], 4, 0.5).unwrap();
    let acc: Running = (0..10_000).map(|s| sample_patch_mask(&cfg, s).unwrap().masked_fraction()).collect();
    assert!((0.49..=0.51).contains(&acc.mean()), "{}", acc.mean());
}

#[test]
fn random_pairs_share_a_quarter_of_blocks() {
    let cfg = MaskConfig::new(&[32, 32], 4, 0.5).unwrap();
    let acc: Running = (0..10_000)
        .map(|s| {
            let p = sample_pair(&cfg, PairKind::Random, s).unwrap();
            let (a, b) = (p.first().blocks(), p.second().blocks());
            a.iter().zip(&b).filter(|(x, y)| **x && **y).count() as f64 / a.len() as f64
        })
        .collect();
    assert!((acc.mean() - 0.25).abs() <= 0.01, "{}", acc.mean());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cube_masks_keep_invariants(
        seed in any::<u64>(),
        grid in prop::collection::vec(1usize..4, 3),
        b in 1usize..4,
        r in 0.0f64..=1.0,
    ) {
        let dims: Vec<usize> = grid.iter().map(|g| g * b).collect();
        let cfg = MaskConfig::new(&dims, b, r).unwrap();
        let pair = sample_pair(&cfg, PairKind::Complementary, seed).unwrap();
        prop_assert!(pair.is_partition());
        prop_assert!(pair.masks().iter().all(PatchMask::is_block_constant));
        prop_assert_eq!(pair.first().complement().complement(), pair.first().clone());
        let x = Tensor::from_fn(&dims, |i| (i as f64 * 0.37).sin());
        let v = pair.views(&x).unwrap();
        prop_assert_eq!(v[0].zip_map(&v[1], "sum", |a, c| a + c).unwrap(), x);
        prop_assert_eq!(sample_patch_mask(&cfg, seed).unwrap(), sample_patch_mask(&cfg, seed).unwrap());
    }
}
