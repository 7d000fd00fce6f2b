//! Property tests over the file formats and clip geometry.

use asst::clip::{decode_window, encode_targets, Anchor, ClipWindow};
use asst::data::{parse_features, FeatureSequence};
use asst::eval::{iou, rank_at_k_classification};
use asst::Tensor;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn feature_files_round_trip_bit_exactly(
        m in 1usize..24,
        d in 1usize..8,
        fr in 0.5f64..20.0,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..m * d).map(|_| rng.gen_range(-1e9..1e9)).collect();
        let seq = FeatureSequence::new(
            Tensor::new(vec![m, d], vals).unwrap(),
            m as f64 / fr,
            fr,
        ).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.feat");
        asst::data::write_features(&path, &seq).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let back = parse_features(&bytes).unwrap();
        let bits = |t: &Tensor| t.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back.features), bits(&seq.features));
    }

    #[test]
    fn decode_inverts_encode(
        center in 1.0f64..63.0,
        length in 0.5f64..32.0,
        gs in 0.0f64..60.0,
        gl in 0.2f64..30.0,
    ) {
        let tau = 64.0;
        let anchor = Anchor { group: 0, center, length };
        let gt = ClipWindow { start: gs.min(tau - gl - 1e-6), end: (gs.min(tau - gl - 1e-6) + gl) };
        let (d_c, d_l) = encode_targets(&anchor, &gt);
        let back = decode_window(&anchor, d_c, d_l, tau);
        prop_assert!((back.start - gt.start).abs() < 1e-9);
        prop_assert!((back.end - gt.end).abs() < 1e-9);
    }

    #[test]
    fn iou_is_symmetric_bounded_and_reflexive(
        s1 in 0.0f64..40.0, l1 in 0.01f64..20.0,
        s2 in 0.0f64..40.0, l2 in 0.01f64..20.0,
    ) {
        let a = ClipWindow { start: s1, end: s1 + l1 };
        let b = ClipWindow { start: s2, end: s2 + l2 };
        let ab = iou(&a, &b);
        prop_assert!((ab - iou(&b, &a)).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rank_rate_is_monotone_in_k(perm_seed in any::<u64>(), n_pairs in 1usize..12) {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed);
        let pairs: Vec<(Vec<usize>, usize)> = (0..n_pairs)
            .map(|_| {
                let mut ranked: Vec<usize> = (0..21).collect();
                ranked.shuffle(&mut rng);
                let gt = *ranked.first().unwrap() % 21;
                (ranked, gt)
            })
            .collect();
        let mut prev = 0.0;
        for k in 1..=21 {
            let r = rank_at_k_classification(&pairs, k);
            prop_assert!(r + 1e-12 >= prev);
            prev = r;
        }
        // Every valid ground truth appears somewhere in a 21-element ranking.
        prop_assert!((prev - 1.0).abs() < 1e-12);
    }
}
