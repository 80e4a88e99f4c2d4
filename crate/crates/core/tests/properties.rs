//! Property tests for the structural invariants: decision integrity, rule
//! dominance, beam symmetry, distribution round trips, and sampler
//! guarantees.

use proptest::prelude::*;

use obsim::fading::{
    marginal_cdf, sample_sinr_matrix, upper_quantile, ChannelKind, ChannelModel, Statistic,
};
use obsim::policy::{check_beam_symmetry, FeedbackRule};

fn sinr_vector(beams: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..6.0, beams)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, .. ProptestConfig::default() })]

    /// The general rule requests a superset of the best-beam rule's request
    /// at any shared threshold, and both report exactly the vector entries
    /// of the beams they request.
    #[test]
    fn general_rule_dominates_best_beam_rule(
        v in sinr_vector(3),
        tau in 0.0f64..4.0,
    ) {
        let general = FeedbackRule::general_threshold(0, tau).evaluate(&v).unwrap();
        let best = FeedbackRule::max_sinr_threshold(0, tau).evaluate(&v).unwrap();
        prop_assert!(best.requested.len() <= 1);
        for beam in &best.requested {
            prop_assert!(general.requested.contains(beam));
        }
        for (beam, reported) in general.requested.iter().zip(&general.reported) {
            prop_assert_eq!(*reported, v[*beam]);
        }
        let mut sorted = general.requested.clone();
        sorted.sort_unstable();
        prop_assert_eq!(&sorted, &general.requested);
    }

    /// On vectors drawn from a beamforming construction, a super-unity
    /// threshold collapses the general rule onto the best-beam rule.
    #[test]
    fn rules_coincide_above_unity_on_beamforming_vectors(
        trial in 0u64..5_000,
        seed in 0u64..64,
        tau in 1.0f64..3.0,
    ) {
        let model = ChannelModel::new(ChannelKind::Rayleigh, 1.0, 3, 1);
        let gamma = sample_sinr_matrix(&model, trial, seed).unwrap();
        let v = gamma.user_vector(0);
        let a = FeedbackRule::general_threshold(0, tau).evaluate(v).unwrap();
        let b = FeedbackRule::max_sinr_threshold(0, tau).evaluate(v).unwrap();
        prop_assert_eq!(a, b);
    }

    /// Sampled matrices contain only finite nonnegative entries, and under
    /// any beamforming kind at most one entry per user exceeds 1.
    #[test]
    fn sampled_matrices_respect_sinr_construction(
        trial in 0u64..2_000,
        seed in 0u64..32,
        snr in 0.3f64..8.0,
        kind in 0usize..3,
    ) {
        let kind = match kind {
            0 => ChannelKind::Rayleigh,
            1 => ChannelKind::Rician { k_factor: 2.0 },
            _ => ChannelKind::Nakagami { m: 1.5 },
        };
        let model = ChannelModel::new(kind, snr, 3, 2);
        let gamma = sample_sinr_matrix(&model, trial, seed).unwrap();
        for user in 0..2 {
            let v = gamma.user_vector(user);
            prop_assert!(v.iter().all(|x| x.is_finite() && *x >= 0.0));
            prop_assert!(v.iter().filter(|x| **x > 1.0).count() <= 1);
        }
    }

    /// Threshold rules commute with beam permutations on arbitrary vectors.
    #[test]
    fn threshold_rules_are_permutation_equivariant(
        v in sinr_vector(4),
        tau in 0.0f64..4.0,
        max_kind in proptest::bool::ANY,
    ) {
        let rule = if max_kind {
            FeedbackRule::max_sinr_threshold(0, tau)
        } else {
            FeedbackRule::general_threshold(0, tau)
        };
        let report = check_beam_symmetry(&rule, &[v]).unwrap();
        prop_assert!(report.is_symmetric(), "{:?}", report.violation);
    }

    /// Upper-tail quantile and cdf invert each other on the closed-form
    /// marginals.
    #[test]
    fn quantile_inverts_cdf(
        x in 0.01f64..8.0,
        snr in 0.2f64..5.0,
        beams in 1usize..4,
    ) {
        let model = ChannelModel::new(ChannelKind::Rayleigh, snr, beams, 1);
        let q = 1.0 - marginal_cdf(&model, x).unwrap();
        prop_assume!(q > 1e-12 && q < 1.0);
        let back = upper_quantile(&model, q, Statistic::Beam1).unwrap();
        prop_assert!((back - x).abs() < 1e-4, "x {x}, back {back}");
    }

    /// The cdf is monotone nondecreasing.
    #[test]
    fn cdf_is_monotone(
        a in 0.0f64..8.0,
        b in 0.0f64..8.0,
        beams in 1usize..4,
    ) {
        let model = ChannelModel::new(ChannelKind::Rayleigh, 1.0, beams, 1);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(marginal_cdf(&model, lo).unwrap() <= marginal_cdf(&model, hi).unwrap());
    }

    /// Sampling the same address twice gives bit-identical columns, and
    /// different trials differ.
    #[test]
    fn sampling_is_address_deterministic(trial in 0u64..10_000, seed in 0u64..1_000) {
        let model = ChannelModel::new(ChannelKind::Rayleigh, 1.0, 2, 2);
        let a = sample_sinr_matrix(&model, trial, seed).unwrap();
        let b = sample_sinr_matrix(&model, trial, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let c = sample_sinr_matrix(&model, trial + 1, seed).unwrap();
        prop_assert_ne!(&a, &c);
    }
}
