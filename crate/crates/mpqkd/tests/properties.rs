//! Property tests for structural invariants: pairing, config round-trips,
//! probability normalizations and the entropy/rate helpers.

use proptest::prelude::*;

use mpqkd::channel::{gain_coherent, ChannelParams};
use mpqkd::config::ProtocolConfig;
use mpqkd::fock::{poisson_pmf, poisson_tail};
use mpqkd::keyrate::binary_entropy;
use mpqkd::pairing::{pair_by_window, pair_strict, pairing_rate, Window};
use mpqkd::protosim::Tallies;

fn windows(bits: &[bool]) -> Vec<Window> {
    bits.iter()
        .map(|&b| if b { Window::Z } else { Window::X })
        .collect()
}

proptest! {
    #[test]
    fn strict_pairing_invariants(clicks in prop::collection::vec(any::<bool>(), 0..200),
                                 l in 1usize..50) {
        let p = pair_strict(&clicks, l);
        prop_assert!(p.check_invariants(l));
        let n_clicks = clicks.iter().filter(|&&c| c).count();
        prop_assert!(p.pairs.len() <= n_clicks / 2);
        for &(a, b) in &p.pairs {
            prop_assert!(clicks[a - 1] && clicks[b - 1]);
        }
    }

    #[test]
    fn window_pairing_invariants(clicks in prop::collection::vec(any::<bool>(), 0..200),
                                 wa in prop::collection::vec(any::<bool>(), 200..201),
                                 wb in prop::collection::vec(any::<bool>(), 200..201),
                                 l in 1usize..50) {
        let n = clicks.len();
        let (x, z) = pair_by_window(&clicks, &windows(&wa[..n]), &windows(&wb[..n]), l);
        prop_assert!(x.check_invariants(l));
        prop_assert!(z.check_invariants(l));
        // No round index may appear in both lists.
        let xs: std::collections::HashSet<usize> =
            x.pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        for &(a, b) in &z.pairs {
            prop_assert!(!xs.contains(&a) && !xs.contains(&b));
        }
    }

    #[test]
    fn window_z_pairing_equals_unbounded_strict(
        clicks in prop::collection::vec(any::<bool>(), 0..200),
        l in 1usize..50,
    ) {
        let n = clicks.len();
        let all_z = vec![Window::Z; n];
        let (_, z) = pair_by_window(&clicks, &all_z, &all_z, l);
        let unbounded = pair_strict(&clicks, usize::MAX / 2);
        prop_assert_eq!(z.pairs, unbounded.pairs);
    }

    #[test]
    fn config_key_value_round_trip(
        mu in 0.01f64..1.0,
        nu_frac in 0.01f64..0.99,
        p_z in 0.05f64..0.95,
        l in 1usize..10_000_000,
        distance in 0.0f64..500.0,
        slices_half in 1usize..32,
        f in 1.0f64..2.0,
        seed in any::<u64>(),
        reuse in any::<bool>(),
        montecarlo in any::<bool>(),
        cutoff in 1usize..30,
    ) {
        let mut cfg = ProtocolConfig::default();
        cfg.mu = mu;
        cfg.nu = mu * nu_frac;
        cfg.p_z = p_z;
        cfg.l = l;
        cfg.distance_km = distance;
        cfg.phase_slices = 2 * slices_half;
        cfg.f = f;
        cfg.seed = seed;
        cfg.cutoff = cutoff;
        if reuse {
            cfg.strategy = mpqkd::pairing::Strategy::ReuseX;
        }
        if montecarlo {
            cfg.mode = mpqkd::config::Mode::MonteCarlo;
        }
        prop_assert!(cfg.validate().is_ok());
        let text = cfg.to_key_values();
        let parsed = ProtocolConfig::parse(&text).unwrap();
        prop_assert_eq!(text, parsed.to_key_values());
    }

    #[test]
    fn pairing_rate_is_bounded_and_monotone_in_l(p in 1e-6f64..1.0, l in 1usize..1000) {
        let r = pairing_rate(p, l);
        prop_assert!(r >= 0.0 && r <= p / 2.0 + 1e-15);
        prop_assert!(pairing_rate(p, l + 1) >= r - 1e-15);
    }

    #[test]
    fn binary_entropy_shape(x in 0.0f64..=1.0) {
        let h = binary_entropy(x);
        prop_assert!((0.0..=1.0).contains(&h));
        prop_assert!((h - binary_entropy(1.0 - x)).abs() < 1e-12);
    }

    #[test]
    fn poisson_pmf_and_tail_partition_unity(mu in 1e-3f64..5.0, cutoff in 0usize..40) {
        let head: f64 = (0..=cutoff).map(|m| poisson_pmf(mu, m)).sum();
        prop_assert!((head + poisson_tail(mu, cutoff) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn coherent_gains_are_a_distribution(
        mu_a in 0.0f64..1.0,
        mu_b in 0.0f64..1.0,
        phase in 0.0f64..6.3,
        eta_d in 0.05f64..1.0,
        dist in 0.0f64..200.0,
    ) {
        let params = ChannelParams {
            distance_km: dist,
            attenuation_db_per_km: 0.2,
            detector_efficiency: eta_d,
            dark_count: 1e-8,
            visibility: 0.99,
        };
        let g = gain_coherent(&params, mu_a, mu_b, phase);
        for &p in &g {
            prop_assert!((-1e-12..=1.0).contains(&p));
        }
        prop_assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn window_pair_count_matches_brute_force(n in 0u64..200, w in 1u64..50) {
        let brute = (1..=n)
            .flat_map(|j| (j + 1..=n).filter(move |k| k - j <= w))
            .count() as f64;
        prop_assert_eq!(Tallies::window_pair_count(n, w), brute);
    }
}
