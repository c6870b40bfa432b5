//! Pairing strategies over announced click sequences and the analytic
//! pairing-efficiency quantities r(p,l), p_eff, p_eff,z.

use serde::{Deserialize, Serialize};

use crate::channel::{ZGains, CLASS_MU, CLASS_NU, CLASS_VAC};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    Strict,
    ReuseX,
    UnboundedZ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Window {
    Z,
    X,
}

/// Ordered disjoint pairs of 1-based round indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairList {
    pub strategy: Strategy,
    pub pairs: Vec<(usize, usize)>,
}

impl PairList {
    /// Checks the structural invariants: strictly increasing within a pair,
    /// mutual disjointness, interval bound where the strategy demands one.
    pub fn check_invariants(&self, l: usize) -> bool {
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in &self.pairs {
            if a >= b {
                return false;
            }
            if self.strategy != Strategy::UnboundedZ && b - a > l {
                return false;
            }
            if !seen.insert(a) || !seen.insert(b) {
                return false;
            }
        }
        true
    }
}

/// Baseline pairing: an open first element F is closed by the next effective
/// round i; if i - F <= l the pair is kept, otherwise BOTH rounds are
/// discarded.
pub fn pair_strict(clicks: &[bool], l: usize) -> PairList {
    assert!(l >= 1);
    let mut pairs = Vec::new();
    let mut open: Option<usize> = None;
    for (i0, &c) in clicks.iter().enumerate() {
        if !c {
            continue;
        }
        let i = i0 + 1;
        match open.take() {
            None => open = Some(i),
            Some(f) => {
                if i - f <= l {
                    pairs.push((f, i));
                }
                // exceeded interval: both dropped, open stays None
            }
        }
    }
    PairList {
        strategy: Strategy::Strict,
        pairs,
    }
}

/// Collective-attack pairing: X-X effective rounds pair within l with the
/// exceeded-interval round reused as the new first element; Z-Z effective
/// rounds pair with no interval bound; mixed windows are ignored here.
pub fn pair_by_window(
    clicks: &[bool],
    windows_a: &[Window],
    windows_b: &[Window],
    l: usize,
) -> (PairList, PairList) {
    assert!(l >= 1);
    assert_eq!(clicks.len(), windows_a.len());
    assert_eq!(clicks.len(), windows_b.len());
    let mut x_pairs = Vec::new();
    let mut z_pairs = Vec::new();
    let mut open_x: Option<usize> = None;
    let mut open_z: Option<usize> = None;
    for i0 in 0..clicks.len() {
        if !clicks[i0] {
            continue;
        }
        let i = i0 + 1;
        match (windows_a[i0], windows_b[i0]) {
            (Window::X, Window::X) => match open_x.take() {
                None => open_x = Some(i),
                Some(f) => {
                    if i - f <= l {
                        x_pairs.push((f, i));
                    } else {
                        open_x = Some(i); // reuse branch
                    }
                }
            },
            (Window::Z, Window::Z) => match open_z.take() {
                None => open_z = Some(i),
                Some(f) => z_pairs.push((f, i)),
            },
            _ => {} // mixed windows: retained upstream for decoy tallies only
        }
    }
    (
        PairList {
            strategy: Strategy::ReuseX,
            pairs: x_pairs,
        },
        PairList {
            strategy: Strategy::UnboundedZ,
            pairs: z_pairs,
        },
    )
}

/// Per-round pair-formation rate r(p,l) = [1/(p(1-(1-p)^l)) + 1/p]^{-1}.
pub fn pairing_rate(p: f64, l: usize) -> f64 {
    assert!((0.0..=1.0).contains(&p));
    assert!(l >= 1);
    if p <= 0.0 {
        return 0.0;
    }
    let gap = 1.0 - (1.0 - p).powi(l as i32);
    1.0 / (1.0 / (p * gap) + 1.0 / p)
}

/// Probability that a round is effective, weighted over window/bit choices.
pub fn p_effective(gains: &ZGains, p_z: f64) -> f64 {
    let p_x = 1.0 - p_z;
    let mut total = 0.0;
    // both Z windows: intensities lambda_i * mu, each lambda w.p. 1/2
    for a in [CLASS_VAC, CLASS_MU] {
        for b in [CLASS_VAC, CLASS_MU] {
            total += p_z * p_z / 4.0 * gains.effective(a, b);
        }
    }
    // one Z one X
    for a in [CLASS_VAC, CLASS_MU] {
        total += p_z * p_x / 2.0 * gains.effective(a, CLASS_NU);
        total += p_z * p_x / 2.0 * gains.effective(CLASS_NU, a);
    }
    // both X
    total += p_x * p_x * gains.effective(CLASS_NU, CLASS_NU);
    total
}

/// Probability that a round is an effective Z round (both parties in the Z
/// window): (p_z^2/4) sum over intensity patterns.
pub fn p_effective_z(gains: &ZGains, p_z: f64) -> f64 {
    let mut total = 0.0;
    for a in [CLASS_VAC, CLASS_MU] {
        for b in [CLASS_VAC, CLASS_MU] {
            total += p_z * p_z / 4.0 * gains.effective(a, b);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn clicks(bits: &[u8]) -> Vec<bool> {
        bits.iter().map(|&b| b != 0).collect()
    }

    #[test]
    fn strict_hand_traces() {
        let p = pair_strict(&clicks(&[1, 0, 1, 1, 0, 1]), 2);
        assert_eq!(p.pairs, vec![(1, 3), (4, 6)]);
        let p = pair_strict(&clicks(&[1, 0, 0, 0, 1]), 3);
        assert_eq!(p.pairs, Vec::<(usize, usize)>::new());
        let p = pair_strict(&clicks(&[0, 0, 0]), 5);
        assert!(p.pairs.is_empty());
    }

    #[test]
    fn window_split_hand_traces() {
        let zz = vec![Window::Z; 4];
        let (x, z) = pair_by_window(&clicks(&[1, 1, 1, 1]), &zz, &zz, 2);
        assert!(x.pairs.is_empty());
        assert_eq!(z.pairs, vec![(1, 2), (3, 4)]);

        let xx = vec![Window::X; 5];
        let (x, z) = pair_by_window(&clicks(&[1, 0, 0, 0, 1]), &xx, &xx, 3);
        assert!(x.pairs.is_empty(), "round 5 becomes the open first element");
        assert!(z.pairs.is_empty());

        let (x, _) = pair_by_window(&clicks(&[0, 0, 0]), &xx[..3].to_vec(), &xx[..3].to_vec(), 3);
        assert!(x.pairs.is_empty());
    }

    #[test]
    fn reuse_branch_pairs_later() {
        // After reuse, the reused round can close with a near neighbor.
        let xx = vec![Window::X; 7];
        let (x, _) = pair_by_window(&clicks(&[1, 0, 0, 0, 1, 0, 1]), &xx, &xx, 3);
        assert_eq!(x.pairs, vec![(5, 7)]);
    }

    #[test]
    fn split_z_equals_strict_unbounded_on_zz() {
        let w: Vec<Window> = [0, 1, 0, 0, 1, 0, 0, 1]
            .iter()
            .map(|&b| if b == 0 { Window::Z } else { Window::X })
            .collect();
        let c = clicks(&[1, 1, 0, 1, 1, 1, 0, 1]);
        let (_, z) = pair_by_window(&c, &w, &w, 2);
        // restrict to Z-Z effective rounds and pair with l = infinity
        let zz_clicks: Vec<bool> = c
            .iter()
            .zip(&w)
            .map(|(&c, &win)| c && win == Window::Z)
            .collect();
        let unbounded = pair_strict(&zz_clicks, usize::MAX / 2);
        assert_eq!(z.pairs, unbounded.pairs);
    }

    #[test]
    fn rate_plug_ins() {
        assert_abs_diff_eq!(pairing_rate(1.0, 1), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(pairing_rate(0.5, 1), 1.0 / 6.0, epsilon = 1e-15);
        // l -> infinity limit is p/2
        assert_abs_diff_eq!(pairing_rate(0.37, 100_000), 0.37 / 2.0, epsilon = 1e-12);
        assert_eq!(pairing_rate(0.0, 10), 0.0);
    }

    #[test]
    fn invariants_on_random_sequences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(1..400);
            let l = rng.random_range(1..20);
            let c: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
            let p = pair_strict(&c, l);
            assert!(p.check_invariants(l));
            let wa: Vec<Window> = (0..n)
                .map(|_| if rng.random_bool(0.5) { Window::Z } else { Window::X })
                .collect();
            let wb: Vec<Window> = (0..n)
                .map(|_| if rng.random_bool(0.5) { Window::Z } else { Window::X })
                .collect();
            let (x, z) = pair_by_window(&c, &wa, &wb, l);
            assert!(x.check_invariants(l));
            assert!(z.check_invariants(l));
        }
    }

    #[test]
    fn p_effective_trivial_limits() {
        // all-zero gains -> 0; p_z = 1 -> only the first (Z,Z) block survives
        let mut g = ZGains { q: [[[0.0; 4]; 3]; 3] };
        assert_eq!(p_effective(&g, 0.6), 0.0);
        g.q[CLASS_NU][CLASS_NU][1] = 0.8; // effective only in the X-X cell
        assert_abs_diff_eq!(p_effective(&g, 1.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p_effective(&g, 0.0), 0.8, epsilon = 1e-15);
        let mut g2 = ZGains { q: [[[0.0; 4]; 3]; 3] };
        g2.q[CLASS_MU][CLASS_MU][2] = 0.5;
        assert_abs_diff_eq!(p_effective(&g2, 1.0), 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(p_effective_z(&g2, 1.0), 0.125, epsilon = 1e-15);
    }
}
