//! Sifting predicates g1/g2, phase-error assembly and the secret key rates.

use serde::{Deserialize, Serialize};

use crate::{MpqkdError, Result};

/// g1(x) = x1'x2x3x4' + x1x2'x3'x4 (detector pattern driving the X-basis flip).
pub fn g1(chi: [u8; 4]) -> u8 {
    let [a, b, c, d] = chi.map(|x| x & 1);
    ((1 - a) & b & c & (1 - d)) ^ (a & (1 - b) & (1 - c) & d)
}

/// g2(x) = x1'x2x3'x4 + x1x2'x3x4'.
pub fn g2(chi: [u8; 4]) -> u8 {
    let [a, b, c, d] = chi.map(|x| x & 1);
    ((1 - a) & b & (1 - c) & d) ^ (a & (1 - b) & c & (1 - d))
}

/// The set X = {chi : g1 + g2 = 1} of effective pair outcomes.
pub fn x_set() -> Vec<[u8; 4]> {
    (0..16usize)
        .map(crate::channel::chi_bits)
        .filter(|&chi| g1(chi) + g2(chi) == 1)
        .collect()
}

/// The set S of phase-error events (chi, m0, m1) with m in {+1,-1}:
/// m0*m1 = +1 on g1 outcomes, -1 on g2 outcomes.
pub fn s_set() -> Vec<([u8; 4], i8, i8)> {
    let mut out = Vec::new();
    for idx in 0..16usize {
        let chi = crate::channel::chi_bits(idx);
        if g1(chi) == 1 {
            out.push((chi, 1, 1));
            out.push((chi, -1, -1));
        } else if g2(chi) == 1 {
            out.push((chi, 1, -1));
            out.push((chi, -1, 1));
        }
    }
    out
}

/// S collapsed by the per-round U(1) covariance: (chi, m0, m1) and
/// (chi, -m0, -m1) share the same yield, leaving one class per chi in X.
pub fn s_set_classes() -> Vec<([u8; 4], i8)> {
    x_set()
        .into_iter()
        .map(|chi| (chi, if g1(chi) == 1 { 1 } else { -1 }))
        .collect()
}

/// Binary Shannon entropy in bits, with h(0) = h(1) = 0 by continuity.
pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Phase angle pi*Delta(m) with Delta(m) = (1-m)/2 for m in {+1,-1}.
fn phase_of(m: i8) -> f64 {
    if m == 1 {
        0.0
    } else {
        std::f64::consts::PI
    }
}

/// e11x = sum over S of (1/4) Y^x_{chi|1,1,piDelta(m0),piDelta(m1)} / s11z,
/// clamped to [0, 1/2].
///
/// `yx11` supplies Y^x_{chi|1,1,d0,d1}: true yields in oracle mode, or the
/// decoy upper bounds in estimation mode (then the result upper-bounds the
/// oracle value).
pub fn phase_error_rate<F>(yx11: F, s11z: f64) -> Result<f64>
where
    F: Fn([u8; 4], f64, f64) -> f64,
{
    if s11z <= 0.0 {
        return Err(MpqkdError::AbortRate);
    }
    let num: f64 = s_set()
        .into_iter()
        .map(|(chi, m0, m1)| 0.25 * yx11(chi, phase_of(m0), phase_of(m1)))
        .sum();
    Ok((num / s11z).clamp(0.0, 0.5))
}

/// R = r_p * r_z * { q11z [1 - h(e11x)] - f h(Ez) }, clamped at 0. The
/// starred rate uses the same shape with the reuse-strategy fractions substituted.
pub fn key_rate(r_p: f64, r_z: f64, q11z: f64, e11x: f64, ez: f64, f: f64) -> f64 {
    let bracket = q11z * (1.0 - binary_entropy(e11x)) - f * binary_entropy(ez);
    (r_p * r_z * bracket).max(0.0)
}

/// Everything the pipeline reports for one (distance, l) point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyRateReport {
    pub distance_km: f64,
    pub l: usize,
    pub r: f64,
    pub r_star: f64,
    pub e11x: f64,
    pub ez: f64,
    pub s11z: f64,
    pub q11z: f64,
    pub r_p: f64,
    pub r_z: f64,
    pub f: f64,
    pub p_eff: f64,
    pub p_eff_z: f64,
    /// r(p_eff,z, l): pairing rate under the reuse strategy.
    pub r_p_star: f64,
    pub r_z_star: f64,
    pub q11z_star: f64,
}

impl KeyRateReport {
    pub fn ratio(&self) -> f64 {
        if self.r > 0.0 {
            self.r_star / self.r
        } else {
            f64::NAN
        }
    }
}
