//! Decoy-state estimators: single-photon yield bounds, s11z and the derived
//! fractions r_z, q11z (plus the starred reuse-strategy variants).

use serde::{Deserialize, Serialize};

use crate::channel::{GainTables, CLASS_MU, CLASS_VAC};
use crate::fock::poisson_pmf;
use crate::keyrate::{g1, x_set};
use crate::pairing::{p_effective, p_effective_z, pairing_rate};
use crate::{MpqkdError, Result};

/// All decoy-derived quantities for one parameter point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecoyEstimates {
    /// Upper bounds on Y^x_{chi|1,1,d0,d1}, indexed [d0][d1][chi] with
    /// d in {0,pi}.
    pub yx11_upper: [[[f64; 16]; 2]; 2],
    /// Lower bounds on Y^z_{chi|1,0} indexed by chi1*2+chi2.
    pub yz10_lower: [f64; 4],
    /// Lower bounds on Y^z_{chi|0,1}.
    pub yz01_lower: [f64; 4],
    pub s11z_lower: f64,
    pub r_z: f64,
    pub q11z: f64,
    pub r_p: f64,
    pub p_eff: f64,
    pub p_eff_z: f64,
    pub r_p_star: f64,
    pub r_z_star: f64,
    pub q11z_star: f64,
    /// Analytic Z-basis error rate implied by the gain tables.
    pub ez: f64,
    /// How many intermediate bound values had to be clamped into range.
    pub clamped: usize,
}

/// Decoy upper bound on Y^x_{chi|1,1}:
/// [Q_{2nu,2nu} - p_{2nu,0}(Q_{0,2nu}+Q_{2nu,0}) + p_{2nu,0}^2 Q_{0,0}] / p_{2nu,1}^2.
pub fn bound_yx11_upper(
    q_2n2n: f64,
    q_02n: f64,
    q_2n0: f64,
    q_00: f64,
    nu: f64,
) -> Result<(f64, bool)> {
    if nu <= 0.0 {
        return Err(MpqkdError::InvalidConfig {
            field: "nu".into(),
            reason: "must be > 0".into(),
        });
    }
    let p0 = poisson_pmf(2.0 * nu, 0);
    let p1 = poisson_pmf(2.0 * nu, 1);
    let raw = (q_2n2n - p0 * (q_02n + q_2n0) + p0 * p0 * q_00) / (p1 * p1);
    let clamped = !(0.0..=1.0).contains(&raw);
    Ok((raw.clamp(0.0, 1.0), clamped))
}

/// Decoy lower bound on Y^z_{chi|1,0} (or |0,1> with the gains of
/// the mirrored intensity pattern):
/// [p_{mu,2} Q_nu - p_{nu,2} Q_mu - (p_{mu,2} p_{nu,0} - p_{nu,2} p_{mu,0}) Q_0]
///   / (p_{mu,2} p_{nu,1} - p_{nu,2} p_{mu,1}).
pub fn bound_yz_single_lower(
    q_nu: f64,
    q_mu: f64,
    q_0: f64,
    mu: f64,
    nu: f64,
) -> Result<(f64, bool)> {
    if mu == nu {
        return Err(MpqkdError::DegenerateDecoy);
    }
    let den = poisson_pmf(mu, 2) * poisson_pmf(nu, 1) - poisson_pmf(nu, 2) * poisson_pmf(mu, 1);
    if den == 0.0 {
        return Err(MpqkdError::DegenerateDecoy);
    }
    let num = poisson_pmf(mu, 2) * q_nu - poisson_pmf(nu, 2) * q_mu
        - (poisson_pmf(mu, 2) * poisson_pmf(nu, 0) - poisson_pmf(nu, 2) * poisson_pmf(mu, 0))
            * q_0;
    let raw = num / den;
    let clamped = !(0.0..=1.0).contains(&raw);
    Ok((raw.clamp(0.0, 1.0), clamped))
}

/// The single-photon lambda patterns in X: (A'_j, A'_k, B'_j, B'_k) with one
/// photon per round. Round j carries (lambda1, lambda3), round k (lambda2,
/// lambda4).
const LAMBDA_G1: [[u8; 4]; 2] = [[0, 1, 1, 0], [1, 0, 0, 1]];

/// s11z from the single-photon yield maps: sum over chi in X and the
/// single-photon lambda patterns of (1/4) Y(chi_j | round j) Y(chi_k | round k).
/// With lower-bound inputs this lower-bounds the full single-photon sum (the remaining
/// lambda patterns contribute nonnegatively).
pub fn s11z(yz10: &[f64; 4], yz01: &[f64; 4]) -> f64 {
    let mut total = 0.0;
    for chi in x_set() {
        for lam in LAMBDA_G1 {
            let yj = match (lam[0], lam[2]) {
                (1, 0) => yz10[(chi[0] * 2 + chi[1]) as usize],
                _ => yz01[(chi[0] * 2 + chi[1]) as usize],
            };
            let yk = match (lam[1], lam[3]) {
                (1, 0) => yz10[(chi[2] * 2 + chi[3]) as usize],
                _ => yz01[(chi[2] * 2 + chi[3]) as usize],
            };
            total += 0.25 * yj * yk;
        }
    }
    total
}

/// r_z, q11z and the starred (reuse-strategy) variants from the gain tables.
///
/// The starred fraction is computed self-consistently: substituting r_z* and
/// p_eff,z into the q11z expression cancels the p_eff factors, so
/// q11z* = q11z (the literal double substitution would contradict the
/// long-distance ratio limit).
pub struct Fractions {
    pub r_z: f64,
    pub q11z: f64,
    pub r_z_star: f64,
    pub q11z_star: f64,
    /// Z-basis error rate implied by the same lambda-pattern weights.
    pub ez: f64,
}

pub fn fractions(
    p_eff: f64,
    p_eff_z: f64,
    gains: &GainTables,
    s11z: f64,
    p_z: f64,
    mu: f64,
) -> Fractions {
    let _ = mu;
    // sum over lambda in X of P(both rounds of the pair effective | lambda)
    let mut sx = 0.0;
    let mut w_g2 = 0.0;
    for lam in x_set() {
        let cls = |bit: u8| if bit == 1 { CLASS_MU } else { CLASS_VAC };
        let w = gains.z.effective(cls(lam[0]), cls(lam[2]))
            * gains.z.effective(cls(lam[1]), cls(lam[3]));
        sx += w;
        if g1(lam) == 0 {
            w_g2 += w;
        }
    }
    let pz4 = p_z.powi(4);
    let r_z = if p_eff > 0.0 {
        pz4 * sx / (16.0 * p_eff * p_eff)
    } else {
        0.0
    };
    let r_z_star = if p_eff_z > 0.0 {
        pz4 * sx / (16.0 * p_eff_z * p_eff_z)
    } else {
        0.0
    };
    let p1 = poisson_pmf(mu, 1);
    let q11z = if r_z > 0.0 && p_eff > 0.0 {
        (pz4 * p1 * p1 * s11z / (4.0 * r_z * p_eff * p_eff)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q11z_star = if r_z_star > 0.0 && p_eff_z > 0.0 {
        (pz4 * p1 * p1 * s11z / (4.0 * r_z_star * p_eff_z * p_eff_z)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let ez = if sx > 0.0 { w_g2 / sx } else { 0.0 };
    Fractions {
        r_z,
        q11z,
        r_z_star,
        q11z_star,
        ez,
    }
}

/// Runs the full decoy chain on a set of gain tables.
pub fn estimate(gains: &GainTables, mu: f64, nu: f64, p_z: f64, l: usize) -> Result<DecoyEstimates> {
    if mu == nu {
        return Err(MpqkdError::DegenerateDecoy);
    }
    let mut clamped = 0usize;
    let mut yz10_lower = [0.0f64; 4];
    let mut yz01_lower = [0.0f64; 4];
    for c1 in 0..2u8 {
        for c2 in 0..2u8 {
            let lr = (c1 * 2 + c2) as usize;
            let (lo, cl) = bound_yz_single_lower(
                gains.z.q[crate::channel::CLASS_NU][CLASS_VAC][lr],
                gains.z.q[CLASS_MU][CLASS_VAC][lr],
                gains.z.q[CLASS_VAC][CLASS_VAC][lr],
                mu,
                nu,
            )?;
            yz10_lower[lr] = lo;
            clamped += cl as usize;
            let (lo, cl) = bound_yz_single_lower(
                gains.z.q[CLASS_VAC][crate::channel::CLASS_NU][lr],
                gains.z.q[CLASS_VAC][CLASS_MU][lr],
                gains.z.q[CLASS_VAC][CLASS_VAC][lr],
                mu,
                nu,
            )?;
            yz01_lower[lr] = lo;
            clamped += cl as usize;
        }
    }
    let mut yx11_upper = [[[0.0f64; 16]; 2]; 2];
    for d0 in 0..2 {
        for d1 in 0..2 {
            for chi in 0..16 {
                let (up, cl) = bound_yx11_upper(
                    gains.x.q_2n2n[d0][d1][chi],
                    gains.x.q_02n[chi],
                    gains.x.q_2n0[chi],
                    gains.x.q_00[chi],
                    nu,
                )?;
                yx11_upper[d0][d1][chi] = up;
                clamped += cl as usize;
            }
        }
    }
    let s11z_lower = s11z(&yz10_lower, &yz01_lower);
    let p_eff = p_effective(&gains.z, p_z);
    let p_eff_z = p_effective_z(&gains.z, p_z);
    let fr = fractions(p_eff, p_eff_z, gains, s11z_lower, p_z, mu);
    Ok(DecoyEstimates {
        yx11_upper,
        yz10_lower,
        yz01_lower,
        s11z_lower,
        r_z: fr.r_z,
        q11z: fr.q11z,
        r_p: pairing_rate(p_eff, l),
        p_eff,
        p_eff_z,
        r_p_star: pairing_rate(p_eff_z, l),
        r_z_star: fr.r_z_star,
        q11z_star: fr.q11z_star,
        ez: fr.ez,
        clamped,
    })
}
