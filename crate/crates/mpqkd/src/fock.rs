//! Truncated Fock-space linear algebra: state construction, tensor products,
//! phase randomization and trace distances.
//!
//! Modes are indexed lexicographically; ancilla qubits are represented as
//! two-level Fock modes so that a single index scheme covers every state in
//! the crate. All matrices are dense (`nalgebra`), dimensions stay <= ~2000.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::{MpqkdError, Result};

const TAIL_BUDGET: f64 = 1e-12;

/// Pure state on a tensor product of truncated modes.
#[derive(Debug, Clone)]
pub struct FockState {
    /// Per-mode dimension (cutoff+1 for optical modes, 2 for ancilla qubits).
    dims: Vec<usize>,
    /// Amplitudes, lexicographic in the photon-number tuples.
    amps: Vec<C64>,
}

impl FockState {
    /// Builds a state from raw amplitudes and normalizes it.
    pub fn from_amplitudes(dims: Vec<usize>, mut amps: Vec<C64>) -> Self {
        let dim: usize = dims.iter().product();
        assert_eq!(amps.len(), dim, "amplitude vector length mismatch");
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            for a in &mut amps {
                *a /= norm;
            }
        }
        FockState { dims, amps }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn modes(&self) -> usize {
        self.dims.len()
    }

    /// Largest photon number representable in any single mode.
    pub fn cutoff(&self) -> usize {
        self.dims.iter().map(|d| d - 1).max().unwrap_or(0)
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Tensor product, `self` as the slower-varying factor.
    pub fn tensor(&self, other: &FockState) -> FockState {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        let mut amps = Vec::with_capacity(self.amps.len() * other.amps.len());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        FockState { dims, amps }
    }

    pub fn inner(&self, other: &FockState) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Projector |psi><psi| as a density operator.
    pub fn projector(&self) -> DensityOperator {
        let d = self.dim();
        let mut mat = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                mat[(i, j)] = self.amps[i] * self.amps[j].conj();
            }
        }
        DensityOperator {
            dims: self.dims.clone(),
            mat,
        }
    }

    /// Lexicographic index of a photon-number tuple.
    pub fn index_of(dims: &[usize], occ: &[usize]) -> usize {
        debug_assert_eq!(dims.len(), occ.len());
        let mut idx = 0;
        for (d, o) in dims.iter().zip(occ) {
            debug_assert!(o < d);
            idx = idx * d + o;
        }
        idx
    }

    /// Photon-number tuple of a lexicographic index.
    pub fn occ_of(dims: &[usize], mut idx: usize) -> Vec<usize> {
        let mut occ = vec![0; dims.len()];
        for k in (0..dims.len()).rev() {
            occ[k] = idx % dims[k];
            idx /= dims[k];
        }
        occ
    }
}

/// Mixed state (or any Hermitian operator) over the same index scheme.
#[derive(Debug, Clone)]
pub struct DensityOperator {
    dims: Vec<usize>,
    mat: DMatrix<C64>,
}

impl DensityOperator {
    pub fn from_matrix(dims: Vec<usize>, mat: DMatrix<C64>) -> Self {
        let dim: usize = dims.iter().product();
        assert_eq!(mat.nrows(), dim);
        assert_eq!(mat.ncols(), dim);
        DensityOperator { dims, mat }
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let dim: usize = dims.iter().product();
        DensityOperator {
            dims,
            mat: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).sum()
    }

    /// Max |rho - rho^dagger| entry, used by the Hermiticity invariant.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim() {
            for j in i..self.dim() {
                worst = worst.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Adds w * |psi><psi| in place (rank-one accumulation).
    pub fn accumulate_projector(&mut self, psi: &FockState, w: f64) {
        assert_eq!(psi.dim(), self.dim());
        // Sparse accumulation: most constructed families have few nonzeros.
        let nz: Vec<(usize, C64)> = psi
            .amps
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm_sqr() > 0.0)
            .map(|(i, a)| (i, *a))
            .collect();
        for &(i, ai) in &nz {
            for &(j, aj) in &nz {
                self.mat[(i, j)] += w * ai * aj.conj();
            }
        }
    }

    /// Eigenvalues (Hermitian part), ascending. Computed blockwise over the
    /// support graph, which is exact because zero off-block entries decouple
    /// the blocks.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let (mut ev, _) = blocked_hermitian_eigenvalues(&self.mat, 0.0);
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }
}

/// Eigenvalues of the Hermitian part of `m`, block by block over connected
/// components of the support graph (entries with norm > `link` connect their
/// indices). Also returns the squared Frobenius norm of the dropped
/// off-diagonal entries, for rigorous error accounting when `link > 0`.
fn blocked_hermitian_eigenvalues(m: &DMatrix<C64>, link: f64) -> (Vec<f64>, f64) {
    let dim = m.nrows();
    let mut parent: Vec<usize> = (0..dim).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut dropped_fro2 = 0.0f64;
    for i in 0..dim {
        for j in (i + 1)..dim {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            let norm = v.norm();
            if norm > link {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            } else {
                dropped_fro2 += 2.0 * norm * norm;
            }
        }
    }
    let mut comps: std::collections::HashMap<usize, Vec<usize>> = std::collections::HashMap::new();
    for i in 0..dim {
        let r = find(&mut parent, i);
        comps.entry(r).or_default().push(i);
    }
    let blocks: Vec<Vec<usize>> = comps.into_values().collect();
    let ev: Vec<f64> = blocks
        .par_iter()
        .flat_map(|idx| {
            if idx.len() == 1 {
                return vec![m[(idx[0], idx[0])].re];
            }
            let k = idx.len();
            let sub = DMatrix::from_fn(k, k, |p, q| {
                (m[(idx[p], idx[q])] + m[(idx[q], idx[p])].conj()) * 0.5
            });
            sub.symmetric_eigen().eigenvalues.iter().copied().collect()
        })
        .collect();
    (ev, dropped_fro2)
}

/// Poisson pmf e^{-mu} mu^m / m!, in log space for large m.
pub fn poisson_pmf(mu: f64, m: usize) -> f64 {
    assert!(mu >= 0.0, "mean photon number must be >= 0");
    if mu == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    if m <= 20 {
        let mut fact = 1.0;
        for k in 1..=m {
            fact *= k as f64;
        }
        (-mu).exp() * mu.powi(m as i32) / fact
    } else {
        let mut log_fact = 0.0;
        for k in 1..=m {
            log_fact += (k as f64).ln();
        }
        (-mu + m as f64 * mu.ln() - log_fact).exp()
    }
}

/// Poisson tail mass strictly above `cutoff`.
pub fn poisson_tail(mu: f64, cutoff: usize) -> f64 {
    let head: f64 = (0..=cutoff).map(|m| poisson_pmf(mu, m)).sum();
    (1.0 - head).max(0.0)
}

/// Single-mode coherent state |alpha> truncated at `cutoff`.
pub fn coherent_state(alpha: C64, cutoff: usize) -> Result<FockState> {
    let mu = alpha.norm_sqr();
    let tail = poisson_tail(mu, cutoff);
    if tail >= TAIL_BUDGET {
        return Err(MpqkdError::Truncation {
            intensity: mu,
            cutoff,
            tail,
        });
    }
    let mut amps = Vec::with_capacity(cutoff + 1);
    let mut cur = C64::new((-mu / 2.0).exp(), 0.0);
    amps.push(cur);
    for m in 1..=cutoff {
        cur *= alpha / C64::new((m as f64).sqrt(), 0.0);
        amps.push(cur);
    }
    Ok(FockState::from_amplitudes(vec![cutoff + 1], amps))
}

/// Two-mode m-photon state |gamma_{m,delta}> = 2^{-m/2} sum_r sqrt(C(m,r)) e^{ir delta} |r, m-r>.
pub fn gamma_state(m: usize, delta: f64, cutoff: usize) -> Result<FockState> {
    if m > cutoff {
        return Err(MpqkdError::PhotonAboveCutoff { m, cutoff });
    }
    let n = cutoff + 1;
    let mut amps = vec![C64::new(0.0, 0.0); n * n];
    for (r, c) in gamma_coefficients(m, delta).into_iter().enumerate() {
        amps[r * n + (m - r)] = c;
    }
    Ok(FockState::from_amplitudes(vec![n, n], amps))
}

/// Coefficient of |r, m-r> in |gamma_{m,delta}>, r = 0..=m. Exactly normalized.
pub fn gamma_coefficients(m: usize, delta: f64) -> Vec<C64> {
    let half = 0.5f64.powi(m as i32);
    (0..=m)
        .map(|r| {
            let c = (binomial(m, r) * half).sqrt();
            C64::from_polar(c, r as f64 * delta)
        })
        .collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut v = 1.0f64;
    for i in 0..k {
        v = v * (n - i) as f64 / (i + 1) as f64;
    }
    v
}

/// Uniform-Riemann phase integral (1/2pi) \int P(psi(theta)) dtheta.
///
/// The integrand is a trigonometric polynomial of degree <= 2*cutoff in
/// theta, so the sum is exact (to rounding) once `grid_points` exceeds the
/// degree; 512 covers cutoff 20 comfortably.
pub fn phase_randomize<F>(state_family: F, grid_points: usize) -> DensityOperator
where
    F: Fn(f64) -> FockState + Sync,
{
    assert!(
        grid_points >= 64 && grid_points.is_power_of_two(),
        "grid_points must be >= 64 and a power of two"
    );
    let step = 2.0 * std::f64::consts::PI / grid_points as f64;
    let states: Vec<FockState> = (0..grid_points)
        .into_par_iter()
        .map(|g| state_family(g as f64 * step))
        .collect();
    let dims = states[0].dims.to_vec();
    let dim = states[0].dim();
    for s in &states {
        assert_eq!(s.dims, dims, "state family changed mode structure");
    }
    let w = 1.0 / grid_points as f64;
    // rho = (1/G) Psi Psi^dagger, accumulated row-parallel.
    let rows: Vec<Vec<C64>> = (0..dim)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![C64::new(0.0, 0.0); dim];
            for s in &states {
                let ai = s.amps[i] * w;
                if ai.norm_sqr() == 0.0 {
                    continue;
                }
                for (j, r) in row.iter_mut().enumerate() {
                    *r += ai * s.amps[j].conj();
                }
            }
            row
        })
        .collect();
    let mat = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
    DensityOperator { dims, mat }
}

/// Four-mode dims (ancilla A'_j, ancilla A'_k, optical A_j, optical A_k).
fn four_mode_dims(cutoff: usize) -> Vec<usize> {
    vec![2, 2, cutoff + 1, cutoff + 1]
}

fn check_tail(intensity: f64, cutoff: usize) -> Result<()> {
    let tail = poisson_tail(intensity, cutoff);
    if tail >= TAIL_BUDGET {
        return Err(MpqkdError::Truncation {
            intensity,
            cutoff,
            tail,
        });
    }
    Ok(())
}

/// Analytic mixture sum_m p_{mu,m} P(|phi_{1m,delta}>) with
/// |phi_{1m,delta}> = (|01>|0m> + e^{im delta} |10>|m0>)/sqrt(2).
pub fn analytic_rho1(mu: f64, delta: f64, cutoff: usize) -> Result<DensityOperator> {
    check_tail(mu, cutoff)?;
    let dims = four_mode_dims(cutoff);
    let mut rho = DensityOperator::zeros(dims.clone());
    let n = cutoff + 1;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for m in 0..=cutoff {
        let mut amps = vec![C64::new(0.0, 0.0); 4 * n * n];
        amps[FockState::index_of(&dims, &[0, 1, 0, m])] = C64::new(s, 0.0);
        amps[FockState::index_of(&dims, &[1, 0, m, 0])] = C64::from_polar(s, m as f64 * delta);
        let psi = FockState { dims: dims.clone(), amps };
        rho.accumulate_projector(&psi, poisson_pmf(mu, m));
    }
    Ok(rho)
}

/// Analytic mixture sum_m p_{2nu,m} P(|phi_{1m,delta}>) with
/// |phi_{1m,delta}> = (1/2)[(|00>+(-1)^m|11>)|gamma_{m,delta}>
///                        + (|10>+(-1)^m|01>)|gamma_{m,delta+pi}>].
pub fn analytic_sigma1(nu: f64, delta: f64, cutoff: usize) -> Result<DensityOperator> {
    check_tail(2.0 * nu, cutoff)?;
    let dims = four_mode_dims(cutoff);
    let mut rho = DensityOperator::zeros(dims.clone());
    let n = cutoff + 1;
    for m in 0..=cutoff {
        let g0 = gamma_coefficients(m, delta);
        let gp = gamma_coefficients(m, delta + std::f64::consts::PI);
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let mut amps = vec![C64::new(0.0, 0.0); 4 * n * n];
        for r in 0..=m {
            let occ = [r, m - r];
            amps[FockState::index_of(&dims, &[0, 0, occ[0], occ[1]])] += 0.5 * g0[r];
            amps[FockState::index_of(&dims, &[1, 1, occ[0], occ[1]])] += 0.5 * sign * g0[r];
            amps[FockState::index_of(&dims, &[1, 0, occ[0], occ[1]])] += 0.5 * gp[r];
            amps[FockState::index_of(&dims, &[0, 1, occ[0], occ[1]])] += 0.5 * sign * gp[r];
        }
        let psi = FockState { dims: dims.clone(), amps };
        rho.accumulate_projector(&psi, poisson_pmf(2.0 * nu, m));
    }
    Ok(rho)
}

/// Trace distance (1/2)||a - b||_1, computed blockwise.
///
/// The difference is partitioned into connected components of its support
/// graph (entries above 1e-13 link indices); each component is diagonalized
/// densely and the dropped sub-threshold entries contribute a rigorous
/// sqrt(dim)*Frobenius upper-bound term, so the returned value is an upper
/// bound tight to ~1e-10.
pub fn trace_distance(a: &DensityOperator, b: &DensityOperator) -> f64 {
    assert_eq!(a.dims, b.dims);
    let dim = a.dim();
    let diff = &a.mat - &b.mat;
    const LINK: f64 = 1e-13;
    let (ev, dropped_fro2) = blocked_hermitian_eigenvalues(&diff, LINK);
    let total: f64 = ev.iter().map(|e| e.abs()).sum();
    0.5 * (total + (dim as f64).sqrt() * dropped_fro2.sqrt())
}


// Expose the phase-integration verification families for the CLI and acceptance
// tests without duplicating the construction logic.
/// theta-family of Z-window extended states for a pair at fixed delta.
pub fn rho1_phase_family(mu: f64, delta: f64, cutoff: usize) -> impl Fn(f64) -> FockState + Sync {
    move |th: f64| {
        let n = cutoff + 1;
        let dims = four_mode_dims(cutoff);
        let coh_k = coherent_state(C64::from_polar(mu.sqrt(), th), cutoff).unwrap();
        let coh_j = coherent_state(C64::from_polar(mu.sqrt(), th + delta), cutoff).unwrap();
        let mut amps = vec![C64::new(0.0, 0.0); 4 * n * n];
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for m in 0..n {
            amps[FockState::index_of(&dims, &[0, 1, 0, m])] = s * coh_k.amplitudes()[m];
            amps[FockState::index_of(&dims, &[1, 0, m, 0])] = s * coh_j.amplitudes()[m];
        }
        FockState::from_amplitudes(dims, amps)
    }
}

/// theta-family of X-window extended product states for a pair at fixed delta.
pub fn sigma1_phase_family(nu: f64, delta: f64, cutoff: usize) -> impl Fn(f64) -> FockState + Sync {
    move |th: f64| {
        let aj = [
            coherent_state(C64::from_polar(nu.sqrt(), th + delta), cutoff).unwrap(),
            coherent_state(-C64::from_polar(nu.sqrt(), th + delta), cutoff).unwrap(),
        ];
        let ak = [
            coherent_state(C64::from_polar(nu.sqrt(), th), cutoff).unwrap(),
            coherent_state(-C64::from_polar(nu.sqrt(), th), cutoff).unwrap(),
        ];
        let n = cutoff + 1;
        let dims = four_mode_dims(cutoff);
        let mut amps = vec![C64::new(0.0, 0.0); 4 * n * n];
        for s in 0..2usize {
            for t in 0..2usize {
                for p in 0..n {
                    for q in 0..n {
                        amps[FockState::index_of(&dims, &[s, t, p, q])] +=
                            0.5 * aj[s].amplitudes()[p] * ak[t].amplitudes()[q];
                    }
                }
            }
        }
        FockState::from_amplitudes(dims, amps)
    }
}
