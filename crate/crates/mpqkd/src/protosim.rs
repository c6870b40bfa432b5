//! Event-level Monte Carlo of the protocol and the estimation pipeline that
//! turns gain tables (analytic or tallied) into a key-rate report.
//!
//! Monte Carlo batches run independently under per-batch ChaCha streams and
//! merge by pure count addition, so tallies are bit-identical for a given
//! (config, seed) regardless of thread scheduling. Per-round click outcomes
//! are sampled from the closed-form coherent gains; the Fock POVM path is
//! reserved for oracle computations (the two agree to 1e-8 by the channel
//! invariants).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    build_round_povm, chi_index, gain_coherent, gains_q, yield_x_all, yield_z, GainTables,
    RoundPovm, XGains, ZGains,
};
use crate::config::ProtocolConfig;
use crate::decoy;
use crate::keyrate::{g1, key_rate, phase_error_rate, x_set, KeyRateReport};
use crate::pairing::{Strategy, Window};
use crate::Result;

const BATCH: u64 = 1 << 16;
/// Lookback of the estimation-only virtual pairing pass.
const VIRTUAL_WINDOW: u64 = 2000;

/// One protocol round: preparation choices plus the announced outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub window_a: Window,
    pub window_b: Window,
    pub bit_a: u8,
    pub bit_b: u8,
    /// Phase slice indices in 0..D.
    pub slice_a: u16,
    pub slice_b: u16,
    /// Intensities actually sent (consistent with window/bit).
    pub intensity_a: f64,
    pub intensity_b: f64,
    /// Announcement (L, R).
    pub outcome: (u8, u8),
}

impl RoundRecord {
    pub fn effective(&self) -> bool {
        self.outcome.0 ^ self.outcome.1 == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairClass {
    Z,
    X,
    Mismatch,
}

/// A sifted pair with its key-mapping products.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub j: usize,
    pub k: usize,
    pub class: PairClass,
    /// For Z pairs: a_j ^ a_k and b_j ^ b_k (the POVM patterns).
    pub basis_a: u8,
    pub basis_b: u8,
    pub chi: [u8; 4],
    /// Slice differences mod D.
    pub delta_a: u16,
    pub delta_b: u16,
    /// Key bits where defined (Z basis, or X pairs surviving the delta sift).
    pub alpha: Option<u8>,
    pub beta: Option<u8>,
    pub flip_applied: bool,
}

/// Key-mapping step applied to one pair of announced rounds.
pub fn map_pair(rounds: &[RoundRecord], j: usize, k: usize, d_slices: u16) -> PairRecord {
    let rj = &rounds[j - 1];
    let rk = &rounds[k - 1];
    let chi = [rj.outcome.0, rj.outcome.1, rk.outcome.0, rk.outcome.1];
    let d = d_slices;
    let delta_a = (rj.slice_a + d - rk.slice_a) % d;
    let delta_b = (rj.slice_b + d - rk.slice_b) % d;
    let class = match (
        rj.window_a == Window::Z && rk.window_a == Window::Z,
        rj.window_b == Window::Z && rk.window_b == Window::Z,
        rj.window_a == Window::X && rk.window_a == Window::X,
        rj.window_b == Window::X && rk.window_b == Window::X,
    ) {
        (true, true, _, _) => PairClass::Z,
        (_, _, true, true) => PairClass::X,
        _ => PairClass::Mismatch,
    };
    let mut rec = PairRecord {
        j,
        k,
        class,
        basis_a: rj.bit_a ^ rk.bit_a,
        basis_b: rj.bit_b ^ rk.bit_b,
        chi,
        delta_a,
        delta_b,
        alpha: None,
        beta: None,
        flip_applied: false,
    };
    match class {
        PairClass::Z => {
            // Z basis only when both POVM patterns are 1.
            if rec.basis_a == 1 && rec.basis_b == 1 {
                rec.alpha = Some(rj.bit_a & (1 - rk.bit_a));
                rec.beta = Some((1 - rj.bit_b) & rk.bit_b);
            }
        }
        PairClass::X => {
            // keep only when delta_a = delta_b mod pi (slice arithmetic)
            let half = d / 2;
            if delta_a % half == delta_b % half {
                let alpha = rj.bit_a ^ rk.bit_a ^ 1; // a_j a_k + a_j' a_k'
                let mut beta = rj.bit_b ^ rk.bit_b ^ 1;
                let mut flipped = false;
                if delta_a != delta_b {
                    // |delta_a - delta_b| = pi
                    beta ^= 1;
                    flipped = true;
                }
                if g1(chi) == 1 {
                    beta ^= 1;
                    flipped = !flipped;
                }
                rec.alpha = Some(alpha);
                rec.beta = Some(beta);
                rec.flip_applied = flipped;
            }
        }
        PairClass::Mismatch => {}
    }
    rec
}

/// All persisted counts from one simulation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tallies {
    pub version: u32,
    pub config_echo: String,
    pub seed: u64,
    pub n_rounds: u64,
    /// D used for slice tallies.
    pub d_slices: u16,
    /// Virtual-pass lookback actually used.
    pub virtual_window: u64,
    /// Per (a_class*3 + b_class) x (L*2+R) round counts; classes 0=vac,1=nu,2=mu.
    pub round_counts: Vec<[u64; 4]>,
    pub effective_rounds: u64,
    /// Rounds where both parties chose the Z window and the round is effective.
    pub effective_zz_rounds: u64,
    /// Virtual-pass numerators: X-X pairs by effective slice difference and chi.
    pub vp_xx: Vec<[u64; 16]>,
    /// Virtual-pass numerators: Alice vacuum-Z / Bob X pairs by chi.
    pub vp_a0x: [u64; 16],
    /// Bob vacuum-Z / Alice X.
    pub vp_x0b: [u64; 16],
    /// Both parties vacuum-Z.
    pub vp_vac: [u64; 16],
    /// Real pairing outcomes under the configured strategy.
    pub pairs: u64,
    pub z_window_pairs: u64,
    pub z_basis_pairs: u64,
    pub z_basis_errors: u64,
    pub x_sifted_pairs: u64,
    pub x_basis_errors: u64,
    pub mismatch_pairs: u64,
}

impl Tallies {
    fn new(cfg: &ProtocolConfig) -> Self {
        Tallies {
            version: 1,
            config_echo: cfg.to_key_values(),
            seed: cfg.seed,
            n_rounds: cfg.rounds,
            d_slices: cfg.phase_slices as u16,
            virtual_window: VIRTUAL_WINDOW.min(cfg.l as u64),
            round_counts: vec![[0; 4]; 9],
            effective_rounds: 0,
            effective_zz_rounds: 0,
            vp_xx: vec![[0; 16]; cfg.phase_slices],
            vp_a0x: [0; 16],
            vp_x0b: [0; 16],
            vp_vac: [0; 16],
            pairs: 0,
            z_window_pairs: 0,
            z_basis_pairs: 0,
            z_basis_errors: 0,
            x_sifted_pairs: 0,
            x_basis_errors: 0,
            mismatch_pairs: 0,
        }
    }

    pub fn class_total(&self, class: usize) -> u64 {
        self.round_counts[class].iter().sum()
    }

    /// Ordered in-window round pairs (j < k, k - j <= W) among n rounds.
    pub fn window_pair_count(n: u64, w: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let n = n as f64;
        let w = w as f64;
        if n - 1.0 <= w {
            n * (n - 1.0) / 2.0
        } else {
            w * n - w * (w + 1.0) / 2.0
        }
    }
}

/// Compact effective-round event used by the sequential pairing/tally pass.
#[derive(Debug, Clone, Copy)]
struct Event {
    idx: u64,
    rec: RoundRecord,
}

fn sample_batch(
    cfg: &ProtocolConfig,
    dist: &[[Vec<[f64; 4]>; 3]; 3],
    batch_index: u64,
    start: u64,
    count: u64,
) -> (Tallies, Vec<Event>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(batch_index);
    let d = cfg.phase_slices as u64;
    let half = (d / 2) as u16;
    let mut t = Tallies::new(cfg);
    let mut events = Vec::new();
    for r in 0..count {
        let w1: u64 = rng.random();
        let w2: u64 = rng.random();
        let u: f64 = rng.random();
        let za = ((w1 >> 32) as f64) / 4294967296.0 < cfg.p_z;
        let zb = ((w1 & 0xffff_ffff) as f64) / 4294967296.0 < cfg.p_z;
        let bit_a = (w2 & 1) as u8;
        let bit_b = ((w2 >> 1) & 1) as u8;
        let slice_a = ((w2 >> 2) % d) as u16;
        let slice_b = ((w2 >> 32) % d) as u16;
        let class_a = if za { 2 * bit_a as usize } else { 1 };
        let class_b = if zb { 2 * bit_b as usize } else { 1 };
        // effective phase index: X-window bit flips add pi = D/2 slices
        let pa = slice_a + if za { 0 } else { bit_a as u16 * half };
        let pb = slice_b + if zb { 0 } else { bit_b as u16 * half };
        let dphi = ((pa as u32 + 2 * d as u32 - pb as u32) % d as u32) as usize;
        let cdf = &dist[class_a][class_b][dphi];
        let mut outcome = 3usize;
        for (o, &edge) in cdf.iter().enumerate().take(3) {
            if u < edge {
                outcome = o;
                break;
            }
        }
        let lr = ((outcome >> 1) as u8, (outcome & 1) as u8);
        t.round_counts[class_a * 3 + class_b][outcome] += 1;
        if lr.0 ^ lr.1 == 1 {
            t.effective_rounds += 1;
            if za && zb {
                t.effective_zz_rounds += 1;
            }
            let intensity = |z: bool, bit: u8| {
                if z {
                    if bit == 1 {
                        cfg.mu
                    } else {
                        0.0
                    }
                } else {
                    cfg.nu
                }
            };
            events.push(Event {
                idx: start + r,
                rec: RoundRecord {
                    window_a: if za { Window::Z } else { Window::X },
                    window_b: if zb { Window::Z } else { Window::X },
                    bit_a,
                    bit_b,
                    slice_a,
                    slice_b,
                    intensity_a: intensity(za, bit_a),
                    intensity_b: intensity(zb, bit_b),
                    outcome: lr,
                },
            });
        }
    }
    (t, events)
}

fn merge(into: &mut Tallies, from: &Tallies) {
    for (a, b) in into.round_counts.iter_mut().zip(&from.round_counts) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += *y;
        }
    }
    into.effective_rounds += from.effective_rounds;
    into.effective_zz_rounds += from.effective_zz_rounds;
}

/// Runs the Monte Carlo and returns the merged tallies.
pub fn simulate(cfg: &ProtocolConfig, seed: u64) -> Result<Tallies> {
    let mut cfg = cfg.clone();
    cfg.seed = seed;
    cfg.validate()?;
    let n = cfg.rounds;
    let d = cfg.phase_slices;
    // per-(class, class, phase-difference) outcome CDFs from the closed form
    let params = cfg.channel_params();
    let class_intensity = [0.0, cfg.nu, cfg.mu];
    let mut dist: [[Vec<[f64; 4]>; 3]; 3] = Default::default();
    for (ai, &ia) in class_intensity.iter().enumerate() {
        for (bi, &ib) in class_intensity.iter().enumerate() {
            dist[ai][bi] = (0..d)
                .map(|k| {
                    let dphi = 2.0 * std::f64::consts::PI * k as f64 / d as f64;
                    let g = gain_coherent(&params, ia, ib, dphi);
                    // cumulative edges for outcomes 0..3
                    [g[0], g[0] + g[1], g[0] + g[1] + g[2], 1.0]
                })
                .collect();
        }
    }
    let n_batches = n.div_ceil(BATCH);
    let results: Vec<(Tallies, Vec<Event>)> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let start = b * BATCH;
            let count = BATCH.min(n - start);
            sample_batch(&cfg, &dist, b, start, count)
        })
        .collect();
    let mut tallies = Tallies::new(&cfg);
    let mut events: Vec<Event> = Vec::new();
    for (t, ev) in results {
        merge(&mut tallies, &t);
        events.extend(ev);
    }
    sequential_pass(&cfg, &mut tallies, &events);
    Ok(tallies)
}

/// Real pairing, key mapping and the virtual estimation pass over the
/// (sparse) effective-round events.
fn sequential_pass(cfg: &ProtocolConfig, t: &mut Tallies, events: &[Event]) {
    let d = cfg.phase_slices as u16;
    let half = d / 2;
    let w = t.virtual_window;

    // ---- real pairing ----
    // Pairing consumes only announcement data (and window labels for the reuse strategy);
    // feed the strategy the compact effective-event stream.
    let pair_indices: Vec<(usize, usize)> = match cfg.strategy {
        Strategy::Strict => {
            let mut out = Vec::new();
            let mut open: Option<usize> = None;
            for (ei, e) in events.iter().enumerate() {
                match open.take() {
                    None => open = Some(ei),
                    Some(f) => {
                        if e.idx - events[f].idx <= cfg.l as u64 {
                            out.push((f, ei));
                        }
                    }
                }
            }
            out
        }
        _ => {
            let mut out = Vec::new();
            let (mut open_x, mut open_z): (Option<usize>, Option<usize>) = (None, None);
            for (ei, e) in events.iter().enumerate() {
                match (e.rec.window_a, e.rec.window_b) {
                    (Window::X, Window::X) => match open_x.take() {
                        None => open_x = Some(ei),
                        Some(f) => {
                            if e.idx - events[f].idx <= cfg.l as u64 {
                                out.push((f, ei));
                            } else {
                                open_x = Some(ei);
                            }
                        }
                    },
                    (Window::Z, Window::Z) => match open_z.take() {
                        None => open_z = Some(ei),
                        Some(f) => out.push((f, ei)),
                    },
                    _ => {}
                }
            }
            out.sort_by_key(|&(f, _)| events[f].idx);
            out
        }
    };
    for &(fj, fk) in &pair_indices {
        let (ej, ek) = (&events[fj], &events[fk]);
        let rounds = [ej.rec, ek.rec];
        let rec = map_pair(&rounds, 1, 2, d);
        t.pairs += 1;
        match rec.class {
            PairClass::Z => {
                t.z_window_pairs += 1;
                if let (Some(a), Some(b)) = (rec.alpha, rec.beta) {
                    t.z_basis_pairs += 1;
                    if a != b {
                        t.z_basis_errors += 1;
                    }
                }
            }
            PairClass::X => {
                if let (Some(a), Some(b)) = (rec.alpha, rec.beta) {
                    t.x_sifted_pairs += 1;
                    if a != b {
                        t.x_basis_errors += 1;
                    }
                }
            }
            PairClass::Mismatch => t.mismatch_pairs += 1,
        }
    }

    // ---- virtual all-pairs estimation pass ----
    // Family membership of a single round.
    let fam = |r: &RoundRecord| -> Option<usize> {
        let a_vac = r.window_a == Window::Z && r.bit_a == 0;
        let b_vac = r.window_b == Window::Z && r.bit_b == 0;
        match (r.window_a == Window::X, r.window_b == Window::X) {
            (true, true) => Some(0),
            (false, true) if a_vac => Some(1),
            (true, false) if b_vac => Some(2),
            (false, false) if a_vac && b_vac => Some(3),
            _ => None,
        }
    };
    let mut queues: [std::collections::VecDeque<usize>; 4] = Default::default();
    for (ei, e) in events.iter().enumerate() {
        let Some(f) = fam(&e.rec) else { continue };
        let q = &mut queues[f];
        while let Some(&front) = q.front() {
            if e.idx - events[front].idx > w {
                q.pop_front();
            } else {
                break;
            }
        }
        for &si in q.iter() {
            let s = &events[si];
            let chi = chi_index([
                s.rec.outcome.0,
                s.rec.outcome.1,
                e.rec.outcome.0,
                e.rec.outcome.1,
            ]);
            match f {
                0 => {
                    // effective phase difference with X bits folded in as pi
                    let pa_j = s.rec.slice_a + s.rec.bit_a as u16 * half;
                    let pa_k = e.rec.slice_a + e.rec.bit_a as u16 * half;
                    let pb_j = s.rec.slice_b + s.rec.bit_b as u16 * half;
                    let pb_k = e.rec.slice_b + e.rec.bit_b as u16 * half;
                    let da = (pa_j + 2 * d - pa_k) % d;
                    let db = (pb_j + 2 * d - pb_k) % d;
                    let dd = ((da + d - db) % d) as usize;
                    t.vp_xx[dd][chi] += 1;
                }
                1 => t.vp_a0x[chi] += 1,
                2 => t.vp_x0b[chi] += 1,
                _ => t.vp_vac[chi] += 1,
            }
        }
        q.push_back(ei);
    }
}

/// Gain tables reconstructed from Monte Carlo tallies.
pub fn gains_from_tallies(t: &Tallies, cfg: &ProtocolConfig) -> GainTables {
    let mut z = ZGains {
        q: [[[0.0; 4]; 3]; 3],
    };
    for a in 0..3 {
        for b in 0..3 {
            let total = t.class_total(a * 3 + b);
            if total > 0 {
                for lr in 0..4 {
                    z.q[a][b][lr] = t.round_counts[a * 3 + b][lr] as f64 / total as f64;
                }
            }
        }
    }
    // Virtual-pass denominators: exact in-window pair count times the exact
    // preparation-class probability (the sampling law is known).
    let p_x = 1.0 - cfg.p_z;
    let p_zvac = cfg.p_z / 2.0;
    let d = cfg.phase_slices as f64;
    let total_pairs = Tallies::window_pair_count(t.n_rounds, t.virtual_window);
    let den_xx = total_pairs * p_x.powi(4) / d; // per delta slice
    let den_a0x = total_pairs * (p_zvac * p_x).powi(2);
    let den_vac = total_pairs * p_zvac.powi(4);
    let mut x = XGains {
        q_2n2n: [[[0.0; 16]; 2]; 2],
        q_02n: [0.0; 16],
        q_2n0: [0.0; 16],
        q_00: [0.0; 16],
    };
    let half = cfg.phase_slices / 2;
    if den_xx > 0.0 {
        for chi in 0..16 {
            let q_same = t.vp_xx[0][chi] as f64 / den_xx;
            let q_diff = t.vp_xx[half][chi] as f64 / den_xx;
            // only the delta difference matters: fill both diagonal cells
            x.q_2n2n[0][0][chi] = q_same;
            x.q_2n2n[1][1][chi] = q_same;
            x.q_2n2n[0][1][chi] = q_diff;
            x.q_2n2n[1][0][chi] = q_diff;
        }
    }
    if den_a0x > 0.0 {
        for chi in 0..16 {
            x.q_02n[chi] = t.vp_a0x[chi] as f64 / den_a0x;
            x.q_2n0[chi] = t.vp_x0b[chi] as f64 / den_a0x;
        }
    }
    if den_vac > 0.0 {
        for chi in 0..16 {
            x.q_00[chi] = t.vp_vac[chi] as f64 / den_vac;
        }
    }
    GainTables { z, x }
}

/// Where estimate_pipeline takes its gains from.
pub enum GainSource<'a> {
    /// Decoy-estimated quantities from analytic gain tables.
    Analytic,
    /// True Fock yields instead of decoy bounds (conservativeness oracle).
    AnalyticOracle,
    /// Decoy-estimated quantities from precomputed gain tables (lets a scan
    /// reuse one POVM across many pairing intervals).
    Tables(&'a GainTables),
    /// Decoy-estimated quantities from Monte Carlo tallies.
    Tallies(&'a Tallies),
}

/// Chains decoy bounds -> s11z -> fractions -> e11x -> R and R*.
pub fn estimate_pipeline(source: GainSource, cfg: &ProtocolConfig) -> Result<KeyRateReport> {
    cfg.validate()?;
    let povm_needed = matches!(source, GainSource::Analytic | GainSource::AnalyticOracle);
    let povm: Option<RoundPovm> = if povm_needed {
        Some(build_round_povm(&cfg.channel_params(), cfg.cutoff)?)
    } else {
        None
    };
    let gains = match &source {
        GainSource::Tallies(t) => gains_from_tallies(t, cfg),
        GainSource::Tables(g) => (*g).clone(),
        _ => gains_q(povm.as_ref().unwrap(), cfg.mu, cfg.nu)?,
    };
    let est = decoy::estimate(&gains, cfg.mu, cfg.nu, cfg.p_z, cfg.l)?;

    let (s11, e11x, q11z, q11z_star) = match &source {
        GainSource::AnalyticOracle => {
            let povm = povm.as_ref().unwrap();
            // full single-photon sum over all lambda in X, true yields
            let mut s11_true = 0.0;
            for chi in x_set() {
                for lam in x_set() {
                    let yj = yield_z(povm, lam[0] as usize, lam[2] as usize, chi[0], chi[1]);
                    let yk = yield_z(povm, lam[1] as usize, lam[3] as usize, chi[2], chi[3]);
                    s11_true += 0.25 * yj * yk;
                }
            }
            let deltas = [0.0, std::f64::consts::PI];
            let mut yx = [[[0.0f64; 16]; 2]; 2];
            for d0 in 0..2 {
                for d1 in 0..2 {
                    yx[d0][d1] = yield_x_all(povm, 1, 1, deltas[d0], deltas[d1]);
                }
            }
            let e11 = phase_error_rate(
                |chi, d0, d1| {
                    let i0 = usize::from(d0 != 0.0);
                    let i1 = usize::from(d1 != 0.0);
                    yx[i0][i1][chi_index(chi)]
                },
                s11_true,
            )?;
            let fr = decoy::fractions(est.p_eff, est.p_eff_z, &gains, s11_true, cfg.p_z, cfg.mu);
            (s11_true, e11, fr.q11z, fr.q11z_star)
        }
        _ => {
            let e11 = phase_error_rate(
                |chi, d0, d1| {
                    let i0 = usize::from(d0 != 0.0);
                    let i1 = usize::from(d1 != 0.0);
                    est.yx11_upper[i0][i1][chi_index(chi)]
                },
                est.s11z_lower,
            )
            .unwrap_or(0.5);
            (est.s11z_lower, e11, est.q11z, est.q11z_star)
        }
    };

    // Z-basis error: measured from key-mapped pairs in Monte Carlo mode,
    // analytic lambda-pattern weights otherwise.
    let ez = match &source {
        GainSource::Tallies(t) if t.z_basis_pairs > 0 => {
            t.z_basis_errors as f64 / t.z_basis_pairs as f64
        }
        GainSource::Tallies(_) => 0.0,
        _ => est.ez,
    };

    let r = key_rate(est.r_p, est.r_z, q11z, e11x, ez, cfg.f);
    let r_star = key_rate(est.r_p_star, est.r_z_star, q11z_star, e11x, ez, cfg.f);
    Ok(KeyRateReport {
        distance_km: cfg.distance_km,
        l: cfg.l,
        r,
        r_star,
        e11x,
        ez,
        s11z: s11,
        q11z,
        r_p: est.r_p,
        r_z: est.r_z,
        f: cfg.f,
        p_eff: est.p_eff,
        p_eff_z: est.p_eff_z,
        r_p_star: est.r_p_star,
        r_z_star: est.r_z_star,
        q11z_star,
    })
}

/// Convenience: analytic estimation-mode report.
pub fn analytic_report(cfg: &ProtocolConfig) -> Result<KeyRateReport> {
    estimate_pipeline(GainSource::Analytic, cfg)
}

/// Convenience: analytic oracle-mode report (true yields, no decoy bounds).
pub fn oracle_report(cfg: &ProtocolConfig) -> Result<KeyRateReport> {
    estimate_pipeline(GainSource::AnalyticOracle, cfg)
}
