//! Command-line front end: key-rate scans, Monte Carlo simulation runs and
//! the extended-state equivalence verification.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use mpqkd::channel::{build_round_povm, gains_q};
use mpqkd::config::{Mode, ProtocolConfig};
use mpqkd::fock::{
    analytic_rho1, analytic_sigma1, phase_randomize, rho1_phase_family, sigma1_phase_family,
    trace_distance,
};
use mpqkd::keyrate::KeyRateReport;
use mpqkd::protosim::{estimate_pipeline, simulate, GainSource, Tallies};
use mpqkd::{MpqkdError, Result};

pub const CSV_HEADER: &str = "distance_km,l,R,R_star,ratio,e11x,Ez,q11z,r_p,r_z,s11z";

#[derive(Parser)]
#[command(
    name = "mpqkd",
    version,
    about = "Mode-pairing QKD simulator and key-rate analyzer"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Analytic key-rate scan over distances and pairing intervals (CSV).
    Scan {
        /// Flat key=value config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output CSV path (stdout when omitted). Written atomically.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Total distances in km: `start:stop:step` (inclusive) or a comma list.
        #[arg(long, default_value = "0:500:10")]
        distances: String,
        /// Comma list of maximal pairing intervals l.
        #[arg(long, default_value = "2000,20000000")]
        intervals: String,
        /// Seed override (unused by the analytic scan, accepted for symmetry).
        #[arg(long)]
        seed: Option<u64>,
        /// Rayon thread count (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// One full protocol run; JSON report (per the config's mode).
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output JSON path (stdout when omitted). Written atomically.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also dump the raw Monte Carlo tallies to this JSON file.
        #[arg(long)]
        tallies: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Verify the Z/X extended-state equivalences by trace distance.
    VerifyAppendix {
        /// Per-mode Fock cutoff.
        #[arg(long, default_value_t = 20)]
        cutoff: usize,
        /// Phase-integration grid points (power of two, >= 64).
        #[arg(long, default_value_t = 512)]
        grid: usize,
        /// Comma list of Z-window intensities.
        #[arg(long, default_value = "0.01,0.1,0.429")]
        mu: String,
        /// Comma list of X-window intensities.
        #[arg(long, default_value = "0.01,0.038,0.1")]
        nu: String,
        /// Comma list of relative phases delta (radians).
        #[arg(long, default_value = "0,0.78539816339744831,3.14159265358979324")]
        delta: String,
        /// Pass/fail threshold on each trace distance.
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
        /// Optional JSON results path. Written atomically.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn parse_f64_list(spec: &str) -> Result<Vec<f64>> {
    let bad = |reason: String| MpqkdError::InvalidConfig {
        field: "list".into(),
        reason,
    };
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad(format!("expected start:stop:step, got `{spec}`")));
        }
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(format!("non-numeric range bound in `{spec}`")))?;
        let (start, stop, step) = (nums[0], nums[1], nums[2]);
        if step <= 0.0 || stop < start {
            return Err(bad(format!("degenerate range `{spec}`")));
        }
        let n = ((stop - start) / step).round() as usize;
        return Ok((0..=n)
            .map(|i| start + i as f64 * step)
            .filter(|&v| v <= stop + 1e-9)
            .collect());
    }
    spec.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("non-numeric entry `{p}`")))
        })
        .collect()
}

fn parse_usize_list(spec: &str) -> Result<Vec<usize>> {
    spec.split(',')
        .map(|p| {
            p.trim().parse::<usize>().map_err(|_| MpqkdError::InvalidConfig {
                field: "list".into(),
                reason: format!("non-integer entry `{p}`"),
            })
        })
        .collect()
}

fn load_config(path: &Option<PathBuf>) -> Result<ProtocolConfig> {
    match path {
        Some(p) => ProtocolConfig::parse(&std::fs::read_to_string(p)?),
        None => Ok(ProtocolConfig::default()),
    }
}

fn set_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // Ignore the error if a global pool already exists (e.g. in tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Writes `content` to `path` atomically (temp file + rename), or to stdout.
fn emit(path: &Option<PathBuf>, content: &str) -> Result<()> {
    match path {
        None => {
            print!("{content}");
            std::io::stdout().flush()?;
            Ok(())
        }
        Some(p) => {
            let dir = p.parent().unwrap_or(Path::new("."));
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(content.as_bytes())?;
            tmp.persist(p).map_err(|e| MpqkdError::Io(e.error))?;
            Ok(())
        }
    }
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.9e}")
    }
}

pub fn csv_row(r: &KeyRateReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        r.distance_km,
        r.l,
        fmt(r.r),
        fmt(r.r_star),
        fmt(r.ratio()),
        fmt(r.e11x),
        fmt(r.ez),
        fmt(r.q11z),
        fmt(r.r_p),
        fmt(r.r_z),
        fmt(r.s11z)
    )
}

fn run_scan(
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    distances: &str,
    intervals: &str,
    seed: Option<u64>,
) -> Result<()> {
    let mut base = load_config(&config)?;
    if let Some(s) = seed {
        base.seed = s;
    }
    let distances = parse_f64_list(distances)?;
    let intervals = parse_usize_list(intervals)?;
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for &d in &distances {
        let mut cfg = base.clone();
        cfg.distance_km = d;
        // one POVM + gain table per distance, shared across intervals
        let povm = build_round_povm(&cfg.channel_params(), cfg.cutoff)?;
        let gains = gains_q(&povm, cfg.mu, cfg.nu)?;
        for &l in &intervals {
            cfg.l = l;
            let report = estimate_pipeline(GainSource::Tables(&gains), &cfg)?;
            csv.push_str(&csv_row(&report));
            csv.push('\n');
        }
    }
    emit(&out, &csv)
}

#[derive(Serialize)]
struct SimulateOutput {
    mode: Mode,
    seed: u64,
    report: KeyRateReport,
    tallies_summary: Option<TallySummary>,
}

#[derive(Serialize)]
struct TallySummary {
    n_rounds: u64,
    effective_rounds: u64,
    pairs: u64,
    z_basis_pairs: u64,
    z_basis_errors: u64,
    x_sifted_pairs: u64,
    x_basis_errors: u64,
}

fn run_simulate(
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    tallies_out: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = load_config(&config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (report, tallies): (KeyRateReport, Option<Tallies>) = match cfg.mode {
        Mode::Analytic => (estimate_pipeline(GainSource::Analytic, &cfg)?, None),
        Mode::MonteCarlo => {
            let t = simulate(&cfg, cfg.seed)?;
            let report = estimate_pipeline(GainSource::Tallies(&t), &cfg)?;
            (report, Some(t))
        }
    };
    if let Some(path) = &tallies_out {
        match &tallies {
            Some(t) => emit(&Some(path.clone()), &serde_json::to_string_pretty(t)?)?,
            None => {
                return Err(MpqkdError::InvalidConfig {
                    field: "tallies".into(),
                    reason: "analytic mode produces no tallies".into(),
                })
            }
        }
    }
    let output = SimulateOutput {
        mode: cfg.mode,
        seed: cfg.seed,
        report,
        tallies_summary: tallies.as_ref().map(|t| TallySummary {
            n_rounds: t.n_rounds,
            effective_rounds: t.effective_rounds,
            pairs: t.pairs,
            z_basis_pairs: t.z_basis_pairs,
            z_basis_errors: t.z_basis_errors,
            x_sifted_pairs: t.x_sifted_pairs,
            x_basis_errors: t.x_basis_errors,
        }),
    };
    let mut text = serde_json::to_string_pretty(&output)?;
    text.push('\n');
    emit(&out, &text)
}

#[derive(Serialize)]
struct AppendixRecord {
    state: &'static str,
    intensity: f64,
    delta: f64,
    trace_distance: f64,
    pass: bool,
}

fn run_verify_appendix(
    cutoff: usize,
    grid: usize,
    mu: &str,
    nu: &str,
    delta: &str,
    tolerance: f64,
    out: Option<PathBuf>,
) -> Result<()> {
    let mus = parse_f64_list(mu)?;
    let nus = parse_f64_list(nu)?;
    let deltas = parse_f64_list(delta)?;
    let mut records = Vec::new();
    for &m in &mus {
        for &d in &deltas {
            let num = phase_randomize(rho1_phase_family(m, d, cutoff), grid);
            let ana = analytic_rho1(m, d, cutoff)?;
            let td = trace_distance(&num, &ana);
            records.push(AppendixRecord {
                state: "rho1",
                intensity: m,
                delta: d,
                trace_distance: td,
                pass: td < tolerance,
            });
        }
    }
    for &n in &nus {
        for &d in &deltas {
            let num = phase_randomize(sigma1_phase_family(n, d, cutoff), grid);
            let ana = analytic_sigma1(n, d, cutoff)?;
            let td = trace_distance(&num, &ana);
            records.push(AppendixRecord {
                state: "sigma1",
                intensity: n,
                delta: d,
                trace_distance: td,
                pass: td < tolerance,
            });
        }
    }
    let mut all_pass = true;
    for r in &records {
        all_pass &= r.pass;
        println!(
            "{:<6} intensity={:<8} delta={:<20} trace_distance={:.3e} {}",
            r.state,
            r.intensity,
            r.delta,
            r.trace_distance,
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    if let Some(path) = out {
        let mut text = serde_json::to_string_pretty(&records)?;
        text.push('\n');
        emit(&Some(path), &text)?;
    }
    if all_pass {
        Ok(())
    } else {
        Err(MpqkdError::InvalidConfig {
            field: "tolerance".into(),
            reason: format!("at least one trace distance exceeds {tolerance}"),
        })
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Scan {
            config,
            out,
            distances,
            intervals,
            seed,
            threads,
        } => {
            set_threads(threads);
            run_scan(config, out, &distances, &intervals, seed)
        }
        Cmd::Simulate {
            config,
            out,
            tallies,
            seed,
            threads,
        } => {
            set_threads(threads);
            run_simulate(config, out, tallies, seed)
        }
        Cmd::VerifyAppendix {
            cutoff,
            grid,
            mu,
            nu,
            delta,
            tolerance,
            out,
            threads,
        } => {
            set_threads(threads);
            run_verify_appendix(cutoff, grid, &mu, &nu, &delta, tolerance, out)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
