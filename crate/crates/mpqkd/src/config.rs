//! Protocol configuration: flat key-value config files, validation, defaults.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::pairing::Strategy;
use crate::{MpqkdError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub mu: f64,
    pub nu: f64,
    pub p_z: f64,
    /// Maximal pairing interval.
    pub l: usize,
    /// Total Alice-Bob distance; each arm to the measurement station is half.
    pub distance_km: f64,
    pub detector_efficiency: f64,
    pub dark_count: f64,
    pub visibility: f64,
    pub attenuation_db_per_km: f64,
    /// D: number of discrete phase slices (must be even).
    pub phase_slices: usize,
    /// N: Monte Carlo rounds.
    pub rounds: u64,
    /// Error-correction efficiency f >= 1.
    pub f: f64,
    pub strategy: Strategy,
    pub mode: Mode,
    pub seed: u64,
    /// Per-mode Fock cutoff for analytic/oracle computations.
    pub cutoff: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            mu: 0.429,
            nu: 0.038,
            p_z: 0.5,
            l: 2000,
            distance_km: 100.0,
            detector_efficiency: 0.7,
            dark_count: 1e-8,
            visibility: 0.99,
            attenuation_db_per_km: 0.2,
            phase_slices: 16,
            rounds: 10_000_000,
            f: 1.1,
            strategy: Strategy::Strict,
            mode: Mode::Analytic,
            seed: 1,
            cutoff: 20,
        }
    }
}

impl ProtocolConfig {
    /// Per-arm channel parameters (half the total distance per arm).
    pub fn channel_params(&self) -> ChannelParams {
        ChannelParams {
            distance_km: self.distance_km / 2.0,
            attenuation_db_per_km: self.attenuation_db_per_km,
            detector_efficiency: self.detector_efficiency,
            dark_count: self.dark_count,
            visibility: self.visibility,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, reason: &str| -> Result<()> {
            Err(MpqkdError::InvalidConfig {
                field: field.into(),
                reason: reason.into(),
            })
        };
        if !(self.nu > 0.0) {
            return fail("nu", "must be > 0");
        }
        if self.mu == self.nu {
            return Err(MpqkdError::DegenerateDecoy);
        }
        if !(self.nu < self.mu) {
            return fail("nu", "must satisfy 0 < nu < mu");
        }
        if !(self.p_z > 0.0 && self.p_z < 1.0) {
            return fail("p_z", "must be in (0, 1)");
        }
        if self.l < 1 {
            return fail("l", "must be >= 1");
        }
        if self.phase_slices < 2 || self.phase_slices % 2 != 0 {
            return fail("phase_slices", "must be even and >= 2");
        }
        if !(self.f >= 1.0) {
            return fail("f", "must be >= 1");
        }
        if self.cutoff < 1 {
            return fail("cutoff", "must be >= 1");
        }
        self.channel_params().validate()?;
        Ok(())
    }

    /// Parses flat `key = value` text; `#` starts a comment; unknown keys are
    /// rejected with the offending name.
    pub fn parse(text: &str) -> Result<ProtocolConfig> {
        let mut cfg = ProtocolConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| MpqkdError::InvalidConfig {
                field: format!("line {}", lineno + 1),
                reason: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |reason: &str| MpqkdError::InvalidConfig {
                field: key.to_string(),
                reason: reason.to_string(),
            };
            let as_f64 = || value.parse::<f64>().map_err(|_| bad("not a number"));
            let as_u64 = || value.parse::<u64>().map_err(|_| bad("not an integer"));
            match key {
                "mu" => cfg.mu = as_f64()?,
                "nu" => cfg.nu = as_f64()?,
                "p_z" => cfg.p_z = as_f64()?,
                "l" => cfg.l = as_u64()? as usize,
                "distance_km" => cfg.distance_km = as_f64()?,
                "detector_efficiency" => cfg.detector_efficiency = as_f64()?,
                "dark_count" => cfg.dark_count = as_f64()?,
                "visibility" => cfg.visibility = as_f64()?,
                "attenuation_db_per_km" => cfg.attenuation_db_per_km = as_f64()?,
                "phase_slices" => cfg.phase_slices = as_u64()? as usize,
                "rounds" => cfg.rounds = as_u64()?,
                "f" => cfg.f = as_f64()?,
                "seed" => cfg.seed = as_u64()?,
                "cutoff" => cfg.cutoff = as_u64()? as usize,
                "strategy" => {
                    cfg.strategy = match value {
                        "strict" => Strategy::Strict,
                        "reuse" => Strategy::ReuseX,
                        _ => return Err(bad("expected strict or reuse")),
                    }
                }
                "mode" => {
                    cfg.mode = match value {
                        "analytic" => Mode::Analytic,
                        "montecarlo" => Mode::MonteCarlo,
                        _ => return Err(bad("expected analytic or montecarlo")),
                    }
                }
                other => {
                    return Err(MpqkdError::InvalidConfig {
                        field: other.to_string(),
                        reason: "unknown key".into(),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Emits the flat key-value form; `parse` of the result round-trips.
    pub fn to_key_values(&self) -> String {
        let strategy = match self.strategy {
            Strategy::Strict => "strict",
            _ => "reuse",
        };
        let mode = match self.mode {
            Mode::Analytic => "analytic",
            Mode::MonteCarlo => "montecarlo",
        };
        format!(
            "mu = {}\nnu = {}\np_z = {}\nl = {}\ndistance_km = {}\n\
             detector_efficiency = {}\ndark_count = {}\nvisibility = {}\n\
             attenuation_db_per_km = {}\nphase_slices = {}\nrounds = {}\n\
             f = {}\nstrategy = {}\nmode = {}\nseed = {}\ncutoff = {}\n",
            self.mu,
            self.nu,
            self.p_z,
            self.l,
            self.distance_km,
            self.detector_efficiency,
            self.dark_count,
            self.visibility,
            self.attenuation_db_per_km,
            self.phase_slices,
            self.rounds,
            self.f,
            strategy,
            mode,
            self.seed,
            self.cutoff
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_defaults_and_overrides() {
        let cfg = ProtocolConfig::parse("distance_km = 250\nl = 20000000\nmode = analytic\n").unwrap();
        assert_eq!(cfg.distance_km, 250.0);
        assert_eq!(cfg.l, 20_000_000);
        assert_eq!(cfg.mu, 0.429);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = ProtocolConfig::parse("banana = 1\n").unwrap_err();
        match err {
            MpqkdError::InvalidConfig { field, .. } => assert_eq!(field, "banana"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn degenerate_decoy_rejected() {
        let err = ProtocolConfig::parse("mu = 0.038\nnu = 0.038\n").unwrap_err();
        assert!(matches!(err, MpqkdError::DegenerateDecoy));
    }

    #[test]
    fn round_trip() {
        let mut cfg = ProtocolConfig::default();
        cfg.distance_km = 123.0;
        cfg.strategy = Strategy::ReuseX;
        cfg.mode = Mode::MonteCarlo;
        cfg.seed = 99;
        let reparsed = ProtocolConfig::parse(&cfg.to_key_values()).unwrap();
        assert_eq!(cfg.to_key_values(), reparsed.to_key_values());
    }

    #[test]
    fn halved_arm_distance() {
        let cfg = ProtocolConfig::parse("distance_km = 100\n").unwrap();
        assert_eq!(cfg.channel_params().distance_km, 50.0);
    }
}
