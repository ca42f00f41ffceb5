//! Channel generation, unit conventions and experiment configuration.
//!
//! Powers are normalized: channels have unit average gain, the SNR is
//! `1/σ²`, and "dBm" values are read as dB relative to the same unit
//! reference power.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::design::SystemParams;
use crate::error::{check_dim, Error, Result};
use crate::numerics::ComplexVector;
use crate::optimizer::{AlternateOptions, EqualGainConvention, SchemeId};

/// Uplink channels of both users (the downlink is reciprocal).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h1: ComplexVector,
    pub h2: ComplexVector,
    /// Seed the realization was drawn from (0 for hand-built channels).
    pub seed: u64,
}

impl ChannelRealization {
    pub fn new(h1: ComplexVector, h2: ComplexVector, seed: u64) -> Result<Self> {
        check_dim(h1.len(), h2.len())?;
        if h1.is_empty() {
            return Err(Error::Domain("channel vectors must be non-empty".into()));
        }
        Ok(Self { h1, h2, seed })
    }

    pub fn n_antennas(&self) -> usize {
        self.h1.len()
    }

    pub fn user(&self, i: usize) -> &ComplexVector {
        if i == 0 {
            &self.h1
        } else {
            &self.h2
        }
    }

    pub(crate) fn check_dim(&self, n: usize) -> Result<()> {
        check_dim(n, self.n_antennas())
    }
}

/// Rayleigh channels: i.i.d. CN(0, 1) entries, deterministic in `seed`.
pub fn gen_channel(seed: u64, n: usize) -> Result<ChannelRealization> {
    if n == 0 {
        return Err(Error::Domain("need at least one antenna".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut draw = || {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        num_complex::Complex64::new(re * scale, im * scale)
    };
    let h1 = ComplexVector::from_fn(n, |_| draw());
    let h2 = ComplexVector::from_fn(n, |_| draw());
    ChannelRealization::new(h1, h2, seed)
}

/// Seed of trial `index` under `master`: a SplitMix64 finalizer over both,
/// so each trial's stream is independent of execution order.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Swept quantity of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    /// Single operating point.
    Fixed,
    /// SNR values in dB.
    Snr(Vec<f64>),
    /// Circuit power values in dBm.
    Pc(Vec<f64>),
}

impl SweepAxis {
    /// `(snr_db, pc_dbm)` for every axis point.
    pub fn points(&self, snr_db: f64, pc_dbm: f64) -> Vec<(f64, f64)> {
        match self {
            Self::Fixed => vec![(snr_db, pc_dbm)],
            Self::Snr(v) => v.iter().map(|&s| (s, pc_dbm)).collect(),
            Self::Pc(v) => v.iter().map(|&p| (snr_db, p)).collect(),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Self::Fixed => "none",
            Self::Snr(_) => "snr",
            Self::Pc(_) => "pc",
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            Self::Fixed => &[],
            Self::Snr(v) | Self::Pc(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_antennas: usize,
    pub eta: f64,
    pub snr_db: f64,
    pub pc_dbm: f64,
    pub rate_targets: [f64; 2],
    pub trials: usize,
    pub master_seed: u64,
    pub schemes: Vec<SchemeId>,
    pub axis: SweepAxis,
    /// Share of the noise power in front of the power splitter.
    pub splitter_noise_fraction: f64,
    pub equal_gain: EqualGainConvention,
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_antennas: 4,
            eta: 1.0,
            snr_db: 20.0,
            pc_dbm: 10.0,
            rate_targets: [2.0, 2.0],
            trials: 100,
            master_seed: 1,
            schemes: SchemeId::ALL.to_vec(),
            axis: SweepAxis::Fixed,
            splitter_noise_fraction: 0.0,
            equal_gain: EqualGainConvention::Phased,
            max_iter: 50,
            rel_tol: 1e-5,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.trim().parse().map_err(|_| Error::Config(format!("{key}: '{v}' is not a number")))?;
    if !x.is_finite() {
        return Err(Error::Config(format!("{key}: value must be finite")));
    }
    Ok(x)
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim().parse().map_err(|_| Error::Config(format!("{key}: '{v}' is not a non-negative integer")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_f64(key, s)).collect()
}

fn render_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ScenarioConfig {
    /// SNR sweep 0–30 dB in 5 dB steps at P_c = 10 dBm.
    pub fn fig2() -> Self {
        Self { axis: SweepAxis::Snr((0..=6).map(|k| 5.0 * k as f64).collect()), ..Self::default() }
    }

    /// Circuit-power sweep −10–20 dBm in 5 dB steps at SNR = 20 dB.
    pub fn fig3() -> Self {
        Self { axis: SweepAxis::Pc((0..=6).map(|k| -10.0 + 5.0 * k as f64).collect()), ..Self::default() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "fig2" => Ok(Self::fig2()),
            "fig3" => Ok(Self::fig3()),
            other => Err(Error::Usage(format!("unknown preset '{other}' (use fig2 or fig3)"))),
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let value = value.trim();
        match key {
            "antennas" => self.n_antennas = parse_usize(key, value)?,
            "eta" => self.eta = parse_f64(key, value)?,
            "snr_db" => self.snr_db = parse_f64(key, value)?,
            "pc_dbm" => self.pc_dbm = parse_f64(key, value)?,
            "rate1" => self.rate_targets[0] = parse_f64(key, value)?,
            "rate2" => self.rate_targets[1] = parse_f64(key, value)?,
            "trials" => self.trials = parse_usize(key, value)?,
            "seed" => {
                self.master_seed = value.parse().map_err(|_| Error::Config(format!("seed: '{value}' is not a u64")))?
            }
            "schemes" => {
                self.schemes =
                    value.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_>>()?
            }
            "axis" => {
                let values = self.axis.values().to_vec();
                self.axis = match value {
                    "none" => SweepAxis::Fixed,
                    "snr" => SweepAxis::Snr(values),
                    "pc" => SweepAxis::Pc(values),
                    other => return Err(Error::Config(format!("axis: unknown axis '{other}'"))),
                }
            }
            "axis_values" => {
                let v = parse_list(key, value)?;
                self.axis = match &self.axis {
                    SweepAxis::Fixed => {
                        return Err(Error::Config("axis_values given before a sweep axis".into()));
                    }
                    SweepAxis::Snr(_) => SweepAxis::Snr(v),
                    SweepAxis::Pc(_) => SweepAxis::Pc(v),
                }
            }
            "splitter_noise_fraction" => self.splitter_noise_fraction = parse_f64(key, value)?,
            "equal_gain" => self.equal_gain = value.parse()?,
            "max_iter" => self.max_iter = parse_usize(key, value)?,
            "rel_tol" => {
                self.rel_tol =
                    value.parse().map_err(|_| Error::Config(format!("rel_tol: '{value}' is not a number")))?
            }
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parses a `key = value` file on top of the defaults. Blank lines and
    /// `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    /// Applies the settings in `text` on top of `self`.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(k, v)?;
        }
        self.validate()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "antennas = {}", self.n_antennas);
        let _ = writeln!(s, "eta = {}", self.eta);
        let _ = writeln!(s, "snr_db = {}", self.snr_db);
        let _ = writeln!(s, "pc_dbm = {}", self.pc_dbm);
        let _ = writeln!(s, "rate1 = {}", self.rate_targets[0]);
        let _ = writeln!(s, "rate2 = {}", self.rate_targets[1]);
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "seed = {}", self.master_seed);
        let schemes: Vec<&str> = self.schemes.iter().map(|s| s.name()).collect();
        let _ = writeln!(s, "schemes = {}", schemes.join(","));
        let _ = writeln!(s, "axis = {}", self.axis.name());
        if self.axis != SweepAxis::Fixed {
            let _ = writeln!(s, "axis_values = {}", render_list(self.axis.values()));
        }
        let _ = writeln!(s, "splitter_noise_fraction = {}", self.splitter_noise_fraction);
        let _ = writeln!(s, "equal_gain = {}", self.equal_gain);
        let _ = writeln!(s, "max_iter = {}", self.max_iter);
        let _ = writeln!(s, "rel_tol = {}", self.rel_tol);
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_antennas == 0 {
            return bad("antennas must be at least 1".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad(format!("eta must lie in (0, 1], got {}", self.eta));
        }
        if self.rate_targets.iter().any(|r| *r <= 0.0) {
            return bad("rate targets must be positive".into());
        }
        if !(0.0..1.0).contains(&self.splitter_noise_fraction) {
            return bad("splitter_noise_fraction must lie in [0, 1)".into());
        }
        if self.max_iter == 0 || !(self.rel_tol >= 0.0) {
            return bad("max_iter must be positive and rel_tol non-negative".into());
        }
        if let SweepAxis::Snr(v) | SweepAxis::Pc(v) = &self.axis {
            if v.is_empty() {
                return bad("sweep axis has no values".into());
            }
        }
        Ok(())
    }

    pub fn alternate_options(&self) -> AlternateOptions {
        AlternateOptions { max_iter: self.max_iter, rel_tol: self.rel_tol, equal_gain: self.equal_gain }
    }
}

/// Linear system parameters at the configured operating point.
pub fn units_from_config(cfg: &ScenarioConfig) -> Result<SystemParams> {
    params_at(cfg, cfg.snr_db, cfg.pc_dbm)
}

/// Linear system parameters at an explicit `(snr_db, pc_dbm)` point:
/// `σ² = 10^(−snr/10)`, `P_c = 10^(pc/10)`.
pub fn params_at(cfg: &ScenarioConfig, snr_db: f64, pc_dbm: f64) -> Result<SystemParams> {
    cfg.validate()?;
    if !snr_db.is_finite() || !pc_dbm.is_finite() {
        return Err(Error::Config("SNR and circuit power must be finite".into()));
    }
    let sigma2 = db_to_linear(-snr_db);
    SystemParams::new(cfg.n_antennas, cfg.eta, db_to_linear(pc_dbm), sigma2, cfg.rate_targets)?
        .with_splitter_noise(cfg.splitter_noise_fraction * sigma2)
}
