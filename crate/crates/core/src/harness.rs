//! Monte Carlo sweeps, CSV output, the N = 2 grid oracle and the lattice demo.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::design::{rate_thresholds, verify_rates, SystemParams};
use crate::error::{Error, Result};
use crate::lattice::{cof_roundtrip, enumerate_codebook, CofExchange, NestedChain};
use crate::numerics::ComplexVector;
use crate::optimizer::{run_scheme_detailed, SchemeId};
use crate::scenario::{gen_channel, linear_to_db, params_at, trial_seed, ChannelRealization, ScenarioConfig};

/// Share of failed trials above which a sweep is reported as failing.
pub const MAX_FAILURE_FRACTION: f64 = 0.02;

pub const RECORD_COLUMNS: [&str; 14] = [
    "scheme",
    "snr_db",
    "pc_dbm",
    "trial",
    "seed",
    "p_r_db",
    "iterations",
    "beta1",
    "beta2",
    "margin_up1",
    "margin_up2",
    "margin_down1",
    "margin_down2",
    "status",
];

pub const SUMMARY_COLUMNS: [&str; 7] = ["scheme", "snr_db", "pc_dbm", "mean_p_r_db", "std_err_db", "count", "failures"];

/// Outcome of one scheme on one channel at one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub scheme: SchemeId,
    pub snr_db: f64,
    pub pc_dbm: f64,
    pub trial: usize,
    pub seed: u64,
    /// NaN when the trial failed.
    pub p_r_db: f64,
    pub iterations: usize,
    pub beta: [f64; 2],
    /// Uplink margins of users 1, 2 then downlink margins of users 1, 2.
    pub margins: [f64; 4],
    /// `ok`, `max_iter` (alternation stopped at the iteration cap), or
    /// `error: …` for failed trials.
    pub status: String,
}

impl TrialRecord {
    pub fn is_failure(&self) -> bool {
        !self.p_r_db.is_finite()
    }

    fn row(&self) -> Vec<String> {
        let mut row = vec![
            self.scheme.name().to_string(),
            fmt_num(self.snr_db),
            fmt_num(self.pc_dbm),
            self.trial.to_string(),
            self.seed.to_string(),
            fmt_num(self.p_r_db),
            self.iterations.to_string(),
            fmt_num(self.beta[0]),
            fmt_num(self.beta[1]),
        ];
        row.extend(self.margins.iter().map(|m| fmt_num(*m)));
        row.push(self.status.clone());
        row
    }
}

/// Nine significant digits.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        "NaN".to_string()
    }
}

/// Aggregate of one scheme at one axis point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub scheme: SchemeId,
    pub snr_db: f64,
    pub pc_dbm: f64,
    pub mean_p_r_db: f64,
    pub std_err_db: f64,
    /// Successful trials.
    pub count: usize,
    pub failures: usize,
}

impl SweepSummary {
    fn row(&self) -> Vec<String> {
        vec![
            self.scheme.name().to_string(),
            fmt_num(self.snr_db),
            fmt_num(self.pc_dbm),
            fmt_num(self.mean_p_r_db),
            fmt_num(self.std_err_db),
            self.count.to_string(),
            self.failures.to_string(),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SweepSummary>,
}

impl SweepOutcome {
    pub fn failure_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.is_failure()).count() as f64 / self.records.len() as f64
    }

    pub fn excess_failures(&self) -> bool {
        self.failure_fraction() > MAX_FAILURE_FRACTION
    }

    /// Summary row of `scheme` at axis point `(snr_db, pc_dbm)`.
    pub fn summary_for(&self, scheme: SchemeId, snr_db: f64, pc_dbm: f64) -> Option<&SweepSummary> {
        self.summary.iter().find(|s| s.scheme == scheme && s.snr_db == snr_db && s.pc_dbm == pc_dbm)
    }
}

/// Channel source of a sweep: `(seed, N) ↦ realization`.
pub type ChannelSource = dyn Fn(u64, usize) -> Result<ChannelRealization> + Sync;

/// Runs one trial: a fresh channel from the trial seed, solved by `scheme`.
pub fn run_trial(cfg: &ScenarioConfig, scheme: SchemeId, snr_db: f64, pc_dbm: f64, trial: usize) -> TrialRecord {
    run_trial_with(cfg, &gen_channel, scheme, snr_db, pc_dbm, trial)
}

pub fn run_trial_with(
    cfg: &ScenarioConfig,
    source: &ChannelSource,
    scheme: SchemeId,
    snr_db: f64,
    pc_dbm: f64,
    trial: usize,
) -> TrialRecord {
    let seed = trial_seed(cfg.master_seed, trial as u64);
    let mut rec = TrialRecord {
        scheme,
        snr_db,
        pc_dbm,
        trial,
        seed,
        p_r_db: f64::NAN,
        iterations: 0,
        beta: [f64::NAN; 2],
        margins: [f64::NAN; 4],
        status: String::new(),
    };
    let outcome = (|| -> Result<_> {
        let params = params_at(cfg, snr_db, pc_dbm)?;
        let ch = source(seed, cfg.n_antennas)?;
        let run = run_scheme_detailed(scheme, &ch, &params, &cfg.alternate_options())?;
        let report = verify_rates(&run.design, &ch, &params)?;
        Ok((run, report))
    })();
    match outcome {
        Ok((run, report)) => {
            rec.p_r_db = linear_to_db(run.design.p_r);
            rec.iterations = run.iterations;
            rec.beta = run.design.beta;
            rec.margins = report.margins();
            rec.status = if run.converged { "ok" } else { "max_iter" }.to_string();
        }
        Err(e) => {
            log::warn!("trial {trial} ({scheme}, snr {snr_db} dB, pc {pc_dbm} dBm) failed: {e}");
            rec.status = format!("error: {e}");
        }
    }
    rec
}

fn summarize(cfg: &ScenarioConfig, records: &[TrialRecord]) -> Vec<SweepSummary> {
    let mut out = Vec::new();
    for (snr_db, pc_dbm) in cfg.axis.points(cfg.snr_db, cfg.pc_dbm) {
        for &scheme in &cfg.schemes {
            let vals: Vec<f64> = records
                .iter()
                .filter(|r| r.scheme == scheme && r.snr_db == snr_db && r.pc_dbm == pc_dbm && !r.is_failure())
                .map(|r| r.p_r_db)
                .collect();
            let n = vals.len();
            let (mean, se) = mean_std_err(&vals);
            out.push(SweepSummary {
                scheme,
                snr_db,
                pc_dbm,
                mean_p_r_db: mean,
                std_err_db: se,
                count: n,
                failures: cfg.trials - n,
            });
        }
    }
    out
}

/// Sample mean and standard error (NaN mean for no samples, zero error for one).
pub fn mean_std_err(vals: &[f64]) -> (f64, f64) {
    let n = vals.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = vals.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs every axis point × scheme × trial in parallel. Records come back in
/// that nested order regardless of scheduling. Trial `k` uses the same
/// channel for every scheme and axis point.
pub fn sweep(cfg: &ScenarioConfig) -> Result<SweepOutcome> {
    sweep_with(cfg, &gen_channel)
}

/// [`sweep`] with channels drawn from `source` instead of Rayleigh fading.
pub fn sweep_with(cfg: &ScenarioConfig, source: &ChannelSource) -> Result<SweepOutcome> {
    if cfg.schemes.is_empty() {
        return Err(Error::Usage("no schemes selected".into()));
    }
    cfg.validate()?;
    let mut jobs = Vec::new();
    for (snr_db, pc_dbm) in cfg.axis.points(cfg.snr_db, cfg.pc_dbm) {
        for &scheme in &cfg.schemes {
            for trial in 0..cfg.trials {
                jobs.push((scheme, snr_db, pc_dbm, trial));
            }
        }
    }
    let records: Vec<TrialRecord> = jobs
        .into_par_iter()
        .map(|(scheme, snr, pc, trial)| run_trial_with(cfg, source, scheme, snr, pc, trial))
        .collect();
    let summary = summarize(cfg, &records);
    Ok(SweepOutcome { records, summary })
}

pub fn write_records<W: std::io::Write>(out: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        w.write_record(r.row())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: std::io::Write>(out: W, summary: &[SweepSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for s in summary {
        w.write_record(s.row())?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the sweep and writes `records.csv` and `summary.csv` into `out_dir`.
pub fn run_sweep(cfg: &ScenarioConfig, out_dir: &Path) -> Result<SweepOutcome> {
    let outcome = sweep(cfg)?;
    std::fs::create_dir_all(out_dir)?;
    write_records(std::fs::File::create(out_dir.join("records.csv"))?, &outcome.records)?;
    write_summary(std::fs::File::create(out_dir.join("summary.csv"))?, &outcome.summary)?;
    Ok(outcome)
}

/// Unit vectors `(cos t, sin t·e^{jφ})` on the grid
/// `t = k(π/2)/res, k = 0..=res` and `φ = 2πm/res, m < res`.
fn unit_grid(resolution: usize) -> Vec<[Complex64; 2]> {
    let mut out = Vec::with_capacity((resolution + 1) * resolution);
    for k in 0..=resolution {
        let t = k as f64 * std::f64::consts::FRAC_PI_2 / resolution as f64;
        for m in 0..resolution {
            let phi = 2.0 * std::f64::consts::PI * m as f64 / resolution as f64;
            out.push([Complex64::new(t.cos(), 0.0), Complex64::from_polar(t.sin(), phi)]);
        }
    }
    out
}

/// Exhaustive grid minimum of the relay power over unit-norm `(f, g)` for
/// N = 2. Each grid refines the previous one when the resolution doubles, so
/// the value never increases. A user with an all-zero channel imposes no
/// constraint.
pub fn oracle_grid(ch: &ChannelRealization, params: &SystemParams, resolution: usize) -> Result<f64> {
    params.validate()?;
    if ch.n_antennas() != 2 || params.n_antennas != 2 {
        return Err(Error::Domain("the grid oracle supports N = 2 only".into()));
    }
    if resolution < 4 {
        return Err(Error::Domain("grid resolution must be at least 4".into()));
    }
    let th = rate_thresholds(params);
    let idx: Vec<usize> = (0..2).filter(|&i| ch.user(i).norm_sqr() > 0.0).collect();
    if idx.is_empty() {
        return Ok(0.0);
    }
    let grid = unit_grid(resolution);
    let proj = |v: &[Complex64; 2], h: &ComplexVector| (v[0] * h[0] + v[1] * h[1]).norm_sqr();

    // a_i(g) and h_i(f) are separable; tabulate both once.
    let a: Vec<Vec<f64>> = grid
        .iter()
        .map(|g| {
            idx.iter()
                .map(|&i| {
                    let gu = proj(g, ch.user(i));
                    params.sigma2 * th.uplink[i] / (params.eta * gu)
                        + params.sigma2 * (th.downlink[i] - 1.0)
                        + 2.0 * params.p_c / params.eta
                })
                .collect()
        })
        .collect();
    let h: Vec<Vec<f64>> = grid.iter().map(|f| idx.iter().map(|&i| proj(f, ch.user(i))).collect()).collect();

    let best = a
        .par_iter()
        .map(|ag| {
            let mut best = f64::INFINITY;
            for hf in &h {
                let mut p: f64 = 0.0;
                for u in 0..ag.len() {
                    p = p.max(ag[u] / hf[u]);
                }
                if p < best {
                    best = p;
                }
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(best)
}

/// All exchanges of a lattice demo run plus a printable trace.
#[derive(Debug, Clone)]
pub struct LatticeDemo {
    pub exchanges: Vec<CofExchange>,
}

impl LatticeDemo {
    pub fn all_match(&self, tol: f64) -> bool {
        self.exchanges.iter().all(|e| e.matches(tol))
    }

    pub fn render(&self, tol: f64) -> String {
        let mut s = String::new();
        let v = |x: &[f64]| x.iter().map(|c| format!("{c:.4}")).collect::<Vec<_>>().join(" ");
        for e in &self.exchanges {
            let _ = writeln!(
                s,
                "w1=[{}] w2=[{}] u1=[{}] u2=[{}] t_expected=[{}] t_decoded=[{}] match={}",
                v(&e.w1),
                v(&e.w2),
                v(&e.u1),
                v(&e.u2),
                v(&e.t_expected),
                v(&e.t_decoded),
                e.matches(tol)
            );
        }
        let ok = self.exchanges.iter().filter(|e| e.matches(tol)).count();
        let _ = writeln!(s, "{ok}/{} exchanges matched", self.exchanges.len());
        s
    }
}

/// Noiseless compute-and-forward over every codeword pair of `chain`. With
/// `dithered`, each pair gets dithers drawn uniformly over the users'
/// shaping cells from a ChaCha8 stream seeded by `seed`.
pub fn lattice_demo(chain: &NestedChain, seed: u64, dithered: bool) -> Result<LatticeDemo> {
    let book1 = enumerate_codebook(&chain.fine, chain.shaping(1))?;
    let book2 = enumerate_codebook(&chain.fine, chain.shaping(2))?;
    let n = chain.fine.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dither = |user: usize, rng: &mut ChaCha8Rng| -> Result<Vec<f64>> {
        if !dithered {
            return Ok(vec![0.0; n]);
        }
        let lat = chain.shaping(user);
        let k: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let p: Vec<f64> = (0..n).map(|r| (0..n).map(|c| lat.generator()[(r, c)] * k[c]).sum()).collect();
        lat.mod_lattice(&p)
    };
    let zeros = vec![0.0; n];
    let mut exchanges = Vec::with_capacity(book1.len() * book2.len());
    for c1 in &book1 {
        for c2 in &book2 {
            let u1 = dither(1, &mut rng)?;
            let u2 = dither(2, &mut rng)?;
            exchanges.push(cof_roundtrip(chain, &c1.point, &c2.point, &u1, &u2, 1.0, 1.0, 0.0, &zeros)?);
        }
    }
    Ok(LatticeDemo { exchanges })
}
