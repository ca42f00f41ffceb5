use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use twrc_core::design::verify_rates;
use twrc_core::harness::{lattice_demo, oracle_grid, run_sweep};
use twrc_core::lattice::NestedChain;
use twrc_core::optimizer::{run_scheme_detailed, SchemeId};
use twrc_core::scenario::{gen_channel, linear_to_db, trial_seed, units_from_config, ScenarioConfig};
use twrc_core::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_FAILURES: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "twrc", version, about = "Minimum relay power for two-way relaying with energy-harvesting users")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one channel realization and print the designs.
    Solve {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Trial index whose channel is solved.
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Monte Carlo sweep writing records.csv and summary.csv.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Sweep axis: snr or pc.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated axis values (dB for snr, dBm for pc).
        #[arg(long)]
        axis_values: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare the alternating optimizer with the N = 2 grid oracle.
    OracleCheck {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 20)]
        channels: usize,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
    },
    /// Noiseless compute-and-forward round trip over a scaled-integer chain.
    LatticeDemo {
        #[arg(long, default_value_t = 1.0)]
        fine: f64,
        #[arg(long, default_value_t = 4.0)]
        mid: f64,
        #[arg(long, default_value_t = 8.0)]
        coarse: f64,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run without dithers.
        #[arg(long)]
        no_dither: bool,
    },
}

/// Scenario settings shared by the solving subcommands. Flags override the
/// preset and the config file.
#[derive(Args)]
struct ScenarioArgs {
    /// fig2 (SNR sweep) or fig3 (circuit power sweep).
    #[arg(long)]
    preset: Option<String>,
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    antennas: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    snr_db: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pc_dbm: Option<f64>,
    #[arg(long)]
    rate1: Option<f64>,
    #[arg(long)]
    rate2: Option<f64>,
    /// Comma-separated scheme numbers or names.
    #[arg(long)]
    schemes: Option<String>,
    /// phased or unphased equal-gain baselines.
    #[arg(long)]
    equal_gain: Option<String>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    rel_tol: Option<f64>,
}

impl ScenarioArgs {
    fn build(&self, extra: &[(&str, Option<String>)]) -> Result<ScenarioConfig, Error> {
        let mut cfg = match &self.preset {
            Some(p) => ScenarioConfig::preset(p)?,
            None => ScenarioConfig::default(),
        };
        if let Some(path) = &self.config {
            cfg.apply(&std::fs::read_to_string(path)?)?;
        }
        let flags: [(&str, Option<String>); 12] = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("trials", self.trials.map(|v| v.to_string())),
            ("antennas", self.antennas.map(|v| v.to_string())),
            ("eta", self.eta.map(|v| v.to_string())),
            ("snr_db", self.snr_db.map(|v| v.to_string())),
            ("pc_dbm", self.pc_dbm.map(|v| v.to_string())),
            ("rate1", self.rate1.map(|v| v.to_string())),
            ("rate2", self.rate2.map(|v| v.to_string())),
            ("schemes", self.schemes.clone()),
            ("equal_gain", self.equal_gain.clone()),
            ("max_iter", self.max_iter.map(|v| v.to_string())),
            ("rel_tol", self.rel_tol.map(|v| v.to_string())),
        ];
        for (key, value) in flags.iter().chain(extra) {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Csv(_) => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

fn solve(cfg: &ScenarioConfig, trial: u64) -> Result<u8, Error> {
    let params = units_from_config(cfg)?;
    let seed = trial_seed(cfg.master_seed, trial);
    let ch = gen_channel(seed, cfg.n_antennas)?;
    println!("channel seed {seed}, N = {}, snr {} dB, P_c {} dBm", cfg.n_antennas, cfg.snr_db, cfg.pc_dbm);
    let mut failed = false;
    for &scheme in &cfg.schemes {
        match run_scheme_detailed(scheme, &ch, &params, &cfg.alternate_options()) {
            Ok(run) => {
                let d = &run.design;
                let r = verify_rates(d, &ch, &params)?;
                println!(
                    "{:<8} P_r = {:.6} dB  iterations {}  converged {}",
                    scheme.name(),
                    linear_to_db(d.p_r),
                    run.iterations,
                    run.converged
                );
                println!(
                    "         beta = [{:.6}, {:.6}]  P_uplink = [{:.6e}, {:.6e}]",
                    d.beta[0], d.beta[1], d.p_uplink[0], d.p_uplink[1]
                );
                let m = r.margins();
                println!("         margins up [{:.3e}, {:.3e}] down [{:.3e}, {:.3e}]", m[0], m[1], m[2], m[3]);
                let fmt = |v: &twrc_core::ComplexVector| {
                    v.as_slice().iter().map(|z| format!("{:.4}{:+.4}j", z.re, z.im)).collect::<Vec<_>>().join(", ")
                };
                println!("         f = [{}]", fmt(&d.f));
                println!("         g = [{}]", fmt(&d.g));
            }
            Err(e) => {
                failed = true;
                println!("{:<8} failed: {e}", scheme.name());
            }
        }
    }
    Ok(if failed { EXIT_FAILURES } else { 0 })
}

fn sweep(cfg: &ScenarioConfig, out: &std::path::Path) -> Result<u8, Error> {
    let outcome = run_sweep(cfg, out)?;
    println!(
        "{:<8} {:>8} {:>8} {:>12} {:>10} {:>6} {:>8}",
        "scheme", "snr_db", "pc_dbm", "mean_p_r_db", "std_err", "count", "failures"
    );
    for s in &outcome.summary {
        println!(
            "{:<8} {:>8.2} {:>8.2} {:>12.4} {:>10.4} {:>6} {:>8}",
            s.scheme.name(),
            s.snr_db,
            s.pc_dbm,
            s.mean_p_r_db,
            s.std_err_db,
            s.count,
            s.failures
        );
    }
    println!("wrote {} and {}", out.join("records.csv").display(), out.join("summary.csv").display());
    if outcome.excess_failures() {
        eprintln!("failure fraction {:.2}% exceeds the limit", 100.0 * outcome.failure_fraction());
        return Ok(EXIT_FAILURES);
    }
    Ok(0)
}

fn oracle_check(cfg: &ScenarioConfig, channels: usize, resolution: usize) -> Result<u8, Error> {
    if cfg.n_antennas != 2 {
        return Err(Error::Usage("oracle-check needs --antennas 2".into()));
    }
    let params = units_from_config(cfg)?;
    let mut bad = 0;
    println!("{:>5} {:>20} {:>12} {:>12} {:>10}", "trial", "seed", "alt_db", "oracle_db", "diff_db");
    for k in 0..channels {
        let seed = trial_seed(cfg.master_seed, k as u64);
        let ch = gen_channel(seed, 2)?;
        let alt = run_scheme_detailed(SchemeId::JointTransceiverPs, &ch, &params, &cfg.alternate_options())?;
        let oracle = oracle_grid(&ch, &params, resolution)?;
        let (a, o) = (linear_to_db(alt.design.p_r), linear_to_db(oracle));
        let ok = a <= o + 0.2 && a >= o - 0.05;
        bad += usize::from(!ok);
        println!("{k:>5} {seed:>20} {a:>12.6} {o:>12.6} {:>10.6}{}", a - o, if ok { "" } else { "  out of band" });
    }
    println!("{}/{channels} within [-0.05, +0.2] dB of the grid oracle", channels - bad);
    Ok(if bad > 0 { EXIT_FAILURES } else { 0 })
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Solve { scenario, trial } => solve(&scenario.build(&[])?, trial),
        Command::Sweep { scenario, axis, axis_values, out } => {
            let cfg = scenario.build(&[("axis", axis), ("axis_values", axis_values)])?;
            sweep(&cfg, &out)
        }
        Command::OracleCheck { scenario, channels, resolution } => {
            let mut cfg = scenario.build(&[])?;
            if scenario.antennas.is_none() && scenario.config.is_none() {
                cfg.n_antennas = 2;
            }
            oracle_check(&cfg, channels, resolution)
        }
        Command::LatticeDemo { fine, mid, coarse, dim, seed, no_dither } => {
            let chain = NestedChain::scaled_integer(fine, mid, coarse, dim)?;
            let demo = lattice_demo(&chain, seed, !no_dither)?;
            print!("{}", demo.render(1e-9));
            Ok(if demo.all_match(1e-9) { 0 } else { EXIT_FAILURES })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
