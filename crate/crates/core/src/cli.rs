//! Command-line front end.
//!
//! Exit codes: 0 success, 1 failed check or runtime error, 2 usage error.
//! Data goes to standard output or files; diagnostics to standard error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::allocation::{solve_mu, DEFAULT_REL_TOL};
use crate::capacity::{secrecy_rate, UniformMode};
use crate::error::{Error, Result};
use crate::experiments::{
    run_fraction_experiment, run_snr_sweep, sample_channel, trial_gains, write_aggregate_csv,
    write_trials_csv, Campaign, ExperimentConfig,
};
use crate::gsvd::{gsvd, subchannel_gains, verify_factors, ChannelPair};
use crate::linalg::read_matrix;
use crate::oracle::grid_maximize;

/// Largest closed-form vs grid disagreement accepted by `oracle-verify`.
pub const ORACLE_MAX_DEVIATION: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "gsvd-wiretap", version, about = "GSVD beamforming secrecy capacity for the MIMO wiretap channel")]
struct Cli {
    /// Worker threads (default: all cores). Never changes results.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the factorization invariants on seeded random channel pairs.
    GsvdCheck {
        #[arg(long)]
        nt: usize,
        #[arg(long)]
        nr: usize,
        #[arg(long)]
        ne: usize,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Optimal allocation and secrecy rate for channels read from JSON files.
    Allocate {
        #[arg(long)]
        hr: PathBuf,
        #[arg(long)]
        he: PathBuf,
        #[arg(long)]
        power: f64,
        #[arg(long)]
        json: bool,
    },
    /// Uniform-baseline rate versus the fraction of power outside the eavesdropper nullspace.
    SweepFraction {
        #[command(flatten)]
        common: CampaignArgs,
        #[arg(long, required_unless_present = "config")]
        power: Option<f64>,
        #[arg(long, default_value = "0:0.01:1")]
        rho_grid: Grid,
    },
    /// Optimal versus uniform allocation across transmit SNRs.
    SweepSnr {
        #[command(flatten)]
        common: CampaignArgs,
        #[arg(long, required_unless_present = "config")]
        snr_db: Option<Grid>,
    },
    /// Compare the closed-form allocation with a brute-force grid search.
    OracleVerify {
        #[arg(long)]
        q: usize,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        budget: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        resolution: usize,
    },
}

#[derive(Debug, Args)]
struct CampaignArgs {
    /// JSON experiment configuration; replaces the dimension/seed flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    nt: Option<usize>,
    #[arg(long, required_unless_present = "config")]
    nr: Option<usize>,
    #[arg(long, required_unless_present = "config")]
    ne: Option<usize>,
    #[arg(long, required_unless_present = "config")]
    trials: Option<usize>,
    #[arg(long, required_unless_present = "config")]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    sigma_r2: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_e2: f64,
    #[arg(long, value_enum, default_value_t = UniformMode::Transmit)]
    uniform_mode: UniformMode,
    /// Output directory for the CSV files.
    #[arg(long)]
    out: PathBuf,
}

/// A parameter grid given on the command line, see [`parse_grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

impl std::str::FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        parse_grid(s).map(Grid)
    }
}

/// Parses `start:step:stop` (stop inclusive within 1e-12) or a comma list.
pub fn parse_grid(s: &str) -> std::result::Result<Vec<f64>, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("not a number: {t:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    let grid = match parts.as_slice() {
        [start, step, stop] => {
            let (start, step, stop) = (num(start)?, num(step)?, num(stop)?);
            if !(step > 0.0) || stop < start {
                return Err(format!("range {s:?} needs step > 0 and stop >= start"));
            }
            let mut out = Vec::new();
            for k in 0.. {
                let v = start + k as f64 * step;
                if v > stop + 1e-12 {
                    break;
                }
                out.push(if (v - stop).abs() <= 1e-12 { stop } else { v });
            }
            out
        }
        [_] => s.split(',').map(num).collect::<std::result::Result<_, _>>()?,
        _ => return Err(format!("expected start:step:stop or a comma list, got {s:?}")),
    };
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(format!("grid {s:?} must be nonempty and strictly increasing"));
    }
    Ok(grid)
}

enum Outcome {
    Pass,
    Fail,
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(Outcome::Pass) => 0,
        Ok(Outcome::Fail) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::InvalidInput(_)) {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::GsvdCheck { nt, nr, ne, trials, seed, tol } => gsvd_check(nt, nr, ne, trials, seed, tol),
        Command::Allocate { hr, he, power, json } => allocate(&hr, &he, power, json),
        Command::SweepFraction { common, power, rho_grid } => {
            let mut cfg = campaign_config(&common, power)?;
            if common.config.is_none() || cfg.rho_grid.is_none() {
                cfg.rho_grid = Some(rho_grid.0);
            }
            sweep_fraction(&cfg, &common.out)
        }
        Command::SweepSnr { common, snr_db } => {
            let mut cfg = campaign_config(&common, None)?;
            if let Some(grid) = snr_db {
                cfg.snr_db_grid = Some(grid.0);
            }
            sweep_snr(&cfg, &common.out)
        }
        Command::OracleVerify { q, trials, budget, seed, resolution } => {
            oracle_verify(q, trials, budget, seed, resolution)
        }
    }
}

fn campaign_config(args: &CampaignArgs, power: Option<f64>) -> Result<ExperimentConfig> {
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.clone(), source })?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|source| Error::Json { path: path.clone(), source })?;
        if let Some(p) = power {
            cfg.budget = p;
        }
        return Ok(cfg);
    }
    let missing = || Error::InvalidInput("missing campaign flags".into());
    let mut cfg = ExperimentConfig::new(
        args.nt.ok_or_else(missing)?,
        args.nr.ok_or_else(missing)?,
        args.ne.ok_or_else(missing)?,
        args.sigma_r2,
        args.sigma_e2,
        // the SNR campaign sets its own budgets; keep a valid placeholder
        power.unwrap_or(1.0),
        args.trials.ok_or_else(missing)?,
        args.seed.ok_or_else(missing)?,
    );
    cfg.uniform_mode = args.uniform_mode;
    Ok(cfg)
}

fn gsvd_check(nt: usize, nr: usize, ne: usize, trials: usize, seed: u64, tol: f64) -> Result<Outcome> {
    let cfg = ExperimentConfig::new(nt, nr, ne, 1.0, 1.0, 1.0, trials, seed);
    cfg.validate()?;
    let mut worst = 0.0f64;
    let mut failures = 0;
    for trial in 0..trials {
        let ch = sample_channel(&cfg, trial);
        let f = match gsvd(&ch) {
            Ok(f) => f,
            Err(e) => {
                eprintln!("trial {trial}: {e}");
                failures += 1;
                continue;
            }
        };
        let rep = verify_factors(&f, &ch, tol)?;
        worst = worst.max(rep.worst());
        if !rep.passes() {
            eprintln!("trial {trial}: residuals {rep:?}");
            failures += 1;
        }
    }
    println!("trials={trials} failures={failures} worst_residual={worst:.3e}");
    Ok(if failures == 0 { Outcome::Pass } else { Outcome::Fail })
}

#[derive(Serialize)]
struct AllocateReport {
    c: Vec<f64>,
    d: Vec<f64>,
    a: Vec<f64>,
    p: Vec<f64>,
    mu: Option<f64>,
    effective_power: f64,
    rate_bits: f64,
}

fn allocate(hr: &Path, he: &Path, power: f64, json: bool) -> Result<Outcome> {
    let ch = ChannelPair::new(read_matrix(hr)?, read_matrix(he)?)?;
    let g = subchannel_gains(&gsvd(&ch)?);
    let alloc = solve_mu(&g, power, DEFAULT_REL_TOL)?;
    let rate_bits = secrecy_rate(&g, &alloc);
    if json {
        let report = AllocateReport {
            c: g.c.clone(),
            d: g.d.clone(),
            a: g.a.clone(),
            p: alloc.p.clone(),
            mu: alloc.mu,
            effective_power: alloc.effective_power,
            rate_bits,
        };
        println!("{}", serde_json::to_string(&report).expect("report serializes"));
    } else {
        println!("{:>3} {:>14} {:>14} {:>14} {:>14}", "i", "c_i", "d_i", "a_i", "p_i");
        for i in 0..g.len() {
            println!(
                "{:>3} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e}",
                i, g.c[i], g.d[i], g.a[i], alloc.p[i]
            );
        }
        match alloc.mu {
            Some(mu) => println!("mu = {mu:.9e}"),
            None => println!("mu = none (no secure subchannel)"),
        }
        println!("effective_power = {:.9e}", alloc.effective_power);
        println!("secrecy_rate_bits = {rate_bits:.9e}");
    }
    Ok(Outcome::Pass)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })
}

fn sweep_fraction(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let outcome = run_fraction_experiment(cfg)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    if outcome.resampled > 0 {
        eprintln!("resampled {} degenerate channel draws", outcome.resampled);
    }
    create_dir(out)?;
    write_trials_csv(&outcome.records, Campaign::Fraction, &out.join("fraction_trials.csv"))?;
    write_aggregate_csv(&outcome.aggregate, &out.join("fraction_aggregate.csv"))?;
    let (peak_rho, peak) = outcome
        .curve
        .rho
        .iter()
        .zip(&outcome.curve.rate_bits)
        .fold((0.0, f64::NEG_INFINITY), |acc, (&r, &v)| if v > acc.1 { (r, v) } else { acc });
    println!(
        "mean_optimal_bits={:.6} peak_uniform_bits={peak:.6} peak_rho={peak_rho}",
        outcome.mean_optimal
    );
    Ok(Outcome::Pass)
}

fn sweep_snr(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let outcome = run_snr_sweep(cfg)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    if outcome.resampled > 0 {
        eprintln!("resampled {} degenerate channel draws", outcome.resampled);
    }
    create_dir(out)?;
    write_trials_csv(&outcome.records, Campaign::Snr, &out.join("snr_trials.csv"))?;
    write_aggregate_csv(&outcome.aggregate, &out.join("snr_aggregate.csv"))?;
    for row in &outcome.aggregate {
        println!(
            "snr_db={} mean_optimal_bits={:.6} mean_uniform_bits={:.6}",
            row.param, row.mean_optimal, row.mean_uniform
        );
    }
    Ok(Outcome::Pass)
}

/// Antenna layout used by `oracle-verify` to obtain `q` directions with one
/// eavesdropper-nullspace direction whenever `q >= 2`.
pub fn oracle_shape(q: usize) -> (usize, usize, usize) {
    (q, q, q.saturating_sub(1).max(1))
}

fn oracle_verify(q: usize, trials: usize, budget: f64, seed: u64, resolution: usize) -> Result<Outcome> {
    if !(1..=crate::oracle::MAX_GRID_DIM).contains(&q) {
        return Err(Error::InvalidInput(format!(
            "--q must be between 1 and {}",
            crate::oracle::MAX_GRID_DIM
        )));
    }
    let (nt, nr, ne) = oracle_shape(q);
    let cfg = ExperimentConfig::new(nt, nr, ne, 1.0, 1.0, budget, trials, seed);
    cfg.validate()?;
    let mut max_dev = 0.0f64;
    let mut min_margin = f64::INFINITY;
    for trial in 0..trials {
        let (g, _) = trial_gains(&cfg, trial)?;
        let closed = secrecy_rate(&g, &solve_mu(&g, budget, DEFAULT_REL_TOL)?);
        let (_, grid) = grid_maximize(&g, budget, resolution)?;
        max_dev = max_dev.max((closed - grid).abs());
        min_margin = min_margin.min(closed - grid);
    }
    println!("trials={trials} max_deviation_bits={max_dev:.3e} min_margin_bits={min_margin:.3e}");
    if max_dev <= ORACLE_MAX_DEVIATION && min_margin >= -1e-9 {
        Ok(Outcome::Pass)
    } else {
        eprintln!("closed form and grid search disagree");
        Ok(Outcome::Fail)
    }
}
