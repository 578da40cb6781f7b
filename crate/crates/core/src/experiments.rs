//! Seeded Rayleigh-fading Monte Carlo campaigns.
//!
//! Two campaigns are supported: a sweep of the fraction of power given to
//! the non-nullspace subspace at a fixed budget, and an SNR sweep comparing
//! the optimal allocation with the uniform baseline over secure directions.
//!
//! Every random number is addressed by `(seed, substream, matrix, entry)`
//! through a ChaCha20 stream cipher, so trials can run in any order or on any
//! number of threads and still produce identical records.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{solve_mu, DEFAULT_REL_TOL};
use crate::capacity::{
    classify_subspaces, fraction_sweep, secrecy_rate, uniform_secure_allocation, RateCurve,
    UniformMode, DEFAULT_NULL_EPS,
};
use crate::error::{Error, Result};
use crate::gsvd::{gsvd, subchannel_gains, ChannelPair, SubchannelGains};
use crate::linalg::{Complex64, ComplexMatrix};

/// Retries allowed per trial when a draw is rank deficient.
pub const MAX_RESAMPLES: u64 = 64;

const RECEIVER_MATRIX: u128 = 0;
const EAVESDROPPER_MATRIX: u128 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_t: usize,
    pub n_r: usize,
    pub n_e: usize,
    /// Per-entry variance of the legitimate channel.
    pub sigma_r2: f64,
    /// Per-entry variance of the eavesdropper channel.
    pub sigma_e2: f64,
    /// Total transmit power; noise is unit variance so this is also the SNR.
    pub budget: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub uniform_mode: UniformMode,
}

impl ExperimentConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_t: usize,
        n_r: usize,
        n_e: usize,
        sigma_r2: f64,
        sigma_e2: f64,
        budget: f64,
        trials: usize,
        seed: u64,
    ) -> Self {
        ExperimentConfig {
            n_t,
            n_r,
            n_e,
            sigma_r2,
            sigma_e2,
            budget,
            trials,
            seed,
            rho_grid: None,
            snr_db_grid: None,
            uniform_mode: UniformMode::Transmit,
        }
    }

    pub fn with_rho_grid(mut self, grid: Vec<f64>) -> Self {
        self.rho_grid = Some(grid);
        self
    }

    pub fn with_snr_db_grid(mut self, grid: Vec<f64>) -> Self {
        self.snr_db_grid = Some(grid);
        self
    }

    pub fn with_uniform_mode(mut self, mode: UniformMode) -> Self {
        self.uniform_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.n_r == 0 || self.n_e == 0 {
            return Err(Error::InvalidInput("antenna counts must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be at least 1".into()));
        }
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !nonneg(self.sigma_r2) || !nonneg(self.sigma_e2) {
            return Err(Error::InvalidInput("channel variances must be finite and nonnegative".into()));
        }
        if !(self.budget > 0.0 && self.budget.is_finite()) {
            return Err(Error::InvalidInput("budget must be positive".into()));
        }
        for grid in [&self.rho_grid, &self.snr_db_grid].into_iter().flatten() {
            if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidInput("grids must be nonempty and strictly increasing".into()));
            }
            if grid.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("grid values must be finite".into()));
            }
        }
        if let Some(rho) = &self.rho_grid {
            if rho.iter().any(|r| !(0.0..=1.0).contains(r)) {
                return Err(Error::InvalidInput("rho values must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

fn unit_interval(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn gaussian_matrix(rng: &mut ChaCha20Rng, matrix: u128, rows: usize, cols: usize, variance: f64) -> ComplexMatrix {
    // entry e occupies words [4e, 4e + 4) of the block reserved for `matrix`
    rng.set_word_pos(matrix << 64);
    let scale = (variance / 2.0).sqrt();
    let mut entries = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        // Box-Muller: one pair of uniforms yields the real and imaginary parts
        let u1 = 1.0 - unit_interval(rng.next_u64());
        let u2 = unit_interval(rng.next_u64());
        let r = (-2.0 * u1.ln()).sqrt() * scale;
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        entries.push(Complex64::new(r * c, r * s));
    }
    ComplexMatrix::from_row_iterator(rows, cols, entries)
}

/// Draws the channel pair of substream `stream`. Entries are i.i.d.
/// `CN(0, sigma^2)`.
pub fn sample_channel_stream(cfg: &ExperimentConfig, stream: u64) -> ChannelPair {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let hr = gaussian_matrix(&mut rng, RECEIVER_MATRIX, cfg.n_r, cfg.n_t, cfg.sigma_r2);
    let he = gaussian_matrix(&mut rng, EAVESDROPPER_MATRIX, cfg.n_e, cfg.n_t, cfg.sigma_e2);
    ChannelPair::new(hr, he).expect("validated config yields nonempty finite channels")
}

pub fn sample_channel(cfg: &ExperimentConfig, trial: usize) -> ChannelPair {
    sample_channel_stream(cfg, trial as u64)
}

/// Gains for `trial`, redrawing from substream `trial + trials * k` on the
/// `k`-th degenerate draw. Returns the gains and the number of redraws.
pub fn trial_gains(cfg: &ExperimentConfig, trial: usize) -> Result<(SubchannelGains, usize)> {
    let mut last = None;
    for k in 0..=MAX_RESAMPLES {
        let stream = trial as u64 + cfg.trials as u64 * k;
        match gsvd(&sample_channel_stream(cfg, stream)) {
            Ok(f) => return Ok((subchannel_gains(&f), k as usize)),
            Err(e @ Error::DegenerateChannel { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// One measurement row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    /// `rho` or `snr_db`, depending on the campaign.
    pub parameter: f64,
    pub uniform_rate: f64,
    pub optimal_rate: f64,
    pub q: usize,
    pub dim_s1: usize,
    pub dim_s2: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub param: f64,
    pub mean_uniform: f64,
    pub se_uniform: f64,
    pub mean_optimal: f64,
    pub se_optimal: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Campaign {
    Fraction,
    Snr,
}

impl Campaign {
    fn param_name(self) -> &'static str {
        match self {
            Campaign::Fraction => "rho",
            Campaign::Snr => "snr_db",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FractionOutcome {
    pub records: Vec<TrialRecord>,
    pub aggregate: Vec<AggregateRow>,
    /// Mean uniform-baseline rate per `rho`.
    pub curve: RateCurve,
    pub mean_optimal: f64,
    pub resampled: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SnrOutcome {
    pub records: Vec<TrialRecord>,
    pub aggregate: Vec<AggregateRow>,
    pub resampled: usize,
    pub warnings: Vec<String>,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Averages records per parameter value, in grid order. `records` must be
/// trial-major with `grid.len()` rows per trial.
fn aggregate(records: &[TrialRecord], grid: &[f64]) -> Vec<AggregateRow> {
    grid.iter()
        .enumerate()
        .map(|(j, &param)| {
            let rows: Vec<&TrialRecord> = records.iter().skip(j).step_by(grid.len()).collect();
            let uniform: Vec<f64> = rows.iter().map(|r| r.uniform_rate).collect();
            let optimal: Vec<f64> = rows.iter().map(|r| r.optimal_rate).collect();
            let (mean_uniform, se_uniform) = mean_se(&uniform);
            let (mean_optimal, se_optimal) = mean_se(&optimal);
            AggregateRow { param, mean_uniform, se_uniform, mean_optimal, se_optimal, trials: rows.len() }
        })
        .collect()
}

/// Fraction-campaign rows for one set of gains.
pub fn fraction_trial(
    g: &SubchannelGains,
    trial: usize,
    budget: f64,
    grid: &[f64],
    mode: UniformMode,
) -> Result<Vec<TrialRecord>> {
    let optimal_rate = secrecy_rate(g, &solve_mu(g, budget, DEFAULT_REL_TOL)?);
    let part = classify_subspaces(g, DEFAULT_NULL_EPS);
    let curve = fraction_sweep(g, &part, budget, grid, mode)?;
    Ok(curve
        .rho
        .iter()
        .zip(&curve.rate_bits)
        .map(|(&rho, &uniform_rate)| TrialRecord {
            trial,
            parameter: rho,
            uniform_rate,
            optimal_rate,
            q: g.len(),
            dim_s1: part.s1.len(),
            dim_s2: part.s2.len(),
        })
        .collect())
}

/// SNR-campaign rows for one set of gains.
pub fn snr_trial(g: &SubchannelGains, trial: usize, snr_db: &[f64], mode: UniformMode) -> Result<Vec<TrialRecord>> {
    let part = classify_subspaces(g, DEFAULT_NULL_EPS);
    snr_db
        .iter()
        .map(|&snr| {
            let budget = 10f64.powf(snr / 10.0);
            let optimal_rate = secrecy_rate(g, &solve_mu(g, budget, DEFAULT_REL_TOL)?);
            let uniform_rate = secrecy_rate(g, &uniform_secure_allocation(g, budget, mode)).max(0.0);
            Ok(TrialRecord {
                trial,
                parameter: snr,
                uniform_rate,
                optimal_rate,
                q: g.len(),
                dim_s1: part.s1.len(),
                dim_s2: part.s2.len(),
            })
        })
        .collect()
}

fn run_trials<F>(cfg: &ExperimentConfig, per_trial: F) -> Result<(Vec<TrialRecord>, usize)>
where
    F: Fn(&SubchannelGains, usize) -> Result<Vec<TrialRecord>> + Sync,
{
    let per: Vec<(Vec<TrialRecord>, usize)> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let (g, redraws) = trial_gains(cfg, trial)?;
            Ok((per_trial(&g, trial)?, redraws))
        })
        .collect::<Result<_>>()?;
    let resampled = per.iter().map(|(_, k)| k).sum();
    Ok((per.into_iter().flat_map(|(r, _)| r).collect(), resampled))
}

pub fn run_fraction_experiment(cfg: &ExperimentConfig) -> Result<FractionOutcome> {
    cfg.validate()?;
    let grid = cfg
        .rho_grid
        .clone()
        .ok_or_else(|| Error::InvalidInput("fraction campaign needs rho_grid".into()))?;
    let mut warnings = Vec::new();
    if cfg.n_t <= cfg.n_e {
        warnings.push(format!(
            "n_t = {} <= n_e = {}: the eavesdropper channel has no nullspace, rho is forced to 1",
            cfg.n_t, cfg.n_e
        ));
    }
    let (records, resampled) =
        run_trials(cfg, |g, trial| fraction_trial(g, trial, cfg.budget, &grid, cfg.uniform_mode))?;
    let aggregate = aggregate(&records, &grid);
    let curve = RateCurve {
        rho: grid.clone(),
        rate_bits: aggregate.iter().map(|r| r.mean_uniform).collect(),
    };
    let mean_optimal = aggregate[0].mean_optimal;
    Ok(FractionOutcome { records, aggregate, curve, mean_optimal, resampled, warnings })
}

pub fn run_snr_sweep(cfg: &ExperimentConfig) -> Result<SnrOutcome> {
    cfg.validate()?;
    let grid = cfg
        .snr_db_grid
        .clone()
        .ok_or_else(|| Error::InvalidInput("SNR campaign needs snr_db_grid".into()))?;
    let mut warnings = Vec::new();
    if cfg.n_t > cfg.n_e {
        warnings.push(format!(
            "n_t = {} > n_e = {}: the eavesdropper channel has a nullspace",
            cfg.n_t, cfg.n_e
        ));
    }
    let (records, resampled) = run_trials(cfg, |g, trial| snr_trial(g, trial, &grid, cfg.uniform_mode))?;
    let aggregate = aggregate(&records, &grid);
    Ok(SnrOutcome { records, aggregate, resampled, warnings })
}

/// Rates are written with 12 significant digits.
fn fmt_rate(x: f64) -> String {
    format!("{x:.11e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file)))
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    w.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let inner = w.into_inner().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.into_error(),
    })?;
    inner
        .into_inner()
        .map_err(|e| Error::Io { path: path.to_path_buf(), source: e.into_error() })?
        .sync_all()
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Writes per-trial records:
/// `trial,<rho|snr_db>,uniform_rate_bits,optimal_rate_bits,q,dim_s1,dim_s2`.
pub fn write_trials_csv(records: &[TrialRecord], campaign: Campaign, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
    w.write_record([
        "trial",
        campaign.param_name(),
        "uniform_rate_bits",
        "optimal_rate_bits",
        "q",
        "dim_s1",
        "dim_s2",
    ])
    .map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.trial.to_string(),
            r.parameter.to_string(),
            fmt_rate(r.uniform_rate),
            fmt_rate(r.optimal_rate),
            r.q.to_string(),
            r.dim_s1.to_string(),
            r.dim_s2.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w, path)
}

/// Writes `param,mean_uniform,se_uniform,mean_optimal,se_optimal,trials`.
pub fn write_aggregate_csv(rows: &[AggregateRow], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
    w.write_record(["param", "mean_uniform", "se_uniform", "mean_optimal", "se_optimal", "trials"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.param.to_string(),
            fmt_rate(r.mean_uniform),
            fmt_rate(r.se_uniform),
            fmt_rate(r.mean_optimal),
            fmt_rate(r.se_optimal),
            r.trials.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w, path)
}

/// Parses a file written by [`write_trials_csv`].
pub fn read_trials_csv(path: &Path) -> Result<(Campaign, Vec<TrialRecord>)> {
    let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let campaign = match rdr.headers().map_err(csv_err)?.get(1) {
        Some("rho") => Campaign::Fraction,
        Some("snr_db") => Campaign::Snr,
        other => {
            return Err(Error::InvalidInput(format!(
                "{}: unexpected parameter column {other:?}",
                path.display()
            )))
        }
    };
    let bad = |what: &str| Error::InvalidInput(format!("{}: malformed {what}", path.display()));
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        if row.len() != 7 {
            return Err(bad("row"));
        }
        let uint = |i: usize| row[i].parse::<usize>().map_err(|_| bad("integer field"));
        let float = |i: usize| row[i].parse::<f64>().map_err(|_| bad("numeric field"));
        out.push(TrialRecord {
            trial: uint(0)?,
            parameter: float(1)?,
            uniform_rate: float(2)?,
            optimal_rate: float(3)?,
            q: uint(4)?,
            dim_s1: uint(5)?,
            dim_s2: uint(6)?,
        });
    }
    Ok((campaign, out))
}
