//! Brute-force and first-order checks of the closed-form allocation.
//!
//! [`grid_maximize`] searches the power simplex directly and never touches
//! the closed form; [`kkt_check`] verifies the optimality conditions an
//! allocation must satisfy.

use rayon::prelude::*;
use serde::Serialize;

use crate::allocation::{is_secure, PowerAllocation};
use crate::error::{Error, Result};
use crate::gsvd::SubchannelGains;

pub const MAX_GRID_DIM: usize = 4;
pub const MIN_RESOLUTION: usize = 50;

const REFINE_SWEEPS: usize = 3;
const GOLDEN_ITERS: usize = 90;

/// Secrecy rate of direction `i` at radiated power `t`.
fn term(g: &SubchannelGains, i: usize, t: f64) -> f64 {
    let p = t / g.a[i];
    ((p * g.c[i]).ln_1p() - (p * g.d[i]).ln_1p()) / std::f64::consts::LN_2
}

fn objective(g: &SubchannelGains, t: &[f64]) -> f64 {
    t.iter().enumerate().map(|(i, &ti)| term(g, i, ti)).sum()
}

#[derive(Clone)]
struct Candidate {
    rate: f64,
    steps: Vec<usize>,
}

impl Candidate {
    /// Higher rate wins; equal rates resolve to the lexicographically smaller point.
    fn better(self, other: Candidate) -> Candidate {
        if other.rate > self.rate || (other.rate == self.rate && other.steps < self.steps) {
            other
        } else {
            self
        }
    }
}

fn enumerate(table: &[Vec<f64>], prefix: &mut Vec<usize>, partial: f64, left: usize, best: &mut Candidate) {
    let dim = prefix.len();
    if dim == table.len() {
        let cand = Candidate { rate: partial, steps: prefix.clone() };
        *best = std::mem::replace(best, Candidate { rate: f64::NEG_INFINITY, steps: Vec::new() })
            .better(cand);
        return;
    }
    for k in 0..=left {
        prefix.push(k);
        enumerate(table, prefix, partial + table[dim][k], left - k, best);
        prefix.pop();
    }
}

/// Maximizes `f` on `[lo, hi]` by golden-section search, assuming unimodality.
fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..GOLDEN_ITERS {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        }
    }
    0.5 * (a + b)
}

fn refine(g: &SubchannelGains, budget: f64, t: &mut [f64]) {
    let n = t.len();
    let mut current = objective(g, t);
    let mut try_move = |t: &mut [f64], trial: Vec<f64>| {
        let val = objective(g, &trial);
        if val > current {
            current = val;
            t.copy_from_slice(&trial);
        }
    };
    for _ in 0..REFINE_SWEEPS {
        for i in 0..n {
            let slack = (budget - t.iter().sum::<f64>()).max(0.0);
            let hi = t[i] + slack;
            let base = t.to_vec();
            let eval = |x: f64| {
                let mut s = base.clone();
                s[i] = x;
                objective(g, &s)
            };
            let x = golden_max(eval, 0.0, hi);
            let mut trial = base;
            trial[i] = x;
            try_move(t, trial);
        }
        // Moves along the budget face: shift power between two directions.
        for i in 0..n {
            for j in (i + 1)..n {
                let base = t.to_vec();
                let shift = |s: f64| {
                    let mut v = base.clone();
                    v[i] += s;
                    v[j] -= s;
                    v
                };
                let s = golden_max(|s| objective(g, &shift(s)), -base[i], base[j]);
                let mut trial = shift(s);
                trial[i] = trial[i].max(0.0);
                trial[j] = trial[j].max(0.0);
                try_move(t, trial);
            }
        }
    }
}

/// Exhaustive search over `{sum_i a_i p_i <= budget, p_i >= 0}` discretized at
/// `resolution` steps per axis, followed by coordinate-wise golden-section
/// refinement. Returns the best allocation found and its rate.
pub fn grid_maximize(
    g: &SubchannelGains,
    budget: f64,
    resolution: usize,
) -> Result<(PowerAllocation, f64)> {
    let q = g.len();
    if q == 0 || q > MAX_GRID_DIM {
        return Err(Error::InvalidInput(format!(
            "grid oracle handles 1..={MAX_GRID_DIM} directions, got {q}"
        )));
    }
    if resolution < MIN_RESOLUTION {
        return Err(Error::InvalidInput(format!(
            "grid resolution must be at least {MIN_RESOLUTION}, got {resolution}"
        )));
    }
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::InvalidInput(format!("budget must be positive, got {budget}")));
    }

    let step = budget / resolution as f64;
    let table: Vec<Vec<f64>> = (0..q)
        .map(|i| (0..=resolution).map(|k| term(g, i, k as f64 * step)).collect())
        .collect();

    let best = (0..=resolution)
        .into_par_iter()
        .map(|k0| {
            let mut best = Candidate { rate: f64::NEG_INFINITY, steps: Vec::new() };
            let mut prefix = vec![k0];
            enumerate(&table, &mut prefix, table[0][k0], resolution - k0, &mut best);
            best
        })
        .reduce(
            || Candidate { rate: f64::NEG_INFINITY, steps: Vec::new() },
            Candidate::better,
        );

    let mut t: Vec<f64> = best.steps.iter().map(|&k| k as f64 * step).collect();
    refine(g, budget, &mut t);
    let p: Vec<f64> = t.iter().zip(&g.a).map(|(t, a)| t / a).collect();
    let rate = objective(g, &t);
    Ok((PowerAllocation::from_powers(p, &g.a, None), rate))
}

#[derive(Debug, Clone, Serialize)]
pub struct KktReport {
    /// Largest power placed on a direction with `c_i <= d_i`.
    pub insecure_power: f64,
    /// Largest relative stationarity residual over active directions.
    pub stationarity: f64,
    /// Largest relative excess of `(c_i - d_i)/a_i` over `mu` among silent
    /// secure directions.
    pub inactive_excess: f64,
    /// `|effective_power - budget| / budget` (0 when no direction is secure).
    pub budget_residual: f64,
    pub tol: f64,
}

impl KktReport {
    pub fn insecure_ok(&self) -> bool {
        self.insecure_power <= self.tol
    }

    pub fn stationarity_ok(&self) -> bool {
        self.stationarity <= self.tol
    }

    pub fn inactive_ok(&self) -> bool {
        self.inactive_excess <= self.tol
    }

    pub fn budget_ok(&self) -> bool {
        self.budget_residual <= self.tol
    }

    pub fn passes(&self) -> bool {
        self.insecure_ok() && self.stationarity_ok() && self.inactive_ok() && self.budget_ok()
    }
}

/// Checks the first-order conditions under the closed-form multiplier
/// convention: active directions satisfy `c/(1+pc) - d/(1+pd) = mu a`, silent
/// secure ones have `(c - d)/a <= mu`. If the allocation carries no
/// multiplier, `mu` is taken as the mean marginal ratio of the active set.
pub fn kkt_check(g: &SubchannelGains, alloc: &PowerAllocation, budget: f64, tol: f64) -> KktReport {
    let n = g.len();
    let marginal = |i: usize| {
        let p = alloc.p[i];
        (g.c[i] / (1.0 + p * g.c[i]) - g.d[i] / (1.0 + p * g.d[i])) / g.a[i]
    };
    let active: Vec<usize> = (0..n).filter(|&i| alloc.p[i] > 0.0).collect();
    let mu = alloc.mu.unwrap_or_else(|| {
        if active.is_empty() {
            f64::INFINITY
        } else {
            active.iter().map(|&i| marginal(i)).sum::<f64>() / active.len() as f64
        }
    });

    let insecure_power = (0..n)
        .filter(|&i| !is_secure(g.c[i], g.d[i]))
        .map(|i| alloc.p[i])
        .fold(0.0, f64::max);
    let stationarity = active
        .iter()
        .map(|&i| ((marginal(i) - mu) / mu).abs())
        .fold(0.0, f64::max);
    let inactive_excess = (0..n)
        .filter(|&i| alloc.p[i] == 0.0 && is_secure(g.c[i], g.d[i]))
        .map(|i| ((g.c[i] - g.d[i]) / g.a[i] - mu) / mu)
        .fold(0.0, f64::max);
    let any_secure = (0..n).any(|i| is_secure(g.c[i], g.d[i]));
    let budget_residual = if any_secure {
        (alloc.effective_power - budget).abs() / budget
    } else {
        0.0
    };
    KktReport { insecure_power, stationarity, inactive_excess, budget_residual, tol }
}
