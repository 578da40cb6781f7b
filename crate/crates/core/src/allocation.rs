//! Optimal diagonal power allocation for GSVD beamforming.
//!
//! Per direction the allocation maximizes
//! `log2(1 + p c) - log2(1 + p d) - mu a p`. For `c > d` the maximizer is the
//! positive root of the stationarity condition clamped at zero; otherwise the
//! direction stays silent. `mu` is then tuned by bisection so that the
//! radiated power `sum_i a_i p_i` meets the budget.
//!
//! Multiplier convention: the closed form absorbs the `1/ln 2` of the base-2
//! derivative into `mu`, so a root satisfies
//! `c/(1 + x c) - d/(1 + x d) = mu a`. [`f_of_x`] keeps the `1/ln 2` factor.

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gsvd::{GsvdFactors, SubchannelGains};
use crate::linalg::{Complex64, ComplexMatrix};

/// Default relative tolerance on meeting the power budget.
pub const DEFAULT_REL_TOL: f64 = 1e-10;
/// Iteration cap for both the bracket expansion and the bisection.
pub const MAX_ITER: usize = 200;
/// A direction is secure when `c - d` exceeds this margin. Exact ties
/// (e.g. `Hr = He`) come out of the factorization with rounding noise on
/// either side, and those must not attract power.
pub const SECURE_MARGIN: f64 = 1e-12;

/// Below this value of `c d` the closed form is replaced by its `d -> 0` limit.
const SMALL_CD: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerAllocation {
    /// Symbol power per direction (diagonal of `P`).
    pub p: Vec<f64>,
    /// Lagrange multiplier; `None` when no multiplier is involved (no secure
    /// direction, or a heuristic allocation).
    pub mu: Option<f64>,
    /// `sum_i a_i p_i = Tr(A^H A P)`.
    pub effective_power: f64,
}

impl PowerAllocation {
    pub fn zeros(q: usize) -> Self {
        PowerAllocation { p: vec![0.0; q], mu: None, effective_power: 0.0 }
    }

    /// Builds an allocation from symbol powers, computing the radiated power.
    pub fn from_powers(p: Vec<f64>, a: &[f64], mu: Option<f64>) -> Self {
        let effective_power = p.iter().zip(a).map(|(p, a)| p * a).sum();
        PowerAllocation { p, mu, effective_power }
    }
}

pub fn is_secure(c: f64, d: f64) -> bool {
    c - d > SECURE_MARGIN
}

/// Derivative of `log2(1 + x c) - log2(1 + x d) - mu a x`.
pub fn f_of_x(x: f64, c: f64, d: f64, a: f64, mu: f64) -> f64 {
    (c / (1.0 + x * c) - d / (1.0 + x * d)) / LN_2 - mu * a
}

/// `1 - 4cd + 4(c - d)cd/(mu a)`, the discriminant under the square root.
/// Nonnegative whenever `c + d = 1` and `c > d`, since `1 - 4cd = (1 - 2d)^2`.
pub fn radicand(c: f64, d: f64, a: f64, mu: f64) -> f64 {
    1.0 - 4.0 * c * d + 4.0 * (c - d) * c * d / (mu * a)
}

/// Largest root of `c/(1 + x c) - d/(1 + x d) = mu a` for `c > d`, `c + d = 1`.
/// May be negative when the direction is too weak for this `mu`.
pub fn largest_root(c: f64, d: f64, a: f64, mu: f64) -> Result<f64> {
    if !(c > d) {
        return Err(Error::Contract(format!("largest_root needs c > d, got c={c} d={d}")));
    }
    if !(mu > 0.0 && a > 0.0) {
        return Err(Error::Contract(format!("largest_root needs mu, a > 0, got mu={mu} a={a}")));
    }
    Ok(root(c, d, a, mu))
}

fn root(c: f64, d: f64, a: f64, mu: f64) -> f64 {
    let cd = c * d;
    if cd < SMALL_CD {
        return 1.0 / (mu * a) - 1.0 / c;
    }
    // (-1 + sqrt(R)) / (2cd) with R = 1 + delta, rationalized to avoid the
    // cancellation in -1 + sqrt(R) when delta is small.
    let excess = (c - d) / (mu * a) - 1.0;
    let r = radicand(c, d, a, mu).max(0.0);
    2.0 * excess / (1.0 + r.sqrt())
}

/// Closed-form allocation for a fixed multiplier.
pub fn power_for_mu(g: &SubchannelGains, mu: f64) -> PowerAllocation {
    let p = (0..g.len())
        .map(|i| {
            if is_secure(g.c[i], g.d[i]) {
                root(g.c[i], g.d[i], g.a[i], mu).max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    PowerAllocation::from_powers(p, &g.a, Some(mu))
}

/// Finds `mu` such that the closed-form allocation radiates `budget` within
/// `rel_tol * budget`. Returns the zero allocation when no direction is secure.
///
/// For very small budgets (radiated power near `1e-9` and below) the
/// multiplier sits so close to its zero-power value that adjacent floats
/// already differ by more than `rel_tol`; the closest achievable allocation
/// is returned then.
pub fn solve_mu(g: &SubchannelGains, budget: f64, rel_tol: f64) -> Result<PowerAllocation> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::InvalidInput(format!("budget must be positive, got {budget}")));
    }
    let mu_hi = (0..g.len())
        .filter(|&i| is_secure(g.c[i], g.d[i]))
        .map(|i| (g.c[i] - g.d[i]) / g.a[i])
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |m| m.max(v))));
    let Some(mut hi) = mu_hi else {
        return Ok(PowerAllocation::zeros(g.len()));
    };

    // At mu_hi every direction is silent; shrink mu until the budget is exceeded.
    let mut lo = hi / 2.0;
    let mut expansions = 0;
    while power_for_mu(g, lo).effective_power < budget {
        hi = lo;
        lo /= 2.0;
        expansions += 1;
        if expansions > MAX_ITER {
            return Err(Error::Bisection(format!(
                "no multiplier reaches budget {budget} after {MAX_ITER} halvings"
            )));
        }
    }

    let mut best = power_for_mu(g, lo);
    for _ in 0..MAX_ITER {
        if (best.effective_power - budget).abs() <= rel_tol * budget {
            return Ok(best);
        }
        // geometric midpoint: mu spans many orders of magnitude at high budgets
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            // Bracket collapsed to adjacent floats: for budgets this small the
            // multiplier cannot resolve the tolerance, so take the closest.
            return Ok(best);
        }
        let alloc = power_for_mu(g, mid);
        if alloc.effective_power > budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if (alloc.effective_power - budget).abs() < (best.effective_power - budget).abs() {
            best = alloc;
        }
    }
    if (best.effective_power - budget).abs() <= rel_tol * budget {
        Ok(best)
    } else {
        Err(Error::Bisection(format!(
            "radiated power {} misses budget {budget} beyond relative tolerance {rel_tol}",
            best.effective_power
        )))
    }
}

/// Input covariance `Q_x = A diag(p) A^H`.
pub fn input_covariance(f: &GsvdFactors, alloc: &PowerAllocation) -> Result<ComplexMatrix> {
    if alloc.p.len() != f.q() {
        return Err(Error::DimensionMismatch(format!(
            "{} powers for {} beamforming directions",
            alloc.p.len(),
            f.q()
        )));
    }
    let mut ap = f.a.clone();
    for (j, &p) in alloc.p.iter().enumerate() {
        ap.column_mut(j).scale_mut(p);
    }
    let q = ap * f.a.adjoint();
    // symmetrize away rounding
    Ok((&q + q.adjoint()) * Complex64::new(0.5, 0.0))
}
