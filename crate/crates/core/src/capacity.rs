//! Secrecy-rate evaluation and the uniform-allocation baseline.
//!
//! The baseline splits the transmit directions into the eavesdropper
//! nullspace (`S1`, `d_i = 0`) and the directions seen by both receivers
//! (`S2`), puts a fraction `1 - rho` of the budget on `S1` and `rho` on `S2`,
//! and spreads each share uniformly within its subspace. Only the secure
//! directions of `S2` (`c_i > d_i`, generalized singular value above one)
//! carry power; the others would only help the eavesdropper.

use serde::{Deserialize, Serialize};

use crate::allocation::{is_secure, PowerAllocation};
use crate::error::{Error, Result};
use crate::gsvd::{ChannelPair, SubchannelGains};
use crate::linalg::{log2_det_hpd, Complex64, ComplexMatrix};

/// Default threshold separating exact nullspace directions from weak ones.
pub const DEFAULT_NULL_EPS: f64 = 1e-9;

/// Secrecy rate in bits per channel use,
/// `sum_i log2(1 + p_i c_i) - log2(1 + p_i d_i)`.
///
/// Not clamped: an allocation that feeds insecure directions can produce a
/// negative value here.
pub fn secrecy_rate(g: &SubchannelGains, alloc: &PowerAllocation) -> f64 {
    debug_assert_eq!(g.len(), alloc.p.len());
    alloc
        .p
        .iter()
        .zip(g.c.iter().zip(&g.d))
        .map(|(&p, (&c, &d))| ((p * c).ln_1p() - (p * d).ln_1p()) / std::f64::consts::LN_2)
        .sum()
}

/// `log2 det(I + Hr Q Hr^H) - log2 det(I + He Q He^H)` evaluated through the
/// original channels.
pub fn secrecy_rate_matrix_form(ch: &ChannelPair, q_x: &ComplexMatrix) -> Result<f64> {
    if q_x.shape() != (ch.n_t(), ch.n_t()) {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {:?}, expected {n}x{n}",
            q_x.shape(),
            n = ch.n_t()
        )));
    }
    let side = |h: &ComplexMatrix| {
        let n = h.nrows();
        let m = ComplexMatrix::identity(n, n) + h * q_x * h.adjoint();
        let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        log2_det_hpd(&m)
    };
    Ok(side(ch.hr())? - side(ch.he())?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubspacePartition {
    /// Inside the eavesdropper nullspace, visible to the receiver.
    pub s1: Vec<usize>,
    /// Visible to both receivers.
    pub s2: Vec<usize>,
    /// Invisible to the legitimate receiver.
    pub excluded: Vec<usize>,
}

pub fn classify_subspaces(g: &SubchannelGains, null_eps: f64) -> SubspacePartition {
    let mut part = SubspacePartition { s1: Vec::new(), s2: Vec::new(), excluded: Vec::new() };
    for i in 0..g.len() {
        if g.c[i] < null_eps {
            part.excluded.push(i);
        } else if g.d[i] < null_eps {
            part.s1.push(i);
        } else {
            part.s2.push(i);
        }
    }
    part
}

/// How a power share is spread over the directions of a subspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum UniformMode {
    /// Equal radiated power `a_i p_i` per direction.
    #[default]
    Transmit,
    /// Equal symbol power `p_i` per direction.
    Symbol,
}

fn spread(p: &mut [f64], idx: &[usize], share: f64, a: &[f64], mode: UniformMode) {
    if idx.is_empty() {
        return;
    }
    match mode {
        UniformMode::Transmit => {
            let per_dir = share / idx.len() as f64;
            for &i in idx {
                p[i] = per_dir / a[i];
            }
        }
        UniformMode::Symbol => {
            let total_a: f64 = idx.iter().map(|&i| a[i]).sum();
            for &i in idx {
                p[i] = share / total_a;
            }
        }
    }
}

/// Uniform baseline with a fraction `rho` of the budget on the secure part
/// of `S2`. `rho` is forced to 1 when `S1` is empty and to 0 when `S2` has no
/// secure direction.
pub fn uniform_allocation(
    g: &SubchannelGains,
    part: &SubspacePartition,
    budget: f64,
    rho: f64,
    mode: UniformMode,
) -> Result<PowerAllocation> {
    let s2: Vec<usize> = part.s2.iter().copied().filter(|&i| is_secure(g.c[i], g.d[i])).collect();
    if part.s1.is_empty() && s2.is_empty() {
        return Err(Error::InvalidInput("no secure transmit direction".into()));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidInput(format!("rho = {rho} outside [0, 1]")));
    }
    let rho = if part.s1.is_empty() {
        1.0
    } else if s2.is_empty() {
        0.0
    } else {
        rho
    };
    let mut p = vec![0.0; g.len()];
    spread(&mut p, &part.s1, (1.0 - rho) * budget, &g.a, mode);
    spread(&mut p, &s2, rho * budget, &g.a, mode);
    Ok(PowerAllocation::from_powers(p, &g.a, None))
}

/// Uniform baseline over the secure directions only (`c_i > d_i`); the
/// zero allocation if there are none.
pub fn uniform_secure_allocation(g: &SubchannelGains, budget: f64, mode: UniformMode) -> PowerAllocation {
    let secure: Vec<usize> = (0..g.len()).filter(|&i| is_secure(g.c[i], g.d[i])).collect();
    let mut p = vec![0.0; g.len()];
    spread(&mut p, &secure, budget, &g.a, mode);
    PowerAllocation::from_powers(p, &g.a, None)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateCurve {
    pub rho: Vec<f64>,
    pub rate_bits: Vec<f64>,
}

/// Uniform-baseline secrecy rate at every `rho` in `grid`. A configuration
/// with no secure direction at all has rate 0 throughout.
pub fn fraction_sweep(
    g: &SubchannelGains,
    part: &SubspacePartition,
    budget: f64,
    grid: &[f64],
    mode: UniformMode,
) -> Result<RateCurve> {
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("rho grid must be strictly increasing".into()));
    }
    let any_secure = (0..g.len()).any(|i| is_secure(g.c[i], g.d[i]));
    let rate_bits = if any_secure {
        grid.iter()
            .map(|&rho| uniform_allocation(g, part, budget, rho, mode).map(|alloc| secrecy_rate(g, &alloc)))
            .collect::<Result<_>>()?
    } else {
        vec![0.0; grid.len()]
    };
    Ok(RateCurve { rho: grid.to_vec(), rate_bits })
}
