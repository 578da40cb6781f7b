//! Joint factorization of the legitimate and eavesdropper channels.
//!
//! For `Hr` (`n_r x n_t`) and `He` (`n_e x n_t`) we compute a beamformer `A`
//! (`n_t x q`, `q = min(n_t, n_r + n_e)`), unitary `Psi_r`, `Psi_e` and
//! nonnegative diagonals `C`, `D` with
//!
//! ```text
//! Hr A = Psi_r C,   He A = Psi_e D,   C^T C + D^T D = I
//! ```
//!
//! The diagonal of `C` is nondecreasing and the diagonal of `D` nonincreasing.
//!
//! Rectangular embedding: with `off = max(0, q - n_r)`, column `i >= off` of
//! `C` holds `Cdiag[i]` in row `i - off` (the first `off` entries of `Cdiag`
//! are the zeros of the receiver nullspace). Column `i < n_e` of `D` holds
//! `Ddiag[i]` in row `i`; entries `i >= n_e` are zero.

use std::cmp::Ordering;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{
    self, orthonormal_completion, orthonormality_residual, rank_with_tol, svd, Complex64,
    ComplexMatrix,
};

/// Column norms of `U2 W` below this are treated as exact zeros of `D`.
const ZERO_GAIN: f64 = 1e-12;

/// Legitimate (`hr`) and eavesdropper (`he`) channels sharing `n_t` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPair {
    hr: ComplexMatrix,
    he: ComplexMatrix,
}

impl ChannelPair {
    pub fn new(hr: ComplexMatrix, he: ComplexMatrix) -> Result<Self> {
        if hr.ncols() != he.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "Hr has {} columns, He has {}",
                hr.ncols(),
                he.ncols()
            )));
        }
        if hr.ncols() == 0 || hr.nrows() == 0 || he.nrows() == 0 {
            return Err(Error::InvalidInput("channel matrices must be nonempty".into()));
        }
        if !linalg::is_finite(&hr) || !linalg::is_finite(&he) {
            return Err(Error::NonFinite);
        }
        Ok(ChannelPair { hr, he })
    }

    pub fn hr(&self) -> &ComplexMatrix {
        &self.hr
    }

    pub fn he(&self) -> &ComplexMatrix {
        &self.he
    }

    pub fn n_t(&self) -> usize {
        self.hr.ncols()
    }

    pub fn n_r(&self) -> usize {
        self.hr.nrows()
    }

    pub fn n_e(&self) -> usize {
        self.he.nrows()
    }

    /// Number of beamforming directions, `min(n_t, n_r + n_e)`.
    pub fn q(&self) -> usize {
        self.n_t().min(self.n_r() + self.n_e())
    }

    /// `[Hr; He]`.
    pub fn stacked(&self) -> ComplexMatrix {
        let (n_r, n_e, n_t) = (self.n_r(), self.n_e(), self.n_t());
        let mut k = ComplexMatrix::zeros(n_r + n_e, n_t);
        k.rows_mut(0, n_r).copy_from(&self.hr);
        k.rows_mut(n_r, n_e).copy_from(&self.he);
        k
    }
}

#[derive(Debug, Clone)]
pub struct GsvdFactors {
    /// Beamformer, `n_t x q`.
    pub a: ComplexMatrix,
    /// `n_r x n_r` unitary.
    pub psi_r: ComplexMatrix,
    /// `n_e x n_e` unitary.
    pub psi_e: ComplexMatrix,
    /// Nondecreasing, length `q`.
    pub c_diag: Vec<f64>,
    /// Nonincreasing, length `q`.
    pub d_diag: Vec<f64>,
}

impl GsvdFactors {
    pub fn q(&self) -> usize {
        self.c_diag.len()
    }

    /// Rectangular `n_r x q` matrix `C` (see the module docs for the layout).
    pub fn c_matrix(&self) -> ComplexMatrix {
        let n_r = self.psi_r.nrows();
        let q = self.q();
        let off = q.saturating_sub(n_r);
        let mut c = ComplexMatrix::zeros(n_r, q);
        for i in off..q {
            c[(i - off, i)] = Complex64::new(self.c_diag[i], 0.0);
        }
        c
    }

    /// Rectangular `n_e x q` matrix `D`.
    pub fn d_matrix(&self) -> ComplexMatrix {
        let n_e = self.psi_e.nrows();
        let q = self.q();
        let mut d = ComplexMatrix::zeros(n_e, q);
        for i in 0..q.min(n_e) {
            d[(i, i)] = Complex64::new(self.d_diag[i], 0.0);
        }
        d
    }
}

/// Per-direction scalars: `c_i = Cdiag_i^2`, `d_i = Ddiag_i^2` and
/// `a_i = (A^H A)_ii`, the transmit power cost of one unit of symbol power.
#[derive(Debug, Clone, PartialEq)]
pub struct SubchannelGains {
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub a: Vec<f64>,
}

impl SubchannelGains {
    /// Validates lengths, ranges and `c_i + d_i = 1` (within `1e-8`).
    pub fn new(c: Vec<f64>, d: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        if c.len() != d.len() || c.len() != a.len() {
            return Err(Error::DimensionMismatch(format!(
                "gain lengths differ: c={} d={} a={}",
                c.len(),
                d.len(),
                a.len()
            )));
        }
        for i in 0..c.len() {
            if !(0.0..=1.0).contains(&c[i]) || !(0.0..=1.0).contains(&d[i]) {
                return Err(Error::InvalidInput(format!("gain {i} outside [0, 1]")));
            }
            if (c[i] + d[i] - 1.0).abs() > 1e-8 {
                return Err(Error::InvalidInput(format!(
                    "c + d = {} at index {i}",
                    c[i] + d[i]
                )));
            }
            if !(a[i] > 0.0 && a[i].is_finite()) {
                return Err(Error::InvalidInput(format!("a[{i}] = {} is not positive", a[i])));
            }
        }
        Ok(SubchannelGains { c, d, a })
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }
}

/// [`gsvd_with_tol`] at the default rank tolerance.
pub fn gsvd(ch: &ChannelPair) -> Result<GsvdFactors> {
    gsvd_with_tol(ch, linalg::DEFAULT_RANK_TOL)
}

struct Direction {
    c: f64,
    w: DVector<Complex64>,
    u: Option<DVector<Complex64>>,
    m: DVector<Complex64>,
    d: f64,
}

/// Computes the GSVD of `ch`. `rank_tol` is the relative threshold used to
/// decide whether `[Hr; He]` has full rank `q`; rank-deficient pairs are
/// rejected with [`Error::DegenerateChannel`].
pub fn gsvd_with_tol(ch: &ChannelPair, rank_tol: f64) -> Result<GsvdFactors> {
    let (n_r, n_e) = (ch.n_r(), ch.n_e());
    let q = ch.q();

    let outer = svd(&ch.stacked())?;
    let rank = rank_with_tol(&outer.s, rank_tol);
    if rank < q {
        return Err(Error::DegenerateChannel { rank, expected: q });
    }
    let u1 = outer.u.rows(0, n_r).into_owned();
    let u2 = outer.u.rows(n_r, n_e).into_owned();

    // U1 = Psi_r S W^H. Directions beyond rank(U1) span its nullspace (c = 0).
    let inner = svd(&u1)?;
    let r = inner.s.len();
    let mut w_full = ComplexMatrix::zeros(q, q);
    w_full.columns_mut(0, r).copy_from(&inner.v);
    let w_full = orthonormal_completion(&w_full, r)?;

    let mut dirs: Vec<Direction> = (0..q)
        .map(|j| {
            let w = w_full.column(j).into_owned();
            let m = &u2 * &w;
            let d = m.norm();
            let (c, u) = if j < r {
                (inner.s[j].min(1.0), Some(inner.u.column(j).into_owned()))
            } else {
                (0.0, None)
            };
            Direction { c, w, u, m, d }
        })
        .collect();

    // Order by the angle atan2(c, d): accurate at both ends of [0, pi/2],
    // where c alone (near 1) or d alone (near 1) loses resolution.
    dirs.sort_by(|x, y| {
        x.c.atan2(x.d)
            .total_cmp(&y.c.atan2(y.d))
            .then_with(|| match (x.u.is_some(), y.u.is_some()) {
                (false, true) => Ordering::Less,
                (true, false) => Ordering::Greater,
                _ => Ordering::Equal,
            })
    });

    let off = q - r;
    debug_assert!(dirs[..off].iter().all(|x| x.u.is_none()));

    let mut psi_r = ComplexMatrix::zeros(n_r, n_r);
    for (i, dir) in dirs.iter().enumerate().skip(off) {
        let u = dir.u.as_ref().expect("directions past the nullspace block carry a left vector");
        psi_r.set_column(i - off, u);
    }
    let psi_r = orthonormal_completion(&psi_r, r)?;

    let mut c_diag: Vec<f64> = dirs.iter().map(|x| x.c).collect();
    for i in 1..q {
        c_diag[i] = c_diag[i].max(c_diag[i - 1]);
    }
    let mut d_diag: Vec<f64> = dirs
        .iter()
        .enumerate()
        .map(|(i, x)| if i < n_e && x.d > ZERO_GAIN { x.d } else { 0.0 })
        .collect();
    for i in 1..q {
        d_diag[i] = d_diag[i].min(d_diag[i - 1]);
    }

    // Columns of U2 W are orthogonal; normalize the nonzero ones, then
    // re-orthogonalize in order of decreasing norm.
    let k = d_diag.iter().take_while(|&&d| d > 0.0).count();
    let mut psi_e = ComplexMatrix::zeros(n_e, n_e);
    for i in 0..k {
        let mut col = dirs[i].m.clone() / Complex64::new(dirs[i].d, 0.0);
        for _ in 0..2 {
            for j in 0..i {
                let prev = psi_e.column(j);
                let proj = prev.dotc(&col);
                col.axpy(-proj, &prev, Complex64::new(1.0, 0.0));
            }
        }
        let norm = col.norm();
        psi_e.set_column(i, &(col / Complex64::new(norm, 0.0)));
    }
    let psi_e = orthonormal_completion(&psi_e, k)?;

    // A = V Sigma^{-1} W
    let mut v_scaled = outer.v.clone();
    for (j, &s) in outer.s.iter().enumerate() {
        v_scaled.column_mut(j).scale_mut(1.0 / s);
    }
    let mut w_sorted = ComplexMatrix::zeros(q, q);
    for (i, dir) in dirs.iter().enumerate() {
        w_sorted.set_column(i, &dir.w);
    }
    let a = v_scaled * w_sorted;

    Ok(GsvdFactors { a, psi_r, psi_e, c_diag, d_diag })
}

pub fn subchannel_gains(f: &GsvdFactors) -> SubchannelGains {
    let a = (0..f.q()).map(|i| f.a.column(i).norm_squared()).collect();
    SubchannelGains {
        c: f.c_diag.iter().map(|x| x * x).collect(),
        d: f.d_diag.iter().map(|x| x * x).collect(),
        a,
    }
}

/// Residuals of the defining relations of a factor set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    /// `||Hr A - Psi_r C||_F / max(1, ||Hr||_F)`
    pub receiver: f64,
    /// `||He A - Psi_e D||_F / max(1, ||He||_F)`
    pub eavesdropper: f64,
    /// `||Psi_r^H Psi_r - I||_F`
    pub psi_r_unitary: f64,
    /// `||Psi_e^H Psi_e - I||_F`
    pub psi_e_unitary: f64,
    /// `max_i |Cdiag_i^2 + Ddiag_i^2 - 1|`
    pub pythagorean: f64,
    /// Largest ordering violation of `Cdiag` (increase) or `Ddiag` (decrease).
    pub ordering: f64,
    pub tol: f64,
}

impl ResidualReport {
    pub fn worst(&self) -> f64 {
        [
            self.receiver,
            self.eavesdropper,
            self.psi_r_unitary,
            self.psi_e_unitary,
            self.pythagorean,
            self.ordering,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn passes(&self) -> bool {
        self.worst() <= self.tol
    }
}

pub fn verify_factors(f: &GsvdFactors, ch: &ChannelPair, tol: f64) -> Result<ResidualReport> {
    let q = f.q();
    let shapes_ok = f.a.shape() == (ch.n_t(), q)
        && f.psi_r.shape() == (ch.n_r(), ch.n_r())
        && f.psi_e.shape() == (ch.n_e(), ch.n_e())
        && f.d_diag.len() == q;
    if !shapes_ok {
        return Err(Error::DimensionMismatch(format!(
            "factors (A {:?}, Psi_r {:?}, Psi_e {:?}, q={q}) do not fit channels {}x{}/{}x{}",
            f.a.shape(),
            f.psi_r.shape(),
            f.psi_e.shape(),
            ch.n_r(),
            ch.n_t(),
            ch.n_e(),
            ch.n_t()
        )));
    }
    let receiver = (ch.hr() * &f.a - &f.psi_r * f.c_matrix()).norm() / ch.hr().norm().max(1.0);
    let eavesdropper =
        (ch.he() * &f.a - &f.psi_e * f.d_matrix()).norm() / ch.he().norm().max(1.0);
    let pythagorean = f
        .c_diag
        .iter()
        .zip(&f.d_diag)
        .map(|(c, d)| (c * c + d * d - 1.0).abs())
        .fold(0.0, f64::max);
    let ordering = f
        .c_diag
        .windows(2)
        .map(|w| w[0] - w[1])
        .chain(f.d_diag.windows(2).map(|w| w[1] - w[0]))
        .fold(0.0, f64::max);
    Ok(ResidualReport {
        receiver,
        eavesdropper,
        psi_r_unitary: orthonormality_residual(&f.psi_r),
        psi_e_unitary: orthonormality_residual(&f.psi_e),
        pythagorean,
        ordering,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{sample_channel_stream, ExperimentConfig};

    fn seeded(n_t: usize, n_r: usize, n_e: usize, seed: u64) -> ChannelPair {
        let cfg = ExperimentConfig::new(n_t, n_r, n_e, 1.0, 1.0, 1.0, 1, seed);
        sample_channel_stream(&cfg, 0)
    }

    fn real_diag(n: usize, v: f64) -> ComplexMatrix {
        ComplexMatrix::identity(n, n) * Complex64::new(v, 0.0)
    }

    #[test]
    fn wide_pair_with_repeated_unit_values() {
        // two receiver-only directions make 1 a double singular value of U1
        for seed in [9138, 9193] {
            let ch = seeded(6, 3, 4, seed);
            let f = gsvd(&ch).unwrap();
            assert!(verify_factors(&f, &ch, 1e-10).unwrap().passes());
        }
    }

    #[test]
    fn identical_identity_channels_split_evenly() {
        let ch = ChannelPair::new(real_diag(2, 1.0), real_diag(2, 1.0)).unwrap();
        let f = gsvd(&ch).unwrap();
        let g = subchannel_gains(&f);
        for i in 0..2 {
            assert!((g.c[i] - 0.5).abs() < 1e-12);
            assert!((g.d[i] - 0.5).abs() < 1e-12);
        }
        assert!(verify_factors(&f, &ch, 1e-10).unwrap().passes());
    }

    #[test]
    fn zero_eavesdropper_with_wide_input_is_degenerate() {
        let hr = seeded(3, 2, 1, 5).hr().clone();
        let ch = ChannelPair::new(hr, ComplexMatrix::zeros(2, 3)).unwrap();
        match gsvd(&ch) {
            Err(Error::DegenerateChannel { rank, expected }) => {
                assert_eq!((rank, expected), (2, 3));
            }
            other => panic!("expected degenerate channel, got {other:?}"),
        }
    }

    #[test]
    fn weak_eavesdropper_gives_near_unit_receiver_gains() {
        let hr = seeded(2, 2, 2, 3).hr().clone();
        let ch = ChannelPair::new(hr.clone(), real_diag(2, 1e-3)).unwrap();
        let f = gsvd(&ch).unwrap();
        let g = subchannel_gains(&f);
        // c_i / d_i must be the eigenvalues of He^{-H} Hr^H Hr He^{-1} = 1e6 Hr^H Hr
        let hh = hr.adjoint() * &hr * Complex64::new(1e6, 0.0);
        let mut eig: Vec<f64> = hh.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        for i in 0..2 {
            assert!(g.d[i] < 1e-4 && g.c[i] > 1.0 - 1e-4);
            let ratio = g.c[i] / g.d[i];
            assert!((ratio - eig[i]).abs() <= 1e-6 * eig[i], "{ratio} vs {}", eig[i]);
        }
    }

    #[test]
    fn one_eavesdropper_null_direction() {
        let ch = seeded(5, 5, 4, 17);
        let f = gsvd(&ch).unwrap();
        let g = subchannel_gains(&f);
        let zero: Vec<usize> = (0..5).filter(|&i| g.d[i] == 0.0).collect();
        assert_eq!(zero, vec![4]);
        let he_a = ch.he() * &f.a;
        assert!(he_a.column(4).norm() < 1e-8);
        assert!(verify_factors(&f, &ch, 1e-8).unwrap().passes());
    }

    #[test]
    fn gains_from_known_diagonals() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let f = GsvdFactors {
            a: ComplexMatrix::identity(2, 2),
            psi_r: ComplexMatrix::identity(2, 2),
            psi_e: ComplexMatrix::identity(2, 2),
            c_diag: vec![h, 1.0],
            d_diag: vec![h, 0.0],
        };
        let g = subchannel_gains(&f);
        assert!((g.c[0] - 0.5).abs() < 1e-15 && (g.d[0] - 0.5).abs() < 1e-15);
        assert_eq!((g.c[1], g.d[1]), (1.0, 0.0));
        assert_eq!(g.a, vec![1.0, 1.0]);
    }

    #[test]
    fn corrupted_factors_are_detected() {
        let ch = seeded(4, 3, 3, 23);
        let f = gsvd(&ch).unwrap();
        assert!(verify_factors(&f, &ch, 1e-8).unwrap().passes());

        let mut bad = f.clone();
        bad.psi_r = ComplexMatrix::identity(3, 3);
        let rep = verify_factors(&bad, &ch, 1e-8).unwrap();
        assert!(rep.receiver > 1e-8 && !rep.passes());

        let mut bad = f.clone();
        bad.c_diag[1] += 1e-3;
        let rep = verify_factors(&bad, &ch, 1e-8).unwrap();
        assert!(rep.pythagorean > 1e-4);

        let mut bad = f;
        bad.a = ComplexMatrix::zeros(3, 3);
        assert!(matches!(
            verify_factors(&bad, &ch, 1e-8),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn gains_validation() {
        assert!(SubchannelGains::new(vec![0.8], vec![0.2], vec![1.0]).is_ok());
        assert!(SubchannelGains::new(vec![0.8], vec![0.3], vec![1.0]).is_err());
        assert!(SubchannelGains::new(vec![0.8], vec![0.2], vec![0.0]).is_err());
        assert!(SubchannelGains::new(vec![0.8], vec![0.2, 0.1], vec![1.0]).is_err());
    }

    #[test]
    fn mismatched_columns_rejected() {
        let r = ChannelPair::new(ComplexMatrix::zeros(2, 3), ComplexMatrix::zeros(2, 2));
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }
}
