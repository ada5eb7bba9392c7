//! Small dense linear-algebra helpers: pseudo-inverse with an explicit rank
//! policy and symmetric eigenvalue probes used by the definiteness tests.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Relative rank-deficiency threshold used by every pseudo-inverse in the
/// crate. A smallest pivoted-QR diagonal magnitude below `RANK_RTOL` times
/// the largest one is treated as rank deficiency, not as a value to invert.
pub const RANK_RTOL: f64 = 1e-10;

/// Moore-Penrose pseudo-inverse of a matrix that is required to have full
/// rank (full row rank for wide inputs, full column rank for tall ones).
///
/// Built on a column-pivoted QR factorization rather than an SVD: the
/// iterative SVD mis-converges on the near-degenerate singular spectra the
/// inertia matrices produce (see the regression test below), while
/// Householder reflections have no such failure mode. Unlike a truncating
/// pseudo-inverse this refuses to silently drop directions: if the smallest
/// diagonal magnitude of the pivoted triangular factor falls below `rtol`
/// times the largest, [`Error::RankDeficientInput`] is returned.
pub fn pinv_full_rank(a: &DMatrix<f64>, rtol: f64) -> Result<DMatrix<f64>> {
    if a.nrows() < a.ncols() {
        return Ok(pinv_tall(&a.transpose(), rtol)?.transpose());
    }
    pinv_tall(a, rtol)
}

/// Least-squares pseudo-inverse of a tall (or square) full-column-rank
/// matrix: with `A P = Q R`, the pseudo-inverse is `P R^-1 Q^T`.
fn pinv_tall(a: &DMatrix<f64>, rtol: f64) -> Result<DMatrix<f64>> {
    let (q, r, p) = a.clone().col_piv_qr().unpack();
    let n = r.nrows();
    let mut dmax: f64 = 0.0;
    let mut dmin = f64::INFINITY;
    for i in 0..n {
        let d = r[(i, i)].abs();
        dmax = dmax.max(d);
        dmin = dmin.min(d);
    }
    if !(dmax > 0.0) || dmin < rtol * dmax {
        return Err(Error::RankDeficientInput {
            ratio: if dmax > 0.0 { dmin / dmax } else { 0.0 },
            threshold: rtol,
        });
    }
    let mut w = r
        .solve_upper_triangular(&q.transpose())
        .expect("pivoted triangular factor is nonsingular past the rank gate");
    // Mirrors ColPivQR::solve_mut: inv_permute_rows applies the column
    // permutation back onto the solution rows.
    p.inv_permute_rows(&mut w);
    Ok(w)
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn sym_eig_min(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    eig.min()
}

/// Positive definiteness of a (nominally symmetric) matrix through the
/// eigenvalues of its symmetric part.
pub fn is_pd_sym(m: &DMatrix<f64>) -> bool {
    sym_eig_min(m) > 0.0
}
