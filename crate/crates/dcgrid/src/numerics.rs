//! Dense real-matrix kernels shared by the analysis modules:
//! eigendecomposition, tolerant rank, positive-semidefiniteness, linear
//! solves, and the matrix exponential.
//!
//! All tolerances are relative to a matrix norm so that conclusions are
//! invariant under uniform rescaling of the input; this matters because
//! stability verdicts hinge on telling structural zero eigenvalues apart
//! from small negative ones.

use nalgebra::{Complex, DMatrix, DVector};

use crate::{Error, Result};

pub type C64 = Complex<f64>;

/// Relative residual bound guaranteed by [`eig`]: every returned pair
/// satisfies `||A x - lambda x|| <= EIG_RTOL * ||A|| * ||x||`.
pub const EIG_RTOL: f64 = 1e-10;
/// Default relative singular-value cutoff for [`rank_tol`].
pub const RANK_RTOL: f64 = 1e-9;
/// Default relative tolerance for [`psd_check`].
pub const PSD_TOL: f64 = 1e-10;

/// Eigenvalues with paired right eigenvectors (column `i` goes with value
/// `i`). Values are sorted by ascending real part, then imaginary part.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<C64>,
    pub vectors: DMatrix<C64>,
}

fn ensure_finite(a: &DMatrix<f64>) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("matrix has non-finite entries".into()))
    }
}

fn ensure_square(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() == a.ncols() && a.nrows() >= 1 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "expected a nonempty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )))
    }
}

/// Eigenvalues only (real Schur form), sorted ascending by (re, im).
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<C64>> {
    ensure_finite(a)?;
    ensure_square(a)?;
    let schur = a
        .clone()
        .try_schur(f64::EPSILON, 100_000)
        .ok_or_else(|| Error::NumericFailure("Schur iteration did not converge".into()))?;
    let mut vals: Vec<C64> = schur.complex_eigenvalues().iter().copied().collect();
    vals.sort_by(|p, q| p.re.total_cmp(&q.re).then(p.im.total_cmp(&q.im)));
    Ok(vals)
}

fn start_vector(n: usize, k: usize, attempt: usize) -> DVector<C64> {
    let mut v = DVector::from_fn(n, |i, _| {
        let t = ((i + 1) * (k + 2 + 3 * attempt)) as f64;
        C64::new(1.0 + 0.37 * t.sin(), 0.11 * (1.7 * t).cos())
    });
    let nv = v.norm();
    v.unscale_mut(nv);
    v
}

/// Full eigendecomposition of a real matrix.
///
/// Eigenvalues come from the real Schur form; each eigenvector is recovered
/// by inverse iteration on the complexified matrix with a slightly
/// perturbed shift (so the shifted matrix stays invertible even at exact
/// eigenvalues). Shift perturbation and iteration count escalate until the
/// [`EIG_RTOL`] residual bound holds.
pub fn eig(a: &DMatrix<f64>) -> Result<Spectrum> {
    let values = eigenvalues(a)?;
    let n = a.nrows();
    let anorm = a.norm();
    let scale = anorm.max(1.0);
    let ac: DMatrix<C64> = a.map(|x| C64::new(x, 0.0));
    let mut vectors = DMatrix::<C64>::zeros(n, n);
    for (k, &lam) in values.iter().enumerate() {
        let mut found = false;
        'attempts: for (attempt, pert) in [1e-13, 1e-11, 1e-8, 1e-5].into_iter().enumerate() {
            let shift = lam + C64::new(pert * scale, 0.5 * pert * scale);
            let mut m = ac.clone();
            for i in 0..n {
                m[(i, i)] -= shift;
            }
            let lu = m.lu();
            let mut v = start_vector(n, k, attempt);
            for _ in 0..(4 + 4 * attempt) {
                let w = match lu.solve(&v) {
                    Some(w) => w,
                    None => continue 'attempts,
                };
                let nw = w.norm();
                if !nw.is_finite() || nw == 0.0 {
                    continue 'attempts;
                }
                v = w.unscale(nw);
                let residual = (&ac * &v - v.map(|x| x * lam)).norm();
                if residual <= EIG_RTOL * anorm.max(f64::MIN_POSITIVE) {
                    vectors.set_column(k, &v);
                    found = true;
                    break 'attempts;
                }
            }
        }
        if !found {
            return Err(Error::NumericFailure(format!(
                "eigenvector for eigenvalue {:e}{:+e}i did not converge",
                lam.re, lam.im
            )));
        }
    }
    Ok(Spectrum { values, vectors })
}

/// Number of singular values strictly above `rtol` times the largest one;
/// 0 for a zero matrix.
pub fn rank_tol(a: &DMatrix<f64>, rtol: f64) -> Result<usize> {
    ensure_finite(a)?;
    if rtol <= 0.0 {
        return Err(Error::InvalidInput("rank tolerance must be positive".into()));
    }
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0);
    }
    let sv = a.clone().singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > rtol * smax).count())
}

/// True iff the minimum eigenvalue of the symmetric matrix `s` is at least
/// `-tol * max(1, ||s||)`. The caller must pass an (already symmetrized)
/// symmetric matrix; asymmetry beyond `1e-12 * ||s||` is rejected.
pub fn psd_check(s: &DMatrix<f64>, tol: f64) -> Result<bool> {
    ensure_finite(s)?;
    ensure_square(s)?;
    let asym = (s - s.transpose()).norm();
    if asym > 1e-12 * s.norm() {
        return Err(Error::InvalidInput(format!(
            "matrix is not symmetric (asymmetry {asym:e})"
        )));
    }
    let eigs = s.clone().symmetric_eigenvalues();
    Ok(eigs.min() >= -tol * s.norm().max(1.0))
}

/// `e^{A h}` via scaling-and-squaring.
pub fn expm(a: &DMatrix<f64>, h: f64) -> Result<DMatrix<f64>> {
    ensure_finite(a)?;
    ensure_square(a)?;
    if !(h >= 0.0) {
        return Err(Error::InvalidInput(format!("time step must be nonnegative, got {h}")));
    }
    let m = (a * h).exp();
    if m.iter().all(|x| x.is_finite()) {
        Ok(m)
    } else {
        Err(Error::NumericFailure(format!(
            "matrix exponential overflowed (||A||*h = {:e})",
            a.norm() * h
        )))
    }
}

/// Solve `A x = b` by LU with partial pivoting.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    ensure_finite(a)?;
    ensure_square(a)?;
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::NumericFailure("linear system is singular".into()))
}

/// Dense inverse by LU.
pub fn inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_finite(a)?;
    ensure_square(a)?;
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::NumericFailure("matrix is not invertible".into()))
}
