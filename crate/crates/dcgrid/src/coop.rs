//! Secondary distributed cooperative control.
//!
//! On top of the primary droop loop, each node integrates the disagreement
//! of current ratios `Im_k / Imax_k` with its information-graph neighbors
//! (PI form, proportional gains `alpha`, integral gains `beta`) and shifts
//! its rated voltage accordingly. The closed loop over the 2n state
//! `[Im; Ud]` is LTI with a structural zero eigenvalue whose right
//! eigenvector encodes the current-sharing steady state.
//!
//! This module classifies that loop spectrally (semistable or not), checks
//! two sufficient conditions built on a matrix asymmetry measure, and
//! predicts the exact steady state reached from given initial values.

use nalgebra::{DMatrix, DVector};

use crate::droop::PrimaryDroopConfig;
use crate::network::{self, ReducedNetwork};
use crate::numerics::{self, C64};
use crate::{Error, Result};

/// Default bisection cap for [`theta_measure`] and the largest-feasible-nu
/// searches.
pub const THETA_CAP: f64 = 1e6;
/// Default absolute bisection tolerance for [`theta_measure`].
pub const THETA_TOL: f64 = 1e-8;
/// Relative zero-eigenvalue threshold of [`semistability_check`].
pub const ZERO_EIG_RTOL: f64 = 1e-9;

/// Distributed controller parameters. The Laplacian must be symmetric
/// (bidirectional information links): the steady-state theory requires its
/// column sums to vanish along with its row sums.
#[derive(Debug, Clone)]
pub struct CooperativeConfig {
    pub laplacian: DMatrix<f64>,
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    pub imax: DVector<f64>,
}

impl CooperativeConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        let l = &self.laplacian;
        if l.nrows() != n || l.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "information-graph Laplacian is {}x{}, network has {n} nodes",
                l.nrows(),
                l.ncols()
            )));
        }
        if self.alpha.len() != n || self.beta.len() != n || self.imax.len() != n {
            return Err(Error::InvalidInput("controller gain vectors must match the node count".into()));
        }
        for k in 0..n {
            if !(self.alpha[k].is_finite() && self.alpha[k] >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "proportional gain at node {k} must be nonnegative, got {}",
                    self.alpha[k]
                )));
            }
            if !(self.beta[k].is_finite() && self.beta[k] > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "integral gain at node {k} must be positive, got {}",
                    self.beta[k]
                )));
            }
            if !(self.imax[k].is_finite() && self.imax[k] > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "current limit at node {k} must be positive, got {}",
                    self.imax[k]
                )));
            }
        }
        let scale = l.norm().max(1.0);
        if (l - l.transpose()).norm() > 1e-9 * scale {
            return Err(Error::InvalidInput(
                "information-graph Laplacian must be symmetric (bidirectional links)".into(),
            ));
        }
        for i in 0..n {
            let row_sum: f64 = l.row(i).iter().sum();
            if row_sum.abs() > 1e-9 * scale {
                return Err(Error::InvalidInput(format!(
                    "Laplacian row {i} sums to {row_sum:e}, expected 0"
                )));
            }
            for j in 0..n {
                if i != j && l[(i, j)] > 1e-12 * scale {
                    return Err(Error::InvalidInput(format!(
                        "Laplacian off-diagonal ({i},{j}) must be nonpositive, got {}",
                        l[(i, j)]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Ratio of proportional to integral gain per node.
    pub fn gain_ratio(&self) -> DVector<f64> {
        DVector::from_fn(self.alpha.len(), |k, _| self.alpha[k] / self.beta[k])
    }
}

/// The assembled 2n x 2n closed loop over `[Im; Ud]`.
#[derive(Debug, Clone)]
pub struct ClosedLoopSystem {
    pub ac: DMatrix<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Semistable,
    AsymptoticallyStable,
    NotSemistable,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Semistable => "Semistable",
            Classification::AsymptoticallyStable => "AsymptoticallyStable",
            Classification::NotSemistable => "NotSemistable",
        }
    }
}

/// Spectral classification of the closed loop.
#[derive(Debug, Clone)]
pub struct StabilityVerdict {
    pub classification: Classification,
    pub zero_eigenvalue_count: usize,
    /// Largest real part among eigenvalues that are not within the zero
    /// threshold; `None` when every eigenvalue is zero.
    pub max_nonzero_real_part: Option<f64>,
    pub zero_semisimple: bool,
    /// Full spectrum, sorted ascending by (re, im).
    pub eigenvalues: Vec<C64>,
}

/// Asymmetry measure of a square matrix: the largest `theta >= 0` keeping
/// `[[Ms, theta*Mk], [theta*Mk^T, Ms]]` positive semidefinite, where
/// `Ms`/`Mk` are the symmetric/skew parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaMeasure {
    /// Symmetric part is not positive semidefinite: the measure does not
    /// exist.
    Undefined,
    Finite(f64),
    /// Feasible at every tested magnitude (in particular for symmetric
    /// input).
    Infinite,
}

/// Outcome of a sufficient-condition check. `Fails` carries a reason: a
/// violated structural premise or a numeric threshold that did not clear.
#[derive(Debug, Clone)]
pub enum ConditionOutcome {
    Holds { nu: f64, theta: ThetaMeasure },
    Fails { reason: String },
}

impl ConditionOutcome {
    pub fn holds(&self) -> bool {
        matches!(self, ConditionOutcome::Holds { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteadyBranch {
    /// Some shunt conductance survives reduction: currents share exactly at
    /// a common ratio `rc1`.
    ShuntPresent,
    /// No shunts: currents decay to zero and voltages agree at level `rc2`.
    Shuntless,
}

/// Predicted limit of the cooperative loop.
#[derive(Debug, Clone)]
pub struct SteadyStatePrediction {
    pub branch: SteadyBranch,
    /// Common current ratio (zero in the shuntless branch).
    pub rc1: f64,
    /// Coefficient along the zero right eigenvector; equals the common
    /// voltage level in the shuntless branch and `rc1` otherwise.
    pub rc2: f64,
    pub i_inf: DVector<f64>,
    pub u_inf: DVector<f64>,
}

/// Six real coefficients of the scalar quadratic obtained by pinching the
/// second-order pencil with a (complex) direction vector.
#[derive(Debug, Clone, Copy)]
pub struct QuadCoeffs {
    pub am: f64,
    pub bm: f64,
    pub ad: f64,
    pub bd: f64,
    pub ak: f64,
    pub bk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropertyStatus {
    Pass,
    Fail,
    NotApplicable,
}

impl PropertyStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            PropertyStatus::Pass => "Pass",
            PropertyStatus::Fail => "Fail",
            PropertyStatus::NotApplicable => "NotApplicable",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PropertyCheck {
    pub status: PropertyStatus,
    pub detail: String,
}

impl PropertyCheck {
    fn pass(detail: String) -> Self {
        PropertyCheck { status: PropertyStatus::Pass, detail }
    }
    fn fail(detail: String) -> Self {
        PropertyCheck { status: PropertyStatus::Fail, detail }
    }
    fn na(detail: &str) -> Self {
        PropertyCheck { status: PropertyStatus::NotApplicable, detail: detail.to_string() }
    }
}

/// Steady-state properties P1-P5 evaluated against a prediction computed
/// from `Im(0) = 0` and `Ud(0)` equal to the rated voltages.
#[derive(Debug, Clone)]
pub struct CorollaryReport {
    pub p1: PropertyCheck,
    pub p2: PropertyCheck,
    pub p3: PropertyCheck,
    pub p4: PropertyCheck,
    pub p5: PropertyCheck,
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn skew(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m - m.transpose()) * 0.5
}

/// Relative spread of a vector: 0 means exactly uniform.
fn relative_spread(v: &DVector<f64>) -> f64 {
    let max = v.max();
    let min = v.min();
    (max - min).abs() / max.abs().max(min.abs()).max(1e-300)
}

fn is_uniform(v: &DVector<f64>) -> bool {
    relative_spread(v) <= 1e-9
}

/// Assemble the 2n x 2n cooperative closed loop.
pub fn build_coop(
    net: &ReducedNetwork,
    pd: &PrimaryDroopConfig,
    cc: &CooperativeConfig,
) -> Result<ClosedLoopSystem> {
    pd.validate(net.n)?;
    cc.validate(net.n)?;
    let n = net.n;
    // a11 = -D^{-1}(E + YR), a12 = D^{-1} Y
    let mut a11 = -(DMatrix::identity(n, n) + &net.y * pd.r_matrix());
    let mut a12 = net.y.clone();
    for i in 0..n {
        let inv_tau = 1.0 / pd.tau[i];
        for j in 0..n {
            a11[(i, j)] *= inv_tau;
            a12[(i, j)] *= inv_tau;
        }
    }
    // gain-weighted Laplacians against the current limits:
    // (Phi L Ups^{-1})_{ij} = alpha_i l_ij / imax_j, same with beta
    let phi_l = DMatrix::from_fn(n, n, |i, j| cc.alpha[i] * cc.laplacian[(i, j)] / cc.imax[j]);
    let psi_l = DMatrix::from_fn(n, n, |i, j| cc.beta[i] * cc.laplacian[(i, j)] / cc.imax[j]);
    let m21 = -&psi_l - &phi_l * &a11;
    let m22 = -&phi_l * &a12;
    let mut ac = DMatrix::zeros(2 * n, 2 * n);
    ac.view_mut((0, 0), (n, n)).copy_from(&a11);
    ac.view_mut((0, n), (n, n)).copy_from(&a12);
    ac.view_mut((n, 0), (n, n)).copy_from(&m21);
    ac.view_mut((n, n), (n, n)).copy_from(&m22);
    Ok(ClosedLoopSystem { ac, n })
}

/// Coefficients `(M, C, K)` of the equivalent second-order pencil
/// `M s^2 + C s + K`: `M = D Ups`, `C = Ups + Y R Ups + Y Phi L`,
/// `K = Y Psi L`.
pub fn second_order_coeffs(
    net: &ReducedNetwork,
    pd: &PrimaryDroopConfig,
    cc: &CooperativeConfig,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    pd.validate(net.n)?;
    cc.validate(net.n)?;
    let n = net.n;
    let m = DMatrix::from_fn(n, n, |i, j| if i == j { pd.tau[i] * cc.imax[i] } else { 0.0 });
    let r_ups = DMatrix::from_fn(n, n, |i, j| if i == j { pd.r[i] * cc.imax[i] } else { 0.0 });
    let phi_l = DMatrix::from_fn(n, n, |i, j| cc.alpha[i] * cc.laplacian[(i, j)]);
    let psi_l = DMatrix::from_fn(n, n, |i, j| cc.beta[i] * cc.laplacian[(i, j)]);
    let c = DMatrix::from_diagonal(&cc.imax) + &net.y * r_ups + &net.y * phi_l;
    let k = &net.y * psi_l;
    Ok((m, c, k))
}

/// Pinch the pencil coefficients with direction `x`: for each coefficient
/// matrix, `a = xR^T S xR + xI^T S xI` (symmetric part) and
/// `b = 2 xR^T W xI` (skew part).
pub fn quad_coeffs(
    m: &DMatrix<f64>,
    c: &DMatrix<f64>,
    k: &DMatrix<f64>,
    x: &DVector<C64>,
) -> Result<QuadCoeffs> {
    if x.norm() == 0.0 {
        return Err(Error::InvalidInput("direction vector must be nonzero".into()));
    }
    let xr = x.map(|z| z.re);
    let xi = x.map(|z| z.im);
    let pinch = |mat: &DMatrix<f64>| -> (f64, f64) {
        let s = sym(mat);
        let w = skew(mat);
        let a = (xr.transpose() * &s * &xr)[(0, 0)] + (xi.transpose() * &s * &xi)[(0, 0)];
        let b = 2.0 * (xr.transpose() * &w * &xi)[(0, 0)];
        (a, b)
    };
    let (am, bm) = pinch(m);
    let (ad, bd) = pinch(c);
    let (ak, bk) = pinch(k);
    Ok(QuadCoeffs { am, bm, ad, bd, ak, bk })
}

/// Both roots of `(am + i bm) s^2 + (ad + i bd) s + (ak + i bk)` have
/// negative real parts iff `bm*bd + am*ad > 0` and
/// `(ad*ak + bd*bk)(am*ad + bm*bd) > (am*bk - bm*ak)^2` (both strict).
pub fn hurwitz_quadratic(q: &QuadCoeffs) -> Result<bool> {
    if q.am == 0.0 && q.bm == 0.0 {
        return Err(Error::InvalidInput("degenerate leading coefficient".into()));
    }
    let first = q.bm * q.bd + q.am * q.ad > 0.0;
    let lhs = (q.ad * q.ak + q.bd * q.bk) * (q.am * q.ad + q.bm * q.bd);
    let rhs = (q.am * q.bk - q.bm * q.ak).powi(2);
    Ok(first && lhs > rhs)
}

/// Asymmetry measure of `m`: bisection over the PSD feasibility of the
/// doubled block matrix, up to `cap`, with absolute tolerance `tol`.
/// Feasibility is monotone nonincreasing in theta; the evaluations are
/// checked for that and a violation reports a numeric failure.
pub fn theta_measure(m: &DMatrix<f64>, cap: f64, tol: f64) -> Result<ThetaMeasure> {
    if !(cap > 0.0 && tol > 0.0) {
        return Err(Error::InvalidInput("theta cap and tolerance must be positive".into()));
    }
    let ms = sym(m);
    let mk = skew(m);
    if !numerics::psd_check(&ms, numerics::PSD_TOL)? {
        return Ok(ThetaMeasure::Undefined);
    }
    if mk.norm() <= 1e-12 * m.norm() {
        return Ok(ThetaMeasure::Infinite);
    }
    let n = m.nrows();
    let mut evals: Vec<(f64, bool)> = Vec::new();
    let mut feasible = |theta: f64| -> Result<bool> {
        let block = DMatrix::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
            (true, true) => ms[(i, j)],
            (false, false) => ms[(i - n, j - n)],
            (true, false) => theta * mk[(i, j - n)],
            (false, true) => theta * mk[(j, i - n)],
        });
        let ok = numerics::psd_check(&block, numerics::PSD_TOL)?;
        evals.push((theta, ok));
        Ok(ok)
    };
    if feasible(cap)? {
        return Ok(ThetaMeasure::Infinite);
    }
    let mut lo = 0.0;
    let mut hi = cap;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    evals.sort_by(|a, b| a.0.total_cmp(&b.0));
    if evals.windows(2).any(|w| !w[0].1 && w[1].1) {
        return Err(Error::NumericFailure(
            "theta feasibility is not monotone across bisection evaluations".into(),
        ));
    }
    Ok(ThetaMeasure::Finite(lo))
}

/// Largest `nu in [0, cap]` with `s0 - nu*sk` positive semidefinite, or
/// `None` when `s0` itself is not. Both inputs must be symmetric.
fn largest_nu(s0: &DMatrix<f64>, sk: &DMatrix<f64>, cap: f64, tol: f64) -> Result<Option<f64>> {
    if !numerics::psd_check(s0, numerics::PSD_TOL)? {
        return Ok(None);
    }
    if sk.norm() <= 1e-14 * s0.norm().max(1.0) {
        return Ok(Some(cap));
    }
    let feasible = |nu: f64| -> Result<bool> { numerics::psd_check(&(s0 - sk * nu), numerics::PSD_TOL) };
    if feasible(cap)? {
        return Ok(Some(cap));
    }
    let mut lo = 0.0;
    let mut hi = cap;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// First sufficient semistability condition: requires uniform
/// `r_k * imax_k` (a common voltage-drop budget `u_bar`) and a uniform
/// proportional-to-integral gain ratio `r_bar`; then needs
/// `theta(Y Psi L)` to exist and `(nu + r_bar) theta^2 + r_bar` to exceed
/// the largest filter time constant, with `nu` the largest scalar keeping
/// `sym(Ups + u_bar Y) - nu sym(Y Psi L)` positive semidefinite.
pub fn check_c1(
    net: &ReducedNetwork,
    pd: &PrimaryDroopConfig,
    cc: &CooperativeConfig,
) -> Result<ConditionOutcome> {
    pd.validate(net.n)?;
    cc.validate(net.n)?;
    let n = net.n;
    let ubar_vec = DVector::from_fn(n, |k, _| pd.r[k] * cc.imax[k]);
    if !is_uniform(&ubar_vec) {
        return Ok(ConditionOutcome::Fails {
            reason: format!(
                "premise violated: r_k * imax_k must be uniform across nodes (spread {:.3e})",
                relative_spread(&ubar_vec)
            ),
        });
    }
    let ubar = ubar_vec[0];
    let ratio = cc.gain_ratio();
    if !is_uniform(&ratio) {
        return Ok(ConditionOutcome::Fails {
            reason: "premise violated: alpha_k / beta_k must be uniform across nodes".into(),
        });
    }
    let rbar = ratio[0];
    let psi_l = DMatrix::from_fn(n, n, |i, j| cc.beta[i] * cc.laplacian[(i, j)]);
    let k_mat = &net.y * psi_l;
    let theta = theta_measure(&k_mat, THETA_CAP, THETA_TOL)?;
    if theta == ThetaMeasure::Undefined {
        return Ok(ConditionOutcome::Fails {
            reason: "the symmetric part of Y*Psi*L is not positive semidefinite, \
                     so theta(Y Psi L) does not exist"
                .into(),
        });
    }
    let s0 = sym(&(DMatrix::from_diagonal(&cc.imax) + &net.y * ubar));
    let sk = sym(&k_mat);
    let nu = match largest_nu(&s0, &sk, THETA_CAP, 1e-8)? {
        Some(nu) => nu,
        None => {
            return Ok(ConditionOutcome::Fails {
                reason: "sym(Ups + u_bar*Y) is not positive semidefinite; no feasible nu".into(),
            })
        }
    };
    let tau_max = pd.tau.max();
    let ok = match theta {
        ThetaMeasure::Infinite => nu + rbar > 0.0,
        ThetaMeasure::Finite(th) => (nu + rbar) * th * th + rbar > tau_max,
        ThetaMeasure::Undefined => unreachable!(),
    };
    if ok {
        Ok(ConditionOutcome::Holds { nu, theta })
    } else {
        let lhs = match theta {
            ThetaMeasure::Finite(th) => (nu + rbar) * th * th + rbar,
            _ => rbar,
        };
        Ok(ConditionOutcome::Fails {
            reason: format!(
                "(nu + r)*theta^2 + r = {lhs:.6e} does not exceed the largest filter \
                 time constant {tau_max:.6e} (nu = {nu:.6e}, r = {rbar:.6e})"
            ),
        })
    }
}

/// Second sufficient semistability condition: requires uniform filter time
/// constants, uniform integral gains, a uniform gain ratio, and an
/// invertible conductance matrix; then needs `theta(Y Ups)` to exist and
/// `(nu + r_bar) theta^2 + nu + r_bar` to exceed the filter time constant,
/// with `nu` the largest scalar keeping
/// `sym(Y^{-1} Ups + R Ups) - nu beta sym(L)` positive semidefinite.
pub fn check_c2(
    net: &ReducedNetwork,
    pd: &PrimaryDroopConfig,
    cc: &CooperativeConfig,
) -> Result<ConditionOutcome> {
    pd.validate(net.n)?;
    cc.validate(net.n)?;
    let n = net.n;
    if !is_uniform(&pd.tau) {
        return Ok(ConditionOutcome::Fails {
            reason: "premise violated: filter time constants must be uniform across nodes".into(),
        });
    }
    if !is_uniform(&cc.beta) {
        return Ok(ConditionOutcome::Fails {
            reason: "premise violated: integral gains must be uniform across nodes".into(),
        });
    }
    let ratio = cc.gain_ratio();
    if !is_uniform(&ratio) {
        return Ok(ConditionOutcome::Fails {
            reason: "premise violated: alpha_k / beta_k must be uniform across nodes".into(),
        });
    }
    let rbar = ratio[0];
    if !net.shunt_present() {
        return Ok(ConditionOutcome::Fails {
            reason: "no shunt conductance survives reduction: Y is singular and the \
                     condition needs Y^{-1}"
                .into(),
        });
    }
    let yinv = match numerics::inverse(&net.y) {
        Ok(m) => m,
        Err(_) => {
            return Ok(ConditionOutcome::Fails {
                reason: "conductance matrix is not invertible; the condition needs Y^{-1}".into(),
            })
        }
    };
    let t_mat = &net.y * DMatrix::from_diagonal(&cc.imax);
    let theta = theta_measure(&t_mat, THETA_CAP, THETA_TOL)?;
    if theta == ThetaMeasure::Undefined {
        return Ok(ConditionOutcome::Fails {
            reason: "the symmetric part of Y*Ups is not positive semidefinite, \
                     so theta(Y Ups) does not exist"
                .into(),
        });
    }
    let beta = cc.beta[0];
    let tau = pd.tau[0];
    let r_ups = DMatrix::from_fn(n, n, |i, j| if i == j { pd.r[i] * cc.imax[i] } else { 0.0 });
    let s0 = sym(&(&yinv * DMatrix::from_diagonal(&cc.imax) + r_ups));
    let sl = sym(&cc.laplacian) * beta;
    let nu = match largest_nu(&s0, &sl, THETA_CAP, 1e-8)? {
        Some(nu) => nu,
        None => {
            return Ok(ConditionOutcome::Fails {
                reason: "sym(Y^{-1} Ups + R Ups) is not positive semidefinite; no feasible nu"
                    .into(),
            })
        }
    };
    let ok = match theta {
        ThetaMeasure::Infinite => nu + rbar > 0.0,
        ThetaMeasure::Finite(th) => (nu + rbar) * th * th + nu + rbar > tau,
        ThetaMeasure::Undefined => unreachable!(),
    };
    if ok {
        Ok(ConditionOutcome::Holds { nu, theta })
    } else {
        let lhs = match theta {
            ThetaMeasure::Finite(th) => (nu + rbar) * th * th + nu + rbar,
            _ => nu + rbar,
        };
        Ok(ConditionOutcome::Fails {
            reason: format!(
                "(nu + r)*theta^2 + nu + r = {lhs:.6e} does not exceed the filter \
                 time constant {tau:.6e} (nu = {nu:.6e}, r = {rbar:.6e})"
            ),
        })
    }
}

/// Spectral semistability classification.
///
/// Eigenvalues within `1e-9 * ||Ac||` of zero count as the structural zero.
/// A simple zero is semisimple by definition; for higher multiplicity the
/// rank test `rank(Ac) == rank(Ac^2)` decides (a strict drop means a Jordan
/// block). For a connected network exactly one zero eigenvalue must appear;
/// any other count means the spectral threshold cannot be trusted and is
/// reported as a numeric failure rather than a verdict.
pub fn semistability_check(sys: &ClosedLoopSystem, net: &ReducedNetwork) -> Result<StabilityVerdict> {
    let eigenvalues = numerics::eigenvalues(&sys.ac)?;
    let anorm = sys.ac.norm();
    let ztol = ZERO_EIG_RTOL * anorm.max(f64::MIN_POSITIVE);
    let zero_eigenvalue_count = eigenvalues.iter().filter(|l| l.norm() <= ztol).count();
    let nonzero: Vec<&C64> = eigenvalues.iter().filter(|l| l.norm() > ztol).collect();
    let max_nonzero_real_part = nonzero
        .iter()
        .map(|l| l.re)
        .fold(None, |acc: Option<f64>, re| Some(acc.map_or(re, |a| a.max(re))));
    let stable_rest = nonzero.iter().all(|l| l.re < -ztol);
    let zero_semisimple = if zero_eigenvalue_count <= 1 {
        true
    } else {
        let r1 = numerics::rank_tol(&sys.ac, numerics::RANK_RTOL)?;
        let r2 = numerics::rank_tol(&(&sys.ac * &sys.ac), numerics::RANK_RTOL)?;
        r1 == r2
    };
    let classification = if stable_rest && zero_eigenvalue_count == 0 {
        Classification::AsymptoticallyStable
    } else if stable_rest && zero_semisimple {
        Classification::Semistable
    } else {
        Classification::NotSemistable
    };
    if network::is_connected(&net.yc) && zero_eigenvalue_count != 1 {
        return Err(Error::NumericFailure(format!(
            "connected network must produce exactly one zero eigenvalue, found \
             {zero_eigenvalue_count} within |lambda| <= {ztol:.3e}"
        )));
    }
    Ok(StabilityVerdict {
        classification,
        zero_eigenvalue_count,
        max_nonzero_real_part,
        zero_semisimple,
        eigenvalues,
    })
}

/// Exact steady state reached from `(im0, ud0)`.
///
/// With shunts present the state converges along the zero right eigenvector
/// to the common current ratio
/// `rc1 = 1^T Psi^{-1} (ud0 + Phi L Ups^{-1} im0) / 1^T Psi^{-1} (Y^{-1}+R) Ups 1`;
/// without shunts currents vanish and voltages agree at `rc2`, the same
/// quotient taken against `1^T Psi^{-1} 1`.
pub fn predict_steady(
    net: &ReducedNetwork,
    pd: &PrimaryDroopConfig,
    cc: &CooperativeConfig,
    im0: &DVector<f64>,
    ud0: &DVector<f64>,
) -> Result<SteadyStatePrediction> {
    pd.validate(net.n)?;
    cc.validate(net.n)?;
    let n = net.n;
    if im0.len() != n || ud0.len() != n {
        return Err(Error::InvalidInput("initial state dimensions must match the network".into()));
    }
    // Phi L Ups^{-1} im0, i.e. the proportional term the controller adds at t=0
    let ratios0 = DVector::from_fn(n, |k, _| im0[k] / cc.imax[k]);
    let prop = DVector::from_fn(n, |k, _| cc.alpha[k] * (cc.laplacian.row(k) * &ratios0)[(0, 0)]);
    let weighted = DVector::from_fn(n, |k, _| (ud0[k] + prop[k]) / cc.beta[k]);
    let num: f64 = weighted.sum();
    if net.shunt_present() {
        let yinv = numerics::inverse(&net.y).map_err(|_| {
            Error::NumericFailure(
                "conductance matrix is not invertible despite nonzero shunts".into(),
            )
        })?;
        let w = &yinv * &cc.imax + DVector::from_fn(n, |k, _| pd.r[k] * cc.imax[k]);
        let den: f64 = (0..n).map(|k| w[k] / cc.beta[k]).sum();
        let rc1 = num / den;
        Ok(SteadyStatePrediction {
            branch: SteadyBranch::ShuntPresent,
            rc1,
            rc2: rc1,
            i_inf: &cc.imax * rc1,
            u_inf: &yinv * &cc.imax * rc1,
        })
    } else {
        let den: f64 = (0..n).map(|k| 1.0 / cc.beta[k]).sum();
        let rc2 = num / den;
        Ok(SteadyStatePrediction {
            branch: SteadyBranch::Shuntless,
            rc1: 0.0,
            rc2,
            i_inf: DVector::zeros(n),
            u_inf: DVector::from_element(n, rc2),
        })
    }
}

/// Left and right eigenvectors of the closed loop for the zero eigenvalue:
/// `v_l = [Ups^{-1} L Phi Psi^{-1} 1; Psi^{-1} 1]` and
/// `v_r = [Ups 1; (Y^{-1}+R) Ups 1]` (shunts present) or `[0; 1]` (shuntless).
pub fn null_eigenvectors(
    net: &ReducedNetwork,
    pd: &PrimaryDroopConfig,
    cc: &CooperativeConfig,
) -> Result<(DVector<f64>, DVector<f64>)> {
    pd.validate(net.n)?;
    cc.validate(net.n)?;
    let n = net.n;
    let gain = cc.gain_ratio(); // Phi Psi^{-1} 1
    let l_gain = &cc.laplacian * gain;
    let mut v_l = DVector::zeros(2 * n);
    for k in 0..n {
        v_l[k] = l_gain[k] / cc.imax[k];
        v_l[n + k] = 1.0 / cc.beta[k];
    }
    let mut v_r = DVector::zeros(2 * n);
    if net.shunt_present() {
        let yinv = numerics::inverse(&net.y).map_err(|_| {
            Error::NumericFailure(
                "conductance matrix is not invertible despite nonzero shunts".into(),
            )
        })?;
        let w = &yinv * &cc.imax + DVector::from_fn(n, |k, _| pd.r[k] * cc.imax[k]);
        for k in 0..n {
            v_r[k] = cc.imax[k];
            v_r[n + k] = w[k];
        }
    } else {
        for k in 0..n {
            v_r[n + k] = 1.0;
        }
    }
    Ok((v_l, v_r))
}

/// Check the steady-state properties P1-P5 of the cooperative loop against
/// its decentralized baseline.
///
/// `prediction` must come from [`predict_steady`] with `im0 = 0` and
/// `ud0` equal to the rated voltages, and `(iss, uss)` from the primary
/// steady state with the same rated voltages. All properties need some
/// shunt conductance; P1/P2 additionally need the decentralized currents
/// within the limits (P2 also needs them positive, or the sandwich
/// direction flips), P3/P4 need their uniformity premises.
pub fn corollary_checks(
    net: &ReducedNetwork,
    pd: &PrimaryDroopConfig,
    cc: &CooperativeConfig,
    prediction: &SteadyStatePrediction,
    iss: &DVector<f64>,
    uss: &DVector<f64>,
) -> Result<CorollaryReport> {
    pd.validate(net.n)?;
    cc.validate(net.n)?;
    let n = net.n;
    if !net.shunt_present() {
        let na = PropertyCheck::na("no shunt conductance: steady currents vanish");
        return Ok(CorollaryReport {
            p1: na.clone(),
            p2: na.clone(),
            p3: na.clone(),
            p4: na.clone(),
            p5: na,
        });
    }
    let rc1 = prediction.rc1;
    let rdec = DVector::from_fn(n, |k, _| iss[k] / cc.imax[k]);
    let rmin = rdec.min();
    let rmax = rdec.max();
    let limit_ok = (0..n).all(|k| iss[k] <= cc.imax[k] * (1.0 + 1e-9));
    let tol = 1e-9;

    let p1 = if !limit_ok {
        PropertyCheck::na("decentralized steady current exceeds a current limit")
    } else if rc1 < 1.0 && rc1 >= rmin - tol && rc1 <= rmax + tol {
        PropertyCheck::pass(format!(
            "rc1 = {rc1:.6} lies in [{rmin:.6}, {rmax:.6}] and below 1"
        ))
    } else {
        PropertyCheck::fail(format!(
            "rc1 = {rc1:.6} outside [{rmin:.6}, {rmax:.6}] or not below 1"
        ))
    };

    let p2 = if !limit_ok {
        PropertyCheck::na("decentralized steady current exceeds a current limit")
    } else if rmin <= 0.0 {
        PropertyCheck::na("a decentralized steady current is nonpositive; the sandwich needs positive ratios")
    } else {
        let slack = 1e-9 * uss.norm().max(1.0);
        let ok = (0..n).all(|k| {
            let lo = rc1 / rmax * uss[k];
            let hi = rc1 / rmin * uss[k];
            prediction.u_inf[k] >= lo - slack && prediction.u_inf[k] <= hi + slack
        });
        if ok {
            PropertyCheck::pass(format!(
                "voltages stay within [rc1/{rmax:.6}, rc1/{rmin:.6}] times the decentralized levels"
            ))
        } else {
            PropertyCheck::fail("a steady voltage escapes the ratio-scaled decentralized bracket".into())
        }
    };

    let uniform_beta = is_uniform(&cc.beta);
    let uniform_r = is_uniform(&pd.r);
    let sum_ud: f64 = pd.ud.sum();
    let sum_imax: f64 = cc.imax.sum();
    let p3 = if !(uniform_beta && uniform_r) {
        PropertyCheck::na("needs uniform integral gains and uniform droop resistances")
    } else {
        let lam_n = net.y.clone().symmetric_eigenvalues().max();
        let bound = sum_ud / sum_imax * lam_n / (1.0 + lam_n * pd.r[0]);
        if rc1 < bound {
            PropertyCheck::pass(format!("rc1 = {rc1:.6} < bound {bound:.6} (largest conductance eigenvalue {lam_n:.6})"))
        } else {
            PropertyCheck::fail(format!("rc1 = {rc1:.6} >= bound {bound:.6}"))
        }
    };

    let uniform_ys = is_uniform(&net.ys) && net.ys[0] > 0.0;
    let p4 = if !(uniform_beta && uniform_r && uniform_ys) {
        PropertyCheck::na("needs uniform integral gains, droop resistances, and shunt conductances")
    } else {
        let g = net.ys[0];
        let expected = sum_ud / sum_imax * g / (1.0 + g * pd.r[0]);
        if (rc1 - expected).abs() <= 1e-9 * expected.abs().max(1.0) {
            PropertyCheck::pass(format!("rc1 = {rc1:.12} matches the closed form {expected:.12}"))
        } else {
            PropertyCheck::fail(format!("rc1 = {rc1:.12} differs from the closed form {expected:.12}"))
        }
    };

    let proportional = net.ys.iter().all(|&g| g > 0.0) && {
        let eps = DVector::from_fn(n, |k, _| cc.imax[k] / net.ys[k]);
        is_uniform(&eps)
    };
    let spread = {
        let mean = prediction.u_inf.sum() / n as f64;
        let dev = (prediction.u_inf.max() - prediction.u_inf.min()).abs();
        dev <= 1e-7 * mean.abs().max(1.0)
    };
    let p5 = if proportional == spread {
        PropertyCheck::pass(format!(
            "limits proportional to shunts: {proportional}; uniform steady voltage: {spread}"
        ))
    } else {
        PropertyCheck::fail(format!(
            "limits proportional to shunts: {proportional}, but uniform steady voltage: {spread}"
        ))
    };

    Ok(CorollaryReport { p1, p2, p3, p4, p5 })
}
