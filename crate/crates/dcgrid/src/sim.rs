//! Time-domain validation of the control loops.
//!
//! Both operating modes are linear in the full state `x = [Im; Ud]`: the
//! primary-only phase freezes the rated voltages (their rows are zero) and
//! the cooperative phase applies the distributed feedback. A scenario is a
//! sequence of such phases integrated back to back, either exactly through
//! the matrix exponential of each phase map (cached per recording step) or
//! with a fixed-step fourth-order Runge-Kutta integrator for cross-checks.

use nalgebra::{DMatrix, DVector};

use crate::coop::{self, CooperativeConfig};
use crate::droop::PrimaryDroopConfig;
use crate::network::ReducedNetwork;
use crate::numerics;
use crate::{Error, Result};

/// State-norm ceiling: crossing it aborts integration as a blow-up.
pub const BLOWUP_NORM: f64 = 1e12;

/// A linear system with a constant drive, `x' = A x + b`.
#[derive(Debug, Clone)]
pub struct AffineLti {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Matrix-exponential stepping; exact for LTI dynamics.
    Exact,
    /// Classical fourth-order Runge-Kutta with the given fixed step.
    Rk4 { dt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    PrimaryOnly,
    Cooperative,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::PrimaryOnly => "primary",
            Mode::Cooperative => "cooperative",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Phase {
    pub mode: Mode,
    pub duration: f64,
}

/// A staged experiment on one network.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub net: ReducedNetwork,
    pub primary: PrimaryDroopConfig,
    pub cooperative: CooperativeConfig,
    pub phases: Vec<Phase>,
    /// Initial filtered currents; rated voltages start at their configured
    /// values.
    pub im0: DVector<f64>,
    pub record_dt: f64,
    pub method: Method,
}

/// Sample range of one phase. Both endpoints are inclusive sample indices;
/// phase boundaries are always sampled, so consecutive spans share their
/// boundary sample.
#[derive(Debug, Clone, Copy)]
pub struct PhaseSpan {
    pub mode: Mode,
    pub first_sample: usize,
    pub last_sample: usize,
}

/// Recorded trajectory with derived electrical quantities per sample:
/// bus voltages `U = Ud - R Im`, port currents `I = Y U`, and current
/// ratios `Im ./ Imax`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub n: usize,
    pub times: Vec<f64>,
    pub im: Vec<DVector<f64>>,
    pub ud: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub i: Vec<DVector<f64>>,
    pub ratios: Vec<DVector<f64>>,
    pub spans: Vec<PhaseSpan>,
}

impl Trajectory {
    pub fn samples(&self) -> usize {
        self.times.len()
    }

    /// Full state `[Im; Ud]` at a sample.
    pub fn state(&self, idx: usize) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(2 * n, |k, _| if k < n { self.im[idx][k] } else { self.ud[idx][k - n] })
    }

    pub fn last_state(&self) -> DVector<f64> {
        self.state(self.samples() - 1)
    }
}

/// Conserved-quantity drift over the cooperative samples of a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct ConservationDrift {
    /// Largest absolute deviation of `v_l . x` from its value at the start
    /// of each cooperative phase.
    pub raw: f64,
    /// The same deviation divided by the reference magnitude.
    pub normalized: f64,
    /// Reference value at the first cooperative sample.
    pub reference: f64,
}

/// Advance `x' = A x + b` by `t` from `x0`.
pub fn propagate(system: &AffineLti, x0: &DVector<f64>, t: f64, method: Method) -> Result<DVector<f64>> {
    let n = system.a.nrows();
    if system.a.ncols() != n || system.b.len() != n || x0.len() != n {
        return Err(Error::InvalidInput("system and state dimensions disagree".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!("horizon must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(x0.clone());
    }
    match method {
        Method::Exact => {
            if system.b.norm() == 0.0 {
                let phi = numerics::expm(&system.a, t)?;
                Ok(&phi * x0)
            } else {
                // augment with a constant-1 coordinate to carry the drive
                let mut aug = DMatrix::zeros(n + 1, n + 1);
                aug.view_mut((0, 0), (n, n)).copy_from(&system.a);
                aug.view_mut((0, n), (n, 1)).copy_from(&system.b);
                let phi = numerics::expm(&aug, t)?;
                let mut x = DVector::zeros(n);
                for i in 0..n {
                    let mut acc = phi[(i, n)];
                    for j in 0..n {
                        acc += phi[(i, j)] * x0[j];
                    }
                    x[i] = acc;
                }
                Ok(x)
            }
        }
        Method::Rk4 { dt } => {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::InvalidInput(format!("step size must be positive, got {dt}")));
            }
            let steps = (t / dt).ceil() as usize;
            let mut x = x0.clone();
            let mut done = 0.0;
            for step in 0..steps {
                let h = dt.min(t - done);
                if h <= 0.0 {
                    break;
                }
                x = rk4_step(system, &x, h);
                done += h;
                let norm = x.norm();
                if !norm.is_finite() || norm > BLOWUP_NORM {
                    return Err(Error::NumericFailure(format!(
                        "state norm {norm:e} exceeds {BLOWUP_NORM:e} at step {} (t = {done:.6})",
                        step + 1
                    )));
                }
            }
            Ok(x)
        }
    }
}

fn rk4_step(system: &AffineLti, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let f = |x: &DVector<f64>| &system.a * x + &system.b;
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (h / 2.0)));
    let k3 = f(&(x + &k2 * (h / 2.0)));
    let k4 = f(&(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Full-state phase map for one mode: rows are `[Im' ; Ud']`.
fn phase_matrix(
    net: &ReducedNetwork,
    pd: &PrimaryDroopConfig,
    cc: &CooperativeConfig,
    mode: Mode,
) -> Result<DMatrix<f64>> {
    match mode {
        Mode::Cooperative => Ok(coop::build_coop(net, pd, cc)?.ac),
        Mode::PrimaryOnly => {
            let n = net.n;
            let mut a = DMatrix::zeros(2 * n, 2 * n);
            let a11 = -(DMatrix::identity(n, n) + &net.y * pd.r_matrix());
            for i in 0..n {
                let inv_tau = 1.0 / pd.tau[i];
                for j in 0..n {
                    a[(i, j)] = a11[(i, j)] * inv_tau;
                    a[(i, n + j)] = net.y[(i, j)] * inv_tau;
                }
            }
            Ok(a)
        }
    }
}

/// Integrate all phases and record the trajectory on the `record_dt` grid.
/// Phase boundaries that fall off the grid are sampled as well. The RK4
/// path refuses steps above a twentieth of the smallest filter time
/// constant (stiffness guard).
pub fn run_scenario(s: &Scenario) -> Result<Trajectory> {
    let n = s.net.n;
    s.primary.validate(n)?;
    s.cooperative.validate(n)?;
    if s.im0.len() != n {
        return Err(Error::InvalidInput("initial current vector must match the node count".into()));
    }
    if !(s.record_dt > 0.0 && s.record_dt.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "recording step must be positive, got {}",
            s.record_dt
        )));
    }
    if s.phases.is_empty() {
        return Err(Error::InvalidInput("at least one phase is required".into()));
    }
    for (k, p) in s.phases.iter().enumerate() {
        if !(p.duration > 0.0 && p.duration.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "phase {k} duration must be positive, got {}",
                p.duration
            )));
        }
    }
    let min_tau = s.primary.tau.min();
    if let Method::Rk4 { dt } = s.method {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("step size must be positive, got {dt}")));
        }
        if dt > min_tau / 20.0 {
            return Err(Error::InvalidInput(format!(
                "step {dt:e} too coarse for the fastest filter (tau = {min_tau:e}); \
                 use at most tau/20"
            )));
        }
    }

    let mut x = DVector::zeros(2 * n);
    for k in 0..n {
        x[k] = s.im0[k];
        x[n + k] = s.primary.ud[k];
    }
    let mut traj = Trajectory {
        n,
        times: Vec::new(),
        im: Vec::new(),
        ud: Vec::new(),
        u: Vec::new(),
        i: Vec::new(),
        ratios: Vec::new(),
        spans: Vec::new(),
    };
    let mut t_global = 0.0;
    push_sample(&mut traj, s, t_global, &x);

    for phase in &s.phases {
        let a = phase_matrix(&s.net, &s.primary, &s.cooperative, phase.mode)?;
        let first_sample = traj.samples() - 1;
        let full_steps = (phase.duration / s.record_dt + 1e-9).floor() as usize;
        let remainder = phase.duration - full_steps as f64 * s.record_dt;
        match s.method {
            Method::Exact => {
                let step = numerics::expm(&a, s.record_dt)?;
                for _ in 0..full_steps {
                    x = &step * &x;
                    t_global += s.record_dt;
                    check_norm(&x, t_global)?;
                    push_sample(&mut traj, s, t_global, &x);
                }
                if remainder > 1e-12 * s.record_dt.max(phase.duration) {
                    let tail = numerics::expm(&a, remainder)?;
                    x = &tail * &x;
                    t_global += remainder;
                    check_norm(&x, t_global)?;
                    push_sample(&mut traj, s, t_global, &x);
                }
            }
            Method::Rk4 { dt } => {
                let sys = AffineLti { a: a.clone(), b: DVector::zeros(2 * n) };
                for _ in 0..full_steps {
                    x = propagate(&sys, &x, s.record_dt, Method::Rk4 { dt })?;
                    t_global += s.record_dt;
                    push_sample(&mut traj, s, t_global, &x);
                }
                if remainder > 1e-12 * s.record_dt.max(phase.duration) {
                    x = propagate(&sys, &x, remainder, Method::Rk4 { dt })?;
                    t_global += remainder;
                    push_sample(&mut traj, s, t_global, &x);
                }
            }
        }
        traj.spans.push(PhaseSpan {
            mode: phase.mode,
            first_sample,
            last_sample: traj.samples() - 1,
        });
    }
    Ok(traj)
}

fn check_norm(x: &DVector<f64>, t: f64) -> Result<()> {
    let norm = x.norm();
    if !norm.is_finite() || norm > BLOWUP_NORM {
        return Err(Error::NumericFailure(format!(
            "state norm {norm:e} exceeds {BLOWUP_NORM:e} at t = {t:.6}"
        )));
    }
    Ok(())
}

fn push_sample(traj: &mut Trajectory, s: &Scenario, t: f64, x: &DVector<f64>) {
    let n = traj.n;
    let im = DVector::from_fn(n, |k, _| x[k]);
    let ud = DVector::from_fn(n, |k, _| x[n + k]);
    let u = DVector::from_fn(n, |k, _| ud[k] - s.primary.r[k] * im[k]);
    let i = &s.net.y * &u;
    let ratios = DVector::from_fn(n, |k, _| im[k] / s.cooperative.imax[k]);
    traj.times.push(t);
    traj.im.push(im);
    traj.ud.push(ud);
    traj.u.push(u);
    traj.i.push(i);
    traj.ratios.push(ratios);
}

/// Track `v_l . x` across the cooperative spans of a trajectory. The
/// cooperative loop conserves this weighted sum exactly; its drift bounds
/// the integrator error. Returns `None` when no cooperative phase exists.
pub fn conservation_monitor(traj: &Trajectory, v_l: &DVector<f64>) -> Option<ConservationDrift> {
    if v_l.len() != 2 * traj.n {
        return None;
    }
    let mut raw: f64 = 0.0;
    let mut reference = None;
    for span in &traj.spans {
        if span.mode != Mode::Cooperative {
            continue;
        }
        let span_ref = v_l.dot(&traj.state(span.first_sample));
        if reference.is_none() {
            reference = Some(span_ref);
        }
        for idx in span.first_sample..=span.last_sample {
            raw = raw.max((v_l.dot(&traj.state(idx)) - span_ref).abs());
        }
    }
    reference.map(|r| ConservationDrift {
        raw,
        normalized: raw / r.abs().max(f64::MIN_POSITIVE),
        reference: r,
    })
}

/// Render a trajectory as CSV with nine-significant-digit scientific
/// notation, one row per sample.
pub fn to_csv(traj: &Trajectory) -> String {
    let n = traj.n;
    let mut out = String::from("t");
    for tag in ["Im", "Ud", "U", "I", "ratio"] {
        for k in 1..=n {
            out.push_str(&format!(",{tag}_{k}"));
        }
    }
    out.push('\n');
    for idx in 0..traj.samples() {
        out.push_str(&format!("{:.8e}", traj.times[idx]));
        for series in [&traj.im, &traj.ud, &traj.u, &traj.i, &traj.ratios] {
            for k in 0..n {
                out.push_str(&format!(",{:.8e}", series[idx][k]));
            }
        }
        out.push('\n');
    }
    out
}
