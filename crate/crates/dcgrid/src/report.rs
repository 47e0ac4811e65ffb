//! Report assembly: stable JSON shapes for the CLI outputs.
//!
//! Field order is fixed by struct order and maps use sorted keys, so a
//! report is byte-identical across runs on identical input.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::coop::{self, ConditionOutcome, CooperativeConfig, ThetaMeasure};
use crate::droop::{self, PrimaryDroopConfig};
use crate::network;
use crate::scenario::{Check, LoadedScenario};
use crate::sim::{self, Trajectory};
use crate::{Error, Result};

pub fn render_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    s.push('\n');
    s
}

/// Output of the `reduce` command. Designed to be pasted back into a
/// scenario under `network.reduced`.
#[derive(Debug, Serialize)]
pub struct ReduceReport {
    pub n: usize,
    pub node_ids: Vec<String>,
    pub y: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
    pub yc: Vec<Vec<f64>>,
    pub equivalent_injection: Option<Vec<f64>>,
    pub input_sha256: String,
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn reduce_report(ls: &LoadedScenario) -> ReduceReport {
    ReduceReport {
        n: ls.net.n,
        node_ids: ls.node_ids.clone(),
        y: rows(&ls.net.y),
        ys: vec_of(&ls.net.ys),
        yc: rows(&ls.net.yc),
        equivalent_injection: ls.equivalent_injection.as_ref().map(vec_of),
        input_sha256: ls.input_sha256.clone(),
    }
}

#[derive(Debug, Serialize)]
pub struct NetworkSummary {
    pub n: usize,
    pub node_ids: Vec<String>,
    pub connected: bool,
    pub shunt_present: bool,
}

#[derive(Debug, Serialize)]
pub struct PrimaryReport {
    /// Guaranteed exponential decay rate of the droop loop.
    pub decay_bound: f64,
    pub steady_currents: Vec<f64>,
    pub steady_voltages: Vec<f64>,
    pub steady_ratios: Vec<f64>,
    /// Norm of the mean-removed steady currents.
    pub sharing_deviation: f64,
    /// A-priori deviation estimate; diagnostic only, and absent when the
    /// rated voltages are not uniform.
    pub sharing_bound: Option<f64>,
    pub eigenvalues: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize)]
pub struct ConditionReport {
    pub outcome: String,
    pub nu: Option<f64>,
    pub theta_kind: Option<String>,
    pub theta: Option<f64>,
    pub reason: Option<String>,
}

impl ConditionReport {
    fn from_outcome(outcome: &ConditionOutcome) -> Self {
        match outcome {
            ConditionOutcome::Holds { nu, theta } => {
                let (kind, value) = match theta {
                    ThetaMeasure::Finite(t) => ("finite", Some(*t)),
                    ThetaMeasure::Infinite => ("infinite", None),
                    ThetaMeasure::Undefined => ("undefined", None),
                };
                ConditionReport {
                    outcome: "holds".into(),
                    nu: Some(*nu),
                    theta_kind: Some(kind.into()),
                    theta: value,
                    reason: None,
                }
            }
            ConditionOutcome::Fails { reason } => ConditionReport {
                outcome: "fails".into(),
                nu: None,
                theta_kind: None,
                theta: None,
                reason: Some(reason.clone()),
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SteadyReport {
    pub branch: String,
    pub rc1: f64,
    pub rc2: f64,
    pub i_inf: Vec<f64>,
    pub u_inf: Vec<f64>,
    pub ud_inf: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct PropertyReport {
    pub status: String,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct CorollariesReport {
    pub p1: PropertyReport,
    pub p2: PropertyReport,
    pub p3: PropertyReport,
    pub p4: PropertyReport,
    pub p5: PropertyReport,
}

#[derive(Debug, Serialize)]
pub struct CooperativeReport {
    /// Spectral classification; absent when the spectral check was not
    /// requested.
    pub verdict: Option<String>,
    pub zero_eigenvalue_count: Option<usize>,
    pub max_nonzero_real_part: Option<f64>,
    pub zero_semisimple: Option<bool>,
    pub eigenvalues: Option<Vec<[f64; 2]>>,
    pub condition_1: Option<ConditionReport>,
    pub condition_2: Option<ConditionReport>,
    pub steady_state: SteadyReport,
    pub corollaries: Option<CorollariesReport>,
}

#[derive(Debug, Serialize)]
pub struct StabilityReport {
    pub input_sha256: String,
    pub network: NetworkSummary,
    pub primary: PrimaryReport,
    pub cooperative: CooperativeReport,
    pub warnings: Vec<String>,
}

fn complex_pairs(values: &[crate::numerics::C64]) -> Vec<[f64; 2]> {
    values.iter().map(|z| [z.re, z.im]).collect()
}

fn property_report(p: &coop::PropertyCheck) -> PropertyReport {
    PropertyReport { status: p.status.as_str().into(), detail: p.detail.clone() }
}

/// Run the requested analyses and assemble the full report.
pub fn stability_report(ls: &LoadedScenario) -> Result<StabilityReport> {
    let pd = ls.primary()?;
    let cc = ls.cooperative()?;
    let net = &ls.net;
    let connected = network::is_connected(&net.yc);

    let mut warnings = Vec::new();
    if !connected {
        warnings.push(
            "network is disconnected: the zero eigenvalue appears once per component and \
             currents only share within components"
                .to_string(),
        );
    }

    let primary_sys = droop::build_primary(net, pd)?;
    let (iss, uss) = droop::steady_primary(net, pd)?;
    let ratios = DVector::from_fn(net.n, |k, _| iss[k] / cc.imax[k]);
    let sharing_bound = match droop::sharing_bound(net, pd) {
        Ok(b) => Some(b),
        Err(Error::InvalidInput(_)) => None,
        Err(e) => return Err(e),
    };
    let primary = PrimaryReport {
        decay_bound: droop::decay_bound(net, pd)?,
        steady_currents: vec_of(&iss),
        steady_voltages: vec_of(&uss),
        steady_ratios: vec_of(&ratios),
        sharing_deviation: droop::sharing_deviation(&iss),
        sharing_bound,
        eigenvalues: complex_pairs(&crate::numerics::eigenvalues(&primary_sys.a)?),
    };

    let sys = coop::build_coop(net, pd, cc)?;
    let (verdict, zero_count, max_re, semisimple, eigs) = if ls.wants(Check::Spectral) {
        let v = coop::semistability_check(&sys, net)?;
        (
            Some(v.classification.as_str().to_string()),
            Some(v.zero_eigenvalue_count),
            v.max_nonzero_real_part,
            Some(v.zero_semisimple),
            Some(complex_pairs(&v.eigenvalues)),
        )
    } else {
        (None, None, None, None, None)
    };

    let condition_1 = if ls.wants(Check::C1) {
        Some(ConditionReport::from_outcome(&coop::check_c1(net, pd, cc)?))
    } else {
        None
    };
    let condition_2 = if ls.wants(Check::C2) {
        Some(ConditionReport::from_outcome(&coop::check_c2(net, pd, cc)?))
    } else {
        None
    };

    // prediction from rest at the rated voltages
    let pred = coop::predict_steady(net, pd, cc, &DVector::zeros(net.n), &pd.ud)?;
    let ud_inf = DVector::from_fn(net.n, |k, _| pred.u_inf[k] + pd.r[k] * pred.i_inf[k]);
    let steady_state = SteadyReport {
        branch: match pred.branch {
            coop::SteadyBranch::ShuntPresent => "shunt_present".into(),
            coop::SteadyBranch::Shuntless => "shuntless".into(),
        },
        rc1: pred.rc1,
        rc2: pred.rc2,
        i_inf: vec_of(&pred.i_inf),
        u_inf: vec_of(&pred.u_inf),
        ud_inf: vec_of(&ud_inf),
    };

    let corollaries = if ls.wants(Check::Corollaries) {
        let rep = coop::corollary_checks(net, pd, cc, &pred, &iss, &uss)?;
        Some(CorollariesReport {
            p1: property_report(&rep.p1),
            p2: property_report(&rep.p2),
            p3: property_report(&rep.p3),
            p4: property_report(&rep.p4),
            p5: property_report(&rep.p5),
        })
    } else {
        None
    };

    Ok(StabilityReport {
        input_sha256: ls.input_sha256.clone(),
        network: NetworkSummary {
            n: net.n,
            node_ids: ls.node_ids.clone(),
            connected,
            shunt_present: net.shunt_present(),
        },
        primary,
        cooperative: CooperativeReport {
            verdict,
            zero_eigenvalue_count: zero_count,
            max_nonzero_real_part: max_re,
            zero_semisimple: semisimple,
            eigenvalues: eigs,
            condition_1,
            condition_2,
            steady_state,
            corollaries,
        },
        warnings,
    })
}

#[derive(Debug, Serialize)]
pub struct TerminalReport {
    pub time_s: f64,
    pub im: Vec<f64>,
    pub ud: Vec<f64>,
    pub u: Vec<f64>,
    pub i: Vec<f64>,
    pub ratios: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct ConservationReport {
    pub raw: f64,
    pub normalized: f64,
    pub reference: f64,
}

/// Gap between the simulated terminal state and the predicted limit.
#[derive(Debug, Serialize)]
pub struct PredictionGap {
    pub rc1: f64,
    pub max_current_error: f64,
    pub max_voltage_error: f64,
    pub max_ratio_error: f64,
}

#[derive(Debug, Serialize)]
pub struct SimulateSummary {
    pub input_sha256: String,
    pub method: String,
    pub samples: usize,
    pub duration_s: f64,
    pub terminal: TerminalReport,
    pub conservation: Option<ConservationReport>,
    pub prediction_gap: Option<PredictionGap>,
}

/// Summarize a finished run: terminal state, conserved-quantity drift, and
/// the distance to the predicted steady state (when a cooperative phase
/// ran).
pub fn simulate_summary(ls: &LoadedScenario, traj: &Trajectory, method: sim::Method) -> Result<SimulateSummary> {
    let pd = ls.primary()?;
    let cc = ls.cooperative()?;
    let last = traj.samples() - 1;
    let terminal = TerminalReport {
        time_s: traj.times[last],
        im: vec_of(&traj.im[last]),
        ud: vec_of(&traj.ud[last]),
        u: vec_of(&traj.u[last]),
        i: vec_of(&traj.i[last]),
        ratios: vec_of(&traj.ratios[last]),
    };
    let had_coop = traj.spans.iter().any(|s| s.mode == sim::Mode::Cooperative);
    let conservation = if had_coop {
        let (v_l, _) = coop::null_eigenvectors(&ls.net, pd, cc)?;
        sim::conservation_monitor(traj, &v_l).map(|d| ConservationReport {
            raw: d.raw,
            normalized: d.normalized,
            reference: d.reference,
        })
    } else {
        None
    };
    let prediction_gap = if had_coop {
        // the prediction depends on the state entering the first
        // cooperative phase
        let entry = traj
            .spans
            .iter()
            .find(|s| s.mode == sim::Mode::Cooperative)
            .map(|s| s.first_sample)
            .unwrap();
        let pred = coop::predict_steady(&ls.net, pd, cc, &traj.im[entry], &traj.ud[entry])?;
        let max_err = |a: &DVector<f64>, b: &DVector<f64>| {
            (0..a.len()).map(|k| (a[k] - b[k]).abs()).fold(0.0f64, f64::max)
        };
        let pred_ratios = DVector::from_fn(ls.net.n, |k, _| pred.i_inf[k] / cc.imax[k]);
        Some(PredictionGap {
            rc1: pred.rc1,
            max_current_error: max_err(&traj.im[last], &pred.i_inf),
            max_voltage_error: max_err(&traj.u[last], &pred.u_inf),
            max_ratio_error: max_err(&traj.ratios[last], &pred_ratios),
        })
    } else {
        None
    };
    Ok(SimulateSummary {
        input_sha256: ls.input_sha256.clone(),
        method: match method {
            sim::Method::Exact => "exact".into(),
            sim::Method::Rk4 { dt } => format!("rk4(dt={dt:.3e})"),
        },
        samples: traj.samples(),
        duration_s: traj.times[last],
        terminal,
        conservation,
        prediction_gap,
    })
}

/// Parameter swept uniformly across all nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Alpha,
    Beta,
    R,
    Tau,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Beta => "beta",
            SweepParam::R => "r",
            SweepParam::Tau => "tau",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepParam::Alpha),
            "beta" => Ok(SweepParam::Beta),
            "r" => Ok(SweepParam::R),
            "tau" => Ok(SweepParam::Tau),
            other => Err(Error::InvalidInput(format!(
                "unknown sweep parameter {other:?}; use alpha, beta, r, or tau"
            ))),
        }
    }
}

fn apply_sweep(
    pd: &PrimaryDroopConfig,
    cc: &CooperativeConfig,
    param: SweepParam,
    value: f64,
) -> (PrimaryDroopConfig, CooperativeConfig) {
    let n = pd.r.len();
    let mut pd = pd.clone();
    let mut cc = cc.clone();
    let v = DVector::from_element(n, value);
    match param {
        SweepParam::Alpha => cc.alpha = v,
        SweepParam::Beta => cc.beta = v,
        SweepParam::R => pd.r = v,
        SweepParam::Tau => pd.tau = v,
    }
    (pd, cc)
}

fn csv_field(text: &str) -> String {
    // keep the CSV single-token per cell
    text.replace([',', '\n'], ";")
}

/// Classify the closed loop across parameter values, one CSV row each, in
/// input order. Failures land in the row's error column; the sweep itself
/// always succeeds.
pub fn sweep_csv(ls: &LoadedScenario, param: SweepParam, values: &[f64]) -> Result<String> {
    let pd = ls.primary()?;
    let cc = ls.cooperative()?;
    if values.is_empty() {
        return Err(Error::InvalidInput("sweep needs at least one value".into()));
    }
    let rows: Vec<String> = values
        .par_iter()
        .map(|&value| {
            let (pd_v, cc_v) = apply_sweep(pd, cc, param, value);
            let outcome = (|| -> Result<(String, usize, Option<f64>, f64)> {
                let sys = coop::build_coop(&ls.net, &pd_v, &cc_v)?;
                let verdict = coop::semistability_check(&sys, &ls.net)?;
                let pred =
                    coop::predict_steady(&ls.net, &pd_v, &cc_v, &DVector::zeros(ls.net.n), &pd_v.ud)?;
                Ok((
                    verdict.classification.as_str().to_string(),
                    verdict.zero_eigenvalue_count,
                    verdict.max_nonzero_real_part,
                    pred.rc1,
                ))
            })();
            match outcome {
                Ok((verdict, zeros, max_re, rc1)) => format!(
                    "{},{:.8e},{},{},{},{:.8e},",
                    param.as_str(),
                    value,
                    verdict,
                    zeros,
                    max_re.map(|x| format!("{x:.8e}")).unwrap_or_default(),
                    rc1
                ),
                Err(e) => format!("{},{:.8e},,,,,{}", param.as_str(), value, csv_field(&e.to_string())),
            }
        })
        .collect();
    let mut out =
        String::from("param,value,verdict,zero_eigenvalue_count,max_nonzero_real_part,rc1,error\n");
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    Ok(out)
}
