//! JSON scenario files and their translation into core types.
//!
//! A scenario describes the network (either as named nodes and lines to be
//! reduced, or as an already-reduced conductance matrix), the droop
//! parameters, the cooperative controller, an optional staged simulation,
//! and which analyses to run. Per-node quantities accept either one scalar
//! applied everywhere or a map from node id to value.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::coop::CooperativeConfig;
use crate::droop::PrimaryDroopConfig;
use crate::network::{self, NetworkSpec, ReducedNetwork};
use crate::sim;
use crate::{Error, Result};

/// Hex SHA-256 of raw input bytes; embedded in every report so outputs can
/// be traced back to the exact input file.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    network: NetworkSection,
    #[serde(default)]
    primary: Option<PrimarySection>,
    #[serde(default)]
    cooperative: Option<CooperativeSection>,
    #[serde(default)]
    simulation: Option<SimulationSection>,
    #[serde(default)]
    analysis: Option<AnalysisSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkSection {
    #[serde(default)]
    nodes: Option<Vec<NodeSpec>>,
    #[serde(default)]
    lines: Option<Vec<LineSpec>>,
    #[serde(default)]
    reduced: Option<ReducedSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeSpec {
    id: String,
    #[serde(rename = "type")]
    kind: NodeKind,
    #[serde(default)]
    shunt_siemens: f64,
    #[serde(default)]
    injection_amps: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum NodeKind {
    Generator,
    Load,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineSpec {
    from: String,
    to: String,
    #[serde(default)]
    resistance_ohms: Option<f64>,
    #[serde(default)]
    conductance_siemens: Option<f64>,
}

/// Accepts the output of the `reduce` command verbatim.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReducedSection {
    y: Vec<Vec<f64>>,
    #[serde(default)]
    n: Option<usize>,
    #[serde(default)]
    node_ids: Option<Vec<String>>,
    #[serde(default)]
    ys: Option<Vec<f64>>,
    #[serde(default)]
    yc: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    equivalent_injection: Option<Vec<f64>>,
    #[serde(default)]
    #[allow(dead_code)] // provenance of a previous run; carried, not checked
    input_sha256: Option<String>,
}

/// One scalar for every node, or per-node values keyed by id.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PerNode {
    Uniform(f64),
    ById(BTreeMap<String, f64>),
}

impl PerNode {
    fn resolve(&self, ids: &[String], field: &str) -> Result<DVector<f64>> {
        match self {
            PerNode::Uniform(v) => Ok(DVector::from_element(ids.len(), *v)),
            PerNode::ById(map) => {
                for key in map.keys() {
                    if !ids.contains(key) {
                        return Err(Error::InvalidInput(format!(
                            "{field}: unknown node id {key:?}"
                        )));
                    }
                }
                let mut out = DVector::zeros(ids.len());
                for (k, id) in ids.iter().enumerate() {
                    match map.get(id) {
                        Some(v) => out[k] = *v,
                        None => {
                            return Err(Error::InvalidInput(format!(
                                "{field}: missing value for node {id:?}"
                            )))
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrimarySection {
    r_ohms: PerNode,
    tau_s: PerNode,
    ud_volts: PerNode,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CooperativeSection {
    #[serde(default)]
    alpha: Option<PerNode>,
    beta: PerNode,
    imax_amps: PerNode,
    #[serde(default)]
    graph: Option<GraphSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphSection {
    #[serde(default)]
    edges: Option<Vec<EdgeSpec>>,
    #[serde(default)]
    laplacian: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeSpec {
    from: String,
    to: String,
    #[serde(default = "default_weight")]
    weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulationSection {
    phases: Vec<PhaseSpec>,
    #[serde(default = "default_record_dt")]
    record_dt_s: f64,
    #[serde(default)]
    method: Option<MethodChoice>,
    #[serde(default)]
    rk4_dt_s: Option<f64>,
    #[serde(default)]
    initial_im_amps: Option<PerNode>,
}

fn default_record_dt() -> f64 {
    1e-3
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhaseSpec {
    mode: PhaseMode,
    duration_s: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum PhaseMode {
    Primary,
    Cooperative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Exact,
    Rk4,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnalysisSection {
    #[serde(default)]
    checks: Option<Vec<Check>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Spectral,
    C1,
    C2,
    Corollaries,
}

/// Simulation plan with the integrator choice left symbolic so the CLI can
/// override it.
#[derive(Debug, Clone)]
pub struct SimPlan {
    pub phases: Vec<sim::Phase>,
    pub record_dt: f64,
    pub method: MethodChoice,
    pub rk4_dt: Option<f64>,
    pub im0: DVector<f64>,
}

impl SimPlan {
    /// Concrete integrator: RK4 defaults its step to a fiftieth of the
    /// fastest filter time constant.
    pub fn resolve_method(&self, min_tau: f64, cli_override: Option<MethodChoice>) -> sim::Method {
        match cli_override.unwrap_or(self.method) {
            MethodChoice::Exact => sim::Method::Exact,
            MethodChoice::Rk4 => sim::Method::Rk4 {
                dt: self.rk4_dt.unwrap_or(min_tau / 50.0),
            },
        }
    }
}

/// A fully validated scenario in core types.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub input_sha256: String,
    pub node_ids: Vec<String>,
    pub net: ReducedNetwork,
    pub equivalent_injection: Option<DVector<f64>>,
    pub primary: Option<PrimaryDroopConfig>,
    pub cooperative: Option<CooperativeConfig>,
    pub simulation: Option<SimPlan>,
    pub checks: Vec<Check>,
}

impl LoadedScenario {
    pub fn primary(&self) -> Result<&PrimaryDroopConfig> {
        self.primary
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("scenario has no primary section".into()))
    }

    pub fn cooperative(&self) -> Result<&CooperativeConfig> {
        self.cooperative
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("scenario has no cooperative section".into()))
    }

    pub fn simulation(&self) -> Result<&SimPlan> {
        self.simulation
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("scenario has no simulation section".into()))
    }

    /// Assemble the staged experiment, optionally overriding the integrator.
    pub fn to_sim_scenario(&self, cli_override: Option<MethodChoice>) -> Result<sim::Scenario> {
        let pd = self.primary()?.clone();
        let cc = self.cooperative()?.clone();
        let plan = self.simulation()?;
        let method = plan.resolve_method(pd.tau.min(), cli_override);
        Ok(sim::Scenario {
            net: self.net.clone(),
            primary: pd,
            cooperative: cc,
            phases: plan.phases.clone(),
            im0: plan.im0.clone(),
            record_dt: plan.record_dt,
            method,
        })
    }

    pub fn wants(&self, check: Check) -> bool {
        self.checks.contains(&check)
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::InvalidInput(format!("{what} must not be empty")));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::InvalidInput(format!(
                "{what} row {i} has {} entries, expected {n}",
                row.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Parse and validate a scenario file.
pub fn load_scenario(bytes: &[u8]) -> Result<LoadedScenario> {
    let input_sha256 = sha256_hex(bytes);
    let file: ScenarioFile = serde_json::from_slice(bytes)
        .map_err(|e| Error::InvalidInput(format!("scenario JSON: {e}")))?;

    let (node_ids, net, equivalent_injection) = build_network(&file.network)?;
    let n = net.n;

    let primary = match &file.primary {
        None => None,
        Some(p) => {
            let pd = PrimaryDroopConfig {
                r: p.r_ohms.resolve(&node_ids, "primary.r_ohms")?,
                tau: p.tau_s.resolve(&node_ids, "primary.tau_s")?,
                ud: p.ud_volts.resolve(&node_ids, "primary.ud_volts")?,
            };
            pd.validate(n)?;
            Some(pd)
        }
    };

    let cooperative = match &file.cooperative {
        None => None,
        Some(c) => {
            let laplacian = build_laplacian(c.graph.as_ref(), &node_ids, &net)?;
            let cc = CooperativeConfig {
                laplacian,
                alpha: match &c.alpha {
                    Some(a) => a.resolve(&node_ids, "cooperative.alpha")?,
                    None => DVector::zeros(n),
                },
                beta: c.beta.resolve(&node_ids, "cooperative.beta")?,
                imax: c.imax_amps.resolve(&node_ids, "cooperative.imax_amps")?,
            };
            cc.validate(n)?;
            Some(cc)
        }
    };

    let simulation = match &file.simulation {
        None => None,
        Some(s) => {
            if primary.is_none() {
                return Err(Error::InvalidInput(
                    "simulation requires a primary section".into(),
                ));
            }
            let phases = s
                .phases
                .iter()
                .map(|p| sim::Phase {
                    mode: match p.mode {
                        PhaseMode::Primary => sim::Mode::PrimaryOnly,
                        PhaseMode::Cooperative => sim::Mode::Cooperative,
                    },
                    duration: p.duration_s,
                })
                .collect();
            let im0 = match &s.initial_im_amps {
                Some(v) => v.resolve(&node_ids, "simulation.initial_im_amps")?,
                None => DVector::zeros(n),
            };
            Some(SimPlan {
                phases,
                record_dt: s.record_dt_s,
                method: s.method.unwrap_or(MethodChoice::Exact),
                rk4_dt: s.rk4_dt_s,
                im0,
            })
        }
    };

    let checks = match file.analysis.as_ref().and_then(|a| a.checks.clone()) {
        Some(list) => list,
        None => vec![Check::Spectral, Check::C1, Check::C2, Check::Corollaries],
    };

    Ok(LoadedScenario {
        input_sha256,
        node_ids,
        net,
        equivalent_injection,
        primary,
        cooperative,
        simulation,
        checks,
    })
}

fn build_network(
    section: &NetworkSection,
) -> Result<(Vec<String>, ReducedNetwork, Option<DVector<f64>>)> {
    match (&section.nodes, &section.reduced) {
        (Some(_), Some(_)) => Err(Error::InvalidInput(
            "network: give either nodes/lines or reduced, not both".into(),
        )),
        (None, None) => Err(Error::InvalidInput(
            "network: either nodes/lines or reduced is required".into(),
        )),
        (Some(nodes), None) => build_from_nodes(nodes, section.lines.as_deref().unwrap_or(&[])),
        (None, Some(reduced)) => {
            if section.lines.is_some() {
                return Err(Error::InvalidInput(
                    "network: lines make no sense with a reduced matrix".into(),
                ));
            }
            build_from_reduced(reduced)
        }
    }
}

fn build_from_nodes(
    nodes: &[NodeSpec],
    lines: &[LineSpec],
) -> Result<(Vec<String>, ReducedNetwork, Option<DVector<f64>>)> {
    // generators first, then loads, each in file order
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    let mut gen_ids = Vec::new();
    let mut load_rows = Vec::new();
    for node in nodes {
        if node.kind == NodeKind::Generator {
            if node.injection_amps.is_some() {
                return Err(Error::InvalidInput(format!(
                    "node {:?}: injections are modeled at load nodes only",
                    node.id
                )));
            }
            gen_ids.push(node.id.clone());
        } else {
            load_rows.push(node);
        }
    }
    let n_gen = gen_ids.len();
    let n_load = load_rows.len();
    let mut shunts = vec![0.0; n_gen + n_load];
    let mut order: Vec<&NodeSpec> = Vec::with_capacity(n_gen + n_load);
    order.extend(nodes.iter().filter(|x| x.kind == NodeKind::Generator));
    order.extend(nodes.iter().filter(|x| x.kind == NodeKind::Load));
    for (k, node) in order.iter().enumerate() {
        if index.insert(node.id.as_str(), k).is_some() {
            return Err(Error::InvalidInput(format!("duplicate node id {:?}", node.id)));
        }
        shunts[k] = node.shunt_siemens;
    }
    let mut branches = Vec::with_capacity(lines.len());
    for line in lines {
        let from = *index
            .get(line.from.as_str())
            .ok_or_else(|| Error::InvalidInput(format!("line references unknown node {:?}", line.from)))?;
        let to = *index
            .get(line.to.as_str())
            .ok_or_else(|| Error::InvalidInput(format!("line references unknown node {:?}", line.to)))?;
        let g = match (line.resistance_ohms, line.conductance_siemens) {
            (Some(r), None) => {
                if !(r > 0.0 && r.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "line {:?}-{:?}: resistance must be positive, got {r}",
                        line.from, line.to
                    )));
                }
                1.0 / r
            }
            (None, Some(g)) => g,
            _ => {
                return Err(Error::InvalidInput(format!(
                    "line {:?}-{:?}: give exactly one of resistance_ohms or conductance_siemens",
                    line.from, line.to
                )))
            }
        };
        branches.push((from, to, g));
    }
    let load_injections = if load_rows.iter().any(|x| x.injection_amps.is_some()) {
        Some(
            load_rows
                .iter()
                .map(|x| x.injection_amps.unwrap_or(0.0))
                .collect(),
        )
    } else {
        None
    };
    let spec = NetworkSpec { n_gen, n_load, branches, shunts, load_injections };
    let (net, injection) = network::kron_reduce(&spec)?;
    let injection = if injection.norm() > 0.0 { Some(injection) } else { None };
    Ok((gen_ids, net, injection))
}

fn build_from_reduced(
    reduced: &ReducedSection,
) -> Result<(Vec<String>, ReducedNetwork, Option<DVector<f64>>)> {
    let y = matrix_from_rows(&reduced.y, "network.reduced.y")?;
    let net = ReducedNetwork::from_matrix(y)?;
    let n = net.n;
    if let Some(m) = reduced.n {
        if m != n {
            return Err(Error::InvalidInput(format!(
                "network.reduced.n = {m} disagrees with the {n}x{n} matrix"
            )));
        }
    }
    // ys/yc may echo a previous reduce output; verify they agree
    if let Some(ys) = &reduced.ys {
        if ys.len() != n {
            return Err(Error::InvalidInput("network.reduced.ys has the wrong length".into()));
        }
        let scale = net.ys.norm().max(1.0);
        for k in 0..n {
            if (ys[k] - net.ys[k]).abs() > 1e-9 * scale {
                return Err(Error::InvalidInput(format!(
                    "network.reduced.ys[{k}] = {} is inconsistent with y (expected {})",
                    ys[k], net.ys[k]
                )));
            }
        }
    }
    if let Some(rows) = &reduced.yc {
        let yc = matrix_from_rows(rows, "network.reduced.yc")?;
        if yc.nrows() != n || (yc - &net.yc).norm() > 1e-9 * net.yc.norm().max(1.0) {
            return Err(Error::InvalidInput(
                "network.reduced.yc is inconsistent with y".into(),
            ));
        }
    }
    let node_ids = match &reduced.node_ids {
        Some(ids) => {
            if ids.len() != n {
                return Err(Error::InvalidInput(format!(
                    "network.reduced.node_ids has {} entries, expected {n}",
                    ids.len()
                )));
            }
            let mut seen = std::collections::BTreeSet::new();
            for id in ids {
                if !seen.insert(id) {
                    return Err(Error::InvalidInput(format!("duplicate node id {id:?}")));
                }
            }
            ids.clone()
        }
        None => (1..=n).map(|k| format!("g{k}")).collect(),
    };
    let injection = match &reduced.equivalent_injection {
        Some(v) => {
            if v.len() != n {
                return Err(Error::InvalidInput(
                    "network.reduced.equivalent_injection has the wrong length".into(),
                ));
            }
            for (k, x) in v.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "network.reduced.equivalent_injection[{k}] is not finite"
                    )));
                }
            }
            Some(DVector::from_vec(v.clone()))
        }
        None => None,
    };
    Ok((node_ids, net, injection))
}

fn build_laplacian(
    graph: Option<&GraphSection>,
    ids: &[String],
    net: &ReducedNetwork,
) -> Result<DMatrix<f64>> {
    let n = ids.len();
    match graph {
        // default: communicate along the physical lines with unit weights
        None => {
            let scale = net.yc.norm().max(1.0);
            let mut l = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in (i + 1)..n {
                    if net.yc[(i, j)] < -1e-12 * scale {
                        l[(i, j)] = -1.0;
                        l[(j, i)] = -1.0;
                        l[(i, i)] += 1.0;
                        l[(j, j)] += 1.0;
                    }
                }
            }
            Ok(l)
        }
        Some(section) => match (&section.edges, &section.laplacian) {
            (Some(_), Some(_)) => Err(Error::InvalidInput(
                "cooperative.graph: give either edges or laplacian, not both".into(),
            )),
            (None, None) => Err(Error::InvalidInput(
                "cooperative.graph: either edges or laplacian is required".into(),
            )),
            (Some(edges), None) => {
                let index: BTreeMap<&str, usize> =
                    ids.iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();
                let mut l = DMatrix::zeros(n, n);
                for e in edges {
                    let i = *index.get(e.from.as_str()).ok_or_else(|| {
                        Error::InvalidInput(format!("graph edge references unknown node {:?}", e.from))
                    })?;
                    let j = *index.get(e.to.as_str()).ok_or_else(|| {
                        Error::InvalidInput(format!("graph edge references unknown node {:?}", e.to))
                    })?;
                    if i == j {
                        return Err(Error::InvalidInput(format!(
                            "graph edge {:?}-{:?} is a self-loop",
                            e.from, e.to
                        )));
                    }
                    if !(e.weight > 0.0 && e.weight.is_finite()) {
                        return Err(Error::InvalidInput(format!(
                            "graph edge {:?}-{:?}: weight must be positive, got {}",
                            e.from, e.to, e.weight
                        )));
                    }
                    l[(i, j)] -= e.weight;
                    l[(j, i)] -= e.weight;
                    l[(i, i)] += e.weight;
                    l[(j, j)] += e.weight;
                }
                Ok(l)
            }
            (None, Some(rows)) => matrix_from_rows(rows, "cooperative.graph.laplacian"),
        },
    }
}
