//! Physical grid description and reduction to a generator-only conductance
//! model.
//!
//! A grid has `n_gen` generator nodes followed by `n_load` load nodes,
//! resistive lines between nodes, and nonnegative shunt conductances per
//! node (every load node must have one, or it cannot be eliminated).
//! [`kron_reduce`] eliminates the load nodes and returns the generator-only
//! conductance matrix together with the equivalent current injection that
//! constant-current loads contribute at the generator ports.

use nalgebra::{DMatrix, DVector};

use crate::numerics;
use crate::{Error, Result};

/// Full grid description. Node indices `0..n_gen` are generators,
/// `n_gen..n_gen+n_load` are loads.
#[derive(Debug, Clone)]
pub struct NetworkSpec {
    pub n_gen: usize,
    pub n_load: usize,
    /// Undirected lines `(k, j, conductance_siemens)`, `k != j`.
    pub branches: Vec<(usize, usize, f64)>,
    /// Per-node shunt conductance, length `n_gen + n_load`.
    pub shunts: Vec<f64>,
    /// Constant current drawn/injected at each load node, length `n_load`.
    pub load_injections: Option<Vec<f64>>,
}

impl NetworkSpec {
    pub fn total_nodes(&self) -> usize {
        self.n_gen + self.n_load
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.total_nodes();
        if self.n_gen == 0 {
            return Err(Error::InvalidInput("grid needs at least one generator node".into()));
        }
        if self.shunts.len() != n {
            return Err(Error::InvalidInput(format!(
                "expected {} shunt values, got {}",
                n,
                self.shunts.len()
            )));
        }
        for (i, &g) in self.shunts.iter().enumerate() {
            if !g.is_finite() || g < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "shunt conductance at node {i} must be finite and nonnegative, got {g}"
                )));
            }
            if i >= self.n_gen && g <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "load node {i} needs a positive shunt conductance to be reducible"
                )));
            }
        }
        for &(k, j, g) in &self.branches {
            if k == j {
                return Err(Error::InvalidInput(format!("self-branch at node {k} is not allowed")));
            }
            if k >= n || j >= n {
                return Err(Error::InvalidInput(format!(
                    "branch ({k},{j}) references a node outside 0..{n}"
                )));
            }
            if !g.is_finite() || g < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "branch ({k},{j}) conductance must be finite and nonnegative, got {g}"
                )));
            }
        }
        if let Some(inj) = &self.load_injections {
            if inj.len() != self.n_load {
                return Err(Error::InvalidInput(format!(
                    "expected {} load injections, got {}",
                    self.n_load,
                    inj.len()
                )));
            }
            if inj.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput("load injections must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Generator-only conductance model: `y = diag(ys) + yc` with `yc` having
/// zero row sums (branch part) and `ys >= 0` (shunt part).
#[derive(Debug, Clone)]
pub struct ReducedNetwork {
    pub n: usize,
    pub y: DMatrix<f64>,
    /// Diagonal of the shunt part (row sums of `y`).
    pub ys: DVector<f64>,
    /// Branch part, `y - diag(ys)`.
    pub yc: DMatrix<f64>,
}

impl ReducedNetwork {
    /// Split a conductance matrix into shunt and branch parts, validating
    /// the structural invariants (symmetry, nonpositive off-diagonals,
    /// nonnegative row sums). Tiny violations from prior floating-point
    /// elimination are clamped to zero.
    pub fn from_matrix(y: DMatrix<f64>) -> Result<Self> {
        if y.nrows() != y.ncols() || y.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "conductance matrix must be square and nonempty, got {}x{}",
                y.nrows(),
                y.ncols()
            )));
        }
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("conductance matrix has non-finite entries".into()));
        }
        let n = y.nrows();
        let scale = y.norm().max(1.0);
        let tol = 1e-12 * scale;
        if (&y - y.transpose()).norm() > tol {
            return Err(Error::InvalidInput("conductance matrix must be symmetric".into()));
        }
        let mut y = y;
        // exact symmetry so downstream splits are reproducible
        for i in 0..n {
            for j in 0..i {
                let m = 0.5 * (y[(i, j)] + y[(j, i)]);
                y[(i, j)] = m;
                y[(j, i)] = m;
            }
        }
        let mut ys = DVector::zeros(n);
        for i in 0..n {
            for j in 0..n {
                if i != j && y[(i, j)] > 0.0 {
                    if y[(i, j)] > tol {
                        return Err(Error::InvalidInput(format!(
                            "off-diagonal conductance ({i},{j}) must be nonpositive, got {}",
                            y[(i, j)]
                        )));
                    }
                    y[(i, j)] = 0.0;
                    y[(j, i)] = 0.0;
                }
            }
            let row_sum: f64 = y.row(i).iter().sum();
            if row_sum < -tol {
                return Err(Error::InvalidInput(format!(
                    "row {i} of the conductance matrix sums to {row_sum}, expected >= 0"
                )));
            }
            ys[i] = row_sum.max(0.0);
        }
        let mut yc = y.clone();
        for i in 0..n {
            yc[(i, i)] -= ys[i];
        }
        Ok(ReducedNetwork { n, y, ys, yc })
    }

    /// Whether any shunt survives reduction (`||ys|| > 1e-12 max(1, ||y||)`).
    /// Shunt presence decides which steady-state branch applies downstream.
    pub fn shunt_present(&self) -> bool {
        self.ys.norm() > 1e-12 * self.y.norm().max(1.0)
    }

    pub fn ys_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.ys)
    }
}

/// Assemble the full conductance matrix: diagonal = shunt + incident branch
/// conductances, off-diagonal (k,j) = minus the total branch conductance
/// between k and j.
pub fn build_full(spec: &NetworkSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = spec.total_nodes();
    let mut y = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        y[(i, i)] = spec.shunts[i];
    }
    for &(k, j, g) in &spec.branches {
        y[(k, k)] += g;
        y[(j, j)] += g;
        y[(k, j)] -= g;
        y[(j, k)] -= g;
    }
    Ok(y)
}

/// Eliminate the load nodes: returns the generator-only model and the
/// equivalent generator-port injection contributed by constant-current
/// loads (zero when there are none). Port currents of the full grid equal
/// `y * u + injection` for any generator voltage vector `u`.
pub fn kron_reduce(spec: &NetworkSpec) -> Result<(ReducedNetwork, DVector<f64>)> {
    let full = build_full(spec)?;
    let ng = spec.n_gen;
    let nl = spec.n_load;
    if nl == 0 {
        let net = ReducedNetwork::from_matrix(full)?;
        return Ok((net, DVector::zeros(ng)));
    }
    let ygg = full.view((0, 0), (ng, ng)).into_owned();
    let ygl = full.view((0, ng), (ng, nl)).into_owned();
    let yll = full.view((ng, ng), (nl, nl)).into_owned();
    let lu = yll.clone().lu();
    // Yll^{-1} Ylg and Yll^{-1} I_L via one factorization
    let ylg = ygl.transpose();
    let sol = lu.solve(&ylg).ok_or_else(|| {
        Error::InvalidInput("load-load conductance block is singular; cannot eliminate load nodes".into())
    })?;
    let y = ygg - &ygl * &sol;
    let inj = match &spec.load_injections {
        Some(i_l) => {
            let v = DVector::from_column_slice(i_l);
            let w = lu.solve(&v).ok_or_else(|| {
                Error::InvalidInput(
                    "load-load conductance block is singular; cannot eliminate load nodes".into(),
                )
            })?;
            &ygl * w
        }
        None => DVector::zeros(ng),
    };
    let net = ReducedNetwork::from_matrix(y)?;
    Ok((net, inj))
}

/// Connectivity of the graph induced by the nonzero off-diagonals of a
/// branch matrix (breadth-first search). A single node counts as connected.
pub fn is_connected(yc: &DMatrix<f64>) -> bool {
    let n = yc.nrows();
    if n <= 1 {
        return true;
    }
    let thresh = 1e-14 * yc.norm().max(1.0);
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if i != j && !seen[j] && yc[(i, j)].abs() > thresh {
                seen[j] = true;
                count += 1;
                queue.push_back(j);
            }
        }
    }
    count == n
}

/// Solve the full grid for given generator voltages: returns (generator
/// port currents, load voltages). Used as the reduction oracle.
pub fn full_port_solve(
    spec: &NetworkSpec,
    u_gen: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let full = build_full(spec)?;
    let ng = spec.n_gen;
    let nl = spec.n_load;
    if u_gen.len() != ng {
        return Err(Error::InvalidInput(format!(
            "expected {ng} generator voltages, got {}",
            u_gen.len()
        )));
    }
    if nl == 0 {
        return Ok((&full * u_gen, DVector::zeros(0)));
    }
    let ygl = full.view((0, ng), (ng, nl)).into_owned();
    let yll = full.view((ng, ng), (nl, nl)).into_owned();
    let ylg = ygl.transpose();
    let i_l = spec
        .load_injections
        .clone()
        .map(DVector::from_vec)
        .unwrap_or_else(|| DVector::zeros(nl));
    // load balance: Ylg u_g + Yll u_l = I_L
    let rhs = i_l - &ylg * u_gen;
    let u_l = numerics::solve(&yll, &rhs)?;
    let ygg = full.view((0, 0), (ng, ng)).into_owned();
    let i_gen = ygg * u_gen + ygl * &u_l;
    Ok((i_gen, u_l))
}
