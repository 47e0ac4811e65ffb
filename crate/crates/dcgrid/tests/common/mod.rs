//! Shared randomized-instance generators for the integration suites.
//!
//! Every generator draws from a ChaCha stream seeded by `DCGRID_SEED`
//! (default per suite) so failures replay exactly.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dcgrid::coop::CooperativeConfig;
use dcgrid::droop::{self, PrimaryDroopConfig};
use dcgrid::network::{NetworkSpec, ReducedNetwork};

pub fn rng_for(suite: &str, default_seed: u64) -> ChaCha8Rng {
    let seed = std::env::var("DCGRID_SEED")
        .ok()
        .and_then(|s| s.parse::<u64>().ok())
        .unwrap_or(default_seed);
    // fold the suite name in so suites draw independent streams
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in suite.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

fn add_edge(y: &mut DMatrix<f64>, k: usize, j: usize, g: f64) {
    y[(k, j)] -= g;
    y[(j, k)] -= g;
    y[(k, k)] += g;
    y[(j, j)] += g;
}

/// Random connected coupling matrix: spanning tree plus extra branches.
pub fn random_coupling(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut y = DMatrix::zeros(n, n);
    for k in 1..n {
        let j = rng.random_range(0..k);
        add_edge(&mut y, k, j, rng.random_range(0.2..5.0));
    }
    for _ in 0..n {
        let (k, j) = (rng.random_range(0..n), rng.random_range(0..n));
        if k != j {
            add_edge(&mut y, k, j, rng.random_range(0.2..5.0));
        }
    }
    y
}

/// Connected network; each node carries a shunt with probability
/// `shunt_prob`.
pub fn random_net(rng: &mut ChaCha8Rng, n: usize, shunt_prob: f64) -> ReducedNetwork {
    let mut y = random_coupling(rng, n);
    for k in 0..n {
        if rng.random_bool(shunt_prob) {
            y[(k, k)] += rng.random_range(0.05..2.0);
        }
    }
    ReducedNetwork::from_matrix(y).unwrap()
}

/// Connected information-graph Laplacian with random positive weights.
pub fn random_laplacian(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for k in 1..n {
        let j = rng.random_range(0..k);
        add_edge(&mut l, k, j, rng.random_range(0.5..2.0));
    }
    for _ in 0..n / 2 {
        let (k, j) = (rng.random_range(0..n), rng.random_range(0..n));
        if k != j {
            add_edge(&mut l, k, j, rng.random_range(0.5..2.0));
        }
    }
    l
}

pub struct Instance {
    pub net: ReducedNetwork,
    pub pd: PrimaryDroopConfig,
    pub cc: CooperativeConfig,
}

/// Unconstrained draw (uniform rated voltage, mixed everything else).
pub fn general_instance(rng: &mut ChaCha8Rng, n: usize) -> Instance {
    let net = random_net(rng, n, 0.8);
    let beta = DVector::from_fn(n, |_, _| rng.random_range(10.0..500.0));
    let rbar = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.02) };
    let pd = PrimaryDroopConfig {
        r: DVector::from_fn(n, |_, _| rng.random_range(0.05..0.5)),
        tau: DVector::from_fn(n, |_, _| rng.random_range(0.005..0.05)),
        ud: DVector::from_element(n, rng.random_range(24.0..60.0)),
    };
    let cc = CooperativeConfig {
        laplacian: random_laplacian(rng, n),
        alpha: &beta * rbar,
        beta,
        imax: DVector::from_fn(n, |_, _| rng.random_range(5.0..50.0)),
    };
    Instance { net, pd, cc }
}

/// Premises of the first sufficient condition: information graph equal to
/// the coupling graph, uniform shunts, uniform integral gains, and current
/// limits equalizing `r_k * imax_k`.
pub fn c1_biased_instance(rng: &mut ChaCha8Rng, n: usize) -> Instance {
    let mut y = random_coupling(rng, n);
    let g = rng.random_range(0.1..1.5);
    for k in 0..n {
        y[(k, k)] += g;
    }
    let net = ReducedNetwork::from_matrix(y).unwrap();
    let laplacian = net.yc.clone();
    let r = DVector::from_fn(n, |_, _| rng.random_range(0.05..0.5));
    let ubar = rng.random_range(1.0..5.0);
    let beta = rng.random_range(10.0..500.0);
    let rbar = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.02) };
    let pd = PrimaryDroopConfig {
        r: r.clone(),
        tau: DVector::from_fn(n, |_, _| rng.random_range(0.005..0.05)),
        ud: DVector::from_element(n, rng.random_range(24.0..60.0)),
    };
    let cc = CooperativeConfig {
        laplacian,
        alpha: DVector::from_element(n, beta * rbar),
        beta: DVector::from_element(n, beta),
        imax: DVector::from_fn(n, |k, _| ubar / r[k]),
    };
    Instance { net, pd, cc }
}

/// Premises of the second sufficient condition: uniform time constants,
/// uniform gains, equal current limits, invertible coupling.
pub fn c2_biased_instance(rng: &mut ChaCha8Rng, n: usize) -> Instance {
    let net = random_net(rng, n, 1.0);
    let beta = rng.random_range(10.0..500.0);
    let rbar = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.02) };
    let pd = PrimaryDroopConfig {
        r: DVector::from_fn(n, |_, _| rng.random_range(0.05..0.5)),
        tau: DVector::from_element(n, rng.random_range(0.005..0.05)),
        ud: DVector::from_element(n, rng.random_range(24.0..60.0)),
    };
    let cc = CooperativeConfig {
        laplacian: random_laplacian(rng, n),
        alpha: DVector::from_element(n, beta * rbar),
        beta: DVector::from_element(n, beta),
        imax: DVector::from_element(n, rng.random_range(5.0..50.0)),
    };
    Instance { net, pd, cc }
}

pub enum CorollaryFamily {
    /// Shunted network with limits scaled above the decentralized currents.
    General,
    /// Additionally uniform integral gains and droop resistances.
    Uniform,
    /// Additionally uniform shunt conductances.
    UniformShunts,
    /// Current limits proportional to the shunt conductances.
    Proportional,
}

/// Instance whose decentralized steady currents respect the limits, so the
/// steady-state properties apply.
pub fn corollary_instance(rng: &mut ChaCha8Rng, n: usize, family: CorollaryFamily) -> Instance {
    let uniform_shunts = matches!(
        family,
        CorollaryFamily::UniformShunts | CorollaryFamily::Proportional
    );
    let net = if uniform_shunts && !matches!(family, CorollaryFamily::Proportional) {
        let mut y = random_coupling(rng, n);
        let g = rng.random_range(0.1..1.5);
        for k in 0..n {
            y[(k, k)] += g;
        }
        ReducedNetwork::from_matrix(y).unwrap()
    } else {
        random_net(rng, n, 1.0)
    };
    let uniform_gains = !matches!(family, CorollaryFamily::General);
    let beta = if uniform_gains {
        DVector::from_element(n, rng.random_range(10.0..500.0))
    } else {
        DVector::from_fn(n, |_, _| rng.random_range(10.0..500.0))
    };
    let r = if uniform_gains {
        DVector::from_element(n, rng.random_range(0.05..0.5))
    } else {
        DVector::from_fn(n, |_, _| rng.random_range(0.05..0.5))
    };
    let pd = PrimaryDroopConfig {
        r,
        tau: DVector::from_fn(n, |_, _| rng.random_range(0.005..0.05)),
        ud: DVector::from_element(n, rng.random_range(24.0..60.0)),
    };
    let (iss, _) = droop::steady_primary(&net, &pd).unwrap();
    let imax = match family {
        CorollaryFamily::Proportional => {
            // limits an exact positive multiple of the shunts, scaled to
            // clear the decentralized currents
            let mut eps: f64 = rng.random_range(1.0..20.0);
            for k in 0..n {
                let needed = 1.05 * iss[k].max(1e-6) / net.ys[k];
                eps = eps.max(needed);
            }
            &net.ys * eps
        }
        _ => DVector::from_fn(n, |k, _| {
            let raw: f64 = rng.random_range(5.0..50.0);
            raw.max(1.05 * iss[k].max(0.0))
        }),
    };
    let cc = CooperativeConfig {
        laplacian: random_laplacian(rng, n),
        alpha: DVector::zeros(n),
        beta,
        imax,
    };
    Instance { net, pd, cc }
}

/// Random multi-node specification with load nodes, for checking the
/// reduction against the full network.
pub fn random_spec(rng: &mut ChaCha8Rng) -> NetworkSpec {
    let n_gen = rng.random_range(2..=6);
    let n_load = rng.random_range(1..=4);
    let total = n_gen + n_load;
    // connected over all nodes: spanning tree plus extras
    let mut branches = Vec::new();
    for k in 1..total {
        let j = rng.random_range(0..k);
        branches.push((k, j, rng.random_range(0.2..5.0)));
    }
    for _ in 0..total / 2 {
        let (k, j) = (rng.random_range(0..total), rng.random_range(0..total));
        if k != j {
            branches.push((k, j, rng.random_range(0.2..5.0)));
        }
    }
    let mut shunts = vec![0.0; total];
    for (k, s) in shunts.iter_mut().enumerate() {
        if k < n_gen {
            if rng.random_bool(0.5) {
                *s = rng.random_range(0.05..2.0);
            }
        } else {
            // load shunts must be positive so elimination is well posed
            *s = rng.random_range(0.1..2.0);
        }
    }
    let load_injections = if rng.random_bool(0.7) {
        Some((0..n_load).map(|_| rng.random_range(-10.0..2.0)).collect())
    } else {
        None
    };
    NetworkSpec { n_gen, n_load, branches, shunts, load_injections }
}
