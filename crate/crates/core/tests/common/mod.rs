//! Shared fixtures: an independent short-run oracle and random instances.
#![allow(dead_code)]

use negsim::geodata::DistanceMatrix;
use negsim::ModelParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Short-run equilibrium computed from first principles with plain
/// (undamped) fixed-point iteration on the three equilibrium equations,
/// sharing no code with the library solver.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub wage: Vec<f64>,
    pub price_index: Vec<f64>,
    pub income: Vec<f64>,
    pub iterations: usize,
}

pub fn oracle_short_run(
    lambda: &[f64],
    phi: &[f64],
    d: &[Vec<f64>],
    mu: f64,
    sigma: f64,
    tau: f64,
    start: &[f64],
) -> Option<OracleSolution> {
    let n = lambda.len();
    let mut w = start.to_vec();
    let mut y = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=1_000_000 {
        for j in 0..n {
            y[j] = (1.0 - mu) * phi[j] + mu * lambda[j] * w[j];
        }
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                let trade = (-tau * d[j][k]).exp().powf(sigma - 1.0);
                s += lambda[k] * w[k].powf(1.0 - sigma) * trade;
            }
            t[j] = s.powf(1.0 / (1.0 - sigma));
        }
        let mut next = vec![0.0; n];
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                let trade = (-tau * d[j][k]).exp().powf(sigma - 1.0);
                s += y[k] * trade * t[k].powf(sigma - 1.0);
            }
            next[j] = s.powf(1.0 / sigma);
        }
        let gap = w.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        w = next;
        if gap < 1e-14 {
            // Re-evaluate Y and T at the converged wage.
            for j in 0..n {
                y[j] = (1.0 - mu) * phi[j] + mu * lambda[j] * w[j];
            }
            for j in 0..n {
                let s: f64 = (0..n)
                    .map(|k| lambda[k] * w[k].powf(1.0 - sigma) * (-tau * d[j][k]).exp().powf(sigma - 1.0))
                    .sum();
                t[j] = s.powf(1.0 / (1.0 - sigma));
            }
            return Some(OracleSolution {
                wage: w,
                price_index: t,
                income: y,
                iterations: it,
            });
        }
    }
    None
}

/// A random short-run instance with parameters inside the scenario ranges.
#[derive(Debug, Clone)]
pub struct Instance {
    pub lambda: Vec<f64>,
    pub phi: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub distances: DistanceMatrix,
    pub params: ModelParams,
}

pub fn random_shares(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Planar points in a `side x side` km square, Euclidean distances.
pub fn random_distances(rng: &mut ChaCha8Rng, n: usize, side: f64) -> Vec<Vec<f64>> {
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen_range(0.0..side), rng.gen_range(0.0..side))).collect();
    (0..n)
        .map(|j| (0..n).map(|k| ((pts[j].0 - pts[k].0).powi(2) + (pts[j].1 - pts[k].1).powi(2)).sqrt()).collect())
        .collect()
}

pub fn random_instance(seed: u64, n: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu = [0.1, 0.3, 0.5][rng.gen_range(0..3)];
    let sigma = [2.0, 5.0][rng.gen_range(0..2)];
    let tau = [0.01, 0.1][rng.gen_range(0..2)];
    let rows = random_distances(&mut rng, n, 30.0);
    Instance {
        lambda: random_shares(&mut rng, n),
        phi: random_shares(&mut rng, n),
        distances: DistanceMatrix::from_rows(rows.clone()).expect("valid distances"),
        rows,
        params: ModelParams::new(mu, sigma, tau),
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn repo_data(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}
