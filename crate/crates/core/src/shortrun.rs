//! Short-run general equilibrium at frozen labor allocations.
//!
//! For fixed manufacturing shares `lambda` and agricultural shares `phi`
//! the economy settles on incomes `Y`, manufacturing price indices `T` and
//! nominal wages `W` that solve
//!
//! ```text
//! Y_j = (1 - mu) phi_j + mu lambda_j W_j
//! T_j = [ sum_k lambda_k (W_k e^{tau D_jk})^{1 - sigma} ]^{1 / (1 - sigma)}
//! W_j = [ sum_k Y_k (e^{tau D_jk})^{1 - sigma} T_k^{sigma - 1} ]^{1 / sigma}
//! ```
//!
//! with the agricultural wage as numeraire. Real wages are
//! `omega_j = W_j T_j^{-mu}`.
//!
//! All three equations share the trade-freeness matrix
//! `F_jk = e^{(1 - sigma) tau D_jk}`, which [`TradeKernel`] precomputes so the
//! fixed-point loop never touches `exp`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodata::DistanceMatrix;

/// Structural parameters of the economy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Expenditure share on manufactures, in (0, 1).
    pub mu: f64,
    /// Elasticity of substitution between varieties, > 1.
    pub sigma: f64,
    /// Iceberg transport-cost rate per unit distance (1/km), >= 0.
    pub tau: f64,
    /// Migration sensitivity, >= 0.
    pub rho: f64,
    /// Fixed labor requirement per variety.
    pub alpha: f64,
    /// Marginal labor requirement.
    pub beta: f64,
}

impl ModelParams {
    /// Parameters with `rho = 1`, `alpha = 1` and `beta = (sigma - 1) / sigma`,
    /// the normalization under which mill prices equal wages.
    pub fn new(mu: f64, sigma: f64, tau: f64) -> Self {
        ModelParams {
            mu,
            sigma,
            tau,
            rho: 1.0,
            alpha: 1.0,
            beta: (sigma - 1.0) / sigma,
        }
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ModelParams {
            mu,
            sigma,
            tau,
            rho,
            alpha,
            beta,
        } = *self;
        let checks = [
            (mu > 0.0 && mu < 1.0, "mu must lie in (0, 1)"),
            (sigma > 1.0 && sigma.is_finite(), "sigma must exceed 1"),
            (tau >= 0.0 && tau.is_finite(), "tau must be non-negative"),
            (rho >= 0.0 && rho.is_finite(), "rho must be non-negative"),
            (alpha > 0.0 && alpha.is_finite(), "alpha must be positive"),
            (beta > 0.0 && beta.is_finite(), "beta must be positive"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::domain(format!("{msg} ({self:?})"))),
            None => Ok(()),
        }
    }
}

/// Precomputed freeness matrix `F_jk = e^{(1 - sigma) tau D_jk}`.
#[derive(Debug, Clone)]
pub struct TradeKernel {
    n: usize,
    freeness: Vec<f64>,
}

impl TradeKernel {
    pub fn new(distances: &DistanceMatrix, params: &ModelParams) -> Self {
        let n = distances.n();
        let scale = (1.0 - params.sigma) * params.tau;
        let mut freeness = Vec::with_capacity(n * n);
        for j in 0..n {
            freeness.extend(distances.row(j).iter().map(|&d| (scale * d).exp()));
        }
        TradeKernel { n, freeness }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn row(&self, j: usize) -> &[f64] {
        &self.freeness[j * self.n..(j + 1) * self.n]
    }

    /// `S_j = sum_k F_jk x_k`, written into `out`.
    #[inline]
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.row(j).iter().zip(x).map(|(f, v)| f * v).sum();
        }
    }

    /// Sums `S_j = sum_k lambda_k W_k^{1-sigma} F_jk`; the price index is
    /// `T_j = S_j^{1/(1-sigma)}`.
    fn price_sums(&self, lambda: &[f64], wage: &[f64], sigma: f64, out: &mut [f64]) -> Result<()> {
        let weights: Vec<f64> = lambda
            .iter()
            .zip(wage)
            .map(|(&l, &w)| if l > 0.0 { l * w.powf(1.0 - sigma) } else { 0.0 })
            .collect();
        self.apply(&weights, out);
        if let Some(j) = out.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Degenerate(format!(
                "region {j} has no reachable manufacturing supply (price-index sum {})",
                out[j]
            )));
        }
        Ok(())
    }

    /// Right-hand side of the wage equation given incomes and price sums.
    /// Uses `T_k^{sigma-1} = 1 / S_k`.
    fn wage_map(&self, income: &[f64], price_sums: &[f64], sigma: f64, out: &mut [f64]) {
        let demand: Vec<f64> = income.iter().zip(price_sums).map(|(y, s)| y / s).collect();
        self.apply(&demand, out);
        let inv_sigma = 1.0 / sigma;
        for o in out.iter_mut() {
            *o = o.powf(inv_sigma);
        }
    }
}

fn check_finite(label: &str, xs: &[f64]) -> Result<()> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(j) => Err(Error::domain(format!("{label}[{j}] = {} is not finite", xs[j]))),
        None => Ok(()),
    }
}

fn check_len(label: &str, xs: &[f64], n: usize) -> Result<()> {
    if xs.len() != n {
        return Err(Error::domain(format!("{label} has length {}, expected {n}", xs.len())));
    }
    Ok(())
}

fn check_shares(label: &str, xs: &[f64]) -> Result<()> {
    check_finite(label, xs)?;
    if let Some(j) = xs.iter().position(|&x| x < 0.0) {
        return Err(Error::domain(format!("{label}[{j}] = {} is negative", xs[j])));
    }
    Ok(())
}

fn check_lambda(lambda: &[f64]) -> Result<()> {
    check_shares("lambda", lambda)?;
    if lambda.iter().all(|&l| l == 0.0) {
        return Err(Error::Degenerate("all manufacturing shares are zero".into()));
    }
    Ok(())
}

/// Manufacturing price index in every region.
pub fn price_index(lambda: &[f64], wage: &[f64], distances: &DistanceMatrix, params: &ModelParams) -> Result<Vec<f64>> {
    let n = distances.n();
    check_len("lambda", lambda, n)?;
    check_len("wage", wage, n)?;
    check_lambda(lambda)?;
    check_finite("wage", wage)?;
    if let Some(j) = (0..n).find(|&j| lambda[j] > 0.0 && wage[j] <= 0.0) {
        return Err(Error::domain(format!("wage[{j}] must be positive where lambda > 0")));
    }
    let kernel = TradeKernel::new(distances, params);
    let mut sums = vec![0.0; n];
    kernel.price_sums(lambda, wage, params.sigma, &mut sums)?;
    let exponent = 1.0 / (1.0 - params.sigma);
    Ok(sums.iter().map(|s| s.powf(exponent)).collect())
}

/// Regional income `Y_j = (1 - mu) phi_j + mu lambda_j W_j`.
pub fn income(lambda: &[f64], phi: &[f64], wage: &[f64], params: &ModelParams) -> Vec<f64> {
    let mu = params.mu;
    lambda
        .iter()
        .zip(phi)
        .zip(wage)
        .map(|((&l, &p), &w)| (1.0 - mu) * p + mu * l * w)
        .collect()
}

/// Nominal wage at which firms in each region break even, given incomes
/// and price indices.
pub fn nominal_wage(
    income: &[f64],
    price_index: &[f64],
    distances: &DistanceMatrix,
    params: &ModelParams,
) -> Result<Vec<f64>> {
    let n = distances.n();
    check_len("income", income, n)?;
    check_len("price_index", price_index, n)?;
    check_shares("income", income)?;
    if income.iter().all(|&y| y == 0.0) {
        return Err(Error::domain("all regional incomes are zero"));
    }
    check_finite("price_index", price_index)?;
    if let Some(j) = price_index.iter().position(|&t| t <= 0.0) {
        return Err(Error::domain(format!("price_index[{j}] must be positive")));
    }
    let kernel = TradeKernel::new(distances, params);
    let sums: Vec<f64> = price_index.iter().map(|t| t.powf(1.0 - params.sigma)).collect();
    let mut out = vec![0.0; n];
    kernel.wage_map(income, &sums, params.sigma, &mut out);
    Ok(out)
}

/// Real wage `omega_j = W_j T_j^{-mu}`.
pub fn real_wage(wage: &[f64], price_index: &[f64], params: &ModelParams) -> Vec<f64> {
    wage.iter()
        .zip(price_index)
        .map(|(w, t)| w * t.powf(-params.mu))
        .collect()
}

/// Worker-weighted mean real wage.
pub fn mean_real_wage(lambda: &[f64], omega: &[f64]) -> f64 {
    lambda.iter().zip(omega).map(|(l, w)| l * w).sum()
}

/// Profit-maximizing mill (F.O.B.) price `sigma / (sigma - 1) * beta * W_j`.
pub fn mill_price(wage: &[f64], params: &ModelParams) -> Vec<f64> {
    let markup = params.sigma / (params.sigma - 1.0) * params.beta;
    wage.iter().map(|w| markup * w).collect()
}

/// Zero-profit output per firm, `alpha (sigma - 1) / beta`.
pub fn equilibrium_output(params: &ModelParams) -> f64 {
    params.alpha * (params.sigma - 1.0) / params.beta
}

/// Rescales wage proxies to mean one, falling back to all-ones when the
/// proxies are unusable.
pub fn initial_wages(proxies: &[f64]) -> Vec<f64> {
    let n = proxies.len();
    let mean = proxies.iter().sum::<f64>() / n as f64;
    if n == 0 || !mean.is_finite() || mean <= 0.0 || proxies.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return vec![1.0; n];
    }
    proxies.iter().map(|w| w / mean).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Stop once the sup-norm of the damped wage update drops below this.
    pub tolerance: f64,
    /// Relaxation weight on the candidate wage, in (0, 1].
    pub damping: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-10,
            damping: 0.3,
            max_iterations: 50_000,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::domain(format!("wage tolerance must be positive, got {}", self.tolerance)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::domain(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.max_iterations == 0 {
            return Err(Error::domain("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// A solved short-run equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortRunState {
    pub wage: Vec<f64>,
    pub price_index: Vec<f64>,
    pub income: Vec<f64>,
    pub real_wage: Vec<f64>,
    pub mean_real_wage: f64,
    /// Sup-norm of the last damped wage update.
    pub residual: f64,
    pub iterations: usize,
}

/// Damped Picard solver bound to one geography and parameter set; reuse it
/// across migration steps to avoid recomputing the freeness matrix.
#[derive(Debug, Clone)]
pub struct ShortRunSolver {
    kernel: TradeKernel,
    params: ModelParams,
    options: SolverOptions,
}

impl ShortRunSolver {
    pub fn new(distances: &DistanceMatrix, params: ModelParams, options: SolverOptions) -> Result<Self> {
        params.validate()?;
        options.validate()?;
        Ok(ShortRunSolver {
            kernel: TradeKernel::new(distances, &params),
            params,
            options,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    /// Iterates `W <- (1 - d) W + d W~(W)` from `initial` (all-ones when
    /// `None`) until the damped update is below tolerance.
    pub fn solve(&self, lambda: &[f64], phi: &[f64], initial: Option<&[f64]>) -> Result<ShortRunState> {
        let n = self.kernel.n();
        check_len("lambda", lambda, n)?;
        check_len("phi", phi, n)?;
        check_lambda(lambda)?;
        check_shares("phi", phi)?;
        let mut wage = match initial {
            Some(w) => {
                check_len("initial wage", w, n)?;
                check_finite("initial wage", w)?;
                if w.iter().any(|&x| x <= 0.0) {
                    return Err(Error::domain("initial wages must be positive"));
                }
                w.to_vec()
            }
            None => vec![1.0; n],
        };

        let ModelParams { mu, sigma, .. } = self.params;
        let SolverOptions {
            tolerance,
            damping,
            max_iterations,
        } = self.options;
        let mut sums = vec![0.0; n];
        let mut candidate = vec![0.0; n];
        let mut income = vec![0.0; n];
        let mut residual = f64::INFINITY;

        for iteration in 0..max_iterations {
            for j in 0..n {
                income[j] = (1.0 - mu) * phi[j] + mu * lambda[j] * wage[j];
            }
            self.kernel.price_sums(lambda, &wage, sigma, &mut sums)?;
            self.kernel.wage_map(&income, &sums, sigma, &mut candidate);

            let gap = wage
                .iter()
                .zip(&candidate)
                .map(|(w, c)| (c - w).abs())
                .fold(0.0, f64::max);
            if !gap.is_finite() {
                return Err(Error::Convergence {
                    iterations: iteration,
                    residual: gap,
                    last_wages: wage,
                });
            }
            residual = damping * gap;
            // The current iterate is accepted when the next damped update
            // would be below tolerance; its own fixed-point residual is then
            // `gap`, which must also stay within 10x the tolerance.
            if residual < tolerance && gap < 10.0 * tolerance {
                return Ok(self.finish(lambda, wage, income, &sums, residual, iteration));
            }
            for (w, c) in wage.iter_mut().zip(&candidate) {
                *w = (1.0 - damping) * *w + damping * c;
            }
        }
        Err(Error::Convergence {
            iterations: max_iterations,
            residual,
            last_wages: wage,
        })
    }

    fn finish(&self, lambda: &[f64], wage: Vec<f64>, income: Vec<f64>, sums: &[f64], residual: f64, iterations: usize) -> ShortRunState {
        let exponent = 1.0 / (1.0 - self.params.sigma);
        let price_index: Vec<f64> = sums.iter().map(|s| s.powf(exponent)).collect();
        let omega = real_wage(&wage, &price_index, &self.params);
        ShortRunState {
            mean_real_wage: mean_real_wage(lambda, &omega),
            wage,
            price_index,
            income,
            real_wage: omega,
            residual,
            iterations,
        }
    }

}

/// Solves the short-run equilibrium for one allocation.
pub fn solve_short_run(
    lambda: &[f64],
    phi: &[f64],
    distances: &DistanceMatrix,
    params: &ModelParams,
    options: &SolverOptions,
    initial: Option<&[f64]>,
) -> Result<ShortRunState> {
    ShortRunSolver::new(distances, *params, *options)?.solve(lambda, phi, initial)
}

/// Componentwise residuals of re-substituting a state into the income,
/// price-index and wage equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResidual {
    pub income: f64,
    pub price_index: f64,
    pub wage: f64,
}

impl EquilibriumResidual {
    pub fn max(&self) -> f64 {
        self.income.max(self.price_index).max(self.wage)
    }
}

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn equilibrium_residual(
    state: &ShortRunState,
    lambda: &[f64],
    phi: &[f64],
    distances: &DistanceMatrix,
    params: &ModelParams,
) -> Result<EquilibriumResidual> {
    let y = income(lambda, phi, &state.wage, params);
    let t = price_index(lambda, &state.wage, distances, params)?;
    let w = nominal_wage(&state.income, &state.price_index, distances, params)?;
    Ok(EquilibriumResidual {
        income: sup_gap(&y, &state.income),
        price_index: sup_gap(&t, &state.price_index),
        wage: sup_gap(&w, &state.wage),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_region(d: f64) -> DistanceMatrix {
        DistanceMatrix::from_rows(vec![vec![0.0, d], vec![d, 0.0]]).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(0.3, 2.0, 0.01).validate().is_ok());
        assert!(ModelParams::new(1.0, 2.0, 0.01).validate().is_err());
        assert!(ModelParams::new(0.3, 1.0, 0.01).validate().is_err());
        assert!(ModelParams::new(0.3, 2.0, -0.1).validate().is_err());
        assert!(ModelParams::new(0.3, 2.0, 0.1).with_rho(-1.0).validate().is_err());
        let p = ModelParams::new(0.3, 5.0, 0.1);
        assert_eq!(p.beta, 0.8);
    }

    #[test]
    fn price_index_examples() {
        let p = ModelParams::new(0.3, 2.0, 0.01);
        let d1 = DistanceMatrix::zeros(1);
        assert_eq!(price_index(&[1.0], &[1.7], &d1, &p).unwrap(), vec![1.7]);

        let free = ModelParams::new(0.3, 5.0, 0.0);
        let t = price_index(&[0.2, 0.3, 0.5], &[1.0; 3], &DistanceMatrix::zeros(3), &free).unwrap();
        for x in t {
            assert!((x - 1.0).abs() < 1e-15);
        }

        let t = price_index(&[0.5, 0.5], &[1.0, 1.0], &two_region(100.0), &p).unwrap();
        // (0.5 + 0.5 e^-1)^-1 evaluated by hand.
        assert!((t[0] - 1.462117157).abs() < 1e-8);
        assert_eq!(t[0], t[1]);
    }

    #[test]
    fn price_index_errors() {
        let p = ModelParams::new(0.3, 2.0, 0.01);
        let d = two_region(10.0);
        assert!(matches!(price_index(&[0.0, 0.0], &[1.0, 1.0], &d, &p), Err(Error::Degenerate(_))));
        assert!(matches!(price_index(&[0.5, 0.5], &[f64::NAN, 1.0], &d, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn price_index_is_degree_one_in_wages() {
        let p = ModelParams::new(0.4, 3.0, 0.05);
        let d = two_region(7.0);
        let t = price_index(&[0.3, 0.7], &[1.1, 0.9], &d, &p).unwrap();
        let t2 = price_index(&[0.3, 0.7], &[2.2, 1.8], &d, &p).unwrap();
        for (a, b) in t.iter().zip(&t2) {
            assert!((2.0 * a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn income_examples() {
        let y = income(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0], &ModelParams::new(0.3, 2.0, 0.0));
        assert!((y[0] - 0.3).abs() < 1e-15 && (y[1] - 0.7).abs() < 1e-15);
        let y = income(&[0.5, 0.5], &[0.5, 0.5], &[1.0, 1.0], &ModelParams::new(0.5, 2.0, 0.0));
        assert_eq!(y, vec![0.5, 0.5]);
        let y = income(&[0.8, 0.2], &[0.5, 0.5], &[1.2, 0.9], &ModelParams::new(0.3, 2.0, 0.0));
        assert!((y[0] - 0.638).abs() < 1e-3 && (y[1] - 0.404).abs() < 1e-3);
    }

    #[test]
    fn nominal_wage_examples() {
        let p = ModelParams::new(0.3, 2.0, 0.01);
        assert_eq!(nominal_wage(&[1.0], &[1.0], &DistanceMatrix::zeros(1), &p).unwrap(), vec![1.0]);
        let free = ModelParams::new(0.3, 2.0, 0.0);
        let w = nominal_wage(&[0.5, 0.5], &[1.0, 1.0], &DistanceMatrix::zeros(2), &free).unwrap();
        assert_eq!(w, vec![1.0, 1.0]);
        let w = nominal_wage(&[0.7, 0.3], &[1.0, 1.0], &two_region(100.0), &p).unwrap();
        // (0.7 + 0.3 e^-1)^(1/2) evaluated by hand.
        assert!((w[0] - 0.900202).abs() < 1e-4, "{}", w[0]);
        assert!(nominal_wage(&[0.0, 0.0], &[1.0, 1.0], &two_region(1.0), &p).is_err());
        assert!(nominal_wage(&[f64::INFINITY, 0.0], &[1.0, 1.0], &two_region(1.0), &p).is_err());
    }

    #[test]
    fn real_wage_examples() {
        let p = ModelParams::new(0.5, 2.0, 0.0);
        assert_eq!(real_wage(&[1.0, 1.0], &[1.0, 1.0], &p), vec![1.0, 1.0]);
        assert_eq!(real_wage(&[2.0], &[4.0], &p), vec![1.0]);
        let tiny = ModelParams { mu: 0.0, ..p };
        assert_eq!(real_wage(&[1.3, 0.7], &[2.0, 9.0], &tiny), vec![1.3, 0.7]);
    }

    #[test]
    fn mean_real_wage_examples() {
        assert_eq!(mean_real_wage(&[0.5, 0.5], &[1.0, 3.0]), 2.0);
        assert_eq!(mean_real_wage(&[1.0, 0.0], &[1.25, 7.0]), 1.25);
        assert!((mean_real_wage(&[0.2, 0.3, 0.5], &[1.0, 2.0, 4.0]) - 2.8).abs() < 1e-15);
    }

    #[test]
    fn technology_examples() {
        let mut p = ModelParams::new(0.3, 2.0, 0.0);
        assert_eq!(mill_price(&[1.0], &p), vec![1.0]);
        p.beta = 1.0;
        assert_eq!(mill_price(&[1.0], &p), vec![2.0]);
        let p5 = ModelParams::new(0.3, 5.0, 0.0);
        assert!((mill_price(&[2.0], &p5)[0] - 2.0).abs() < 1e-15);

        assert_eq!(equilibrium_output(&ModelParams::new(0.3, 2.0, 0.0)), 2.0);
        assert!((equilibrium_output(&p5) - 5.0).abs() < 1e-12);
        let p = ModelParams {
            alpha: 2.0,
            beta: 1.0,
            ..ModelParams::new(0.3, 3.0, 0.0)
        };
        assert_eq!(equilibrium_output(&p), 4.0);
    }

    #[test]
    fn symmetric_two_region_solution() {
        for (mu, sigma, tau) in [(0.3, 2.0, 0.01), (0.5, 5.0, 0.1), (0.1, 5.0, 0.05)] {
            let p = ModelParams::new(mu, sigma, tau);
            let s = solve_short_run(&[0.5, 0.5], &[0.5, 0.5], &two_region(37.0), &p, &SolverOptions::default(), None)
                .unwrap();
            assert_eq!(s.wage[0], s.wage[1]);
            assert_eq!(s.price_index[0], s.price_index[1]);
            assert_eq!(s.real_wage[0], s.real_wage[1]);
            assert!(s.residual < 1e-10);
        }
    }

    #[test]
    fn zero_transport_cost_equalizes_real_wages() {
        let p = ModelParams::new(0.3, 2.0, 0.0);
        let d = DistanceMatrix::from_rows(vec![vec![0.0, 3.0, 9.0], vec![3.0, 0.0, 4.0], vec![9.0, 4.0, 0.0]]).unwrap();
        let s = solve_short_run(&[0.6, 0.3, 0.1], &[0.2, 0.2, 0.6], &d, &p, &SolverOptions::default(), None).unwrap();
        let spread = s.real_wage.iter().fold(f64::MIN, |a, &b| a.max(b)) - s.real_wage.iter().fold(f64::MAX, |a, &b| a.min(b));
        assert!(spread < 1e-10, "{spread}");
    }

    #[test]
    fn state_identities_hold_exactly() {
        let p = ModelParams::new(0.4, 4.0, 0.03);
        let d = DistanceMatrix::from_rows(vec![vec![0.0, 10.0, 25.0], vec![10.0, 0.0, 18.0], vec![25.0, 18.0, 0.0]]).unwrap();
        let lambda = [0.5, 0.0, 0.5];
        let s = solve_short_run(&lambda, &[0.3, 0.4, 0.3], &d, &p, &SolverOptions::default(), None).unwrap();
        assert_eq!(s.real_wage, real_wage(&s.wage, &s.price_index, &p));
        assert_eq!(s.mean_real_wage, mean_real_wage(&lambda, &s.real_wage));
        // Empty regions still get positive wages and price indices.
        assert!(s.wage[1] > 0.0 && s.price_index[1] > 0.0);
        let r = equilibrium_residual(&s, &lambda, &[0.3, 0.4, 0.3], &d, &p).unwrap();
        assert!(r.max() < 1e-9, "{r:?}");
    }

    #[test]
    fn non_convergence_reports_last_iterate() {
        let p = ModelParams::new(0.3, 2.0, 0.05);
        let opts = SolverOptions {
            max_iterations: 2,
            ..Default::default()
        };
        match solve_short_run(&[0.9, 0.1], &[0.5, 0.5], &two_region(20.0), &p, &opts, None) {
            Err(e @ Error::Convergence { .. }) => {
                assert_eq!(e.exit_code(), 2);
                if let Error::Convergence { last_wages, iterations, .. } = e {
                    assert_eq!(last_wages.len(), 2);
                    assert_eq!(iterations, 2);
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn degenerate_economy_is_rejected() {
        let p = ModelParams::new(0.3, 2.0, 0.05);
        let r = solve_short_run(&[0.0, 0.0], &[0.5, 0.5], &two_region(20.0), &p, &SolverOptions::default(), None);
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn initial_wage_rescaling() {
        assert_eq!(initial_wages(&[2.0, 4.0, 6.0]), vec![0.5, 1.0, 1.5]);
        assert_eq!(initial_wages(&[0.0, 1.0]), vec![1.0, 1.0]);
    }
}
