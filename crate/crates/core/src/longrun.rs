//! Worker migration toward above-average real wages, integrated with
//! explicit Euler steps on the share simplex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodata::{DistanceMatrix, Geography};
use crate::shortrun::{initial_wages, ModelParams, ShortRunSolver, ShortRunState, SolverOptions};

/// `d lambda_j / dt = rho lambda_j (omega_j - omega_bar)`.
pub fn migration_rate(lambda: &[f64], omega: &[f64], omega_bar: f64, rho: f64) -> Vec<f64> {
    lambda
        .iter()
        .zip(omega)
        .map(|(&l, &w)| rho * l * (w - omega_bar))
        .collect()
}

/// Plain Euler update `lambda + dt * rates`, with no projection.
pub fn euler_update(lambda: &[f64], rates: &[f64], dt: f64) -> Vec<f64> {
    lambda.iter().zip(rates).map(|(l, r)| l + dt * r).collect()
}

/// One Euler step followed by clamping at zero and renormalization onto
/// the simplex. Exact replicator flow never leaves the simplex; the
/// projection only guards against discretization overshoot.
pub fn step(lambda: &[f64], rates: &[f64], dt: f64) -> Result<Vec<f64>> {
    Ok(step_with_clamp(lambda, rates, dt)?.0)
}

/// As [`step`], also reporting whether any entry was clamped.
pub fn step_with_clamp(lambda: &[f64], rates: &[f64], dt: f64) -> Result<(Vec<f64>, bool)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::domain(format!("dt must be positive, got {dt}")));
    }
    let mut next = euler_update(lambda, rates, dt);
    let mut clamped = false;
    for x in next.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
            clamped = true;
        }
    }
    let total: f64 = next.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Degenerate(format!("Euler step with dt = {dt} emptied every region")));
    }
    for x in next.iter_mut() {
        *x /= total;
    }
    Ok((next, clamped))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorOptions {
    pub dt: f64,
    pub t_max: f64,
    /// Stationarity threshold on the sup-norm of the migration rate.
    pub tolerance: f64,
    /// Store every `stride`-th state (the first and last are always kept).
    pub stride: usize,
    /// Keep full short-run states alongside stored shares.
    pub keep_short_run: bool,
    /// How many times dt may be halved after a degenerate step.
    pub max_halvings: u32,
    pub solver: SolverOptions,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            dt: 0.01,
            t_max: 1000.0,
            tolerance: 1e-8,
            stride: 100,
            keep_short_run: false,
            max_halvings: 10,
            solver: SolverOptions::default(),
        }
    }
}

impl IntegratorOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::domain(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::domain(format!("t_max must be positive, got {}", self.t_max)));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::domain(format!("lambda tolerance must be positive, got {}", self.tolerance)));
        }
        if self.stride == 0 {
            return Err(Error::domain("trajectory stride must be at least 1"));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    Converged,
    MaxTime,
    SolverFailure,
}

/// Compact per-time short-run diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortRunSummary {
    pub mean_real_wage: f64,
    pub max_rate: f64,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<ShortRunState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub short_run: Vec<ShortRunSummary>,
    pub terminal_reason: TerminalReason,
    /// Euler steps taken.
    pub steps: usize,
    /// Total short-run fixed-point iterations over the run.
    pub solver_iterations: usize,
    pub clamp_events: usize,
    /// Step size in force at the end (smaller than requested after halvings).
    pub final_dt: f64,
    /// Sup-norm of the migration rate at the terminal state.
    pub final_max_rate: f64,
    pub final_state: ShortRunState,
}

impl Trajectory {
    pub fn final_lambda(&self) -> &[f64] {
        self.states.last().expect("trajectory always stores its initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory always stores its initial time")
    }

    /// Worst violation of the rest-point condition
    /// `lambda_j |omega_j - omega_bar| < tolerance / rho` at the final state.
    pub fn rest_point_gap(&self) -> f64 {
        let s = &self.final_state;
        self.final_lambda()
            .iter()
            .zip(&s.real_wage)
            .map(|(l, w)| l * (w - s.mean_real_wage).abs())
            .fold(0.0, f64::max)
    }
}

struct Recorder {
    keep_short_run: bool,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    short_run: Vec<ShortRunSummary>,
}

impl Recorder {
    fn new(keep_short_run: bool) -> Self {
        Recorder {
            keep_short_run,
            times: Vec::new(),
            states: Vec::new(),
            short_run: Vec::new(),
        }
    }

    fn push(&mut self, t: f64, lambda: &[f64], state: &ShortRunState, max_rate: f64) {
        self.times.push(t);
        self.states.push(lambda.to_vec());
        self.short_run.push(ShortRunSummary {
            mean_real_wage: state.mean_real_wage,
            max_rate,
            iterations: state.iterations,
            state: self.keep_short_run.then(|| state.clone()),
        });
    }
}

fn sup_norm(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Integrates migration from the geography's initial shares.
pub fn integrate_to_equilibrium(geo: &Geography, params: &ModelParams, options: &IntegratorOptions) -> Result<Trajectory> {
    let w0 = initial_wages(&geo.w0());
    integrate_from(&geo.lambda0(), &geo.phi(), geo.distances(), params, options, Some(&w0))
}

/// Alternates short-run solves and Euler steps from `lambda0` until the
/// migration rate vanishes or `t_max` is reached.
pub fn integrate_from(
    lambda0: &[f64],
    phi: &[f64],
    distances: &DistanceMatrix,
    params: &ModelParams,
    options: &IntegratorOptions,
    initial_wage: Option<&[f64]>,
) -> Result<Trajectory> {
    options.validate()?;
    let solver = ShortRunSolver::new(distances, *params, options.solver)?;
    let rho = params.rho;

    let mut lambda = lambda0.to_vec();
    let mut t = 0.0;
    let mut dt = options.dt;
    let mut halvings = 0;
    let mut steps = 0usize;
    let mut solver_iterations = 0usize;
    let mut clamp_events = 0usize;
    let mut wage_guess: Option<Vec<f64>> = initial_wage.map(<[f64]>::to_vec);

    let mut rec = Recorder::new(options.keep_short_run);

    loop {
        let state = solver
            .solve(&lambda, phi, wage_guess.as_deref())
            .map_err(|e| Error::Integration { time: t, source: Box::new(e) })?;
        solver_iterations += state.iterations;
        let rates = migration_rate(&lambda, &state.real_wage, state.mean_real_wage, rho);
        let max_rate = sup_norm(&rates);

        let converged = max_rate < options.tolerance;
        let timed_out = t >= options.t_max;
        if converged || timed_out {
            // Always keep the terminal point; avoid duplicating a strided one.
            if rec.times.last() != Some(&t) {
                rec.push(t, &lambda, &state, max_rate);
            }
            return Ok(Trajectory {
                times: rec.times,
                states: rec.states,
                short_run: rec.short_run,
                terminal_reason: if converged { TerminalReason::Converged } else { TerminalReason::MaxTime },
                steps,
                solver_iterations,
                clamp_events,
                final_dt: dt,
                final_max_rate: max_rate,
                final_state: state,
            });
        }
        if steps.is_multiple_of(options.stride) {
            rec.push(t, &lambda, &state, max_rate);
        }

        let (next, clamped) = loop {
            match step_with_clamp(&lambda, &rates, dt) {
                Ok(ok) => break ok,
                Err(Error::Degenerate(_)) if halvings < options.max_halvings => {
                    dt *= 0.5;
                    halvings += 1;
                }
                Err(e) => return Err(e),
            }
        };
        clamp_events += usize::from(clamped);
        lambda = next;
        wage_guess = Some(state.wage);
        steps += 1;
        t += dt;
    }
}
