//! Scenario execution: single runs, the 12-cell (mu, sigma, tau) grid and
//! seeded Monte-Carlo racetrack batches.

mod export;
mod figures;

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geodata::{load_regions, racetrack, Geography, LoadOptions};
use crate::longrun::{integrate_from, IntegratorOptions, TerminalReason, Trajectory};
use crate::metrics::{count_agglomerations, gini, ClassifierOptions, ConcentrationReport};
use crate::shortrun::{initial_wages, ModelParams};

pub use export::{export_racetrack, export_results, write_summary, write_trajectory_csv};
pub use figures::render_figures;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Seeded multiplicative log-normal noise on the initial shares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Perturbation {
    pub seed: u64,
    /// Standard deviation of the log-normal factor; 0 leaves shares untouched.
    pub magnitude: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation {
            seed: 42,
            magnitude: 0.01,
        }
    }
}

impl Perturbation {
    /// `lambda_j * exp(magnitude * z_j)`, renormalized, with `z_j` standard
    /// normal draws from a ChaCha8 stream seeded by `seed`.
    pub fn apply(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        if !(self.magnitude >= 0.0 && self.magnitude.is_finite()) {
            return Err(Error::domain(format!(
                "perturbation magnitude must be non-negative, got {}",
                self.magnitude
            )));
        }
        if self.magnitude == 0.0 {
            return Ok(lambda.to_vec());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out: Vec<f64> = lambda
            .iter()
            .map(|&l| {
                let z: f64 = StandardNormal.sample(&mut rng);
                l * (self.magnitude * z).exp()
            })
            .collect();
        let total: f64 = out.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::Degenerate("perturbed shares sum to zero".into()));
        }
        out.iter_mut().for_each(|x| *x /= total);
        Ok(out)
    }
}

/// One cell of a scenario grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub mu: f64,
    pub sigma: f64,
    pub tau: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub integrator: IntegratorOptions,
    #[serde(default)]
    pub perturbation: Perturbation,
    #[serde(default)]
    pub classifier: ClassifierOptions,
    /// Region CSV to use instead of the grid-wide geography.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geography: Option<PathBuf>,
}

fn default_rho() -> f64 {
    1.0
}

impl Scenario {
    pub fn new(name: impl Into<String>, mu: f64, sigma: f64, tau: f64) -> Self {
        Scenario {
            name: name.into(),
            mu,
            sigma,
            tau,
            rho: default_rho(),
            integrator: IntegratorOptions::default(),
            perturbation: Perturbation::default(),
            classifier: ClassifierOptions::default(),
            geography: None,
        }
    }

    pub fn params(&self) -> ModelParams {
        ModelParams::new(self.mu, self.sigma, self.tau).with_rho(self.rho)
    }
}

/// The twelve scenarios: block A at tau = 0.01, block B at tau = 0.1, each
/// sweeping (mu, sigma) in the same order.
pub fn builtin_grid() -> Vec<Scenario> {
    const CELLS: [(f64, f64); 6] = [(0.3, 2.0), (0.3, 5.0), (0.5, 5.0), (0.5, 2.0), (0.1, 2.0), (0.1, 5.0)];
    [("A", 0.01), ("B", 0.1)]
        .iter()
        .flat_map(|&(block, tau)| {
            CELLS
                .iter()
                .enumerate()
                .map(move |(i, &(mu, sigma))| Scenario::new(format!("{block}.{}", i + 1), mu, sigma, tau))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 over the geography (ids, coordinates, shares, distances).
    pub input_digest: String,
    pub seed: u64,
    pub perturbation: f64,
    pub params: ModelParams,
    pub integrator: IntegratorOptions,
    pub classifier: ClassifierOptions,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: String,
    pub region_ids: Vec<String>,
    pub initial_lambda: Vec<f64>,
    pub terminal_lambda: Vec<f64>,
    pub initial_gini: f64,
    pub terminal_gini: f64,
    pub report: ConcentrationReport,
    pub terminal_reason: TerminalReason,
    pub steps: usize,
    pub solver_iterations: usize,
    pub final_time: f64,
    pub final_max_rate: f64,
    pub provenance: Provenance,
}

/// A scenario result together with its stored trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub result: ScenarioResult,
    pub trajectory: Trajectory,
}

pub fn geography_digest(geo: &Geography) -> String {
    let mut h = Sha256::new();
    for r in geo.regions() {
        h.update(r.id.as_bytes());
        h.update([0]);
        for v in [r.latitude, r.longitude, r.lambda0, r.phi, r.w0] {
            h.update(v.to_le_bytes());
        }
    }
    let n = geo.len();
    for j in 0..n {
        for v in geo.distances().row(j) {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Perturbs the initial shares, integrates to a long-run equilibrium and
/// measures concentration before and after.
pub fn run_scenario(scenario: &Scenario, geo: &Geography) -> Result<ScenarioRun> {
    let tag = |e: Error| Error::Scenario {
        name: scenario.name.clone(),
        source: Box::new(e),
    };
    let params = scenario.params();
    params.validate().map_err(tag)?;
    let initial = scenario.perturbation.apply(&geo.lambda0()).map_err(tag)?;
    let w0 = initial_wages(&geo.w0());
    let trajectory = integrate_from(&initial, &geo.phi(), geo.distances(), &params, &scenario.integrator, Some(&w0))
        .map_err(tag)?;
    let terminal = trajectory.final_lambda().to_vec();
    let report = count_agglomerations(&terminal, geo, &scenario.classifier).map_err(tag)?;
    let result = ScenarioResult {
        scenario: scenario.name.clone(),
        region_ids: geo.ids().iter().map(|id| id.to_string()).collect(),
        initial_gini: gini(&initial).map_err(tag)?,
        terminal_gini: report.gini,
        initial_lambda: initial,
        terminal_lambda: terminal,
        report,
        terminal_reason: trajectory.terminal_reason,
        steps: trajectory.steps,
        solver_iterations: trajectory.solver_iterations,
        final_time: trajectory.final_time(),
        final_max_rate: trajectory.final_max_rate,
        provenance: Provenance {
            input_digest: geography_digest(geo),
            seed: scenario.perturbation.seed,
            perturbation: scenario.perturbation.magnitude,
            params,
            integrator: scenario.integrator,
            classifier: scenario.classifier,
            version: VERSION.to_string(),
        },
    };
    Ok(ScenarioRun { result, trajectory })
}

/// Outcome of one grid cell; failures are kept in place.
#[derive(Debug)]
pub enum ScenarioOutcome {
    Completed(Box<ScenarioRun>),
    Failed { name: String, error: Error },
}

impl ScenarioOutcome {
    pub fn name(&self) -> &str {
        match self {
            ScenarioOutcome::Completed(run) => &run.result.scenario,
            ScenarioOutcome::Failed { name, .. } => name,
        }
    }

    pub fn run(&self) -> Option<&ScenarioRun> {
        match self {
            ScenarioOutcome::Completed(run) => Some(run),
            ScenarioOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GiniRow {
    pub scenario: String,
    pub mu: f64,
    pub sigma: f64,
    pub tau: f64,
    pub initial_gini: Option<f64>,
    pub terminal_gini: Option<f64>,
    /// `solver_failure` for short-run convergence failures, `None` for
    /// any other failure.
    pub terminal_reason: Option<TerminalReason>,
}

#[derive(Debug)]
pub struct GridReport {
    pub scenarios: Vec<Scenario>,
    pub outcomes: Vec<ScenarioOutcome>,
}

impl GridReport {
    pub fn gini_table(&self) -> Vec<GiniRow> {
        self.scenarios
            .iter()
            .zip(&self.outcomes)
            .map(|(s, o)| {
                let r = o.run().map(|run| &run.result);
                let reason = match o {
                    ScenarioOutcome::Completed(run) => Some(run.result.terminal_reason),
                    ScenarioOutcome::Failed { error, .. } if error.exit_code() == 2 => Some(TerminalReason::SolverFailure),
                    ScenarioOutcome::Failed { .. } => None,
                };
                GiniRow {
                    scenario: s.name.clone(),
                    mu: s.mu,
                    sigma: s.sigma,
                    tau: s.tau,
                    initial_gini: r.map(|r| r.initial_gini),
                    terminal_gini: r.map(|r| r.terminal_gini),
                    terminal_reason: reason,
                }
            })
            .collect()
    }

    pub fn results(&self) -> impl Iterator<Item = &ScenarioResult> {
        self.outcomes.iter().filter_map(|o| o.run().map(|r| &r.result))
    }

    pub fn result(&self, name: &str) -> Option<&ScenarioResult> {
        self.results().find(|r| r.scenario == name)
    }

    /// Exit code of the first failed scenario, or 0.
    pub fn exit_code(&self) -> i32 {
        self.outcomes
            .iter()
            .find_map(|o| match o {
                ScenarioOutcome::Failed { error, .. } => Some(error.exit_code()),
                ScenarioOutcome::Completed(_) => None,
            })
            .unwrap_or(0)
    }

    /// Plain-text scenario x {initial G, terminal G} table.
    pub fn render_table(&self) -> String {
        let mut out = String::from("scenario    mu  sigma    tau  initial_G  terminal_G  reason\n");
        let fmt = |g: Option<f64>| g.map_or_else(|| "-".to_string(), |g| format!("{g:.4}"));
        let reason = |r: Option<TerminalReason>| match r {
            Some(TerminalReason::Converged) => "converged",
            Some(TerminalReason::MaxTime) => "max_time",
            Some(TerminalReason::SolverFailure) => "solver_failure",
            None => "failed",
        };
        for row in self.gini_table() {
            out.push_str(&format!(
                "{:<8} {:>5} {:>6} {:>6} {:>10} {:>11}  {}\n",
                row.scenario,
                row.mu,
                row.sigma,
                row.tau,
                fmt(row.initial_gini),
                fmt(row.terminal_gini),
                reason(row.terminal_reason)
            ));
        }
        out
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Runs every scenario (up to `workers` at a time) and returns outcomes in
/// scenario order.
pub fn run_grid(scenarios: &[Scenario], geo: &Geography, workers: usize) -> Result<GridReport> {
    if scenarios.is_empty() {
        return Err(Error::domain("scenario list is empty"));
    }
    let mut names = HashSet::new();
    for s in scenarios {
        if !names.insert(s.name.as_str()) {
            return Err(Error::domain(format!("duplicate scenario name `{}`", s.name)));
        }
    }
    let outcomes = pool(workers)?.install(|| {
        scenarios
            .par_iter()
            .map(|s| {
                let run = match &s.geography {
                    Some(path) => load_regions(path, &LoadOptions::default()).and_then(|own| run_scenario(s, &own)),
                    None => run_scenario(s, geo),
                };
                match run {
                    Ok(run) => ScenarioOutcome::Completed(Box::new(run)),
                    Err(error) => ScenarioOutcome::Failed {
                        name: s.name.clone(),
                        error,
                    },
                }
            })
            .collect()
    });
    Ok(GridReport {
        scenarios: scenarios.to_vec(),
        outcomes,
    })
}

/// Classification of one racetrack run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RacetrackOutcome {
    pub seed: u64,
    pub agglomerations: usize,
    pub min_separation: Option<usize>,
    pub separations: Vec<usize>,
    pub equidistant: bool,
    pub terminal_reason: TerminalReason,
    pub terminal_gini: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub agglomerations: usize,
    pub min_separation: Option<usize>,
    pub count: usize,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RacetrackFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RacetrackBatch {
    pub n: usize,
    pub spacing: f64,
    pub params: ModelParams,
    pub magnitude: f64,
    pub outcomes: Vec<RacetrackOutcome>,
    pub failures: Vec<RacetrackFailure>,
    /// Frequencies over completed runs, keyed by (count, min separation).
    pub histogram: Vec<HistogramRow>,
}

impl RacetrackBatch {
    /// Fraction of completed runs matching `pred`.
    pub fn fraction(&self, pred: impl Fn(&RacetrackOutcome) -> bool) -> f64 {
        if self.outcomes.is_empty() {
            return 0.0;
        }
        self.outcomes.iter().filter(|o| pred(o)).count() as f64 / self.outcomes.len() as f64
    }

    pub fn modal(&self) -> Option<&HistogramRow> {
        self.histogram.iter().max_by(|a, b| a.count.cmp(&b.count).then(b.agglomerations.cmp(&a.agglomerations)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchOptions {
    pub spacing: f64,
    pub magnitude: f64,
    pub integrator: IntegratorOptions,
    pub classifier: ClassifierOptions,
    pub workers: usize,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            spacing: 1.0,
            magnitude: 0.01,
            integrator: IntegratorOptions {
                stride: usize::MAX,
                ..IntegratorOptions::default()
            },
            classifier: ClassifierOptions::default(),
            workers: 1,
        }
    }
}

/// Integrates perturbed uniform racetracks, one per seed, and tabulates the
/// number and spacing of the resulting agglomerations.
pub fn run_racetrack_batch(n: usize, params: &ModelParams, seeds: &[u64], options: &BatchOptions) -> Result<RacetrackBatch> {
    if seeds.is_empty() {
        return Err(Error::domain("racetrack batch needs at least one seed"));
    }
    params.validate()?;
    let geo = racetrack(n, options.spacing)?;
    let lambda0 = geo.lambda0();
    let phi = geo.phi();

    let runs: Vec<std::result::Result<RacetrackOutcome, RacetrackFailure>> = pool(options.workers)?.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let fail = |e: Error| RacetrackFailure {
                    seed,
                    error: e.to_string(),
                };
                let start = Perturbation {
                    seed,
                    magnitude: options.magnitude,
                }
                .apply(&lambda0)
                .map_err(fail)?;
                let traj = integrate_from(&start, &phi, geo.distances(), params, &options.integrator, None).map_err(fail)?;
                let report = count_agglomerations(traj.final_lambda(), &geo, &options.classifier).map_err(fail)?;
                Ok(RacetrackOutcome {
                    seed,
                    agglomerations: report.agglomeration_count,
                    min_separation: report.min_separation,
                    equidistant: report.is_equidistant(),
                    separations: report.separations,
                    terminal_reason: traj.terminal_reason,
                    terminal_gini: report.gini,
                })
            })
            .collect()
    });

    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for r in runs {
        match r {
            Ok(o) => outcomes.push(o),
            Err(f) => failures.push(f),
        }
    }
    let mut counts: BTreeMap<(usize, Option<usize>), usize> = BTreeMap::new();
    for o in &outcomes {
        *counts.entry((o.agglomerations, o.min_separation)).or_default() += 1;
    }
    let total = outcomes.len().max(1) as f64;
    let histogram = counts
        .into_iter()
        .map(|((agglomerations, min_separation), count)| HistogramRow {
            agglomerations,
            min_separation,
            count,
            frequency: count as f64 / total,
        })
        .collect();
    Ok(RacetrackBatch {
        n,
        spacing: options.spacing,
        params: *params,
        magnitude: options.magnitude,
        outcomes,
        failures,
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_grid_matches_table() {
        let grid = builtin_grid();
        assert_eq!(grid.len(), 12);
        let cells: Vec<(String, f64, f64, f64)> = grid.iter().map(|s| (s.name.clone(), s.mu, s.sigma, s.tau)).collect();
        let expected = [
            ("A.1", 0.3, 2.0, 0.01),
            ("A.2", 0.3, 5.0, 0.01),
            ("A.3", 0.5, 5.0, 0.01),
            ("A.4", 0.5, 2.0, 0.01),
            ("A.5", 0.1, 2.0, 0.01),
            ("A.6", 0.1, 5.0, 0.01),
            ("B.1", 0.3, 2.0, 0.1),
            ("B.2", 0.3, 5.0, 0.1),
            ("B.3", 0.5, 5.0, 0.1),
            ("B.4", 0.5, 2.0, 0.1),
            ("B.5", 0.1, 2.0, 0.1),
            ("B.6", 0.1, 5.0, 0.1),
        ];
        for (got, want) in cells.iter().zip(expected) {
            assert_eq!((got.0.as_str(), got.1, got.2, got.3), want);
        }
        let names: HashSet<_> = grid.iter().map(|s| s.name.clone()).collect();
        assert_eq!(names.len(), 12);
    }

    #[test]
    fn zero_perturbation_is_identity() {
        let l = vec![0.2, 0.3, 0.5];
        let p = Perturbation { seed: 9, magnitude: 0.0 };
        assert_eq!(p.apply(&l).unwrap(), l);
    }

    #[test]
    fn perturbation_is_seeded() {
        let l = vec![0.25; 4];
        let a = Perturbation { seed: 3, magnitude: 0.1 }.apply(&l).unwrap();
        let b = Perturbation { seed: 3, magnitude: 0.1 }.apply(&l).unwrap();
        let c = Perturbation { seed: 4, magnitude: 0.1 }.apply(&l).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(Perturbation { seed: 0, magnitude: -1.0 }.apply(&l).is_err());
    }

    #[test]
    fn empty_grid_is_rejected() {
        let geo = racetrack(2, 1.0).unwrap();
        assert!(matches!(run_grid(&[], &geo, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn failures_are_isolated() {
        let geo = racetrack(2, 100.0).unwrap();
        let mut bad = Scenario::new("bad", 0.3, 2.0, 0.01);
        bad.perturbation.magnitude = 0.05;
        bad.integrator.solver.max_iterations = 1;
        let mut good = Scenario::new("good", 0.3, 2.0, 0.01);
        good.perturbation.magnitude = 0.0;
        let report = run_grid(&[bad, good], &geo, 2).unwrap();
        assert!(matches!(report.outcomes[0], ScenarioOutcome::Failed { .. }));
        assert!(report.outcomes[1].run().is_some());
        assert_eq!(report.exit_code(), 2);
        assert!(report.render_table().contains("solver_failure"));
    }

    #[test]
    fn symmetric_scenario_stays_uniform() {
        let geo = racetrack(2, 100.0).unwrap();
        let mut s = Scenario::new("sym", 0.3, 2.0, 0.1);
        s.perturbation.magnitude = 0.0;
        let run = run_scenario(&s, &geo).unwrap();
        assert_eq!(run.result.initial_gini, 0.0);
        assert_eq!(run.result.terminal_gini, 0.0);
    }

    #[test]
    fn unperturbed_racetrack_stays_put() {
        let p = ModelParams::new(0.3, 2.0, 0.1);
        let opts = BatchOptions {
            spacing: 10.0,
            magnitude: 0.0,
            ..Default::default()
        };
        let batch = run_racetrack_batch(6, &p, &[1, 2, 3], &opts).unwrap();
        assert_eq!(batch.outcomes.len(), 3);
        assert!(batch.outcomes.iter().all(|o| o.agglomerations == 0));
        assert_eq!(batch.histogram.len(), 1);
        assert_eq!(batch.histogram[0].frequency, 1.0);
    }
}
