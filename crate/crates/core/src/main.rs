use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use negsim::geodata::{load_regions, LoadOptions};
use negsim::longrun::IntegratorOptions;
use negsim::metrics::gini;
use negsim::runner::{
    builtin_grid, export_racetrack, export_results, render_figures, run_grid, run_racetrack_batch, BatchOptions,
    Perturbation, Scenario,
};
use negsim::shortrun::SolverOptions;
use negsim::{Error, ModelParams, Result};

/// Core-periphery simulator: short-run wage equilibria, long-run migration
/// and spatial concentration metrics.
#[derive(Debug, Parser)]
#[command(name = "negsim", version, about)]
struct Cli {
    /// TOML file supplying defaults for any flag; flags given on the command
    /// line win. Keys are flag names with `_` for `-`, either at top level
    /// or under a `[<subcommand>]` table.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one scenario on a region dataset.
    Simulate(SimulateArgs),
    /// Run a scenario grid (the builtin 12 cells or a TOML list).
    Grid(GridArgs),
    /// Monte-Carlo batch on a uniform racetrack economy.
    Racetrack(RacetrackArgs),
    /// Print the Gini index of a share vector.
    Gini(GiniArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateArgs {
    /// Region CSV (`id,name,latitude,longitude,lambda0,phi,w0`).
    #[arg(long)]
    regions: Option<PathBuf>,
    /// Precomputed distance matrix CSV overriding haversine distances.
    #[arg(long)]
    distances: Option<PathBuf>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    tol_wage: Option<f64>,
    #[arg(long)]
    tol_lambda: Option<f64>,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Store every n-th Euler step in the trajectory.
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Log-normal perturbation magnitude on initial shares (0 disables).
    #[arg(long)]
    perturb: Option<f64>,
    /// Scenario name used for output files.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GridArgs {
    #[arg(long)]
    regions: Option<PathBuf>,
    #[arg(long)]
    distances: Option<PathBuf>,
    /// `builtin` or a TOML file with `[[scenario]]` entries.
    #[arg(long)]
    scenarios: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RacetrackArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// Number of seeds; seeds run from `--first-seed` upward.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    first_seed: Option<u64>,
    #[arg(long)]
    perturb: Option<f64>,
    /// Distance between neighboring racetrack regions.
    #[arg(long)]
    spacing: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GiniArgs {
    /// CSV of shares: a single column (optionally headed), or a column named
    /// `lambda` or `lambda0`.
    #[arg(long)]
    input: Option<PathBuf>,
}

/// Scenario list file for `grid --scenarios`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    scenario: Vec<Scenario>,
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    toml::from_str(&read_to_string(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Overlays command-line values on the config file: top-level keys first,
/// then the `[section]` table, then flags that were actually given.
fn merge<T: Serialize + DeserializeOwned + Default>(cli: T, config: Option<&toml::Table>, section: &str) -> Result<T> {
    const SECTIONS: [&str; 4] = ["simulate", "grid", "racetrack", "gini"];
    let cfg = |e: String| Error::Config(e);
    let mut merged = serde_json::Map::new();
    if let Some(table) = config {
        let fields: BTreeSet<String> = match serde_json::to_value(T::default()) {
            Ok(serde_json::Value::Object(m)) => m.into_iter().map(|(k, _)| k).collect(),
            _ => BTreeSet::new(),
        };
        for (k, v) in table {
            if SECTIONS.contains(&k.as_str()) {
                continue;
            }
            // Top-level keys are shared by all subcommands; keep the ones this one knows.
            if fields.contains(k) {
                merged.insert(k.clone(), serde_json::to_value(v).map_err(|e| cfg(e.to_string()))?);
            }
        }
        if let Some(v) = table.get(section) {
            let sub = v
                .as_table()
                .ok_or_else(|| cfg(format!("`{section}` in the config file must be a table")))?;
            for (k, v) in sub {
                merged.insert(k.clone(), serde_json::to_value(v).map_err(|e| cfg(e.to_string()))?);
            }
        }
    }
    if let serde_json::Value::Object(flags) = serde_json::to_value(&cli).map_err(|e| cfg(e.to_string()))? {
        for (k, v) in flags {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(serde_json::Value::Object(merged)).map_err(|e| cfg(format!("[{section}]: {e}")))
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("missing required option --{flag}")))
}

fn load_geography(regions: Option<PathBuf>, distances: Option<PathBuf>) -> Result<negsim::Geography> {
    let geo = load_regions(
        required(regions, "regions")?,
        &LoadOptions {
            normalize: true,
            distances,
        },
    )?;
    for w in &geo.normalization().warnings {
        eprintln!("warning: {w}");
    }
    Ok(geo)
}

fn run_simulate(a: SimulateArgs) -> Result<i32> {
    let out = required(a.out, "out")?;
    let geo = load_geography(a.regions, a.distances)?;
    let mut scenario = Scenario::new(
        a.name.unwrap_or_else(|| "simulate".into()),
        required(a.mu, "mu")?,
        required(a.sigma, "sigma")?,
        required(a.tau, "tau")?,
    );
    let defaults = IntegratorOptions::default();
    let solver_defaults = SolverOptions::default();
    scenario.rho = a.rho.unwrap_or(scenario.rho);
    scenario.integrator = IntegratorOptions {
        dt: a.dt.unwrap_or(defaults.dt),
        t_max: a.t_max.unwrap_or(defaults.t_max),
        tolerance: a.tol_lambda.unwrap_or(defaults.tolerance),
        stride: a.stride.unwrap_or(defaults.stride),
        solver: SolverOptions {
            tolerance: a.tol_wage.unwrap_or(solver_defaults.tolerance),
            damping: a.damping.unwrap_or(solver_defaults.damping),
            max_iterations: a.max_iterations.unwrap_or(solver_defaults.max_iterations),
        },
        ..defaults
    };
    let base = Perturbation::default();
    scenario.perturbation = Perturbation {
        seed: a.seed.unwrap_or(base.seed),
        magnitude: a.perturb.unwrap_or(base.magnitude),
    };
    finish_grid(&[scenario], &geo, 1, &out)
}

fn run_grid_cmd(a: GridArgs) -> Result<i32> {
    let out = required(a.out, "out")?;
    let geo = load_geography(a.regions, a.distances)?;
    let scenarios = match a.scenarios.as_deref() {
        None | Some("builtin") => builtin_grid(),
        Some(path) => parse_toml::<ScenarioFile>(Path::new(path))?.scenario,
    };
    finish_grid(&scenarios, &geo, a.workers.unwrap_or(1), &out)
}

fn finish_grid(scenarios: &[Scenario], geo: &negsim::Geography, workers: usize, out: &Path) -> Result<i32> {
    let report = run_grid(scenarios, geo, workers)?;
    export_results(&report, out)?;
    render_figures(&report, out)?;
    print!("{}", report.render_table());
    for o in &report.outcomes {
        if let negsim::runner::ScenarioOutcome::Failed { error, .. } = o {
            eprintln!("error: {error}");
        }
    }
    Ok(report.exit_code())
}

fn run_racetrack_cmd(a: RacetrackArgs) -> Result<i32> {
    let out = required(a.out, "out")?;
    let n = required(a.n, "n")?;
    let params = ModelParams::new(required(a.mu, "mu")?, required(a.sigma, "sigma")?, required(a.tau, "tau")?)
        .with_rho(a.rho.unwrap_or(1.0));
    let count = required(a.seeds, "seeds")?;
    let first = a.first_seed.unwrap_or(0);
    let seeds: Vec<u64> = (first..first.saturating_add(count)).collect();
    let defaults = BatchOptions::default();
    let options = BatchOptions {
        spacing: a.spacing.unwrap_or(defaults.spacing),
        magnitude: a.perturb.unwrap_or(defaults.magnitude),
        integrator: IntegratorOptions {
            dt: a.dt.unwrap_or(defaults.integrator.dt),
            t_max: a.t_max.unwrap_or(defaults.integrator.t_max),
            ..defaults.integrator
        },
        workers: a.workers.unwrap_or(1),
        ..defaults
    };
    let batch = run_racetrack_batch(n, &params, &seeds, &options)?;
    export_racetrack(&batch, &out)?;
    println!("agglomerations  min_separation  count  frequency");
    for row in &batch.histogram {
        let sep = row.min_separation.map_or_else(|| "-".to_string(), |s| s.to_string());
        println!("{:>14}  {:>14}  {:>5}  {:>9.3}", row.agglomerations, sep, row.count, row.frequency);
    }
    for f in &batch.failures {
        eprintln!("error: seed {}: {}", f.seed, f.error);
    }
    Ok(if batch.failures.is_empty() { 0 } else { 2 })
}

/// Reads a share column: headerless numbers, a single headed column, or
/// the `lambda` / `lambda0` column of a wider table.
fn read_shares(path: &Path) -> Result<Vec<f64>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io {
                path: path.to_path_buf(),
                source,
            },
            other => Error::Config(format!("{}: {other:?}", path.display())),
        })?;
    let rows: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>().map_err(csv_err)?;
    let Some(first) = rows.first() else {
        return Err(Error::EmptyDataset);
    };
    let headed = first.get(0).is_some_and(|f| f.parse::<f64>().is_err());
    let column = if headed {
        match first.iter().position(|h| h == "lambda").or_else(|| first.iter().position(|h| h == "lambda0")) {
            Some(c) => c,
            None if first.len() == 1 => 0,
            None => return Err(Error::MissingColumn { column: "lambda".into() }),
        }
    } else {
        0
    };
    rows.iter()
        .skip(usize::from(headed))
        .enumerate()
        .map(|(i, r)| {
            let field = r.get(column).unwrap_or("");
            field.parse::<f64>().map_err(|_| Error::Validation {
                id: format!("row {}", i + 1),
                reason: format!("`{field}` is not a number"),
            })
        })
        .collect()
}

fn run_gini_cmd(a: GiniArgs) -> Result<i32> {
    let shares = read_shares(&required(a.input, "input")?)?;
    println!("{}", gini(&shares)?);
    Ok(0)
}

fn run(cli: Cli) -> Result<i32> {
    let config: Option<toml::Table> = cli.config.as_deref().map(parse_toml).transpose()?;
    let config = config.as_ref();
    match cli.command {
        Command::Simulate(a) => run_simulate(merge(a, config, "simulate")?),
        Command::Grid(a) => run_grid_cmd(merge(a, config, "grid")?),
        Command::Racetrack(a) => run_racetrack_cmd(merge(a, config, "racetrack")?),
        Command::Gini(a) => run_gini_cmd(merge(a, config, "gini")?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
