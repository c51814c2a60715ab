use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use scbm_core::solver::StepRule;
use scbm_harness::presets::scenario_names;
use scbm_harness::runner::{check_table, oracle_table, run_check, run_dynamic_with, run_experiment_with, run_oracle};
use scbm_harness::scenario::{RawEvent, RawPower, RawRounds, RawSolver, RawSpec};
use scbm_harness::{emit_csv, Execution, Manager, PresetLibrary, RawScenario, RoundMode, Scenario, Table};

/// Minimum-energy bandwidth management for pre-copy VM migration: feasibility
/// checks, single solves, manager comparisons, perturbed runs, sweeps and the
/// brute-force cross-check, all written as CSV.
#[derive(Parser)]
#[command(name = "scbm", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Feasibility margins of every point (each must be at most 1).
    Check(Common),
    /// Run one manager on every point.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "scbm")]
        manager: Manager,
    },
    /// Run all three managers on every point, with savings columns.
    Compare(Common),
    /// Energy trajectory under the scenario's events, as plot data.
    Dynamic(Common),
    /// Run the scenario's managers over its sweep grid.
    Sweep(Common),
    /// Compare the solver with an exhaustive grid search.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Grid points per scanned rate.
        #[arg(long, default_value_t = 200)]
        resolution: usize,
    },
    /// List the built-in presets.
    Presets,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (TOML).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Built-in scenario to start from (under the file, if both are given).
    #[arg(short, long)]
    preset: Option<String>,
    /// Output file; standard output when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Evaluate sweep points one after another.
    #[arg(long)]
    sequential: bool,

    #[arg(long)]
    workload: Option<String>,
    #[arg(long)]
    m0: Option<f64>,
    #[arg(long)]
    dirty_rate: Option<f64>,
    #[arg(long)]
    dirty_ratio: Option<f64>,
    #[arg(long)]
    i_max: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    delta_mt: Option<f64>,
    #[arg(long)]
    delta_dt: Option<f64>,
    #[arg(long)]
    r_hat: Option<f64>,

    /// Power-model preset.
    #[arg(long)]
    power: Option<String>,
    #[arg(long)]
    k0: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    p_setup: Option<f64>,

    /// optimized, fixed or search.
    #[arg(long)]
    rounds: Option<RoundMode>,
    #[arg(long)]
    search_extra: Option<usize>,

    #[arg(long)]
    a_max: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_parser = parse_step_rule)]
    step_rule: Option<StepRule>,

    /// Perturbation `ITER:TARGET:FACTOR`, TARGET being dirty_rate or k0; repeatable.
    #[arg(long = "event", value_parser = parse_event)]
    events: Vec<RawEvent>,
}

fn parse_step_rule(s: &str) -> Result<StepRule, String> {
    match s {
        "newton" => Ok(StepRule::Newton),
        "gradient" => Ok(StepRule::Gradient),
        _ => Err(format!("unknown step rule `{s}`; valid: newton, gradient")),
    }
}

fn parse_event(s: &str) -> Result<RawEvent, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [at, target, factor] = parts.as_slice() else {
        return Err(format!("expected ITER:TARGET:FACTOR, got `{s}`"));
    };
    let target = match *target {
        "dirty_rate" => scbm_core::EventTarget::DirtyRate,
        "k0" => scbm_core::EventTarget::K0,
        t => return Err(format!("unknown event target `{t}`; valid: dirty_rate, k0")),
    };
    Ok(RawEvent {
        at_iter: at.parse().map_err(|e| format!("iteration `{at}`: {e}"))?,
        target,
        multiplier: factor.parse().map_err(|e| format!("factor `{factor}`: {e}"))?,
    })
}

impl Common {
    fn overrides(&self) -> RawScenario {
        RawScenario {
            spec: RawSpec {
                workload: self.workload.clone(),
                m0: self.m0,
                dirty_rate: self.dirty_rate,
                dirty_ratio: self.dirty_ratio,
                dirty_rate_trace: None,
                i_max: self.i_max,
                q: self.q,
                beta: self.beta,
                delta_mt: self.delta_mt,
                delta_dt: self.delta_dt,
                r_hat: self.r_hat,
                overheads: None,
            },
            power: RawPower { preset: self.power.clone(), connection: None, k0: self.k0, alpha: self.alpha, p_setup: self.p_setup },
            rounds: RawRounds { mode: self.rounds, search_extra: self.search_extra, xen_min: None, xen_max: None },
            solver: RawSolver { a_max: self.a_max, max_iters: self.max_iters, convergence_tol: self.tol, step_rule: self.step_rule },
            events: (!self.events.is_empty()).then(|| self.events.clone()),
            ..RawScenario::default()
        }
    }

    fn scenario(&self) -> anyhow::Result<Scenario> {
        let base = match (&self.config, &self.preset) {
            (Some(path), preset) => {
                let mut raw = RawScenario::from_file(path)?;
                if raw.preset.is_none() {
                    raw.preset = preset.clone();
                }
                raw.with_presets_applied()?
            }
            (None, Some(name)) => RawScenario::from_preset(name)?,
            (None, None) => RawScenario::default(),
        };
        let lib = PresetLibrary::builtin()?;
        Ok(Scenario::resolve(&base.overlay(&self.overrides()), &lib)?)
    }

    fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    fn write(&self, table: &Table) -> anyhow::Result<()> {
        match &self.output {
            Some(path) => emit_csv(table, path)?,
            None => {
                let stdout = std::io::stdout();
                table.write_to(stdout.lock()).context("writing to standard output")?;
            }
        }
        Ok(())
    }
}

/// Exit status: 0 when something was solved, 2 when every result was infeasible.
fn status(all_infeasible: bool) -> ExitCode {
    if all_infeasible {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.verb {
        Verb::Presets => {
            let lib = PresetLibrary::builtin()?;
            let mut out = std::io::stdout().lock();
            writeln!(out, "scenarios: {}", scenario_names().join(", "))?;
            writeln!(out, "power: {}", lib.power.keys().cloned().collect::<Vec<_>>().join(", "))?;
            writeln!(out, "interfaces: {}", lib.connections.keys().cloned().collect::<Vec<_>>().join(", "))?;
            writeln!(out, "workloads: {}", lib.workloads.keys().cloned().collect::<Vec<_>>().join(", "))?;
            Ok(ExitCode::SUCCESS)
        }
        Verb::Check(c) => {
            let scen = c.scenario()?;
            let rows = run_check(&scen)?;
            c.write(&check_table(&scen, &rows))?;
            Ok(status(!rows.iter().any(|r| r.feasible)))
        }
        Verb::Solve { common, manager } => {
            let scen = common.scenario()?;
            let table = run_experiment_with(&scen, &[manager], common.execution())?;
            common.write(&table.to_table())?;
            Ok(status(table.all_infeasible()))
        }
        Verb::Compare(c) => {
            let scen = c.scenario()?;
            let table = run_experiment_with(&scen, &Manager::ALL, c.execution())?;
            c.write(&table.to_table())?;
            Ok(status(table.all_infeasible()))
        }
        Verb::Sweep(c) => {
            let scen = c.scenario()?;
            let table = run_experiment_with(&scen, &scen.managers, c.execution())?;
            c.write(&table.to_table())?;
            Ok(status(table.all_infeasible()))
        }
        Verb::Dynamic(c) => {
            let scen = c.scenario()?;
            let out = run_dynamic_with(&scen, c.execution())?;
            c.write(&out.to_table())?;
            for run in &out.runs {
                let settle: Vec<String> = run.settle.iter().map(|s| format!("n={}: {}", s.at_iter, s.iterations)).collect();
                eprintln!("{}: settle iterations {}", run.point, settle.join(", "));
            }
            Ok(ExitCode::SUCCESS)
        }
        Verb::Oracle { common, resolution } => {
            if resolution < 2 {
                bail!("--resolution must be at least 2");
            }
            let scen = common.scenario()?;
            let rows = run_oracle(&scen, resolution, common.execution())?;
            common.write(&oracle_table(&scen, &rows))?;
            Ok(status(!rows.iter().any(|r| r.oracle_e_tot.is_some())))
        }
    }
}

fn main() -> ExitCode {
    // Usage errors exit with 1 like any other failure; 2 is reserved for
    // runs where nothing was feasible.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
