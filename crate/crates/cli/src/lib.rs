//! Command-line front end: `simulate`, `steady`, `stabilize` and `optimize`
//! on a scenario file, writing CSV and JSON artifacts to an output directory.

pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gasnet_core::control::{grid_search, instantaneous_control};
use gasnet_core::fv_solver::Trajectory;
use gasnet_core::scenario::{Profile, Scenario};
use gasnet_core::stabilization::{admissible_parameters, certify_decay, l2_distance_to_target, CertifyOptions};
use gasnet_core::steady_state::{integrate_steady, steady_residual};
use serde_json::json;

use output::write_all;

#[derive(Debug, Parser)]
#[command(name = "gasnet", version, about = "Gas pipeline network simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Seed recorded in the summary for randomized property suites.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for junction solves and candidate searches.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trajectory and junction trace CSVs plus a summary.
    Simulate(Io),
    /// Stationary profiles of every pipe initialized with `steady` data.
    Steady(Io),
    /// Closed-loop run toward the target and diagonal Lyapunov certification.
    Stabilize(Io),
    /// Instantaneous control and constant-control sweep.
    Optimize(Io),
}

#[derive(Debug, Args)]
pub struct Io {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn load(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Scenario::parse(&text)?)
}

pub fn run(cli: &Cli) -> Result<()> {
    let work = || match &cli.command {
        Command::Simulate(io) => simulate(io, cli.seed),
        Command::Steady(io) => steady(io, cli.seed),
        Command::Stabilize(io) => stabilize(io, cli.seed),
        Command::Optimize(io) => optimize(io, cli.seed),
    };
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building thread pool")?
            .install(work),
        None => work(),
    }
}

fn simulated(sc: &Scenario) -> Result<(Trajectory, f64)> {
    let sim = sc.simulator()?;
    let init = sc.initial_state(&sim)?;
    let mass0 = init.total_mass();
    let traj = sim.run(init, &sc.run_options(), &mut |_| {})?;
    Ok((traj, mass0))
}

fn simulate(io: &Io, seed: u64) -> Result<()> {
    let sc = load(&io.scenario)?;
    let net = sc.network()?;
    let (traj, mass0) = simulated(&sc)?;
    let last = traj.last_state();
    let summary = json!({
        "command": "simulate",
        "seed": seed,
        "steps": traj.steps,
        "samples": traj.samples.len(),
        "final_time": last.time,
        "total_mass_initial": mass0,
        "total_mass_final": last.total_mass(),
    });
    write_all(
        &io.out,
        &[
            ("trajectory.csv", output::trajectory_csv(&traj, &net)?),
            ("junctions.csv", output::junctions_csv(&traj)?),
            ("summary.json", output::json(&summary)?),
        ],
    )
}

fn steady(io: &Io, seed: u64) -> Result<()> {
    let sc = load(&io.scenario)?;
    let net = sc.network()?;
    let mut profiles = Vec::new();
    let mut laws = Vec::new();
    let mut rows = Vec::new();
    for pipe in &net.pipes {
        if let Some(Profile::Steady { rho_start, q }) = sc.initial.get(&pipe.id) {
            let prof = integrate_steady(pipe, net.gravity, *rho_start, *q)
                .with_context(|| format!("steady profile of pipe `{}`", pipe.id))?;
            let residual = steady_residual(&prof, pipe, net.gravity)?;
            rows.push(json!({
                "pipe_id": pipe.id,
                "q": prof.q,
                "rho_start": prof.rho_start,
                "rho_end": prof.rho_end,
                "subsonic_margin": prof.subsonic_margin,
                "residual": residual,
            }));
            profiles.push((pipe.id.clone(), prof));
            laws.push(pipe.law);
        }
    }
    if profiles.is_empty() {
        bail!("scenario initializes no pipe with a steady profile");
    }
    let summary = json!({ "command": "steady", "seed": seed, "profiles": rows });
    write_all(
        &io.out,
        &[
            ("steady.csv", output::steady_csv(&profiles, &laws)?),
            ("summary.json", output::json(&summary)?),
        ],
    )
}

fn stabilize(io: &Io, seed: u64) -> Result<()> {
    let sc = load(&io.scenario)?;
    let stab = sc
        .stabilization
        .as_ref()
        .context("stabilize requires a `stabilization` block")?;
    let net = sc.network()?;
    let (traj, _) = simulated(&sc)?;
    let target = sc.target_profiles()?;
    let mut times = Vec::with_capacity(traj.samples.len());
    let mut dist = Vec::with_capacity(traj.samples.len());
    for s in &traj.samples {
        times.push(s.state.time);
        dist.push(l2_distance_to_target(&s.state, &target)?);
    }
    let mut files = vec![
        ("trajectory.csv", output::trajectory_csv(&traj, &net)?),
        ("junctions.csv", output::junctions_csv(&traj)?),
        ("distance.csv", output::distance_csv(&times, &dist)?),
    ];
    let mut summary = json!({
        "command": "stabilize",
        "seed": seed,
        "distance_initial": dist.first(),
        "distance_final": dist.last(),
    });
    if let Some(d) = &stab.diagonal {
        let mu = match &d.mu {
            Some(mu) => mu.clone(),
            None => admissible_parameters(&d.system, d.dt, d.dx, d.rule)?
                .mu_bound
                .iter()
                .map(|b| b.max(0.0))
                .collect(),
        };
        let opts = CertifyOptions {
            dt: d.dt,
            dx: d.dx,
            steps: d.steps,
            rule: d.rule,
            gradient_gate: d.gradient_gate,
        };
        let report = certify_decay(&d.system, &d.initial, &mu, &opts)?;
        summary["certification"] = json!({
            "nu": report.nu,
            "bound_holds": report.bound_holds,
            "kappa_admissible": report.kappa_admissible,
            "mu_admissible": report.mu_admissible,
        });
        files.push(("lyapunov.csv", output::lyapunov_csv(&report)?));
        files.push(("report.json", output::json(&report)?));
    }
    files.push(("summary.json", output::json(&summary)?));
    write_all(&io.out, &files)
}

fn optimize(io: &Io, seed: u64) -> Result<()> {
    let sc = load(&io.scenario)?;
    let ctrl = sc.control.as_ref().context("optimize requires a `control` block")?;
    let net = sc.network()?;
    let sim = sc.simulator()?;
    let init = sc.initial_state(&sim)?;
    let numerics = sc.search_numerics()?;
    let inst = instantaneous_control(&sim, &init, &ctrl.cost, &ctrl.instantaneous_options(), &numerics)?;
    let mut files = vec![
        ("schedule.csv", output::schedule_csv(&inst.schedule)?),
        ("trajectory.csv", output::trajectory_csv(&inst.trajectory, &net)?),
    ];
    let mut summary = json!({
        "command": "optimize",
        "seed": seed,
        "instantaneous": {
            "cost": inst.cost,
            "budget_exhausted": inst.budget_exhausted,
            "evaluations": inst.evaluations,
        },
    });
    if !ctrl.sweep.is_empty() {
        let cands = ctrl.sweep_candidates()?;
        let result = grid_search(&sim, &init, &ctrl.cost, &cands, &numerics)?;
        summary["sweep"] = json!({
            "best": result.best,
            "best_u": ctrl.sweep[result.best],
            "best_cost": result.costs[result.best],
        });
        files.push(("costs.csv", output::costs_csv(&ctrl.sweep, &result)?));
    }
    files.push(("summary.json", output::json(&summary)?));
    write_all(&io.out, &files)
}

/// Single-line error record for the diagnostic stream.
pub fn error_record(err: &anyhow::Error) -> String {
    let kind = match err.downcast_ref::<gasnet_core::Error>() {
        Some(gasnet_core::Error::Scenario(_)) => "scenario",
        Some(_) => "simulation",
        None if err.downcast_ref::<std::io::Error>().is_some() => "io",
        None => "usage",
    };
    let message = format!("{err:#}").replace('\n', " ");
    json!({ "error": kind, "message": message }).to_string()
}
