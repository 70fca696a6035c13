//! First-order Godunov finite volumes on a pipe network.
//!
//! Cell averages are stored in each pipe's own coordinate. Junction and
//! boundary ghosts are computed in the local frame of the vertex (mirroring
//! at `x = L`) from start-of-step averages, one ghost per pipe end per step.
//! The boundary flux is the physical flux of the ghost trace, which equals
//! the Godunov flux between ghost and cell for subsonic data.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{junction_entropy_flux, CouplingCondition, CouplingRegistry, SolverOptions};
use crate::error::{Error, Result};
use crate::gas_model::{solve_riemann, GasState, PressureLaw};
use crate::network::{ControlSignal, Network, PipeEnd};
use crate::stabilization::{feedback_ghost, BoundaryContext, BoundaryLaw, BoundaryRegistry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeGrid {
    pub pipe_id: String,
    pub dx: f64,
    pub cells: Vec<GasState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub time: f64,
    pub grids: Vec<EdgeGrid>,
    /// PI integrator values by boundary node id.
    pub controller_memory: BTreeMap<String, f64>,
}

impl NetworkState {
    /// `Σ ρ Δx` over all cells.
    pub fn total_mass(&self) -> f64 {
        self.grids.iter().map(|g| g.dx * g.cells.iter().map(|c| c.rho).sum::<f64>()).sum()
    }

    /// `Σ q²/(2ρ) Δx` over all cells.
    pub fn kinetic_energy(&self) -> f64 {
        self.grids
            .iter()
            .map(|g| g.dx * g.cells.iter().map(|c| c.q * c.q / (2.0 * c.rho)).sum::<f64>())
            .sum()
    }

    pub fn grid(&self, pipe_id: &str) -> Option<&EdgeGrid> {
        self.grids.iter().find(|g| g.pipe_id == pipe_id)
    }
}

/// Physical flux at the `ξ = 0` ray of the exact Riemann solution.
pub fn godunov_flux(left: &GasState, right: &GasState, law: &PressureLaw) -> Result<[f64; 2]> {
    solve_riemann(left, right, law)?.sample(0.0).flux(law)
}

/// `(0, −f q|q|/ρ − g sin(α) ρ)`.
pub fn source_term(state: &GasState, friction: f64, slope: f64, gravity: f64) -> [f64; 2] {
    [0.0, -friction * state.q * state.q.abs() / state.rho - gravity * slope.sin() * state.rho]
}

/// `cfl_number · min dx / max(|λ₁|, |λ₂|)` over every cell; `laws[k]` belongs to `state.grids[k]`.
pub fn cfl_timestep(state: &NetworkState, laws: &[PressureLaw], cfl_number: f64) -> Result<f64> {
    if !(cfl_number > 0.0 && cfl_number <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "cfl_number must lie in (0, 1], got {cfl_number}"
        )));
    }
    let mut dt = f64::INFINITY;
    for (grid, law) in state.grids.iter().zip(laws) {
        for c in &grid.cells {
            let (l1, l2) = c.eigenvalues(law)?;
            let speed = l1.abs().max(l2.abs());
            if speed > 0.0 {
                dt = dt.min(grid.dx / speed);
            }
        }
    }
    if dt.is_finite() && dt > 0.0 {
        Ok(cfl_number * dt)
    } else {
        Err(Error::InvalidParameter("no positive time step satisfies the CFL condition".into()))
    }
}

/// Ghost traces at a junction in vertex-outgoing orientation, with solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionLog {
    pub junction_id: String,
    pub traces: Vec<GasState>,
    pub entropy_flux_balance: f64,
    pub residual_norm: f64,
    pub det_diag: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub state: NetworkState,
    pub junctions: Vec<JunctionLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub steps: usize,
}

impl Trajectory {
    pub fn last_state(&self) -> &NetworkState {
        &self.samples.last().expect("trajectory has at least the initial sample").state
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub cfl_number: f64,
    pub horizon: f64,
    /// Output spacing; `None` records only the initial and final states.
    pub sample_interval: Option<f64>,
}

/// Ghost states for every pipe end for one step.
#[derive(Debug, Clone)]
struct Ghosts {
    start: Vec<Option<GasState>>,
    end: Vec<Option<GasState>>,
    memory: BTreeMap<String, f64>,
    logs: Vec<JunctionLog>,
}

/// A validated network with its coupling conditions and boundary laws resolved.
#[derive(Debug, Clone)]
pub struct Simulator {
    network: Network,
    couplings: Vec<Arc<dyn CouplingCondition>>,
    boundaries: Vec<Arc<dyn BoundaryLaw>>,
    controls: Vec<Option<ControlSignal>>,
    laws: Vec<PressureLaw>,
    pub solver_options: SolverOptions,
}

impl Simulator {
    pub fn new(network: &Network) -> Result<Self> {
        Self::with_registries(network, &CouplingRegistry::with_builtins(), &BoundaryRegistry::with_builtins())
    }

    pub fn with_registries(network: &Network, couplings: &CouplingRegistry, boundaries: &BoundaryRegistry) -> Result<Self> {
        network.ensure_valid_with(couplings, boundaries)?;
        Ok(Simulator {
            couplings: network
                .junctions
                .iter()
                .map(|j| couplings.build(&j.coupling))
                .collect::<Result<_>>()?,
            boundaries: network
                .boundary_nodes
                .iter()
                .map(|b| boundaries.build(&b.condition))
                .collect::<Result<_>>()?,
            controls: network.junctions.iter().map(|j| j.control.clone()).collect(),
            laws: network.pipes.iter().map(|p| p.law).collect(),
            network: network.clone(),
            solver_options: SolverOptions::default(),
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn laws(&self) -> &[PressureLaw] {
        &self.laws
    }

    /// Replaces the control signal of junction `junction_id`.
    pub fn set_control(&mut self, junction_id: &str, signal: Option<ControlSignal>) -> Result<()> {
        let k = self
            .network
            .junctions
            .iter()
            .position(|j| j.id == junction_id)
            .ok_or_else(|| Error::Network(format!("unknown junction `{junction_id}`")))?;
        self.controls[k] = signal;
        Ok(())
    }

    fn control_vector(&self, k: usize, t: f64) -> Vec<f64> {
        let mut u = vec![0.0; self.network.junctions[k].edges.len()];
        if let (Some(sig), true) = (&self.controls[k], u.len() >= 2) {
            u[1] = sig.value_at(t);
        }
        u
    }

    /// State at `t = 0` from per-pipe cell averages; initializes controller memory.
    pub fn initial_state(&self, profiles: Vec<Vec<GasState>>) -> Result<NetworkState> {
        if profiles.len() != self.network.pipes.len() {
            return Err(Error::GridMismatch(format!(
                "{} profiles for {} pipes",
                profiles.len(),
                self.network.pipes.len()
            )));
        }
        let mut grids = Vec::with_capacity(profiles.len());
        for ((pipe, cells), law) in self.network.pipes.iter().zip(profiles).zip(&self.laws) {
            if cells.len() != pipe.n_cells {
                return Err(Error::GridMismatch(format!(
                    "pipe `{}` has {} cells, profile has {}",
                    pipe.id,
                    pipe.n_cells,
                    cells.len()
                )));
            }
            for (i, c) in cells.iter().enumerate() {
                GasState::new(c.rho, c.q)
                    .and_then(|c| c.require_subsonic(law))
                    .map_err(|e| e.at(0.0, format!("pipe `{}` cell {i}", pipe.id)))?;
            }
            grids.push(EdgeGrid {
                pipe_id: pipe.id.clone(),
                dx: pipe.dx(),
                cells,
            });
        }
        let mut state = NetworkState {
            time: 0.0,
            grids,
            controller_memory: BTreeMap::new(),
        };
        for (node, bl) in self.network.boundary_nodes.iter().zip(&self.boundaries) {
            let p = self.network.pipe_index(&node.pipe).expect("validated");
            let ctx = BoundaryContext {
                t: 0.0,
                dt: 0.0,
                end: node.end,
            };
            let cell = local_cell(&state.grids[p].cells, node.end);
            if let Some(z) = bl.initial_memory(&ctx, &cell, &self.laws[p])? {
                state.controller_memory.insert(node.id.clone(), z);
            }
        }
        Ok(state)
    }

    /// Every pipe at the constant state `(ρ, q)`.
    pub fn uniform_state(&self, rho: f64, q: f64) -> Result<NetworkState> {
        let s = GasState::new(rho, q)?;
        self.initial_state(self.network.pipes.iter().map(|p| vec![s; p.n_cells]).collect())
    }

    pub fn cfl_timestep(&self, state: &NetworkState, cfl_number: f64) -> Result<f64> {
        cfl_timestep(state, &self.laws, cfl_number)
    }

    fn ghosts(&self, state: &NetworkState, dt: f64) -> Result<Ghosts> {
        let t = state.time;
        let n = self.network.pipes.len();
        let mut start = vec![None; n];
        let mut end = vec![None; n];
        let solved: Vec<(Vec<GasState>, JunctionLog)> = self
            .network
            .junctions
            .par_iter()
            .enumerate()
            .map(|(k, j)| {
                let locate = |e: Error| e.at(t, format!("junction `{}`", j.id));
                let idx: Vec<usize> = j
                    .edges
                    .iter()
                    .map(|e| self.network.pipe_index(&e.pipe).expect("validated"))
                    .collect();
                let cells: Vec<GasState> = j
                    .edges
                    .iter()
                    .zip(&idx)
                    .map(|(e, p)| local_cell(&state.grids[*p].cells, e.end))
                    .collect();
                let law = &self.laws[idx[0]];
                let out = self.couplings[k]
                    .solve(&cells, law, &self.control_vector(k, t), &self.solver_options)
                    .map_err(locate)?;
                let balance = junction_entropy_flux(&out.ghost_states, law).map_err(locate)?;
                let log = JunctionLog {
                    junction_id: j.id.clone(),
                    traces: out.ghost_states.clone(),
                    entropy_flux_balance: balance,
                    residual_norm: out.residual_norm,
                    det_diag: out.det_diag,
                    iterations: out.iterations,
                };
                Ok((out.ghost_states, log))
            })
            .collect::<Result<_>>()?;
        let mut logs = Vec::with_capacity(solved.len());
        for (j, (traces, log)) in self.network.junctions.iter().zip(solved) {
            for (e, g) in j.edges.iter().zip(traces) {
                let p = self.network.pipe_index(&e.pipe).expect("validated");
                match e.end {
                    PipeEnd::Start => start[p] = Some(g),
                    PipeEnd::End => end[p] = Some(g.mirrored()),
                }
            }
            logs.push(log);
        }
        let mut memory = state.controller_memory.clone();
        for (node, bl) in self.network.boundary_nodes.iter().zip(&self.boundaries) {
            let p = self.network.pipe_index(&node.pipe).expect("validated");
            let ctx = BoundaryContext { t, dt, end: node.end };
            let cells = &state.grids[p].cells;
            let cell = match node.end {
                PipeEnd::Start => cells[0],
                PipeEnd::End => cells[cells.len() - 1],
            };
            let (g, m) = feedback_ghost(
                bl.as_ref(),
                &ctx,
                node.end,
                &cell,
                &self.laws[p],
                state.controller_memory.get(&node.id).copied(),
            )
            .map_err(|e| e.at(t, format!("boundary `{}`", node.id)))?;
            if let Some(z) = m {
                memory.insert(node.id.clone(), z);
            }
            match node.end {
                PipeEnd::Start => start[p] = Some(g),
                PipeEnd::End => end[p] = Some(g),
            }
        }
        Ok(Ghosts {
            start,
            end,
            memory,
            logs,
        })
    }

    /// Junction traces for `state` without advancing it.
    pub fn junction_logs(&self, state: &NetworkState) -> Result<Vec<JunctionLog>> {
        Ok(self.ghosts(state, 0.0)?.logs)
    }

    fn apply(&self, state: &NetworkState, ghosts: Ghosts, dt: f64) -> Result<NetworkState> {
        let t = state.time;
        let g = self.network.gravity;
        let grids = self
            .network
            .pipes
            .par_iter()
            .enumerate()
            .map(|(p, pipe)| {
                let law = &self.laws[p];
                let grid = &state.grids[p];
                let cells = &grid.cells;
                let n = cells.len();
                let locate = |i: usize| move |e: Error| e.at(t, format!("pipe `{}` cell {i}", pipe.id));
                let edge_flux = |s: Option<GasState>, i: usize| -> Result<[f64; 2]> {
                    s.ok_or_else(|| Error::Network(format!("pipe `{}` end without ghost", pipe.id)))?
                        .flux(law)
                        .map_err(locate(i))
                };
                let mut fluxes = Vec::with_capacity(n + 1);
                fluxes.push(edge_flux(ghosts.start[p], 0)?);
                for i in 0..n - 1 {
                    fluxes.push(godunov_flux(&cells[i], &cells[i + 1], law).map_err(locate(i))?);
                }
                fluxes.push(edge_flux(ghosts.end[p], n - 1)?);
                let r = dt / grid.dx;
                let mut next = Vec::with_capacity(n);
                for i in 0..n {
                    let c = &cells[i];
                    let s = source_term(c, pipe.friction, pipe.slope[i], g);
                    let rho = c.rho - r * (fluxes[i + 1][0] - fluxes[i][0]) + dt * s[0];
                    let q = c.q - r * (fluxes[i + 1][1] - fluxes[i][1]) + dt * s[1];
                    next.push(GasState::new(rho, q).map_err(locate(i))?);
                }
                Ok(EdgeGrid {
                    pipe_id: grid.pipe_id.clone(),
                    dx: grid.dx,
                    cells: next,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NetworkState {
            time: t + dt,
            grids,
            controller_memory: ghosts.memory,
        })
    }

    fn check_courant(&self, state: &NetworkState, dt: f64) -> Result<()> {
        let limit = self.cfl_timestep(state, 1.0)?;
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::CflViolation { courant: dt / limit }.at(state.time, "network"));
        }
        Ok(())
    }

    /// One step of length `dt`.
    pub fn step(&self, state: &NetworkState, dt: f64) -> Result<NetworkState> {
        self.step_with_log(state, dt).map(|(s, _)| s)
    }

    /// One step, also returning the junction traces used.
    pub fn step_with_log(&self, state: &NetworkState, dt: f64) -> Result<(NetworkState, Vec<JunctionLog>)> {
        self.check_courant(state, dt)?;
        let ghosts = self.ghosts(state, dt)?;
        let logs = ghosts.logs.clone();
        Ok((self.apply(state, ghosts, dt)?, logs))
    }

    /// Advances to `opts.horizon` with CFL steps clipped to land on every
    /// sample time and on the horizon. `observer` sees each sample as recorded.
    pub fn run(
        &self,
        initial: NetworkState,
        opts: &RunOptions,
        observer: &mut dyn FnMut(&Sample),
    ) -> Result<Trajectory> {
        if !(opts.horizon >= 0.0 && opts.horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon must be >= 0, got {}", opts.horizon)));
        }
        if let Some(h) = opts.sample_interval {
            if !(h > 0.0) {
                return Err(Error::InvalidParameter(format!("sample interval must be > 0, got {h}")));
            }
        }
        let sample_times = sample_times(opts.horizon, opts.sample_interval, initial.time);
        let mut next_sample = 0;
        let mut samples = Vec::new();
        let mut state = initial;
        let mut steps = 0;
        loop {
            let at_sample = next_sample < sample_times.len() && state.time == sample_times[next_sample];
            let end = opts.horizon;
            if state.time >= end {
                if at_sample {
                    let logs = self.junction_logs(&state)?;
                    record(&mut samples, observer, &state, logs);
                }
                break;
            }
            let mut dt = self.cfl_timestep(&state, opts.cfl_number)?;
            let target = if at_sample {
                sample_times.get(next_sample + 1).copied().unwrap_or(end)
            } else {
                sample_times.get(next_sample).copied().unwrap_or(end)
            }
            .min(end);
            let snap = state.time + dt >= target - 1e-12 * target.abs().max(1.0);
            if snap {
                dt = target - state.time;
            }
            let ghosts = self.ghosts(&state, dt)?;
            if at_sample {
                record(&mut samples, observer, &state, ghosts.logs.clone());
                next_sample += 1;
            }
            state = self.apply(&state, ghosts, dt)?;
            if snap {
                state.time = target;
            }
            steps += 1;
        }
        Ok(Trajectory { samples, steps })
    }
}

fn record(samples: &mut Vec<Sample>, observer: &mut dyn FnMut(&Sample), state: &NetworkState, logs: Vec<JunctionLog>) {
    let s = Sample {
        state: state.clone(),
        junctions: logs,
    };
    observer(&s);
    samples.push(s);
}

/// Sample times from `t0` to `horizon` inclusive.
fn sample_times(horizon: f64, interval: Option<f64>, t0: f64) -> Vec<f64> {
    let mut out = vec![t0];
    if let Some(h) = interval {
        let mut k = 1u64;
        loop {
            let t = t0 + k as f64 * h;
            if t >= horizon - 1e-12 * horizon.abs().max(1.0) {
                break;
            }
            out.push(t);
            k += 1;
        }
    }
    if horizon > t0 {
        out.push(horizon);
    }
    out
}

fn local_cell(cells: &[GasState], end: PipeEnd) -> GasState {
    match end {
        PipeEnd::Start => cells[0],
        PipeEnd::End => cells[cells.len() - 1].mirrored(),
    }
}
