//! Scenario files: a JSON document describing the network, initial data,
//! numerics and the optional stabilization and control blocks. SI units
//! throughout.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::control::{ControlSchedule, CostSpec, InstantaneousOptions, SearchNumerics};
use crate::coupling::SolverOptions;
use crate::error::{Error, Result};
use crate::fv_solver::{NetworkState, RunOptions, Simulator};
use crate::gas_model::{GasState, PressureLaw};
use crate::network::{BoundaryNode, ControlSignal, Junction, JunctionEdge, KindSpec, Network, Pipe, PipeEnd};
use crate::stabilization::{DiagonalSystem, MuBoundRule};
use crate::steady_state::integrate_steady;
use crate::STANDARD_GRAVITY;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// m/s²
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    pub pipes: Vec<PipeSpec>,
    #[serde(default)]
    pub junctions: Vec<JunctionSpec>,
    #[serde(default)]
    pub boundaries: Vec<BoundarySpec>,
    /// Initial data by pipe id.
    pub initial: BTreeMap<String, Profile>,
    pub numerics: Numerics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stabilization: Option<StabilizationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSpec>,
}

fn default_gravity() -> f64 {
    STANDARD_GRAVITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipeSpec {
    pub id: String,
    /// m
    pub length: f64,
    pub n_cells: usize,
    #[serde(default)]
    pub friction: f64,
    /// Inclination in radians, one value or one per cell.
    #[serde(default)]
    pub slope: Slope,
    pub law: PressureLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Slope {
    Uniform(f64),
    PerCell(Vec<f64>),
}

impl Default for Slope {
    fn default() -> Self {
        Slope::Uniform(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JunctionSpec {
    pub id: String,
    pub edges: Vec<JunctionEdge>,
    pub coupling: KindSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSignal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub id: String,
    pub pipe: String,
    pub end: PipeEnd,
    pub condition: KindSpec,
}

/// Per-pipe cell data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant { rho: f64, q: f64 },
    Sampled { rho: Vec<f64>, q: Vec<f64> },
    /// Stationary profile from `ρ(0)` and the flux.
    Steady { rho_start: f64, q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    pub cfl_number: f64,
    /// s
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_interval: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilizationSpec {
    /// Profiles the closed loop should approach; defaults to `initial`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<BTreeMap<String, Profile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagonal: Option<DiagonalSpec>,
}

/// A diagonal system to certify, with its grid and initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagonalSpec {
    pub system: DiagonalSystem,
    /// Weights; the largest admissible values when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default)]
    pub rule: MuBoundRule,
    pub dx: f64,
    pub dt: f64,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient_gate: Option<f64>,
    /// One row of cell values per component.
    pub initial: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    pub cost: CostSpec,
    pub junction_id: String,
    pub interval: f64,
    pub bounds: (f64, f64),
    #[serde(default)]
    pub initial_control: f64,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Constant controls compared by the grid search.
    #[serde(default)]
    pub sweep: Vec<f64>,
}

fn default_budget() -> usize {
    32
}

fn default_tolerance() -> f64 {
    1e-4
}

impl ControlSpec {
    pub fn instantaneous_options(&self) -> InstantaneousOptions {
        InstantaneousOptions {
            junction_id: self.junction_id.clone(),
            interval: self.interval,
            bounds: self.bounds,
            initial_control: self.initial_control,
            budget: self.budget,
            tolerance: self.tolerance,
        }
    }

    /// One constant schedule per sweep value over the cost horizon.
    pub fn sweep_candidates(&self) -> Result<Vec<ControlSchedule>> {
        let n = (self.cost.horizon / self.interval).round().max(1.0) as usize;
        self.sweep
            .iter()
            .map(|&u| ControlSchedule::constant(self.junction_id.clone(), self.interval, n, u, self.bounds))
            .collect()
    }
}

fn scenario_error(msg: impl Into<String>) -> Error {
    Error::Scenario(msg.into())
}

impl Scenario {
    /// Strict parse followed by [`Scenario::validate`].
    pub fn parse(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| {
            scenario_error(format!("line {}, column {}: {}", e.line(), e.column(), strip_location(&e)))
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let n = &self.numerics;
        if !(n.cfl_number > 0.0 && n.cfl_number <= 1.0) {
            return Err(scenario_error(format!(
                "numerics.cfl_number must lie in (0, 1], got {}",
                n.cfl_number
            )));
        }
        if !(n.horizon >= 0.0 && n.horizon.is_finite()) {
            return Err(scenario_error(format!("numerics.horizon must be >= 0, got {}", n.horizon)));
        }
        if let Some(h) = n.sample_interval {
            if !(h > 0.0 && h.is_finite()) {
                return Err(scenario_error(format!("numerics.sample_interval must be > 0, got {h}")));
            }
        }
        if !self.gravity.is_finite() {
            return Err(scenario_error("gravity must be finite"));
        }
        for (k, p) in self.pipes.iter().enumerate() {
            p.law
                .validate()
                .map_err(|e| scenario_error(format!("pipes[{k}] (`{}`).law: {e}", p.id)))?;
            if let Slope::PerCell(s) = &p.slope {
                if s.len() != p.n_cells {
                    return Err(scenario_error(format!(
                        "pipes[{k}] (`{}`).slope has {} values for {} cells",
                        p.id,
                        s.len(),
                        p.n_cells
                    )));
                }
            }
        }
        let has_pipe = |id: &str| self.pipes.iter().any(|p| p.id == id);
        for (k, j) in self.junctions.iter().enumerate() {
            for (e, edge) in j.edges.iter().enumerate() {
                if !has_pipe(&edge.pipe) {
                    return Err(scenario_error(format!(
                        "junctions[{k}] (`{}`).edges[{e}]: unknown pipe `{}`",
                        j.id, edge.pipe
                    )));
                }
            }
        }
        for (k, b) in self.boundaries.iter().enumerate() {
            if !has_pipe(&b.pipe) {
                return Err(scenario_error(format!(
                    "boundaries[{k}] (`{}`).pipe: unknown pipe `{}`",
                    b.id, b.pipe
                )));
            }
        }
        check_profiles("initial", &self.initial, &self.pipes)?;
        if let Some(st) = &self.stabilization {
            if let Some(t) = &st.target {
                check_profiles("stabilization.target", t, &self.pipes)?;
            }
            if let Some(d) = &st.diagonal {
                d.system
                    .validate()
                    .map_err(|e| scenario_error(format!("stabilization.diagonal.system: {e}")))?;
                if d.initial.len() != d.system.dim() || d.initial.iter().any(|r| r.is_empty()) {
                    return Err(scenario_error(format!(
                        "stabilization.diagonal.initial needs {} non-empty rows",
                        d.system.dim()
                    )));
                }
            }
        }
        if let Some(c) = &self.control {
            if !has_pipe(&c.cost.pipe) {
                return Err(scenario_error(format!("control.cost.pipe: unknown pipe `{}`", c.cost.pipe)));
            }
            if !self.junctions.iter().any(|j| j.id == c.junction_id) {
                return Err(scenario_error(format!(
                    "control.junction_id: unknown junction `{}`",
                    c.junction_id
                )));
            }
            if n.sample_interval.is_none() {
                return Err(scenario_error("control requires numerics.sample_interval"));
            }
        }
        self.network()?
            .validate()
            .first()
            .map_or(Ok(()), |d| Err(scenario_error(format!("network: {d}"))))
    }

    pub fn network(&self) -> Result<Network> {
        let mut net = Network::new(self.gravity);
        for p in &self.pipes {
            let mut pipe = Pipe::new(p.id.clone(), p.length, p.n_cells, p.law).with_friction(p.friction);
            pipe.slope = match &p.slope {
                Slope::Uniform(a) => vec![*a; p.n_cells],
                Slope::PerCell(s) => s.clone(),
            };
            net.pipes.push(pipe);
        }
        for j in &self.junctions {
            net.junctions.push(Junction {
                id: j.id.clone(),
                edges: j.edges.clone(),
                coupling: j.coupling.clone(),
                control: j.control.clone(),
            });
        }
        for b in &self.boundaries {
            net.boundary_nodes.push(BoundaryNode {
                id: b.id.clone(),
                pipe: b.pipe.clone(),
                end: b.end,
                condition: b.condition.clone(),
            });
        }
        Ok(net)
    }

    pub fn simulator(&self) -> Result<Simulator> {
        let mut sim = Simulator::new(&self.network()?)?;
        if let Some(opts) = self.solver {
            sim.solver_options = opts;
        }
        Ok(sim)
    }

    /// Cell data for every pipe in declaration order.
    pub fn profiles(&self, which: &BTreeMap<String, Profile>) -> Result<Vec<Vec<GasState>>> {
        let net = self.network()?;
        net.pipes
            .iter()
            .map(|pipe| {
                let prof = which
                    .get(&pipe.id)
                    .ok_or_else(|| scenario_error(format!("no profile for pipe `{}`", pipe.id)))?;
                cells_of(prof, pipe, net.gravity).map_err(|e| scenario_error(format!("profile of pipe `{}`: {e}", pipe.id)))
            })
            .collect()
    }

    pub fn initial_state(&self, sim: &Simulator) -> Result<NetworkState> {
        sim.initial_state(self.profiles(&self.initial)?)
    }

    /// Closed-loop target profiles, `initial` when no target is given.
    pub fn target_profiles(&self) -> Result<Vec<Vec<GasState>>> {
        let target = self
            .stabilization
            .as_ref()
            .and_then(|s| s.target.as_ref())
            .unwrap_or(&self.initial);
        self.profiles(target)
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            cfl_number: self.numerics.cfl_number,
            horizon: self.numerics.horizon,
            sample_interval: self.numerics.sample_interval,
        }
    }

    pub fn search_numerics(&self) -> Result<SearchNumerics> {
        Ok(SearchNumerics {
            cfl_number: self.numerics.cfl_number,
            sample_interval: self
                .numerics
                .sample_interval
                .ok_or_else(|| scenario_error("control requires numerics.sample_interval"))?,
        })
    }
}

fn check_profiles(path: &str, profiles: &BTreeMap<String, Profile>, pipes: &[PipeSpec]) -> Result<()> {
    if let Some(id) = profiles.keys().find(|id| !pipes.iter().any(|p| &p.id == *id)) {
        return Err(scenario_error(format!("{path}.{id}: unknown pipe `{id}`")));
    }
    if let Some(p) = pipes.iter().find(|p| !profiles.contains_key(&p.id)) {
        return Err(scenario_error(format!("{path}: missing profile for pipe `{}`", p.id)));
    }
    for p in pipes {
        if let Profile::Sampled { rho, q } = &profiles[&p.id] {
            if rho.len() != p.n_cells || q.len() != p.n_cells {
                return Err(scenario_error(format!(
                    "{path}.{}: sampled profile needs {} values of rho and q",
                    p.id, p.n_cells
                )));
            }
        }
    }
    Ok(())
}

fn cells_of(prof: &Profile, pipe: &Pipe, gravity: f64) -> Result<Vec<GasState>> {
    match prof {
        Profile::Constant { rho, q } => Ok(vec![GasState::new(*rho, *q)?; pipe.n_cells]),
        Profile::Sampled { rho, q } => rho.iter().zip(q).map(|(r, q)| GasState::new(*r, *q)).collect(),
        Profile::Steady { rho_start, q } => integrate_steady(pipe, gravity, *rho_start, *q)?.states(),
    }
}

/// serde_json appends " at line L column C"; the location is reported separately.
fn strip_location(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "pipes": [{"id": "p", "length": 1.0, "n_cells": 10,
                   "law": {"kind": "isentropic", "kappa": 1.0, "gamma": 1.4}}],
        "boundaries": [
            {"id": "left", "pipe": "p", "end": "start", "condition": {"kind": "wall"}},
            {"id": "right", "pipe": "p", "end": "end", "condition": {"kind": "wall"}}
        ],
        "initial": {"p": {"kind": "constant", "rho": 1.0, "q": 0.0}},
        "numerics": {"cfl_number": 0.9, "horizon": 0.5}
    }"#;

    #[test]
    fn minimal_scenario_has_documented_defaults() {
        let sc = Scenario::parse(MINIMAL).unwrap();
        assert_eq!(sc.gravity, 9.81);
        assert_eq!(sc.pipes[0].friction, 0.0);
        assert_eq!(sc.pipes[0].slope, Slope::Uniform(0.0));
        assert!(sc.junctions.is_empty() && sc.solver.is_none() && sc.control.is_none());
        assert_eq!(sc.numerics.sample_interval, None);
        let net = sc.network().unwrap();
        assert_eq!(net.pipes[0].slope, vec![0.0; 10]);
    }

    #[test]
    fn round_trip_is_exact() {
        let sc = Scenario::parse(MINIMAL).unwrap();
        let again = Scenario::parse(&sc.to_json()).unwrap();
        assert_eq!(sc, again);
        assert_eq!(sc.to_json(), again.to_json());
    }

    #[test]
    fn unknown_fields_are_rejected_with_location() {
        let text = MINIMAL.replace("\"n_cells\": 10,", "\"n_cells\": 10, \"colour\": 3,");
        let msg = Scenario::parse(&text).unwrap_err().to_string();
        assert!(msg.contains("line 2") && msg.contains("colour"), "{msg}");
    }

    #[test]
    fn missing_pipe_is_located() {
        let text = MINIMAL.replace(r#""pipe": "p", "end": "end""#, r#""pipe": "q", "end": "end""#);
        let msg = Scenario::parse(&text).unwrap_err().to_string();
        assert!(msg.contains("boundaries[1]") && msg.contains("`q`"), "{msg}");
    }

    #[test]
    fn cfl_bound_is_named() {
        let text = MINIMAL.replace("\"cfl_number\": 0.9", "\"cfl_number\": 1.5");
        let msg = Scenario::parse(&text).unwrap_err().to_string();
        assert!(msg.contains("numerics.cfl_number") && msg.contains("(0, 1]") && msg.contains("1.5"), "{msg}");
    }

    #[test]
    fn steady_profile_initializes_cells() {
        let text = MINIMAL.replace(
            r#"{"kind": "constant", "rho": 1.0, "q": 0.0}"#,
            r#"{"kind": "steady", "rho_start": 1.0, "q": 0.0}"#,
        );
        let sc = Scenario::parse(&text).unwrap();
        let cells = sc.profiles(&sc.initial).unwrap();
        assert_eq!(cells[0].len(), 10);
        assert!(cells[0].iter().all(|c| c.rho == 1.0 && c.q == 0.0));
    }
}
