//! Cost functionals over trajectories, the instantaneous-control heuristic
//! and a brute-force search over candidate schedules.
//!
//! The cost of a schedule `u` is `J(u) = w·TV(u) + ∫₀ᵀ ∫_{x₁}^{x₂} |p(ρ) − p̄| dx dt`
//! on one pipe of the network.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fv_solver::{NetworkState, RunOptions, Simulator, Trajectory};
use crate::gas_model::PressureLaw;
use crate::network::ControlSignal;

const TIME_TOL: f64 = 1e-9;

/// Piecewise-constant scalar control of one junction on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSchedule {
    pub junction_id: String,
    /// Control grid spacing `Δt_c`.
    pub interval: f64,
    pub samples: Vec<f64>,
    /// `[u_lo, u_hi]`
    pub bounds: (f64, f64),
}

impl ControlSchedule {
    pub fn new(junction_id: impl Into<String>, interval: f64, samples: Vec<f64>, bounds: (f64, f64)) -> Result<Self> {
        let s = ControlSchedule {
            junction_id: junction_id.into(),
            interval,
            samples,
            bounds,
        };
        s.validate()?;
        Ok(s)
    }

    /// `n` copies of `value`.
    pub fn constant(junction_id: impl Into<String>, interval: f64, n: usize, value: f64, bounds: (f64, f64)) -> Result<Self> {
        Self::new(junction_id, interval, vec![value; n], bounds)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bounds;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidParameter(format!("control bounds [{lo}, {hi}] are not an interval")));
        }
        if !(self.interval > 0.0 && self.interval.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "control interval must be > 0, got {}",
                self.interval
            )));
        }
        if self.samples.is_empty() {
            return Err(Error::InvalidParameter("control schedule has no samples".into()));
        }
        if let Some((k, u)) = self.samples.iter().enumerate().find(|(_, u)| !(**u >= lo && **u <= hi)) {
            return Err(Error::InvalidParameter(format!(
                "control sample {k} = {u} outside [{lo}, {hi}]"
            )));
        }
        Ok(())
    }

    pub fn signal(&self) -> ControlSignal {
        ControlSignal::PiecewiseConstant {
            interval: self.interval,
            values: self.samples.clone(),
        }
    }
}

/// Tracking target and regularization weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub tv_weight: f64,
    /// `p̄` (Pa)
    pub target_pressure: f64,
    pub pipe: String,
    /// `[x₁, x₂]` within the pipe (m).
    pub region: (f64, f64),
    /// `T` (s)
    pub horizon: f64,
}

impl CostSpec {
    pub fn validate(&self, length: f64) -> Result<()> {
        let (a, b) = self.region;
        if !(a >= 0.0 && a < b && b <= length) {
            return Err(Error::InvalidParameter(format!(
                "cost region [{a}, {b}] is not inside pipe `{}` of length {length}",
                self.pipe
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("cost horizon must be > 0, got {}", self.horizon)));
        }
        if !(self.tv_weight >= 0.0 && self.target_pressure.is_finite()) {
            return Err(Error::InvalidParameter("tv_weight must be >= 0 and the target finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub tv: f64,
    pub tracking: f64,
    /// `tv_weight · tv + tracking`
    pub total: f64,
}

impl CostBreakdown {
    fn new(spec: &CostSpec, tv: f64, tracking: f64) -> Self {
        CostBreakdown {
            tv,
            tracking,
            total: spec.tv_weight * tv + tracking,
        }
    }
}

/// `Σ_k |u_{k+1} − u_k|`.
pub fn total_variation(schedule: &ControlSchedule) -> f64 {
    schedule.samples.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// `∫_{x₁}^{x₂} |p(ρ) − p̄| dx` at one instant, cell values weighted by their overlap with the region.
pub fn spatial_tracking(state: &NetworkState, spec: &CostSpec, law: &PressureLaw) -> Result<f64> {
    let grid = state
        .grid(&spec.pipe)
        .ok_or_else(|| Error::Network(format!("cost refers to unknown pipe `{}`", spec.pipe)))?;
    let (a, b) = spec.region;
    let mut sum = 0.0;
    for (i, c) in grid.cells.iter().enumerate() {
        let lo = (i as f64 * grid.dx).max(a);
        let hi = ((i + 1) as f64 * grid.dx).min(b);
        if hi > lo {
            sum += (hi - lo) * (law.pressure(c.rho)? - spec.target_pressure).abs();
        }
    }
    Ok(sum)
}

/// Right-endpoint rectangle rule in time over the recorded samples up to `T`.
pub fn tracking_cost(trajectory: &Trajectory, spec: &CostSpec, law: &PressureLaw) -> Result<f64> {
    let samples = &trajectory.samples;
    let t_end = spec.horizon;
    let tol = TIME_TOL * t_end.max(1.0);
    let covered = samples.first().is_some_and(|s| s.state.time <= tol)
        && samples.last().is_some_and(|s| s.state.time >= t_end - tol);
    if !covered {
        return Err(Error::InvalidParameter(format!(
            "trajectory does not cover the cost horizon [0, {t_end}]"
        )));
    }
    let mut sum = 0.0;
    for w in samples.windows(2) {
        let (t0, t1) = (w[0].state.time, w[1].state.time.min(t_end));
        if t1 <= t0 {
            break;
        }
        sum += (t1 - t0) * spatial_tracking(&w[1].state, spec, law)?;
    }
    Ok(sum)
}

/// Time stepping shared by every simulation a search runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchNumerics {
    pub cfl_number: f64,
    /// Output spacing of the reported trajectories; the control interval must be a multiple.
    pub sample_interval: f64,
}

fn cost_law(sim: &Simulator, spec: &CostSpec) -> Result<PressureLaw> {
    let pipe = sim
        .network()
        .pipe(&spec.pipe)
        .ok_or_else(|| Error::Network(format!("cost refers to unknown pipe `{}`", spec.pipe)))?;
    spec.validate(pipe.length)?;
    Ok(pipe.law)
}

fn check_grid(interval: f64, numerics: &SearchNumerics) -> Result<()> {
    let ratio = interval / numerics.sample_interval;
    if !(ratio >= 1.0 - TIME_TOL) || (ratio - ratio.round()).abs() > 1e-9 * ratio {
        return Err(Error::InvalidParameter(format!(
            "control interval {interval} is not a multiple of the sample interval {}",
            numerics.sample_interval
        )));
    }
    Ok(())
}

/// Simulates `schedule` over the cost horizon and evaluates `J`.
pub fn evaluate_schedule(
    sim: &Simulator,
    initial: &NetworkState,
    spec: &CostSpec,
    schedule: &ControlSchedule,
    numerics: &SearchNumerics,
) -> Result<(Trajectory, CostBreakdown)> {
    schedule.validate()?;
    check_grid(schedule.interval, numerics)?;
    let law = cost_law(sim, spec)?;
    let mut sim = sim.clone();
    sim.set_control(&schedule.junction_id, Some(schedule.signal()))?;
    let opts = RunOptions {
        cfl_number: numerics.cfl_number,
        horizon: spec.horizon,
        sample_interval: Some(numerics.sample_interval),
    };
    let traj = sim.run(initial.clone(), &opts, &mut |_| {})?;
    let tracking = tracking_cost(&traj, spec, &law)?;
    let cost = CostBreakdown::new(spec, total_variation(schedule), tracking);
    Ok((traj, cost))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstantaneousOptions {
    pub junction_id: String,
    pub interval: f64,
    pub bounds: (f64, f64),
    /// `u_prev` before the first step.
    #[serde(default)]
    pub initial_control: f64,
    /// Objective evaluations per control step, including the one at `u_prev`.
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Bracket width, relative to the bounds, below which golden-section search stops.
    #[serde(default = "default_search_tolerance")]
    pub tolerance: f64,
}

fn default_budget() -> usize {
    32
}

fn default_search_tolerance() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstantaneousResult {
    pub schedule: ControlSchedule,
    /// Re-simulation of the committed schedule at the output sampling.
    pub trajectory: Trajectory,
    pub cost: CostBreakdown,
    /// A step ran out of budget before reaching the search tolerance.
    pub budget_exhausted: bool,
    pub evaluations: usize,
}

struct StepSearch<'a> {
    sim: Simulator,
    state: &'a NetworkState,
    spec: &'a CostSpec,
    law: PressureLaw,
    junction_id: &'a str,
    t_next: f64,
    u_prev: f64,
    cfl_number: f64,
    evaluations: usize,
    first_error: Option<Error>,
}

impl StepSearch<'_> {
    /// Next-step integrand at `u`; infeasible controls score `+∞`.
    fn integrand(&mut self, u: f64) -> (f64, Option<NetworkState>) {
        self.evaluations += 1;
        let out = self
            .sim
            .set_control(self.junction_id, Some(ControlSignal::Constant { value: u }))
            .and_then(|_| {
                let opts = RunOptions {
                    cfl_number: self.cfl_number,
                    horizon: self.t_next,
                    sample_interval: None,
                };
                self.sim.run(self.state.clone(), &opts, &mut |_| {})
            })
            .and_then(|traj| {
                let end = traj.last_state().clone();
                let s = spatial_tracking(&end, self.spec, &self.law)?;
                Ok((s + self.spec.tv_weight * (u - self.u_prev).abs(), end))
            });
        match out {
            Ok((v, end)) => (v, Some(end)),
            Err(e) => {
                self.first_error.get_or_insert(e);
                (f64::INFINITY, None)
            }
        }
    }
}

/// Chooses each control value by minimizing the tracking integral one
/// control interval ahead plus the weighted jump from the previous value.
pub fn instantaneous_control(
    sim: &Simulator,
    initial: &NetworkState,
    spec: &CostSpec,
    opts: &InstantaneousOptions,
    numerics: &SearchNumerics,
) -> Result<InstantaneousResult> {
    let law = cost_law(sim, spec)?;
    check_grid(opts.interval, numerics)?;
    let (lo, hi) = opts.bounds;
    if !(lo <= hi && lo.is_finite() && hi.is_finite()) || !(opts.initial_control >= lo && opts.initial_control <= hi) {
        return Err(Error::InvalidParameter(format!(
            "initial control {} and bounds [{lo}, {hi}] are inconsistent",
            opts.initial_control
        )));
    }
    if opts.budget < 3 {
        return Err(Error::InvalidParameter("search budget must be at least 3".into()));
    }
    let steps = (spec.horizon / opts.interval).round() as usize;
    if steps == 0 || (steps as f64 * opts.interval - spec.horizon).abs() > TIME_TOL * spec.horizon {
        return Err(Error::InvalidParameter(format!(
            "horizon {} is not a multiple of the control interval {}",
            spec.horizon, opts.interval
        )));
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let width_tol = opts.tolerance * (hi - lo);
    let mut state = initial.clone();
    let mut u_prev = opts.initial_control;
    let mut samples = Vec::with_capacity(steps);
    let mut exhausted = false;
    let mut evaluations = 0;
    for k in 0..steps {
        let t_next = if k + 1 == steps {
            spec.horizon
        } else {
            (k + 1) as f64 * opts.interval
        };
        let mut search = StepSearch {
            sim: sim.clone(),
            state: &state,
            spec,
            law,
            junction_id: &opts.junction_id,
            t_next,
            u_prev,
            cfl_number: numerics.cfl_number,
            evaluations: 0,
            first_error: None,
        };
        let (f_prev, s_prev) = search.integrand(u_prev);
        let mut best = (u_prev, f_prev, s_prev);
        let consider = |u: f64, f: f64, s: Option<NetworkState>, best: &mut (f64, f64, Option<NetworkState>)| {
            if f < best.1 {
                *best = (u, f, s);
            }
        };
        if hi > lo {
            let (mut a, mut b) = (lo, hi);
            let mut c = b - inv_phi * (b - a);
            let mut d = a + inv_phi * (b - a);
            let (mut fc, sc) = search.integrand(c);
            consider(c, fc, sc, &mut best);
            let (mut fd, sd) = search.integrand(d);
            consider(d, fd, sd, &mut best);
            while b - a > width_tol && search.evaluations < opts.budget {
                if fc <= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - inv_phi * (b - a);
                    let (f, s) = search.integrand(c);
                    fc = f;
                    consider(c, f, s, &mut best);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + inv_phi * (b - a);
                    let (f, s) = search.integrand(d);
                    fd = f;
                    consider(d, f, s, &mut best);
                }
            }
            exhausted |= b - a > width_tol;
        }
        evaluations += search.evaluations;
        let (u, _, next) = best;
        state = match next {
            Some(s) => s,
            None => {
                return Err(search
                    .first_error
                    .unwrap_or_else(|| Error::InvalidParameter("no feasible control".into())))
            }
        };
        samples.push(u);
        u_prev = u;
    }
    let schedule = ControlSchedule::new(opts.junction_id.clone(), opts.interval, samples, opts.bounds)?;
    let (trajectory, cost) = evaluate_schedule(sim, initial, spec, &schedule, numerics)?;
    Ok(InstantaneousResult {
        schedule,
        trajectory,
        cost,
        budget_exhausted: exhausted,
        evaluations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    /// Cost of each candidate, `None` where the simulation failed.
    pub costs: Vec<Option<CostBreakdown>>,
    /// Index of the cheapest feasible candidate, lowest index on ties.
    pub best: usize,
}

/// Simulates every candidate (concurrently) and returns the argmin of `J`.
pub fn grid_search(
    sim: &Simulator,
    initial: &NetworkState,
    spec: &CostSpec,
    candidates: &[ControlSchedule],
    numerics: &SearchNumerics,
) -> Result<GridSearchResult> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("grid search needs at least one candidate".into()));
    }
    cost_law(sim, spec)?;
    for c in candidates {
        c.validate()?;
    }
    let results: Vec<Result<CostBreakdown>> = candidates
        .par_iter()
        .map(|c| evaluate_schedule(sim, initial, spec, c, numerics).map(|(_, cost)| cost))
        .collect();
    let mut best: Option<(usize, f64)> = None;
    let mut first_error = None;
    let mut costs = Vec::with_capacity(results.len());
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(c) => {
                if best.is_none_or(|(_, b)| c.total < b) {
                    best = Some((k, c.total));
                }
                costs.push(Some(c));
            }
            Err(e) => {
                first_error.get_or_insert(e);
                costs.push(None);
            }
        }
    }
    match best {
        Some((k, _)) => Ok(GridSearchResult { costs, best: k }),
        None => Err(first_error.expect("non-empty candidate list")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fv_solver::{EdgeGrid, Sample};
    use crate::network::{Junction, KindSpec, Network, Pipe, PipeEnd};
    use std::collections::BTreeMap;

    fn schedule(samples: &[f64]) -> ControlSchedule {
        ControlSchedule::new("c", 0.1, samples.to_vec(), (-10.0, 10.0)).unwrap()
    }

    #[test]
    fn total_variation_examples() {
        assert_eq!(total_variation(&schedule(&[0.3; 5])), 0.0);
        assert_eq!(total_variation(&schedule(&[0.0, 1.0, 0.0])), 2.0);
        assert_eq!(total_variation(&schedule(&[0.0, 0.25, 0.5, 1.0])), 1.0);
    }

    #[test]
    fn schedule_rejects_out_of_bounds() {
        assert!(ControlSchedule::new("c", 0.1, vec![0.0, 2.0], (0.0, 1.0)).is_err());
        assert!(ControlSchedule::new("c", 0.0, vec![0.0], (0.0, 1.0)).is_err());
    }

    fn law() -> PressureLaw {
        PressureLaw::isentropic(1.0, 1.0).unwrap()
    }

    fn constant_trajectory(rho: f64, times: &[f64]) -> Trajectory {
        let cells = vec![crate::GasState::at_rest(rho).unwrap(); 10];
        Trajectory {
            samples: times
                .iter()
                .map(|&t| Sample {
                    state: NetworkState {
                        time: t,
                        grids: vec![EdgeGrid {
                            pipe_id: "p".into(),
                            dx: 0.1,
                            cells: cells.clone(),
                        }],
                        controller_memory: BTreeMap::new(),
                    },
                    junctions: vec![],
                })
                .collect(),
            steps: times.len(),
        }
    }

    fn spec(target: f64, region: (f64, f64), horizon: f64) -> CostSpec {
        CostSpec {
            tv_weight: 1.0,
            target_pressure: target,
            pipe: "p".into(),
            region,
            horizon,
        }
    }

    #[test]
    fn tracking_vanishes_on_target() {
        let traj = constant_trajectory(1.2, &[0.0, 0.5, 1.0]);
        assert_eq!(tracking_cost(&traj, &spec(1.2, (0.0, 1.0), 1.0), &law()).unwrap(), 0.0);
    }

    #[test]
    fn tracking_of_constant_offset_is_product() {
        let traj = constant_trajectory(1.25, &[0.0, 0.3, 0.6, 1.0, 1.5]);
        // the region clips cells 2 and 7
        let c = tracking_cost(&traj, &spec(1.0, (0.25, 0.75), 1.5), &law()).unwrap();
        assert!((c - 0.25 * 0.5 * 1.5).abs() < 1e-14, "{c}");
    }

    #[test]
    fn tracking_requires_full_horizon() {
        let traj = constant_trajectory(1.0, &[0.0, 0.5]);
        assert!(tracking_cost(&traj, &spec(1.0, (0.0, 1.0), 1.0), &law()).is_err());
    }

    fn two_pipe_compressor() -> Network {
        let law = PressureLaw::isentropic(1.0, 1.4).unwrap();
        let mut net = Network::new(0.0);
        net.pipes.push(Pipe::new("a", 1.0, 20, law));
        net.pipes.push(Pipe::new("b", 1.0, 20, law));
        net.junctions.push(Junction::new(
            "c",
            &[("a", PipeEnd::End), ("b", PipeEnd::Start)],
            KindSpec::new("compressor").with("gamma", 1.4),
        ));
        net.add_boundary("in", "a", PipeEnd::Start, KindSpec::new("wall"));
        net.add_boundary("out", "b", PipeEnd::End, KindSpec::new("wall"));
        net
    }

    fn numerics() -> SearchNumerics {
        SearchNumerics {
            cfl_number: 0.9,
            sample_interval: 0.05,
        }
    }

    #[test]
    fn grid_search_finds_equilibrium_control() {
        let sim = Simulator::new(&two_pipe_compressor()).unwrap();
        let init = sim.uniform_state(1.0, 0.0).unwrap();
        let spec = CostSpec {
            tv_weight: 0.1,
            target_pressure: 1.0,
            pipe: "b".into(),
            region: (0.0, 0.5),
            horizon: 0.4,
        };
        let cands: Vec<ControlSchedule> = [0.2, 0.1, 0.0, 0.05]
            .iter()
            .map(|&u| ControlSchedule::constant("c", 0.1, 4, u, (0.0, 1.0)).unwrap())
            .collect();
        let res = grid_search(&sim, &init, &spec, &cands, &numerics()).unwrap();
        assert_eq!(res.best, 2);
        let best = res.costs[2].unwrap();
        assert!(best.total.abs() < 1e-12);
        for c in res.costs.iter().flatten() {
            assert!(best.total <= c.total);
            assert_eq!(c.total, spec.tv_weight * c.tv + c.tracking);
        }
        let single = grid_search(&sim, &init, &spec, &cands[1..2], &numerics()).unwrap();
        assert_eq!(single.best, 0);
        assert_eq!(single.costs[0], res.costs[1]);
    }

    #[test]
    fn instantaneous_control_keeps_a_met_target() {
        let sim = Simulator::new(&two_pipe_compressor()).unwrap();
        let init = sim.uniform_state(1.0, 0.0).unwrap();
        let spec = CostSpec {
            tv_weight: 0.1,
            target_pressure: 1.0,
            pipe: "b".into(),
            region: (0.0, 0.5),
            horizon: 0.3,
        };
        let opts = InstantaneousOptions {
            junction_id: "c".into(),
            interval: 0.1,
            bounds: (0.0, 0.5),
            initial_control: 0.0,
            budget: 32,
            tolerance: 1e-4,
        };
        let res = instantaneous_control(&sim, &init, &spec, &opts, &numerics()).unwrap();
        assert_eq!(res.schedule.samples, vec![0.0; 3]);
        assert_eq!(res.cost.total, 0.0);
        assert!(!res.budget_exhausted);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let sim = Simulator::new(&two_pipe_compressor()).unwrap();
        let init = sim.uniform_state(1.0, 0.0).unwrap();
        let spec = spec(1.0, (0.0, 0.5), 0.3);
        let sched = ControlSchedule::constant("c", 0.07, 5, 0.0, (0.0, 1.0)).unwrap();
        assert!(evaluate_schedule(&sim, &init, &CostSpec { pipe: "b".into(), ..spec }, &sched, &numerics()).is_err());
    }
}
