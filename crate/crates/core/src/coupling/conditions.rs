use std::cell::Cell;

use super::{evaluate_psi, max_norm, residual_scale, solvability_determinant, Arity, CouplingCondition, JunctionSolve, SolverOptions};
use crate::error::{Error, Result};
use crate::gas_model::waves::{phi, SubsonicTrace};
use crate::gas_model::{solve_riemann, GasState, PressureLaw};
use crate::numerics;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairwiseRelation {
    /// `p(ρ_j) = p(ρ_1)`
    EqualPressure,
    /// `p(ρ_j) + q_j²/ρ_j = p(ρ_1) + q_1²/ρ_1`
    DynamicPressure,
    /// `½v_j² + h(ρ_j) = ½v_1² + h(ρ_1)` with the enthalpy `h' = p'/ρ`.
    Bernoulli,
    /// `½v_j² + p'(ρ_j) = ½v_1² + p'(ρ_1)`, the un-integrated reading.
    BernoulliPrinted,
}

impl PairwiseRelation {
    pub fn name(self) -> &'static str {
        match self {
            PairwiseRelation::EqualPressure => "equal_pressure",
            PairwiseRelation::DynamicPressure => "dynamic_pressure",
            PairwiseRelation::Bernoulli => "bernoulli",
            PairwiseRelation::BernoulliPrinted => "bernoulli_printed",
        }
    }

    pub fn value(self, s: &GasState, law: &PressureLaw) -> Result<f64> {
        let v = s.velocity();
        Ok(match self {
            PairwiseRelation::EqualPressure => law.pressure(s.rho)?,
            PairwiseRelation::DynamicPressure => law.pressure(s.rho)? + s.q * v,
            PairwiseRelation::Bernoulli => 0.5 * v * v + law.enthalpy(s.rho)?,
            PairwiseRelation::BernoulliPrinted => 0.5 * v * v + law.pressure_derivative(s.rho)?,
        })
    }
}

/// Mass conservation plus equality of one scalar quantity across all edges.
#[derive(Debug, Clone, Copy)]
pub struct Pairwise {
    relation: PairwiseRelation,
}

impl Pairwise {
    pub fn new(relation: PairwiseRelation) -> Self {
        Pairwise { relation }
    }
}

fn with_mass(traces: &[GasState], rest: impl Iterator<Item = f64>) -> Vec<f64> {
    std::iter::once(traces.iter().map(|s| s.q).sum()).chain(rest).collect()
}

impl CouplingCondition for Pairwise {
    fn name(&self) -> &str {
        self.relation.name()
    }

    fn arity(&self) -> Arity {
        Arity::AtLeast(2)
    }

    fn relations(&self, traces: &[GasState], law: &PressureLaw) -> Result<Vec<f64>> {
        let values = traces
            .iter()
            .map(|s| self.relation.value(s, law))
            .collect::<Result<Vec<_>>>()?;
        Ok(with_mass(traces, values[1..].iter().map(|v| v - values[0])))
    }
}

/// Density of the rest state `(ρ*, 0)` from which `trace` is reached by a
/// single 1-wave, i.e. `v = −φ(ρ; ρ*)`.
pub fn rest_density_behind(trace: &GasState, law: &PressureLaw) -> Result<f64> {
    if trace.q == 0.0 {
        return Ok(trace.rho);
    }
    let v = trace.velocity();
    // decreasing in ρ*
    let g = |rs: f64| -> Result<f64> { Ok(v + phi(law, trace.rho, rs)?) };
    let (mut a, mut b) = (trace.rho, trace.rho);
    let up = v > 0.0;
    for _ in 0..200 {
        if up {
            b *= 2.0;
            if g(b)? < 0.0 {
                return numerics::brent("vertex rest density", g, a, b, 0.0, 200);
            }
            a = b;
        } else {
            a *= 0.5;
            if g(a)? > 0.0 {
                return numerics::brent("vertex rest density", g, a, b, 0.0, 200);
            }
            b = a;
        }
    }
    Err(Error::BracketFailure {
        what: "vertex rest density",
        lo: a,
        hi: b,
    })
}

/// The vertex holds gas at rest with an unknown density `ρ*`; each edge trace
/// is the `ξ = 0+` value of the Riemann problem between `(ρ*, 0)` and the
/// cell state, and `ρ*` is fixed by mass conservation.
#[derive(Debug, Clone, Copy)]
pub struct EnergyDissipating;

/// Vertex density `ρ*` and traces of the energy-dissipating condition.
pub fn solve_energy_dissipating(states: &[GasState], law: &PressureLaw) -> Result<(f64, Vec<GasState>)> {
    law.isentropic_parameters("energy-dissipating coupling")?;
    if states.is_empty() {
        return Err(Error::InvalidParameter("junction without edges".into()));
    }
    let traces_for = |rs: f64| -> Result<Vec<GasState>> {
        let vertex = GasState::at_rest(rs)?;
        states
            .iter()
            .map(|s| Ok(solve_riemann(&vertex, s, law)?.sample(0.0)))
            .collect()
    };
    let total = |rs: f64| -> Result<f64> { Ok(traces_for(rs)?.iter().map(|t| t.q).sum()) };
    for s in states.iter().filter(|s| s.q == 0.0) {
        if total(s.rho)? == 0.0 {
            return Ok((s.rho, traces_for(s.rho)?));
        }
    }
    let rmin = states.iter().map(|s| s.rho).fold(f64::INFINITY, f64::min);
    let rmax = states.iter().map(|s| s.rho).fold(0.0, f64::max);
    let (mut lo, mut hi) = (rmin / 8.0, rmax * 8.0);
    let bracket_err = |lo, hi| Error::BracketFailure {
        what: "energy-dissipating vertex density",
        lo,
        hi,
    };
    let mut expansions = 0;
    loop {
        let (f_lo, f_hi) = match (total(lo), total(hi)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => return Err(bracket_err(lo, hi)),
        };
        if f_lo <= 0.0 && f_hi >= 0.0 {
            break;
        }
        if expansions == 10 {
            return Err(bracket_err(lo, hi));
        }
        if f_lo > 0.0 {
            lo *= 0.5;
        }
        if f_hi < 0.0 {
            hi *= 2.0;
        }
        expansions += 1;
    }
    let rs = numerics::brent("energy-dissipating vertex density", total, lo, hi, 0.0, 200)?;
    Ok((rs, traces_for(rs)?))
}

impl CouplingCondition for EnergyDissipating {
    fn name(&self) -> &str {
        "energy_dissipating"
    }

    fn arity(&self) -> Arity {
        Arity::AtLeast(2)
    }

    /// `(Σq, ρ*_j − ρ*_1)` with `ρ*_j` the rest density behind trace `j`.
    fn relations(&self, traces: &[GasState], law: &PressureLaw) -> Result<Vec<f64>> {
        let rs = traces
            .iter()
            .map(|s| rest_density_behind(s, law))
            .collect::<Result<Vec<_>>>()?;
        Ok(with_mass(traces, rs[1..].iter().map(|r| r - rs[0])))
    }

    fn solve(
        &self,
        cells: &[GasState],
        law: &PressureLaw,
        _control: &[f64],
        opts: &SolverOptions,
    ) -> Result<JunctionSolve> {
        self.check_arity(cells.len())?;
        let (rs, traces) = solve_energy_dissipating(cells, law)?;
        let balance = traces.iter().map(|t| t.q).sum::<f64>().abs();
        let tol = opts.tolerance * residual_scale(cells, law)?;
        if !(balance <= tol) {
            return Err(Error::NoConvergence {
                what: "energy-dissipating vertex density",
                iterations: 0,
                residual: balance,
            });
        }
        let det = solvability_determinant(self, &traces, law, opts.fd_step).unwrap_or(f64::NAN);
        let mut out = JunctionSolve::new(cells, traces, balance, 0);
        out.det_diag = det;
        out.rho_star = Some(rs);
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompressorForm {
    /// `q₂ (p₂/p₁ − 1)^e`
    Literal,
    /// `q₂ ((p₂/p₁)^e − 1)`
    Conventional,
}

/// Two-edge compressor: edge 1 is the inlet, edge 2 the outlet, and the
/// control's second component is the supplied power `Π(t) ≥ 0`.
#[derive(Debug, Clone, Copy)]
pub struct Compressor {
    gamma: f64,
    form: CompressorForm,
}

/// Pressure ratios this close to one count as one.
const RATIO_ROUNDOFF: f64 = 1e-12;

impl Compressor {
    pub fn new(gamma: f64, form: CompressorForm) -> Result<Self> {
        if !(gamma > 1.0 && gamma < 3.0) {
            return Err(Error::InvalidParameter(format!(
                "compressor gamma must lie in (1, 3), got {gamma}"
            )));
        }
        Ok(Compressor { gamma, form })
    }

    pub fn exponent(&self) -> f64 {
        (self.gamma - 1.0) / self.gamma
    }

    /// The factor multiplying `q₂` for pressure ratio `r = p₂/p₁`.
    pub fn ratio_factor(&self, ratio: f64) -> Result<f64> {
        let e = self.exponent();
        match self.form {
            CompressorForm::Literal => {
                let base = ratio - 1.0;
                if base.abs() <= RATIO_ROUNDOFF {
                    Ok(0.0)
                } else if base < 0.0 {
                    Err(Error::PressureRatioBelowOne { ratio })
                } else {
                    Ok(base.powf(e))
                }
            }
            CompressorForm::Conventional => Ok(ratio.powf(e) - 1.0),
        }
    }
}

impl CouplingCondition for Compressor {
    fn name(&self) -> &str {
        match self.form {
            CompressorForm::Literal => "compressor",
            CompressorForm::Conventional => "compressor_conventional",
        }
    }

    fn arity(&self) -> Arity {
        Arity::Exactly(2)
    }

    fn relations(&self, traces: &[GasState], law: &PressureLaw) -> Result<Vec<f64>> {
        let ratio = law.pressure(traces[1].rho)? / law.pressure(traces[0].rho)?;
        Ok(vec![traces[0].q + traces[1].q, traces[1].q * self.ratio_factor(ratio)?])
    }

    /// Solved on the throughput `Q` (inlet trace carries `−Q`, outlet `+Q`).
    /// With `Π = 0` the compressor is a pass-through (equal pressures); with
    /// `Π > 0` the root with `Q ≥ 0` and `p₂ ≥ p₁` is taken, where the
    /// relation is increasing in `Q`.
    fn solve(
        &self,
        cells: &[GasState],
        law: &PressureLaw,
        control: &[f64],
        opts: &SolverOptions,
    ) -> Result<JunctionSolve> {
        self.check_arity(cells.len())?;
        let power = control.get(1).copied().unwrap_or(0.0);
        if !(power >= 0.0 && power.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "compressor power must be >= 0, got {power}"
            )));
        }
        if matches!(evaluate_psi(self, cells, law, control), Ok(r) if max_norm(&r) == 0.0) {
            return Ok(JunctionSolve::new(cells, cells.to_vec(), 0.0, 0));
        }
        let inlet = SubsonicTrace::new(&cells[0], law)?;
        let outlet = SubsonicTrace::new(&cells[1], law)?;
        let (a_lo, a_hi) = inlet.flux_range()?;
        let (b_lo, b_hi) = outlet.flux_range()?;
        let (q_lo, q_hi) = (b_lo.max(-a_hi), b_hi.min(-a_lo));
        if !(q_lo < q_hi) {
            return Err(Error::BracketFailure {
                what: "compressor throughput",
                lo: q_lo,
                hi: q_hi,
            });
        }
        let evals = Cell::new(0usize);
        let ghosts = |q: f64| -> Result<(GasState, GasState)> {
            evals.set(evals.get() + 1);
            Ok((
                inlet.with_flux("compressor inlet trace", -q)?,
                outlet.with_flux("compressor outlet trace", q)?,
            ))
        };
        let pressure_gap = |q: f64| -> Result<f64> {
            let (g0, g1) = ghosts(q)?;
            Ok(law.pressure(g1.rho)? - law.pressure(g0.rho)?)
        };
        let q = if power == 0.0 {
            numerics::brent("idle compressor throughput", pressure_gap, q_lo, q_hi, 0.0, 200)?
        } else {
            let mut start = q_lo.max(0.0);
            if !(start < q_hi) {
                return Err(Error::BracketFailure {
                    what: "compressor throughput",
                    lo: start,
                    hi: q_hi,
                });
            }
            if pressure_gap(start)? < 0.0 {
                start = numerics::brent("compressor throughput", pressure_gap, start, q_hi, 0.0, 200)?;
            }
            let relation = |q: f64| -> Result<f64> {
                let (g0, g1) = ghosts(q)?;
                let ratio = (law.pressure(g1.rho)? / law.pressure(g0.rho)?).max(1.0);
                Ok(q * self.ratio_factor(ratio)? - power)
            };
            numerics::brent("compressor throughput", relation, start, q_hi, 0.0, 200)?
        };
        let (g0, g1) = ghosts(q)?;
        let traces = vec![g0, g1];
        let norm = max_norm(&evaluate_psi(self, &traces, law, control)?);
        let tol = opts.tolerance * residual_scale(cells, law)?;
        if !(norm <= tol) {
            return Err(Error::NoConvergence {
                what: "compressor throughput",
                iterations: evals.get(),
                residual: norm,
            });
        }
        let det = solvability_determinant(self, &traces, law, opts.fd_step).unwrap_or(f64::NAN);
        let mut out = JunctionSolve::new(cells, traces, norm, evals.get());
        out.det_diag = det;
        Ok(out)
    }
}

/// One-way valve from edge 1 to edge 2 holding the throughput at
/// `q* + u₂(t)` when both sides can carry it, closed otherwise.
#[derive(Debug, Clone, Copy)]
pub struct Valve {
    q_star: f64,
}

impl Valve {
    pub fn new(q_star: f64) -> Result<Self> {
        if !q_star.is_finite() {
            return Err(Error::InvalidParameter(format!("valve q* must be finite, got {q_star}")));
        }
        Ok(Valve { q_star })
    }

    pub fn q_star(&self) -> f64 {
        self.q_star
    }
}

impl CouplingCondition for Valve {
    fn name(&self) -> &str {
        "valve"
    }

    fn arity(&self) -> Arity {
        Arity::Exactly(2)
    }

    fn relations(&self, traces: &[GasState], _law: &PressureLaw) -> Result<Vec<f64>> {
        Ok(vec![traces[0].q + traces[1].q, traces[1].q - self.q_star])
    }

    fn solve(
        &self,
        cells: &[GasState],
        law: &PressureLaw,
        control: &[f64],
        _opts: &SolverOptions,
    ) -> Result<JunctionSolve> {
        self.check_arity(cells.len())?;
        let target = self.q_star + control.get(1).copied().unwrap_or(0.0);
        let upstream = SubsonicTrace::new(&cells[0], law)?;
        let downstream = SubsonicTrace::new(&cells[1], law)?;
        let open = if target >= 0.0 {
            upstream
                .with_flux("valve upstream trace", -target)
                .and_then(|a| Ok((a, downstream.with_flux("valve downstream trace", target)?)))
                .ok()
        } else {
            None
        };
        let (traces, effective) = match open {
            Some((a, b)) => (vec![a, b], target),
            None => (
                vec![
                    upstream.with_flux("closed valve trace", 0.0)?,
                    downstream.with_flux("closed valve trace", 0.0)?,
                ],
                0.0,
            ),
        };
        let norm = (traces[0].q + traces[1].q).abs().max((traces[1].q - effective).abs());
        let mut out = JunctionSolve::new(cells, traces, norm, 0);
        out.det_diag = solvability_determinant(self, &out.ghost_states, law, 1e-7).unwrap_or(f64::NAN);
        Ok(out)
    }
}

/// Trace at a single valve end: the state on the trace curve through
/// `cell_state` carrying `q_star`, or the closed (`q = 0`) state when no
/// subsonic state carries it or `q_star < 0`.
pub fn valve_ghost(cell_state: &GasState, q_star: f64, law: &PressureLaw) -> Result<GasState> {
    let curve = SubsonicTrace::new(cell_state, law)?;
    if q_star >= 0.0 {
        if let Ok(s) = curve.with_flux("valve trace", q_star) {
            return Ok(s);
        }
    }
    curve.with_flux("closed valve trace", 0.0)
}
