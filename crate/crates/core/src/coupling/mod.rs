//! Nodal coupling conditions and the junction solvers that turn first-cell
//! averages into ghost traces.
//!
//! All states passed in and returned here are in vertex-outgoing orientation:
//! the vertex sits at `x = 0` of every adjacent pipe and `q > 0` carries gas
//! away from it.

mod conditions;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gas_model::{energy_pair, trace_curve, GasState, PressureLaw};
use crate::network::KindSpec;

pub use conditions::{
    rest_density_behind, solve_energy_dissipating, valve_ghost, Compressor, CompressorForm, EnergyDissipating,
    Pairwise, PairwiseRelation, Valve,
};

/// Number of edges a condition accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arity {
    Exactly(usize),
    AtLeast(usize),
}

impl Arity {
    pub fn accepts(self, n: usize) -> bool {
        match self {
            Arity::Exactly(k) => n == k,
            Arity::AtLeast(k) => n >= k,
        }
    }
}

impl fmt::Display for Arity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arity::Exactly(k) => write!(f, "exactly {k}"),
            Arity::AtLeast(k) => write!(f, "at least {k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Residual max-norm target, relative to [`residual_scale`].
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Relative step of the central-difference Jacobian.
    pub fd_step: f64,
    /// Smallest damping factor tried before giving up on a Newton direction.
    pub damping_floor: f64,
    /// Threshold on the column-normalized Jacobian determinant.
    pub singular_threshold: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-10,
            max_iterations: 50,
            fd_step: 1e-7,
            damping_floor: 2f64.powi(-20),
            singular_threshold: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JunctionSolve {
    /// Trace-curve parameters `σ*_j = ρ_ghost − ρ_cell`.
    pub sigmas: Vec<f64>,
    pub ghost_states: Vec<GasState>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Column-normalized solvability determinant at the solution (NaN when
    /// the condition cannot be differentiated there).
    pub det_diag: f64,
    /// Vertex rest density of the energy-dissipating condition.
    pub rho_star: Option<f64>,
}

impl JunctionSolve {
    fn new(cells: &[GasState], ghosts: Vec<GasState>, residual_norm: f64, iterations: usize) -> Self {
        JunctionSolve {
            sigmas: cells.iter().zip(&ghosts).map(|(c, g)| g.rho - c.rho).collect(),
            ghost_states: ghosts,
            residual_norm,
            iterations,
            det_diag: f64::NAN,
            rho_star: None,
        }
    }

    /// `Σ_j q_j` over the ghost traces.
    pub fn mass_balance(&self) -> f64 {
        self.ghost_states.iter().map(|g| g.q).sum()
    }
}

/// A nodal condition `Ψ(traces) = u(t)`.
pub trait CouplingCondition: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn arity(&self) -> Arity;

    fn check_arity(&self, n: usize) -> Result<()> {
        if self.arity().accepts(n) {
            Ok(())
        } else {
            Err(Error::ArityMismatch {
                kind: self.name().to_string(),
                expected: self.arity().to_string(),
                found: n,
            })
        }
    }

    /// `Ψ` without the control: component 0 is `Σ_j q_j`, component `j ≥ 1`
    /// relates edge `j` to edge 0.
    fn relations(&self, traces: &[GasState], law: &PressureLaw) -> Result<Vec<f64>>;

    /// Ghost traces for first-cell averages `cells`.
    fn solve(
        &self,
        cells: &[GasState],
        law: &PressureLaw,
        control: &[f64],
        opts: &SolverOptions,
    ) -> Result<JunctionSolve> {
        newton_solve(self, cells, law, control, opts)
    }
}

/// `Ψ(traces) − u`.
pub fn evaluate_psi<C: CouplingCondition + ?Sized>(
    cond: &C,
    traces: &[GasState],
    law: &PressureLaw,
    control: &[f64],
) -> Result<Vec<f64>> {
    cond.check_arity(traces.len())?;
    for s in traces {
        s.require_subsonic(law)?;
    }
    let mut r = cond.relations(traces, law)?;
    for (ri, ui) in r.iter_mut().zip(control) {
        *ri -= ui;
    }
    Ok(r)
}

/// `cond.solve` with arity checked up front.
pub fn solve_junction(
    cond: &dyn CouplingCondition,
    cells: &[GasState],
    law: &PressureLaw,
    control: &[f64],
    opts: &SolverOptions,
) -> Result<JunctionSolve> {
    cond.check_arity(cells.len())?;
    cond.solve(cells, law, control, opts)
}

/// Net energy flux `Σ_k Q(trace_k)` leaving the vertex; negative means the
/// vertex dissipates energy.
pub fn junction_entropy_flux(traces: &[GasState], law: &PressureLaw) -> Result<f64> {
    traces.iter().map(|s| Ok(energy_pair(s, law)?.1)).sum()
}

/// Magnitude used to make the junction tolerance unit-free:
/// `max(1, |q|, p, c², ρ c)` over the cells.
pub fn residual_scale(cells: &[GasState], law: &PressureLaw) -> Result<f64> {
    let mut scale: f64 = 1.0;
    for s in cells {
        let c = law.sound_speed(s.rho)?;
        scale = scale.max(s.q.abs()).max(law.pressure(s.rho)?).max(c * c).max(s.rho * c);
    }
    Ok(scale)
}

fn max_norm(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Determinant of `Ψ` differentiated along the 2-eigenvector `(1, λ₂)` of each
/// trace, divided by the product of column norms.
pub fn solvability_determinant<C: CouplingCondition + ?Sized>(
    cond: &C,
    traces: &[GasState],
    law: &PressureLaw,
    fd_step: f64,
) -> Result<f64> {
    let n = traces.len();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let (_, l2) = traces[j].eigenvalues(law)?;
        let h = fd_step * traces[j].rho;
        let mut plus = traces.to_vec();
        let mut minus = traces.to_vec();
        plus[j] = GasState::new(traces[j].rho + h, traces[j].q + h * l2)?;
        minus[j] = GasState::new(traces[j].rho - h, traces[j].q - h * l2)?;
        let (rp, rm) = (cond.relations(&plus, law)?, cond.relations(&minus, law)?);
        for i in 0..n {
            m[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    Ok(normalized_determinant(&m))
}

fn normalized_determinant(m: &DMatrix<f64>) -> f64 {
    let norms: f64 = m.column_iter().map(|c| c.norm()).product();
    if norms == 0.0 {
        0.0
    } else {
        m.determinant() / norms
    }
}

/// Damped Newton on the trace-curve parameters `σ_j`, ghost `j` being
/// `trace_curve(cells[j], σ_j)`.
pub fn newton_solve<C: CouplingCondition + ?Sized>(
    cond: &C,
    cells: &[GasState],
    law: &PressureLaw,
    control: &[f64],
    opts: &SolverOptions,
) -> Result<JunctionSolve> {
    let n = cells.len();
    cond.check_arity(n)?;
    for c in cells {
        c.require_subsonic(law)?;
    }
    let scale = residual_scale(cells, law)?;
    let tol = opts.tolerance * scale;
    let polish = 64.0 * f64::EPSILON * scale;

    let eval = |sigma: &[f64]| -> Result<(Vec<GasState>, Vec<f64>)> {
        let ghosts = cells
            .iter()
            .zip(sigma)
            .map(|(c, s)| trace_curve(c, *s, law))
            .collect::<Result<Vec<_>>>()?;
        let r = evaluate_psi(cond, &ghosts, law, control)?;
        Ok((ghosts, r))
    };

    let mut sigma = vec![0.0; n];
    let (mut ghosts, r) = eval(&sigma)?;
    let mut residual = DVector::from_vec(r);
    let mut norm = residual.amax();
    let mut iterations = 0;
    while norm > polish && iterations < opts.max_iterations {
        let mut jac = DMatrix::zeros(n, n);
        for k in 0..n {
            let h = opts.fd_step * cells[k].rho;
            let shifted = |d: f64| {
                let mut s = sigma.clone();
                s[k] += d;
                eval(&s).map(|(_, r)| DVector::from_vec(r))
            };
            let col = match (shifted(h), shifted(-h)) {
                (Ok(p), Ok(m)) => (p - m) / (2.0 * h),
                (Ok(p), Err(_)) => (p - &residual) / h,
                (Err(_), Ok(m)) => (&residual - m) / h,
                (Err(e), Err(_)) => return Err(e),
            };
            jac.set_column(k, &col);
        }
        let det = normalized_determinant(&jac);
        if !(det.abs() >= opts.singular_threshold) {
            return Err(Error::SingularJacobian { det });
        }
        let delta = jac
            .lu()
            .solve(&(-&residual))
            .ok_or(Error::SingularJacobian { det })?;
        iterations += 1;
        let mut t = 1.0;
        let mut accepted = None;
        while t >= opts.damping_floor {
            let trial: Vec<f64> = sigma.iter().zip(delta.iter()).map(|(s, d)| s + t * d).collect();
            if let Ok((g, r)) = eval(&trial) {
                if max_norm(&r) < norm {
                    accepted = Some((trial, g, r));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((s, g, r)) => {
                sigma = s;
                ghosts = g;
                residual = DVector::from_vec(r);
                norm = residual.amax();
            }
            None => break,
        }
    }
    if !(norm <= tol) {
        return Err(Error::NoConvergence {
            what: "junction Newton solve",
            iterations,
            residual: norm,
        });
    }
    let det_diag = solvability_determinant(cond, &ghosts, law, opts.fd_step).unwrap_or(f64::NAN);
    let mut out = JunctionSolve::new(cells, ghosts, norm, iterations);
    out.sigmas = sigma;
    out.det_diag = det_diag;
    Ok(out)
}

pub type CouplingFactory = dyn Fn(&KindSpec) -> Result<Arc<dyn CouplingCondition>> + Send + Sync;

/// Coupling conditions by kind name.
pub struct CouplingRegistry {
    factories: BTreeMap<String, Box<CouplingFactory>>,
}

impl fmt::Debug for CouplingRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.factories.keys()).finish()
    }
}

impl Default for CouplingRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl CouplingRegistry {
    pub fn empty() -> Self {
        CouplingRegistry {
            factories: BTreeMap::new(),
        }
    }

    /// `equal_pressure`, `dynamic_pressure`, `bernoulli`, `bernoulli_printed`,
    /// `energy_dissipating`, `compressor`, `compressor_conventional`, `valve`.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        for relation in [
            PairwiseRelation::EqualPressure,
            PairwiseRelation::DynamicPressure,
            PairwiseRelation::Bernoulli,
            PairwiseRelation::BernoulliPrinted,
        ] {
            reg.register(relation.name(), move |spec| {
                spec.expect_only(&[])?;
                Ok(Arc::new(Pairwise::new(relation)))
            });
        }
        reg.register("energy_dissipating", |spec| {
            spec.expect_only(&[])?;
            Ok(Arc::new(EnergyDissipating))
        });
        reg.register("compressor", |spec| {
            spec.expect_only(&["gamma"])?;
            Ok(Arc::new(Compressor::new(spec.require("gamma")?, CompressorForm::Literal)?))
        });
        reg.register("compressor_conventional", |spec| {
            spec.expect_only(&["gamma"])?;
            Ok(Arc::new(Compressor::new(spec.require("gamma")?, CompressorForm::Conventional)?))
        });
        reg.register("valve", |spec| {
            spec.expect_only(&["q_star"])?;
            Ok(Arc::new(Valve::new(spec.require("q_star")?)?))
        });
        reg
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&KindSpec) -> Result<Arc<dyn CouplingCondition>> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn build(&self, spec: &KindSpec) -> Result<Arc<dyn CouplingCondition>> {
        let factory = self.factories.get(&spec.kind).ok_or_else(|| Error::UnknownKind {
            what: "coupling",
            name: spec.kind.clone(),
        })?;
        factory(spec)
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}
