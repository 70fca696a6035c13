use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gas_model::waves::SubsonicTrace;
use crate::gas_model::{trace_curve, GasState, PressureLaw};
use crate::network::{KindSpec, PipeEnd};

/// Where and when a boundary law is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryContext {
    pub t: f64,
    pub dt: f64,
    /// End of the pipe, in the pipe's own (user-facing) coordinate, at which
    /// the node sits. Laws phrased in terms of `v` or `q` use it to orient.
    pub end: PipeEnd,
}

impl BoundaryContext {
    /// `+1` when the pipe coordinate points into the pipe at this node.
    pub fn sign(&self) -> f64 {
        match self.end {
            PipeEnd::Start => 1.0,
            PipeEnd::End => -1.0,
        }
    }
}

/// An external boundary condition imposing one scalar relation on the trace.
///
/// `cell` and the returned ghost are in the local frame: the node at `x = 0`
/// and `q > 0` flowing into the pipe. The ghost lies on the trace curve
/// through `cell`, so exactly one wave enters the pipe.
pub trait BoundaryLaw: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Controller state before the first step, if the law has any.
    fn initial_memory(&self, _ctx: &BoundaryContext, _cell: &GasState, _law: &PressureLaw) -> Result<Option<f64>> {
        Ok(None)
    }

    /// Ghost trace and the controller state after this step.
    fn ghost(
        &self,
        ctx: &BoundaryContext,
        cell: &GasState,
        law: &PressureLaw,
        memory: Option<f64>,
    ) -> Result<(GasState, Option<f64>)>;
}

/// Ghost for a node at `end` of a pipe stored in its own coordinate, with
/// `cell` the adjacent cell average as stored. Mirrors in and out of the
/// local frame at `x = L`.
pub fn feedback_ghost(
    bl: &dyn BoundaryLaw,
    ctx: &BoundaryContext,
    stored_end: PipeEnd,
    cell: &GasState,
    law: &PressureLaw,
    memory: Option<f64>,
) -> Result<(GasState, Option<f64>)> {
    match stored_end {
        PipeEnd::Start => bl.ghost(ctx, cell, law, memory),
        PipeEnd::End => {
            let (g, m) = bl.ghost(ctx, &cell.mirrored(), law, memory)?;
            Ok((g.mirrored(), m))
        }
    }
}

/// Closed end: `q = 0`.
#[derive(Debug, Clone, Copy)]
pub struct Wall;

impl BoundaryLaw for Wall {
    fn name(&self) -> &str {
        "wall"
    }

    fn ghost(&self, _: &BoundaryContext, cell: &GasState, law: &PressureLaw, m: Option<f64>) -> Result<(GasState, Option<f64>)> {
        Ok((SubsonicTrace::new(cell, law)?.with_flux("wall trace", 0.0)?, m))
    }
}

/// Prescribed mass flux `q_in` entering the pipe through the node.
#[derive(Debug, Clone, Copy)]
pub struct PrescribedInflow {
    pub q_in: f64,
}

impl BoundaryLaw for PrescribedInflow {
    fn name(&self) -> &str {
        "prescribed_inflow"
    }

    fn ghost(&self, _: &BoundaryContext, cell: &GasState, law: &PressureLaw, m: Option<f64>) -> Result<(GasState, Option<f64>)> {
        Ok((SubsonicTrace::new(cell, law)?.with_flux("inflow trace", self.q_in)?, m))
    }
}

/// Prescribed pressure.
#[derive(Debug, Clone, Copy)]
pub struct PrescribedPressure {
    pub p: f64,
}

impl BoundaryLaw for PrescribedPressure {
    fn name(&self) -> &str {
        "pressure"
    }

    fn ghost(&self, _: &BoundaryContext, cell: &GasState, law: &PressureLaw, m: Option<f64>) -> Result<(GasState, Option<f64>)> {
        let rho = law.density_for_pressure(self.p)?;
        let g = trace_curve(cell, rho - cell.rho, law)?;
        g.require_subsonic(law)?;
        Ok((g, m))
    }
}

/// `v − v_ref = k (ρ − ρ_ref)` in the pipe coordinate; `v = k ρ` with the
/// references at zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct Proportional {
    pub k: f64,
    pub rho_ref: f64,
    pub v_ref: f64,
}

impl Proportional {
    pub fn new(k: f64) -> Self {
        Proportional {
            k,
            ..Default::default()
        }
    }

    /// Feedback on the deviation from the target trace `(ρ*, v*)`.
    pub fn around(k: f64, rho_ref: f64, v_ref: f64) -> Self {
        Proportional { k, rho_ref, v_ref }
    }
}

impl BoundaryLaw for Proportional {
    fn name(&self) -> &str {
        "proportional_physical"
    }

    fn ghost(&self, ctx: &BoundaryContext, cell: &GasState, law: &PressureLaw, m: Option<f64>) -> Result<(GasState, Option<f64>)> {
        let s = ctx.sign();
        let g = SubsonicTrace::new(cell, law)?.solve("proportional feedback trace", |g| {
            s * g.velocity() - self.v_ref - self.k * (g.rho - self.rho_ref)
        })?;
        Ok((g, m))
    }
}

/// `q = κ_L((1 + k_L) ρ − Z)` with `Z' = α_L(ρ* − ρ)`, `q` in the pipe
/// coordinate. The integrator advances by forward Euler with the trace density.
#[derive(Debug, Clone, Copy)]
pub struct PiFlow {
    pub kappa_l: f64,
    pub alpha_l: f64,
    pub k_l: f64,
    pub rho_target: f64,
    pub q_target: f64,
}

impl PiFlow {
    fn flux_of(&self, rho: f64, z: f64) -> f64 {
        self.kappa_l * ((1.0 + self.k_l) * rho - z)
    }
}

impl BoundaryLaw for PiFlow {
    fn name(&self) -> &str {
        "pi_flow"
    }

    /// Bumpless start: the law returns the target flux at the initial boundary density.
    fn initial_memory(&self, _: &BoundaryContext, cell: &GasState, _: &PressureLaw) -> Result<Option<f64>> {
        Ok(Some((1.0 + self.k_l) * cell.rho - self.q_target / self.kappa_l))
    }

    fn ghost(&self, ctx: &BoundaryContext, cell: &GasState, law: &PressureLaw, m: Option<f64>) -> Result<(GasState, Option<f64>)> {
        let z = match m {
            Some(z) => z,
            None => self.initial_memory(ctx, cell, law)?.unwrap_or(0.0),
        };
        let s = ctx.sign();
        let g = SubsonicTrace::new(cell, law)?.solve("PI feedback trace", |g| s * g.q - self.flux_of(g.rho, z))?;
        let z_next = z + ctx.dt * self.alpha_l * (self.rho_target - g.rho);
        Ok((g, Some(z_next)))
    }
}

pub type BoundaryFactory = dyn Fn(&KindSpec) -> Result<Arc<dyn BoundaryLaw>> + Send + Sync;

/// Boundary laws by kind name.
pub struct BoundaryRegistry {
    factories: BTreeMap<String, Box<BoundaryFactory>>,
}

impl fmt::Debug for BoundaryRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.factories.keys()).finish()
    }
}

impl Default for BoundaryRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

fn positive(spec: &KindSpec, key: &str) -> Result<f64> {
    let v = spec.require(key)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("`{}`: `{key}` must be > 0, got {v}", spec.kind)))
    }
}

impl BoundaryRegistry {
    pub fn empty() -> Self {
        BoundaryRegistry {
            factories: BTreeMap::new(),
        }
    }

    /// `wall`, `prescribed_inflow`, `pressure`, `proportional_physical`, `pi_flow`.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("wall", |spec| {
            spec.expect_only(&[])?;
            Ok(Arc::new(Wall))
        });
        reg.register("prescribed_inflow", |spec| {
            spec.expect_only(&["q"])?;
            Ok(Arc::new(PrescribedInflow { q_in: spec.require("q")? }))
        });
        reg.register("pressure", |spec| {
            spec.expect_only(&["p"])?;
            Ok(Arc::new(PrescribedPressure { p: positive(spec, "p")? }))
        });
        reg.register("proportional_physical", |spec| {
            spec.expect_only(&["k", "rho_ref", "v_ref"])?;
            let optional = |key: &str| match spec.param(key) {
                Some(_) => spec.require(key),
                None => Ok(0.0),
            };
            Ok(Arc::new(Proportional::around(spec.require("k")?, optional("rho_ref")?, optional("v_ref")?)))
        });
        reg.register("pi_flow", |spec| {
            spec.expect_only(&["kappa_l", "alpha_l", "k_l", "rho_target", "q_target"])?;
            Ok(Arc::new(PiFlow {
                kappa_l: positive(spec, "kappa_l")?,
                alpha_l: spec.require("alpha_l")?,
                k_l: spec.require("k_l")?,
                rho_target: positive(spec, "rho_target")?,
                q_target: spec.require("q_target")?,
            }))
        });
        reg
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&KindSpec) -> Result<Arc<dyn BoundaryLaw>> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn build(&self, spec: &KindSpec) -> Result<Arc<dyn BoundaryLaw>> {
        let factory = self.factories.get(&spec.kind).ok_or_else(|| Error::UnknownKind {
            what: "boundary law",
            name: spec.kind.clone(),
        })?;
        factory(spec)
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn law() -> PressureLaw {
        PressureLaw::isentropic(1.0, 1.4).unwrap()
    }

    fn ctx(end: PipeEnd) -> BoundaryContext {
        BoundaryContext { t: 0.0, dt: 0.01, end }
    }

    #[test]
    fn proportional_fixed_point() {
        let law = law();
        // v = kρ already holds: ρ = 2, q = 0.4, v = 0.2, k = 0.1
        let cell = GasState::new(2.0, 0.4).unwrap();
        let (g, _) = Proportional::new(0.1).ghost(&ctx(PipeEnd::Start), &cell, &law, None).unwrap();
        assert_eq!(g, cell);
    }

    #[test]
    fn deviation_law_holds_the_reference_trace() {
        let law = law();
        let cell = GasState::new(1.2, 0.36).unwrap();
        let bl = Proportional::around(-0.8, 1.2, 0.3);
        let (g, _) = bl.ghost(&ctx(PipeEnd::Start), &cell, &law, None).unwrap();
        assert_eq!(g, cell);
        let (g, _) = bl.ghost(&ctx(PipeEnd::Start), &GasState::new(1.3, 0.39).unwrap(), &law, None).unwrap();
        assert!((g.velocity() - 0.3 + 0.8 * (g.rho - 1.2)).abs() < 1e-12);
    }

    #[test]
    fn zero_gain_is_a_wall() {
        let law = law();
        let cell = GasState::new(1.0, 0.3).unwrap();
        let (g, _) = Proportional::new(0.0).ghost(&ctx(PipeEnd::Start), &cell, &law, None).unwrap();
        assert!(g.q.abs() < 1e-14);
        let (w, _) = Wall.ghost(&ctx(PipeEnd::Start), &cell, &law, None).unwrap();
        assert_relative_eq!(g.rho, w.rho, max_relative = 1e-12);
    }

    #[test]
    fn mirrored_end_uses_pipe_coordinate() {
        let law = law();
        // flow along the pipe (q > 0) at x = L with v = 0.25 ρ already satisfied
        let cell = GasState::new(2.0, 1.0).unwrap();
        let bl = Proportional::new(0.25);
        let (g, _) = feedback_ghost(&bl, &ctx(PipeEnd::End), PipeEnd::End, &cell, &law, None).unwrap();
        assert_eq!(g, cell);
    }

    #[test]
    fn pi_at_equilibrium_keeps_integrator() {
        let law = law();
        let cell = GasState::new(1.5, -0.3).unwrap();
        let pi = PiFlow {
            kappa_l: 0.7,
            alpha_l: 2.0,
            k_l: 0.4,
            rho_target: 1.5,
            q_target: 0.3,
        };
        let c = ctx(PipeEnd::End);
        let z0 = pi.initial_memory(&c, &cell, &law).unwrap();
        let (g, z1) = pi.ghost(&c, &cell, &law, z0).unwrap();
        assert_eq!(g, cell);
        assert_eq!(z1, z0);
        assert_relative_eq!(pi.flux_of(g.rho, z1.unwrap()), 0.3, max_relative = 1e-14);
    }

    #[test]
    fn inflow_and_pressure_hit_their_data() {
        let law = law();
        let cell = GasState::new(1.0, 0.1).unwrap();
        let (g, _) = PrescribedInflow { q_in: 0.2 }.ghost(&ctx(PipeEnd::Start), &cell, &law, None).unwrap();
        assert_relative_eq!(g.q, 0.2, max_relative = 1e-12);
        let (g, _) = PrescribedPressure { p: 1.1 }.ghost(&ctx(PipeEnd::Start), &cell, &law, None).unwrap();
        assert_relative_eq!(law.pressure(g.rho).unwrap(), 1.1, max_relative = 1e-12);
    }

    #[test]
    fn registry_validates() {
        let reg = BoundaryRegistry::with_builtins();
        assert!(reg.build(&KindSpec::new("wall")).is_ok());
        assert!(reg.build(&KindSpec::new("pressure").with("p", -1.0)).is_err());
        assert!(reg.build(&KindSpec::new("wall").with("p", 1.0)).is_err());
        assert!(matches!(reg.build(&KindSpec::new("nope")), Err(Error::UnknownKind { .. })));
    }
}
