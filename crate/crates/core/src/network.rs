//! Pipes, junctions and boundary nodes, with structural validation and
//! orientation normalization.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::coupling::CouplingRegistry;
use crate::error::{Error, Result};
use crate::gas_model::PressureLaw;
use crate::stabilization::BoundaryRegistry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipeEnd {
    /// `x = 0`
    Start,
    /// `x = L`
    End,
}

impl PipeEnd {
    pub fn opposite(self) -> Self {
        match self {
            PipeEnd::Start => PipeEnd::End,
            PipeEnd::End => PipeEnd::Start,
        }
    }
}

impl fmt::Display for PipeEnd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PipeEnd::Start => "start",
            PipeEnd::End => "end",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    #[default]
    Forward,
    Reversed,
}

impl Orientation {
    fn flipped(self) -> Self {
        match self {
            Orientation::Forward => Orientation::Reversed,
            Orientation::Reversed => Orientation::Forward,
        }
    }
}

/// A strategy selected by name plus its numeric parameters, resolved
/// through a registry when a simulation is assembled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSpec {
    pub kind: String,
    #[serde(flatten)]
    pub params: BTreeMap<String, f64>,
}

impl KindSpec {
    pub fn new(kind: impl Into<String>) -> Self {
        KindSpec {
            kind: kind.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }

    pub fn require(&self, key: &str) -> Result<f64> {
        let v = self.param(key).ok_or_else(|| {
            Error::InvalidParameter(format!("`{}` requires parameter `{key}`", self.kind))
        })?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::InvalidParameter(format!("`{}`: `{key}` must be finite", self.kind)))
        }
    }

    /// Rejects parameters outside `allowed`.
    pub fn expect_only(&self, allowed: &[&str]) -> Result<()> {
        match self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::InvalidParameter(format!(
                "`{}` has no parameter `{k}`",
                self.kind
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipe {
    pub id: String,
    pub length: f64,
    pub n_cells: usize,
    pub friction: f64,
    /// Slope angle per cell (radians).
    pub slope: Vec<f64>,
    pub law: PressureLaw,
    pub orientation: Orientation,
}

impl Pipe {
    pub fn new(id: impl Into<String>, length: f64, n_cells: usize, law: PressureLaw) -> Self {
        Pipe {
            id: id.into(),
            length,
            n_cells,
            friction: 0.0,
            slope: vec![0.0; n_cells],
            law,
            orientation: Orientation::Forward,
        }
    }

    pub fn with_friction(mut self, friction: f64) -> Self {
        self.friction = friction;
        self
    }

    pub fn with_uniform_slope(mut self, angle: f64) -> Self {
        self.slope = vec![angle; self.n_cells];
        self
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_cells as f64
    }

    pub fn cell_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx()
    }

    /// The same pipe parameterized by `x → L − x`: cells in reverse order and
    /// the slope negated (uphill becomes downhill).
    pub fn reversed(&self) -> Pipe {
        Pipe {
            slope: self.slope.iter().rev().map(|a| -a).collect(),
            orientation: self.orientation.flipped(),
            ..self.clone()
        }
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.length > 0.0 && self.length.is_finite()) {
            out.push(format!("length must be > 0, got {}", self.length));
        }
        if self.n_cells < 2 {
            out.push(format!("n_cells must be >= 2, got {}", self.n_cells));
        }
        if self.slope.len() != self.n_cells {
            out.push(format!(
                "slope has {} entries for {} cells",
                self.slope.len(),
                self.n_cells
            ));
        }
        if self.slope.iter().any(|a| !(a.abs() < std::f64::consts::FRAC_PI_2)) {
            out.push("slope angles must satisfy |α| < π/2".to_string());
        }
        if !(self.friction >= 0.0 && self.friction.is_finite()) {
            out.push(format!("friction must be >= 0, got {}", self.friction));
        }
        if let Err(e) = self.law.validate() {
            out.push(e.to_string());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JunctionEdge {
    pub pipe: String,
    pub end: PipeEnd,
}

/// Scalar control `u(t)` acting on the second component of a coupling condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSignal {
    Constant { value: f64 },
    /// `values[k]` on `[k·interval, (k+1)·interval)`, last value held.
    PiecewiseConstant { interval: f64, values: Vec<f64> },
    /// Linear interpolation between `(times[k], values[k])`, clamped at the ends.
    PiecewiseLinear { times: Vec<f64>, values: Vec<f64> },
}

impl ControlSignal {
    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            ControlSignal::Constant { value } => *value,
            ControlSignal::PiecewiseConstant { interval, values } => {
                if values.is_empty() {
                    return 0.0;
                }
                // guard against t = k·interval landing just below k through rounding
                let k = ((t / interval) * (1.0 + 4.0 * f64::EPSILON)).floor().max(0.0) as usize;
                values[k.min(values.len() - 1)]
            }
            ControlSignal::PiecewiseLinear { times, values } => {
                let n = times.len().min(values.len());
                if n == 0 {
                    return 0.0;
                }
                if t <= times[0] {
                    return values[0];
                }
                for k in 1..n {
                    if t <= times[k] {
                        let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
                        return values[k - 1] + w * (values[k] - values[k - 1]);
                    }
                }
                values[n - 1]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Junction {
    pub id: String,
    pub edges: Vec<JunctionEdge>,
    pub coupling: KindSpec,
    pub control: Option<ControlSignal>,
}

impl Junction {
    pub fn new(id: impl Into<String>, edges: &[(&str, PipeEnd)], coupling: KindSpec) -> Self {
        Junction {
            id: id.into(),
            edges: edges
                .iter()
                .map(|(p, e)| JunctionEdge {
                    pipe: p.to_string(),
                    end: *e,
                })
                .collect(),
            coupling,
            control: None,
        }
    }

    /// Per-edge local frame: `true` when the pipe meets the junction at `x = L`
    /// and must be mirrored so that the junction sits at `x = 0`.
    pub fn local_frames(&self) -> Vec<bool> {
        self.edges.iter().map(|e| e.end == PipeEnd::End).collect()
    }

    /// Control vector `u(t)` of length `n`: zero mass component, the scalar
    /// signal on the second component.
    pub fn control_vector(&self, t: f64) -> Vec<f64> {
        let mut u = vec![0.0; self.edges.len()];
        if let (Some(sig), true) = (&self.control, u.len() >= 2) {
            u[1] = sig.value_at(t);
        }
        u
    }
}

/// Degree-one vertex carrying an external boundary law.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryNode {
    pub id: String,
    pub pipe: String,
    pub end: PipeEnd,
    pub condition: KindSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub pipes: Vec<Pipe>,
    pub junctions: Vec<Junction>,
    pub boundary_nodes: Vec<BoundaryNode>,
    pub gravity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    EmptyNetwork,
    DuplicateId { id: String },
    InvalidPipe { pipe: String, reason: String },
    UnknownPipe { node: String, pipe: String },
    DanglingEnd { pipe: String, end: PipeEnd },
    MultiplyAttached { pipe: String, end: PipeEnd, count: usize },
    UnknownKind { node: String, kind: String },
    ArityMismatch { junction: String, kind: String, expected: String, found: usize },
    InvalidParameters { node: String, message: String },
    MixedLaws { junction: String },
    Disconnected { components: usize },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::EmptyNetwork => write!(f, "network has no pipes"),
            Diagnostic::DuplicateId { id } => write!(f, "duplicate id `{id}`"),
            Diagnostic::InvalidPipe { pipe, reason } => write!(f, "pipe `{pipe}`: {reason}"),
            Diagnostic::UnknownPipe { node, pipe } => {
                write!(f, "`{node}` references unknown pipe `{pipe}`")
            }
            Diagnostic::DanglingEnd { pipe, end } => {
                write!(f, "pipe `{pipe}` {end} is attached to no vertex")
            }
            Diagnostic::MultiplyAttached { pipe, end, count } => {
                write!(f, "pipe `{pipe}` {end} is attached to {count} vertices")
            }
            Diagnostic::UnknownKind { node, kind } => write!(f, "`{node}`: unknown kind `{kind}`"),
            Diagnostic::ArityMismatch {
                junction,
                kind,
                expected,
                found,
            } => write!(
                f,
                "junction `{junction}`: `{kind}` expects {expected} edges, found {found}"
            ),
            Diagnostic::InvalidParameters { node, message } => write!(f, "`{node}`: {message}"),
            Diagnostic::MixedLaws { junction } => {
                write!(f, "junction `{junction}` joins pipes with different pressure laws")
            }
            Diagnostic::Disconnected { components } => {
                write!(f, "network has {components} disconnected components")
            }
        }
    }
}

impl Network {
    pub fn new(gravity: f64) -> Self {
        Network {
            pipes: Vec::new(),
            junctions: Vec::new(),
            boundary_nodes: Vec::new(),
            gravity,
        }
    }

    pub fn pipe_index(&self, id: &str) -> Option<usize> {
        self.pipes.iter().position(|p| p.id == id)
    }

    pub fn pipe(&self, id: &str) -> Option<&Pipe> {
        self.pipes.iter().find(|p| p.id == id)
    }

    pub fn add_boundary(&mut self, id: &str, pipe: &str, end: PipeEnd, condition: KindSpec) {
        self.boundary_nodes.push(BoundaryNode {
            id: id.to_string(),
            pipe: pipe.to_string(),
            end,
            condition,
        });
    }

    /// Structural diagnostics against the built-in registries.
    pub fn validate(&self) -> Vec<Diagnostic> {
        self.validate_with(&CouplingRegistry::with_builtins(), &BoundaryRegistry::with_builtins())
    }

    /// Lists every violated structural invariant; empty iff the network is valid.
    pub fn validate_with(&self, couplings: &CouplingRegistry, boundaries: &BoundaryRegistry) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        if self.pipes.is_empty() {
            out.push(Diagnostic::EmptyNetwork);
            return out;
        }
        let mut seen = HashMap::new();
        let ids = self
            .pipes
            .iter()
            .map(|p| &p.id)
            .chain(self.junctions.iter().map(|j| &j.id))
            .chain(self.boundary_nodes.iter().map(|b| &b.id));
        for id in ids {
            *seen.entry(id.clone()).or_insert(0usize) += 1;
        }
        let mut dups: Vec<_> = seen.into_iter().filter(|(_, n)| *n > 1).map(|(id, _)| id).collect();
        dups.sort();
        out.extend(dups.into_iter().map(|id| Diagnostic::DuplicateId { id }));

        for p in &self.pipes {
            for reason in p.problems() {
                out.push(Diagnostic::InvalidPipe {
                    pipe: p.id.clone(),
                    reason,
                });
            }
        }

        let mut attached: BTreeMap<(usize, PipeEnd), usize> = BTreeMap::new();
        let mut attach = |node: &str, pipe: &str, end: PipeEnd, out: &mut Vec<Diagnostic>| {
            match self.pipe_index(pipe) {
                Some(i) => *attached.entry((i, end)).or_insert(0) += 1,
                None => out.push(Diagnostic::UnknownPipe {
                    node: node.to_string(),
                    pipe: pipe.to_string(),
                }),
            }
        };
        for j in &self.junctions {
            for e in &j.edges {
                attach(&j.id, &e.pipe, e.end, &mut out);
            }
        }
        for b in &self.boundary_nodes {
            attach(&b.id, &b.pipe, b.end, &mut out);
        }
        for (i, p) in self.pipes.iter().enumerate() {
            for end in [PipeEnd::Start, PipeEnd::End] {
                match attached.get(&(i, end)).copied().unwrap_or(0) {
                    0 => out.push(Diagnostic::DanglingEnd {
                        pipe: p.id.clone(),
                        end,
                    }),
                    1 => {}
                    count => out.push(Diagnostic::MultiplyAttached {
                        pipe: p.id.clone(),
                        end,
                        count,
                    }),
                }
            }
        }

        for j in &self.junctions {
            match couplings.build(&j.coupling) {
                Err(Error::UnknownKind { .. }) => out.push(Diagnostic::UnknownKind {
                    node: j.id.clone(),
                    kind: j.coupling.kind.clone(),
                }),
                Err(e) => out.push(Diagnostic::InvalidParameters {
                    node: j.id.clone(),
                    message: e.to_string(),
                }),
                Ok(c) => {
                    if let Err(Error::ArityMismatch { expected, found, .. }) = c.check_arity(j.edges.len()) {
                        out.push(Diagnostic::ArityMismatch {
                            junction: j.id.clone(),
                            kind: j.coupling.kind.clone(),
                            expected,
                            found,
                        });
                    }
                }
            }
            let laws: Vec<_> = j
                .edges
                .iter()
                .filter_map(|e| self.pipe(&e.pipe).map(|p| p.law))
                .collect();
            if laws.windows(2).any(|w| w[0] != w[1]) {
                out.push(Diagnostic::MixedLaws {
                    junction: j.id.clone(),
                });
            }
        }
        for b in &self.boundary_nodes {
            match boundaries.build(&b.condition) {
                Ok(_) => {}
                Err(Error::UnknownKind { .. }) => out.push(Diagnostic::UnknownKind {
                    node: b.id.clone(),
                    kind: b.condition.kind.clone(),
                }),
                Err(e) => out.push(Diagnostic::InvalidParameters {
                    node: b.id.clone(),
                    message: e.to_string(),
                }),
            }
        }

        let components = self.component_count();
        if components > 1 {
            out.push(Diagnostic::Disconnected { components });
        }
        out
    }

    fn component_count(&self) -> usize {
        let n = self.pipes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for j in &self.junctions {
            let idx: Vec<usize> = j.edges.iter().filter_map(|e| self.pipe_index(&e.pipe)).collect();
            for w in idx.windows(2) {
                let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                parent[a] = b;
            }
        }
        (0..n).filter(|&i| find(&mut parent, i) == i).count()
    }

    /// Errors with every diagnostic joined when the network is invalid.
    pub fn ensure_valid_with(&self, couplings: &CouplingRegistry, boundaries: &BoundaryRegistry) -> Result<()> {
        let diags = self.validate_with(couplings, boundaries);
        if diags.is_empty() {
            Ok(())
        } else {
            Err(Error::Network(
                diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "),
            ))
        }
    }

    /// Reparameterizes pipe `index` by `x → L − x` and rewires its end references.
    pub fn reverse_pipe(&mut self, index: usize) {
        let id = self.pipes[index].id.clone();
        self.pipes[index] = self.pipes[index].reversed();
        for j in &mut self.junctions {
            for e in j.edges.iter_mut().filter(|e| e.pipe == id) {
                e.end = e.end.opposite();
            }
        }
        for b in self.boundary_nodes.iter_mut().filter(|b| b.pipe == id) {
            b.end = b.end.opposite();
        }
    }

    fn attachment(&self, pipe: &str, end: PipeEnd) -> Attachment {
        if self
            .junctions
            .iter()
            .any(|j| j.edges.iter().any(|e| e.pipe == pipe && e.end == end))
        {
            Attachment::Junction
        } else if self.boundary_nodes.iter().any(|b| b.pipe == pipe && b.end == end) {
            Attachment::Boundary
        } else {
            Attachment::None
        }
    }

    /// Orients pipes so that a junction, where one is present, sits at `x = 0`
    /// with `q > 0` meaning flow away from it. A pipe joining a boundary node
    /// (at `x = 0`) to a junction (at `x = L`) is reversed; the flag in
    /// [`Pipe::orientation`] records this so results can be mapped back.
    /// Pipes between two junctions keep their orientation and are mirrored
    /// locally at their `x = L` junction (see [`Junction::local_frames`]).
    /// Idempotent.
    pub fn normalize_orientation(&self) -> Network {
        let mut net = self.clone();
        for i in 0..net.pipes.len() {
            let id = net.pipes[i].id.clone();
            let start = net.attachment(&id, PipeEnd::Start);
            let end = net.attachment(&id, PipeEnd::End);
            if start != Attachment::Junction && end == Attachment::Junction {
                net.reverse_pipe(i);
            }
        }
        net
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Attachment {
    Junction,
    Boundary,
    None,
}
