use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal system `∂_t U_j + λ_j(U) ∂_x U_j = 0` on `[0, L]` with the
/// boundary coupling `U_j(t, 0) = κ_j U_j(t, L)`.
///
/// Speeds are affine, `λ_j(u) = base_j + Σ_k gradient_jk u_k`, so their
/// extremes over the box `‖u‖_∞ ≤ δ` are attained at corners and known exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagonalSystem {
    pub base: Vec<f64>,
    #[serde(default)]
    pub gradient: Vec<Vec<f64>>,
    pub kappa: Vec<f64>,
    pub delta: f64,
}

/// Which reading of the `μ` bound to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuBoundRule {
    /// `μ_j ≤ −log(κ_j D_min/D_max)`
    #[default]
    Printed,
    /// `μ_j ≤ −log(κ_j² D_min/D_max)`
    KappaSquared,
}

impl DiagonalSystem {
    pub fn linear(speeds: &[f64], kappa: &[f64], delta: f64) -> Result<Self> {
        let sys = DiagonalSystem {
            base: speeds.to_vec(),
            gradient: Vec::new(),
            kappa: kappa.to_vec(),
            delta,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    fn gradient_row(&self, j: usize) -> &[f64] {
        self.gradient.get(j).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn speed(&self, j: usize, u: &[f64]) -> f64 {
        self.base[j] + self.gradient_row(j).iter().zip(u).map(|(g, x)| g * x).sum::<f64>()
    }

    /// `(min, max)` of `λ_j` over the box of radius `δ`.
    pub fn speed_range(&self, j: usize) -> (f64, f64) {
        let spread = self.delta * self.gradient_row(j).iter().map(|g| g.abs()).sum::<f64>();
        (self.base[j] - spread, self.base[j] + spread)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || self.kappa.len() != d {
            return Err(Error::InvalidParameter(format!(
                "diagonal system needs matching speed and kappa lengths, got {} and {}",
                d,
                self.kappa.len()
            )));
        }
        if !self.gradient.is_empty() && (self.gradient.len() != d || self.gradient.iter().any(|r| r.len() != d)) {
            return Err(Error::InvalidParameter("gradient must be d x d".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta must be > 0, got {}", self.delta)));
        }
        if let Some(k) = self.kappa.iter().find(|k| !(**k > 0.0 && k.is_finite())) {
            return Err(Error::InvalidParameter(format!("kappa must be > 0, got {k}")));
        }
        for j in 0..d {
            let (lo, _) = self.speed_range(j);
            if !(lo > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "speed {j} is not positive on the ball (min {lo})"
                )));
            }
        }
        Ok(())
    }

    fn check_ball(&self, values: &[Vec<f64>]) -> Result<()> {
        let norm = values.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        if norm <= self.delta {
            Ok(())
        } else {
            Err(Error::LeftTrustRegion {
                delta: self.delta,
                norm,
            })
        }
    }

    fn check_shape(&self, values: &[Vec<f64>]) -> Result<usize> {
        if values.len() != self.dim() {
            return Err(Error::GridMismatch(format!(
                "{} components for a {}-component system",
                values.len(),
                self.dim()
            )));
        }
        let n = values[0].len();
        if n == 0 || values.iter().any(|v| v.len() != n) {
            return Err(Error::GridMismatch("components must share one non-empty grid".into()));
        }
        Ok(n)
    }

    /// Largest Courant number `(Δt/Δx) max_j max |λ_j|` over the ball.
    pub fn courant(&self, dt: f64, dx: f64) -> f64 {
        (0..self.dim())
            .map(|j| {
                let (lo, hi) = self.speed_range(j);
                lo.abs().max(hi.abs())
            })
            .fold(0.0, f64::max)
            * dt
            / dx
    }
}

/// One upwind step on cells `i = 0..N`, with ghost `U_{j,−1} = κ_j U_{j,N}`.
/// `values[j][i]` is component `j` in cell `i`.
pub fn diagonal_step(system: &DiagonalSystem, values: &[Vec<f64>], dt: f64, dx: f64) -> Result<Vec<Vec<f64>>> {
    let n = system.check_shape(values)?;
    let courant = system.courant(dt, dx);
    if courant > 1.0 {
        return Err(Error::CflViolation { courant });
    }
    system.check_ball(values)?;
    let d = system.dim();
    let r = dt / dx;
    let mut u = vec![0.0; d];
    let mut next = values.to_vec();
    for i in 0..n {
        for (k, uk) in u.iter_mut().enumerate() {
            *uk = values[k][i];
        }
        for j in 0..d {
            let left = if i == 0 {
                system.kappa[j] * values[j][n - 1]
            } else {
                values[j][i - 1]
            };
            next[j][i] = values[j][i] - r * system.speed(j, &u) * (values[j][i] - left);
        }
    }
    system.check_ball(&next)?;
    Ok(next)
}

/// `L = Δx Σ_i Σ_j U_{j,i}² exp(−μ_j x_i)` with `x_i = i Δx`.
pub fn discrete_lyapunov(values: &[Vec<f64>], mu: &[f64], dx: f64) -> f64 {
    values
        .iter()
        .zip(mu)
        .map(|(comp, m)| {
            comp.iter()
                .enumerate()
                .map(|(i, u)| u * u * (-m * i as f64 * dx).exp())
                .sum::<f64>()
        })
        .sum::<f64>()
        * dx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    /// `min` over the ball of `(Δt/Δx) λ_j`.
    pub d_min: Vec<f64>,
    pub d_max: Vec<f64>,
    /// Upper bound on `κ_j²`: `D_min/D_max`.
    pub kappa_sq_bound: Vec<f64>,
    pub mu_bound: Vec<f64>,
    pub kappa_ok: Vec<bool>,
    pub rule: MuBoundRule,
}

impl Admissibility {
    /// Per-component flags for `0 ≤ μ_j ≤ bound_j`.
    pub fn mu_ok(&self, mu: &[f64]) -> Vec<bool> {
        mu.iter().zip(&self.mu_bound).map(|(m, b)| *m >= 0.0 && m <= b).collect()
    }

    pub fn all_ok(&self, mu: &[f64]) -> bool {
        self.kappa_ok.iter().all(|x| *x) && mu.len() == self.mu_bound.len() && self.mu_ok(mu).iter().all(|x| *x)
    }
}

/// D bounds and the admissible ranges for `κ_j` and `μ_j`.
pub fn admissible_parameters(system: &DiagonalSystem, dt: f64, dx: f64, rule: MuBoundRule) -> Result<Admissibility> {
    system.validate()?;
    let r = dt / dx;
    let mut out = Admissibility {
        d_min: Vec::new(),
        d_max: Vec::new(),
        kappa_sq_bound: Vec::new(),
        mu_bound: Vec::new(),
        kappa_ok: Vec::new(),
        rule,
    };
    for j in 0..system.dim() {
        let (lo, hi) = system.speed_range(j);
        let (d_min, d_max) = (r * lo, r * hi);
        if !(0.0 < d_min && d_min <= d_max && d_max <= 1.0) {
            return Err(Error::InvalidSpeedBounds(format!(
                "component {j}: D_min = {d_min}, D_max = {d_max}"
            )));
        }
        let ratio = d_min / d_max;
        let k = system.kappa[j];
        let kk = match rule {
            MuBoundRule::Printed => k,
            MuBoundRule::KappaSquared => k * k,
        };
        out.d_min.push(d_min);
        out.d_max.push(d_max);
        out.kappa_sq_bound.push(ratio);
        out.mu_bound.push(-(kk * ratio).ln());
        out.kappa_ok.push(k * k <= ratio);
    }
    Ok(out)
}

/// `ν = min_j D_j^min exp(−μ_j Δx) μ_j Δx / (2 Δt)`.
pub fn decay_rate(d_min: &[f64], mu: &[f64], dx: f64, dt: f64) -> f64 {
    d_min
        .iter()
        .zip(mu)
        .map(|(d, m)| d * (-m * dx).exp() * m * dx / (2.0 * dt))
        .fold(f64::INFINITY, f64::min)
}

/// Largest `|U_{j,i} − U_{j,i−1}| / Δx`.
pub fn max_discrete_gradient(values: &[Vec<f64>], dx: f64) -> f64 {
    values
        .iter()
        .flat_map(|c| c.windows(2).map(|w| (w[1] - w[0]).abs() / dx))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub mu: Vec<f64>,
    pub times: Vec<f64>,
    pub l_series: Vec<f64>,
    pub nu: f64,
    pub kappa_admissible: Vec<bool>,
    pub mu_admissible: Vec<bool>,
    /// `None` when the parameters are not admissible.
    pub bound_holds: Option<bool>,
    pub admissibility: Admissibility,
}

impl LyapunovReport {
    /// `exp(−ν t^m) L⁰` for every recorded step.
    pub fn bound_series(&self) -> Vec<f64> {
        let l0 = self.l_series.first().copied().unwrap_or(0.0);
        self.times.iter().map(|t| (-self.nu * t).exp() * l0).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub dt: f64,
    pub dx: f64,
    pub steps: usize,
    pub rule: MuBoundRule,
    /// Gate on the initial discrete gradient; defaults to `δ` when `None`.
    pub gradient_gate: Option<f64>,
}

/// Runs `steps` upwind steps from `initial`, records `L^m` and checks
/// `L^m ≤ exp(−ν t^m) L⁰ (1 + 1e−12)`. The verdict is withheld when `κ` or
/// `μ` violate the admissibility bounds.
pub fn certify_decay(
    system: &DiagonalSystem,
    initial: &[Vec<f64>],
    mu: &[f64],
    opts: &CertifyOptions,
) -> Result<LyapunovReport> {
    let adm = admissible_parameters(system, opts.dt, opts.dx, opts.rule)?;
    if mu.len() != system.dim() {
        return Err(Error::InvalidParameter(format!(
            "{} weights for a {}-component system",
            mu.len(),
            system.dim()
        )));
    }
    let gate = opts.gradient_gate.unwrap_or(system.delta);
    let gradient = max_discrete_gradient(initial, opts.dx);
    if gradient > gate {
        return Err(Error::GradientGate { gradient, gate });
    }
    let nu = decay_rate(&adm.d_min, mu, opts.dx, opts.dt);
    let mut values = initial.to_vec();
    let mut times = vec![0.0];
    let mut l_series = vec![discrete_lyapunov(&values, mu, opts.dx)];
    for m in 1..=opts.steps {
        values = diagonal_step(system, &values, opts.dt, opts.dx)?;
        times.push(m as f64 * opts.dt);
        l_series.push(discrete_lyapunov(&values, mu, opts.dx));
    }
    let admissible = adm.all_ok(mu);
    let l0 = l_series[0];
    let holds = times
        .iter()
        .zip(&l_series)
        .all(|(t, l)| *l <= (-nu * t).exp() * l0 * (1.0 + 1e-12));
    Ok(LyapunovReport {
        mu: mu.to_vec(),
        times,
        l_series,
        nu,
        kappa_admissible: adm.kappa_ok.clone(),
        mu_admissible: adm.mu_ok(mu),
        bound_holds: admissible.then_some(holds),
        admissibility: adm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_is_an_equilibrium() {
        let sys = DiagonalSystem::linear(&[1.0, 2.0], &[0.5, 0.5], 0.1).unwrap();
        let zero = vec![vec![0.0; 10]; 2];
        assert_eq!(diagonal_step(&sys, &zero, 0.01, 0.1).unwrap(), zero);
    }

    #[test]
    fn constant_data_with_unit_kappa_is_unchanged() {
        let sys = DiagonalSystem::linear(&[1.0], &[1.0], 1.0).unwrap();
        let c = vec![vec![0.3; 8]];
        assert_eq!(diagonal_step(&sys, &c, 0.05, 0.1).unwrap(), c);
    }

    #[test]
    fn unit_courant_is_an_exact_shift() {
        let sys = DiagonalSystem::linear(&[2.0], &[0.5], 1.0).unwrap();
        let u = vec![vec![0.1, 0.2, 0.3, 0.4]];
        let next = diagonal_step(&sys, &u, 0.05, 0.1).unwrap();
        for (a, b) in next[0].iter().zip([0.5 * 0.4, 0.1, 0.2, 0.3]) {
            assert_relative_eq!(*a, b, max_relative = 1e-14);
        }
    }

    #[test]
    fn cfl_and_ball_enforced() {
        let sys = DiagonalSystem::linear(&[2.0], &[0.5], 0.5).unwrap();
        let u = vec![vec![0.1; 4]];
        assert!(matches!(diagonal_step(&sys, &u, 0.1, 0.1), Err(Error::CflViolation { .. })));
        let big = vec![vec![0.6; 4]];
        assert!(matches!(diagonal_step(&sys, &big, 0.01, 0.1), Err(Error::LeftTrustRegion { .. })));
    }

    #[test]
    fn lyapunov_examples() {
        assert_eq!(discrete_lyapunov(&[vec![0.0; 5]], &[0.2], 0.1), 0.0);
        let mut u = vec![vec![0.0; 5]];
        u[0][0] = 1.0;
        assert_relative_eq!(discrete_lyapunov(&u, &[0.2], 0.1), 0.1, max_relative = 1e-15);
        let v = vec![vec![1.0, -2.0, 0.5], vec![0.25, 0.0, 3.0]];
        let plain: f64 = v.iter().flatten().map(|x| x * x).sum();
        assert_eq!(discrete_lyapunov(&v, &[0.0, 0.0], 0.1), 0.1 * plain);
    }

    #[test]
    fn admissible_bounds_constant_speeds() {
        let sys = DiagonalSystem::linear(&[1.0], &[1.0], 0.1).unwrap();
        let adm = admissible_parameters(&sys, 0.05, 0.1, MuBoundRule::Printed).unwrap();
        assert_eq!(adm.d_min, adm.d_max);
        assert_eq!(adm.kappa_sq_bound, vec![1.0]);
        assert_eq!(adm.mu_bound, vec![0.0]);
        assert!(adm.kappa_ok[0]);
        let half = DiagonalSystem::linear(&[1.0], &[0.5], 0.1).unwrap();
        let adm = admissible_parameters(&half, 0.05, 0.1, MuBoundRule::Printed).unwrap();
        assert_relative_eq!(adm.mu_bound[0], 2f64.ln(), max_relative = 1e-15);
        let adm2 = admissible_parameters(&half, 0.05, 0.1, MuBoundRule::KappaSquared).unwrap();
        assert_relative_eq!(adm2.mu_bound[0], 4f64.ln(), max_relative = 1e-15);
    }

    #[test]
    fn admissible_bounds_reject_supercritical_speed() {
        let sys = DiagonalSystem::linear(&[3.0], &[0.5], 0.1).unwrap();
        assert!(matches!(
            admissible_parameters(&sys, 0.05, 0.1, MuBoundRule::Printed),
            Err(Error::InvalidSpeedBounds(_))
        ));
    }

    #[test]
    fn decay_rate_examples() {
        assert_relative_eq!(decay_rate(&[0.5], &[0.2], 0.1, 0.05), 0.5 * (-0.02f64).exp() * 0.2, max_relative = 1e-15);
        assert!((decay_rate(&[0.5], &[0.2], 0.1, 0.05) - 0.09802).abs() < 1e-5);
        assert_eq!(decay_rate(&[0.5, 0.5], &[0.2, 0.0], 0.1, 0.05), 0.0);
    }

    #[test]
    fn decay_rate_increases_in_mu_below_inverse_dx() {
        let dx = 0.1;
        let mut prev = -1.0;
        for k in 0..=100 {
            let mu = k as f64 / (100.0 * dx);
            let nu = decay_rate(&[0.5], &[mu], dx, 0.05);
            assert!(nu > prev);
            prev = nu;
        }
    }

    #[test]
    fn certification_withheld_when_inadmissible() {
        let sys = DiagonalSystem::linear(&[1.0], &[1.5], 1.0).unwrap();
        let u = vec![vec![0.01; 10]];
        let opts = CertifyOptions {
            dt: 0.05,
            dx: 0.1,
            steps: 5,
            rule: MuBoundRule::Printed,
            gradient_gate: None,
        };
        let rep = certify_decay(&sys, &u, &[0.1], &opts).unwrap();
        assert_eq!(rep.bound_holds, None);
        assert_eq!(rep.kappa_admissible, vec![false]);
        assert_eq!(rep.l_series.len(), 6);
    }

    #[test]
    fn zero_data_certifies_trivially() {
        let sys = DiagonalSystem::linear(&[1.0, 2.0], &[0.5, 0.5], 0.1).unwrap();
        let u = vec![vec![0.0; 20]; 2];
        let opts = CertifyOptions {
            dt: 0.025,
            dx: 0.05,
            steps: 10,
            rule: MuBoundRule::Printed,
            gradient_gate: None,
        };
        let rep = certify_decay(&sys, &u, &[0.3, 0.3], &opts).unwrap();
        assert!(rep.l_series.iter().all(|l| *l == 0.0));
        assert_eq!(rep.bound_holds, Some(true));
    }

    #[test]
    fn steep_initial_data_rejected_by_gate() {
        let sys = DiagonalSystem::linear(&[1.0], &[0.5], 1.0).unwrap();
        let u = vec![vec![0.0, 0.5, 0.0]];
        let opts = CertifyOptions {
            dt: 0.05,
            dx: 0.1,
            steps: 1,
            rule: MuBoundRule::Printed,
            gradient_gate: None,
        };
        assert!(matches!(certify_decay(&sys, &u, &[0.1], &opts), Err(Error::GradientGate { .. })));
    }
}
