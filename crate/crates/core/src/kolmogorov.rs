//! Dual evolution of states and variables for one-dimensional diffusions.
//!
//! A diffusion with drift `a(t, y)` and diffusion coefficient `sigma(t, y)`
//! moves statistical states forward in time under the Fokker-Planck operator
//!
//! ```text
//!     L(p) = 1/2 d^2/dy^2 [ sigma^2 p ] - d/dy [ a p ],      dp/dt = L(p),
//! ```
//!
//! and moves physical variables backward from the readout time under
//!
//! ```text
//!     W(f) = -1/2 sigma^2 d^2f/dy^2 - a df/dy,               df/ds = W(f),
//! ```
//!
//! integrated from `s = tau` down to `t0` with the final value `g` as datum.
//! The operators are adjoint up to sign, `<f, L p> = -<p, W f>`, so along the
//! two flows `<f(t), p(t)>` is constant and
//!
//! ```text
//!     integral U[t0,tau](g) dp0  =  integral g d( V[t0,tau](p0) ).
//! ```
//!
//! [`conjugation_defect`] measures how far the discretization drifts from
//! this identity; it shrinks at second order in the cell width.
//!
//! Space is discretized by cell centers. The forward operator is assembled in
//! conservative flux form (central differences of the face fluxes), which
//! conserves mass to round-off under both schemes; the backward operator uses
//! direct central differences. On intervals the forward solver imposes
//! zero-flux walls. The backward solver closes its wall stencils by linear
//! extrapolation (zero second difference), which tracks whole-line solutions;
//! a reflecting wall would be a different physical model and visibly bends
//! the solution near the boundary.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;
use crate::statespace::{
    average, PhysicalVariable, StateSampler, StateSpace, StatisticalState, ParticleEnsemble,
};

type CoeffFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Drift and diffusion coefficient of a one-dimensional diffusion.
#[derive(Clone)]
pub struct DiffusionSpec {
    drift: CoeffFn,
    sigma: CoeffFn,
}

impl DiffusionSpec {
    /// Coefficients as functions of `(t, y)`.
    pub fn new(
        drift: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        sigma: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        DiffusionSpec { drift: Arc::new(drift), sigma: Arc::new(sigma) }
    }

    /// Ornstein-Uhlenbeck: drift `-theta y`, constant diffusion.
    pub fn ornstein_uhlenbeck(theta: f64, sigma: f64) -> Self {
        Self::new(move |_, y| -theta * y, move |_, _| sigma)
    }

    /// Constant drift and diffusion.
    pub fn constant(a: f64, sigma: f64) -> Self {
        Self::new(move |_, _| a, move |_, _| sigma)
    }

    pub fn drift(&self, t: f64, y: f64) -> f64 {
        (self.drift)(t, y)
    }

    pub fn sigma(&self, t: f64, y: f64) -> f64 {
        (self.sigma)(t, y)
    }

    fn drift_checked(&self, t: f64, y: f64) -> Result<f64> {
        let a = self.drift(t, y);
        if a.is_finite() {
            Ok(a)
        } else {
            Err(Error::Coefficient { what: format!("drift {a}"), t, y })
        }
    }

    /// Diffusion value with the floor applied; negative sigma is an error.
    fn sigma_floored(&self, t: f64, y: f64, floor: f64) -> Result<f64> {
        let s = self.sigma(t, y);
        if !s.is_finite() {
            return Err(Error::Coefficient { what: format!("sigma {s}"), t, y });
        }
        if s < 0.0 {
            return Err(Error::Coefficient { what: format!("negative sigma {s}"), t, y });
        }
        Ok(s.max(floor))
    }
}

/// Evolution window `[t0, tau]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow {
    pub t0: f64,
    pub tau: f64,
}

impl TimeWindow {
    pub fn new(t0: f64, tau: f64) -> Result<Self> {
        if !(t0.is_finite() && tau.is_finite()) || tau <= t0 {
            return Err(Error::InvalidParameter(format!(
                "time window needs finite t0 < tau, got [{t0}, {tau}]"
            )));
        }
        Ok(TimeWindow { t0, tau })
    }

    pub fn duration(&self) -> f64 {
        self.tau - self.t0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Second order in time, unconditionally stable, tridiagonal solve.
    CrankNicolson,
    /// First order in time, subject to `dt <= h^2 / max(sigma^2)`.
    ExplicitEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Zero-flux walls on an interval.
    NoFlux,
    /// Periodic identification on the circle.
    Periodic,
}

/// Time step, scheme and boundary handling for the grid solvers.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub dt: f64,
    pub scheme: Scheme,
    /// `None` picks the natural boundary for the space.
    pub boundary: Option<Boundary>,
    /// Minimal diffusion applied inside the solver; keeps the central
    /// stencils away from the pure-transport regime.
    pub sigma_floor: f64,
}

pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-8;

impl SolverConfig {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        Ok(SolverConfig {
            dt,
            scheme: Scheme::CrankNicolson,
            boundary: None,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
        })
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = Some(boundary);
        self
    }

    pub fn with_sigma_floor(mut self, floor: f64) -> Self {
        self.sigma_floor = floor;
        self
    }
}

fn resolve_boundary(space: &StateSpace, requested: Option<Boundary>) -> Result<Boundary> {
    let natural = match space {
        StateSpace::Interval { .. } => Boundary::NoFlux,
        StateSpace::Circle { .. } => Boundary::Periodic,
        StateSpace::Finite { .. } => {
            return Err(Error::UnsupportedRepresentation(
                "grid solvers need an interval or circle".into(),
            ))
        }
    };
    match requested {
        None => Ok(natural),
        Some(b) if b == natural => Ok(b),
        Some(b) => Err(Error::InvalidParameter(format!(
            "boundary {b:?} does not fit {}",
            space.describe()
        ))),
    }
}

/// Tridiagonal operator, optionally with periodic corner entries.
struct TriOp {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    /// `A[0][n-1]` and `A[n-1][0]`.
    corner_ul: f64,
    corner_lr: f64,
}

impl TriOp {
    fn zero(n: usize) -> Self {
        TriOp {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
            corner_ul: 0.0,
            corner_lr: 0.0,
        }
    }

    fn len(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            out[i] = acc;
        }
        out[0] += self.corner_ul * x[n - 1];
        out[n - 1] += self.corner_lr * x[0];
    }
}

/// Thomas solve of `(I + c A) x = rhs` for tridiagonal-plus-corners `A`.
///
/// Periodic corners are folded in by the Sherman-Morrison rank-one update.
fn solve_shifted(op: &TriOp, c: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = op.len();
    let lower: Vec<f64> = op.lower.iter().map(|v| c * v).collect();
    let mut diag: Vec<f64> = op.diag.iter().map(|v| 1.0 + c * v).collect();
    let upper: Vec<f64> = op.upper.iter().map(|v| c * v).collect();
    let alpha = c * op.corner_ul;
    let beta = c * op.corner_lr;

    if alpha == 0.0 && beta == 0.0 {
        return thomas(&lower, &diag, &upper, rhs);
    }

    // A = T + u v^T with u = (gamma, 0, .., 0, beta), v = (1, 0, .., 0, alpha/gamma).
    let gamma = -diag[0];
    diag[0] -= gamma;
    diag[n - 1] -= alpha * beta / gamma;
    let y = thomas(&lower, &diag, &upper, rhs)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = beta;
    let z = thomas(&lower, &diag, &upper, &u)?;
    let vy = y[0] + alpha / gamma * y[n - 1];
    let vz = z[0] + alpha / gamma * z[n - 1];
    let denom = 1.0 + vz;
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::SchemeFailure("singular cyclic tridiagonal system".into()));
    }
    let scale = vy / denom;
    Ok(y.iter().zip(&z).map(|(yy, zz)| yy - scale * zz).collect())
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::SchemeFailure("tridiagonal pivot vanished".into()));
    }
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::SchemeFailure("tridiagonal pivot vanished".into()));
        }
        if i + 1 < n {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= c[i] * next;
    }
    Ok(x)
}

/// Assemble the forward operator `L` at time `t` in conservative flux form.
fn build_forward(
    spec: &DiffusionSpec,
    space: &StateSpace,
    t: f64,
    boundary: Boundary,
    floor: f64,
) -> Result<TriOp> {
    let n = space.len();
    let h = space.cell_width()?;
    let centers = space.cell_centers()?;
    let mut d_coeff = Vec::with_capacity(n);
    for &y in &centers {
        d_coeff.push(spec.sigma_floored(t, y, floor)?.powi(2));
    }
    let mut op = TriOp::zero(n);
    let h2 = h * h;
    // The face flux between cells i and j enters (Lp)_i with + and (Lp)_j
    // with -, so each face touches four matrix entries and its column sums
    // vanish, which is what conserves mass exactly.
    for i in 0..n - 1 {
        let y_face = centers[i] + h / 2.0;
        let a_f = spec.drift_checked(t, y_face)?;
        let ci = -d_coeff[i] / (2.0 * h2) - a_f / (2.0 * h);
        let cj = d_coeff[i + 1] / (2.0 * h2) - a_f / (2.0 * h);
        op.diag[i] += ci;
        op.upper[i] += cj;
        op.lower[i + 1] -= ci;
        op.diag[i + 1] -= cj;
    }
    if boundary == Boundary::Periodic {
        // seam face between the last and first cell
        let y_face = centers[n - 1] + h / 2.0;
        let a_f = spec.drift_checked(t, y_face)?;
        let ci = -d_coeff[n - 1] / (2.0 * h2) - a_f / (2.0 * h);
        let cj = d_coeff[0] / (2.0 * h2) - a_f / (2.0 * h);
        op.diag[n - 1] += ci;
        op.corner_lr += cj;
        op.corner_ul -= ci;
        op.diag[0] -= cj;
    }
    Ok(op)
}

/// Assemble the backward operator `W` at time `t` by central differences,
/// with extrapolation closure at interval walls.
fn build_backward(
    spec: &DiffusionSpec,
    space: &StateSpace,
    t: f64,
    boundary: Boundary,
    floor: f64,
) -> Result<TriOp> {
    let n = space.len();
    let h = space.cell_width()?;
    let centers = space.cell_centers()?;
    let mut op = TriOp::zero(n);
    let h2 = h * h;
    for i in 0..n {
        let y = centers[i];
        let s2 = spec.sigma_floored(t, y, floor)?.powi(2);
        let a = spec.drift_checked(t, y)?;
        let interior = |op: &mut TriOp| {
            op.lower[i] = -0.5 * s2 / h2 + a / (2.0 * h);
            op.diag[i] = s2 / h2;
            op.upper[i] = -0.5 * s2 / h2 - a / (2.0 * h);
        };
        match boundary {
            Boundary::Periodic => {
                interior(&mut op);
                if i == 0 {
                    op.corner_ul = op.lower[0];
                    op.lower[0] = 0.0;
                } else if i == n - 1 {
                    op.corner_lr = op.upper[n - 1];
                    op.upper[n - 1] = 0.0;
                }
            }
            Boundary::NoFlux => {
                if i == 0 {
                    // ghost f[-1] = 2 f[0] - f[1]: second difference drops out
                    op.diag[0] = a / h;
                    op.upper[0] = -a / h;
                } else if i == n - 1 {
                    op.diag[n - 1] = -a / h;
                    op.lower[n - 1] = a / h;
                } else {
                    interior(&mut op);
                }
            }
        }
    }
    Ok(op)
}

fn grid_density(p: &StatisticalState) -> Result<Vec<f64>> {
    match p.density() {
        Some(d) => Ok(d.to_vec()),
        None => Err(Error::UnsupportedRepresentation(
            "grid solvers need a density-represented state".into(),
        )),
    }
}

/// One application of `L` to a state at time `t`.
///
/// The result is a grid function (generally signed), not a measure.
pub fn generator_apply(spec: &DiffusionSpec, p: &StatisticalState, t: f64) -> Result<PhysicalVariable> {
    let space = p.space().clone();
    let boundary = resolve_boundary(&space, None)?;
    let density = grid_density(p)?;
    let op = build_forward(spec, &space, t, boundary, DEFAULT_SIGMA_FLOOR)?;
    let mut out = vec![0.0; density.len()];
    op.apply(&density, &mut out);
    PhysicalVariable::from_samples(space, out)
}

/// One application of `W` to a variable at time `t`.
///
/// Interior cells use central differences. Interval walls use one-sided
/// second-order stencils, exact on quadratics, so constant-coefficient
/// identities hold on the full grid.
pub fn adjoint_apply(spec: &DiffusionSpec, f: &PhysicalVariable, t: f64) -> Result<PhysicalVariable> {
    let space = f.space().clone();
    let boundary = resolve_boundary(&space, None)?;
    let v = f.values()?;
    let n = v.len();
    let h = space.cell_width()?;
    let centers = space.cell_centers()?;
    let h2 = h * h;
    let mut out = vec![0.0; n];
    for i in 0..n {
        let y = centers[i];
        let s2 = spec.sigma_floored(t, y, DEFAULT_SIGMA_FLOOR)?.powi(2);
        let a = spec.drift_checked(t, y)?;
        let (d1, d2) = match boundary {
            Boundary::Periodic => {
                let prev = v[(i + n - 1) % n];
                let next = v[(i + 1) % n];
                ((next - prev) / (2.0 * h), (next - 2.0 * v[i] + prev) / h2)
            }
            Boundary::NoFlux => {
                if i == 0 && n >= 4 {
                    (
                        (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h),
                        (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2,
                    )
                } else if i == n - 1 && n >= 4 {
                    (
                        (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h),
                        (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / h2,
                    )
                } else if i == 0 {
                    ((v[1] - v[0]) / h, 0.0)
                } else if i == n - 1 {
                    ((v[n - 1] - v[n - 2]) / h, 0.0)
                } else {
                    ((v[i + 1] - v[i - 1]) / (2.0 * h), (v[i + 1] - 2.0 * v[i] + v[i - 1]) / h2)
                }
            }
        };
        out[i] = -0.5 * s2 * d2 - a * d1;
    }
    PhysicalVariable::from_samples(space, out)
}

struct StepPlan {
    steps: usize,
    dt: f64,
    last_dt: f64,
}

fn plan_steps(window: &TimeWindow, dt: f64) -> StepPlan {
    let duration = window.duration();
    let ratio = duration / dt;
    let steps = ((ratio - 1e-9).ceil() as usize).max(1);
    let last_dt = duration - (steps - 1) as f64 * dt;
    StepPlan { steps, dt, last_dt }
}

fn enforce_cfl(op_dcoeff_max: f64, h: f64, dt: f64) -> Result<()> {
    let bound = h * h / op_dcoeff_max;
    if dt > bound * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, bound, h, sigma_sq: op_dcoeff_max });
    }
    Ok(())
}

fn max_dcoeff(spec: &DiffusionSpec, centers: &[f64], t: f64, floor: f64) -> Result<f64> {
    let mut m = 0.0f64;
    for &y in centers {
        m = m.max(spec.sigma_floored(t, y, floor)?.powi(2));
    }
    Ok(m)
}

/// Evolve a statistical state forward across `window`.
///
/// Mass is audited before renormalization: a drift beyond 1e-6 or an
/// undershoot below -1e-9 marks the run as a scheme failure instead of being
/// silently repaired.
pub fn forward_evolve(
    spec: &DiffusionSpec,
    p0: &StatisticalState,
    window: &TimeWindow,
    cfg: &SolverConfig,
) -> Result<StatisticalState> {
    let space = p0.space().clone();
    let boundary = resolve_boundary(&space, cfg.boundary)?;
    let mut p = grid_density(p0)?;
    let h = space.cell_width()?;
    let centers = space.cell_centers()?;
    let plan = plan_steps(window, cfg.dt);
    let mut t = window.t0;
    let mut scratch = vec![0.0; p.len()];
    for k in 0..plan.steps {
        let dt = if k + 1 == plan.steps { plan.last_dt } else { plan.dt };
        match cfg.scheme {
            Scheme::CrankNicolson => {
                let op = build_forward(spec, &space, t + dt / 2.0, boundary, cfg.sigma_floor)?;
                op.apply(&p, &mut scratch);
                let rhs: Vec<f64> =
                    p.iter().zip(&scratch).map(|(pi, lp)| pi + 0.5 * dt * lp).collect();
                p = solve_shifted(&op, -0.5 * dt, &rhs)?;
            }
            Scheme::ExplicitEuler => {
                enforce_cfl(max_dcoeff(spec, &centers, t, cfg.sigma_floor)?, h, dt)?;
                let op = build_forward(spec, &space, t, boundary, cfg.sigma_floor)?;
                op.apply(&p, &mut scratch);
                for (pi, lp) in p.iter_mut().zip(&scratch) {
                    *pi += dt * lp;
                }
            }
        }
        t += dt;
    }
    let mass: f64 = p.iter().sum::<f64>() * h;
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::SchemeFailure(format!(
            "mass drifted to {mass} over {} steps",
            plan.steps
        )));
    }
    if let Some(min) = p.iter().cloned().reduce(f64::min) {
        if min < -1e-9 {
            return Err(Error::SchemeFailure(format!("density undershoot {min}")));
        }
    }
    StatisticalState::from_density_clipped(space, p, 1e-9)
}

/// Evolve a physical variable backward across `window`, from the final datum
/// `g` at `tau` to its representative at `t0`.
pub fn backward_evolve(
    spec: &DiffusionSpec,
    g: &PhysicalVariable,
    window: &TimeWindow,
    cfg: &SolverConfig,
) -> Result<PhysicalVariable> {
    let space = g.space().clone();
    let boundary = resolve_boundary(&space, cfg.boundary)?;
    let mut f = g.values()?;
    let h = space.cell_width()?;
    let centers = space.cell_centers()?;
    let plan = plan_steps(window, cfg.dt);
    let mut s = window.tau;
    let mut scratch = vec![0.0; f.len()];
    for k in 0..plan.steps {
        let dt = if k + 1 == plan.steps { plan.last_dt } else { plan.dt };
        match cfg.scheme {
            Scheme::CrankNicolson => {
                let op = build_backward(spec, &space, s - dt / 2.0, boundary, cfg.sigma_floor)?;
                op.apply(&f, &mut scratch);
                let rhs: Vec<f64> =
                    f.iter().zip(&scratch).map(|(fi, wf)| fi - 0.5 * dt * wf).collect();
                f = solve_shifted(&op, 0.5 * dt, &rhs)?;
            }
            Scheme::ExplicitEuler => {
                enforce_cfl(max_dcoeff(spec, &centers, s, cfg.sigma_floor)?, h, dt)?;
                let op = build_backward(spec, &space, s, boundary, cfg.sigma_floor)?;
                op.apply(&f, &mut scratch);
                for (fi, wf) in f.iter_mut().zip(&scratch) {
                    *fi -= dt * wf;
                }
            }
        }
        s -= dt;
    }
    for (i, v) in f.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::SchemeFailure(format!("backward value {v} at cell {i}")));
        }
    }
    PhysicalVariable::from_samples(space, f)
}

/// Euler-Maruyama paths of the diffusion started from draws of `p0`.
///
/// Paths reflect at interval walls and wrap on the circle. Path `i` draws
/// all of its randomness from the stream `(seed, i)`, so the result depends
/// only on `(p0, seed, dt)` and not on how work is chunked across threads.
pub fn simulate_paths(
    spec: &DiffusionSpec,
    p0: &StatisticalState,
    window: &TimeWindow,
    path_count: usize,
    dt: f64,
    seed: u64,
) -> Result<ParticleEnsemble> {
    simulate_paths_threaded(spec, p0, window, path_count, dt, seed, 1)
}

/// [`simulate_paths`] split across `threads` worker threads.
pub fn simulate_paths_threaded(
    spec: &DiffusionSpec,
    p0: &StatisticalState,
    window: &TimeWindow,
    path_count: usize,
    dt: f64,
    seed: u64,
    threads: usize,
) -> Result<ParticleEnsemble> {
    if path_count == 0 {
        return Err(Error::InvalidParameter("path_count must be at least 1".into()));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let threads = threads.max(1);
    let space = p0.space().clone();
    if !space.is_grid() {
        return Err(Error::UnsupportedRepresentation(
            "path simulation needs an interval or circle".into(),
        ));
    }
    let sampler = StateSampler::new(p0)?;
    let plan = plan_steps(window, dt);

    let simulate_one = |path_idx: u64| -> Result<f64> {
        let mut path_rng = rng::stream(seed, path_idx);
        let mut y = sampler.draw(&mut path_rng)?;
        let mut t = window.t0;
        for k in 0..plan.steps {
            let step = if k + 1 == plan.steps { plan.last_dt } else { plan.dt };
            let a = spec.drift_checked(t, y)?;
            let s = spec.sigma_floored(t, y, DEFAULT_SIGMA_FLOOR)?;
            let xi: f64 = StandardNormal.sample(&mut path_rng);
            y += a * step + s * step.sqrt() * xi;
            y = space.fold_point(y)?;
            t += step;
        }
        Ok(y)
    };

    let points: Result<Vec<f64>> = if threads == 1 {
        (0..path_count as u64).map(simulate_one).collect()
    } else {
        let chunk = path_count.div_ceil(threads);
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for w in 0..threads {
                let lo = w * chunk;
                let hi = ((w + 1) * chunk).min(path_count);
                if lo >= hi {
                    break;
                }
                let simulate_one = &simulate_one;
                handles.push(scope.spawn(move || {
                    (lo as u64..hi as u64).map(simulate_one).collect::<Result<Vec<f64>>>()
                }));
            }
            let mut all = Vec::with_capacity(path_count);
            for handle in handles {
                let part = handle.join().map_err(|_| {
                    Error::SchemeFailure("path simulation worker panicked".into())
                })??;
                all.extend(part);
            }
            Ok(all)
        })
    };
    ParticleEnsemble::new(points?, None, seed)
}

/// Defect of the conjugation identity for the dual pair defined by `spec`:
/// `| <U g, p0> - <g, V p0> |`.
pub fn conjugation_defect(
    spec: &DiffusionSpec,
    p0: &StatisticalState,
    g: &PhysicalVariable,
    window: &TimeWindow,
    cfg: &SolverConfig,
) -> Result<f64> {
    let ug = backward_evolve(spec, g, window, cfg)?;
    let vp = forward_evolve(spec, p0, window, cfg)?;
    let classical = average(&ug, p0)?;
    let observational = average(g, &vp)?;
    Ok((classical - observational).abs())
}
