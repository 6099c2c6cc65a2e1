//! Spaces of hidden states, the statistical states (probability measures)
//! living on them, and the physical variables (real-valued functions) that
//! get averaged against those measures.
//!
//! Three kinds of space are supported: a bounded interval `[lower, upper]`
//! split into `n` equal cells, the circle `[0, 2pi)` split the same way, and
//! a finite labelled set. Gridded measures are stored as densities at cell
//! centers, so every integral is a midpoint sum
//!
//! ```text
//!     <f>_p = sum_i f(y_i) p(y_i) h,      y_i = lower + (i + 1/2) h,
//! ```
//!
//! which on the circle coincides with the trapezoid rule and integrates
//! trigonometric polynomials of degree < n exactly. Measures may also be
//! carried by a weighted particle ensemble, in which case averages are
//! weighted sums over the particles.

use std::fmt;
use std::sync::Arc;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

/// Sign convention used throughout: `sgn(0) = +1`.
pub fn sgn(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

const TAU: f64 = std::f64::consts::TAU;

/// Where hidden states live.
#[derive(Debug, Clone, PartialEq)]
pub enum StateSpace {
    /// `[lower, upper]` with `n` equal cells.
    Interval { lower: f64, upper: f64, n: usize },
    /// `[0, 2pi)` with `n` equal cells and periodic identification.
    Circle { n: usize },
    /// Finite labelled set; measures are weight vectors over the labels.
    Finite { labels: Vec<String> },
}

impl StateSpace {
    pub fn interval(lower: f64, upper: f64, n: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(Error::InvalidParameter(format!(
                "interval bounds must be finite with lower < upper, got [{lower}, {upper}]"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2 cells, got {n}"
            )));
        }
        Ok(StateSpace::Interval { lower, upper, n })
    }

    pub fn circle(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2 cells, got {n}"
            )));
        }
        Ok(StateSpace::Circle { n })
    }

    pub fn finite(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidParameter("finite space needs at least one label".into()));
        }
        Ok(StateSpace::Finite { labels })
    }

    /// Number of cells or labels.
    pub fn len(&self) -> usize {
        match self {
            StateSpace::Interval { n, .. } | StateSpace::Circle { n } => *n,
            StateSpace::Finite { labels } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_grid(&self) -> bool {
        !matches!(self, StateSpace::Finite { .. })
    }

    /// Cell width of a gridded space.
    pub fn cell_width(&self) -> Result<f64> {
        match self {
            StateSpace::Interval { lower, upper, n } => Ok((upper - lower) / *n as f64),
            StateSpace::Circle { n } => Ok(TAU / *n as f64),
            StateSpace::Finite { .. } => Err(Error::UnsupportedRepresentation(
                "finite spaces have no cell width".into(),
            )),
        }
    }

    /// Midpoints of the grid cells.
    pub fn cell_centers(&self) -> Result<Vec<f64>> {
        let h = self.cell_width()?;
        let lower = match self {
            StateSpace::Interval { lower, .. } => *lower,
            StateSpace::Circle { .. } => 0.0,
            StateSpace::Finite { .. } => unreachable!(),
        };
        Ok((0..self.len()).map(|i| lower + (i as f64 + 0.5) * h).collect())
    }

    /// Reduce a point into the fundamental domain.
    ///
    /// On the circle this is reduction mod 2pi, so variables automatically
    /// satisfy `f(lambda) = f(lambda + 2pi)`; on an interval the point is
    /// returned unchanged.
    pub fn canonical_point(&self, y: f64) -> f64 {
        match self {
            StateSpace::Circle { .. } => y.rem_euclid(TAU),
            _ => y,
        }
    }

    /// Reflect a point into an interval, wrap it around a circle.
    /// Used by path simulation.
    pub fn fold_point(&self, mut y: f64) -> Result<f64> {
        match self {
            StateSpace::Circle { .. } => Ok(y.rem_euclid(TAU)),
            StateSpace::Interval { lower, upper, .. } => {
                let width = upper - lower;
                // Reflection group of the interval has period 2*width.
                let mut offset = (y - lower).rem_euclid(2.0 * width);
                if offset > width {
                    offset = 2.0 * width - offset;
                }
                y = lower + offset;
                Ok(y)
            }
            StateSpace::Finite { .. } => Err(Error::UnsupportedRepresentation(
                "cannot fold points into a finite space".into(),
            )),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            StateSpace::Interval { lower, upper, n } => format!("interval[{lower}, {upper}; n={n}]"),
            StateSpace::Circle { n } => format!("circle[n={n}]"),
            StateSpace::Finite { labels } => format!("finite[{} labels]", labels.len()),
        }
    }

    fn check_same(&self, other: &StateSpace) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::SpaceMismatch(self.describe(), other.describe()))
        }
    }
}

/// Weighted collection of sample points, the particle form of a measure.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    points: Vec<f64>,
    /// Normalized weights; `None` means uniform.
    weights: Option<Vec<f64>>,
    /// Seed the ensemble was generated from, for provenance.
    seed: u64,
}

impl ParticleEnsemble {
    pub fn new(points: Vec<f64>, weights: Option<Vec<f64>>, seed: u64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if let Some(bad) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFinite { what: format!("ensemble point {bad}"), at: "construction".into() });
        }
        let weights = match weights {
            None => None,
            Some(mut w) => {
                if w.len() != points.len() {
                    return Err(Error::InvalidParameter(format!(
                        "{} weights for {} points",
                        w.len(),
                        points.len()
                    )));
                }
                if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(Error::InvalidParameter("weights must be finite and nonnegative".into()));
                }
                let total: f64 = w.iter().sum();
                if total <= 0.0 {
                    return Err(Error::DegenerateMeasure("ensemble weights sum to zero".into()));
                }
                w.iter_mut().for_each(|x| *x /= total);
                Some(w)
            }
        };
        Ok(ParticleEnsemble { points, weights, seed })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i],
            None => 1.0 / self.points.len() as f64,
        }
    }

    pub fn mean(&self) -> f64 {
        (0..self.len()).map(|i| self.weight(i) * self.points[i]).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        (0..self.len()).map(|i| self.weight(i) * (self.points[i] - m).powi(2)).sum()
    }

    /// Gaussian kernel density estimate on the cells of `space`.
    ///
    /// `bandwidth = None` picks Silverman's rule `1.06 sigma n^(-1/5)`. On the
    /// circle the kernel is wrapped over one period in both directions, which
    /// is ample for bandwidths well below 2pi.
    pub fn kde(&self, space: &StateSpace, bandwidth: Option<f64>) -> Result<StatisticalState> {
        let centers = space.cell_centers()?;
        let bw = match bandwidth {
            Some(b) if b > 0.0 && b.is_finite() => b,
            Some(b) => {
                return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {b}")))
            }
            None => {
                let sd = self.variance().sqrt();
                let n = self.len() as f64;
                let b = 1.06 * sd * n.powf(-0.2);
                if b > 0.0 {
                    b
                } else {
                    return Err(Error::DegenerateMeasure(
                        "cannot pick a bandwidth for a zero-spread ensemble".into(),
                    ));
                }
            }
        };
        let norm = 1.0 / (bw * (TAU).sqrt());
        let wrap = matches!(space, StateSpace::Circle { .. });
        let mut density = vec![0.0; centers.len()];
        for i in 0..self.len() {
            let w = self.weight(i) * norm;
            let x = space.canonical_point(self.points[i]);
            for (j, &c) in centers.iter().enumerate() {
                let mut k = (-((c - x) / bw).powi(2) / 2.0).exp();
                if wrap {
                    k += (-((c - x + TAU) / bw).powi(2) / 2.0).exp();
                    k += (-((c - x - TAU) / bw).powi(2) / 2.0).exp();
                }
                density[j] += w * k;
            }
        }
        StatisticalState::from_density(space.clone(), density)
    }
}

#[derive(Clone)]
enum StateRepr {
    /// Density values at cell centers; integrates with weight `h`.
    Density(Vec<f64>),
    /// Probability weights over the labels of a finite space.
    Weights(Vec<f64>),
    /// Particle form.
    Ensemble(ParticleEnsemble),
}

/// A probability measure on a [`StateSpace`].
///
/// Construction normalizes, so a state always carries total mass 1 within
/// 1e-9. Densities may arrive from a solver with round-off undershoots;
/// entries down to the clip tolerance are set to zero, anything more negative
/// is an error.
#[derive(Clone)]
pub struct StatisticalState {
    space: StateSpace,
    repr: StateRepr,
}

impl fmt::Debug for StatisticalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.repr {
            StateRepr::Density(_) => "density",
            StateRepr::Weights(_) => "weights",
            StateRepr::Ensemble(e) => return write!(f, "StatisticalState[ensemble of {} on {}]", e.len(), self.space.describe()),
        };
        write!(f, "StatisticalState[{kind} on {}]", self.space.describe())
    }
}

/// Default clip tolerance for negative density entries.
pub const DENSITY_CLIP_TOL: f64 = 1e-12;

impl StatisticalState {
    /// Density at cell centers of a gridded space. Normalizes; clips
    /// round-off negatives at [`DENSITY_CLIP_TOL`].
    pub fn from_density(space: StateSpace, density: Vec<f64>) -> Result<Self> {
        Self::from_density_clipped(space, density, DENSITY_CLIP_TOL)
    }

    /// Same as [`from_density`](Self::from_density) with an explicit clip
    /// tolerance, for callers that know their scheme's undershoot scale.
    pub fn from_density_clipped(space: StateSpace, mut density: Vec<f64>, clip_tol: f64) -> Result<Self> {
        if !space.is_grid() {
            return Err(Error::UnsupportedRepresentation(
                "density representation needs a gridded space".into(),
            ));
        }
        if density.len() != space.len() {
            return Err(Error::InvalidParameter(format!(
                "density has {} entries for {} cells",
                density.len(),
                space.len()
            )));
        }
        let h = space.cell_width()?;
        for (i, v) in density.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { what: format!("density value {v}"), at: format!("cell {i}") });
            }
            if *v < 0.0 {
                if *v < -clip_tol {
                    return Err(Error::DegenerateMeasure(format!(
                        "density entry {v} at cell {i} below clip tolerance -{clip_tol}"
                    )));
                }
                *v = 0.0;
            }
        }
        let mass: f64 = density.iter().sum::<f64>() * h;
        if mass <= 0.0 {
            return Err(Error::DegenerateMeasure("density has zero total mass".into()));
        }
        density.iter_mut().for_each(|v| *v /= mass);
        Ok(StatisticalState { space, repr: StateRepr::Density(density) })
    }

    /// Probability weights over the labels of a finite space.
    pub fn from_weights(space: StateSpace, mut weights: Vec<f64>) -> Result<Self> {
        match &space {
            StateSpace::Finite { labels } => {
                if weights.len() != labels.len() {
                    return Err(Error::InvalidParameter(format!(
                        "{} weights for {} labels",
                        weights.len(),
                        labels.len()
                    )));
                }
            }
            _ => {
                return Err(Error::UnsupportedRepresentation(
                    "weight representation needs a finite space".into(),
                ))
            }
        }
        for (i, v) in weights.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { what: format!("weight {v}"), at: format!("label {i}") });
            }
            if *v < 0.0 {
                if *v < -DENSITY_CLIP_TOL {
                    return Err(Error::DegenerateMeasure(format!("negative weight {v} at label {i}")));
                }
                *v = 0.0;
            }
        }
        let mass: f64 = weights.iter().sum();
        if mass <= 0.0 {
            return Err(Error::DegenerateMeasure("weights sum to zero".into()));
        }
        weights.iter_mut().for_each(|v| *v /= mass);
        Ok(StatisticalState { space, repr: StateRepr::Weights(weights) })
    }

    pub fn from_ensemble(space: StateSpace, ensemble: ParticleEnsemble) -> Result<Self> {
        if !space.is_grid() {
            return Err(Error::UnsupportedRepresentation(
                "ensemble representation needs a gridded space".into(),
            ));
        }
        Ok(StatisticalState { space, repr: StateRepr::Ensemble(ensemble) })
    }

    /// Uniform distribution.
    pub fn uniform(space: StateSpace) -> Result<Self> {
        match &space {
            StateSpace::Finite { labels } => {
                let n = labels.len();
                Self::from_weights(space, vec![1.0 / n as f64; n])
            }
            _ => {
                let n = space.len();
                Self::from_density(space, vec![1.0; n])
            }
        }
    }

    /// Gaussian density sampled at cell centers and renormalized on the grid.
    pub fn gaussian(space: StateSpace, mean: f64, variance: f64) -> Result<Self> {
        if variance <= 0.0 || !variance.is_finite() || !mean.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gaussian needs finite mean and positive variance, got ({mean}, {variance})"
            )));
        }
        let centers = space.cell_centers()?;
        let density = centers
            .iter()
            .map(|y| (-(y - mean).powi(2) / (2.0 * variance)).exp())
            .collect();
        Self::from_density(space, density)
    }

    /// Degenerate distribution concentrated at one point, kept in particle
    /// form so that sampling returns the point exactly.
    pub fn point_mass(space: StateSpace, at: f64) -> Result<Self> {
        let at = space.canonical_point(at);
        let ensemble = ParticleEnsemble::new(vec![at], None, 0)?;
        Self::from_ensemble(space, ensemble)
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn density(&self) -> Option<&[f64]> {
        match &self.repr {
            StateRepr::Density(d) => Some(d),
            _ => None,
        }
    }

    pub fn weights(&self) -> Option<&[f64]> {
        match &self.repr {
            StateRepr::Weights(w) => Some(w),
            _ => None,
        }
    }

    pub fn ensemble(&self) -> Option<&ParticleEnsemble> {
        match &self.repr {
            StateRepr::Ensemble(e) => Some(e),
            _ => None,
        }
    }

    /// Total mass. Construction keeps this at 1 within 1e-9; it is exposed so
    /// that solvers can audit conservation before renormalizing.
    pub fn mass(&self) -> f64 {
        match &self.repr {
            StateRepr::Density(d) => {
                d.iter().sum::<f64>() * self.space.cell_width().unwrap_or(f64::NAN)
            }
            StateRepr::Weights(w) => w.iter().sum(),
            StateRepr::Ensemble(e) => match e.weights() {
                Some(w) => w.iter().sum(),
                None => 1.0,
            },
        }
    }

    pub fn mean(&self) -> Result<f64> {
        match &self.repr {
            StateRepr::Density(d) => {
                let h = self.space.cell_width()?;
                let centers = self.space.cell_centers()?;
                Ok(centers.iter().zip(d).map(|(y, p)| y * p * h).sum())
            }
            StateRepr::Ensemble(e) => Ok(e.mean()),
            StateRepr::Weights(_) => Err(Error::UnsupportedRepresentation(
                "finite-space states have no numeric mean".into(),
            )),
        }
    }

    pub fn variance(&self) -> Result<f64> {
        match &self.repr {
            StateRepr::Density(d) => {
                let h = self.space.cell_width()?;
                let centers = self.space.cell_centers()?;
                let m: f64 = centers.iter().zip(d).map(|(y, p)| y * p * h).sum();
                Ok(centers.iter().zip(d).map(|(y, p)| (y - m).powi(2) * p * h).sum())
            }
            StateRepr::Ensemble(e) => Ok(e.variance()),
            StateRepr::Weights(_) => Err(Error::UnsupportedRepresentation(
                "finite-space states have no numeric variance".into(),
            )),
        }
    }
}

type PointFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum VariableRule {
    /// Pointwise rule; circle points are reduced mod 2pi before evaluation.
    Analytic(PointFn),
    /// One value per grid cell or per finite label.
    Samples(Vec<f64>),
}

/// A real-valued function of the hidden state.
#[derive(Clone)]
pub struct PhysicalVariable {
    space: StateSpace,
    rule: VariableRule,
}

impl fmt::Debug for PhysicalVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.rule {
            VariableRule::Analytic(_) => "analytic",
            VariableRule::Samples(_) => "sampled",
        };
        write!(f, "PhysicalVariable[{kind} on {}]", self.space.describe())
    }
}

impl PhysicalVariable {
    pub fn from_fn(
        space: StateSpace,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !space.is_grid() {
            return Err(Error::UnsupportedRepresentation(
                "pointwise rules need a gridded space; give finite spaces per-label samples".into(),
            ));
        }
        Ok(PhysicalVariable { space, rule: VariableRule::Analytic(Arc::new(f)) })
    }

    pub fn from_samples(space: StateSpace, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::InvalidParameter(format!(
                "{} samples for {} cells",
                values.len(),
                space.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: format!("sample value {v}"), at: "construction".into() });
        }
        Ok(PhysicalVariable { space, rule: VariableRule::Samples(values) })
    }

    /// The coordinate variable `f(y) = y`.
    pub fn coordinate(space: StateSpace) -> Result<Self> {
        Self::from_fn(space, |y| y)
    }

    pub fn constant(space: StateSpace, c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::NonFinite { what: format!("constant {c}"), at: "construction".into() });
        }
        Self::from_fn(space, move |_| c)
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    /// Evaluate at a point, reducing into the fundamental domain first.
    pub fn eval(&self, y: f64) -> Result<f64> {
        let y = self.space.canonical_point(y);
        let v = match &self.rule {
            VariableRule::Analytic(f) => f(y),
            VariableRule::Samples(_) => {
                return Err(Error::UnsupportedRepresentation(
                    "sampled variables have no off-grid values".into(),
                ))
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { what: format!("variable value {v}"), at: format!("y={y}") })
        }
    }

    /// Values at the cell centers (or labels) of the variable's own space.
    pub fn values(&self) -> Result<Vec<f64>> {
        match &self.rule {
            VariableRule::Samples(v) => Ok(v.clone()),
            VariableRule::Analytic(f) => {
                let centers = self.space.cell_centers()?;
                let mut out = Vec::with_capacity(centers.len());
                for y in centers {
                    let v = f(self.space.canonical_point(y));
                    if !v.is_finite() {
                        return Err(Error::NonFinite {
                            what: format!("variable value {v}"),
                            at: format!("y={y}"),
                        });
                    }
                    out.push(v);
                }
                Ok(out)
            }
        }
    }

    /// `alpha * self + beta * other`, realized on the common grid.
    pub fn affine_combination(&self, alpha: f64, other: &PhysicalVariable, beta: f64) -> Result<Self> {
        self.space.check_same(&other.space)?;
        let a = self.values()?;
        let b = other.values()?;
        let combined = a.iter().zip(&b).map(|(x, y)| alpha * x + beta * y).collect();
        Self::from_samples(self.space.clone(), combined)
    }

    /// Pointwise product, realized on the common grid.
    pub fn product(&self, other: &PhysicalVariable) -> Result<Self> {
        self.space.check_same(&other.space)?;
        let a = self.values()?;
        let b = other.values()?;
        let combined = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        Self::from_samples(self.space.clone(), combined)
    }
}

/// Expectation `<f>_p`.
///
/// Gridded states integrate by midpoint sum, ensembles by weighted sums over
/// particles, finite states by weighted sums over labels.
pub fn average(f: &PhysicalVariable, p: &StatisticalState) -> Result<f64> {
    f.space().check_same(p.space())?;
    match (&p.repr, &f.rule) {
        (StateRepr::Density(d), _) => {
            let h = p.space.cell_width()?;
            let values = f.values()?;
            Ok(values.iter().zip(d).map(|(v, q)| v * q * h).sum())
        }
        (StateRepr::Weights(w), _) => {
            let values = f.values()?;
            Ok(values.iter().zip(w).map(|(v, q)| v * q).sum())
        }
        (StateRepr::Ensemble(e), VariableRule::Analytic(_)) => {
            let mut acc = 0.0;
            for i in 0..e.len() {
                acc += e.weight(i) * f.eval(e.points()[i])?;
            }
            Ok(acc)
        }
        (StateRepr::Ensemble(_), VariableRule::Samples(_)) => Err(Error::UnsupportedRepresentation(
            "cannot pair a cell-sampled variable with a particle state; give the variable a pointwise rule".into(),
        )),
    }
}

/// Plain L2 pairing `integral u(y) v(y) dy` of two grid functions.
pub fn lebesgue_inner(u: &PhysicalVariable, v: &PhysicalVariable) -> Result<f64> {
    u.space().check_same(v.space())?;
    let h = u.space().cell_width()?;
    let a = u.values()?;
    let b = v.values()?;
    Ok(a.iter().zip(&b).map(|(x, y)| x * y * h).sum())
}

/// L1 distance between two states on the same space.
pub fn l1_distance(p: &StatisticalState, q: &StatisticalState) -> Result<f64> {
    p.space().check_same(q.space())?;
    match (&p.repr, &q.repr) {
        (StateRepr::Density(a), StateRepr::Density(b)) => {
            let h = p.space.cell_width()?;
            Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs() * h).sum())
        }
        (StateRepr::Weights(a), StateRepr::Weights(b)) => {
            Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
        }
        _ => Err(Error::UnsupportedRepresentation(
            "L1 distance needs two densities or two weight vectors".into(),
        )),
    }
}

/// Renormalize to unit mass. Zero or negative mass is degenerate.
pub fn normalize(p: &StatisticalState) -> Result<StatisticalState> {
    match &p.repr {
        StateRepr::Density(d) => StatisticalState::from_density(p.space.clone(), d.clone()),
        StateRepr::Weights(w) => StatisticalState::from_weights(p.space.clone(), w.clone()),
        StateRepr::Ensemble(e) => StatisticalState::from_ensemble(p.space.clone(), e.clone()),
    }
}

/// Reusable inverse-CDF sampler for a statistical state.
///
/// Densities sample a cell by inverse CDF and place the point uniformly
/// inside it; ensembles resample their own points by weight, so a point mass
/// reproduces its point exactly; finite states yield label indices.
pub struct StateSampler {
    kind: SamplerKind,
}

enum SamplerKind {
    Cells { cdf: Vec<f64>, centers: Vec<f64>, h: f64 },
    Indices { cdf: Vec<f64> },
    Points { cdf: Option<Vec<f64>>, points: Vec<f64> },
}

impl StateSampler {
    pub fn new(p: &StatisticalState) -> Result<Self> {
        let kind = match &p.repr {
            StateRepr::Density(d) => {
                let h = p.space.cell_width()?;
                let centers = p.space.cell_centers()?;
                SamplerKind::Cells { cdf: running_sum(d, h), centers, h }
            }
            StateRepr::Weights(w) => SamplerKind::Indices { cdf: running_sum(w, 1.0) },
            StateRepr::Ensemble(e) => SamplerKind::Points {
                cdf: e.weights().map(|w| running_sum(w, 1.0)),
                points: e.points().to_vec(),
            },
        };
        Ok(StateSampler { kind })
    }

    pub fn draw(&self, rng: &mut rng::Rng) -> Result<f64> {
        Ok(match &self.kind {
            SamplerKind::Cells { cdf, centers, h } => {
                let cell = pick(cdf, rng);
                let frac: f64 = rng.random();
                centers[cell] - h / 2.0 + frac * h
            }
            SamplerKind::Indices { cdf } => pick(cdf, rng) as f64,
            SamplerKind::Points { cdf: Some(cdf), points } => points[pick(cdf, rng)],
            SamplerKind::Points { cdf: None, points } => points[rng.random_range(0..points.len())],
        })
    }
}

fn running_sum(values: &[f64], weight: f64) -> Vec<f64> {
    let mut acc = 0.0;
    values
        .iter()
        .map(|v| {
            acc += v * weight;
            acc
        })
        .collect()
}

fn pick(cdf: &[f64], rng: &mut rng::Rng) -> usize {
    let total = *cdf.last().unwrap();
    let u: f64 = rng.random::<f64>() * total;
    cdf.partition_point(|c| *c < u).min(cdf.len() - 1)
}

/// Draw `count` points from `p`, deterministically in `seed`.
pub fn sample(p: &StatisticalState, count: usize, seed: u64) -> Result<ParticleEnsemble> {
    if count == 0 {
        return Err(Error::InvalidParameter("sample count must be at least 1".into()));
    }
    let sampler = StateSampler::new(p)?;
    let mut rng = rng::from_seed(seed);
    let points: Result<Vec<f64>> = (0..count).map(|_| sampler.draw(&mut rng)).collect();
    ParticleEnsemble::new(points?, None, seed)
}

/// Range of a variable: closed interval on grids, exact value set on finite
/// spaces.
#[derive(Debug, Clone, PartialEq)]
pub enum ValueRange {
    Interval { min: f64, max: f64 },
    Set(Vec<f64>),
}

impl ValueRange {
    pub fn describe(&self) -> String {
        match self {
            ValueRange::Interval { min, max } => format!("[{min}, {max}]"),
            ValueRange::Set(v) => format!(
                "{{{}}}",
                v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
            ),
        }
    }
}

/// `[min, max]` of `f` over cell centers; the exact value set on a finite
/// space.
pub fn range_of(f: &PhysicalVariable) -> Result<ValueRange> {
    let values = f.values()?;
    match f.space() {
        StateSpace::Finite { .. } => Ok(ValueRange::Set(sorted_distinct(&values, 0.0))),
        _ => {
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            Ok(ValueRange::Interval { min, max })
        }
    }
}

/// Range of `f` with detection of discrete-valued functions: when the grid
/// values merge (at `merge_tol`) into at most `max_set` distinct points the
/// result is that value set, otherwise the closed interval hull.
pub fn empirical_range(f: &PhysicalVariable, merge_tol: f64, max_set: usize) -> Result<ValueRange> {
    let values = f.values()?;
    let distinct = sorted_distinct(&values, merge_tol);
    if distinct.len() <= max_set {
        Ok(ValueRange::Set(distinct))
    } else {
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(ValueRange::Interval { min, max })
    }
}

fn sorted_distinct(values: &[f64], merge_tol: f64) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<f64> = Vec::new();
    for v in sorted {
        match out.last() {
            Some(last) if (v - last).abs() <= merge_tol => {}
            _ => out.push(v),
        }
    }
    out
}

fn point_to_range(x: f64, r: &ValueRange) -> f64 {
    match r {
        ValueRange::Interval { min, max } => (min - x).max(x - max).max(0.0),
        ValueRange::Set(points) => points
            .iter()
            .map(|p| (x - p).abs())
            .fold(f64::INFINITY, f64::min),
    }
}

fn directed_hausdorff(a: &ValueRange, b: &ValueRange) -> f64 {
    match a {
        ValueRange::Set(points) => points
            .iter()
            .map(|p| point_to_range(*p, b))
            .fold(0.0, f64::max),
        ValueRange::Interval { min, max } => match b {
            // Distance to an interval is convex, so the sup over [min, max]
            // sits at an endpoint.
            ValueRange::Interval { .. } => point_to_range(*min, b).max(point_to_range(*max, b)),
            // Distance to a finite set is piecewise linear with peaks at the
            // midpoints between consecutive set points.
            ValueRange::Set(points) => {
                let mut cands = vec![*min, *max];
                let mut sorted = points.clone();
                sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
                for w in sorted.windows(2) {
                    let mid = 0.5 * (w[0] + w[1]);
                    if mid > *min && mid < *max {
                        cands.push(mid);
                    }
                }
                cands.iter().map(|c| point_to_range(*c, b)).fold(0.0, f64::max)
            }
        },
    }
}

/// Hausdorff distance between two ranges viewed as closed subsets of the
/// reals.
pub fn hausdorff_distance(a: &ValueRange, b: &ValueRange) -> f64 {
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn uniform_circle_average_of_cos_squared() {
        let space = StateSpace::circle(360).unwrap();
        let p = StatisticalState::uniform(space.clone()).unwrap();
        let f = PhysicalVariable::from_fn(space, |l| l.cos().powi(2)).unwrap();
        let got = average(&f, &p).unwrap();
        assert!((got - 0.5).abs() <= 1e-12, "got {got}");
    }

    #[test]
    fn mismatched_spaces_refuse_to_average() {
        let a = StateSpace::circle(8).unwrap();
        let b = StateSpace::circle(16).unwrap();
        let p = StatisticalState::uniform(a).unwrap();
        let f = PhysicalVariable::coordinate(b).unwrap();
        assert!(matches!(average(&f, &p), Err(Error::SpaceMismatch(_, _))));
    }

    #[test]
    fn non_finite_variable_value_is_an_error() {
        let space = StateSpace::interval(-1.0, 1.0, 8).unwrap();
        let p = StatisticalState::uniform(space.clone()).unwrap();
        let f = PhysicalVariable::from_fn(space, |y| 1.0 / y.abs().min(0.0)).unwrap();
        assert!(matches!(average(&f, &p), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn point_mass_samples_its_point_exactly() {
        let space = StateSpace::circle(32).unwrap();
        let p = StatisticalState::point_mass(space, 1.25).unwrap();
        let draws = sample(&p, 1000, 99).unwrap();
        assert!(draws.points().iter().all(|x| *x == 1.25));
    }

    #[test]
    fn sample_count_zero_is_invalid() {
        let space = StateSpace::circle(8).unwrap();
        let p = StatisticalState::uniform(space).unwrap();
        assert!(matches!(sample(&p, 0, 1), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn normalize_rejects_zero_mass() {
        let space = StateSpace::interval(0.0, 1.0, 4).unwrap();
        assert!(matches!(
            StatisticalState::from_density(space, vec![0.0; 4]),
            Err(Error::DegenerateMeasure(_))
        ));
    }

    #[test]
    fn small_negative_densities_clip_large_ones_fail() {
        let space = StateSpace::interval(0.0, 1.0, 4).unwrap();
        let ok = StatisticalState::from_density(space.clone(), vec![1.0, -1e-13, 1.0, 1.0]).unwrap();
        assert!(ok.density().unwrap().iter().all(|v| *v >= 0.0));
        assert!(matches!(
            StatisticalState::from_density(space, vec![1.0, -1e-6, 1.0, 1.0]),
            Err(Error::DegenerateMeasure(_))
        ));
    }

    #[test]
    fn range_of_scaled_cosine_on_circle() {
        let space = StateSpace::circle(360).unwrap();
        let f = PhysicalVariable::from_fn(space, |l| 2f64.sqrt() * l.cos()).unwrap();
        match range_of(&f).unwrap() {
            ValueRange::Interval { min, max } => {
                assert!((max - 2f64.sqrt()).abs() <= 1e-3);
                assert!((min + 2f64.sqrt()).abs() <= 1e-3);
            }
            other => panic!("expected interval, got {other:?}"),
        }
    }

    #[test]
    fn range_on_finite_space_is_the_exact_value_set() {
        let labels = (0..12).map(|i| format!("s{i}")).collect();
        let space = StateSpace::finite(labels).unwrap();
        let values = (0..12)
            .map(|i| sgn((i as f64 * TAU / 12.0 + 0.01).cos()))
            .collect();
        let f = PhysicalVariable::from_samples(space, values).unwrap();
        assert_eq!(range_of(&f).unwrap(), ValueRange::Set(vec![-1.0, 1.0]));
    }

    #[test]
    fn empirical_range_detects_two_valued_grid_functions() {
        let space = StateSpace::circle(360).unwrap();
        let f = PhysicalVariable::from_fn(space.clone(), |l| sgn(l.cos())).unwrap();
        assert_eq!(
            empirical_range(&f, 1e-9, 16).unwrap(),
            ValueRange::Set(vec![-1.0, 1.0])
        );
        let smooth = PhysicalVariable::from_fn(space, |l| l.cos()).unwrap();
        assert!(matches!(
            empirical_range(&smooth, 1e-9, 16).unwrap(),
            ValueRange::Interval { .. }
        ));
    }

    #[test]
    fn hausdorff_between_interval_and_pair_set() {
        let i = ValueRange::Interval { min: -2f64.sqrt(), max: 2f64.sqrt() };
        let s = ValueRange::Set(vec![-1.0, 1.0]);
        // Farthest point of the interval from {-1, +1} is 0, at distance 1.
        assert!((hausdorff_distance(&i, &s) - 1.0).abs() <= 1e-12);
        assert_eq!(hausdorff_distance(&i, &i.clone()), 0.0);
    }

    #[test]
    fn sgn_of_zero_is_plus_one() {
        assert_eq!(sgn(0.0), 1.0);
        assert_eq!(sgn(-0.0), 1.0);
        assert_eq!(sgn(-3.0), -1.0);
    }

    #[test]
    fn sampling_matches_grid_averages_across_seeds() {
        // 3-sigma agreement between ensemble and grid averages of cos over
        // the uniform circle, checked across 100 seeds at 10^4 draws.
        let space = StateSpace::circle(256).unwrap();
        let p = StatisticalState::uniform(space.clone()).unwrap();
        let f = PhysicalVariable::from_fn(space.clone(), |l| l.cos()).unwrap();
        let grid_avg = average(&f, &p).unwrap();
        let count = 10_000;
        // std of cos over uniform circle is 1/sqrt(2)
        let band = 3.0 * (0.5f64 / count as f64).sqrt();
        let mut hits = 0;
        for seed in 0..100u64 {
            let draws = sample(&p, count, seed).unwrap();
            let state = StatisticalState::from_ensemble(space.clone(), draws).unwrap();
            let emp = average(&f, &state).unwrap();
            if (emp - grid_avg).abs() <= band {
                hits += 1;
            }
        }
        assert!(hits >= 99, "only {hits}/100 seeds inside the 3-sigma band");
    }

    #[test]
    fn kde_of_gaussian_samples_tracks_the_density() {
        let space = StateSpace::interval(-6.0, 6.0, 256).unwrap();
        let target = StatisticalState::gaussian(space.clone(), 0.5, 1.0).unwrap();
        let draws = sample(&target, 40_000, 4242).unwrap();
        let est = draws.kde(&space, None).unwrap();
        let dist = l1_distance(&est, &target).unwrap();
        assert!(dist <= 0.05, "L1 distance {dist}");
    }

    #[test]
    fn fold_point_reflects_and_wraps() {
        let interval = StateSpace::interval(-1.0, 1.0, 4).unwrap();
        assert!((interval.fold_point(1.25).unwrap() - 0.75).abs() < 1e-15);
        assert!((interval.fold_point(-1.5).unwrap() - -0.5).abs() < 1e-15);
        let circle = StateSpace::circle(4).unwrap();
        assert!((circle.fold_point(TAU + 0.5).unwrap() - 0.5).abs() < 1e-12);
        assert!((circle.fold_point(-0.5).unwrap() - (TAU - 0.5)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn average_is_linear(alpha in -3.0f64..3.0, beta in -3.0f64..3.0, shift in 0.0f64..TAU) {
            let space = StateSpace::circle(64).unwrap();
            let p = StatisticalState::gaussian_like_on_circle();
            let f = PhysicalVariable::from_fn(space.clone(), move |l| (l - shift).cos()).unwrap();
            let g = PhysicalVariable::from_fn(space.clone(), |l| (2.0 * l).sin()).unwrap();
            let combo = f.affine_combination(alpha, &g, beta).unwrap();
            let lhs = average(&combo, &p).unwrap();
            let rhs = alpha * average(&f, &p).unwrap() + beta * average(&g, &p).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs().max(rhs.abs())));
        }

        #[test]
        fn circle_variables_are_periodic(l in 0.0f64..TAU, k in -3i64..=3) {
            let space = StateSpace::circle(8).unwrap();
            let f = PhysicalVariable::from_fn(space, |l| (1.5 * l.cos() + 0.25).tanh()).unwrap();
            let shifted = f.eval(l + k as f64 * TAU).unwrap();
            prop_assert!((f.eval(l).unwrap() - shifted).abs() <= 1e-12);
        }

        #[test]
        fn construction_normalizes_mass(scale in 0.1f64..50.0) {
            let space = StateSpace::interval(-2.0, 3.0, 37).unwrap();
            let density: Vec<f64> = (0..37).map(|i| scale * (1.0 + (i as f64 * 0.37).sin().powi(2))).collect();
            let p = StatisticalState::from_density(space, density).unwrap();
            prop_assert!((p.mass() - 1.0).abs() <= 1e-9);
        }
    }

    impl StatisticalState {
        /// Tilted circle state used by the property tests.
        fn gaussian_like_on_circle() -> StatisticalState {
            let space = StateSpace::circle(64).unwrap();
            let centers = space.cell_centers().unwrap();
            let density = centers.iter().map(|l| 1.0 + 0.5 * l.cos()).collect();
            StatisticalState::from_density(space, density).unwrap()
        }
    }

    #[test]
    fn pi_is_reachable_on_even_grids() {
        // regression guard for the canonical-point reduction at the seam
        let space = StateSpace::circle(4).unwrap();
        assert_eq!(space.canonical_point(PI), PI);
        assert_eq!(space.canonical_point(-PI), PI);
    }
}
