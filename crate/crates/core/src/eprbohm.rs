//! Singlet correlation models.
//!
//! Two realizations of the EPR-Bohm statistics `E(a,b) = -cos(a-b)` live
//! here. [`SingletFunctionalModel`] (R1) assigns each side a deterministic
//! function of a shared hidden angle, `sqrt(2)cos(lambda-a)` for Alice and
//! `-sqrt(2)cos(lambda-b)` for Bob, each reading only its own setting. The
//! price of locality is range: both variables fill `[-sqrt(2), sqrt(2)]`
//! rather than the observed two-point spectrum. [`SingletOutcomeModel`] (R2)
//! instead gives the observed `{-1,+1}` outcomes directly, via a joint pmf
//! that depends on the setting pair as a whole; its marginals stay uniform
//! (no signaling) while the joint distribution is contextual.
//!
//! The pair `(sqrt(2)cos, -sqrt(2)cos)` is the minimal functional
//! instantiation that reproduces the singlet correlation exactly while
//! exhibiting the range mismatch; [`SingletFunctionalModel::as_chameleon`]
//! packages it as adaptive dual dynamics whose observed variable is the sign
//! of the ontic one.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};
use std::sync::Arc;

use rand::Rng as _;

use crate::chameleon::{
    BackwardMap, ChameleonMeasurement, ForwardMap, MeasurementSetting, SettingDynamics, Spectrum,
};
use crate::error::{Error, Result};
use crate::rng;
use crate::statespace::{sgn, PhysicalVariable, StateSpace, StatisticalState};

/// The angle family attaining the Tsirelson bound: `(a, a', b, b')`.
pub const STANDARD_ANGLES: (f64, f64, f64, f64) = (0.0, FRAC_PI_2, FRAC_PI_4, 3.0 * FRAC_PI_4);

/// Standard singlet prediction, the oracle every model is held to.
pub fn quantum_reference(a: f64, b: f64) -> f64 {
    -(a - b).cos()
}

fn check_angle(name: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value.rem_euclid(TAU))
    } else {
        Err(Error::InvalidParameter(format!("angle {name} must be finite, got {value}")))
    }
}

/// Deterministic per-side functions of a shared hidden angle (R1).
#[derive(Debug, Clone)]
pub struct SingletFunctionalModel {
    a: f64,
    b: f64,
    grid_n: usize,
}

/// Quadrature below this resolution is not accepted.
pub const MIN_GRID_N: usize = 360;
const DEFAULT_GRID_N: usize = 720;

impl SingletFunctionalModel {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        Ok(SingletFunctionalModel {
            a: check_angle("a", a)?,
            b: check_angle("b", b)?,
            grid_n: DEFAULT_GRID_N,
        })
    }

    pub fn with_grid_n(mut self, n: usize) -> Result<Self> {
        if n < MIN_GRID_N {
            return Err(Error::InvalidParameter(format!(
                "quadrature grid needs at least {MIN_GRID_N} cells, got {n}"
            )));
        }
        self.grid_n = n;
        Ok(self)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    pub fn space(&self) -> StateSpace {
        StateSpace::circle(self.grid_n).expect("validated grid size")
    }

    /// Alice's variable at the hidden angle: reads only `(lambda, a)`.
    pub fn alice_value(&self, lambda: f64) -> f64 {
        2f64.sqrt() * (lambda - self.a).cos()
    }

    /// Bob's variable at the hidden angle: reads only `(lambda, b)`.
    pub fn bob_value(&self, lambda: f64) -> f64 {
        -(2f64.sqrt()) * (lambda - self.b).cos()
    }

    pub fn alice_variable(&self) -> Result<PhysicalVariable> {
        let a = self.a;
        PhysicalVariable::from_fn(self.space(), move |l| 2f64.sqrt() * (l - a).cos())
    }

    pub fn bob_variable(&self) -> Result<PhysicalVariable> {
        let b = self.b;
        PhysicalVariable::from_fn(self.space(), move |l| -(2f64.sqrt()) * (l - b).cos())
    }

    /// Package each side as an adaptive measurement on the shared circle.
    ///
    /// The observed variable is the sign of the ontic one, valued in the
    /// declared spectrum `{-1,+1}`; the backward map pulls it back to the
    /// full-range `+/-sqrt(2)cos(lambda-angle)`, and the forward map is the
    /// exact conjugate, which fixes the uniform preparation for every
    /// setting. Returns `(alice, bob)`.
    pub fn as_chameleon(&self) -> Result<(ChameleonMeasurement, ChameleonMeasurement)> {
        let space = self.space();
        let mut alice = ChameleonMeasurement::new(space.clone());
        alice.register(
            MeasurementSetting::angle("alice", self.a)?,
            singlet_side_dynamics(&space, self.a, Side::Alice)?,
        )?;
        let mut bob = ChameleonMeasurement::new(space.clone());
        bob.register(
            MeasurementSetting::angle("bob", self.b)?,
            singlet_side_dynamics(&space, self.b, Side::Bob)?,
        )?;
        Ok((alice, bob))
    }
}

/// Which arm of the pair a dynamics belongs to; Bob's carries the opposite
/// sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Alice,
    Bob,
}

impl Side {
    fn orientation(self) -> f64 {
        match self {
            Side::Alice => 1.0,
            Side::Bob => -1.0,
        }
    }
}

/// The dual dynamics of one singlet arm at a given setting angle.
///
/// Backward map: `U(g) = mean(g) + (sqrt(2)/4) cos(lambda-angle) * <cos(.-angle), g>`,
/// which sends the observed sign variable to the ontic `+/-sqrt(2)cos` and
/// leaves constants alone. Forward map: the exact conjugate
/// `V(p) = 1/2pi + (sqrt(2)/4) cos(.-angle) * <cos(.-angle), p>`, so the
/// conjugation identity holds for every variable and every density, and the
/// uniform state is a fixed point of every setting. Strongly tilted
/// preparations can leave the model's domain by driving the mapped density
/// negative; such inputs are rejected rather than clipped.
pub fn singlet_side_dynamics(space: &StateSpace, angle: f64, side: Side) -> Result<SettingDynamics> {
    let angle = check_angle("setting", angle)?;
    if !matches!(space, StateSpace::Circle { .. }) {
        return Err(Error::InvalidParameter(
            "singlet side dynamics need a circle hidden space".into(),
        ));
    }
    let orient = side.orientation();
    let centers = space.cell_centers()?;
    let h = space.cell_width()?;

    let fwd_centers = centers.clone();
    let fwd_space = space.clone();
    let forward: ForwardMap = Arc::new(move |p: &StatisticalState| {
        let density = p.density().ok_or(Error::UnsupportedRepresentation(
            "singlet forward map needs a density state".into(),
        ))?;
        let tilt: f64 = fwd_centers
            .iter()
            .zip(density)
            .map(|(l, q)| (l - angle).cos() * q)
            .sum::<f64>()
            * h;
        let coeff = 2f64.sqrt() / 4.0 * tilt;
        let out: Vec<f64> = fwd_centers
            .iter()
            .map(|l| 1.0 / TAU + coeff * (l - angle).cos())
            .collect();
        StatisticalState::from_density_clipped(fwd_space.clone(), out, 1e-9)
    });

    let bwd_space = space.clone();
    let backward: BackwardMap = Arc::new(move |g: &PhysicalVariable| {
        let values = g.values()?;
        let n = values.len() as f64;
        let mean: f64 = values.iter().sum::<f64>() / n;
        let overlap: f64 = centers
            .iter()
            .zip(&values)
            .map(|(l, v)| (l - angle).cos() * v)
            .sum::<f64>()
            * h;
        let coeff = 2f64.sqrt() / 4.0 * overlap;
        PhysicalVariable::from_fn(bwd_space.clone(), move |l| mean + coeff * (l - angle).cos())
    });

    let observed = PhysicalVariable::from_fn(space.clone(), move |l| {
        orient * sgn((l - angle).cos())
    })?;
    SettingDynamics::from_maps(forward, backward, 1.0, observed, Some(Spectrum(vec![-1.0, 1.0])))
}

/// Preparation tilted away from uniform: density `(1 + amp*cos(lambda))/2pi`.
///
/// The uniform state is fixed by every singlet forward map, so setting
/// dependence of the evolved state only becomes visible on probes like this.
pub fn tilted_probe(space: &StateSpace, amplitude: f64) -> Result<StatisticalState> {
    if !amplitude.is_finite() || amplitude.abs() >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "tilt amplitude must lie in (-1, 1), got {amplitude}"
        )));
    }
    let density = space
        .cell_centers()?
        .iter()
        .map(|l| (1.0 + amplitude * l.cos()) / TAU)
        .collect();
    StatisticalState::from_density(space.clone(), density)
}

/// Joint `{-1,+1}` outcome distribution per setting pair (R2).
#[derive(Debug, Clone, Default)]
pub struct SingletOutcomeModel {
    perturbation: Option<PmfPerturbation>,
}

/// Test fixture: extra mass on the `(+1,+1)` cell of one specific setting
/// pair, a deliberate no-signaling violation for exercising the diagnostic.
#[derive(Debug, Clone)]
struct PmfPerturbation {
    a: f64,
    b: f64,
    epsilon: f64,
}

const PERTURBATION_ANGLE_TOL: f64 = 1e-12;

impl SingletOutcomeModel {
    pub fn new() -> Self {
        SingletOutcomeModel { perturbation: None }
    }

    /// Clean model plus `epsilon` on the `(+1,+1)` cell at the pair `(a, b)`.
    /// The perturbed table is intentionally unnormalized; it exists so that
    /// [`SingletOutcomeModel::no_signaling_defect`] has a known-positive case
    /// to detect.
    pub fn with_perturbation(a: f64, b: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "perturbation must be finite and nonnegative, got {epsilon}"
            )));
        }
        Ok(SingletOutcomeModel {
            perturbation: Some(PmfPerturbation {
                a: check_angle("a", a)?,
                b: check_angle("b", b)?,
                epsilon,
            }),
        })
    }

    /// The four cells `((s, t), P(s,t|a,b))` with `P = (1 - st*cos(a-b))/4`.
    pub fn joint_pmf(&self, a: f64, b: f64) -> [((i8, i8), f64); 4] {
        let c = (a - b).cos();
        let mut cells = [
            ((1i8, 1i8), (1.0 - c) / 4.0),
            ((1, -1), (1.0 + c) / 4.0),
            ((-1, 1), (1.0 + c) / 4.0),
            ((-1, -1), (1.0 - c) / 4.0),
        ];
        if let Some(p) = &self.perturbation {
            let same = (a.rem_euclid(TAU) - p.a).abs() <= PERTURBATION_ANGLE_TOL
                && (b.rem_euclid(TAU) - p.b).abs() <= PERTURBATION_ANGLE_TOL;
            if same {
                cells[0].1 += p.epsilon;
            }
        }
        cells
    }

    pub fn marginal_alice(&self, s: i8, a: f64, b: f64) -> f64 {
        self.joint_pmf(a, b)
            .iter()
            .filter(|((si, _), _)| *si == s)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn marginal_bob(&self, t: i8, a: f64, b: f64) -> f64 {
        self.joint_pmf(a, b)
            .iter()
            .filter(|((_, ti), _)| *ti == t)
            .map(|(_, p)| p)
            .sum()
    }

    fn expectation(&self, a: f64, b: f64) -> f64 {
        self.joint_pmf(a, b)
            .iter()
            .map(|((s, t), p)| f64::from(*s) * f64::from(*t) * p)
            .sum()
    }

    /// Largest marginal shift when the far side switches setting.
    ///
    /// Alice's marginals are compared between Bob settings `b` and `b_alt`;
    /// symmetrically, Bob's are compared between Alice settings `a` and
    /// `b_alt` (the third angle doubles as the far-side alternative). The
    /// clean pmf gives zero up to last-bit rounding.
    pub fn no_signaling_defect(&self, a: f64, b: f64, b_alt: f64) -> f64 {
        let alice = [1i8, -1]
            .iter()
            .map(|&s| (self.marginal_alice(s, a, b) - self.marginal_alice(s, a, b_alt)).abs())
            .fold(0.0, f64::max);
        let bob = [1i8, -1]
            .iter()
            .map(|&t| (self.marginal_bob(t, a, b) - self.marginal_bob(t, b_alt, b)).abs())
            .fold(0.0, f64::max);
        alice.max(bob)
    }
}

/// Either singlet realization, for correlation and CHSH evaluation.
#[derive(Debug, Clone)]
pub enum EprModel {
    Functional(SingletFunctionalModel),
    Outcome(SingletOutcomeModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationMethod {
    Quadrature,
    MonteCarlo { count: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    Quadrature,
    MonteCarlo,
}

impl MethodKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodKind::Quadrature => "quadrature",
            MethodKind::MonteCarlo => "monte-carlo",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorrelationResult {
    pub value: f64,
    pub method: MethodKind,
    pub mc_std_error: Option<f64>,
    pub seed: Option<u64>,
}

impl CorrelationResult {
    fn exact(value: f64) -> Self {
        CorrelationResult { value, method: MethodKind::Quadrature, mc_std_error: None, seed: None }
    }

    fn sampled(value: f64, std_error: f64, seed: u64) -> Self {
        CorrelationResult {
            value,
            method: MethodKind::MonteCarlo,
            mc_std_error: Some(std_error),
            seed: Some(seed),
        }
    }
}

/// Mean and standard error of a stream of bounded sample values.
pub(crate) fn mc_mean_and_error(samples: impl Iterator<Item = f64>, count: u64) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for x in samples {
        sum += x;
        sum_sq += x * x;
    }
    let n = count as f64;
    let mean = sum / n;
    if count < 2 {
        return (mean, 0.0);
    }
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

/// `E(a,b)` for either model.
///
/// Quadrature on R1 is a uniform-grid sum over the circle, exact for
/// trigonometric polynomials below the grid's Nyquist order, so the result
/// is `-cos(a-b)` to rounding; on R2 the pmf expectation is closed-form.
/// Monte Carlo draws hidden angles (R1) or outcome pairs (R2) from a
/// dedicated seeded stream and reports the sample standard error.
pub fn correlation(
    model: &EprModel,
    a: f64,
    b: f64,
    method: CorrelationMethod,
) -> Result<CorrelationResult> {
    let a = check_angle("a", a)?;
    let b = check_angle("b", b)?;
    match (model, method) {
        (EprModel::Functional(m), CorrelationMethod::Quadrature) => {
            let pair = SingletFunctionalModel { a, b, grid_n: m.grid_n };
            let sum: f64 = pair
                .space()
                .cell_centers()?
                .iter()
                .map(|&l| pair.alice_value(l) * pair.bob_value(l))
                .sum();
            Ok(CorrelationResult::exact(sum / m.grid_n as f64))
        }
        (EprModel::Outcome(m), CorrelationMethod::Quadrature) => {
            Ok(CorrelationResult::exact(m.expectation(a, b)))
        }
        (EprModel::Functional(m), CorrelationMethod::MonteCarlo { count, seed }) => {
            if count == 0 {
                return Err(Error::InvalidParameter("monte-carlo needs count >= 1".into()));
            }
            let pair = SingletFunctionalModel { a, b, grid_n: m.grid_n };
            let mut rng = rng::from_seed(seed);
            let samples = (0..count).map(|_| {
                let lambda = rng.random::<f64>() * TAU;
                pair.alice_value(lambda) * pair.bob_value(lambda)
            });
            let (mean, err) = mc_mean_and_error(samples, count);
            Ok(CorrelationResult::sampled(mean, err, seed))
        }
        (EprModel::Outcome(m), CorrelationMethod::MonteCarlo { count, seed }) => {
            if count == 0 {
                return Err(Error::InvalidParameter("monte-carlo needs count >= 1".into()));
            }
            let cells = m.joint_pmf(a, b);
            let total: f64 = cells.iter().map(|(_, p)| p).sum();
            if !(total > 0.0) {
                return Err(Error::DegenerateMeasure("outcome pmf has no mass".into()));
            }
            let mut rng = rng::from_seed(seed);
            let samples = (0..count).map(|_| {
                let mut u = rng.random::<f64>() * total;
                for ((s, t), p) in &cells {
                    if u < *p {
                        return f64::from(*s) * f64::from(*t);
                    }
                    u -= p;
                }
                let ((s, t), _) = cells[3];
                f64::from(s) * f64::from(t)
            });
            let (mean, err) = mc_mean_and_error(samples, count);
            Ok(CorrelationResult::sampled(mean, err, seed))
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChshResult {
    /// `S = E(a,b) + E(a',b) + E(a',b') - E(a,b')`.
    pub s: f64,
    /// The four correlations in the order above.
    pub correlations: [CorrelationResult; 4],
}

impl ChshResult {
    pub fn magnitude(&self) -> f64 {
        self.s.abs()
    }
}

pub fn chsh(
    model: &EprModel,
    a: f64,
    a_alt: f64,
    b: f64,
    b_alt: f64,
    method: CorrelationMethod,
) -> Result<ChshResult> {
    let e_ab = correlation(model, a, b, method)?;
    let e_altb = correlation(model, a_alt, b, method)?;
    let e_altalt = correlation(model, a_alt, b_alt, method)?;
    let e_abalt = correlation(model, a, b_alt, method)?;
    let s = e_ab.value + e_altb.value + e_altalt.value - e_abalt.value;
    Ok(ChshResult { s, correlations: [e_ab, e_altb, e_altalt, e_abalt] })
}

/// Marginal-shift diagnostic; only the outcome model has a pmf to check.
pub fn no_signaling_defect(model: &EprModel, a: f64, b: f64, b_alt: f64) -> Result<f64> {
    match model {
        EprModel::Outcome(m) => Ok(m.no_signaling_defect(a, b, b_alt)),
        EprModel::Functional(_) => Err(Error::UnsupportedModel(
            "no-signaling defect needs an outcome pmf; the functional model has none".into(),
        )),
    }
}
