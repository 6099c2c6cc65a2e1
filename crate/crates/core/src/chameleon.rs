//! Adaptive measurement models.
//!
//! A chameleon measurement reacts to the chosen setting: each registered
//! setting `a` carries its own pair of dynamics, a forward map `V^a` on
//! statistical states and a backward map `U^a` on physical variables, valid
//! over a declared duration. The observable actually read out at the end is
//! the declared observed variable `g^a`; its pullback `U^a(g^a)` is the ontic
//! variable, the function of the initial hidden state whose classical average
//! reproduces the observed statistics:
//!
//! ```text
//!     <U^a(g)>_{p0}  =  <g>_{V^a(p0)}        (conjugation)
//! ```
//!
//! [`ChameleonMeasurement::average_report`] evaluates both sides;
//! [`ChameleonMeasurement::verify_conjugation`] sweeps a family of test
//! variables. The ontic variable need not take values in the observed
//! spectrum, and its range may exceed the observed range;
//! [`ChameleonMeasurement::range_coincidence_report`] and
//! [`ChameleonMeasurement::spectral_check`] separate those two statements.
//! Setting dependence of the final state itself (probabilistic
//! contextuality) is measured by
//! [`ChameleonMeasurement::contextuality_witness`].

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kolmogorov::{backward_evolve, forward_evolve, DiffusionSpec, SolverConfig, TimeWindow};
use crate::statespace::{
    average, empirical_range, hausdorff_distance, l1_distance, PhysicalVariable, StateSpace,
    StatisticalState, ValueRange,
};

/// Label plus numeric parameters identifying one measurement setting.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSetting {
    label: String,
    parameters: Vec<f64>,
}

impl MeasurementSetting {
    pub fn new(label: impl Into<String>, parameters: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if label.is_empty() {
            return Err(Error::InvalidParameter("setting label must be nonempty".into()));
        }
        if parameters.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "setting {label} has a non-finite parameter"
            )));
        }
        Ok(MeasurementSetting { label, parameters })
    }

    /// Setting with a single angle parameter, reduced mod 2pi.
    pub fn angle(label: impl Into<String>, radians: f64) -> Result<Self> {
        if !radians.is_finite() {
            return Err(Error::InvalidParameter("angle must be finite".into()));
        }
        Self::new(label, vec![radians.rem_euclid(std::f64::consts::TAU)])
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn parameters(&self) -> &[f64] {
        &self.parameters
    }
}

/// Declared value set of an observed variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum(pub Vec<f64>);

pub type ForwardMap = Arc<dyn Fn(&StatisticalState) -> Result<StatisticalState> + Send + Sync>;
pub type BackwardMap = Arc<dyn Fn(&PhysicalVariable) -> Result<PhysicalVariable> + Send + Sync>;

/// The dual dynamics attached to one setting.
#[derive(Clone)]
pub struct SettingDynamics {
    forward: ForwardMap,
    backward: BackwardMap,
    duration: f64,
    observed: PhysicalVariable,
    spectrum: Option<Spectrum>,
}

impl SettingDynamics {
    /// Opaque state map and variable map with a declared duration.
    pub fn from_maps(
        forward: ForwardMap,
        backward: BackwardMap,
        duration: f64,
        observed: PhysicalVariable,
        spectrum: Option<Spectrum>,
    ) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "measurement duration must be positive, got {duration}"
            )));
        }
        Ok(SettingDynamics { forward, backward, duration, observed, spectrum })
    }

    /// Dual pair generated by a diffusion over `window`: forward
    /// Fokker-Planck evolution for states, backward Kolmogorov evolution for
    /// variables.
    pub fn from_diffusion(
        spec: DiffusionSpec,
        window: TimeWindow,
        cfg: SolverConfig,
        observed: PhysicalVariable,
        spectrum: Option<Spectrum>,
    ) -> Result<Self> {
        let fwd_spec = spec.clone();
        let fwd_cfg = cfg.clone();
        let forward: ForwardMap =
            Arc::new(move |p| forward_evolve(&fwd_spec, p, &window, &fwd_cfg));
        let backward: BackwardMap =
            Arc::new(move |g| backward_evolve(&spec, g, &window, &cfg));
        Self::from_maps(forward, backward, window.duration(), observed, spectrum)
    }

    /// Measurement that does nothing to states or variables.
    pub fn identity(
        duration: f64,
        observed: PhysicalVariable,
        spectrum: Option<Spectrum>,
    ) -> Result<Self> {
        let forward: ForwardMap = Arc::new(|p| Ok(p.clone()));
        let backward: BackwardMap = Arc::new(|g| Ok(g.clone()));
        Self::from_maps(forward, backward, duration, observed, spectrum)
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn observed(&self) -> &PhysicalVariable {
        &self.observed
    }

    pub fn spectrum(&self) -> Option<&Spectrum> {
        self.spectrum.as_ref()
    }
}

/// Both sides of the conjugation identity for one setting.
#[derive(Debug, Clone)]
pub struct AverageReport {
    pub setting: String,
    /// `<U^a(g^a)>_{p0}`: ontic variable averaged in the preparation.
    pub classical: f64,
    /// `<g^a>_{V^a(p0)}`: observed variable averaged in the evolved state.
    pub observational: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct ConjugationCheck {
    pub defects: Vec<f64>,
    pub max_defect: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct RangeCoincidenceReport {
    pub setting: String,
    pub ontic_range: ValueRange,
    pub observed_range: ValueRange,
    pub hausdorff: f64,
    pub coincide: bool,
}

/// Tolerance for declaring two ranges coincident.
pub const RANGE_COINCIDENCE_TOL: f64 = 1e-6;
/// Observed grid values must sit this close to a declared spectrum point.
pub const SPECTRUM_TOL: f64 = 1e-9;
/// Grid values merging within this tolerance count as one range point.
const RANGE_MERGE_TOL: f64 = 1e-9;
/// At most this many distinct values reports as a finite value set.
const RANGE_SET_CAP: usize = 16;

/// A measurement whose dynamics depend on the setting.
pub struct ChameleonMeasurement {
    space: StateSpace,
    entries: Vec<(MeasurementSetting, SettingDynamics)>,
}

impl ChameleonMeasurement {
    pub fn new(space: StateSpace) -> Self {
        ChameleonMeasurement { space, entries: Vec::new() }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    /// Attach dynamics to a setting. Labels are unique.
    pub fn register(&mut self, setting: MeasurementSetting, dynamics: SettingDynamics) -> Result<()> {
        if self.entries.iter().any(|(s, _)| s.label() == setting.label()) {
            return Err(Error::InvalidParameter(format!(
                "setting {} is already registered",
                setting.label()
            )));
        }
        if dynamics.observed.space() != &self.space {
            return Err(Error::SpaceMismatch(
                self.space.describe(),
                dynamics.observed.space().describe(),
            ));
        }
        self.entries.push((setting, dynamics));
        Ok(())
    }

    pub fn settings(&self) -> impl Iterator<Item = &MeasurementSetting> {
        self.entries.iter().map(|(s, _)| s)
    }

    fn dynamics(&self, setting: &MeasurementSetting) -> Result<&SettingDynamics> {
        self.entries
            .iter()
            .find(|(s, _)| s.label() == setting.label())
            .map(|(_, d)| d)
            .ok_or_else(|| Error::UnknownSetting(setting.label().to_string()))
    }

    /// The state actually probed at readout time: `V^a(p0)`.
    pub fn evolved_state(
        &self,
        setting: &MeasurementSetting,
        p0: &StatisticalState,
    ) -> Result<StatisticalState> {
        let dynamics = self.dynamics(setting)?;
        let out = (dynamics.forward)(p0)?;
        if out.space() != &self.space {
            return Err(Error::SpaceMismatch(self.space.describe(), out.space().describe()));
        }
        if (out.mass() - 1.0).abs() > 1e-6 {
            return Err(Error::SchemeFailure(format!(
                "forward map for setting {} broke normalization (mass {})",
                setting.label(),
                out.mass()
            )));
        }
        Ok(out)
    }

    /// Pullback of the observed variable to the preparation time:
    /// `U^a(g^a)`.
    pub fn ontic_variable(&self, setting: &MeasurementSetting) -> Result<PhysicalVariable> {
        let dynamics = self.dynamics(setting)?;
        (dynamics.backward)(&dynamics.observed)
    }

    pub fn observed_variable(&self, setting: &MeasurementSetting) -> Result<&PhysicalVariable> {
        Ok(self.dynamics(setting)?.observed())
    }

    /// `<U^a(g^a)>_{p0}`.
    pub fn classical_average(
        &self,
        setting: &MeasurementSetting,
        p0: &StatisticalState,
    ) -> Result<f64> {
        average(&self.ontic_variable(setting)?, p0)
    }

    /// `<g^a>_{V^a(p0)}`.
    pub fn observational_average(
        &self,
        setting: &MeasurementSetting,
        p0: &StatisticalState,
    ) -> Result<f64> {
        let dynamics = self.dynamics(setting)?;
        average(&dynamics.observed, &self.evolved_state(setting, p0)?)
    }

    pub fn average_report(
        &self,
        setting: &MeasurementSetting,
        p0: &StatisticalState,
    ) -> Result<AverageReport> {
        let classical = self.classical_average(setting, p0)?;
        let observational = self.observational_average(setting, p0)?;
        Ok(AverageReport {
            setting: setting.label().to_string(),
            classical,
            observational,
            gap: (classical - observational).abs(),
        })
    }

    /// Conjugation defects `|<U^a(g)>_{p0} - <g>_{V^a(p0)}|` over a family of
    /// test variables.
    pub fn verify_conjugation(
        &self,
        setting: &MeasurementSetting,
        p0: &StatisticalState,
        family: &[PhysicalVariable],
        tolerance: f64,
    ) -> Result<ConjugationCheck> {
        if family.is_empty() {
            return Err(Error::InvalidParameter("conjugation check needs at least one variable".into()));
        }
        let dynamics = self.dynamics(setting)?;
        let evolved = self.evolved_state(setting, p0)?;
        let mut defects = Vec::with_capacity(family.len());
        for g in family {
            let ug = (dynamics.backward)(g)?;
            let defect = (average(&ug, p0)? - average(g, &evolved)?).abs();
            defects.push(defect);
        }
        let max_defect = defects.iter().cloned().fold(0.0, f64::max);
        Ok(ConjugationCheck { defects, max_defect, tolerance, pass: max_defect <= tolerance })
    }

    /// Compare the ranges of the ontic and observed variables.
    ///
    /// Both ranges are computed the same way: grids that take at most a
    /// handful of distinct values report the exact value set, anything else
    /// reports the interval hull. Coincidence means Hausdorff distance within
    /// [`RANGE_COINCIDENCE_TOL`].
    pub fn range_coincidence_report(
        &self,
        setting: &MeasurementSetting,
    ) -> Result<RangeCoincidenceReport> {
        let dynamics = self.dynamics(setting)?;
        let ontic = self.ontic_variable(setting)?;
        let ontic_range = empirical_range(&ontic, RANGE_MERGE_TOL, RANGE_SET_CAP)?;
        let observed_range = empirical_range(&dynamics.observed, RANGE_MERGE_TOL, RANGE_SET_CAP)?;
        let hausdorff = hausdorff_distance(&ontic_range, &observed_range);
        Ok(RangeCoincidenceReport {
            setting: setting.label().to_string(),
            ontic_range,
            observed_range,
            hausdorff,
            coincide: hausdorff <= RANGE_COINCIDENCE_TOL,
        })
    }

    /// Does the observed variable take values only in its declared spectrum?
    pub fn spectral_check(&self, setting: &MeasurementSetting) -> Result<bool> {
        let dynamics = self.dynamics(setting)?;
        let spectrum = dynamics
            .spectrum
            .as_ref()
            .ok_or_else(|| Error::MissingSpectrum(setting.label().to_string()))?;
        let values = dynamics.observed.values()?;
        Ok(values.iter().all(|v| {
            spectrum.0.iter().any(|s| (v - s).abs() <= SPECTRUM_TOL)
        }))
    }

    /// L1 distance between the evolved states of two settings: the
    /// probabilistic-contextuality witness.
    pub fn contextuality_witness(
        &self,
        first: &MeasurementSetting,
        second: &MeasurementSetting,
        p0: &StatisticalState,
    ) -> Result<f64> {
        let a = self.evolved_state(first, p0)?;
        let b = self.evolved_state(second, p0)?;
        l1_distance(&a, &b)
    }
}
