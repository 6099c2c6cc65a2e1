//! Python bindings: the headline operations of the core crate, with plain
//! floats and tuples at the boundary.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use chamsim::eprbohm::{
    self, CorrelationMethod, EprModel, Side, SingletFunctionalModel, SingletOutcomeModel,
};
use chamsim::kolmogorov::{
    backward_evolve, conjugation_defect, forward_evolve, simulate_paths_threaded, DiffusionSpec,
    SolverConfig, TimeWindow,
};
use chamsim::sampling::{self, DetectionModel, RateSide};
use chamsim::scenario;
use chamsim::statespace::{PhysicalVariable, StateSpace, StatisticalState, ValueRange};
use chamsim::Error;

fn to_py(e: Error) -> PyErr {
    match &e {
        Error::Config { .. }
        | Error::InvalidParameter(_)
        | Error::UnknownSetting(_)
        | Error::UnsupportedModel(_)
        | Error::MissingSpectrum(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn ou_pieces(
    mean0: f64,
    var0: f64,
    lower: f64,
    upper: f64,
    n: usize,
    dt: f64,
    horizon: f64,
) -> Result<(StatisticalState, TimeWindow, SolverConfig), Error> {
    let space = StateSpace::interval(lower, upper, n)?;
    let p0 = StatisticalState::gaussian(space, mean0, var0)?;
    let window = TimeWindow::new(0.0, horizon)?;
    let cfg = SolverConfig::new(dt)?;
    Ok((p0, window, cfg))
}

/// A drift/diffusion pair with forward and backward grid solvers attached.
#[pyclass]
struct Diffusion {
    spec: DiffusionSpec,
}

#[pymethods]
impl Diffusion {
    #[staticmethod]
    fn ornstein_uhlenbeck(theta: f64, sigma: f64) -> Self {
        Diffusion { spec: DiffusionSpec::ornstein_uhlenbeck(theta, sigma) }
    }

    #[staticmethod]
    fn constant(drift: f64, sigma: f64) -> Self {
        Diffusion { spec: DiffusionSpec::constant(drift, sigma) }
    }

    /// Evolve a Gaussian preparation forward; returns `(mean, variance,
    /// mass)` of the final state.
    #[pyo3(signature = (mean0, var0, lower=-8.0, upper=8.0, n=512, dt=1e-3, horizon=1.0))]
    fn forward_moments(
        &self,
        mean0: f64,
        var0: f64,
        lower: f64,
        upper: f64,
        n: usize,
        dt: f64,
        horizon: f64,
    ) -> PyResult<(f64, f64, f64)> {
        let (p0, window, cfg) = ou_pieces(mean0, var0, lower, upper, n, dt, horizon).map_err(to_py)?;
        let p = forward_evolve(&self.spec, &p0, &window, &cfg).map_err(to_py)?;
        Ok((p.mean().map_err(to_py)?, p.variance().map_err(to_py)?, p.mass()))
    }

    /// Pull the coordinate variable back through the backward equation and
    /// evaluate it on the initial Gaussian; returns `<U(y)>_p0`.
    #[pyo3(signature = (mean0, var0, lower=-8.0, upper=8.0, n=512, dt=1e-3, horizon=1.0))]
    fn classical_mean(
        &self,
        mean0: f64,
        var0: f64,
        lower: f64,
        upper: f64,
        n: usize,
        dt: f64,
        horizon: f64,
    ) -> PyResult<f64> {
        let (p0, window, cfg) = ou_pieces(mean0, var0, lower, upper, n, dt, horizon).map_err(to_py)?;
        let g = PhysicalVariable::coordinate(p0.space().clone()).map_err(to_py)?;
        let pulled = backward_evolve(&self.spec, &g, &window, &cfg).map_err(to_py)?;
        chamsim::statespace::average(&pulled, &p0).map_err(to_py)
    }

    /// `|<U(g), p0> - <g, V(p0)>|` for `variable` in `{"y", "y^2", "cos"}`.
    #[pyo3(signature = (variable, mean0, var0, lower=-8.0, upper=8.0, n=512, dt=1e-3, horizon=1.0))]
    fn conjugation_defect(
        &self,
        variable: &str,
        mean0: f64,
        var0: f64,
        lower: f64,
        upper: f64,
        n: usize,
        dt: f64,
        horizon: f64,
    ) -> PyResult<f64> {
        let (p0, window, cfg) = ou_pieces(mean0, var0, lower, upper, n, dt, horizon).map_err(to_py)?;
        let space = p0.space().clone();
        let g = match variable {
            "y" => PhysicalVariable::coordinate(space),
            "y^2" => PhysicalVariable::from_fn(space, |y| y * y),
            "cos" => PhysicalVariable::from_fn(space, |y| y.cos()),
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown variable {other:?}; expected one of 'y', 'y^2', 'cos'"
                )))
            }
        }
        .map_err(to_py)?;
        conjugation_defect(&self.spec, &p0, &g, &window, &cfg).map_err(to_py)
    }

    /// Euler-Maruyama sample moments of the final-time law; returns
    /// `(mean, variance)`.
    #[pyo3(signature = (mean0, var0, paths, seed, lower=-8.0, upper=8.0, n=512, dt=1e-3, horizon=1.0, threads=1))]
    #[allow(clippy::too_many_arguments)]
    fn sample_moments(
        &self,
        mean0: f64,
        var0: f64,
        paths: usize,
        seed: u64,
        lower: f64,
        upper: f64,
        n: usize,
        dt: f64,
        horizon: f64,
        threads: usize,
    ) -> PyResult<(f64, f64)> {
        let (p0, window, _) = ou_pieces(mean0, var0, lower, upper, n, dt, horizon).map_err(to_py)?;
        let space = p0.space().clone();
        let ensemble = simulate_paths_threaded(&self.spec, &p0, &window, paths, dt, seed, threads)
            .map_err(to_py)?;
        let state = StatisticalState::from_ensemble(space, ensemble).map_err(to_py)?;
        Ok((state.mean().map_err(to_py)?, state.variance().map_err(to_py)?))
    }
}

/// Either singlet realization: shared-circle functional values or the
/// outcome pmf.
#[pyclass]
struct SingletModel {
    inner: EprModel,
}

#[pymethods]
impl SingletModel {
    #[staticmethod]
    #[pyo3(signature = (grid_n=720))]
    fn functional(grid_n: usize) -> PyResult<Self> {
        let m = SingletFunctionalModel::new(0.0, 0.0)
            .and_then(|m| m.with_grid_n(grid_n))
            .map_err(to_py)?;
        Ok(SingletModel { inner: EprModel::Functional(m) })
    }

    #[staticmethod]
    fn outcome() -> Self {
        SingletModel { inner: EprModel::Outcome(SingletOutcomeModel::new()) }
    }

    /// Outcome model with `epsilon` added to the `(+1,+1)` cell at one
    /// specific setting pair, for no-signaling diagnostics.
    #[staticmethod]
    fn perturbed_outcome(a: f64, b: f64, epsilon: f64) -> PyResult<Self> {
        let m = SingletOutcomeModel::with_perturbation(a, b, epsilon).map_err(to_py)?;
        Ok(SingletModel { inner: EprModel::Outcome(m) })
    }

    fn correlation(&self, a: f64, b: f64) -> PyResult<f64> {
        eprbohm::correlation(&self.inner, a, b, CorrelationMethod::Quadrature)
            .map(|e| e.value)
            .map_err(to_py)
    }

    /// Monte Carlo correlation; returns `(value, std_error)`.
    fn correlation_mc(&self, a: f64, b: f64, count: u64, seed: u64) -> PyResult<(f64, f64)> {
        let e = eprbohm::correlation(&self.inner, a, b, CorrelationMethod::MonteCarlo { count, seed })
            .map_err(to_py)?;
        Ok((e.value, e.mc_std_error.unwrap_or(0.0)))
    }

    fn chsh(&self, a: f64, a_alt: f64, b: f64, b_alt: f64) -> PyResult<f64> {
        eprbohm::chsh(&self.inner, a, a_alt, b, b_alt, CorrelationMethod::Quadrature)
            .map(|r| r.s)
            .map_err(to_py)
    }

    fn no_signaling_defect(&self, a: f64, b: f64, b_alt: f64) -> PyResult<f64> {
        eprbohm::no_signaling_defect(&self.inner, a, b, b_alt).map_err(to_py)
    }
}

/// Tallies from an event-by-event detection run.
#[pyclass]
struct LoopholeCounts {
    #[pyo3(get)]
    emitted: u64,
    #[pyo3(get)]
    n_pp: u64,
    #[pyo3(get)]
    n_pm: u64,
    #[pyo3(get)]
    n_mp: u64,
    #[pyo3(get)]
    n_mm: u64,
    #[pyo3(get)]
    alice_singles: u64,
    #[pyo3(get)]
    bob_singles: u64,
    #[pyo3(get)]
    estimate: Option<f64>,
    #[pyo3(get)]
    std_error: Option<f64>,
}

/// Local outcome rules plus detection efficiencies; the default model's
/// detected sub-ensemble reproduces the singlet correlation.
#[pyclass]
struct Detection {
    model: DetectionModel,
}

#[pymethods]
impl Detection {
    #[staticmethod]
    #[pyo3(name = "default")]
    fn default_model() -> Self {
        Detection { model: DetectionModel::default() }
    }

    #[staticmethod]
    fn no_loss() -> Self {
        Detection { model: DetectionModel::no_loss() }
    }

    fn postselected_correlation(&self, a: f64, b: f64) -> PyResult<f64> {
        sampling::postselected_correlation(&self.model, a, b, CorrelationMethod::Quadrature)
            .map(|e| e.value)
            .map_err(to_py)
    }

    fn full_ensemble_correlation(&self, a: f64, b: f64) -> PyResult<f64> {
        sampling::full_ensemble_correlation(&self.model, a, b, CorrelationMethod::Quadrature)
            .map(|e| e.value)
            .map_err(to_py)
    }

    fn postselected_chsh(&self, a: f64, a_alt: f64, b: f64, b_alt: f64) -> PyResult<f64> {
        sampling::postselected_chsh(&self.model, a, a_alt, b, b_alt, CorrelationMethod::Quadrature)
            .map(|r| r.s)
            .map_err(to_py)
    }

    fn full_ensemble_chsh(&self, a: f64, a_alt: f64, b: f64, b_alt: f64) -> PyResult<f64> {
        sampling::full_ensemble_chsh(&self.model, a, a_alt, b, b_alt, CorrelationMethod::Quadrature)
            .map(|r| r.s)
            .map_err(to_py)
    }

    /// `side` is one of `"alice"`, `"bob"`, `"coincidence"`.
    fn detection_rate(&self, a: f64, b: f64, side: &str) -> PyResult<f64> {
        let side = match side {
            "alice" => RateSide::Alice,
            "bob" => RateSide::Bob,
            "coincidence" => RateSide::Coincidence,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown side {other:?}; expected 'alice', 'bob' or 'coincidence'"
                )))
            }
        };
        sampling::detection_rate(&self.model, a, b, side).map_err(to_py)
    }

    fn fair_sampling_defect(&self, pair1: (f64, f64), pair2: (f64, f64)) -> PyResult<f64> {
        sampling::fair_sampling_defect(&self.model, pair1, pair2).map_err(to_py)
    }

    #[pyo3(signature = (a, b, pairs, seed, threads=1))]
    fn run_events(
        &self,
        a: f64,
        b: f64,
        pairs: u64,
        seed: u64,
        threads: usize,
    ) -> PyResult<LoopholeCounts> {
        let tallies =
            sampling::run_loophole_experiment_threaded(&self.model, &[(a, b)], pairs, seed, threads)
                .map_err(to_py)?;
        let t = &tallies[0];
        Ok(LoopholeCounts {
            emitted: t.emitted,
            n_pp: t.count(1, 1),
            n_pm: t.count(1, -1),
            n_mp: t.count(-1, 1),
            n_mm: t.count(-1, -1),
            alice_singles: t.alice_singles,
            bob_singles: t.bob_singles,
            estimate: t.correlation_estimate(),
            std_error: t.estimate_std_error(),
        })
    }
}

/// `(a, a_alt, b, b_alt)` attaining `|S| = 2 sqrt(2)`.
#[pyfunction]
fn standard_angles() -> (f64, f64, f64, f64) {
    eprbohm::STANDARD_ANGLES
}

/// The singlet prediction `-cos(a - b)`.
#[pyfunction]
fn quantum_reference(a: f64, b: f64) -> f64 {
    eprbohm::quantum_reference(a, b)
}

/// `(classical, observational, gap)` for one singlet arm on a tilted probe.
#[pyfunction]
#[pyo3(signature = (angle, side, tilt=0.5, grid_n=720))]
fn singlet_average_report(angle: f64, side: &str, tilt: f64, grid_n: usize) -> PyResult<(f64, f64, f64)> {
    let side = match side {
        "alice" => Side::Alice,
        "bob" => Side::Bob,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown side {other:?}; expected 'alice' or 'bob'"
            )))
        }
    };
    let space = StateSpace::circle(grid_n).map_err(to_py)?;
    let probe = eprbohm::tilted_probe(&space, tilt).map_err(to_py)?;
    let mut m = chamsim::chameleon::ChameleonMeasurement::new(space.clone());
    let setting = chamsim::chameleon::MeasurementSetting::angle("arm", angle).map_err(to_py)?;
    m.register(setting.clone(), eprbohm::singlet_side_dynamics(&space, angle, side).map_err(to_py)?)
        .map_err(to_py)?;
    let r = m.average_report(&setting, &probe).map_err(to_py)?;
    Ok((r.classical, r.observational, r.gap))
}

/// Ontic vs observed value ranges of one singlet arm:
/// `((ontic_min, ontic_max), observed_values, coincide)`.
#[pyfunction]
#[pyo3(signature = (angle, grid_n=720))]
fn singlet_ranges(angle: f64, grid_n: usize) -> PyResult<((f64, f64), Vec<f64>, bool)> {
    let space = StateSpace::circle(grid_n).map_err(to_py)?;
    let mut m = chamsim::chameleon::ChameleonMeasurement::new(space.clone());
    let setting = chamsim::chameleon::MeasurementSetting::angle("arm", angle).map_err(to_py)?;
    m.register(
        setting.clone(),
        eprbohm::singlet_side_dynamics(&space, angle, Side::Alice).map_err(to_py)?,
    )
    .map_err(to_py)?;
    let report = m.range_coincidence_report(&setting).map_err(to_py)?;
    let ontic = match report.ontic_range {
        ValueRange::Interval { min, max } => (min, max),
        ValueRange::Set(v) => (
            v.first().copied().unwrap_or(f64::NAN),
            v.last().copied().unwrap_or(f64::NAN),
        ),
    };
    let observed = match report.observed_range {
        ValueRange::Set(v) => v,
        ValueRange::Interval { min, max } => vec![min, max],
    };
    Ok((ontic, observed, report.coincide))
}

/// `[(name, description)]` for every scenario the CLI knows.
#[pyfunction]
fn list_scenarios() -> Vec<(String, String)> {
    scenario::Scenario::ALL
        .iter()
        .map(|s| (s.name().to_string(), s.description().to_string()))
        .collect()
}

/// Parse a config document (or manifest) and execute it; returns
/// `(results_path, manifest_path)`.
#[pyfunction]
fn run_config(text: &str, out_dir: &str) -> PyResult<(String, String)> {
    let cfg = scenario::load_config_from_str(text).map_err(to_py)?;
    let out = scenario::run_scenario(&cfg, std::path::Path::new(out_dir)).map_err(to_py)?;
    Ok((
        out.results_path.to_string_lossy().into_owned(),
        out.manifest_path.to_string_lossy().into_owned(),
    ))
}

#[pymodule]
fn chamsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Diffusion>()?;
    m.add_class::<SingletModel>()?;
    m.add_class::<Detection>()?;
    m.add_class::<LoopholeCounts>()?;
    m.add_function(wrap_pyfunction!(standard_angles, m)?)?;
    m.add_function(wrap_pyfunction!(quantum_reference, m)?)?;
    m.add_function(wrap_pyfunction!(singlet_average_report, m)?)?;
    m.add_function(wrap_pyfunction!(singlet_ranges, m)?)?;
    m.add_function(wrap_pyfunction!(list_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
