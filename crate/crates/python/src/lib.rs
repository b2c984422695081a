//! Python bindings for `tpa-sim`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use tpa_sim::analysis::{self, RatePoint};
use tpa_sim::detection::{self, DetectionConfig};
use tpa_sim::model::{self, PhaseMatching};
use tpa_sim::rng::from_seed;
use tpa_sim::scenario::{self, Overrides, ScenarioConfig};
use tpa_sim::source::{G2Accumulator, PulseSampler};
use tpa_sim::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Infeasible(_) | Error::Config(_) | Error::Format { .. } => {
            PyValueError::new_err(e.to_string())
        }
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn phase_matching(name: &str) -> PyResult<PhaseMatching> {
    match name {
        "type0-or-i" | "type0" | "type-i" => Ok(PhaseMatching::Type0OrI),
        "type-ii" => Ok(PhaseMatching::TypeII),
        other => Err(PyValueError::new_err(format!(
            "unknown phase matching `{other}`; use \"type0-or-i\" or \"type-ii\""
        ))),
    }
}

#[pyfunction]
fn gm_to_si(sigma_gm: f64) -> PyResult<f64> {
    model::gm_to_si(sigma_gm).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (n, phase_matching = "type0-or-i"))]
fn g2_zero(n: f64, phase_matching: &str) -> PyResult<f64> {
    model::g2_zero(n, self::phase_matching(phase_matching)?).map_err(py_err)
}

#[pyfunction]
fn sigma_e(f: f64, sigma2: f64, ent_area: f64, ent_time: f64) -> PyResult<f64> {
    model::sigma_e(f, sigma2, ent_area, ent_time).map_err(py_err)
}

#[pyfunction]
fn crossover_flux(sigma_e: f64, sigma2: f64) -> PyResult<f64> {
    model::crossover_flux(sigma_e, sigma2).map_err(py_err)
}

#[pyfunction]
fn photons_per_mode(phi: f64, mode_area: f64, ent_time: f64) -> PyResult<f64> {
    model::photons_per_mode(phi, mode_area, ent_time).map_err(py_err)
}

#[pyfunction]
fn etpa_rate(phi: f64, sigma_e: f64, sigma2: f64, xi: f64) -> PyResult<f64> {
    model::etpa_rate(phi, sigma_e, sigma2, xi).map_err(py_err)
}

#[pyfunction]
fn tpa_rate_broadband(phi: f64, sigma2: f64, g2: f64) -> PyResult<f64> {
    model::tpa_rate_broadband(phi, sigma2, g2).map_err(py_err)
}

/// Photon numbers per mode for one pulse.
#[pyfunction]
#[pyo3(signature = (n, modes, phase_matching = "type0-or-i", seed = 0))]
fn sample_pulse(n: f64, modes: usize, phase_matching: &str, seed: u64) -> PyResult<Vec<u64>> {
    let s = tpa_sim::source::sample_pulse(n, modes, self::phase_matching(phase_matching)?, seed).map_err(py_err)?;
    Ok(s.per_mode_photons)
}

/// Monte Carlo g²(0) of a single mode: (estimate, standard error).
#[pyfunction]
#[pyo3(signature = (n, pulses, phase_matching = "type0-or-i", seed = 0))]
fn sample_g2(py: Python<'_>, n: f64, pulses: usize, phase_matching: &str, seed: u64) -> PyResult<(f64, f64)> {
    let pm = self::phase_matching(phase_matching)?;
    let sampler = PulseSampler::new(n, 1, pm).map_err(py_err)?;
    let est = py.detach(|| {
        let mut rng = from_seed(seed);
        let mut acc = G2Accumulator::default();
        let mut buf = sampler.sample(&mut rng);
        for _ in 0..pulses {
            sampler.sample_into(&mut rng, &mut buf);
            acc.push(buf.total_photons);
        }
        acc.estimate()
    });
    est.ok_or_else(|| PyValueError::new_err("no photons sampled; increase pulses or n"))
}

#[pyfunction]
#[pyo3(signature = (dark_rate, duration, k = 5.0, duty = 0.5))]
fn detection_threshold(dark_rate: f64, duration: f64, k: f64, duty: f64) -> PyResult<f64> {
    analysis::detection_threshold(dark_rate, duration, k, duty).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (dark_rate, duration, k = 5.0))]
fn count_threshold(dark_rate: f64, duration: f64, k: f64) -> PyResult<f64> {
    analysis::count_threshold(dark_rate, duration, k).map_err(py_err)
}

#[pyclass(frozen, get_all)]
struct ChoppedCounts {
    open_counts: u64,
    closed_counts: u64,
    open_time: f64,
    closed_time: f64,
}

#[pymethods]
impl ChoppedCounts {
    #[new]
    fn new(open_counts: u64, closed_counts: u64, open_time: f64, closed_time: f64) -> Self {
        Self { open_counts, closed_counts, open_time, closed_time }
    }

    fn __repr__(&self) -> String {
        format!(
            "ChoppedCounts(open_counts={}, closed_counts={}, open_time={}, closed_time={})",
            self.open_counts, self.closed_counts, self.open_time, self.closed_time
        )
    }
}

impl From<detection::ChoppedCounts> for ChoppedCounts {
    fn from(c: detection::ChoppedCounts) -> Self {
        Self {
            open_counts: c.open_counts,
            closed_counts: c.closed_counts,
            open_time: c.open_time,
            closed_time: c.closed_time,
        }
    }
}

impl From<&ChoppedCounts> for detection::ChoppedCounts {
    fn from(c: &ChoppedCounts) -> Self {
        Self {
            open_counts: c.open_counts,
            closed_counts: c.closed_counts,
            open_time: c.open_time,
            closed_time: c.closed_time,
        }
    }
}

#[pyfunction]
#[pyo3(signature = (signal_rate, dark_rate = 3.0, duration = 600.0, duty = 0.5, seed = 0))]
fn simulate_chopped_counts(
    signal_rate: f64,
    dark_rate: f64,
    duration: f64,
    duty: f64,
    seed: u64,
) -> PyResult<ChoppedCounts> {
    let cfg = DetectionConfig { dark_rate, duration, duty_cycle: duty, ..DetectionConfig::default() };
    detection::simulate_chopped_counts(signal_rate, &cfg, &mut from_seed(seed))
        .map(Into::into)
        .map_err(py_err)
}

#[pyclass(frozen, get_all)]
struct DifferentialResult {
    rate_estimate: f64,
    sigma: f64,
    z_score: f64,
    counts_open: u64,
    counts_closed: u64,
}

#[pymethods]
impl DifferentialResult {
    #[pyo3(signature = (k = 5.0))]
    fn exceeds(&self, k: f64) -> bool {
        self.z_score > k
    }

    fn __repr__(&self) -> String {
        format!(
            "DifferentialResult(rate_estimate={}, sigma={}, z_score={})",
            self.rate_estimate, self.sigma, self.z_score
        )
    }
}

#[pyfunction]
fn differential_rate(counts: &ChoppedCounts) -> PyResult<DifferentialResult> {
    let d = analysis::differential_rate(&counts.into()).map_err(py_err)?;
    Ok(DifferentialResult {
        rate_estimate: d.rate_estimate,
        sigma: d.sigma,
        z_score: d.z_score,
        counts_open: d.counts_open,
        counts_closed: d.counts_closed,
    })
}

#[pyclass(frozen, get_all)]
struct PowerLawFit {
    exponent: f64,
    log_prefactor: f64,
    exponent_stderr: f64,
    quadratic_log_prefactor: f64,
}

#[pymethods]
impl PowerLawFit {
    fn __repr__(&self) -> String {
        format!("PowerLawFit(exponent={}, exponent_stderr={})", self.exponent, self.exponent_stderr)
    }
}

fn same_length(a: usize, b: usize) -> PyResult<()> {
    if a == b {
        Ok(())
    } else {
        Err(PyValueError::new_err(format!("length mismatch: {a} vs {b}")))
    }
}

/// Log-log least squares; `weights` are inverse variances of ln y.
#[pyfunction]
#[pyo3(signature = (x, y, weights = None))]
fn fit_power_law(x: Vec<f64>, y: Vec<f64>, weights: Option<Vec<f64>>) -> PyResult<PowerLawFit> {
    same_length(x.len(), y.len())?;
    let pts: Vec<(f64, f64)> = x.into_iter().zip(y).collect();
    let f = analysis::fit_power_law(&pts, weights.as_deref()).map_err(py_err)?;
    Ok(PowerLawFit {
        exponent: f.exponent,
        log_prefactor: f.log_prefactor,
        exponent_stderr: f.exponent_stderr,
        quadratic_log_prefactor: f.quadratic_log_prefactor,
    })
}

#[pyclass(frozen, get_all)]
struct CrossoverFit {
    a: f64,
    b: f64,
    n_cross: f64,
    n_cross_stderr: f64,
    accepted: bool,
    diagnostics: Vec<String>,
}

#[pymethods]
impl CrossoverFit {
    fn __repr__(&self) -> String {
        format!("CrossoverFit(n_cross={}, n_cross_stderr={}, accepted={})", self.n_cross, self.n_cross_stderr, self.accepted)
    }
}

/// Shot-noise weighted fit of rate = a·N + b·N².
#[pyfunction]
#[pyo3(signature = (n, rate, exposure, background = None))]
fn fit_crossover(n: Vec<f64>, rate: Vec<f64>, exposure: Vec<f64>, background: Option<Vec<f64>>) -> PyResult<CrossoverFit> {
    same_length(n.len(), rate.len())?;
    same_length(n.len(), exposure.len())?;
    let background = background.unwrap_or_else(|| vec![0.0; n.len()]);
    same_length(n.len(), background.len())?;
    let pts: Vec<RatePoint> = (0..n.len())
        .map(|i| RatePoint { x: n[i], rate: rate[i], exposure: exposure[i], background: background[i] })
        .collect();
    let f = analysis::fit_crossover(&pts).map_err(py_err)?;
    Ok(CrossoverFit {
        a: f.a,
        b: f.b,
        n_cross: f.n_cross,
        n_cross_stderr: f.n_cross_stderr,
        accepted: f.accepted,
        diagnostics: f.diagnostics,
    })
}

fn run(py: Python<'_>, mut cfg: ScenarioConfig, seed: Option<u64>, out_dir: Option<PathBuf>) -> PyResult<String> {
    cfg.apply(&Overrides { seed, ..Overrides::default() });
    py.detach(|| {
        let out = scenario::run_scenario(&cfg)?;
        if let Some(dir) = out_dir {
            scenario::write_outputs(&out, &dir)?;
        }
        Ok(serde_json::to_string(&out.report)?)
    })
    .map_err(py_err)
}

/// Runs a built-in scenario and returns the run report as JSON text.
#[pyfunction]
#[pyo3(signature = (name, seed = None, out_dir = None))]
fn run_builtin(py: Python<'_>, name: &str, seed: Option<u64>, out_dir: Option<PathBuf>) -> PyResult<String> {
    run(py, ScenarioConfig::builtin(name).map_err(py_err)?, seed, out_dir)
}

/// Runs a scenario file and returns the run report as JSON text.
#[pyfunction]
#[pyo3(signature = (path, seed = None, out_dir = None))]
fn run_config(py: Python<'_>, path: PathBuf, seed: Option<u64>, out_dir: Option<PathBuf>) -> PyResult<String> {
    run(py, ScenarioConfig::from_path(&path).map_err(py_err)?, seed, out_dir)
}

#[pymodule]
fn tpa_sim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("BUILTIN_SCENARIOS", scenario::BUILTIN_NAMES.to_vec())?;
    m.add_class::<ChoppedCounts>()?;
    m.add_class::<DifferentialResult>()?;
    m.add_class::<PowerLawFit>()?;
    m.add_class::<CrossoverFit>()?;
    m.add_function(wrap_pyfunction!(gm_to_si, m)?)?;
    m.add_function(wrap_pyfunction!(g2_zero, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_e, m)?)?;
    m.add_function(wrap_pyfunction!(crossover_flux, m)?)?;
    m.add_function(wrap_pyfunction!(photons_per_mode, m)?)?;
    m.add_function(wrap_pyfunction!(etpa_rate, m)?)?;
    m.add_function(wrap_pyfunction!(tpa_rate_broadband, m)?)?;
    m.add_function(wrap_pyfunction!(sample_pulse, m)?)?;
    m.add_function(wrap_pyfunction!(sample_g2, m)?)?;
    m.add_function(wrap_pyfunction!(detection_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(count_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_chopped_counts, m)?)?;
    m.add_function(wrap_pyfunction!(differential_rate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_power_law, m)?)?;
    m.add_function(wrap_pyfunction!(fit_crossover, m)?)?;
    m.add_function(wrap_pyfunction!(run_builtin, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
