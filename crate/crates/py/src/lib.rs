//! Python bindings: the main simulator types and operations, exposed for
//! scripting and plotting. Complex vectors cross the boundary as lists of
//! `(re, im)` tuples; summaries come back as dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use isacsim::array::{self, AnglePair, ArrayGeometry};
use isacsim::nr::{self, Scheme};
use isacsim::ofdm;
use isacsim::protocols::{self, ProtocolConfig, RecoveryStrategy};
use isacsim::radar;
use isacsim::sim::{self, ScenarioConfig};
use isacsim::tracker::{self, NoiseSpec, TrackBelief, TrackState};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_scheme(name: &str) -> PyResult<Scheme> {
    name.parse().map_err(|e| PyValueError::new_err(format!("{e}")))
}

/// UPA steering vector entries as `(re, im)` tuples.
#[pyfunction]
fn steering_vector(azimuth: f64, elevation: f64, n_x: usize, n_y: usize) -> PyResult<Vec<(f64, f64)>> {
    let geom = ArrayGeometry::new(n_x, n_y).map_err(err)?;
    let angles = AnglePair::new(azimuth, elevation).map_err(err)?;
    Ok(array::steering_vector(&angles, &geom)
        .entries()
        .iter()
        .map(|c| (c.re, c.im))
        .collect())
}

/// `sqrt(n_tx * n_rx)`.
#[pyfunction]
fn array_gain_factor(n_tx: usize, n_rx: usize) -> f64 {
    array::array_gain_factor(n_tx, n_rx)
}

/// Magnitude of `a(eval)^T conj(a(beam))` for one UPA: the beam pattern.
#[pyfunction]
fn beam_gain(
    beam_azimuth: f64,
    beam_elevation: f64,
    eval_azimuth: f64,
    eval_elevation: f64,
    n_x: usize,
    n_y: usize,
) -> PyResult<f64> {
    let geom = ArrayGeometry::new(n_x, n_y).map_err(err)?;
    let beam = array::conjugate_beamformer(
        &AnglePair::new(beam_azimuth, beam_elevation).map_err(err)?,
        &geom,
    );
    let probe = array::steering_vector(
        &AnglePair::new(eval_azimuth, eval_elevation).map_err(err)?,
        &geom,
    );
    Ok(probe.transpose_dot(&beam).norm())
}

/// Numerology parameters as a dict.
#[pyfunction]
fn numerology(py: Python<'_>, mu: u8) -> PyResult<Py<PyDict>> {
    let n = nr::numerology_params(mu).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("mu", n.mu)?;
    d.set_item("subcarrier_spacing_hz", n.subcarrier_spacing)?;
    d.set_item("slots_per_subframe", n.slots_per_subframe)?;
    d.set_item("symbols_per_slot", n.symbols_per_slot)?;
    d.set_item("avg_symbol_duration_s", n.avg_symbol_duration)?;
    d.set_item("slot_duration_s", n.slot_duration())?;
    Ok(d.into())
}

/// Frame plan (with RE budget and overhead) as a JSON string.
#[pyfunction]
fn frame_plan_json(scheme: &str, mu: u8) -> PyResult<String> {
    let plan = nr::build_frame_plan(parse_scheme(scheme)?, mu, &nr::FramePlanOptions::default())
        .map_err(err)?;
    Ok(plan.to_json())
}

/// `(oh_fraction, rs_reduction, training_reduction)` for a scheme at mu=3.
#[pyfunction]
fn overhead_metrics(scheme: &str) -> PyResult<(f64, f64, f64)> {
    let plan = nr::build_frame_plan(parse_scheme(scheme)?, 3, &nr::FramePlanOptions::default())
        .map_err(err)?;
    let m = nr::overhead_metrics(&plan);
    Ok((
        m.oh_fraction,
        m.rs_reduction_vs_conventional,
        m.training_reduction_vs_conventional,
    ))
}

/// Downlink throughput in Mbps.
#[pyfunction]
#[pyo3(signature = (bits_per_symbol, prb_count, avg_symbol_duration, ber, overhead, carriers=1, layers=1))]
fn throughput_mbps(
    bits_per_symbol: usize,
    prb_count: usize,
    avg_symbol_duration: f64,
    ber: f64,
    overhead: f64,
    carriers: usize,
    layers: usize,
) -> f64 {
    nr::throughput_mbps(&nr::ThroughputInputs {
        carriers,
        layers,
        bits_per_symbol,
        prb_count,
        avg_symbol_duration,
        ber,
        overhead,
    })
}

/// Thermal noise power over a bandwidth, in dBm.
#[pyfunction]
fn thermal_noise_floor_dbm(bandwidth_hz: f64) -> f64 {
    ofdm::thermal_noise_floor_dbm(bandwidth_hz)
}

/// Standard normal right tail `Q(x)`.
#[pyfunction]
fn normal_tail(x: f64) -> f64 {
    radar::normal_tail(x)
}

/// Inverse of the standard normal right tail.
#[pyfunction]
fn normal_tail_inv(p: f64) -> PyResult<f64> {
    radar::normal_tail_inv(p).map_err(err)
}

/// Golden-section maximization of a Python callable on `[lo, hi]`.
#[pyfunction]
fn golden_section_max(
    py: Python<'_>,
    objective: Py<PyAny>,
    lo: f64,
    hi: f64,
    stop_width: f64,
) -> PyResult<f64> {
    let mut failure: Option<PyErr> = None;
    let result = radar::golden_section_refine(
        |x| {
            match objective
                .bind(py)
                .call1((x,))
                .and_then(|v| v.extract::<f64>())
            {
                Ok(v) => v,
                Err(e) => {
                    failure = Some(e);
                    f64::NAN
                }
            }
        },
        lo,
        hi,
        stop_width,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    result.map_err(err)
}

/// Two-way delay (s) to range (m).
#[pyfunction]
fn delay_to_range(tau: f64) -> f64 {
    radar::delay_to_range(tau)
}

/// Doppler (Hz) to radial speed (m/s) at a carrier.
#[pyfunction]
fn doppler_to_speed(mu: f64, carrier_frequency: f64) -> f64 {
    radar::doppler_to_speed(mu, carrier_frequency)
}

/// Kinematic EKF over `[azimuth, range, speed, reflection]`.
#[pyclass]
struct Tracker {
    belief: TrackBelief,
    noise: NoiseSpec,
    dt: f64,
}

#[pymethods]
impl Tracker {
    #[new]
    #[pyo3(signature = (azimuth, range, speed, dt=1.25e-4))]
    fn new(azimuth: f64, range: f64, speed: f64, dt: f64) -> PyResult<Self> {
        let noise = NoiseSpec::reference();
        let belief = tracker::init_track(range, speed, &AnglePair::azimuth_only(azimuth), &noise)
            .map_err(err)?;
        Ok(Self { belief, noise, dt })
    }

    /// Fold in a measurement `(azimuth, range, speed, reflection)`; returns a
    /// dict with the posterior and the one-/two-step-ahead predictions.
    fn step(
        &mut self,
        py: Python<'_>,
        azimuth: f64,
        range: f64,
        speed: f64,
        reflection: f64,
    ) -> PyResult<Py<PyDict>> {
        let y = TrackState::new(azimuth, range, speed, reflection).map_err(err)?;
        let out = tracker::ekf_step(&self.belief, &y, &self.noise, self.dt).map_err(err)?;
        self.belief = out.posterior;
        let d = PyDict::new(py);
        let pack = |s: &TrackState| (s.azimuth, s.range, s.speed, s.refl_coeff);
        d.set_item("posterior", pack(&self.belief.mean))?;
        d.set_item("one_ahead", pack(&out.one_ahead))?;
        d.set_item("two_ahead", pack(&out.two_ahead))?;
        Ok(d.into())
    }

    /// Current state estimate `(azimuth, range, speed, reflection)`.
    fn state(&self) -> (f64, f64, f64, f64) {
        let s = &self.belief.mean;
        (s.azimuth, s.range, s.speed, s.refl_coeff)
    }
}

fn summary_dict(py: Python<'_>, s: &sim::Summary) -> PyResult<Py<PyDict>> {
    let d = PyDict::new(py);
    d.set_item("slots", s.slots)?;
    d.set_item("rmse_azimuth", s.rmse_azimuth)?;
    d.set_item("rmse_range", s.rmse_range)?;
    d.set_item("rmse_speed", s.rmse_speed)?;
    d.set_item("pooled_ber", s.pooled_ber)?;
    d.set_item("mean_throughput_mbps", s.mean_throughput_mbps)?;
    d.set_item("events", s.events)?;
    Ok(d.into())
}

/// One connected-mode run on the default scenario; returns the summary.
#[pyfunction]
#[pyo3(signature = (scheme, snr_db, seed, slots=None))]
fn run_connected(
    py: Python<'_>,
    scheme: &str,
    snr_db: f64,
    seed: u64,
    slots: Option<usize>,
) -> PyResult<Py<PyDict>> {
    let mut scenario = ScenarioConfig::default();
    if let Some(n) = slots {
        scenario.duration = n as f64 * scenario.slot_duration;
    }
    let world = sim::generate_scenario(&scenario, seed).map_err(err)?;
    let out = protocols::run_connected(
        parse_scheme(scheme)?,
        &world,
        &ProtocolConfig::default(),
        snr_db,
        seed,
        slots,
    )
    .map_err(err)?;
    summary_dict(py, &out.report.summary)
}

/// One initial-access attempt on the default scenario.
#[pyfunction]
fn run_initial_access(py: Python<'_>, scheme: &str, snr_db: f64, seed: u64) -> PyResult<Py<PyDict>> {
    let mut scenario = ScenarioConfig::default();
    scenario.duration = 0.125;
    let world = sim::generate_scenario(&scenario, seed).map_err(err)?;
    let out = protocols::run_initial_access(
        parse_scheme(scheme)?,
        &world,
        &ProtocolConfig::default(),
        snr_db,
        seed,
    )
    .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("latency_ms", out.latency_ms)?;
    d.set_item("angle_error", out.angle_error)?;
    d.set_item("chosen_azimuth", out.chosen_angle.azimuth())?;
    d.set_item("detected_by_radar", out.detected_by_radar)?;
    d.set_item("used_fallback", out.used_fallback)?;
    Ok(d.into())
}

/// One failure-and-recovery run on the default blocked scenario.
#[pyfunction]
fn run_bfr(
    py: Python<'_>,
    scheme: &str,
    snr_db: f64,
    seed: u64,
    strategy: &str,
) -> PyResult<Py<PyDict>> {
    let mut scenario = ScenarioConfig::default();
    scenario.duration = 0.5;
    scenario.blockage = Some(sim::Blockage {
        start_slot: 1000,
        duration_slots: 2500,
        ..sim::Blockage::default()
    });
    let strategy: RecoveryStrategy = strategy
        .parse()
        .map_err(|e| PyValueError::new_err(format!("{e}")))?;
    let world = sim::generate_scenario(&scenario, seed).map_err(err)?;
    let out = protocols::run_bfr(
        parse_scheme(scheme)?,
        &world,
        &ProtocolConfig::default(),
        snr_db,
        seed,
        strategy,
    )
    .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("detected", out.detected)?;
    d.set_item("detection_latency_ms", out.detection_latency_ms)?;
    d.set_item("radio_link_failure", out.radio_link_failure)?;
    d.set_item("blocked_ber", out.blocked_ber)?;
    d.set_item("post_recovery_ber", out.post_recovery_ber)?;
    d.set_item(
        "post_recovery_throughput_mbps",
        out.post_recovery_throughput_mbps,
    )?;
    Ok(d.into())
}

#[pymodule]
fn isacsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(steering_vector, m)?)?;
    m.add_function(wrap_pyfunction!(array_gain_factor, m)?)?;
    m.add_function(wrap_pyfunction!(beam_gain, m)?)?;
    m.add_function(wrap_pyfunction!(numerology, m)?)?;
    m.add_function(wrap_pyfunction!(frame_plan_json, m)?)?;
    m.add_function(wrap_pyfunction!(overhead_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(throughput_mbps, m)?)?;
    m.add_function(wrap_pyfunction!(thermal_noise_floor_dbm, m)?)?;
    m.add_function(wrap_pyfunction!(normal_tail, m)?)?;
    m.add_function(wrap_pyfunction!(normal_tail_inv, m)?)?;
    m.add_function(wrap_pyfunction!(golden_section_max, m)?)?;
    m.add_function(wrap_pyfunction!(delay_to_range, m)?)?;
    m.add_function(wrap_pyfunction!(doppler_to_speed, m)?)?;
    m.add_function(wrap_pyfunction!(run_connected, m)?)?;
    m.add_function(wrap_pyfunction!(run_initial_access, m)?)?;
    m.add_function(wrap_pyfunction!(run_bfr, m)?)?;
    m.add_class::<Tracker>()?;
    Ok(())
}
