//! Extended Kalman filter over the kinematic state `[azimuth, range, speed,
//! reflection coefficient]`.
//!
//! The state evolves under the road-geometry model
//!
//! ```text
//! theta_n = theta - v*dT*cos(theta)/d
//! d_n     = d - v*dT*sin(theta)
//! v_n     = v
//! beta_n  = beta * (1 - v*dT*sin(theta)/d)^2
//! ```
//!
//! with additive process noise, and is observed directly (`y = x + z`, an
//! identity measurement matrix). Each step emits the filtered posterior plus
//! the one- and two-step-ahead predictions: the transmit beamformer points at
//! the one-step prediction, while the vehicle-side combiner can only be
//! steered from the two-step prediction it received a slot earlier.
//!
//! The reflection coefficient is tracked as a real magnitude; its phase is
//! not observable through this measurement model.

use nalgebra::{Matrix4, Vector4};

use crate::array::AnglePair;
use crate::{Result, SimError};

/// Kinematic state of one tracked vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackState {
    /// Azimuth from the road-normal boresight (rad).
    pub azimuth: f64,
    /// Slant range (m).
    pub range: f64,
    /// Along-road speed (m/s).
    pub speed: f64,
    /// Reflection-coefficient magnitude.
    pub refl_coeff: f64,
}

impl TrackState {
    pub fn new(azimuth: f64, range: f64, speed: f64, refl_coeff: f64) -> Result<Self> {
        let state = Self {
            azimuth,
            range,
            speed,
            refl_coeff,
        };
        state.validate()?;
        Ok(state)
    }

    fn validate(&self) -> Result<()> {
        if !(self.azimuth.is_finite()
            && self.range.is_finite()
            && self.speed.is_finite()
            && self.refl_coeff.is_finite())
        {
            return Err(SimError::InvalidParam("non-finite track state".into()));
        }
        if self.range <= 0.0 {
            return Err(SimError::DegenerateGeometry(format!(
                "range {} fell to or below zero",
                self.range
            )));
        }
        Ok(())
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.azimuth, self.range, self.speed, self.refl_coeff)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

/// Process and measurement noise variances, in state order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub process: [f64; 4],
    pub measurement: [f64; 4],
}

impl NoiseSpec {
    pub fn new(process: [f64; 4], measurement: [f64; 4]) -> Result<Self> {
        if process.iter().chain(&measurement).any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(SimError::InvalidParam("noise variances must be nonnegative".into()));
        }
        Ok(Self {
            process,
            measurement,
        })
    }

    /// Reference deployment constants: process deviations of 1e-3 per state,
    /// measurement deviations of 0.1 rad / 0.2 m / 0.15 m/s. The reflection
    /// coefficient has no published figure; 1e-6 / 1e-2 keep it loosely
    /// observed in relative units.
    pub fn reference() -> Self {
        Self {
            process: [1e-6, 1e-6, 1e-6, 1e-6],
            measurement: [0.01, 0.04, 0.0225, 1e-2],
        }
    }

    fn process_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::from_row_slice(&self.process))
    }

    fn measurement_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::from_row_slice(&self.measurement))
    }
}

/// Filtered mean and mean-squared-error matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackBelief {
    pub mean: TrackState,
    pub mse: Matrix4<f64>,
}

/// Apply the state evolution model over one interval of `dt` seconds.
/// `noise`, when given, is added verbatim as the process perturbation.
pub fn evolve_state(prev: &TrackState, dt: f64, noise: Option<&[f64; 4]>) -> Result<TrackState> {
    prev.validate()?;
    if dt <= 0.0 {
        return Err(SimError::InvalidParam("dt must be positive".into()));
    }
    let (theta, d, v, beta) = (prev.azimuth, prev.range, prev.speed, prev.refl_coeff);
    let convergence = 1.0 - v * dt * theta.sin() / d;
    let w = noise.copied().unwrap_or([0.0; 4]);
    let next = TrackState {
        azimuth: theta - v * dt * theta.cos() / d + w[0],
        range: d - v * dt * theta.sin() + w[1],
        speed: v + w[2],
        refl_coeff: beta * convergence * convergence + w[3],
    };
    next.validate()?;
    Ok(next)
}

/// Jacobian of the evolution model at `state`.
pub fn jacobian(state: &TrackState, dt: f64) -> Result<Matrix4<f64>> {
    state.validate()?;
    if dt <= 0.0 {
        return Err(SimError::InvalidParam("dt must be positive".into()));
    }
    let (theta, d, v, beta) = (state.azimuth, state.range, state.speed, state.refl_coeff);
    let (sin_t, cos_t) = theta.sin_cos();
    let iota = 1.0 - v * dt * sin_t / d;
    Ok(Matrix4::new(
        1.0 + v * dt * sin_t / d,
        v * dt * cos_t / (d * d),
        -dt * cos_t / d,
        0.0,
        //
        -v * dt * cos_t,
        1.0,
        -dt * sin_t,
        0.0,
        //
        0.0,
        0.0,
        1.0,
        0.0,
        //
        -2.0 * beta * v * dt * cos_t / d * iota,
        2.0 * beta * v * dt * sin_t / (d * d) * iota,
        -2.0 * beta * dt * sin_t / d * iota,
        iota * iota,
    ))
}

/// Output of one filter step.
#[derive(Debug, Clone, Copy)]
pub struct EkfOutput {
    pub posterior: TrackBelief,
    /// Prediction of the next state from the posterior (steers the transmit
    /// beam of the next slot).
    pub one_ahead: TrackState,
    /// Prediction two slots past the previous posterior, made without the
    /// current measurement (steers the vehicle combiner).
    pub two_ahead: TrackState,
}

/// One predict/update cycle with an identity observation matrix.
pub fn ekf_step(
    belief: &TrackBelief,
    measurement: &TrackState,
    noise: &NoiseSpec,
    dt: f64,
) -> Result<EkfOutput> {
    let g = jacobian(&belief.mean, dt)?;
    let pred_mean = evolve_state(&belief.mean, dt, None)?;
    let two_ahead = evolve_state(&pred_mean, dt, None)?;

    let m_pred = g * belief.mse * g.transpose() + noise.process_matrix();
    let innovation_cov = noise.measurement_matrix() + m_pred;
    let gain_inv = innovation_cov.try_inverse().ok_or_else(|| {
        SimError::NumericalConditioning("singular innovation covariance".into())
    })?;
    let kalman_gain = m_pred * gain_inv;

    let innovation = measurement.to_vector() - pred_mean.to_vector();
    let post_vec = pred_mean.to_vector() + kalman_gain * innovation;
    let post_mean = TrackState::from_vector(&post_vec)?;

    let mut m_post = (Matrix4::identity() - kalman_gain) * m_pred;
    // Symmetrize so thousands of steps cannot drift the MSE off the PSD cone.
    m_post = 0.5 * (m_post + m_post.transpose());

    let one_ahead = evolve_state(&post_mean, dt, None)?;
    Ok(EkfOutput {
        posterior: TrackBelief {
            mean: post_mean,
            mse: m_post,
        },
        one_ahead,
        two_ahead,
    })
}

/// Seed a belief from an initial-access detection. The reflection
/// coefficient starts at the unit-RCS value `(2d)^-2` and the MSE at ten
/// times the measurement variances.
pub fn init_track(
    range: f64,
    speed: f64,
    angles: &AnglePair,
    noise: &NoiseSpec,
) -> Result<TrackBelief> {
    if !(range.is_finite() && speed.is_finite()) {
        return Err(SimError::InvalidParam("non-finite detection".into()));
    }
    let mean = TrackState::new(angles.azimuth(), range, speed, measured_refl(range, 1.0))?;
    let mse = Matrix4::from_diagonal(&Vector4::from_row_slice(&noise.measurement)) * 10.0;
    Ok(TrackBelief { mean, mse })
}

/// Reflection-coefficient magnitude of a target at `range` with RCS `rcs`.
pub fn measured_refl(range: f64, rcs: f64) -> f64 {
    rcs / (2.0 * range).powi(2)
}
