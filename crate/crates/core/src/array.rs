//! Uniform planar array steering vectors and beamformer construction.
//!
//! The gNB and the vehicle both carry half-wavelength-spaced UPAs. A steering
//! vector factorizes as the Kronecker product of an azimuth factor (phase
//! increment `pi * sin(az) * cos(el)` per element along x) and an elevation
//! factor (phase increment `pi * sin(el)` per element along y), each carrying
//! a `sqrt(1/N)` normalization so the full vector has unit Euclidean norm.
//! Transmit and receive arrays share the same phase law, so one constructor
//! serves both sides.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::{Result, SimError};

/// Dimensions of a uniform planar array with half-wavelength spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayGeometry {
    n_x: usize,
    n_y: usize,
}

impl ArrayGeometry {
    /// A UPA with `n_x` elements per row and `n_y` elements per column.
    pub fn new(n_x: usize, n_y: usize) -> Result<Self> {
        if n_x == 0 || n_y == 0 {
            return Err(SimError::InvalidParam(format!(
                "array dimensions must be positive, got {n_x}x{n_y}"
            )));
        }
        Ok(Self { n_x, n_y })
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    /// Total element count `n_x * n_y`.
    pub fn len(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// An azimuth/elevation direction in radians.
///
/// Azimuth is wrapped into `(-pi, pi]` on construction; elevation must lie in
/// `[-pi/2, pi/2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnglePair {
    azimuth: f64,
    elevation: f64,
}

impl AnglePair {
    pub fn new(azimuth: f64, elevation: f64) -> Result<Self> {
        if !azimuth.is_finite() || !elevation.is_finite() {
            return Err(SimError::InvalidParam("angles must be finite".into()));
        }
        if !(-PI / 2.0..=PI / 2.0).contains(&elevation) {
            return Err(SimError::InvalidParam(format!(
                "elevation {elevation} outside [-pi/2, pi/2]"
            )));
        }
        Ok(Self {
            azimuth: wrap_azimuth(azimuth),
            elevation,
        })
    }

    /// Convenience constructor for a direction in the horizontal plane.
    pub fn azimuth_only(azimuth: f64) -> Self {
        Self {
            azimuth: wrap_azimuth(azimuth),
            elevation: 0.0,
        }
    }

    /// Same azimuth with the elevation replaced (clamped to its range).
    pub fn with_elevation(self, elevation: f64) -> Self {
        Self {
            azimuth: self.azimuth,
            elevation: elevation.clamp(-PI / 2.0, PI / 2.0),
        }
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_azimuth(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// A unit-norm array response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    entries: Vec<Complex64>,
}

impl SteeringVector {
    /// Wrap raw beamforming weights (e.g. a single-element probe).
    pub fn from_entries(entries: Vec<Complex64>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Euclidean norm of the vector.
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|e| e.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Plain (non-conjugated) inner product `self^T other`.
    ///
    /// The signal model combines steering vectors and beamformers through a
    /// transpose product, not a Hermitian one, so no conjugation happens here.
    pub fn transpose_dot(&self, other: &SteeringVector) -> Complex64 {
        debug_assert_eq!(self.len(), other.len());
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Element-wise conjugate.
    pub fn conjugate(&self) -> SteeringVector {
        SteeringVector {
            entries: self.entries.iter().map(|e| e.conj()).collect(),
        }
    }

    fn from_factors(az: &[Complex64], el: &[Complex64]) -> Self {
        let mut entries = Vec::with_capacity(az.len() * el.len());
        for a in az {
            for e in el {
                entries.push(a * e);
            }
        }
        SteeringVector { entries }
    }
}

fn phase_ramp(n: usize, increment: f64) -> Vec<Complex64> {
    let scale = (1.0 / n as f64).sqrt();
    (0..n)
        .map(|k| Complex64::from_polar(scale, increment * k as f64))
        .collect()
}

/// Array response of a UPA toward the given direction.
///
/// Entry `p * n_y + q` equals `v_az[p] * v_el[q]`, the Kronecker product of
/// the azimuth factor (`exp(j*pi*k*sin(az)*cos(el))` along x) and the
/// elevation factor (`exp(j*pi*k*sin(el))` along y). The result has unit norm.
pub fn steering_vector(angles: &AnglePair, geom: &ArrayGeometry) -> SteeringVector {
    let az_inc = PI * angles.azimuth.sin() * angles.elevation.cos();
    let el_inc = PI * angles.elevation.sin();
    let az = phase_ramp(geom.n_x, az_inc);
    let el = phase_ramp(geom.n_y, el_inc);
    SteeringVector::from_factors(&az, &el)
}

/// Monostatic array gain factor `sqrt(n_tx * n_rx)`.
pub fn array_gain_factor(n_tx: usize, n_rx: usize) -> f64 {
    ((n_tx * n_rx) as f64).sqrt()
}

/// Matched beamformer for the predicted direction.
///
/// The beamformer is the element-wise conjugate of the steering vector, so the
/// effective transpose gain `a(angles)^T f` equals exactly 1 at alignment and
/// strictly less beyond the first pattern null.
pub fn conjugate_beamformer(predicted: &AnglePair, geom: &ArrayGeometry) -> SteeringVector {
    steering_vector(predicted, geom).conjugate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_angles(rng: &mut ChaCha8Rng) -> AnglePair {
        let az = rng.random_range(-PI..PI);
        let el = rng.random_range(-PI / 2.0..PI / 2.0);
        AnglePair::new(az, el).unwrap()
    }

    #[test]
    fn broadside_two_by_two_is_uniform() {
        let geom = ArrayGeometry::new(2, 2).unwrap();
        let sv = steering_vector(&AnglePair::azimuth_only(0.0), &geom);
        for e in sv.entries() {
            assert!((e - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn endfire_two_element_row_alternates_sign() {
        let geom = ArrayGeometry::new(2, 1).unwrap();
        let sv = steering_vector(&AnglePair::azimuth_only(PI / 2.0), &geom);
        let s = 1.0 / 2f64.sqrt();
        assert!((sv.entries()[0] - Complex64::new(s, 0.0)).norm() < 1e-12);
        assert!((sv.entries()[1] - Complex64::new(-s, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn unit_norm_over_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n_x = rng.random_range(1..12);
            let n_y = rng.random_range(1..12);
            let geom = ArrayGeometry::new(n_x, n_y).unwrap();
            let sv = steering_vector(&random_angles(&mut rng), &geom);
            assert!((sv.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kronecker_structure_holds() {
        let geom = ArrayGeometry::new(5, 3).unwrap();
        let angles = AnglePair::new(0.4, -0.2).unwrap();
        let sv = steering_vector(&angles, &geom);
        let az_inc = PI * angles.azimuth().sin() * angles.elevation().cos();
        let el_inc = PI * angles.elevation().sin();
        let az = phase_ramp(5, az_inc);
        let el = phase_ramp(3, el_inc);
        for p in 0..5 {
            for q in 0..3 {
                let expect = az[p] * el[q];
                assert!((sv.entries()[p * 3 + q] - expect).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn transmit_and_receive_share_the_phase_law() {
        // Same geometry and direction must give element-wise equal vectors
        // regardless of which side of the link uses them.
        let geom = ArrayGeometry::new(8, 8).unwrap();
        let angles = AnglePair::new(0.3, -0.15).unwrap();
        let tx = steering_vector(&angles, &geom);
        let rx = steering_vector(&angles, &geom);
        assert_eq!(tx, rx);
    }

    #[test]
    fn array_gain_values() {
        assert!((array_gain_factor(64, 64) - 64.0).abs() < 1e-12);
        assert!((array_gain_factor(64, 16) - 32.0).abs() < 1e-12);
        assert!((array_gain_factor(1, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn beamformer_gain_is_one_at_alignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let geom = ArrayGeometry::new(8, 8).unwrap();
        for _ in 0..100 {
            let angles = random_angles(&mut rng);
            let f = conjugate_beamformer(&angles, &geom);
            let g = steering_vector(&angles, &geom).transpose_dot(&f);
            assert!((g.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn beamformer_gain_drops_off_axis() {
        let geom = ArrayGeometry::new(8, 8).unwrap();
        let boresight = AnglePair::azimuth_only(0.2);
        let f = conjugate_beamformer(&boresight, &geom);
        // Past the first null of an 8-element row (sin spacing 2/8 = 0.25).
        for delta in [0.3, 0.5, 0.8, 1.2] {
            let probe = AnglePair::azimuth_only(0.2 + delta);
            let g = steering_vector(&probe, &geom).transpose_dot(&f);
            assert!(g.norm() < 1.0 - 1e-3, "gain {} at offset {delta}", g.norm());
        }
    }

    #[test]
    fn azimuth_wraps_into_principal_interval() {
        let a = AnglePair::new(3.0 * PI, 0.0).unwrap();
        assert!((a.azimuth() - PI).abs() < 1e-12);
        let b = AnglePair::new(-2.5 * PI, 0.0).unwrap();
        assert!((b.azimuth() + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn three_db_beamwidth_of_8x8_near_broadside() {
        // Dense-scan oracle: half-power width of |a(az)^T f|^2 for a beam
        // built at broadside. For an 8-element half-wavelength row this is
        // close to 0.886 * 2/N rad = 12.69 degrees.
        let geom = ArrayGeometry::new(8, 8).unwrap();
        let f = conjugate_beamformer(&AnglePair::azimuth_only(0.0), &geom);
        let gain_sq = |az: f64| {
            let g = steering_vector(&AnglePair::azimuth_only(az), &geom).transpose_dot(&f);
            g.norm_sqr()
        };
        // Scan outward for the half-power crossing on either side.
        let step = 1e-5;
        let mut right = 0.0;
        while gain_sq(right) > 0.5 {
            right += step;
        }
        let mut left = 0.0;
        while gain_sq(left) > 0.5 {
            left -= step;
        }
        let width_deg = (right - left).to_degrees();
        assert!(
            (width_deg - 12.7).abs() < 0.2,
            "3 dB beamwidth {width_deg} deg"
        );
    }

    #[test]
    fn rejects_degenerate_geometry_and_angles() {
        assert!(ArrayGeometry::new(0, 4).is_err());
        assert!(AnglePair::new(0.0, 2.0).is_err());
        assert!(AnglePair::new(f64::NAN, 0.0).is_err());
    }
}
