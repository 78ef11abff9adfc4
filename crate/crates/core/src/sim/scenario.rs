//! Road geometry, per-slot ground truth and channel path construction.
//!
//! The vehicle drives down a straight road parallel to the x axis; the gNB
//! sits at the origin with its boresight normal to the road (+y). Azimuth is
//! measured from that boresight toward +x, so the along-road motion matches
//! the tracker's evolution model. The direct vehicle path plus a configurable
//! set of static road-side scatterers make up the channel; a blockage window
//! can gate the LoS and substitute a faster blocker vehicle in its place.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::array::AnglePair;
use crate::ofdm::{PathParams, PathSet};
use crate::radar::{range_to_delay, speed_to_doppler};
use crate::{Result, SimError, SPEED_OF_LIGHT};

/// One static road-side reflector.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: [f64; 3],
    /// RCS relative to the vehicle, in dB.
    pub rcs_rel_db: f64,
}

/// A larger, faster vehicle obstructing the LoS for a window of slots.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct Blockage {
    pub start_slot: usize,
    pub duration_slots: usize,
    /// Blocker speed along the road (m/s).
    pub blocker_speed: f64,
    /// Blocker position offset from the vehicle at blockage onset.
    pub blocker_offset: [f64; 3],
    /// Radar cross-section of the blocker relative to the vehicle (dB).
    pub blocker_rcs_rel_db: f64,
    /// Strength of the reflected communication path via the blocker,
    /// relative to the direct path (dB).
    pub blocker_comm_rel_db: f64,
}

impl Default for Blockage {
    fn default() -> Self {
        Self {
            start_slot: 8000,
            duration_slots: 4000,
            blocker_speed: 30.0,
            blocker_offset: [-5.0, -3.0, 0.5],
            blocker_rcs_rel_db: 3.0,
            blocker_comm_rel_db: -12.0,
        }
    }
}

/// Scenario geometry and channel composition.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub gnb_position: [f64; 3],
    pub vehicle_start: [f64; 3],
    /// Nominal along-road speed (m/s); the vehicle drives toward -x.
    pub nominal_speed: f64,
    /// Standard deviation of the per-slot speed fluctuation (m/s).
    pub speed_jitter_std: f64,
    /// Simulated span (s).
    pub duration: f64,
    /// Slot duration (s).
    pub slot_duration: f64,
    /// Complex-RCS magnitude of the vehicle.
    pub vehicle_rcs: f64,
    pub scatterers: Vec<Scatterer>,
    pub blockage: Option<Blockage>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            gnb_position: [0.0, 0.0, 8.0],
            vehicle_start: [25.0, 40.0, 1.0],
            nominal_speed: 20.0,
            speed_jitter_std: 0.5,
            duration: 4.0,
            slot_duration: 0.125e-3,
            vehicle_rcs: 1.0,
            scatterers: vec![
                Scatterer {
                    position: [10.0, 25.0, 2.0],
                    rcs_rel_db: -10.0,
                },
                Scatterer {
                    position: [-15.0, 30.0, 2.0],
                    rcs_rel_db: -10.0,
                },
            ],
            blockage: None,
        }
    }
}

impl ScenarioConfig {
    pub fn slot_count(&self) -> usize {
        (self.duration / self.slot_duration).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.duration <= 0.0 || self.slot_duration <= 0.0 {
            return Err(SimError::Config("nonpositive duration".into()));
        }
        let slots = self.slot_count();
        if slots == 0 {
            return Err(SimError::Config("scenario shorter than one slot".into()));
        }
        if ((slots as f64 * self.slot_duration) - self.duration).abs() > self.slot_duration {
            return Err(SimError::Config(
                "duration is not a whole number of slots".into(),
            ));
        }
        let finite3 = |p: &[f64; 3]| p.iter().all(|v| v.is_finite());
        if !finite3(&self.gnb_position)
            || !finite3(&self.vehicle_start)
            || self.scatterers.iter().any(|s| !finite3(&s.position))
        {
            return Err(SimError::Config("non-finite position".into()));
        }
        if self.vehicle_rcs <= 0.0 {
            return Err(SimError::Config("vehicle_rcs must be positive".into()));
        }
        if let Some(b) = &self.blockage {
            if b.start_slot + b.duration_slots > slots {
                return Err(SimError::Config("blockage extends past the scenario".into()));
            }
        }
        Ok(())
    }

    /// Parse from a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| SimError::Config(format!("scenario TOML: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}

/// Ground truth for one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotTruth {
    pub position: [f64; 3],
    /// Azimuth from the road-normal boresight (rad).
    pub azimuth: f64,
    /// Elevation seen from the gNB (rad, negative looking down).
    pub elevation: f64,
    /// Slant range (m).
    pub range: f64,
    /// Range projected onto the road plane (m); the tracker's state frame.
    pub horizontal_range: f64,
    /// Along-road speed this slot (m/s).
    pub speed: f64,
    /// Range-rate toward the gNB (m/s, positive approaching).
    pub closing_speed: f64,
}

fn relative_pose(from: &[f64; 3], to: &[f64; 3], speed: f64) -> SlotTruth {
    let dx = to[0] - from[0];
    let dy = to[1] - from[1];
    let dz = to[2] - from[2];
    let horiz = (dx * dx + dy * dy).sqrt();
    let range = (horiz * horiz + dz * dz).sqrt();
    SlotTruth {
        position: *to,
        azimuth: dx.atan2(dy),
        elevation: dz.atan2(horiz),
        range,
        horizontal_range: horiz,
        speed,
        closing_speed: speed * dx / range,
    }
}

/// Per-slot ground truth over the whole scenario.
#[derive(Debug, Clone)]
pub struct WorldTrace {
    cfg: ScenarioConfig,
    slots: Vec<SlotTruth>,
    seed: u64,
}

/// Integrate the trajectory with seeded speed jitter.
pub fn generate_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<WorldTrace> {
    cfg.validate()?;
    let n = cfg.slot_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, cfg.speed_jitter_std.max(0.0))
        .map_err(|e| SimError::Config(format!("speed jitter: {e}")))?;
    let mut slots = Vec::with_capacity(n);
    let mut pos = cfg.vehicle_start;
    for _ in 0..n {
        let speed = if cfg.speed_jitter_std > 0.0 {
            cfg.nominal_speed + jitter.sample(&mut rng)
        } else {
            cfg.nominal_speed
        };
        slots.push(relative_pose(&cfg.gnb_position, &pos, speed));
        pos[0] -= speed * cfg.slot_duration;
    }
    Ok(WorldTrace {
        cfg: cfg.clone(),
        slots,
        seed,
    })
}

impl WorldTrace {
    pub fn cfg(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn truth(&self, slot: usize) -> &SlotTruth {
        &self.slots[slot]
    }

    pub fn slot_duration(&self) -> f64 {
        self.cfg.slot_duration
    }

    pub fn is_blocked(&self, slot: usize) -> bool {
        self.cfg
            .blockage
            .as_ref()
            .is_some_and(|b| slot >= b.start_slot && slot < b.start_slot + b.duration_slots)
    }

    fn blocker_truth(&self, slot: usize) -> Option<SlotTruth> {
        let b = self.cfg.blockage.as_ref()?;
        if !self.is_blocked(slot) {
            return None;
        }
        let onset = &self.slots[b.start_slot];
        let elapsed = (slot - b.start_slot) as f64 * self.cfg.slot_duration;
        let pos = [
            onset.position[0] + b.blocker_offset[0] - b.blocker_speed * elapsed,
            onset.position[1] + b.blocker_offset[1],
            onset.position[2] + b.blocker_offset[2],
        ];
        Some(relative_pose(&self.cfg.gnb_position, &pos, b.blocker_speed))
    }

    /// Two-way echo paths visible to the gNB radar in this slot. During a
    /// blockage window the vehicle echo vanishes and the blocker echo takes
    /// its place; static scatterers persist with exactly zero Doppler.
    pub fn radar_paths(&self, slot: usize, carrier_frequency: f64) -> PathSet {
        let mut paths = Vec::with_capacity(self.cfg.scatterers.len() + 1);
        let truth = &self.slots[slot];
        if !self.is_blocked(slot) {
            paths.push(echo_path(
                truth,
                self.cfg.vehicle_rcs,
                carrier_frequency,
                true,
            ));
        } else if let Some(blocker) = self.blocker_truth(slot) {
            let rcs = self.cfg.vehicle_rcs
                * db_to_linear(self.cfg.blockage.as_ref().unwrap().blocker_rcs_rel_db);
            paths.push(echo_path(&blocker, rcs, carrier_frequency, false));
        }
        for s in &self.cfg.scatterers {
            let pose = relative_pose(&self.cfg.gnb_position, &s.position, 0.0);
            let rcs = self.cfg.vehicle_rcs * db_to_linear(s.rcs_rel_db);
            paths.push(echo_path(&pose, rcs, carrier_frequency, false));
        }
        PathSet::new(paths)
    }

    /// One-way downlink paths at the given carrier. `respect_blockage`
    /// distinguishes the mmWave link (gated by the blocker) from the sub-6
    /// fallback band that diffracts around it.
    pub fn comm_paths(
        &self,
        slot: usize,
        carrier_frequency: f64,
        respect_blockage: bool,
    ) -> PathSet {
        let truth = &self.slots[slot];
        let lambda = SPEED_OF_LIGHT / carrier_frequency;
        let mut paths = Vec::with_capacity(self.cfg.scatterers.len() + 1);
        let blocked = respect_blockage && self.is_blocked(slot);
        if !blocked {
            paths.push(comm_path(truth, truth.range, lambda, 1.0, true));
        } else if let Some(blocker) = self.blocker_truth(slot) {
            let via = blocker.range + distance(&blocker.position, &truth.position);
            let rel =
                db_to_linear(self.cfg.blockage.as_ref().unwrap().blocker_comm_rel_db).sqrt();
            paths.push(comm_path(&blocker, via, lambda, rel, false));
        }
        for s in &self.cfg.scatterers {
            let pose = relative_pose(&self.cfg.gnb_position, &s.position, 0.0);
            let via = pose.range + distance(&s.position, &truth.position);
            let rel = db_to_linear(s.rcs_rel_db).sqrt();
            paths.push(comm_path(&pose, via, lambda, rel, false));
        }
        PathSet::new(paths)
    }
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Monostatic echo path: `beta = rcs / (2d)^2` with the carrier phase of the
/// round trip.
fn echo_path(pose: &SlotTruth, rcs: f64, carrier_frequency: f64, is_los: bool) -> PathParams {
    let delay = range_to_delay(pose.range);
    let magnitude = rcs / (2.0 * pose.range).powi(2);
    let phase = -2.0 * PI * (carrier_frequency * delay).fract();
    PathParams {
        delay,
        doppler: speed_to_doppler(pose.closing_speed, carrier_frequency),
        gain: Complex64::from_polar(magnitude, phase),
        angles: AnglePair::azimuth_only(pose.azimuth)
            .with_elevation(pose.elevation),
        is_los,
    }
}

/// One-way downlink path with free-space amplitude `lambda / (4 pi d)`.
fn comm_path(
    pose: &SlotTruth,
    path_length: f64,
    lambda: f64,
    rel_amplitude: f64,
    is_los: bool,
) -> PathParams {
    let delay = path_length / SPEED_OF_LIGHT;
    let magnitude = rel_amplitude * lambda / (4.0 * PI * path_length);
    let phase = -2.0 * PI * (path_length / lambda).fract();
    PathParams {
        delay,
        doppler: pose.closing_speed / lambda,
        gain: Complex64::from_polar(magnitude, phase),
        angles: AnglePair::azimuth_only(pose.azimuth)
            .with_elevation(pose.elevation),
        is_los,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_range_matches_the_reference_geometry() {
        let world = generate_scenario(&ScenarioConfig::default(), 1).unwrap();
        let t0 = world.truth(0);
        let expect = (25.0f64 * 25.0 + 40.0 * 40.0 + 7.0 * 7.0).sqrt();
        assert!((t0.range - expect).abs() < 1e-12);
        assert!((expect - 47.69).abs() < 0.01);
        assert!((t0.azimuth - 0.5586).abs() < 1e-3);
        assert!((t0.elevation - (-0.1473)).abs() < 1e-3);
    }

    #[test]
    fn zero_jitter_keeps_speed_constant_and_scatterers_static() {
        let mut cfg = ScenarioConfig::default();
        cfg.speed_jitter_std = 0.0;
        cfg.duration = 0.125;
        let world = generate_scenario(&cfg, 3).unwrap();
        for slot in 0..world.slot_count() {
            assert_eq!(world.truth(slot).speed, 20.0);
            let paths = world.radar_paths(slot, 35e9);
            for p in paths.paths().iter().filter(|p| !p.is_los) {
                assert_eq!(p.doppler, 0.0);
            }
        }
    }

    #[test]
    fn per_slot_range_change_respects_the_kinematic_bound() {
        let mut cfg = ScenarioConfig::default();
        cfg.duration = 1.0;
        let world = generate_scenario(&cfg, 17).unwrap();
        for slot in 1..world.slot_count() {
            let prev = world.truth(slot - 1);
            let here = world.truth(slot);
            let bound = prev.speed.abs() * cfg.slot_duration + 1e-9;
            assert!(
                (here.range - prev.range).abs() <= bound,
                "slot {slot}: jump {}",
                (here.range - prev.range).abs()
            );
        }
    }

    #[test]
    fn regeneration_is_bit_identical_per_seed() {
        let cfg = ScenarioConfig::default();
        let a = generate_scenario(&cfg, 99).unwrap();
        let b = generate_scenario(&cfg, 99).unwrap();
        assert_eq!(a.slots, b.slots);
        let c = generate_scenario(&cfg, 100).unwrap();
        assert_ne!(a.slots, c.slots);
    }

    #[test]
    fn closing_speed_flips_sign_past_the_perpendicular() {
        let mut cfg = ScenarioConfig::default();
        cfg.speed_jitter_std = 0.0;
        let world = generate_scenario(&cfg, 5).unwrap();
        // Vehicle starts at x=25 approaching; x crosses 0 at t = 1.25 s.
        assert!(world.truth(0).closing_speed > 0.0);
        let late = (2.0 / cfg.slot_duration) as usize;
        assert!(world.truth(late).closing_speed < 0.0);
    }

    #[test]
    fn blockage_swaps_the_vehicle_echo_for_the_blocker() {
        let mut cfg = ScenarioConfig::default();
        cfg.duration = 0.5;
        cfg.blockage = Some(Blockage {
            start_slot: 1000,
            duration_slots: 500,
            ..Blockage::default()
        });
        let world = generate_scenario(&cfg, 7).unwrap();
        assert!(!world.is_blocked(999));
        assert!(world.is_blocked(1000));
        assert!(!world.is_blocked(1500));

        let before = world.radar_paths(999, 35e9);
        assert!(before.los().is_some());
        let during = world.radar_paths(1200, 35e9);
        assert!(during.los().is_none());
        // The blocker is the only moving echo during the window.
        let moving: Vec<_> = during
            .paths()
            .iter()
            .filter(|p| p.doppler.abs() > 1.0)
            .collect();
        assert_eq!(moving.len(), 1);
        // Clearly in motion radially, and at a range visibly offset from the
        // vehicle it hides (the kinematic-innovation premise).
        let v_radial = crate::radar::doppler_to_speed(moving[0].doppler, 35e9).abs();
        assert!(v_radial > 5.0, "blocker radial speed {v_radial}");
        let blocker_range = crate::radar::delay_to_range(moving[0].delay);
        let vehicle_range = world.truth(1200).range;
        assert!((blocker_range - vehicle_range).abs() > 2.0);

        let comm_blocked = world.comm_paths(1200, 35e9, true);
        assert!(comm_blocked.los().is_none());
        let comm_sub6 = world.comm_paths(1200, 5e9, false);
        assert!(comm_sub6.los().is_some());
    }

    #[test]
    fn comm_gain_follows_the_free_space_law() {
        let mut cfg = ScenarioConfig::default();
        cfg.speed_jitter_std = 0.0;
        cfg.scatterers.clear();
        let world = generate_scenario(&cfg, 2).unwrap();
        let at_35 = world.comm_paths(0, 35e9, true);
        let at_5 = world.comm_paths(0, 5e9, true);
        let ratio = at_5.los().unwrap().gain.norm() / at_35.los().unwrap().gain.norm();
        assert!((ratio - 7.0).abs() < 1e-9, "wavelength ratio {ratio}");
        // Amplitude matches lambda/(4 pi d) at 35 GHz.
        let lambda = SPEED_OF_LIGHT / 35e9;
        let expect = lambda / (4.0 * PI * world.truth(0).range);
        assert!((at_35.los().unwrap().gain.norm() - expect).abs() < 1e-15);
    }

    #[test]
    fn toml_round_trip_and_validation() {
        let text = r#"
            nominal_speed = 18.0
            duration = 2.0

            [[scatterers]]
            position = [5.0, 20.0, 1.0]
            rcs_rel_db = -8.0
        "#;
        let cfg = ScenarioConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.nominal_speed, 18.0);
        assert_eq!(cfg.scatterers.len(), 1);
        assert_eq!(cfg.slot_count(), 16000);

        assert!(ScenarioConfig::from_toml_str("duration = -1.0").is_err());
        let mut bad = ScenarioConfig::default();
        bad.blockage = Some(Blockage {
            start_slot: 31_000,
            duration_slots: 2_000,
            ..Blockage::default()
        });
        assert!(bad.validate().is_err());
    }
}
