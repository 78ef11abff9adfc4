//! Beam-management case studies: initial access, connected-mode tracking and
//! beam failure detection/recovery, each in a communication-only and an ISAC
//! variant.
//!
//! The shared pieces live here: the deployment constants, the link budget
//! that calibrates noise levels to a requested SNR at the scenario's initial
//! pose, DFT beam codebooks, the per-slot communication measurements, and the
//! prediction bookkeeping around the tracker (`TrackLoop`).

mod bfr;
mod connected;
mod ia;

pub use bfr::{
    run_bfr, BfiCounter, BfrEvent, BfrOutcome, KinematicMonitor, RecoveryStrategy,
};
pub use connected::{run_connected, ConnectedOutcome, ConnectedSim};
pub use ia::{full_radar_measurement, run_initial_access, IaOutcome};

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::array::{conjugate_beamformer, AnglePair, ArrayGeometry, SteeringVector};
use crate::ofdm::{self, OfdmConfig, PathSet};
use crate::sim::WorldTrace;
use crate::tracker::{self, NoiseSpec, TrackBelief, TrackState};
use crate::{Result, SimError};

/// Deployment constants shared by the three case studies.
#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    /// gNB transmit array.
    pub tx_geom: ArrayGeometry,
    /// gNB radar receive array.
    pub rx_geom: ArrayGeometry,
    /// Vehicle receive array.
    pub vehicle_geom: ArrayGeometry,
    pub mu: u8,
    pub carrier_frequency: f64,
    pub prb_count: usize,
    pub bits_per_symbol: usize,
    /// Payload bits sampled per slot for the BER estimate.
    pub bits_per_slot_sample: usize,
    /// Subcarriers of the decimated radar processing subband.
    pub radar_subband: usize,
    /// Antennas used for detection maps and delay/Doppler refinement.
    pub detection_antennas: usize,
    /// Subcarrier stride when building the DOA covariance.
    pub doa_subcarrier_stride: usize,
    /// Slots aggregated for initial-access radar processing.
    pub ia_aggregation_slots: usize,
    pub p_fa: f64,
    pub csirs_period_slots: usize,
    pub ssb_period_slots: usize,
    pub bfi_max: usize,
    pub bfd_timer_slots: usize,
    /// Kinematic range-innovation threshold (m).
    pub dr_threshold: f64,
    /// Kinematic speed-innovation threshold (m/s).
    pub dv_threshold: f64,
    /// Hits required inside the kinematic window.
    pub persist_slots: usize,
    pub window_slots: usize,
    /// BFI threshold above the noise floor (dB).
    pub rsrp_margin_db: f64,
    /// Recovery-candidate threshold above the noise floor (dB).
    pub candidate_margin_db: f64,
    /// gNB processing slots between RACH and RAR.
    pub rar_processing_slots: usize,
    pub noise_spec: NoiseSpec,
    /// Bandwidth defining the thermal noise floor.
    pub comm_bandwidth_hz: f64,
    pub sub6_carrier: f64,
    pub sub6_mu: u8,
    pub sub6_prb: usize,
    /// Azimuth sector covered by the beam codebooks (rad).
    pub sector_az: (f64, f64),
    /// Elevation sector covered by the beam codebooks (rad).
    pub sector_el: (f64, f64),
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            tx_geom: ArrayGeometry::new(8, 8).expect("static"),
            rx_geom: ArrayGeometry::new(8, 8).expect("static"),
            vehicle_geom: ArrayGeometry::new(4, 4).expect("static"),
            mu: 3,
            carrier_frequency: 35e9,
            prb_count: 208,
            bits_per_symbol: 4,
            bits_per_slot_sample: 1024,
            radar_subband: 64,
            detection_antennas: 8,
            doa_subcarrier_stride: 4,
            ia_aggregation_slots: 10,
            p_fa: 0.01,
            csirs_period_slots: 5,
            ssb_period_slots: 160,
            bfi_max: 6,
            bfd_timer_slots: 60,
            dr_threshold: 2.0,
            dv_threshold: 1.0,
            persist_slots: 12,
            window_slots: 20,
            rsrp_margin_db: 3.0,
            candidate_margin_db: 6.0,
            rar_processing_slots: 2,
            noise_spec: NoiseSpec::reference(),
            comm_bandwidth_hz: 300e6,
            sub6_carrier: 5e9,
            sub6_mu: 1,
            sub6_prb: 106,
            sector_az: (-75f64.to_radians(), 75f64.to_radians()),
            sector_el: (-35f64.to_radians(), 5f64.to_radians()),
        }
    }
}

impl ProtocolConfig {
    /// Symbols per radar aggregation window.
    pub fn radar_symbols(&self) -> usize {
        self.ia_aggregation_slots * 14
    }

    /// OFDM block descriptor of the radar processing subband.
    pub fn radar_ofdm(&self, tx_power: f64) -> Result<OfdmConfig> {
        OfdmConfig::from_numerology(
            self.mu,
            self.radar_subband,
            self.radar_symbols(),
            self.carrier_frequency,
            tx_power,
        )
    }
}

/// Noise levels and transmit power calibrated to a requested SNR at the
/// scenario's initial pose.
///
/// The communication noise sits on the thermal floor of the configured
/// bandwidth; the transmit power is then set so a perfectly aligned LoS link
/// at slot 0 sees exactly `snr_db`. The radar noise variance is set so the
/// post-processing delay-Doppler peak of the slot-0 vehicle echo under
/// omnidirectional probing sees the same `snr_db`.
#[derive(Debug, Clone, Copy)]
pub struct LinkBudget {
    pub snr_db: f64,
    pub comm_noise_var: f64,
    pub tx_power: f64,
    pub radar_noise_var: f64,
    pub noise_floor_dbm: f64,
}

impl LinkBudget {
    pub fn calibrate(world: &WorldTrace, cfg: &ProtocolConfig, snr_db: f64) -> Result<Self> {
        let snr_lin = 10f64.powf(snr_db / 10.0);
        let noise_floor_dbm = ofdm::thermal_noise_floor_dbm(cfg.comm_bandwidth_hz);
        let comm_noise_var = 10f64.powf((noise_floor_dbm - 30.0) / 10.0);

        let t0 = world.truth(0);
        let lambda = crate::SPEED_OF_LIGHT / cfg.carrier_frequency;
        let los_amp = lambda / (4.0 * std::f64::consts::PI * t0.range);
        let zeta_c = crate::array::array_gain_factor(cfg.tx_geom.len(), cfg.vehicle_geom.len());
        let tx_power = snr_lin * comm_noise_var / (zeta_c * los_amp).powi(2);

        // Omnidirectional probing leaves |alpha| = sqrt(p) * beta per antenna;
        // the unitary 2D transform then gains sqrt(M*L) at the peak.
        let beta = world.cfg().vehicle_rcs / (2.0 * t0.range).powi(2);
        let ml = (cfg.radar_subband * cfg.radar_symbols()) as f64;
        let radar_noise_var = ml * tx_power * beta * beta / snr_lin;

        Ok(Self {
            snr_db,
            comm_noise_var,
            tx_power,
            radar_noise_var,
            noise_floor_dbm,
        })
    }
}

/// A finite set of steerable beams with their pointing directions.
#[derive(Debug, Clone)]
pub struct BeamCodebook {
    beams: Vec<(AnglePair, SteeringVector)>,
}

impl BeamCodebook {
    /// DFT-style grid uniform in the sine domain over a sector.
    pub fn sector_grid(
        geom: &ArrayGeometry,
        sector_az: (f64, f64),
        sector_el: (f64, f64),
        n_az: usize,
        n_el: usize,
    ) -> Result<Self> {
        if n_az == 0 || n_el == 0 {
            return Err(SimError::InvalidParam("empty codebook grid".into()));
        }
        let (s_lo, s_hi) = (sector_az.0.sin(), sector_az.1.sin());
        let (e_lo, e_hi) = (sector_el.0.sin(), sector_el.1.sin());
        let mut beams = Vec::with_capacity(n_az * n_el);
        for i in 0..n_az {
            let sin_az = s_lo + (i as f64 + 0.5) * (s_hi - s_lo) / n_az as f64;
            for j in 0..n_el {
                let sin_el = e_lo + (j as f64 + 0.5) * (e_hi - e_lo) / n_el as f64;
                let angles = AnglePair::new(sin_az.asin(), sin_el.asin())?;
                beams.push((angles, conjugate_beamformer(&angles, geom)));
            }
        }
        Ok(Self { beams })
    }

    /// Azimuth-only ring at a fixed elevation (connected-mode SSB subset).
    pub fn azimuth_ring(
        geom: &ArrayGeometry,
        sector_az: (f64, f64),
        elevation: f64,
        n_az: usize,
    ) -> Result<Self> {
        Self::sector_grid(geom, sector_az, (elevation, elevation), n_az, 1)
    }

    pub fn beams(&self) -> &[(AnglePair, SteeringVector)] {
        &self.beams
    }

    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    /// Index of the beam whose azimuth is closest to the given direction.
    pub fn nearest_azimuth(&self, azimuth: f64) -> usize {
        self.beams
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (a.0.azimuth() - azimuth)
                    .abs()
                    .total_cmp(&(b.0.azimuth() - azimuth).abs())
            })
            .map(|(i, _)| i)
            .expect("codebook nonempty")
    }
}

/// Effective scalar channel including array gains and transmit power.
pub(crate) fn effective_channel(
    paths: &PathSet,
    f: &SteeringVector,
    combiner: Option<&SteeringVector>,
    cfg: &ProtocolConfig,
    tx_power: f64,
) -> Complex64 {
    let m_r = if combiner.is_some() {
        cfg.vehicle_geom.len()
    } else {
        1
    };
    let zeta = crate::array::array_gain_factor(cfg.tx_geom.len(), m_r);
    zeta * tx_power.sqrt()
        * ofdm::comm_effective_gain(paths, f, combiner, &cfg.tx_geom, &cfg.vehicle_geom)
}

/// SS-RSRP of a synchronization burst received through channel `h` with
/// per-RE noise, in dBm.
pub(crate) fn measure_rsrp_dbm(
    h: Complex64,
    noise_var: f64,
    n_re: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let res: Vec<Complex64> = (0..n_re)
        .map(|k| {
            // Unit-modulus synchronization sequence.
            let s = Complex64::from_polar(1.0, k as f64 * 2.399963);
            h * s + ofdm::complex_awgn(rng, noise_var)
        })
        .collect();
    ofdm::ss_rsrp(&res).expect("nonempty burst")
}

/// Draw a Gaussian perturbation with the given standard deviation.
fn gaussian(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * std
}

/// The object the radar currently locks onto, abstracted from the strongest
/// echo path: its pose and along-road speed. Ranges are reported in the
/// road-plane frame the tracker runs in: the slant range from the echo delay
/// is projected down using the known antenna-to-road height difference.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RadarContact {
    pub azimuth: f64,
    pub horizontal_range: f64,
    pub road_speed: f64,
}

/// Project a slant range onto the road plane with the known height offset.
pub(crate) fn slant_to_horizontal(world: &WorldTrace, slant: f64) -> f64 {
    let dz = world.cfg().vehicle_start[2] - world.cfg().gnb_position[2];
    (slant * slant - dz * dz).max(0.01).sqrt()
}

impl RadarContact {
    /// Strongest echo in the slot. During blockage this is the blocker, and
    /// with no moving target visible it degrades to the strongest static
    /// scatterer at zero speed.
    pub fn strongest(world: &WorldTrace, slot: usize, cfg: &ProtocolConfig) -> Option<Self> {
        let paths = world.radar_paths(slot, cfg.carrier_frequency);
        let best = paths
            .paths()
            .iter()
            .max_by(|a, b| a.gain.norm().total_cmp(&b.gain.norm()))?;
        let road_speed = if best.is_los {
            world.truth(slot).speed
        } else if best.doppler.abs() > 1.0 {
            world
                .cfg()
                .blockage
                .as_ref()
                .map(|b| b.blocker_speed)
                .unwrap_or(0.0)
        } else {
            0.0
        };
        let slant = crate::radar::delay_to_range(best.delay);
        Some(Self {
            azimuth: best.angles.azimuth(),
            horizontal_range: slant_to_horizontal(world, slant),
            road_speed,
        })
    }
}

/// Statistical radar measurement: the strongest contact perturbed by the
/// reference measurement deviations. This is the per-slot measurement model
/// `y = x + z` that connected-mode tracking runs on; the full echo-processing
/// pipeline produces the same quantities at initial access.
pub(crate) fn statistical_measurement(
    world: &WorldTrace,
    slot: usize,
    cfg: &ProtocolConfig,
    rng: &mut ChaCha8Rng,
) -> Option<TrackState> {
    let contact = RadarContact::strongest(world, slot, cfg)?;
    let m = &cfg.noise_spec.measurement;
    let range = (contact.horizontal_range + gaussian(rng, m[1].sqrt())).max(0.1);
    let refl = tracker::measured_refl(range, world.cfg().vehicle_rcs)
        + gaussian(rng, m[3].sqrt()) * tracker::measured_refl(range, world.cfg().vehicle_rcs);
    TrackState::new(
        contact.azimuth + gaussian(rng, m[0].sqrt()),
        range,
        contact.road_speed + gaussian(rng, m[2].sqrt()),
        refl.max(0.0),
    )
    .ok()
}

/// Beam elevation for a ground target tracked at the given road-plane range,
/// from the known antenna-to-vehicle height difference.
pub(crate) fn elevation_from_range(world: &WorldTrace, horizontal_range: f64) -> f64 {
    let dz = world.cfg().vehicle_start[2] - world.cfg().gnb_position[2];
    dz.atan2(horizontal_range.max(0.01))
}

/// Prediction bookkeeping around the EKF: holds the filtered belief plus the
/// one- and two-step-ahead predictions the beamformer and combiner consume.
#[derive(Debug, Clone)]
pub(crate) struct TrackLoop {
    pub belief: TrackBelief,
    /// Prediction for the next slot given all measurements (beamformer).
    pub next_beam: TrackState,
    /// Prediction for the next slot lagging one measurement (combiner).
    pub next_combiner: TrackState,
    noise: NoiseSpec,
    dt: f64,
}

impl TrackLoop {
    pub fn init(first_measurement: &TrackState, noise: NoiseSpec, dt: f64) -> Result<Self> {
        let belief = tracker::init_track(
            first_measurement.range,
            first_measurement.speed,
            &AnglePair::azimuth_only(first_measurement.azimuth),
            &noise,
        )?;
        let next_beam = tracker::evolve_state(&belief.mean, dt, None)?;
        let next_combiner = tracker::evolve_state(&next_beam, dt, None)?;
        Ok(Self {
            belief,
            next_beam,
            next_combiner,
            noise,
            dt,
        })
    }

    /// Fold in the slot's measurement, or coast on the model when `None`
    /// (used while the kinematic monitor flags the measurement as foreign).
    pub fn advance(&mut self, measurement: Option<&TrackState>) -> Result<()> {
        match measurement {
            Some(y) => {
                let out = tracker::ekf_step(&self.belief, y, &self.noise, self.dt)?;
                self.belief = out.posterior;
                self.next_beam = out.one_ahead;
                self.next_combiner = out.two_ahead;
            }
            None => {
                let g = tracker::jacobian(&self.belief.mean, self.dt)?;
                let mean = tracker::evolve_state(&self.belief.mean, self.dt, None)?;
                let process = nalgebra::Matrix4::from_diagonal(
                    &nalgebra::Vector4::from_row_slice(&self.noise.process),
                );
                self.belief = TrackBelief {
                    mean,
                    mse: g * self.belief.mse * g.transpose() + process,
                };
                self.next_beam = tracker::evolve_state(&self.belief.mean, self.dt, None)?;
                self.next_combiner = tracker::evolve_state(&self.next_beam, self.dt, None)?;
            }
        }
        Ok(())
    }
}

/// Slot index of the next uplink opportunity at or after `slot` in DDDSU.
pub(crate) fn next_uplink_slot(slot: usize) -> usize {
    let rem = slot % 5;
    if rem == 4 {
        slot
    } else {
        slot + (4 - rem)
    }
}

/// Slot index of the next downlink-capable slot at or after `slot` in DDDSU.
pub(crate) fn next_downlink_slot(slot: usize) -> usize {
    if slot % 5 <= 3 {
        slot
    } else {
        slot + 1
    }
}

/// Derive a stream-specific seed from a base seed.
pub(crate) fn derive_seed(base: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the pair.
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic payload bits for one slot's BER sample.
pub(crate) fn slot_payload(rng: &mut ChaCha8Rng, n_bits: usize) -> Vec<u8> {
    (0..n_bits).map(|_| rng.random_range(0..2u8)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_scenario, ScenarioConfig};
    use rand::SeedableRng;

    #[test]
    fn link_budget_hits_the_requested_comm_snr_at_slot_zero() {
        let world = generate_scenario(&ScenarioConfig::default(), 4).unwrap();
        let cfg = ProtocolConfig::default();
        let budget = LinkBudget::calibrate(&world, &cfg, 15.0).unwrap();
        // Perfectly aligned LoS-only link at slot 0.
        let t0 = world.truth(0);
        let angles = AnglePair::azimuth_only(t0.azimuth).with_elevation(t0.elevation);
        let f = conjugate_beamformer(&angles, &cfg.tx_geom);
        let v = conjugate_beamformer(&angles, &cfg.vehicle_geom);
        let mut paths = world.comm_paths(0, cfg.carrier_frequency, true);
        let los_only = PathSet::new(vec![*paths.los().unwrap()]);
        paths = los_only;
        let comm_cfg = OfdmConfig::from_numerology(
            cfg.mu,
            cfg.prb_count * 12,
            14,
            cfg.carrier_frequency,
            budget.tx_power,
        )
        .unwrap();
        let snr = ofdm::comm_receive_snr(
            &paths,
            &f,
            Some(&v),
            &cfg.tx_geom,
            &cfg.vehicle_geom,
            &comm_cfg,
            budget.comm_noise_var,
        )
        .unwrap();
        let expect = 10f64.powf(1.5);
        assert!(
            (snr / expect - 1.0).abs() < 1e-9,
            "snr {snr} vs requested {expect}"
        );
        assert!((budget.noise_floor_dbm - (-89.23)).abs() < 0.01);
    }

    #[test]
    fn codebook_covers_the_sector_and_finds_nearest_beams() {
        let cfg = ProtocolConfig::default();
        let book =
            BeamCodebook::sector_grid(&cfg.tx_geom, cfg.sector_az, cfg.sector_el, 8, 8).unwrap();
        assert_eq!(book.len(), 64);
        for (angles, beam) in book.beams() {
            assert!(angles.azimuth() >= cfg.sector_az.0 && angles.azimuth() <= cfg.sector_az.1);
            assert!((beam.norm() - 1.0).abs() < 1e-12);
        }
        let idx = book.nearest_azimuth(0.5586);
        let chosen = book.beams()[idx].0.azimuth();
        // The nearest azimuth column of an 8-beam sine grid is within half a
        // step of the request.
        assert!((chosen - 0.5586).abs() < 0.18, "nearest {chosen}");
    }

    #[test]
    fn track_loop_predictions_follow_the_paper_lags() {
        let noise = NoiseSpec::reference();
        let dt = 1.25e-4;
        let y0 = TrackState::new(0.5, 47.0, 20.0, 1e-4).unwrap();
        let mut track = TrackLoop::init(&y0, noise, dt).unwrap();
        // After init: beam = g(x0), combiner = g(g(x0)).
        let beam0 = tracker::evolve_state(&track.belief.mean, dt, None).unwrap();
        assert_eq!(track.next_beam, beam0);
        let y1 = TrackState::new(0.4999, 46.99, 20.0, 1e-4).unwrap();
        let prior = track.belief;
        track.advance(Some(&y1)).unwrap();
        let expect = tracker::ekf_step(&prior, &y1, &noise, dt).unwrap();
        assert_eq!(track.next_beam, expect.one_ahead);
        assert_eq!(track.next_combiner, expect.two_ahead);
    }

    #[test]
    fn statistical_measurement_tracks_the_strongest_contact() {
        let mut cfg = ScenarioConfig::default();
        cfg.speed_jitter_std = 0.0;
        let world = generate_scenario(&cfg, 9).unwrap();
        let pcfg = ProtocolConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = statistical_measurement(&world, 0, &pcfg, &mut rng).unwrap();
        let t0 = world.truth(0);
        assert!((y.azimuth - t0.azimuth).abs() < 0.5);
        assert!((y.range - t0.horizontal_range).abs() < 1.5);
        assert!((y.speed - 20.0).abs() < 1.0);
    }

    #[test]
    fn tdd_slot_helpers() {
        assert_eq!(next_uplink_slot(0), 4);
        assert_eq!(next_uplink_slot(4), 4);
        assert_eq!(next_uplink_slot(5), 9);
        assert_eq!(next_downlink_slot(4), 5);
        assert_eq!(next_downlink_slot(7), 7);
    }

    #[test]
    fn derived_seeds_differ_by_stream() {
        let a = derive_seed(42, 0);
        let b = derive_seed(42, 1);
        let c = derive_seed(43, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(42, 0));
    }
}
