//! Beam failure detection and recovery.
//!
//! Detection runs two monitors. The communication-only scheme counts beam
//! failure instances: at every CSI-RS opportunity the L1-RSRP of the serving
//! beam (measured from the previous slot's pilots) is compared against a
//! threshold a few dB above the noise floor, a timer starts on the first
//! instance, and failure is declared once the counter fills before the timer
//! expires. The ISAC scheme instead watches the kinematic innovations of the
//! tracker every slot: when both the range and the speed innovation exceed
//! their thresholds for enough slots inside a sliding window, the link is
//! declared failed.
//!
//! Three recovery strategies follow: re-running the SSB sweep (conventional),
//! dropping to an omnidirectional sub-6 GHz carrier, or beamforming at the
//! direction-of-arrival of the strongest surviving reflection.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array::{conjugate_beamformer, ArrayGeometry, SteeringVector};
use crate::nr::{self, Scheme};
use crate::ofdm::{self, OfdmConfig};
use crate::sim::{EventRecord, RunReport, SlotRow, WorldTrace};
use crate::{Result, SimError};

use super::ia::{omni_probe, radar_snapshot};
use super::{
    derive_seed, effective_channel, measure_rsrp_dbm, slot_payload, BeamCodebook, ConnectedSim,
    LinkBudget, ProtocolConfig,
};

/// Counter-and-timer beam-failure-instance logic.
#[derive(Debug, Clone)]
pub struct BfiCounter {
    count: usize,
    timer_start: Option<usize>,
    timer_limit_slots: usize,
    max_count: usize,
}

impl BfiCounter {
    pub fn new(timer_limit_slots: usize, max_count: usize) -> Self {
        Self {
            count: 0,
            timer_start: None,
            timer_limit_slots,
            max_count,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Feed one observation; returns true when failure is declared. The
    /// counter restarts when the timer expires before filling up.
    pub fn observe(&mut self, slot: usize, bfi: bool) -> bool {
        if !bfi {
            return false;
        }
        match self.timer_start {
            Some(start) if slot - start < self.timer_limit_slots => self.count += 1,
            _ => {
                self.timer_start = Some(slot);
                self.count = 1;
            }
        }
        self.count >= self.max_count
    }
}

/// Sliding-window persistence check on kinematic innovations.
#[derive(Debug, Clone)]
pub struct KinematicMonitor {
    dr_threshold: f64,
    dv_threshold: f64,
    persist_slots: usize,
    window_slots: usize,
    hits: VecDeque<usize>,
}

impl KinematicMonitor {
    pub fn new(
        dr_threshold: f64,
        dv_threshold: f64,
        persist_slots: usize,
        window_slots: usize,
    ) -> Result<Self> {
        if persist_slots > window_slots {
            return Err(SimError::InvalidParam(
                "persistence cannot exceed the window".into(),
            ));
        }
        if dr_threshold <= 0.0 || dv_threshold <= 0.0 {
            return Err(SimError::InvalidParam("thresholds must be positive".into()));
        }
        Ok(Self {
            dr_threshold,
            dv_threshold,
            persist_slots,
            window_slots,
            hits: VecDeque::new(),
        })
    }

    pub fn hit_count(&self) -> usize {
        self.hits.len()
    }

    /// Feed one slot's innovations; returns true when failure is declared.
    pub fn observe(&mut self, slot: usize, range_innovation: f64, speed_innovation: f64) -> bool {
        if range_innovation > self.dr_threshold && speed_innovation > self.dv_threshold {
            self.hits.push_back(slot);
        }
        while self
            .hits
            .front()
            .is_some_and(|&first| slot + 1 - first > self.window_slots)
        {
            self.hits.pop_front();
        }
        self.hits.len() >= self.persist_slots
    }
}

/// How a failed link is re-established.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryStrategy {
    /// Conventional re-sweep of the SSB codebook plus RACH/RAR.
    BeamTraining,
    /// Omnidirectional sub-6 GHz fallback carrier.
    Sub6Fallback,
    /// Beamform at the DOA of the strongest surviving reflection.
    NlosBeamform,
}

impl std::str::FromStr for RecoveryStrategy {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beam_training" => Ok(Self::BeamTraining),
            "sub6_fallback" | "sub6" => Ok(Self::Sub6Fallback),
            "nlos_beamform" | "nlos" => Ok(Self::NlosBeamform),
            other => Err(SimError::InvalidParam(format!(
                "unknown recovery strategy `{other}`"
            ))),
        }
    }
}

/// Timeline of one detected failure.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BfrEvent {
    pub failure_slot: usize,
    pub detected_slot: usize,
    pub recovery_strategy: RecoveryStrategy,
    pub recovered_slot: Option<usize>,
}

/// Completed failure-and-recovery run.
#[derive(Debug, Clone)]
pub struct BfrOutcome {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub seed: u64,
    pub detected: bool,
    pub detection_latency_ms: Option<f64>,
    pub event: Option<BfrEvent>,
    pub radio_link_failure: bool,
    /// Pooled BER over blocked slots before recovery completed.
    pub blocked_ber: f64,
    /// Pooled BER over recovered slots inside the blockage window.
    pub post_recovery_ber: f64,
    /// Mean throughput over recovered slots inside the blockage window.
    pub post_recovery_throughput_mbps: f64,
    pub report: RunReport,
}

/// The link configuration in force after recovery.
enum PostLink {
    Mmwave {
        f: SteeringVector,
        v: SteeringVector,
        overhead: f64,
        avg_symbol_duration: f64,
        prb_count: usize,
    },
    Sub6 {
        overhead: f64,
        avg_symbol_duration: f64,
        prb_count: usize,
    },
    /// Declared radio link failure: no data flows.
    Down,
}

/// One monitored-and-recovered run over a scenario with a blockage window.
pub fn run_bfr(
    scheme: Scheme,
    world: &WorldTrace,
    cfg: &ProtocolConfig,
    snr_db: f64,
    seed: u64,
    strategy: RecoveryStrategy,
) -> Result<BfrOutcome> {
    let blockage = world
        .cfg()
        .blockage
        .ok_or_else(|| SimError::Config("BFR run needs a blockage window".into()))?;
    let failure_slot = blockage.start_slot;

    let mut sim = ConnectedSim::with_freeze(scheme, world, cfg, snr_db, seed, true)?;
    let budget = *sim.budget();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xBF));

    let mut bfi = BfiCounter::new(cfg.bfd_timer_slots, cfg.bfi_max);
    let mut kinematic = KinematicMonitor::new(
        cfg.dr_threshold,
        cfg.dv_threshold,
        cfg.persist_slots,
        cfg.window_slots,
    )?;

    let mut rows: Vec<SlotRow> = Vec::with_capacity(world.slot_count());
    let mut events: Vec<EventRecord> = Vec::new();
    let mut detected_slot: Option<usize> = None;
    let mut prev_rsrp_dbm = f64::INFINITY;

    // Phase 1: monitor until detection (or the end of the world).
    let mut slot = 0usize;
    while slot < world.slot_count() {
        let (row, telemetry) = sim.step(slot)?;
        rows.push(row);
        let declared = match scheme {
            Scheme::Conventional => {
                let mut declared = false;
                if slot > 0 && slot.is_multiple_of(cfg.csirs_period_slots) {
                    let is_bfi =
                        prev_rsrp_dbm < budget.noise_floor_dbm + cfg.rsrp_margin_db;
                    if is_bfi {
                        events.push(EventRecord::with_fields(
                            slot,
                            "bfi",
                            serde_json::json!({ "rsrp_dbm": prev_rsrp_dbm }),
                        ));
                    }
                    declared = bfi.observe(slot, is_bfi);
                }
                prev_rsrp_dbm = telemetry.rsrp_dbm;
                declared
            }
            Scheme::Isac => {
                if telemetry.innovation_hit {
                    events.push(EventRecord::with_fields(
                        slot,
                        "kinematic_hit",
                        serde_json::json!({
                            "dr": telemetry.range_innovation,
                            "dv": telemetry.speed_innovation,
                        }),
                    ));
                }
                kinematic.observe(
                    slot,
                    telemetry.range_innovation,
                    telemetry.speed_innovation,
                )
            }
        };
        if declared {
            detected_slot = Some(slot);
            events.push(EventRecord::new(slot, "beam_failure_detected"));
            slot += 1;
            break;
        }
        slot += 1;
    }
    events.extend(sim.take_events());

    let Some(t_detect) = detected_slot else {
        // No failure declared; the run ends as pure monitoring.
        let blocked_ber = pooled_ber(&rows, failure_slot, world.slot_count());
        let report = RunReport::from_rows(rows, events)?;
        return Ok(BfrOutcome {
            scheme,
            snr_db,
            seed,
            detected: false,
            detection_latency_ms: None,
            event: None,
            radio_link_failure: false,
            blocked_ber,
            post_recovery_ber: f64::NAN,
            post_recovery_throughput_mbps: f64::NAN,
            report,
        });
    };

    // Detection latency convention: the RSRP monitor declares at a CSI-RS
    // boundary (pilots of the previous slot), the kinematic monitor at the
    // end of the declaring slot.
    let latency_slots = match scheme {
        Scheme::Conventional => t_detect.saturating_sub(failure_slot),
        Scheme::Isac => t_detect + 1 - failure_slot.min(t_detect + 1),
    };
    let detection_latency_ms = latency_slots as f64 * world.slot_duration() * 1e3;

    // Phase 2: bring up the recovery link.
    let (post_link, recovered_slot, rlf) =
        build_recovery(world, cfg, &budget, strategy, t_detect, seed, &mut rng, &mut events)?;

    // Outage rows between detection and recovery: no data scheduled.
    let outage_end = recovered_slot.unwrap_or(world.slot_count()).min(world.slot_count());
    for s in slot..outage_end {
        rows.push(outage_row(world, s));
    }

    // Phase 3: run the recovered link to the end of the scenario.
    if let Some(t_rec) = recovered_slot {
        for s in t_rec..world.slot_count() {
            rows.push(post_link_row(
                world, cfg, &budget, &post_link, s, seed, &mut rng,
            )?);
        }
        events.push(EventRecord::with_fields(
            t_rec,
            "recovered",
            serde_json::json!({ "strategy": format!("{strategy:?}") }),
        ));
    }

    let blockage_end = (failure_slot + blockage.duration_slots).min(world.slot_count());
    let blocked_ber = pooled_ber(&rows, failure_slot, recovered_slot.unwrap_or(blockage_end));
    let (post_recovery_ber, post_recovery_throughput_mbps) = match recovered_slot {
        Some(t_rec) if t_rec < blockage_end => (
            pooled_ber(&rows, t_rec, blockage_end),
            mean_throughput(&rows, t_rec, blockage_end),
        ),
        _ => (f64::NAN, f64::NAN),
    };

    let event = BfrEvent {
        failure_slot,
        detected_slot: t_detect,
        recovery_strategy: strategy,
        recovered_slot,
    };
    let report = RunReport::from_rows(rows, events)?;
    Ok(BfrOutcome {
        scheme,
        snr_db,
        seed,
        detected: true,
        detection_latency_ms: Some(detection_latency_ms),
        event: Some(event),
        radio_link_failure: rlf,
        blocked_ber,
        post_recovery_ber,
        post_recovery_throughput_mbps,
        report,
    })
}

#[allow(clippy::too_many_arguments)]
fn build_recovery(
    world: &WorldTrace,
    cfg: &ProtocolConfig,
    budget: &LinkBudget,
    strategy: RecoveryStrategy,
    t_detect: usize,
    seed: u64,
    rng: &mut ChaCha8Rng,
    events: &mut Vec<EventRecord>,
) -> Result<(PostLink, Option<usize>, bool)> {
    let mmwave_plan = nr::build_frame_plan(
        Scheme::Isac,
        cfg.mu,
        &nr::FramePlanOptions {
            prb_count: cfg.prb_count,
            ..Default::default()
        },
    )?;
    match strategy {
        RecoveryStrategy::BeamTraining => {
            // Re-run the 64-beam sweep over the blocked channel.
            let codebook =
                BeamCodebook::sector_grid(&cfg.tx_geom, cfg.sector_az, cfg.sector_el, 8, 8)?;
            let sweep_end = t_detect + 1 + 32;
            if sweep_end >= world.slot_count() {
                return Ok((PostLink::Down, None, true));
            }
            let mut best = (f64::NEG_INFINITY, 0usize);
            for (b, (_, beam)) in codebook.beams().iter().enumerate() {
                let s = (t_detect + 1 + b / 2).min(world.slot_count() - 1);
                let paths = world.comm_paths(s, cfg.carrier_frequency, true);
                let h = effective_channel(&paths, beam, None, cfg, budget.tx_power);
                let rsrp = measure_rsrp_dbm(h, budget.comm_noise_var, 127, rng);
                if rsrp > best.0 {
                    best = (rsrp, b);
                }
            }
            if best.0 < budget.noise_floor_dbm + cfg.candidate_margin_db {
                events.push(EventRecord::with_fields(
                    sweep_end,
                    "radio_link_failure",
                    serde_json::json!({ "best_rsrp_dbm": best.0 }),
                ));
                return Ok((PostLink::Down, None, true));
            }
            let rach = super::next_uplink_slot(sweep_end);
            let rar = super::next_downlink_slot(rach + cfg.rar_processing_slots);
            let (angles, f) = codebook.beams()[best.1].clone();
            let v = conjugate_beamformer(&angles, &cfg.vehicle_geom);
            let plan = nr::build_frame_plan(
                Scheme::Conventional,
                cfg.mu,
                &nr::FramePlanOptions {
                    csirs_period_slots: cfg.csirs_period_slots,
                    prb_count: cfg.prb_count,
                    ..Default::default()
                },
            )?;
            Ok((
                PostLink::Mmwave {
                    f,
                    v,
                    overhead: nr::overhead_metrics(&plan).oh_fraction,
                    avg_symbol_duration: plan.numerology.avg_symbol_duration,
                    prb_count: cfg.prb_count,
                },
                Some((rar + 1).min(world.slot_count())),
                false,
            ))
        }
        RecoveryStrategy::Sub6Fallback => {
            let plan = nr::build_frame_plan(
                Scheme::Isac,
                cfg.sub6_mu,
                &nr::FramePlanOptions {
                    prb_count: cfg.sub6_prb,
                    ..Default::default()
                },
            )?;
            Ok((
                PostLink::Sub6 {
                    overhead: nr::overhead_metrics(&plan).oh_fraction,
                    avg_symbol_duration: plan.numerology.avg_symbol_duration,
                    prb_count: cfg.sub6_prb,
                },
                Some((t_detect + 1).min(world.slot_count())),
                false,
            ))
        }
        RecoveryStrategy::NlosBeamform => {
            // DOA of the strongest surviving reflection from a fresh echo
            // aggregation; the LoS is gone, so the fix is an NLoS direction.
            let mid = (t_detect + cfg.ia_aggregation_slots / 2).min(world.slot_count() - 1);
            let probe = omni_probe(&cfg.tx_geom);
            let fix = radar_snapshot(world, cfg, budget, mid, &probe, derive_seed(seed, 0x7E))?;
            match fix {
                Some(fix) => {
                    let f = conjugate_beamformer(&fix.angles, &cfg.tx_geom);
                    let v = conjugate_beamformer(&fix.angles, &cfg.vehicle_geom);
                    let t_rec = t_detect + 1 + cfg.ia_aggregation_slots;
                    events.push(EventRecord::with_fields(
                        t_detect,
                        "nlos_doa_fix",
                        serde_json::json!({ "azimuth": fix.angles.azimuth() }),
                    ));
                    Ok((
                        PostLink::Mmwave {
                            f,
                            v,
                            overhead: nr::overhead_metrics(&mmwave_plan).oh_fraction,
                            avg_symbol_duration: mmwave_plan.numerology.avg_symbol_duration,
                            prb_count: cfg.prb_count,
                        },
                        Some(t_rec.min(world.slot_count())),
                        false,
                    ))
                }
                None => {
                    events.push(EventRecord::new(t_detect, "radio_link_failure"));
                    Ok((PostLink::Down, None, true))
                }
            }
        }
    }
}

fn outage_row(world: &WorldTrace, slot: usize) -> SlotRow {
    let truth = world.truth(slot);
    SlotRow {
        slot,
        true_theta: truth.azimuth,
        est_theta: f64::NAN,
        true_d: truth.range,
        est_d: f64::NAN,
        true_v: truth.speed,
        est_v: f64::NAN,
        ber: 0.5,
        throughput_mbps: 0.0,
        event: "recovery_outage".into(),
        receive_snr: 0.0,
    }
}

fn post_link_row(
    world: &WorldTrace,
    cfg: &ProtocolConfig,
    budget: &LinkBudget,
    link: &PostLink,
    slot: usize,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<SlotRow> {
    let truth = world.truth(slot);
    let bits = slot_payload(rng, cfg.bits_per_slot_sample);
    let slot_seed = derive_seed(seed, (slot as u64) << 2 | 3);
    let (ber, throughput, snr, est_theta) = match link {
        PostLink::Mmwave {
            f,
            v,
            overhead,
            avg_symbol_duration,
            prb_count,
        } => {
            let paths = world.comm_paths(slot, cfg.carrier_frequency, true);
            let comm_cfg = OfdmConfig::from_numerology(
                cfg.mu,
                prb_count * 12,
                14,
                cfg.carrier_frequency,
                budget.tx_power,
            )?;
            let h = effective_channel(&paths, f, Some(v), cfg, budget.tx_power);
            let ber = ofdm::measure_ber(
                &bits,
                &paths,
                f,
                Some(v),
                &cfg.tx_geom,
                &cfg.vehicle_geom,
                &comm_cfg,
                cfg.bits_per_symbol,
                budget.comm_noise_var,
                slot_seed,
            )?;
            let tput = nr::throughput_mbps(&nr::ThroughputInputs {
                carriers: 1,
                layers: 1,
                bits_per_symbol: cfg.bits_per_symbol,
                prb_count: *prb_count,
                avg_symbol_duration: *avg_symbol_duration,
                ber,
                overhead: *overhead,
            });
            (
                ber,
                tput,
                h.norm_sqr() / budget.comm_noise_var,
                f64::NAN,
            )
        }
        PostLink::Sub6 {
            overhead,
            avg_symbol_duration,
            prb_count,
        } => {
            // Omnidirectional on both ends: unit "arrays" reuse the scalar
            // channel machinery without beamforming gain.
            let paths = world.comm_paths(slot, cfg.sub6_carrier, false);
            let unit = ArrayGeometry::new(1, 1)?;
            let f = omni_probe(&unit);
            let comm_cfg = OfdmConfig::from_numerology(
                cfg.sub6_mu,
                prb_count * 12,
                14,
                cfg.sub6_carrier,
                budget.tx_power,
            )?;
            let h = crate::array::array_gain_factor(1, 1)
                * budget.tx_power.sqrt()
                * ofdm::comm_effective_gain(&paths, &f, None, &unit, &unit);
            let ber = ofdm::measure_ber(
                &bits, &paths, &f, None, &unit, &unit, &comm_cfg, cfg.bits_per_symbol,
                budget.comm_noise_var, slot_seed,
            )?;
            let tput = nr::throughput_mbps(&nr::ThroughputInputs {
                carriers: 1,
                layers: 1,
                bits_per_symbol: cfg.bits_per_symbol,
                prb_count: *prb_count,
                avg_symbol_duration: *avg_symbol_duration,
                ber,
                overhead: *overhead,
            });
            (ber, tput, h.norm_sqr() / budget.comm_noise_var, f64::NAN)
        }
        PostLink::Down => (0.5, 0.0, 0.0, f64::NAN),
    };
    Ok(SlotRow {
        slot,
        true_theta: truth.azimuth,
        est_theta,
        true_d: truth.range,
        est_d: f64::NAN,
        true_v: truth.speed,
        est_v: f64::NAN,
        ber,
        throughput_mbps: throughput,
        event: String::new(),
        receive_snr: snr,
    })
}

fn pooled_ber(rows: &[SlotRow], from_slot: usize, to_slot: usize) -> f64 {
    let picked: Vec<f64> = rows
        .iter()
        .filter(|r| r.slot >= from_slot && r.slot < to_slot)
        .map(|r| r.ber)
        .collect();
    if picked.is_empty() {
        f64::NAN
    } else {
        picked.iter().sum::<f64>() / picked.len() as f64
    }
}

fn mean_throughput(rows: &[SlotRow], from_slot: usize, to_slot: usize) -> f64 {
    let picked: Vec<f64> = rows
        .iter()
        .filter(|r| r.slot >= from_slot && r.slot < to_slot)
        .map(|r| r.throughput_mbps)
        .collect();
    if picked.is_empty() {
        f64::NAN
    } else {
        picked.iter().sum::<f64>() / picked.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_scenario, Blockage, ScenarioConfig};

    fn bfr_world(seed: u64) -> WorldTrace {
        let mut cfg = ScenarioConfig::default();
        cfg.duration = 0.5; // 4000 slots
        cfg.blockage = Some(Blockage {
            start_slot: 1000,
            duration_slots: 2500,
            ..Blockage::default()
        });
        generate_scenario(&cfg, seed).unwrap()
    }

    #[test]
    fn bfi_counter_declares_on_the_sixth_instance() {
        let mut counter = BfiCounter::new(60, 6);
        for s in [1005, 1010, 1015, 1020, 1025] {
            assert!(!counter.observe(s, true), "declared early at {s}");
        }
        assert!(counter.observe(1030, true));
    }

    #[test]
    fn bfi_counter_resets_when_the_timer_expires() {
        let mut counter = BfiCounter::new(60, 6);
        assert!(!counter.observe(0, true));
        assert!(!counter.observe(30, true));
        // 70 is past the 60-slot timer: the window restarts here.
        assert!(!counter.observe(70, true));
        assert_eq!(counter.count(), 1);
        for s in [75, 80, 85, 90] {
            assert!(!counter.observe(s, true));
        }
        assert!(counter.observe(95, true));
    }

    #[test]
    fn kinematic_monitor_needs_persistence_inside_the_window() {
        let mut m = KinematicMonitor::new(2.0, 1.0, 12, 20).unwrap();
        // Eleven hits: not enough.
        for s in 0..11 {
            assert!(!m.observe(s, 5.0, 3.0), "declared early at {s}");
        }
        // A miss, then the twelfth hit still inside the window.
        assert!(!m.observe(11, 0.1, 0.1));
        assert!(m.observe(12, 5.0, 3.0));

        // Hits scattered too thinly never accumulate.
        let mut sparse = KinematicMonitor::new(2.0, 1.0, 12, 20).unwrap();
        for s in 0..200 {
            let hit = s % 3 == 0;
            let (dr, dv) = if hit { (5.0, 3.0) } else { (0.0, 0.0) };
            assert!(!sparse.observe(s, dr, dv), "sparse hits declared at {s}");
        }
        assert!(KinematicMonitor::new(2.0, 1.0, 30, 20).is_err());
    }

    #[test]
    fn conventional_detection_latency_is_exactly_six_periods() {
        let world = bfr_world(3);
        let cfg = ProtocolConfig::default();
        let out = run_bfr(
            Scheme::Conventional,
            &world,
            &cfg,
            10.0,
            1,
            RecoveryStrategy::BeamTraining,
        )
        .unwrap();
        assert!(out.detected);
        assert_eq!(
            out.detection_latency_ms,
            Some(3.75),
            "latency {:?}",
            out.detection_latency_ms
        );
        // An exact multiple of the 0.625 ms CSI-RS period.
        let periods = out.detection_latency_ms.unwrap() / 0.625;
        assert!((periods - periods.round()).abs() < 1e-9);
    }

    #[test]
    fn isac_detection_stays_within_the_latency_bracket() {
        let world = bfr_world(4);
        let cfg = ProtocolConfig::default();
        let out = run_bfr(
            Scheme::Isac,
            &world,
            &cfg,
            20.0,
            2,
            RecoveryStrategy::Sub6Fallback,
        )
        .unwrap();
        assert!(out.detected);
        let latency = out.detection_latency_ms.unwrap();
        assert!(
            (1.5..=2.5).contains(&latency),
            "kinematic latency {latency} ms"
        );
    }

    #[test]
    fn no_blockage_means_no_false_failures() {
        let mut scfg = ScenarioConfig::default();
        scfg.duration = 0.25;
        scfg.blockage = Some(Blockage {
            // Zero-length window: monitors run but nothing is ever blocked.
            start_slot: 1999,
            duration_slots: 0,
            ..Blockage::default()
        });
        let cfg = ProtocolConfig::default();
        for seed in 0..10 {
            let world = generate_scenario(&scfg, 100 + seed).unwrap();
            for scheme in [Scheme::Conventional, Scheme::Isac] {
                let out = run_bfr(
                    scheme,
                    &world,
                    &cfg,
                    20.0,
                    seed,
                    RecoveryStrategy::BeamTraining,
                )
                .unwrap();
                assert!(!out.detected, "{scheme:?} false failure at seed {seed}");
            }
        }
    }

    #[test]
    fn sub6_fallback_trades_throughput_for_ber() {
        let world = bfr_world(5);
        let cfg = ProtocolConfig::default();
        let out = run_bfr(
            Scheme::Isac,
            &world,
            &cfg,
            20.0,
            3,
            RecoveryStrategy::Sub6Fallback,
        )
        .unwrap();
        assert!(out.detected && !out.radio_link_failure);
        // Blocked mmWave was effectively dead; sub-6 restores demodulation.
        assert!(
            out.post_recovery_ber < out.blocked_ber,
            "sub6 ber {} vs blocked {}",
            out.post_recovery_ber,
            out.blocked_ber
        );
        // The numerology change costs throughput versus healthy mmWave.
        let healthy = pooled_throughput_before(&out.report.rows, 1000);
        assert!(
            out.post_recovery_throughput_mbps < healthy,
            "sub6 tput {} vs healthy {}",
            out.post_recovery_throughput_mbps,
            healthy
        );
    }

    fn pooled_throughput_before(rows: &[SlotRow], slot: usize) -> f64 {
        let picked: Vec<f64> = rows
            .iter()
            .filter(|r| r.slot < slot)
            .map(|r| r.throughput_mbps)
            .collect();
        picked.iter().sum::<f64>() / picked.len() as f64
    }

    #[test]
    fn nlos_beamforming_beats_blind_beam_training() {
        let world = bfr_world(6);
        let cfg = ProtocolConfig::default();
        let nlos = run_bfr(
            Scheme::Isac,
            &world,
            &cfg,
            20.0,
            4,
            RecoveryStrategy::NlosBeamform,
        )
        .unwrap();
        let training = run_bfr(
            Scheme::Conventional,
            &world,
            &cfg,
            20.0,
            4,
            RecoveryStrategy::BeamTraining,
        )
        .unwrap();
        assert!(nlos.detected && training.detected);
        if !nlos.radio_link_failure && !training.radio_link_failure {
            assert!(
                nlos.post_recovery_ber <= training.post_recovery_ber,
                "nlos {} vs training {}",
                nlos.post_recovery_ber,
                training.post_recovery_ber
            );
            assert!(
                nlos.post_recovery_throughput_mbps >= training.post_recovery_throughput_mbps
            );
        }
    }

    #[test]
    fn hopeless_sweep_declares_radio_link_failure() {
        let world = bfr_world(7);
        let cfg = ProtocolConfig::default();
        // At -25 dB nothing clears the candidate threshold.
        let out = run_bfr(
            Scheme::Conventional,
            &world,
            &cfg,
            -25.0,
            5,
            RecoveryStrategy::BeamTraining,
        )
        .unwrap();
        if out.detected {
            assert!(out.radio_link_failure);
            assert!(out.event.unwrap().recovered_slot.is_none());
        }
    }
}
