//! NR numerology arithmetic, frame plans and throughput accounting.
//!
//! The frame-structure model follows the single-layer SU-MIMO TDD deployment
//! used throughout the simulator: numerology `mu = 3` (120 kHz subcarrier
//! spacing) on a `DDDSU` slot pattern, SSBs every 20 ms, and either a
//! CSI-RS/PMI feedback loop (communication-only scheme) or echo-driven
//! tracking with no CSI-RS at all (ISAC scheme). Resource-element accounting
//! runs over one 20 ms SSB period and partitions every downlink RE into
//! exactly one category, which is what the overhead fraction and the
//! throughput formula consume.

use serde::{Deserialize, Serialize};

use crate::{Result, SimError};

/// Admissible SSB periods in connected mode (ms).
pub const SSB_PERIODS_MS: [f64; 6] = [5.0, 10.0, 20.0, 40.0, 80.0, 160.0];

/// Admissible CSI-RS periods (slots).
pub const CSIRS_PERIODS_SLOTS: [usize; 13] = [4, 5, 8, 10, 16, 20, 32, 40, 64, 80, 160, 320, 640];

/// REs occupied by one SSB: 4 symbols by 240 subcarriers.
pub const SSB_RE: usize = 4 * 240;

/// Which beam-management scheme a plan or run belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Conventional,
    Isac,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Conventional => "conventional",
            Scheme::Isac => "isac",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conventional" | "conv" | "comm" => Ok(Scheme::Conventional),
            "isac" => Ok(Scheme::Isac),
            other => Err(SimError::InvalidParam(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Slot kinds of a TDD pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotKind {
    Downlink,
    Special,
    Uplink,
}

/// Derived parameters of one NR numerology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Numerology {
    pub mu: u8,
    /// Subcarrier spacing in Hz: `2^mu * 15 kHz`.
    pub subcarrier_spacing: f64,
    /// Slots per 1 ms subframe: `2^mu`.
    pub slots_per_subframe: usize,
    /// Symbols per slot with normal cyclic prefix.
    pub symbols_per_slot: usize,
    /// Average OFDM symbol duration in seconds: `1 ms / (14 * 2^mu)`.
    pub avg_symbol_duration: f64,
}

impl Numerology {
    /// Slot duration in seconds.
    pub fn slot_duration(&self) -> f64 {
        1.0e-3 / self.slots_per_subframe as f64
    }
}

/// Numerology parameters for `mu` in `[0, 6]`.
pub fn numerology_params(mu: u8) -> Result<Numerology> {
    if mu > 6 {
        return Err(SimError::InvalidParam(format!(
            "numerology mu={mu} outside [0, 6]"
        )));
    }
    let scale = 1usize << mu;
    Ok(Numerology {
        mu,
        subcarrier_spacing: 15_000.0 * scale as f64,
        slots_per_subframe: scale,
        symbols_per_slot: 14,
        avg_symbol_duration: 1.0e-3 / (14.0 * scale as f64),
    })
}

/// Options for [`build_frame_plan`]. The defaults reproduce the deployment
/// described above; individual knobs exist for the values the standard leaves
/// open (special-slot split, PDCCH allocation, carrier width).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FramePlanOptions {
    /// SSB period in ms; must be one of [`SSB_PERIODS_MS`].
    pub ssb_period_ms: f64,
    /// CSI-RS period in slots for the conventional scheme; must be one of
    /// [`CSIRS_PERIODS_SLOTS`]. Ignored for the ISAC scheme.
    pub csirs_period_slots: usize,
    /// Downlink symbols in a special slot (the rest splits into guard and
    /// uplink as `special_guard_symbols` / remainder).
    pub special_dl_symbols: usize,
    pub special_guard_symbols: usize,
    /// PDCCH symbols reserved per downlink-bearing slot.
    pub pdcch_symbols_per_dl_slot: usize,
    /// Carrier width in PRBs.
    pub prb_count: usize,
}

impl Default for FramePlanOptions {
    fn default() -> Self {
        Self {
            ssb_period_ms: 20.0,
            csirs_period_slots: 5,
            special_dl_symbols: 10,
            special_guard_symbols: 2,
            pdcch_symbols_per_dl_slot: 1,
            prb_count: 208,
        }
    }
}

/// Per-period resource-element allocation for one scheme and numerology.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FramePlan {
    pub scheme: Scheme,
    pub numerology: Numerology,
    /// Repeating slot pattern (DDDSU).
    pub slot_pattern: Vec<SlotKind>,
    pub ssb_period_ms: f64,
    /// Slots spent on SSB transmission per SSB period.
    pub ssb_slots_per_period: usize,
    /// SSBs transmitted per SSB period (2 fit in one slot at 14 symbols).
    pub ssb_per_period: usize,
    /// CSI-RS period in slots; `None` for the ISAC scheme.
    pub csirs_period_slots: Option<usize>,
    pub csirs_ports: usize,
    /// DMRS REs per RB per reference-signal window (type A plus one
    /// additional position).
    pub dmrs_re_per_rb_period: usize,
    /// CSI-RS REs per RB per reference-signal window (0 for ISAC).
    pub csirs_re_per_rb_period: usize,
    /// Window over which the DMRS/CSI-RS RE constants are counted (slots).
    pub rs_window_slots: usize,
    pub special_dl_symbols: usize,
    pub special_guard_symbols: usize,
    pub pdcch_symbols_per_dl_slot: usize,
    pub prb_count: usize,
}

/// DMRS REs per RB per 5-slot window: mapping type A with one additional
/// DMRS position.
const DMRS_RE_PER_RB_WINDOW: usize = 42;
/// CSI-RS REs per RB per 5-slot window at 32 ports.
const CSIRS_RE_PER_RB_WINDOW: usize = 32;

/// Build the RE allocation plan for a scheme at the given numerology.
pub fn build_frame_plan(scheme: Scheme, mu: u8, options: &FramePlanOptions) -> Result<FramePlan> {
    let numerology = numerology_params(mu)?;
    if !SSB_PERIODS_MS
        .iter()
        .any(|p| (p - options.ssb_period_ms).abs() < 1e-9)
    {
        return Err(SimError::Config(format!(
            "ssb_period_ms {} not in the admissible set {:?}",
            options.ssb_period_ms, SSB_PERIODS_MS
        )));
    }
    if !CSIRS_PERIODS_SLOTS.contains(&options.csirs_period_slots) {
        return Err(SimError::Config(format!(
            "csirs_period_slots {} not in the admissible set",
            options.csirs_period_slots
        )));
    }
    if options.special_dl_symbols + options.special_guard_symbols > numerology.symbols_per_slot {
        return Err(SimError::Config("special slot split exceeds 14 symbols".into()));
    }
    if options.pdcch_symbols_per_dl_slot >= options.special_dl_symbols {
        return Err(SimError::Config(
            "PDCCH allocation leaves no downlink data symbols in special slots".into(),
        ));
    }

    let slot_pattern = vec![
        SlotKind::Downlink,
        SlotKind::Downlink,
        SlotKind::Downlink,
        SlotKind::Special,
        SlotKind::Uplink,
    ];

    let plan = match scheme {
        // 8 SSBs beam-swept over 4 slots per period, CSI-RS with feedback.
        Scheme::Conventional => FramePlan {
            scheme,
            numerology,
            slot_pattern,
            ssb_period_ms: options.ssb_period_ms,
            ssb_slots_per_period: 4,
            ssb_per_period: 8,
            csirs_period_slots: Some(options.csirs_period_slots),
            csirs_ports: 32,
            dmrs_re_per_rb_period: DMRS_RE_PER_RB_WINDOW,
            csirs_re_per_rb_period: CSIRS_RE_PER_RB_WINDOW,
            rs_window_slots: options.csirs_period_slots,
            special_dl_symbols: options.special_dl_symbols,
            special_guard_symbols: options.special_guard_symbols,
            pdcch_symbols_per_dl_slot: options.pdcch_symbols_per_dl_slot,
            prb_count: options.prb_count,
        },
        // One synchronization-only SSB slot (the SSB is repeated once inside
        // it), no CSI-RS and no uplink CSI feedback.
        Scheme::Isac => FramePlan {
            scheme,
            numerology,
            slot_pattern,
            ssb_period_ms: options.ssb_period_ms,
            ssb_slots_per_period: 1,
            ssb_per_period: 2,
            csirs_period_slots: None,
            csirs_ports: 0,
            dmrs_re_per_rb_period: DMRS_RE_PER_RB_WINDOW,
            csirs_re_per_rb_period: 0,
            rs_window_slots: options.csirs_period_slots,
            special_dl_symbols: options.special_dl_symbols,
            special_guard_symbols: options.special_guard_symbols,
            pdcch_symbols_per_dl_slot: options.pdcch_symbols_per_dl_slot,
            prb_count: options.prb_count,
        },
    };
    Ok(plan)
}

/// Absolute RE counts over one SSB period across the whole carrier.
///
/// Downlink REs partition exactly into the five categories; uplink feedback
/// is tracked separately and never enters the downlink totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReBudget {
    pub ssb: usize,
    pub dmrs: usize,
    pub csirs: usize,
    pub control: usize,
    pub data: usize,
    /// Total downlink REs in the period (equals the sum of the above).
    pub total_downlink: usize,
    /// Uplink REs consumed by CSI feedback reports.
    pub feedback: usize,
}

impl FramePlan {
    /// Slots in one SSB period.
    pub fn slots_per_period(&self) -> usize {
        (self.ssb_period_ms * 1e-3 / self.numerology.slot_duration()).round() as usize
    }

    fn slot_counts(&self) -> (usize, usize, usize) {
        let total = self.slots_per_period();
        let pat = &self.slot_pattern;
        let mut d = 0;
        let mut s = 0;
        let mut u = 0;
        for i in 0..total {
            match pat[i % pat.len()] {
                SlotKind::Downlink => d += 1,
                SlotKind::Special => s += 1,
                SlotKind::Uplink => u += 1,
            }
        }
        (d, s, u)
    }

    /// Downlink symbols per period in a single subcarrier column.
    pub fn downlink_symbols_per_period(&self) -> usize {
        let (d, s, _) = self.slot_counts();
        d * self.numerology.symbols_per_slot + s * self.special_dl_symbols
    }

    /// RE accounting over one SSB period for the whole `prb_count` carrier.
    pub fn re_budget(&self) -> ReBudget {
        let (d_slots, s_slots, u_slots) = self.slot_counts();
        let total_downlink = self.downlink_symbols_per_period() * 12 * self.prb_count;

        let ssb = self.ssb_per_period * SSB_RE;
        let windows = self.slots_per_period() / self.rs_window_slots;
        let dmrs = self.dmrs_re_per_rb_period * windows * self.prb_count;
        let csirs = self.csirs_re_per_rb_period * windows * self.prb_count;
        let control =
            (d_slots + s_slots) * self.pdcch_symbols_per_dl_slot * 12 * self.prb_count;
        let data = total_downlink - ssb - dmrs - csirs - control;

        // One-symbol CSI report in the uplink slot of each CSI-RS period.
        let feedback = match self.csirs_period_slots {
            Some(period) => (self.slots_per_period() / period).min(u_slots) * 12 * self.prb_count,
            None => 0,
        };

        ReBudget {
            ssb,
            dmrs,
            csirs,
            control,
            data,
            total_downlink,
            feedback,
        }
    }

    /// JSON rendering of the plan plus its RE budget, for CLI inspection.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct PlanDoc<'a> {
            plan: &'a FramePlan,
            re_budget: ReBudget,
            overhead: OverheadMetrics,
        }
        serde_json::to_string_pretty(&PlanDoc {
            plan: self,
            re_budget: self.re_budget(),
            overhead: overhead_metrics(self),
        })
        .expect("frame plan serializes")
    }
}

/// Overhead summary of a plan relative to the conventional baseline.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OverheadMetrics {
    /// Non-data downlink REs over total downlink REs in one SSB period.
    pub oh_fraction: f64,
    /// Reference-signal RE reduction versus the conventional plan.
    pub rs_reduction_vs_conventional: f64,
    /// SSB beam-training slot reduction versus the conventional plan.
    pub training_reduction_vs_conventional: f64,
}

/// Overhead fraction and reductions against the conventional counterpart.
pub fn overhead_metrics(plan: &FramePlan) -> OverheadMetrics {
    let budget = plan.re_budget();
    let oh_fraction = (budget.total_downlink - budget.data) as f64 / budget.total_downlink as f64;

    let baseline = FramePlan {
        scheme: Scheme::Conventional,
        ssb_slots_per_period: 4,
        ssb_per_period: 8,
        csirs_period_slots: Some(plan.rs_window_slots),
        csirs_ports: 32,
        dmrs_re_per_rb_period: DMRS_RE_PER_RB_WINDOW,
        csirs_re_per_rb_period: CSIRS_RE_PER_RB_WINDOW,
        ..plan.clone()
    };

    let rs_plan = (plan.dmrs_re_per_rb_period + plan.csirs_re_per_rb_period) as f64;
    let rs_base = (baseline.dmrs_re_per_rb_period + baseline.csirs_re_per_rb_period) as f64;
    let rs_reduction_vs_conventional = (rs_base - rs_plan) / rs_base;

    let training_reduction_vs_conventional = (baseline.ssb_slots_per_period
        - plan.ssb_slots_per_period.min(baseline.ssb_slots_per_period))
        as f64
        / baseline.ssb_slots_per_period as f64;

    OverheadMetrics {
        oh_fraction,
        rs_reduction_vs_conventional,
        training_reduction_vs_conventional,
    }
}

/// Inputs of the NR throughput formula.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ThroughputInputs {
    /// Carriers in carrier aggregation.
    pub carriers: usize,
    /// MIMO layers.
    pub layers: usize,
    /// Modulation order in bits per symbol.
    pub bits_per_symbol: usize,
    pub prb_count: usize,
    /// Average OFDM symbol duration in seconds.
    pub avg_symbol_duration: f64,
    pub ber: f64,
    pub overhead: f64,
}

/// Downlink throughput in Mbps; the `(1 - BER - OH)` factor clamps at zero.
pub fn throughput_mbps(inputs: &ThroughputInputs) -> f64 {
    let per_carrier = inputs.layers as f64
        * inputs.bits_per_symbol as f64
        * (inputs.prb_count as f64 * 12.0 / inputs.avg_symbol_duration)
        * (1.0 - inputs.ber - inputs.overhead).max(0.0);
    1e-6 * inputs.carriers as f64 * per_carrier
}
