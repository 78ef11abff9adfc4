//! Experiment orchestration over (SNR x seed) grids.
//!
//! A job grid runs the selected protocol once per (SNR, seed) pair, in
//! parallel up to `ISAC_SIM_THREADS` workers, and reduces the results in a
//! fixed (SNR, seed) order so reruns are byte-identical. Failing jobs are
//! recorded and never abort the batch.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde_json::json;

use crate::nr::Scheme;
use crate::protocols::{
    run_bfr, run_connected, run_initial_access, BfrOutcome, ConnectedOutcome, IaOutcome,
    ProtocolConfig, RecoveryStrategy,
};
use crate::sim::scenario::{generate_scenario, Blockage, ScenarioConfig};
use crate::{Result, SimError};

/// Which case study to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    InitialAccess,
    Connected,
    Bfr { strategy: RecoveryStrategy },
}

/// A full experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub scheme: Scheme,
    pub scenario: ScenarioConfig,
    pub protocol: ProtocolConfig,
    pub snr_grid_db: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Cap on simulated slots for connected runs (`None` = whole scenario).
    pub max_slots: Option<usize>,
}

/// One (SNR, seed) cell of the grid.
#[derive(Debug, Clone)]
pub enum CellResult {
    InitialAccess(IaOutcome),
    Connected(ConnectedOutcome),
    Bfr(BfrOutcome),
    Failed(String),
}

/// Batch output: results in (SNR, seed) order plus the grid layout.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub scheme: Scheme,
    pub snr_grid_db: Vec<f64>,
    pub seeds: Vec<u64>,
    pub cells: Vec<CellResult>,
}

/// Worker count: `ISAC_SIM_THREADS` when set, otherwise the machine default.
pub fn worker_threads() -> usize {
    std::env::var("ISAC_SIM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

fn parallel_map<T, F>(jobs: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let results: Vec<Mutex<Option<T>>> = (0..jobs).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = threads.max(1).min(jobs.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= jobs {
                    break;
                }
                let value = f(idx);
                *results[idx].lock().expect("result slot") = Some(value);
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().expect("poisoned slot").expect("job ran"))
        .collect()
}

/// Run the whole (SNR x seed) grid for one experiment.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.scenario.validate()?;
    if spec.snr_grid_db.is_empty() || spec.seeds.is_empty() {
        return Err(SimError::Config("empty SNR grid or seed list".into()));
    }
    let mut scenario = spec.scenario.clone();
    // Failure studies need a blockage window; inject the default if absent.
    if matches!(spec.kind, ExperimentKind::Bfr { .. }) && scenario.blockage.is_none() {
        let slots = scenario.slot_count();
        let mut blockage = Blockage::default();
        if blockage.start_slot + blockage.duration_slots > slots {
            blockage.start_slot = slots / 4;
            blockage.duration_slots = slots / 2;
        }
        scenario.blockage = Some(blockage);
    }

    let jobs = spec.snr_grid_db.len() * spec.seeds.len();
    let cells = parallel_map(jobs, worker_threads(), |idx| {
        let snr = spec.snr_grid_db[idx / spec.seeds.len()];
        let seed = spec.seeds[idx % spec.seeds.len()];
        run_cell(spec, &scenario, snr, seed)
            .unwrap_or_else(|err| CellResult::Failed(err.to_string()))
    });

    Ok(ExperimentReport {
        kind: spec.kind,
        scheme: spec.scheme,
        snr_grid_db: spec.snr_grid_db.clone(),
        seeds: spec.seeds.clone(),
        cells,
    })
}

fn run_cell(
    spec: &ExperimentSpec,
    scenario: &ScenarioConfig,
    snr_db: f64,
    seed: u64,
) -> Result<CellResult> {
    let world = generate_scenario(scenario, seed)?;
    Ok(match spec.kind {
        ExperimentKind::InitialAccess => CellResult::InitialAccess(run_initial_access(
            spec.scheme,
            &world,
            &spec.protocol,
            snr_db,
            seed,
        )?),
        ExperimentKind::Connected => CellResult::Connected(run_connected(
            spec.scheme,
            &world,
            &spec.protocol,
            snr_db,
            seed,
            spec.max_slots,
        )?),
        ExperimentKind::Bfr { strategy } => CellResult::Bfr(run_bfr(
            spec.scheme,
            &world,
            &spec.protocol,
            snr_db,
            seed,
            strategy,
        )?),
    })
}

impl ExperimentReport {
    /// Results of one SNR grid point, in seed order.
    pub fn cells_at(&self, snr_index: usize) -> &[CellResult] {
        let n = self.seeds.len();
        &self.cells[snr_index * n..(snr_index + 1) * n]
    }

    /// Per-SNR aggregate table as a JSON document.
    pub fn summary_json(&self) -> serde_json::Value {
        let per_snr: Vec<serde_json::Value> = (0..self.snr_grid_db.len())
            .map(|i| {
                let snr = self.snr_grid_db[i];
                let cells = self.cells_at(i);
                match self.kind {
                    ExperimentKind::InitialAccess => summarize_ia(snr, cells),
                    ExperimentKind::Connected => summarize_connected(snr, cells),
                    ExperimentKind::Bfr { .. } => summarize_bfr(snr, cells),
                }
            })
            .collect();
        json!({
            "kind": format!("{:?}", self.kind),
            "scheme": self.scheme.label(),
            "seeds": self.seeds,
            "snr_grid_db": self.snr_grid_db,
            "per_snr": per_snr,
            "failed_cells": self.cells.iter().filter(|c| matches!(c, CellResult::Failed(_))).count(),
        })
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn rmse(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        f64::NAN
    } else {
        (v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64).sqrt()
    }
}

fn summarize_ia(snr: f64, cells: &[CellResult]) -> serde_json::Value {
    let outcomes: Vec<&IaOutcome> = cells
        .iter()
        .filter_map(|c| match c {
            CellResult::InitialAccess(o) => Some(o),
            _ => None,
        })
        .collect();
    let n = outcomes.len().max(1) as f64;
    let detected = outcomes.iter().filter(|o| o.detected_by_radar).count() as f64;
    let fallback = outcomes.iter().filter(|o| o.used_fallback).count() as f64;
    json!({
        "snr_db": snr,
        "runs": outcomes.len(),
        "detection_rate": detected / n,
        "fallback_rate": fallback / n,
        "mean_latency_ms": mean(outcomes.iter().map(|o| o.latency_ms)),
        "angle_rmse": rmse(outcomes.iter().map(|o| o.angle_error)),
        "angle_rmse_detected": rmse(
            outcomes.iter().filter(|o| o.detected_by_radar).map(|o| o.angle_error)
        ),
        "angle_rmse_fallback": rmse(
            outcomes.iter().filter(|o| !o.detected_by_radar).map(|o| o.angle_error)
        ),
    })
}

fn summarize_connected(snr: f64, cells: &[CellResult]) -> serde_json::Value {
    let outcomes: Vec<&ConnectedOutcome> = cells
        .iter()
        .filter_map(|c| match c {
            CellResult::Connected(o) => Some(o),
            _ => None,
        })
        .collect();
    json!({
        "snr_db": snr,
        "runs": outcomes.len(),
        "rmse_azimuth": mean(outcomes.iter().map(|o| o.report.summary.rmse_azimuth)),
        "rmse_range": mean(outcomes.iter().map(|o| o.report.summary.rmse_range)),
        "rmse_speed": mean(outcomes.iter().map(|o| o.report.summary.rmse_speed)),
        "pooled_ber": mean(outcomes.iter().map(|o| o.report.summary.pooled_ber)),
        "mean_throughput_mbps": mean(
            outcomes.iter().map(|o| o.report.summary.mean_throughput_mbps)
        ),
    })
}

fn summarize_bfr(snr: f64, cells: &[CellResult]) -> serde_json::Value {
    let outcomes: Vec<&BfrOutcome> = cells
        .iter()
        .filter_map(|c| match c {
            CellResult::Bfr(o) => Some(o),
            _ => None,
        })
        .collect();
    let n = outcomes.len().max(1) as f64;
    let detected = outcomes.iter().filter(|o| o.detected).count() as f64;
    json!({
        "snr_db": snr,
        "runs": outcomes.len(),
        "detection_rate": detected / n,
        "mean_detection_latency_ms": mean(
            outcomes.iter().filter_map(|o| o.detection_latency_ms)
        ),
        "rlf_rate": outcomes.iter().filter(|o| o.radio_link_failure).count() as f64 / n,
        "post_recovery_ber": mean(outcomes.iter().map(|o| o.post_recovery_ber)),
        "post_recovery_throughput_mbps": mean(
            outcomes.iter().map(|o| o.post_recovery_throughput_mbps)
        ),
        "blocked_ber": mean(outcomes.iter().map(|o| o.blocked_ber)),
    })
}

/// FNV-1a hash of an arbitrary string, used to fingerprint configurations.
fn fnv1a(text: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for byte in text.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Write the run manifest next to the outputs: configuration fingerprint,
/// grid layout and crate version. Equal manifests imply equal outputs.
pub fn write_manifest(dir: &std::path::Path, spec: &ExperimentSpec) -> Result<std::path::PathBuf> {
    let fingerprint = fnv1a(&format!("{spec:?}"));
    let manifest = json!({
        "config_hash": format!("{fingerprint:016x}"),
        "kind": format!("{:?}", spec.kind),
        "scheme": spec.scheme.label(),
        "snr_grid_db": spec.snr_grid_db,
        "seeds": spec.seeds,
        "max_slots": spec.max_slots,
        "crate_version": env!("CARGO_PKG_VERSION"),
        "defaults_version": 1,
    });
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest"))?;
    Ok(path)
}
