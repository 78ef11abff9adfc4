//! Per-slot metric rows, protocol event records and summary aggregation.

use serde::{Deserialize, Serialize};

use crate::{Result, SimError};

/// Fixed column order of the per-slot CSV.
pub const CSV_HEADER: &str =
    "slot,true_theta,est_theta,true_d,est_d,true_v,est_v,ber,throughput_mbps,event";

/// One slot of tracked quantities. Estimated fields hold NaN where a scheme
/// produces no estimate for that quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRow {
    pub slot: usize,
    pub true_theta: f64,
    pub est_theta: f64,
    pub true_d: f64,
    pub est_d: f64,
    pub true_v: f64,
    pub est_v: f64,
    pub ber: f64,
    pub throughput_mbps: f64,
    pub event: String,
    /// Linear receive SNR of the slot (not part of the CSV row).
    pub receive_snr: f64,
}

impl SlotRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.6},{}",
            self.slot,
            self.true_theta,
            self.est_theta,
            self.true_d,
            self.est_d,
            self.true_v,
            self.est_v,
            self.ber,
            self.throughput_mbps,
            self.event
        )
    }
}

/// One protocol event, serialized as a JSON line.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EventRecord {
    pub slot: usize,
    pub event: String,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub fields: serde_json::Value,
}

impl EventRecord {
    pub fn new(slot: usize, event: impl Into<String>) -> Self {
        Self {
            slot,
            event: event.into(),
            fields: serde_json::Value::Null,
        }
    }

    pub fn with_fields(slot: usize, event: impl Into<String>, fields: serde_json::Value) -> Self {
        Self {
            slot,
            event: event.into(),
            fields,
        }
    }

    pub fn json_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

/// Aggregates recomputable from the per-slot rows.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Summary {
    pub slots: usize,
    pub rmse_azimuth: f64,
    pub rmse_range: f64,
    pub rmse_speed: f64,
    /// Empirical CDF of the absolute azimuth error at 100 quantiles.
    pub azimuth_error_quantiles: Vec<f64>,
    pub pooled_ber: f64,
    pub mean_throughput_mbps: f64,
    pub events: usize,
}

/// One run: rows, events and their summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub rows: Vec<SlotRow>,
    pub events: Vec<EventRecord>,
    pub summary: Summary,
}

impl RunReport {
    pub fn from_rows(rows: Vec<SlotRow>, events: Vec<EventRecord>) -> Result<Self> {
        let mut summary = compute_metrics(&rows)?;
        summary.events = events.len();
        Ok(Self {
            rows,
            events,
            summary,
        })
    }

    pub fn csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 96 + 128);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn events_jsonl(&self) -> String {
        let mut out = String::new();
        for ev in &self.events {
            out.push_str(&ev.json_line());
            out.push('\n');
        }
        out
    }
}

fn rmse(errors: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for e in errors {
        if e.is_finite() {
            sum += e * e;
            n += 1;
        }
    }
    if n == 0 {
        f64::NAN
    } else {
        (sum / n as f64).sqrt()
    }
}

/// RMSE per tracked quantity, a 100-point azimuth-error CDF, pooled BER and
/// mean throughput.
pub fn compute_metrics(rows: &[SlotRow]) -> Result<Summary> {
    if rows.is_empty() {
        return Err(SimError::InputShape("no rows to summarize".into()));
    }
    let rmse_azimuth = rmse(rows.iter().map(|r| r.est_theta - r.true_theta));
    let rmse_range = rmse(rows.iter().map(|r| r.est_d - r.true_d));
    let rmse_speed = rmse(rows.iter().map(|r| r.est_v - r.true_v));

    let mut abs_errors: Vec<f64> = rows
        .iter()
        .map(|r| (r.est_theta - r.true_theta).abs())
        .filter(|e| e.is_finite())
        .collect();
    abs_errors.sort_by(f64::total_cmp);
    let azimuth_error_quantiles = if abs_errors.is_empty() {
        Vec::new()
    } else {
        (1..=100)
            .map(|q| {
                let idx = ((q as f64 / 100.0) * abs_errors.len() as f64).ceil() as usize;
                abs_errors[idx.clamp(1, abs_errors.len()) - 1]
            })
            .collect()
    };

    let pooled_ber = rows.iter().map(|r| r.ber).sum::<f64>() / rows.len() as f64;
    let mean_throughput_mbps =
        rows.iter().map(|r| r.throughput_mbps).sum::<f64>() / rows.len() as f64;

    Ok(Summary {
        slots: rows.len(),
        rmse_azimuth,
        rmse_range,
        rmse_speed,
        azimuth_error_quantiles,
        pooled_ber,
        mean_throughput_mbps,
        events: 0,
    })
}
