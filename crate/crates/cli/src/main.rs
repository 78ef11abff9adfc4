//! Command-line front end: experiment selection, configuration ingestion,
//! seeding, and emission of plot-ready CSV/JSON result files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use isacsim::nr::{self, Scheme};
use isacsim::protocols::{ProtocolConfig, RecoveryStrategy};
use isacsim::sim::{
    run_experiment, write_manifest, CellResult, ExperimentKind, ExperimentReport, ExperimentSpec,
    ScenarioConfig,
};
use isacsim::SimError;

#[derive(Parser)]
#[command(
    name = "isacsim",
    about = "Link-level simulator for sensing-assisted NR-V2I beam management",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario configuration file (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base seed; experiments run `--seeds` consecutive seeds from here.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,

    /// Number of seeds per grid point.
    #[arg(long, global = true, default_value_t = 1)]
    seeds: usize,

    /// Comma-separated receive-SNR grid in dB.
    #[arg(long, global = true, value_delimiter = ',', default_value = "20")]
    snr: Vec<f64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Scheme selection: conventional, isac or both.
    #[arg(long, global = true, default_value = "both")]
    scheme: String,

    /// Radar processing subband width in subcarriers.
    #[arg(long, global = true)]
    subband: Option<usize>,

    /// Cap on simulated slots per run.
    #[arg(long, global = true)]
    slots: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Initial-access latency, angle error and detection tables.
    Ia,
    /// Connected-mode tracking, BER and throughput traces.
    Connected,
    /// Beam-failure detection latency and recovery traces.
    Bfr {
        /// Recovery strategy: beam_training, sub6_fallback or nlos_beamform.
        #[arg(long, default_value = "sub6_fallback")]
        strategy: String,
    },
    /// Frame-plan JSON plus the overhead-reduction table.
    Overhead,
    /// Cross-product batch: ia + connected + bfr for every scheme.
    Sweep,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 2 for configuration problems, 3 for runtime failures.
fn exit_code(err: &SimError) -> u8 {
    match err {
        SimError::Config(_) | SimError::InvalidParam(_) => 2,
        _ => 3,
    }
}

fn run(cli: Cli) -> Result<(), SimError> {
    let scenario = match &cli.config {
        Some(path) => {
            if !path.exists() {
                return Err(SimError::Config(format!(
                    "config file not found: {}",
                    path.display()
                )));
            }
            ScenarioConfig::from_file(path)?
        }
        None => ScenarioConfig::default(),
    };
    if cli.snr.is_empty() || cli.snr.iter().any(|v| !v.is_finite()) {
        return Err(SimError::Config("invalid SNR list".into()));
    }
    if cli.seeds == 0 {
        return Err(SimError::Config("need at least one seed".into()));
    }
    let schemes = parse_schemes(&cli.scheme)?;
    let mut protocol = ProtocolConfig::default();
    if let Some(subband) = cli.subband {
        if subband < 8 {
            return Err(SimError::Config("subband must be at least 8 subcarriers".into()));
        }
        protocol.radar_subband = subband;
    }
    std::fs::create_dir_all(&cli.out)?;

    let seeds: Vec<u64> = (0..cli.seeds as u64).map(|k| cli.seed + k).collect();
    match &cli.command {
        Command::Overhead => overhead_command(&cli.out, &schemes),
        Command::Ia => {
            grid_command(
                &cli.out,
                &schemes,
                ExperimentKind::InitialAccess,
                &scenario,
                &protocol,
                &cli.snr,
                &seeds,
                cli.slots,
            )
        }
        Command::Connected => grid_command(
            &cli.out,
            &schemes,
            ExperimentKind::Connected,
            &scenario,
            &protocol,
            &cli.snr,
            &seeds,
            cli.slots,
        ),
        Command::Bfr { strategy } => {
            let strategy: RecoveryStrategy = strategy.parse()?;
            grid_command(
                &cli.out,
                &schemes,
                ExperimentKind::Bfr { strategy },
                &scenario,
                &protocol,
                &cli.snr,
                &seeds,
                cli.slots,
            )
        }
        Command::Sweep => {
            overhead_command(&cli.out.join("overhead"), &schemes)?;
            for (kind, dir) in [
                (ExperimentKind::InitialAccess, "ia"),
                (ExperimentKind::Connected, "connected"),
                (
                    ExperimentKind::Bfr {
                        strategy: RecoveryStrategy::Sub6Fallback,
                    },
                    "bfr",
                ),
            ] {
                grid_command(
                    &cli.out.join(dir),
                    &schemes,
                    kind,
                    &scenario,
                    &protocol,
                    &cli.snr,
                    &seeds,
                    cli.slots,
                )?;
            }
            Ok(())
        }
    }
}

fn parse_schemes(text: &str) -> Result<Vec<Scheme>, SimError> {
    match text {
        "both" => Ok(vec![Scheme::Conventional, Scheme::Isac]),
        other => Ok(vec![other.parse()?]),
    }
}

/// Frame plans, RE budgets and the overhead-reduction table.
fn overhead_command(out: &Path, schemes: &[Scheme]) -> Result<(), SimError> {
    std::fs::create_dir_all(out)?;
    let mut table = String::from(
        "scheme,oh_fraction,rs_reduction_vs_conventional,training_reduction_vs_conventional\n",
    );
    for scheme in schemes {
        let plan = nr::build_frame_plan(*scheme, 3, &nr::FramePlanOptions::default())?;
        let metrics = nr::overhead_metrics(&plan);
        std::fs::write(
            out.join(format!("frame_plan_{}.json", scheme.label())),
            plan.to_json(),
        )?;
        table.push_str(&format!(
            "{},{:.5},{:.5},{:.5}\n",
            scheme.label(),
            metrics.oh_fraction,
            metrics.rs_reduction_vs_conventional,
            metrics.training_reduction_vs_conventional,
        ));
    }
    std::fs::write(out.join("overhead_table.csv"), &table)?;
    let manifest = serde_json::json!({
        "command": "overhead",
        "schemes": schemes.iter().map(|s| s.label()).collect::<Vec<_>>(),
        "crate_version": env!("CARGO_PKG_VERSION"),
    });
    std::fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest"),
    )?;
    print!("{table}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn grid_command(
    out: &Path,
    schemes: &[Scheme],
    kind: ExperimentKind,
    scenario: &ScenarioConfig,
    protocol: &ProtocolConfig,
    snr: &[f64],
    seeds: &[u64],
    max_slots: Option<usize>,
) -> Result<(), SimError> {
    std::fs::create_dir_all(out)?;
    for scheme in schemes {
        let spec = ExperimentSpec {
            kind,
            scheme: *scheme,
            scenario: scenario.clone(),
            protocol: protocol.clone(),
            snr_grid_db: snr.to_vec(),
            seeds: seeds.to_vec(),
            max_slots,
        };
        let report = run_experiment(&spec)?;
        write_manifest(out, &spec)?;
        std::fs::write(
            out.join(format!("summary_{}.json", scheme.label())),
            serde_json::to_string_pretty(&report.summary_json()).expect("summary"),
        )?;
        write_cells(out, scheme, &report)?;
        println!(
            "{} {:?}: {} cells -> {}",
            scheme.label(),
            kind,
            report.cells.len(),
            out.display()
        );
    }
    Ok(())
}

fn snr_tag(snr: f64) -> String {
    format!("{snr}").replace('.', "p").replace('-', "m")
}

/// Per-cell tables plus full slot traces for the first seed of each SNR.
fn write_cells(out: &Path, scheme: &Scheme, report: &ExperimentReport) -> Result<(), SimError> {
    let label = scheme.label();
    match report.kind {
        ExperimentKind::InitialAccess => {
            let mut csv = String::from(
                "snr_db,seed,arrival_slot,latency_ms,angle_error,detected_by_radar,used_fallback\n",
            );
            for (i, &snr) in report.snr_grid_db.iter().enumerate() {
                for (j, &seed) in report.seeds.iter().enumerate() {
                    if let CellResult::InitialAccess(o) = &report.cells_at(i)[j] {
                        csv.push_str(&format!(
                            "{snr},{seed},{},{:.6},{:.9},{},{}\n",
                            o.arrival_slot,
                            o.latency_ms,
                            o.angle_error,
                            o.detected_by_radar,
                            o.used_fallback
                        ));
                    }
                }
            }
            std::fs::write(out.join(format!("ia_{label}.csv")), csv)?;
        }
        ExperimentKind::Connected => {
            for (i, &snr) in report.snr_grid_db.iter().enumerate() {
                if let CellResult::Connected(o) = &report.cells_at(i)[0] {
                    let tag = snr_tag(snr);
                    std::fs::write(
                        out.join(format!("connected_{label}_snr{tag}.csv")),
                        o.report.csv(),
                    )?;
                    std::fs::write(
                        out.join(format!("connected_{label}_snr{tag}.events.jsonl")),
                        o.report.events_jsonl(),
                    )?;
                }
            }
        }
        ExperimentKind::Bfr { .. } => {
            let mut csv = String::from(
                "snr_db,seed,detected,detection_latency_ms,radio_link_failure,blocked_ber,post_recovery_ber,post_recovery_throughput_mbps\n",
            );
            for (i, &snr) in report.snr_grid_db.iter().enumerate() {
                for (j, &seed) in report.seeds.iter().enumerate() {
                    if let CellResult::Bfr(o) = &report.cells_at(i)[j] {
                        csv.push_str(&format!(
                            "{snr},{seed},{},{},{},{:.9},{:.9},{:.6}\n",
                            o.detected,
                            o.detection_latency_ms
                                .map(|v| format!("{v:.6}"))
                                .unwrap_or_default(),
                            o.radio_link_failure,
                            o.blocked_ber,
                            o.post_recovery_ber,
                            o.post_recovery_throughput_mbps
                        ));
                    }
                }
            }
            std::fs::write(out.join(format!("bfr_{label}.csv")), csv)?;
            for (i, &snr) in report.snr_grid_db.iter().enumerate() {
                if let CellResult::Bfr(o) = &report.cells_at(i)[0] {
                    let tag = snr_tag(snr);
                    std::fs::write(
                        out.join(format!("bfr_trace_{label}_snr{tag}.csv")),
                        o.report.csv(),
                    )?;
                    std::fs::write(
                        out.join(format!("bfr_trace_{label}_snr{tag}.events.jsonl")),
                        o.report.events_jsonl(),
                    )?;
                }
            }
        }
    }
    Ok(())
}
