use isacsim::nr::Scheme;
use isacsim::protocols::{run_connected, ProtocolConfig};
use isacsim::sim::{generate_scenario, ScenarioConfig};

fn main() {
    let world = generate_scenario(&ScenarioConfig::default(), 1).unwrap();
    let cfg = ProtocolConfig::default();
    for scheme in [Scheme::Isac, Scheme::Conventional] {
        let start = std::time::Instant::now();
        let out = run_connected(scheme, &world, &cfg, 20.0, 1, None).unwrap();
        println!(
            "{:?}: {:?} for {} slots, rmse_az {:.4}, tput {:.1}",
            scheme,
            start.elapsed(),
            out.report.rows.len(),
            out.report.summary.rmse_azimuth,
            out.report.summary.mean_throughput_mbps
        );
    }
}
