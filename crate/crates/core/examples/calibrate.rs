//! Prints reference-receiver BLER against code rate for a scenario preset.
//!
//! `cargo run --release -p sitefit-core --example calibrate -- small-lab 400 0.5 0.6 0.7`

use sitefit_core::channel::ScenarioConfig;
use sitefit_core::classic::MmseReceiver;
use sitefit_core::grid::GridConfig;
use sitefit_core::link::{run_campaign, CampaignConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let preset = args.first().map_or("small-lab", String::as_str);
    let n_slots: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(400);
    let rates: Vec<f64> = args.iter().skip(2).filter_map(|s| s.parse().ok()).collect();
    let grid = GridConfig::default();
    let rx = MmseReceiver::new(&grid);
    for rate in rates {
        let scenario = ScenarioConfig::preset(preset).expect("known preset");
        let cfg = CampaignConfig::new("calibrate", scenario, grid, rate, n_slots);
        let t = std::time::Instant::now();
        let store = run_campaign(&cfg, &rx).expect("campaign runs");
        let new = store.fapi.iter().filter(|r| r.new_data_indicator).count();
        println!(
            "{preset} rate {rate:.3} (Z={}) bler {:.4} new-data {new} in {:.1}s",
            cfg.codec().unwrap().lifting_size,
            store.bler(),
            t.elapsed().as_secs_f64()
        );
    }
}
