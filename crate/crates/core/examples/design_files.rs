//! Designs symmetric rules for a feeder and scenario set on disk.
//!
//! ```text
//! cargo run -p voltvar-core --example design_files -- feeder.json scenarios.csv
//! ```

use voltvar::designer::{design, DesignConfig};
use voltvar::io::{read_feeder, read_scenarios};
use voltvar::rules::RuleParams;

fn main() -> voltvar::Result<()> {
    let mut args = std::env::args().skip(1);
    let feeder = args.next().unwrap_or_else(|| "data/feeder.json".into());
    let scen = args.next().unwrap_or_else(|| "data/scenarios.csv".into());
    let model = read_feeder(feeder)?;
    let scenarios: Vec<_> = read_scenarios(&model, scen)?
        .into_iter()
        .map(|s| s.scenario)
        .collect();
    let cfg = DesignConfig { eps: 0.01, ..Default::default() };
    let report = design::<RuleParams>(&model, &scenarios, &cfg)?;
    println!("cost {:.3e}, spectral norm {:.3}", report.cost, report.stability.spectral_norm);
    let rules = report.rules::<RuleParams>(&model)?;
    println!("{}", voltvar::io::rules_to_json(&model, &rules)?);
    Ok(())
}
