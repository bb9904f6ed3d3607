//! Writes a synthetic feeder and scenario set to disk.
//!
//! ```text
//! cargo run -p voltvar-core --example export_suite -- <dir> [seed]
//! ```

use std::fs::File;
use std::path::PathBuf;

use voltvar::io::{write_feeder, write_scenarios, NamedScenario};
use voltvar::synthetic::design_suite;

fn main() -> voltvar::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| ".".into()));
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    std::fs::create_dir_all(&dir)?;
    let (model, scenarios) = design_suite(seed)?;
    let named: Vec<NamedScenario> = scenarios
        .into_iter()
        .enumerate()
        .map(|(k, scenario)| NamedScenario {
            id: format!("s{k}"),
            scenario,
        })
        .collect();
    write_feeder(&model, dir.join("feeder.json"))?;
    write_scenarios(&model, &named, File::create(dir.join("scenarios.csv"))?)?;
    println!("wrote {} buses, {} scenarios to {}", model.bus_count(), named.len(), dir.display());
    Ok(())
}
