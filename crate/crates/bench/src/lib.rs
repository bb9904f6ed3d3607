//! Shared fixtures for the criterion benches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voltvar::designer::feasible_set;
use voltvar::rules::{RuleParams, RuleSet};
use voltvar::synthetic::{random_feeder, random_scenarios, FeederSpec, ScenarioSpec};
use voltvar::{FeederModel, Scenario};

pub struct Fixture {
    pub model: FeederModel,
    pub scenarios: Vec<Scenario>,
    /// Certified rules obtained by projecting the origin.
    pub rules: RuleSet<RuleParams>,
    pub eps: f64,
}

/// Random feeder with `buses` buses, inverters at 40% of them and
/// `count` scenarios.
pub fn fixture(buses: usize, count: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = FeederSpec {
        buses,
        inverter_fraction: 0.4,
        p_bar: (0.1, 0.3),
        ..Default::default()
    };
    let model = random_feeder(&spec, &mut rng).expect("synthetic feeder is valid");
    let scen = ScenarioSpec {
        count,
        ..Default::default()
    };
    let scenarios = random_scenarios(&model, &scen, &mut rng);
    let eps = 0.01;
    let set = feasible_set::<RuleParams>(&model, eps).expect("feasible set");
    let start = vec![0.0; set.dim()];
    let z = voltvar::project(&set, &start).expect("projection converges").z;
    let rules = RuleSet::from_z(&z, model.q_hat()).expect("projected point is valid");
    Fixture {
        model,
        scenarios,
        rules,
        eps,
    }
}
