//! Random radial feeders and loading scenarios for tests and benchmarks.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::feeder::{build_sensitivities, grid_conditions, FeederModel, Line, Scenario, Topology};
use crate::rules::DEFAULT_Q_RATIO;

#[derive(Debug, Clone)]
pub struct FeederSpec {
    pub buses: usize,
    pub v0: f64,
    pub r: (f64, f64),
    pub x: (f64, f64),
    /// Probability that a bus hangs off its predecessor rather than a
    /// uniformly chosen earlier bus.
    pub chain_bias: f64,
    /// Fraction of buses hosting an inverter (at least one).
    pub inverter_fraction: f64,
    /// Range of solar ratings `p̄` at inverter buses.
    pub p_bar: (f64, f64),
}

impl Default for FeederSpec {
    fn default() -> Self {
        FeederSpec {
            buses: 10,
            v0: 1.0,
            r: (0.005, 0.02),
            x: (0.005, 0.02),
            chain_bias: 0.6,
            inverter_fraction: 0.5,
            p_bar: (0.05, 0.2),
        }
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Random radial topology with bus ids `1..=buses`.
pub fn random_topology(spec: &FeederSpec, rng: &mut impl Rng) -> Topology {
    let lines = (1..=spec.buses as u64)
        .map(|id| {
            let parent = if id == 1 {
                0
            } else if rng.gen_bool(spec.chain_bias.clamp(0.0, 1.0)) {
                id - 1
            } else {
                rng.gen_range(0..id)
            };
            Line {
                id,
                parent,
                r: uniform(rng, spec.r),
                x: uniform(rng, spec.x),
            }
        })
        .collect();
    Topology::new(spec.v0, lines)
}

/// Random feeder with `q̂ = 0.44·p̄` at a random inverter subset.
pub fn random_feeder(spec: &FeederSpec, rng: &mut impl Rng) -> Result<FeederModel> {
    let model = build_sensitivities(&random_topology(spec, rng))?;
    let ids = model.ids().to_vec();
    let mut chosen: Vec<u64> = ids
        .iter()
        .copied()
        .filter(|_| rng.gen_bool(spec.inverter_fraction.clamp(0.0, 1.0)))
        .collect();
    if chosen.is_empty() {
        chosen.push(ids[rng.gen_range(0..ids.len())]);
    }
    let p_bar: Vec<f64> = chosen.iter().map(|_| uniform(rng, spec.p_bar)).collect();
    let q_hat: Vec<f64> = p_bar.iter().map(|p| DEFAULT_Q_RATIO * p).collect();
    model.with_inverters(&chosen, &q_hat, Some(&p_bar))
}

#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub count: usize,
    /// Peak active load per bus.
    pub load: (f64, f64),
    /// Load power factor expressed as `q_l / p_l`.
    pub load_q_ratio: f64,
    /// Range of the common solar irradiance factor.
    pub solar_factor: (f64, f64),
    /// Range of the common load factor.
    pub load_factor: (f64, f64),
    /// Per-bus multiplicative noise on both factors.
    pub noise: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            count: 8,
            load: (0.01, 0.04),
            load_q_ratio: 0.3,
            solar_factor: (0.0, 1.0),
            load_factor: (0.3, 1.0),
            noise: 0.1,
        }
    }
}

/// Scenarios where inverter buses generate `factor·p̄` and every bus
/// draws a scaled peak load.
pub fn random_scenarios(model: &FeederModel, spec: &ScenarioSpec, rng: &mut impl Rng) -> Vec<Scenario> {
    let n = model.bus_count();
    let peak: Vec<f64> = (0..n).map(|_| uniform(rng, spec.load)).collect();
    (0..spec.count)
        .map(|_| {
            let solar = uniform(rng, spec.solar_factor);
            let load = uniform(rng, spec.load_factor);
            let mut noise = || 1.0 + spec.noise * rng.gen_range(-1.0..1.0);
            let mut p_g = DVector::zeros(n);
            for (k, &idx) in model.inverters().iter().enumerate() {
                p_g[idx] = solar * model.p_bar()[k] * noise();
            }
            let p_l = DVector::from_iterator(n, peak.iter().map(|p| p * load * noise()));
            let q_l = &p_l * spec.load_q_ratio;
            grid_conditions(model, &p_g, &p_l, &q_l).expect("dimensions match by construction")
        })
        .collect()
}

/// Fixed 20-bus feeder with eight scenarios used for design studies.
pub fn design_suite(seed: u64) -> Result<(FeederModel, Vec<Scenario>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = FeederSpec {
        buses: 20,
        inverter_fraction: 0.4,
        p_bar: (0.1, 0.3),
        ..Default::default()
    };
    let model = random_feeder(&spec, &mut rng)?;
    let scenarios = random_scenarios(&model, &ScenarioSpec::default(), &mut rng);
    Ok((model, scenarios))
}

/// Feeder with widely spread scenarios, from heavy load at night to
/// strong midday solar.
pub fn spread_suite(seed: u64) -> Result<(FeederModel, Vec<Scenario>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = FeederSpec {
        buses: 12,
        inverter_fraction: 0.5,
        p_bar: (0.2, 0.5),
        ..Default::default()
    };
    let model = random_feeder(&spec, &mut rng)?;
    let scen = ScenarioSpec {
        count: 24,
        load: (0.03, 0.08),
        solar_factor: (0.0, 1.0),
        load_factor: (0.2, 1.0),
        ..Default::default()
    };
    let scenarios = random_scenarios(&model, &scen, &mut rng);
    Ok((model, scenarios))
}
