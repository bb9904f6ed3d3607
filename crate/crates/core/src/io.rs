//! File formats: feeder JSON, scenario CSV and rule JSON.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feeder::{build_sensitivities, grid_conditions, FeederModel, Line, Scenario, Topology};
use crate::rules::{NonSymRuleParams, NonSymRuleRecord, RuleParams, RuleRecord, RuleSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    pub id: u64,
    pub parent: u64,
    pub r: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeederFile {
    pub v0: f64,
    pub buses: Vec<BusRecord>,
    pub inverters: Vec<u64>,
    pub q_hat: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_bar: Option<Vec<f64>>,
}

impl FeederFile {
    pub fn from_model(model: &FeederModel) -> Self {
        let topo = model.topology();
        FeederFile {
            v0: topo.v0,
            buses: topo
                .lines
                .iter()
                .map(|l| BusRecord {
                    id: l.id,
                    parent: l.parent,
                    r: l.r,
                    x: l.x,
                })
                .collect(),
            inverters: model.inverter_ids(),
            q_hat: model.q_hat().to_vec(),
            p_bar: Some(model.p_bar().to_vec()),
        }
    }

    pub fn into_model(self) -> Result<FeederModel> {
        if !(self.v0 > 0.0) || !self.v0.is_finite() {
            return Err(Error::InvalidConfig(format!("v0 must be positive, got {}", self.v0)));
        }
        let lines = self
            .buses
            .into_iter()
            .map(|b| Line {
                id: b.id,
                parent: b.parent,
                r: b.r,
                x: b.x,
            })
            .collect();
        build_sensitivities(&Topology::new(self.v0, lines))?.with_inverters(
            &self.inverters,
            &self.q_hat,
            self.p_bar.as_deref(),
        )
    }
}

pub fn parse_feeder(json: &str) -> Result<FeederModel> {
    serde_json::from_str::<FeederFile>(json)?.into_model()
}

pub fn read_feeder(path: impl AsRef<Path>) -> Result<FeederModel> {
    parse_feeder(&std::fs::read_to_string(path)?)
}

pub fn write_feeder(model: &FeederModel, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&FeederFile::from_model(model))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// One row of the scenario CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario_id: String,
    pub bus_id: u64,
    pub p_g: f64,
    pub p_l: f64,
    pub q_l: f64,
}

/// A scenario together with its identifier from the input file.
#[derive(Debug, Clone)]
pub struct NamedScenario {
    pub id: String,
    pub scenario: Scenario,
}

/// Builds scenarios from rows, keeping first-appearance order of ids.
/// Buses absent from a scenario have zero injections.
pub fn scenarios_from_rows(model: &FeederModel, rows: &[ScenarioRow]) -> Result<Vec<NamedScenario>> {
    let n = model.bus_count();
    let mut order: Vec<String> = Vec::new();
    let mut data: HashMap<String, [DVector<f64>; 3]> = HashMap::new();
    let mut seen = std::collections::HashSet::new();
    for row in rows {
        let k = model
            .index_of(row.bus_id)
            .ok_or_else(|| Error::UnknownBus(row.bus_id.to_string()))?;
        if !seen.insert((row.scenario_id.clone(), row.bus_id)) {
            return Err(Error::Parse(format!(
                "scenario {} lists bus {} twice",
                row.scenario_id, row.bus_id
            )));
        }
        for v in [row.p_g, row.p_l, row.q_l] {
            if !v.is_finite() {
                return Err(Error::Parse(format!(
                    "non-finite value in scenario {} bus {}",
                    row.scenario_id, row.bus_id
                )));
            }
        }
        let entry = data.entry(row.scenario_id.clone()).or_insert_with(|| {
            order.push(row.scenario_id.clone());
            [DVector::zeros(n), DVector::zeros(n), DVector::zeros(n)]
        });
        entry[0][k] = row.p_g;
        entry[1][k] = row.p_l;
        entry[2][k] = row.q_l;
    }
    order
        .into_iter()
        .map(|id| {
            let [p_g, p_l, q_l] = &data[&id];
            Ok(NamedScenario {
                scenario: grid_conditions(model, p_g, p_l, q_l)?,
                id,
            })
        })
        .collect()
}

pub fn parse_scenarios<R: Read>(model: &FeederModel, reader: R) -> Result<Vec<NamedScenario>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<ScenarioRow>, _>>()?;
    let out = scenarios_from_rows(model, &rows)?;
    if out.is_empty() {
        return Err(Error::NoScenarios);
    }
    Ok(out)
}

pub fn read_scenarios(model: &FeederModel, path: impl AsRef<Path>) -> Result<Vec<NamedScenario>> {
    parse_scenarios(model, std::fs::File::open(path)?)
}

pub fn write_scenarios<W: Write>(model: &FeederModel, scenarios: &[NamedScenario], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for s in scenarios {
        for (k, id) in model.ids().iter().enumerate() {
            wtr.serialize(ScenarioRow {
                scenario_id: s.id.clone(),
                bus_id: *id,
                p_g: s.scenario.p_g()[k],
                p_l: s.scenario.p_l()[k],
                q_l: s.scenario.q_l()[k],
            })?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// One row of a high-resolution time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeRow {
    pub time: String,
    pub bus_id: u64,
    pub p_g: f64,
    pub p_l: f64,
    pub q_l: f64,
}

#[derive(Debug, Clone)]
pub struct Windowed {
    pub rows: Vec<ScenarioRow>,
    /// Number of time steps in the trailing window when it is shorter than
    /// `window`.
    pub partial: Option<usize>,
}

/// Averages consecutive blocks of `window` time steps into scenarios
/// `0, 1, …`. A shorter trailing block is averaged over its own length.
pub fn aggregate_windows(rows: &[TimeRow], window: usize) -> Result<Windowed> {
    if window == 0 {
        return Err(Error::InvalidConfig("window must be positive".into()));
    }
    let mut times: Vec<&str> = Vec::new();
    let mut time_index: HashMap<&str, usize> = HashMap::new();
    let mut buses: Vec<u64> = Vec::new();
    for r in rows {
        if !time_index.contains_key(r.time.as_str()) {
            time_index.insert(r.time.as_str(), times.len());
            times.push(r.time.as_str());
        }
        if !buses.contains(&r.bus_id) {
            buses.push(r.bus_id);
        }
    }
    let n_windows = times.len().div_ceil(window);
    let mut sums: HashMap<(usize, u64), [f64; 3]> = HashMap::new();
    for r in rows {
        let w = time_index[r.time.as_str()] / window;
        let e = sums.entry((w, r.bus_id)).or_insert([0.0; 3]);
        e[0] += r.p_g;
        e[1] += r.p_l;
        e[2] += r.q_l;
    }
    let mut out = Vec::with_capacity(n_windows * buses.len());
    for w in 0..n_windows {
        let len = window.min(times.len() - w * window) as f64;
        for &b in &buses {
            let s = sums.get(&(w, b)).copied().unwrap_or([0.0; 3]);
            out.push(ScenarioRow {
                scenario_id: w.to_string(),
                bus_id: b,
                p_g: s[0] / len,
                p_l: s[1] / len,
                q_l: s[2] / len,
            });
        }
    }
    let rem = times.len() % window;
    Ok(Windowed {
        rows: out,
        partial: (rem != 0).then_some(rem),
    })
}

pub fn parse_time_rows<R: Read>(reader: R) -> Result<Vec<TimeRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    Ok(rdr.deserialize().collect::<std::result::Result<Vec<TimeRow>, _>>()?)
}

fn inverter_slot(model: &FeederModel, bus: u64) -> Result<usize> {
    model
        .inverter_ids()
        .iter()
        .position(|&id| id == bus)
        .ok_or_else(|| Error::UnknownBus(bus.to_string()))
}

fn order_records<T>(model: &FeederModel, records: Vec<T>, bus: impl Fn(&T) -> u64) -> Result<Vec<T>> {
    let m = model.inverter_count();
    let mut slots: Vec<Option<T>> = (0..m).map(|_| None).collect();
    for r in records {
        let b = bus(&r);
        let k = inverter_slot(model, b)?;
        if slots[k].is_some() {
            return Err(Error::DuplicateBus(b.to_string()));
        }
        slots[k] = Some(r);
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(k, s)| {
            s.ok_or_else(|| {
                Error::InvalidRule(format!("no rule for inverter bus {}", model.inverter_ids()[k]))
            })
        })
        .collect()
}

/// Parses symmetric rules and orders them like the model's inverters.
pub fn parse_rules(model: &FeederModel, json: &str) -> Result<RuleSet<RuleParams>> {
    let records: Vec<RuleRecord> = serde_json::from_str(json)?;
    let ordered = order_records(model, records, |r| r.bus)?;
    let rules = RuleSet::new(ordered.iter().map(|r| r.to_rule()).collect())?;
    rules.validate()?;
    Ok(rules)
}

pub fn parse_nonsym_rules(model: &FeederModel, json: &str) -> Result<RuleSet<NonSymRuleParams>> {
    let records: Vec<NonSymRuleRecord> = serde_json::from_str(json)?;
    let ordered = order_records(model, records, |r| r.bus)?;
    let rules = RuleSet::new(ordered.iter().map(|r| r.to_rule()).collect())?;
    rules.validate()?;
    Ok(rules)
}

pub fn rules_to_json(model: &FeederModel, rules: &RuleSet<RuleParams>) -> Result<String> {
    let records: Vec<RuleRecord> = model
        .inverter_ids()
        .iter()
        .zip(rules.rules())
        .map(|(b, r)| RuleRecord::from_rule(*b, r))
        .collect();
    Ok(serde_json::to_string_pretty(&records)? + "\n")
}

pub fn nonsym_rules_to_json(model: &FeederModel, rules: &RuleSet<NonSymRuleParams>) -> Result<String> {
    let records: Vec<NonSymRuleRecord> = model
        .inverter_ids()
        .iter()
        .zip(rules.rules())
        .map(|(b, r)| NonSymRuleRecord::from_rule(*b, r))
        .collect();
    Ok(serde_json::to_string_pretty(&records)? + "\n")
}
