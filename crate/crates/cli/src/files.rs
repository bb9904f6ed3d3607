use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use voltvar::io::{self, NamedScenario};
use voltvar::rules::{NonSymRuleParams, RuleParams, RuleSet, VoltVarRule};
use voltvar::FeederModel;

use crate::error::CliError;

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_feeder(path: &Path) -> Result<FeederModel, CliError> {
    Ok(io::parse_feeder(&read_text(path)?)?)
}

pub fn read_scenarios(model: &FeederModel, path: &Path) -> Result<Vec<NamedScenario>, CliError> {
    let named = io::parse_scenarios(model, read_text(path)?.as_bytes())?;
    if named.is_empty() {
        return Err(voltvar::Error::NoScenarios.into());
    }
    Ok(named)
}

/// Pretty JSON with a trailing newline, to `path` or stdout.
pub fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => write_bytes(p, text.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| CliError::Write {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

/// Serializes `rows` as CSV with a header from the row type.
pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Write {
        path: path.to_path_buf(),
        source: e.into_error(),
    })?;
    write_bytes(path, &bytes)
}

/// Rule families with a JSON file format.
pub trait RuleFile: VoltVarRule + Sized {
    fn parse(model: &FeederModel, json: &str) -> voltvar::Result<RuleSet<Self>>;
    fn to_json(model: &FeederModel, rules: &RuleSet<Self>) -> voltvar::Result<String>;
}

impl RuleFile for RuleParams {
    fn parse(model: &FeederModel, json: &str) -> voltvar::Result<RuleSet<Self>> {
        io::parse_rules(model, json)
    }

    fn to_json(model: &FeederModel, rules: &RuleSet<Self>) -> voltvar::Result<String> {
        io::rules_to_json(model, rules)
    }
}

impl RuleFile for NonSymRuleParams {
    fn parse(model: &FeederModel, json: &str) -> voltvar::Result<RuleSet<Self>> {
        io::parse_nonsym_rules(model, json)
    }

    fn to_json(model: &FeederModel, rules: &RuleSet<Self>) -> voltvar::Result<String> {
        io::nonsym_rules_to_json(model, rules)
    }
}

pub fn read_rules<R: RuleFile>(model: &FeederModel, path: &Path) -> Result<RuleSet<R>, CliError> {
    Ok(R::parse(model, &read_text(path)?)?)
}
