//! Radial feeder topology and the linearized voltage model
//! `v = R p + X q + v0·1`.
//!
//! Bus 0 is the substation and never appears in vectors or matrices. The
//! remaining buses are indexed `0..N` internally in input order; external
//! ids are kept for reporting.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// External id reserved for the substation.
pub const SUBSTATION_ID: u64 = 0;

/// One line of a radial feeder, identified by its downstream bus.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub id: u64,
    pub parent: u64,
    pub r: f64,
    pub x: f64,
}

/// Raw radial topology as read from a feeder file.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub v0: f64,
    pub lines: Vec<Line>,
}

impl Topology {
    pub fn new(v0: f64, lines: Vec<Line>) -> Self {
        Topology { v0, lines }
    }

    /// Chain `0 → 1 → … → n` with identical lines.
    pub fn chain(n: usize, r: f64, x: f64, v0: f64) -> Self {
        let lines = (1..=n as u64)
            .map(|id| Line {
                id,
                parent: id - 1,
                r,
                x,
            })
            .collect();
        Topology { v0, lines }
    }
}

/// Validated feeder with its sensitivity matrices and inverter set.
#[derive(Debug, Clone)]
pub struct FeederModel {
    ids: Vec<u64>,
    parent: Vec<Option<usize>>,
    line_r: Vec<f64>,
    line_x: Vec<f64>,
    v0: f64,
    r: DMatrix<f64>,
    x: DMatrix<f64>,
    inverters: Vec<usize>,
    q_hat: Vec<f64>,
    p_bar: Vec<f64>,
    x_gg: DMatrix<f64>,
    x_cols: DMatrix<f64>,
}

/// Validates `topology` and builds `R` and `X` as common-path impedance sums.
///
/// The resulting model has no inverters; attach them with
/// [`FeederModel::with_inverters`].
pub fn build_sensitivities(topology: &Topology) -> Result<FeederModel> {
    let n = topology.lines.len();
    let mut index = HashMap::with_capacity(n);
    for (k, line) in topology.lines.iter().enumerate() {
        if line.id == SUBSTATION_ID || index.insert(line.id, k).is_some() {
            return Err(Error::DuplicateBus(line.id.to_string()));
        }
        if !(line.x > 0.0) || !line.x.is_finite() {
            return Err(Error::NonPositiveReactance(line.id.to_string(), line.x));
        }
        if !(line.r >= 0.0) || !line.r.is_finite() {
            return Err(Error::NegativeResistance(line.id.to_string(), line.r));
        }
    }

    let mut parent = Vec::with_capacity(n);
    for line in &topology.lines {
        if line.parent == SUBSTATION_ID {
            parent.push(None);
        } else {
            match index.get(&line.parent) {
                Some(&p) => parent.push(Some(p)),
                None => {
                    return Err(Error::DisconnectedBus {
                        bus: line.id.to_string(),
                        parent: line.parent.to_string(),
                    })
                }
            }
        }
    }

    let order = topological_order(&parent).map_err(|k| {
        Error::CycleDetected(topology.lines[k].id.to_string())
    })?;

    let line_r: Vec<f64> = topology.lines.iter().map(|l| l.r).collect();
    let line_x: Vec<f64> = topology.lines.iter().map(|l| l.x).collect();
    let r = path_sum_matrix(&parent, &order, &line_r);
    let x = path_sum_matrix(&parent, &order, &line_x);
    if x.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }

    Ok(FeederModel {
        ids: topology.lines.iter().map(|l| l.id).collect(),
        parent,
        line_r,
        line_x,
        v0: topology.v0,
        r,
        x,
        inverters: Vec::new(),
        q_hat: Vec::new(),
        p_bar: Vec::new(),
        x_gg: DMatrix::zeros(0, 0),
        x_cols: DMatrix::zeros(n, 0),
    })
}

/// Orders buses so that every parent precedes its children. Returns the
/// offending bus index if some bus never reaches the substation.
fn topological_order(parent: &[Option<usize>]) -> std::result::Result<Vec<usize>, usize> {
    let n = parent.len();
    let mut children = vec![Vec::new(); n];
    let mut roots = Vec::new();
    for (k, p) in parent.iter().enumerate() {
        match p {
            Some(p) => children[*p].push(k),
            None => roots.push(k),
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut stack = roots;
    while let Some(k) = stack.pop() {
        order.push(k);
        stack.extend(children[k].iter().rev().copied());
    }
    if order.len() < n {
        let mut seen = vec![false; n];
        for &k in &order {
            seen[k] = true;
        }
        return Err(seen.iter().position(|s| !s).unwrap_or(0));
    }
    Ok(order)
}

/// `M[n][m]` = sum of `line[ℓ]` over lines shared by the paths of `n` and `m`.
fn path_sum_matrix(parent: &[Option<usize>], order: &[usize], line: &[f64]) -> DMatrix<f64> {
    let n = parent.len();
    let mut m = DMatrix::zeros(n, n);
    let mut done: Vec<usize> = Vec::with_capacity(n);
    for &k in order {
        match parent[k] {
            Some(p) => {
                m[(k, k)] = m[(p, p)] + line[k];
                for &j in &done {
                    let shared = m[(p, j)];
                    m[(k, j)] = shared;
                    m[(j, k)] = shared;
                }
            }
            None => m[(k, k)] = line[k],
        }
        done.push(k);
    }
    m
}

impl FeederModel {
    /// Attaches the set `G` of Volt/VAR-capable inverters.
    ///
    /// `p_bar` defaults to `q_hat / 0.44` when omitted.
    pub fn with_inverters(
        mut self,
        ids: &[u64],
        q_hat: &[f64],
        p_bar: Option<&[f64]>,
    ) -> Result<Self> {
        if q_hat.len() != ids.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                got: q_hat.len(),
            });
        }
        if let Some(p) = p_bar {
            if p.len() != ids.len() {
                return Err(Error::DimensionMismatch {
                    expected: ids.len(),
                    got: p.len(),
                });
            }
        }
        let mut inverters = Vec::with_capacity(ids.len());
        for (k, id) in ids.iter().enumerate() {
            let idx = self.index_of(*id).ok_or_else(|| Error::UnknownBus(id.to_string()))?;
            if inverters.contains(&idx) {
                return Err(Error::DuplicateBus(id.to_string()));
            }
            if !(q_hat[k] > 0.0) {
                return Err(Error::ZeroCapability(id.to_string()));
            }
            inverters.push(idx);
        }
        self.p_bar = match p_bar {
            Some(p) => p.to_vec(),
            None => q_hat.iter().map(|q| q / 0.44).collect(),
        };
        self.q_hat = q_hat.to_vec();
        self.x_gg = linalg::principal_submatrix(&self.x, &inverters);
        self.x_cols = linalg::column_subset(&self.x, &inverters);
        self.inverters = inverters;
        Ok(self)
    }

    /// Every bus hosts an inverter with capability `q_hat`.
    pub fn with_all_inverters(self, q_hat: f64) -> Result<Self> {
        let ids = self.ids.clone();
        let caps = vec![q_hat; ids.len()];
        self.with_inverters(&ids, &caps, None)
    }

    pub fn bus_count(&self) -> usize {
        self.ids.len()
    }

    pub fn inverter_count(&self) -> usize {
        self.inverters.len()
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// `X_GG`, rows and columns of `X` restricted to inverter buses.
    pub fn x_gg(&self) -> &DMatrix<f64> {
        &self.x_gg
    }

    /// `X_{·,G}`, the columns of `X` at inverter buses.
    pub fn x_cols(&self) -> &DMatrix<f64> {
        &self.x_cols
    }

    /// Internal indices of inverter buses.
    pub fn inverters(&self) -> &[usize] {
        &self.inverters
    }

    pub fn inverter_ids(&self) -> Vec<u64> {
        self.inverters.iter().map(|&k| self.ids[k]).collect()
    }

    pub fn q_hat(&self) -> &[f64] {
        &self.q_hat
    }

    pub fn p_bar(&self) -> &[f64] {
        &self.p_bar
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.ids.iter().position(|&b| b == id)
    }

    /// Parent of each bus; `None` is the substation.
    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn line_r(&self) -> &[f64] {
        &self.line_r
    }

    pub fn line_x(&self) -> &[f64] {
        &self.line_x
    }

    /// Number of lines between each bus and the substation.
    pub fn depths(&self) -> Vec<usize> {
        (0..self.bus_count())
            .map(|mut k| {
                let mut d = 1;
                while let Some(p) = self.parent[k] {
                    k = p;
                    d += 1;
                }
                d
            })
            .collect()
    }

    /// Back to a plain topology, e.g. for the AC solver.
    pub fn topology(&self) -> Topology {
        let lines = (0..self.bus_count())
            .map(|k| Line {
                id: self.ids[k],
                parent: self.parent[k].map_or(SUBSTATION_ID, |p| self.ids[p]),
                r: self.line_r[k],
                x: self.line_x[k],
            })
            .collect();
        Topology::new(self.v0, lines)
    }

    /// Embeds inverter injections into a full-length vector.
    pub fn embed_inverter_q(&self, q_g: &DVector<f64>) -> DVector<f64> {
        linalg::embed(q_g, &self.inverters, self.bus_count())
    }

    fn check_len(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.bus_count() {
            return Err(Error::DimensionMismatch {
                expected: self.bus_count(),
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// One loading scenario with its cached grid-conditions vector `ṽ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    p_g: DVector<f64>,
    p_l: DVector<f64>,
    q_l: DVector<f64>,
    v_tilde: DVector<f64>,
}

impl Scenario {
    pub fn p_g(&self) -> &DVector<f64> {
        &self.p_g
    }

    pub fn p_l(&self) -> &DVector<f64> {
        &self.p_l
    }

    pub fn q_l(&self) -> &DVector<f64> {
        &self.q_l
    }

    /// Voltages the feeder would show with zero inverter reactive power.
    pub fn v_tilde(&self) -> &DVector<f64> {
        &self.v_tilde
    }

    /// `ṽ` restricted to inverter buses.
    pub fn v_tilde_g(&self, model: &FeederModel) -> DVector<f64> {
        linalg::subvector(&self.v_tilde, model.inverters())
    }

    /// Net active injection `p_g − p_l`.
    pub fn p_net(&self) -> DVector<f64> {
        &self.p_g - &self.p_l
    }

    /// Scenario with all injections multiplied by `factor`.
    pub fn scaled(&self, model: &FeederModel, factor: f64) -> Scenario {
        grid_conditions(
            model,
            &(&self.p_g * factor),
            &(&self.p_l * factor),
            &(&self.q_l * factor),
        )
        .expect("dimensions already validated")
    }
}

/// `ṽ = R(p_g − p_l) − X q_l + v0·1`.
pub fn grid_conditions(
    model: &FeederModel,
    p_g: &DVector<f64>,
    p_l: &DVector<f64>,
    q_l: &DVector<f64>,
) -> Result<Scenario> {
    model.check_len(p_g)?;
    model.check_len(p_l)?;
    model.check_len(q_l)?;
    let v_tilde = model.r() * (p_g - p_l) - model.x() * q_l
        + DVector::from_element(model.bus_count(), model.v0());
    Ok(Scenario {
        p_g: p_g.clone(),
        p_l: p_l.clone(),
        q_l: q_l.clone(),
        v_tilde,
    })
}

/// Scenario given directly by its grid-conditions vector (no injections).
pub fn scenario_from_v_tilde(model: &FeederModel, v_tilde: DVector<f64>) -> Result<Scenario> {
    model.check_len(&v_tilde)?;
    let n = model.bus_count();
    Ok(Scenario {
        p_g: DVector::zeros(n),
        p_l: DVector::zeros(n),
        q_l: DVector::zeros(n),
        v_tilde,
    })
}

/// `v = X q + ṽ` for a full-length injection vector `q`.
pub fn voltages(model: &FeederModel, scenario: &Scenario, q: &DVector<f64>) -> Result<DVector<f64>> {
    model.check_len(q)?;
    Ok(model.x() * q + scenario.v_tilde())
}
