#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use voltvar::feeder::{scenario_from_v_tilde, FeederModel, Scenario};
use voltvar::rules::{RuleParams, RuleSet, DELTA_MAX, MIN_RAMP_WIDTH, SIGMA_MAX};
use voltvar::synthetic::{random_feeder, FeederSpec};

/// Slopes strictly inside the polytope `Xα ≤ (1−ε)1, α ≤ (1−ε)/(X1)`,
/// scaled so the tightest constraint sits at `fill·(1−ε)`.
pub fn polytope_slopes(x: &DMatrix<f64>, eps: f64, fill: f64, rng: &mut impl Rng) -> Vec<f64> {
    let m = x.nrows();
    let bound = 1.0 - eps;
    let mut alpha: Vec<f64> = (0..m)
        .map(|n| rng.gen_range(0.0..1.0) * bound / x.row(n).sum())
        .collect();
    let a = DVector::from_column_slice(&alpha);
    let coupling = (x * &a).max() / bound;
    let rows = (0..m)
        .map(|n| alpha[n] * x.row(n).sum() / bound)
        .fold(0.0, f64::max);
    let worst = coupling.max(rows);
    if worst > 0.0 {
        alpha.iter_mut().for_each(|v| *v *= fill / worst);
    }
    // Rounding can push a boundary sample one ulp outside.
    while !voltvar::stability::polytope_check(x, &alpha, eps).unwrap().polytope_ok {
        alpha.iter_mut().for_each(|v| *v *= 1.0 - f64::EPSILON);
    }
    alpha
}

/// Random valid rule with slope at most `alpha`.
pub fn random_rule(alpha: f64, q_hat: f64, rng: &mut impl Rng) -> RuleParams {
    let c = (1.0 / alpha).max(MIN_RAMP_WIDTH / q_hat);
    let delta = rng.gen_range(0.0..DELTA_MAX);
    let top = SIGMA_MAX.min(delta + q_hat * c);
    let sigma = if top > delta + MIN_RAMP_WIDTH {
        rng.gen_range(delta + MIN_RAMP_WIDTH..top)
    } else {
        delta + MIN_RAMP_WIDTH
    };
    RuleParams {
        v_bar: rng.gen_range(0.97..1.03),
        delta,
        sigma,
        c,
        q_hat,
    }
}

/// Random feeder whose inverters have room for any ramp height.
pub fn random_model(max_buses: usize, max_inverters: usize, rng: &mut impl Rng) -> FeederModel {
    let buses = rng.gen_range(1..=max_buses);
    let spec = FeederSpec {
        buses,
        inverter_fraction: rng.gen_range(0.2..1.0),
        ..Default::default()
    };
    let base = random_feeder(&spec, rng).expect("synthetic feeder is valid");
    let mut ids = base.inverter_ids();
    ids.truncate(max_inverters);
    let caps = vec![10.0; ids.len()];
    base.with_inverters(&ids, &caps, None).expect("inverters exist")
}

pub fn random_stable_rules(model: &FeederModel, eps: f64, fill: f64, rng: &mut impl Rng) -> RuleSet<RuleParams> {
    let alpha = polytope_slopes(model.x_gg(), eps, fill, rng);
    let rules = alpha
        .iter()
        .zip(model.q_hat())
        .map(|(a, q)| random_rule(*a, *q, rng))
        .collect();
    let set = RuleSet::new(rules).expect("rules are valid");
    set.validate().expect("rules are valid");
    set
}

pub fn random_scenario(model: &FeederModel, spread: f64, rng: &mut impl Rng) -> Scenario {
    let n = model.bus_count();
    let v = DVector::from_fn(n, |_, _| 1.0 + rng.gen_range(-spread..spread));
    scenario_from_v_tilde(model, v).expect("length matches")
}

/// Exact projection of `p` onto the polygon
/// `{0 ≤ δ ≤ 0.03, δ + 0.02 ≤ σ ≤ 0.18, σ − δ ≤ qc}`; `None` when empty.
pub fn polygon_project(p: (f64, f64), qc: f64) -> Option<(f64, f64)> {
    let cons: [((f64, f64), f64); 5] = [
        ((-1.0, 0.0), 0.0),
        ((1.0, 0.0), DELTA_MAX),
        ((1.0, -1.0), -MIN_RAMP_WIDTH),
        ((0.0, 1.0), SIGMA_MAX),
        ((-1.0, 1.0), qc),
    ];
    let feasible = |y: (f64, f64)| cons.iter().all(|(a, b)| a.0 * y.0 + a.1 * y.1 <= b + 1e-13);
    let mut cands = vec![p];
    for (a, b) in &cons {
        let t = (a.0 * p.0 + a.1 * p.1 - b) / (a.0 * a.0 + a.1 * a.1);
        cands.push((p.0 - t * a.0, p.1 - t * a.1));
    }
    for i in 0..cons.len() {
        for j in i + 1..cons.len() {
            let ((a, b), e) = cons[i];
            let ((c, d), f) = cons[j];
            let det = a * d - b * c;
            if det.abs() > 1e-14 {
                cands.push(((e * d - b * f) / det, (a * f - e * c) / det));
            }
        }
    }
    cands
        .into_iter()
        .filter(|y| feasible(*y))
        .min_by(|u, v| {
            let du = (u.0 - p.0).powi(2) + (u.1 - p.1).powi(2);
            let dv = (v.0 - p.0).powi(2) + (v.1 - p.1).powi(2);
            du.total_cmp(&dv)
        })
}

/// Brute-force projection for two inverters with symmetric rules.
///
/// `v̄` separates and is clamped. For fixed `c` the `(δ, σ)` pairs are
/// projected exactly onto their polygons, which leaves a separable convex
/// function of `c`. Its minimizer is either the box-constrained minimizer or
/// lies on one of the two coupling curves (or their intersection), so each
/// piece is searched by dense sampling and golden-section refinement.
pub struct TwoInverterOracle {
    pub x: [[f64; 2]; 2],
    pub q_hat: [f64; 2],
    pub eps: f64,
}

/// Minimizes `f` on `[lo, hi]`; infeasible points report `+∞`.
fn min_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let samples = 4001;
    let h = (hi - lo) / (samples - 1) as f64;
    let mut best = (lo, f(lo));
    for i in 1..samples {
        let t = lo + h * i as f64;
        let v = f(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    let (mut a, mut b) = ((best.0 - h).max(lo), (best.0 + h).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let u = b - g * (b - a);
        let w = a + g * (b - a);
        if f(u) <= f(w) {
            b = w;
        } else {
            a = u;
        }
    }
    let mid = 0.5 * (a + b);
    [(mid, f(mid)), (a, f(a)), (b, f(b)), best]
        .into_iter()
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .unwrap()
}

impl TwoInverterOracle {
    fn bound(&self) -> f64 {
        1.0 - self.eps
    }

    fn lower(&self, n: usize) -> f64 {
        ((self.x[n][0] + self.x[n][1]) / self.bound()).max(MIN_RAMP_WIDTH / self.q_hat[n])
    }

    fn c_feasible(&self, c: [f64; 2]) -> bool {
        let tol = 1e-12;
        (0..2).all(|n| {
            c[n] >= self.lower(n) * (1.0 - tol)
                && self.x[n][0] / c[0] + self.x[n][1] / c[1] <= self.bound() * (1.0 + tol)
        })
    }

    /// Squared distance contributed by inverter `n` for a given `cₙ`.
    fn phi(&self, x: &[f64], n: usize, c: f64) -> f64 {
        let p = (x[2 + n], x[4 + n]);
        match polygon_project(p, self.q_hat[n] * c) {
            Some(y) => (y.0 - p.0).powi(2) + (y.1 - p.1).powi(2) + (c - x[6 + n]).powi(2),
            None => f64::INFINITY,
        }
    }

    fn total(&self, x: &[f64], c: [f64; 2]) -> f64 {
        if !self.c_feasible(c) {
            return f64::INFINITY;
        }
        self.phi(x, 0, c[0]) + self.phi(x, 1, c[1])
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let beta = self.bound();
        let lo = [self.lower(0), self.lower(1)];
        // Upper search limit from any feasible point's objective value.
        let mut t = 1.0f64;
        while !self.c_feasible([lo[0] * t, lo[1] * t]) {
            t *= 1.5;
        }
        let radius = self.total(x, [lo[0] * t, lo[1] * t]).sqrt();
        let hi = [
            (x[6] + radius).max(lo[0] * t),
            (x[7] + radius).max(lo[1] * t),
        ];

        let mut cands: Vec<[f64; 2]> = Vec::new();
        let free = [
            min_1d(|c| self.phi(x, 0, c), lo[0], hi[0]).0,
            min_1d(|c| self.phi(x, 1, c), lo[1], hi[1]).0,
        ];
        cands.push(free);
        // Curves `X_n0/c0 + X_n1/c1 = β`, parametrized by c0.
        for n in 0..2 {
            let (p, q) = (self.x[n][0], self.x[n][1]);
            if q <= 0.0 {
                continue;
            }
            let c1 = |c0: f64| {
                let r = beta - p / c0;
                if r > 0.0 {
                    q / r
                } else {
                    f64::INFINITY
                }
            };
            let (c0, _) = min_1d(|c0| self.total(x, [c0, c1(c0)]), lo[0], hi[0]);
            cands.push([c0, c1(c0)]);
        }
        let (a, b, d) = (self.x[0][0], self.x[0][1], self.x[1][1]);
        let det = a * d - b * b;
        if det > 0.0 {
            let u = [beta * (d - b) / det, beta * (a - b) / det];
            if u[0] > 0.0 && u[1] > 0.0 {
                cands.push([1.0 / u[0], 1.0 / u[1]]);
            }
        }
        let c = cands
            .into_iter()
            .min_by(|p, q| self.total(x, *p).total_cmp(&self.total(x, *q)))
            .unwrap();

        let mut z = vec![0.0; 8];
        for n in 0..2 {
            let y = polygon_project((x[2 + n], x[4 + n]), self.q_hat[n] * c[n]).expect("feasible");
            z[n] = x[n].clamp(0.95, 1.05);
            z[2 + n] = y.0;
            z[4 + n] = y.1;
            z[6 + n] = c[n];
        }
        z
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}
