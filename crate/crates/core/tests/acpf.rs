use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use voltvar::acpf::{scenario_voltages, solve_ac, AcOptions};
use voltvar::feeder::{build_sensitivities, Topology};
use voltvar::synthetic::{random_feeder, random_scenarios, FeederSpec, ScenarioSpec};

/// Newton-Raphson on the receiving-end voltage of a single line, in
/// rectangular coordinates with a finite-difference Jacobian.
fn newton_two_bus(v0: f64, z: Complex64, s: Complex64) -> Complex64 {
    let f = |v: Complex64| v * ((v - v0) / z).conj() - s;
    let mut v = Complex64::new(v0, 0.0);
    for _ in 0..50 {
        let r = f(v);
        if r.norm() < 1e-15 {
            break;
        }
        let h = 1e-7;
        let de = (f(v + h) - f(v - h)) / (2.0 * h);
        let df = (f(v + Complex64::i() * h) - f(v - Complex64::i() * h)) / (2.0 * h);
        let det = de.re * df.im - df.re * de.im;
        let dx = (-r.re * df.im + df.re * r.im) / det;
        let dy = (-de.re * r.im + r.re * de.im) / det;
        v += Complex64::new(dx, dy);
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn two_bus_matches_newton(r in 0.001..0.1f64, x in 0.001..0.1f64, p in -1.0..1.0f64, q in -1.0..1.0f64, v0 in 0.95..1.05f64) {
        let model = build_sensitivities(&Topology::chain(1, r, x, v0)).unwrap();
        let sol = solve_ac(&model, &[p], &[q], &AcOptions { tol: 1e-14, max_sweeps: 10_000 }).unwrap();
        let v = newton_two_bus(v0, Complex64::new(r, x), Complex64::new(p, q));
        prop_assert!((sol.magnitude[0] - v.norm()).abs() <= 1e-10);
        prop_assert!((sol.angle[0] - v.arg()).abs() <= 1e-10);
    }

    #[test]
    fn power_balances_at_every_bus(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = FeederSpec { buses: rng.gen_range(1..=15), ..Default::default() };
        let model = random_feeder(&spec, &mut rng).unwrap();
        let n = model.bus_count();
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.05..0.05)).collect();
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.05..0.05)).collect();
        let sol = solve_ac(&model, &p, &q, &AcOptions::default()).unwrap();
        let v = sol.voltages();
        let parents = model.parents();
        for k in 0..n {
            let z = Complex64::new(model.line_r()[k], model.line_x()[k]);
            let up = parents[k].map_or(Complex64::new(model.v0(), 0.0), |j| v[j]);
            let i = (up - v[k]) / z;
            let loss = z * i.norm_sqr();
            let mut out = loss - Complex64::new(p[k], q[k]);
            for c in (0..n).filter(|&c| parents[c] == Some(k)) {
                out += Complex64::new(sol.flow_p[c], sol.flow_q[c]);
            }
            let inflow = Complex64::new(sol.flow_p[k], sol.flow_q[k]);
            prop_assert!((inflow - out).norm() <= 1e-8);
            prop_assert!((sol.loss_p[k] - loss.re).abs() <= 1e-8);
        }
    }
}

#[test]
fn linear_model_is_tangent_at_no_load() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = random_feeder(&FeederSpec::default(), &mut rng).unwrap();
    let scen = random_scenarios(&model, &ScenarioSpec { count: 1, ..Default::default() }, &mut rng).remove(0);
    let zero = DVector::zeros(model.inverter_count());
    let err = |l: f64| {
        let s = scen.scaled(&model, l);
        (scenario_voltages(&model, &s, &zero, &AcOptions::default()).unwrap() - s.v_tilde()).amax()
    };
    let mut prev = err(0.4) / 0.4;
    for l in [0.2, 0.1, 0.05, 0.025] {
        let e = err(l) / l;
        assert!(e < 0.6 * prev, "error/λ should vanish: {e} vs {prev}");
        prev = e;
    }
}
