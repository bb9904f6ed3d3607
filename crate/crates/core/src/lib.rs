//! Design of stable Volt/VAR control curves for radial distribution feeders.
//!
//! A feeder is modeled by its linearized voltage sensitivities
//! ([`feeder`]). Each inverter follows a piecewise-affine Volt/VAR curve
//! ([`rules`]); the closed loop settles to an equilibrium ([`equilibrium`])
//! when the slopes satisfy a stability certificate ([`stability`]). The
//! [`designer`] tunes the curves by projected gradient descent with every
//! iterate kept inside a convex set of certified-stable curves
//! ([`projection`]). [`benchmarks`] compares the result against reference
//! dispatch schemes and [`acpf`] replays it on the nonlinear AC model.

pub mod acpf;
pub mod benchmarks;
pub mod designer;
pub mod equilibrium;
pub mod error;
pub mod feeder;
pub mod io;
pub mod linalg;
pub mod projection;
pub mod qp;
pub mod rules;
pub mod stability;
pub mod synthetic;

pub use acpf::{simulate_dynamics_ac, solve_ac, AcOptions, AcSolution};
pub use benchmarks::{vdm, BenchmarkResult, Scheme};
pub use designer::{cost, design, gradient, DesignConfig, DesignReport};
pub use equilibrium::{
    simulate_dynamics, solve_equilibrium, solve_equilibrium_nonsym, solve_equilibrium_qp,
    DynamicsOptions, Equilibrium,
};
pub use error::{Error, Result};
pub use feeder::{build_sensitivities, grid_conditions, FeederModel, Line, Scenario, Topology};
pub use projection::{project, FeasibleSet, Projection, Projector};
pub use qp::QpOptions;
pub use rules::{NonSymRuleParams, RuleParams, RuleSet, VoltVarRule};
pub use stability::{polytope_check, spectral_check, StabilityReport};
