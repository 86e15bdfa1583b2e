//! Fixtures shared by the benchmarks.

use chns_core::driver::{bubble_profile, init_two_step};
use chns_core::model::{BlockSystem, NewtonConfig, PhysParams, State, StepOperators};
use chns_core::{FeSpace, MassKind, VelocityBc};

/// Rising-bubble space on `[0,1] x [0,2]` with `nx x 2nx` cells.
pub fn space(nx: usize) -> FeSpace {
    FeSpace::rectangle(1.0, 2.0, nx, 2 * nx, &VelocityBc::rising_bubble()).expect("valid mesh")
}

/// First Newton system of the first benchmark-1 time step.
pub fn first_system(nx: usize) -> (FeSpace, BlockSystem) {
    let sp = space(nx);
    let params = PhysParams::benchmark1();
    let phi = bubble_profile(&sp, params.eps);
    let (hist, _) = init_two_step(&sp, &phi, &params, &NewtonConfig::default()).expect("initialization");
    let ops = StepOperators::assemble(&sp, &hist, &params).expect("assembly");
    let x = State {
        v: hist.v_km1.clone(),
        p: vec![0.0; sp.n1()],
        phi: hist.phi_km1.clone(),
        mu: hist.mu_km1.clone(),
    };
    let sys = ops.newton_system(&sp, &x, MassKind::Consistent);
    (sp, sys)
}
