//! Derivative and duality checks on seeded instances.

use alloc::vec::Vec;

use crate::boussinesq::{solve_state, InitialData, Model, SourceData, TimeSeries};
use crate::control::Control;
use crate::fit::{self, LinearFit};
use crate::objective::Problem;
use crate::sensitivity::{duality_sides, LevelLoads, StepSources};
use crate::synth::{self, FourierSpec};
use crate::Result;

pub const DEFAULT_TAYLOR_STEPS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorReport {
    pub steps: Vec<f64>,
    pub value: f64,
    pub directional: f64,
    pub second_variation: f64,
    /// `|J(rho + t d) - J(rho) - t J'(rho) d|`.
    pub first: Vec<f64>,
    /// `|J(rho + t d) - J(rho) - t J'(rho) d - t^2/2 J''(rho) d^2|`.
    pub second: Vec<f64>,
    pub first_fit: Option<LinearFit>,
    pub second_fit: Option<LinearFit>,
}

/// Taylor remainders of `J` (unperturbed, no box) along `delta`.
pub fn taylor_remainders(problem: &Problem, rho: &Control, delta: &Control, steps: &[f64]) -> Result<TaylorReport> {
    let (ev, g) = problem.eval_with_gradient(rho, None)?;
    let d1 = problem.directional(&g, delta);
    let d2 = problem.second_variation(rho, delta, None)?;
    let mut first = Vec::with_capacity(steps.len());
    let mut second = Vec::with_capacity(steps.len());
    for &t in steps {
        let j = problem.eval(&Control::lincomb(1.0, rho, t, delta), None)?.value;
        let r1 = j - ev.value - t * d1;
        first.push(libm::fabs(r1));
        second.push(libm::fabs(r1 - 0.5 * t * t * d2));
    }
    Ok(TaylorReport {
        first_fit: fit::loglog(steps, &first),
        second_fit: fit::loglog(steps, &second),
        steps: steps.to_vec(),
        value: ev.value,
        directional: d1,
        second_variation: d2,
        first,
        second,
    })
}

/// Seeded control-space direction with entries uniform in `[-1, 1]`.
pub fn random_direction(problem: &Problem, seed: u64) -> Control {
    use rand::Rng;
    let mut rng = synth::rng(seed);
    let mut c = problem.space.zeros();
    for x in c.q.iter_mut().chain(c.theta.iter_mut()) {
        *x = rng.gen_range(-1.0..=1.0);
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityInstance {
    pub seed: u64,
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs - rhs| / max(|lhs|, |rhs|)`.
    pub residual: f64,
}

/// Builds a seeded nonlinear base state and pairs a random tangent with a
/// random adjoint.
pub fn duality_instance(model: &Model, seed: u64) -> Result<DualityInstance> {
    let grid = model.grid();
    let nt = model.nt();
    let spec = FourierSpec::default();
    let mut rng = synth::rng(seed);
    let init = InitialData {
        u0: synth::fourier_solenoidal(grid, spec, &mut rng),
        theta0: synth::fourier_scalar(grid, spec, &mut rng),
    };
    let src = SourceData {
        f: TimeSeries::Constant(synth::fourier_vector(grid, spec, &mut rng)),
        h: TimeSeries::Constant(synth::fourier_scalar(grid, spec, &mut rng)),
    };
    let base = solve_state(model, &src, None, &init)?;
    let delta = StepSources {
        f: (0..nt).map(|_| synth::random_vector(grid, &mut rng)).collect(),
        g: (0..nt).map(|_| synth::random_scalar(grid, &mut rng)).collect(),
    };
    let loads = LevelLoads {
        f: (0..=nt).map(|_| synth::random_vector(grid, &mut rng)).collect(),
        g: (0..=nt).map(|_| synth::random_scalar(grid, &mut rng)).collect(),
    };
    let w_t = synth::fourier_solenoidal(grid, spec, &mut rng);
    let psi_t = synth::random_scalar(grid, &mut rng);
    let (lhs, rhs) = duality_sides(model, &base, &delta, &loads, &w_t, &psi_t)?;
    Ok(DualityInstance {
        seed,
        lhs,
        rhs,
        residual: libm::fabs(lhs - rhs) / libm::fabs(lhs).max(libm::fabs(rhs)).max(1e-300),
    })
}
