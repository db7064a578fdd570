//! Stability experiments around a computed local solution `rho*`.
//!
//! Perturbed problems are solved warm-started at `rho*`; distances are
//! measured in `L^1 x L^1` for controls and `L^2(Q)` for states, and
//! exponents are fitted by least squares in log-log coordinates.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::boussinesq::{squared_distance, StateTrajectory};
use crate::control::{Control, ControlSpace};
use crate::fit::{self, LinearFit};
use crate::grid::{Field, Grid};
use crate::objective::{Perturbation, Problem, DEFAULT_NORM_EXPONENT};
use crate::optimizer::{kkt_residual, projected_gradient, OptOptions, OptResult, Termination};
use crate::sensitivity::AdjointTrajectory;
use crate::synth::{self, FourierSpec, SeededRng};
use crate::{Error, Result};

/// Order-preserving map over independent jobs. Implementations may run jobs
/// concurrently but must return results in input order.
pub trait Executor: Sync {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send;
}

/// Runs jobs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        items.into_iter().map(f).collect()
    }
}

/// Solves the perturbed problem from `rho_init`. A zero perturbation solves
/// the unperturbed problem.
pub fn solve_perturbed(problem: &Problem, zeta: &Perturbation, rho_init: &Control, opts: &OptOptions) -> Result<OptResult> {
    let z = if zeta.is_zero() { None } else { Some(zeta) };
    projected_gradient(problem, rho_init, opts, z)
}

/// `sup_t (||grad a|| + ...)`: largest gradient sup-norm over the steps `0..nt`.
fn adjoint_gradient_sup(grid: &Grid, adj: &AdjointTrajectory, nt: usize) -> f64 {
    (0..nt)
        .map(|n| grid.grad_sup_vector(&adj.w[n]) + grid.grad_sup_scalar(&adj.psi[n]))
        .fold(0.0, f64::max)
}

fn adjoint_gap(grid: &Grid, a: &AdjointTrajectory, b: &AdjointTrajectory, nt: usize) -> f64 {
    let mut gw: f64 = 0.0;
    let mut gp: f64 = 0.0;
    for n in 0..nt {
        gw = gw.max(grid.grad_sup_vector(&Field::lincomb(1.0, &a.w[n], -1.0, &b.w[n])));
        gp = gp.max(grid.grad_sup_scalar(&Field::lincomb(1.0, &a.psi[n], -1.0, &b.psi[n])));
    }
    gw + gp
}

/// `||u_a - u_b||_{L2(Q)} + ||theta_a - theta_b||_{L2(Q)}`.
pub fn state_distance(grid: &Grid, dt: f64, a: &StateTrajectory, b: &StateTrajectory) -> f64 {
    libm::sqrt(squared_distance(grid, dt, &a.u, &b.u)) + libm::sqrt(squared_distance(grid, dt, &a.theta, &b.theta))
}

fn state_distance_sq(grid: &Grid, dt: f64, a: &StateTrajectory, b: &StateTrajectory) -> f64 {
    squared_distance(grid, dt, &a.u, &b.u) + squared_distance(grid, dt, &a.theta, &b.theta)
}

/// `max_k ||u_a^k - u_b^k||_inf`.
fn velocity_sup_distance(a: &StateTrajectory, b: &StateTrajectory) -> f64 {
    a.u.iter()
        .zip(&b.u)
        .map(|(x, y)| Field::lincomb(1.0, x, -1.0, y).max_abs())
        .fold(0.0, f64::max)
}

// ------------------------------------------------------------------ Tikhonov

#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub eps: f64,
    pub distance: f64,
    pub value: f64,
    pub kkt: f64,
    pub iterations: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathReport {
    pub points: Vec<PathPoint>,
    /// Fit of `log distance` against `log eps` over the positive points.
    pub fit: Option<LinearFit>,
    /// `||hi - lo||_{L1}`: no admissible pair is further apart.
    pub diameter: f64,
}

/// Continuation in the Tikhonov weight `eps` (applied to both components),
/// from the largest value down. Each point is warm-started at the previous
/// solution; a zero entry is the unregularized problem and is re-solved from
/// the base run's starting point.
pub fn tikhonov_path(problem: &Problem, base: &OptResult, eps_grid: &[f64], opts: &OptOptions) -> Result<PathReport> {
    if eps_grid.is_empty() || eps_grid.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
        return Err(Error::Argument("eps grid must be finite and >= 0".into()));
    }
    if eps_grid.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Argument("eps grid must be strictly decreasing".into()));
    }
    let space = &problem.space;
    let mut points = Vec::with_capacity(eps_grid.len());
    let mut start = base.control.clone();
    for &eps in eps_grid {
        let init = if eps == 0.0 { &base.start } else { &start };
        let r = solve_perturbed(problem, &Perturbation::tikhonov(eps, eps), init, opts)?;
        points.push(PathPoint {
            eps,
            distance: space.distance_l1(&r.control, &base.control),
            value: r.value,
            kkt: r.kkt(),
            iterations: r.iterations,
            termination: r.termination,
        });
        start = r.control;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = points.iter().filter(|p| p.eps > 0.0).map(|p| (p.eps, p.distance)).unzip();
    Ok(PathReport {
        fit: fit::loglog(&x, &y),
        points,
        diameter: space.l1_diameter(),
    })
}

// ------------------------------------------------------------------ sweeps

/// Which components of the perturbation vary along a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationFamily {
    /// Control-space tilts `sigma`, `Lambda`.
    Tilt,
    /// Body-force shifts `f_hat`, `h_hat`.
    Source,
    /// Target shifts `u_d_hat`, `theta_d_hat`.
    Target,
    /// Initial-data shifts `u0_hat`, `theta0_hat`.
    Initial,
}

impl PerturbationFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            PerturbationFamily::Tilt => "tilt",
            PerturbationFamily::Source => "source",
            PerturbationFamily::Target => "target",
            PerturbationFamily::Initial => "initial",
        }
    }

    /// A seeded direction of unit norm `||zeta||_P = 1`.
    pub fn direction(&self, problem: &Problem, seed: u64, spec: FourierSpec, s: f64) -> Result<Perturbation> {
        let grid = problem.grid();
        let mut rng = synth::rng(seed);
        let mut z = Perturbation::default();
        match self {
            PerturbationFamily::Tilt => {
                z.control_tilt = Some(smooth_control(problem, spec, &mut rng));
            }
            PerturbationFamily::Source => {
                z.f_hat = crate::boussinesq::TimeSeries::Constant(synth::fourier_vector(grid, spec, &mut rng));
                z.h_hat = crate::boussinesq::TimeSeries::Constant(synth::fourier_scalar(grid, spec, &mut rng));
            }
            PerturbationFamily::Target => {
                z.u_d_hat = crate::boussinesq::TimeSeries::Constant(synth::fourier_solenoidal(grid, spec, &mut rng));
                z.theta_d_hat = crate::boussinesq::TimeSeries::Constant(synth::fourier_scalar(grid, spec, &mut rng));
            }
            PerturbationFamily::Initial => {
                z.u0_hat = Some(synth::fourier_solenoidal(grid, spec, &mut rng));
                z.theta0_hat = Some(synth::fourier_scalar(grid, spec, &mut rng));
            }
        }
        let n = z.norm(&problem.model, &problem.space, s)?;
        if !(n > 0.0) {
            return Err(Error::Numerical {
                what: "perturbation direction",
                step: 0,
                residual: n,
            });
        }
        Ok(z.scaled(1.0 / n))
    }
}

/// Smooth control-space field: Fourier fields restricted to the regions,
/// constant in time.
fn smooth_control(problem: &Problem, spec: FourierSpec, rng: &mut SeededRng) -> Control {
    let grid = problem.grid();
    let space = &problem.space;
    let f1 = synth::fourier_scalar(grid, spec, rng);
    let f2 = synth::fourier_scalar(grid, spec, rng);
    let f3 = synth::fourier_scalar(grid, spec, rng);
    let mut c = space.zeros();
    let nq = space.region_q().len();
    let nh = space.region_h().len();
    for n in 0..space.nt() {
        for (p, &cell) in space.region_q().cells().iter().enumerate() {
            c.q[(n * nq + p) * 2] = f1.values()[cell];
            c.q[(n * nq + p) * 2 + 1] = f2.values()[cell];
        }
        for (p, &cell) in space.region_h().cells().iter().enumerate() {
            c.theta[n * nh + p] = f3.values()[cell];
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub family: PerturbationFamily,
    /// Strictly positive and increasing.
    pub magnitudes: Vec<f64>,
    pub seed: u64,
    pub spec: FourierSpec,
    /// Start each perturbed solve at `rho*` (otherwise at the box midpoint;
    /// such records are marked non-local).
    pub warm_start: bool,
    /// Add a record at magnitude zero.
    pub include_zero: bool,
    /// Trust radius in `L^1 x L^1`; `None` selects `0.1 * M_U * |I x w|`.
    pub neighborhood: Option<f64>,
    pub norm_exponent: f64,
}

impl SweepPlan {
    pub fn new(family: PerturbationFamily, magnitudes: Vec<f64>, seed: u64) -> Self {
        SweepPlan {
            family,
            magnitudes,
            seed,
            spec: FourierSpec::default(),
            warm_start: true,
            include_zero: true,
            neighborhood: None,
            norm_exponent: DEFAULT_NORM_EXPONENT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.magnitudes.is_empty() || self.magnitudes.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(Error::config("sweep.magnitudes", "magnitudes must be positive and finite"));
        }
        if self.magnitudes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("sweep.magnitudes", "magnitudes must be strictly increasing"));
        }
        if !(self.norm_exponent >= 1.0) {
            return Err(Error::config("sweep.norm_exponent", "exponent must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRecord {
    /// `||zeta||_P`.
    pub magnitude: f64,
    /// `||rho_zeta - rho*||_{L1 x L1}`.
    pub control_distance: f64,
    /// `||u_zeta - u*||_{L2(Q)} + ||theta_zeta - theta*||_{L2(Q)}`.
    pub state_distance: f64,
    /// `max_k ||u_zeta^k - u*^k||_inf`.
    pub velocity_sup_distance: f64,
    /// `||grad(w - w*)||_inf + ||grad(psi - psi*)||_inf`.
    pub adjoint_gap: f64,
    pub kkt: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub outside_neighborhood: bool,
    pub local: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub records: Vec<StabilityRecord>,
    /// Magnitudes whose solve failed, with the error.
    pub failures: Vec<(f64, Error)>,
    pub control_fit: Option<LinearFit>,
    pub state_fit: Option<LinearFit>,
    /// Smallest `c` with `state_distance <= c * control_distance^(1/2)` over the records.
    pub state_control_constant: f64,
    /// Smallest `c` with `velocity_sup_distance <= c * control_distance^(1/s)`.
    pub sup_control_constant: f64,
    pub neighborhood: f64,
}

/// Runs one perturbed solve per magnitude. Jobs are independent and may run
/// concurrently; records come back sorted by magnitude.
pub fn stability_sweep<E: Executor>(
    problem: &Problem,
    base: &OptResult,
    plan: &SweepPlan,
    opts: &OptOptions,
    exec: &E,
) -> Result<SweepReport> {
    plan.validate()?;
    opts.validate()?;
    let direction = plan.family.direction(problem, plan.seed, plan.spec, plan.norm_exponent)?;
    let space = &problem.space;
    let neighborhood = plan
        .neighborhood
        .unwrap_or_else(|| 0.1 * space.bound_mu() * space.region_measure().total());
    let mut mags = Vec::with_capacity(plan.magnitudes.len() + 1);
    if plan.include_zero {
        mags.push(0.0);
    }
    mags.extend_from_slice(&plan.magnitudes);

    let grid = problem.grid();
    let (nt, dt) = (problem.model.nt(), problem.model.dt());
    let start = if plan.warm_start { base.control.clone() } else { space.midpoint() };
    let outcomes = exec.map(mags.clone(), |m| {
        let zeta = direction.scaled(m);
        let init = if m == 0.0 { &base.start } else { &start };
        solve_perturbed(problem, &zeta, init, opts).map(|r| (m, r))
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (m, out) in mags.iter().zip(outcomes) {
        match out {
            Err(e) => failures.push((*m, e)),
            Ok((m, r)) => {
                let control_distance = space.distance_l1(&r.control, &base.control);
                records.push(StabilityRecord {
                    magnitude: m,
                    control_distance,
                    state_distance: state_distance(grid, dt, &r.evaluation.state, &base.evaluation.state),
                    velocity_sup_distance: velocity_sup_distance(&r.evaluation.state, &base.evaluation.state),
                    adjoint_gap: adjoint_gap(grid, &r.gradient.adjoint, &base.gradient.adjoint, nt),
                    kkt: r.kkt(),
                    iterations: r.iterations,
                    termination: r.termination,
                    outside_neighborhood: control_distance >= neighborhood,
                    local: plan.warm_start,
                    seed: plan.seed,
                });
            }
        }
    }
    let fit_of = |f: fn(&StabilityRecord) -> f64| {
        let (x, y): (Vec<f64>, Vec<f64>) = records.iter().filter(|r| r.magnitude > 0.0).map(|r| (r.magnitude, f(r))).unzip();
        fit::loglog(&x, &y)
    };
    let control_fit = fit_of(|r| r.control_distance);
    let state_fit = fit_of(|r| r.state_distance);
    let s = plan.norm_exponent;
    let mut c_half: f64 = 0.0;
    let mut c_sup: f64 = 0.0;
    for r in records.iter().filter(|r| r.control_distance > 0.0) {
        c_half = c_half.max(r.state_distance / libm::sqrt(r.control_distance));
        c_sup = c_sup.max(r.velocity_sup_distance / libm::pow(r.control_distance, 1.0 / s));
    }
    Ok(SweepReport {
        records,
        failures,
        control_fit,
        state_fit,
        state_control_constant: c_half,
        sup_control_constant: c_sup,
        neighborhood,
    })
}

// ------------------------------------------------------------------ growth

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthVariant {
    /// Right-hand side `||delta||_{L1}^{1+mu}` plus terminal terms.
    Control,
    /// Right-hand side `||u_rho - u*||^2 + ||theta_rho - theta*||^2` in `L2(Q)`.
    State,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthOptions {
    pub n_samples: usize,
    /// Fractions in `(0, 1]` of the step towards each sampled point.
    pub radii: Vec<f64>,
    pub seed: u64,
    /// Weight of the second variation in the left-hand side.
    pub tau: f64,
    /// Exponent `mu` of the control-growth right-hand side.
    pub mu: f64,
    pub variant: GrowthVariant,
    pub spec: FourierSpec,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        GrowthOptions {
            n_samples: 8,
            radii: alloc::vec![1.0, 0.3, 0.1, 0.03, 0.01],
            seed: 0,
            tau: 0.5,
            mu: 1.0,
            variant: GrowthVariant::Control,
            spec: FourierSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthSample {
    pub radius: f64,
    pub sample: usize,
    pub vertex: bool,
    pub l1_distance: f64,
    pub first_variation: f64,
    pub second_variation: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub samples: Vec<GrowthSample>,
    /// `(radius, min lhs/rhs)` over samples with `rhs > 0`.
    pub min_ratio: Vec<(f64, f64)>,
    /// Fit of `log lhs` against `log ||delta||_{L1}` over positive `lhs`:
    /// slope `1 + mu`, intercept `log c`.
    pub control_fit: Option<LinearFit>,
    /// `min(alpha1, alpha2) - 2 (||grad w*||_inf + ||grad psi*||_inf)`.
    pub margin: f64,
    pub adjoint_gradient: f64,
}

/// Sample directions around `center`: odd samples head to a random vertex of
/// the box, even samples along a smooth field scaled to the box width.
fn sample_targets(problem: &Problem, center: &Control, n: usize, seed: u64, spec: FourierSpec) -> Vec<(bool, Control)> {
    let space = &problem.space;
    let mut rng = synth::rng(seed);
    let (lo, hi) = (space.lower(), space.upper());
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i % 2 == 0 {
            let mut v = space.zeros();
            for (x, (l, h)) in v.q.iter_mut().zip(lo.q.iter().zip(&hi.q)) {
                *x = if rng.gen_bool(0.5) { *l } else { *h };
            }
            for (x, (l, h)) in v.theta.iter_mut().zip(lo.theta.iter().zip(&hi.theta)) {
                *x = if rng.gen_bool(0.5) { *l } else { *h };
            }
            out.push((true, v));
        } else {
            let mut d = smooth_control(problem, spec, &mut rng);
            let m = d.max_abs();
            if m > 0.0 {
                d.scale(1.0 / m);
            }
            for (x, (l, h)) in d.q.iter_mut().zip(lo.q.iter().zip(&hi.q)) {
                *x *= h - l;
            }
            for (x, (l, h)) in d.theta.iter_mut().zip(lo.theta.iter().zip(&hi.theta)) {
                *x *= h - l;
            }
            out.push((false, space.project_box(&Control::lincomb(1.0, center, 1.0, &d))));
        }
    }
    out
}

/// Tracking-closeness margin at an adjoint state.
pub fn tracking_margin(problem: &Problem, adj: &AdjointTrajectory) -> (f64, f64) {
    let g = adjoint_gradient_sup(problem.grid(), adj, problem.model.nt());
    (problem.weights.alpha1.min(problem.weights.alpha2) - 2.0 * g, g)
}

struct Probe<'a> {
    problem: &'a Problem,
    zeta: Option<&'a Perturbation>,
    center: &'a Control,
    result: &'a OptResult,
}

impl Probe<'_> {
    /// For each target and radius: `(delta, J' delta, J'' delta^2, state distance^2)`.
    fn sample(&self, opts: &GrowthOptions, want_state: bool) -> Result<Vec<(GrowthSample, f64)>> {
        let p = self.problem;
        let grid = p.grid();
        let dt = p.model.dt();
        let adj = &self.result.gradient.adjoint;
        let targets = sample_targets(p, self.center, opts.n_samples, opts.seed, opts.spec);
        let mut out = Vec::new();
        for &r in &opts.radii {
            for (i, (vertex, target)) in targets.iter().enumerate() {
                let delta = Control::lincomb(r, target, -r, self.center);
                let point = p.space.project_box(&Control::lincomb(1.0, self.center, 1.0, &delta));
                let delta = Control::lincomb(1.0, &point, -1.0, self.center);
                let first = p.space.inner(&self.result.gradient.control, &delta);
                let a = p.tangent(&self.result.evaluation, &delta)?;
                let second = p.hessian_form(self.zeta, adj, &delta, &a, &delta, &a)?;
                let dist_sq = if want_state {
                    let ev = p.eval(&point, self.zeta)?;
                    state_distance_sq(grid, dt, &ev.state, &self.result.evaluation.state)
                } else {
                    let nt = p.model.nt();
                    p.weights.beta1 * grid.inner(&a.v[nt], &a.v[nt]) + p.weights.beta2 * grid.inner(&a.theta[nt], &a.theta[nt])
                };
                out.push((
                    GrowthSample {
                        radius: r,
                        sample: i,
                        vertex: *vertex,
                        l1_distance: p.space.distance_l1(&point, self.center),
                        first_variation: first,
                        second_variation: second,
                        lhs: 0.0,
                        rhs: 0.0,
                    },
                    dist_sq,
                ));
            }
        }
        Ok(out)
    }
}

fn min_ratios(samples: &[GrowthSample], radii: &[f64]) -> Vec<(f64, f64)> {
    radii
        .iter()
        .filter_map(|&r| {
            samples
                .iter()
                .filter(|s| s.radius == r && s.rhs > 0.0)
                .map(|s| s.lhs / s.rhs)
                .reduce(f64::min)
                .map(|m| (r, m))
        })
        .collect()
}

/// Samples admissible points around `rho*` and compares
/// `J'(rho*) delta + tau J''(rho*) delta^2` with the growth right-hand side.
pub fn growth_probe(problem: &Problem, base: &OptResult, opts: &GrowthOptions) -> Result<GrowthReport> {
    if opts.radii.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
        return Err(Error::Argument("growth radii must lie in (0, 1]".into()));
    }
    let probe = Probe {
        problem,
        zeta: None,
        center: &base.control,
        result: base,
    };
    let raw = probe.sample(opts, opts.variant == GrowthVariant::State)?;
    let samples: Vec<GrowthSample> = raw
        .into_iter()
        .map(|(mut s, extra)| {
            s.lhs = s.first_variation + opts.tau * s.second_variation;
            s.rhs = match opts.variant {
                GrowthVariant::Control => libm::pow(s.l1_distance, 1.0 + opts.mu) + extra,
                GrowthVariant::State => extra,
            };
            s
        })
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = samples.iter().filter(|s| s.lhs > 0.0).map(|s| (s.l1_distance, s.lhs)).unzip();
    let (margin, adjoint_gradient) = tracking_margin(problem, &base.gradient.adjoint);
    Ok(GrowthReport {
        min_ratio: min_ratios(&samples, &opts.radii),
        control_fit: fit::loglog(&x, &y),
        samples,
        margin,
        adjoint_gradient,
    })
}

// ------------------------------------------------------------------ second order

#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderReport {
    /// Why the check was not run, if it was not.
    pub skipped: Option<String>,
    pub margin: f64,
    pub perturbation_norm: f64,
    /// `||zeta||_P + ||zeta||_P^(1/5)`.
    pub smallness: f64,
    pub perturbed_kkt: f64,
    pub perturbed_termination: Option<Termination>,
    pub control_shift: f64,
    /// `||grad(w_hat - w*)||_inf + ||grad(psi_hat - psi*)||_inf`.
    pub margin_degradation: f64,
    pub samples: Vec<GrowthSample>,
    /// `(radius, min J''_zeta delta^2 / state distance^2)`.
    pub min_ratio: Vec<(f64, f64)>,
}

impl SecondOrderReport {
    pub fn overall_min_ratio(&self) -> Option<f64> {
        self.min_ratio.iter().map(|r| r.1).reduce(f64::min)
    }
}

/// Solves the perturbed problem from `rho*`, then evaluates the perturbed
/// second variation along sampled admissible directions against the squared
/// state distance. Skipped when the unperturbed margin is not positive.
pub fn second_order_stability_check(
    problem: &Problem,
    base: &OptResult,
    zeta: &Perturbation,
    growth: &GrowthOptions,
    opt: &OptOptions,
    s: f64,
) -> Result<SecondOrderReport> {
    let (margin, _) = tracking_margin(problem, &base.gradient.adjoint);
    let norm = zeta.norm(&problem.model, &problem.space, s)?;
    let mut report = SecondOrderReport {
        skipped: None,
        margin,
        perturbation_norm: norm,
        smallness: norm + libm::pow(norm, 0.2),
        perturbed_kkt: f64::NAN,
        perturbed_termination: None,
        control_shift: 0.0,
        margin_degradation: 0.0,
        samples: Vec::new(),
        min_ratio: Vec::new(),
    };
    if !(margin > 0.0) {
        report.skipped = Some(alloc::format!("tracking-closeness margin {margin:e} is not positive"));
        return Ok(report);
    }
    let hat = solve_perturbed(problem, zeta, &base.control, opt)?;
    let z = if zeta.is_zero() { None } else { Some(zeta) };
    report.perturbed_kkt = kkt_residual(&problem.space, &hat.control, &hat.gradient.control);
    report.perturbed_termination = Some(hat.termination);
    report.control_shift = problem.space.distance_l1(&hat.control, &base.control);
    report.margin_degradation = adjoint_gap(problem.grid(), &hat.gradient.adjoint, &base.gradient.adjoint, problem.model.nt());
    let probe = Probe {
        problem,
        zeta: z,
        center: &hat.control,
        result: &hat,
    };
    report.samples = probe
        .sample(growth, true)?
        .into_iter()
        .map(|(mut s, dist_sq)| {
            s.lhs = s.second_variation;
            s.rhs = dist_sq;
            s
        })
        .collect();
    report.min_ratio = min_ratios(&report.samples, &growth.radii);
    Ok(report)
}

/// Distance `||a - b||_{L1 x L1}` on a control space (convenience for reports).
pub fn control_distance(space: &ControlSpace, a: &Control, b: &Control) -> f64 {
    space.distance_l1(a, b)
}
