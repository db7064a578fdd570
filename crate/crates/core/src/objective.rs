//! Tracking functional, its adjoint gradient and its second variation.
//!
//! ```text
//! J(rho) = a1/2 sum_k dt |u^k - u_d^k|^2 + a2/2 sum_k dt |theta^k - theta_d^k|^2
//!        + b1/2 |u^nt - u_T|^2 + b2/2 |theta^nt - theta_T|^2
//!        + e1/2 |q|_U^2 + e2/2 |Theta|_U^2
//! ```
//!
//! with `k = 1..=nt` (right-endpoint rule). A [`Perturbation`] shifts the
//! data and targets, adds linear tilts on states and controls, and raises the
//! Tikhonov weights. Evaluations carry their state trajectory so that
//! gradients and second variations at the same point reuse one forward solve.

use alloc::vec::Vec;

use crate::boussinesq::{solve_state, InitialData, Model, SourceData, StateTrajectory, TimeSeries};
use crate::control::{Control, ControlSpace};
use crate::grid::{lp_norm, Field, Grid, ScalarField, VectorField2};
use crate::sensitivity::{self, AdjointTrajectory, LevelLoads, LinearTrajectory, StepSources};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps1: f64,
    pub eps2: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights {
            alpha1: 1.0,
            alpha2: 1.0,
            beta1: 0.0,
            beta2: 0.0,
            eps1: 0.0,
            eps2: 0.0,
        }
    }
}

impl ObjectiveWeights {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("weights.alpha1", self.alpha1),
            ("weights.alpha2", self.alpha2),
            ("weights.beta1", self.beta1),
            ("weights.beta2", self.beta2),
            ("weights.eps1", self.eps1),
            ("weights.eps2", self.eps2),
        ];
        for (path, v) in named {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(path, "weight must be finite and >= 0"));
            }
        }
        if !(self.alpha1 + self.alpha2 + self.beta1 + self.beta2 > 0.0) {
            return Err(Error::config("weights", "alpha1 + alpha2 + beta1 + beta2 must be > 0"));
        }
        Ok(())
    }
}

/// Desired states. `u_d`, `theta_d` are level-indexed (`0..=nt`, entry 0 unused).
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub u_d: TimeSeries<VectorField2>,
    pub theta_d: TimeSeries<ScalarField>,
    pub u_t: VectorField2,
    pub theta_t: ScalarField,
}

impl Targets {
    pub fn zeros(grid: &Grid) -> Self {
        Targets {
            u_d: TimeSeries::Zero,
            theta_d: TimeSeries::Zero,
            u_t: grid.vector_zeros(),
            theta_t: grid.scalar_zeros(),
        }
    }

    /// Targets equal to a given trajectory (perfect tracking).
    pub fn from_trajectory(traj: &StateTrajectory) -> Self {
        Targets {
            u_d: TimeSeries::Series(traj.u.clone()),
            theta_d: TimeSeries::Series(traj.theta.clone()),
            u_t: traj.u[traj.u.len() - 1].clone(),
            theta_t: traj.theta[traj.theta.len() - 1].clone(),
        }
    }

    pub fn validate(&self, model: &Model) -> Result<()> {
        let grid = model.grid();
        let shape = (grid.nx(), grid.ny());
        let levels = model.nt() + 1;
        self.u_d.check(levels, shape, "targets.u_d")?;
        self.u_d.check_walls("targets.u_d")?;
        self.theta_d.check(levels, shape, "targets.theta_d")?;
        grid.check_vector(&self.u_t)?;
        grid.check_scalar(&self.theta_t)?;
        if !self.u_t.walls_are_zero() {
            return Err(Error::config("targets.u_t", "wall-normal components must vanish"));
        }
        if !self.u_t.is_finite() || !self.theta_t.is_finite() {
            return Err(Error::config("targets", "terminal targets must be finite"));
        }
        Ok(())
    }
}

/// Perturbation `zeta` of the data, targets and functional.
///
/// Source shifts are step-indexed; tilts and target shifts are level-indexed.
/// `control_tilt` holds `sigma` in its `q` part and `Lambda` in its `theta`
/// part, entering `J` as `<sigma, q>_U + <Lambda, Theta>_U`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Perturbation {
    pub f_hat: TimeSeries<VectorField2>,
    pub h_hat: TimeSeries<ScalarField>,
    pub u0_hat: Option<VectorField2>,
    pub theta0_hat: Option<ScalarField>,
    pub eta_u: TimeSeries<VectorField2>,
    pub eta_theta: TimeSeries<ScalarField>,
    pub control_tilt: Option<Control>,
    pub u_d_hat: TimeSeries<VectorField2>,
    pub theta_d_hat: TimeSeries<ScalarField>,
    pub eps1: f64,
    pub eps2: f64,
}

/// Exponent of the `L^s` pieces of the perturbation norm.
pub const DEFAULT_NORM_EXPONENT: f64 = 4.0;

impl Perturbation {
    pub fn is_zero(&self) -> bool {
        *self == Perturbation::default()
    }

    /// Tikhonov-only perturbation.
    pub fn tikhonov(eps1: f64, eps2: f64) -> Self {
        Perturbation {
            eps1,
            eps2,
            ..Perturbation::default()
        }
    }

    /// Scales every component, including the Tikhonov weights.
    pub fn scaled(&self, t: f64) -> Self {
        fn s<F: Field>(ts: &TimeSeries<F>, t: f64) -> TimeSeries<F> {
            match ts {
                TimeSeries::Zero => TimeSeries::Zero,
                TimeSeries::Constant(f) => {
                    let mut g = f.clone();
                    g.scale(t);
                    TimeSeries::Constant(g)
                }
                TimeSeries::Series(v) => TimeSeries::Series(
                    v.iter()
                        .map(|f| {
                            let mut g = f.clone();
                            g.scale(t);
                            g
                        })
                        .collect(),
                ),
            }
        }
        let opt = |f: &Option<_>| -> Option<_> {
            f.as_ref().map(|x: &VectorField2| {
                let mut y = x.clone();
                y.scale(t);
                y
            })
        };
        Perturbation {
            f_hat: s(&self.f_hat, t),
            h_hat: s(&self.h_hat, t),
            u0_hat: opt(&self.u0_hat),
            theta0_hat: self.theta0_hat.as_ref().map(|x| {
                let mut y = x.clone();
                y.scale(t);
                y
            }),
            eta_u: s(&self.eta_u, t),
            eta_theta: s(&self.eta_theta, t),
            control_tilt: self.control_tilt.as_ref().map(|c| {
                let mut d = c.clone();
                d.scale(t);
                d
            }),
            u_d_hat: s(&self.u_d_hat, t),
            theta_d_hat: s(&self.theta_d_hat, t),
            eps1: t * self.eps1,
            eps2: t * self.eps2,
        }
    }

    pub fn validate(&self, model: &Model, space: &ControlSpace) -> Result<()> {
        let grid = model.grid();
        let shape = (grid.nx(), grid.ny());
        let (nt, levels) = (model.nt(), model.nt() + 1);
        self.f_hat.check(nt, shape, "perturbation.f_hat")?;
        self.f_hat.check_walls("perturbation.f_hat")?;
        self.h_hat.check(nt, shape, "perturbation.h_hat")?;
        self.eta_u.check(levels, shape, "perturbation.eta_u")?;
        self.eta_u.check_walls("perturbation.eta_u")?;
        self.eta_theta.check(levels, shape, "perturbation.eta_theta")?;
        self.u_d_hat.check(levels, shape, "perturbation.u_d_hat")?;
        self.u_d_hat.check_walls("perturbation.u_d_hat")?;
        self.theta_d_hat.check(levels, shape, "perturbation.theta_d_hat")?;
        if let Some(u0) = &self.u0_hat {
            grid.check_vector(u0)?;
            if !u0.walls_are_zero() || !u0.is_finite() {
                return Err(Error::config(
                    "perturbation.u0_hat",
                    "must be finite with vanishing wall-normal components",
                ));
            }
        }
        if let Some(t0) = &self.theta0_hat {
            grid.check_scalar(t0)?;
            if !t0.is_finite() {
                return Err(Error::config("perturbation.theta0_hat", "must be finite"));
            }
        }
        if let Some(c) = &self.control_tilt {
            space.check(c)?;
            if !c.is_finite() {
                return Err(Error::config("perturbation.control_tilt", "must be finite"));
            }
        }
        if !(self.eps1 >= 0.0 && self.eps2 >= 0.0 && self.eps1.is_finite() && self.eps2.is_finite()) {
            return Err(Error::config("perturbation.eps", "Tikhonov shifts must be finite and >= 0"));
        }
        Ok(())
    }

    /// `||zeta||_P`: sum of `L^s(Q)` norms of the source, tilt and target
    /// pieces, `L^2` value plus gradient norms of the initial-data pieces,
    /// and `eps1 + eps2`.
    pub fn norm(&self, model: &Model, space: &ControlSpace, s: f64) -> Result<f64> {
        let grid = model.grid();
        let (nt, dt) = (model.nt(), model.dt());
        let mut total = 0.0;
        total += series_lp(&self.f_hat, 0..nt, grid, dt, s)?;
        total += series_lp(&self.h_hat, 0..nt, grid, dt, s)?;
        total += series_lp(&self.eta_u, 1..nt + 1, grid, dt, s)?;
        total += series_lp(&self.eta_theta, 1..nt + 1, grid, dt, s)?;
        total += series_lp(&self.u_d_hat, 1..nt + 1, grid, dt, s)?;
        total += series_lp(&self.theta_d_hat, 1..nt + 1, grid, dt, s)?;
        if let Some(u0) = &self.u0_hat {
            total += grid.norm2(u0) + libm::sqrt(grid.dirichlet_energy_v(u0));
        }
        if let Some(t0) = &self.theta0_hat {
            total += grid.norm2(t0) + libm::sqrt(grid.dirichlet_energy(t0));
        }
        if let Some(c) = &self.control_tilt {
            total += lp_norm(&c.q, space.weight(), s)? + lp_norm(&c.theta, space.weight(), s)?;
        }
        Ok(total + self.eps1 + self.eps2)
    }
}

fn series_lp<F: Field>(ts: &TimeSeries<F>, range: core::ops::Range<usize>, grid: &Grid, dt: f64, s: f64) -> Result<f64> {
    if ts.is_zero() {
        return Ok(0.0);
    }
    let values: Vec<f64> = range
        .flat_map(|k| ts.at(k).map(|f| f.values().to_vec()).unwrap_or_default())
        .collect();
    lp_norm(&values, dt * grid.cell_volume(), s)
}

/// `a + b` as one series of `len` entries.
fn sum_series<F: Field>(a: &TimeSeries<F>, b: &TimeSeries<F>, len: usize) -> TimeSeries<F> {
    match (a, b) {
        (_, TimeSeries::Zero) => a.clone(),
        (TimeSeries::Zero, _) => b.clone(),
        (TimeSeries::Constant(x), TimeSeries::Constant(y)) => TimeSeries::Constant(F::lincomb(1.0, x, 1.0, y)),
        _ => {
            let mut out = Vec::with_capacity(len);
            for k in 0..len {
                let mut f = match (a.at(k), b.at(k)) {
                    (Some(x), _) => x.clone(),
                    (None, Some(y)) => y.zeros_like(),
                    (None, None) => unreachable!("both series are nonzero"),
                };
                b.add_to(k, 1.0, &mut f);
                out.push(f);
            }
            TimeSeries::Series(out)
        }
    }
}

/// Value breakdown of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveTerms {
    pub tracking_u: f64,
    pub tracking_theta: f64,
    pub terminal_u: f64,
    pub terminal_theta: f64,
    pub tikhonov: f64,
    pub tilt: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.tracking_u + self.tracking_theta + self.terminal_u + self.terminal_theta + self.tikhonov + self.tilt
    }
}

/// `J` at one control, with the state that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub terms: ObjectiveTerms,
    pub state: StateTrajectory,
    control_fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    /// Riesz representative in the weighted control inner product.
    pub control: Control,
    pub adjoint: AdjointTrajectory,
}

/// Everything needed to evaluate `J` and its derivatives.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: Model,
    pub sources: SourceData,
    pub init: InitialData,
    pub space: ControlSpace,
    pub weights: ObjectiveWeights,
    pub targets: Targets,
}

impl Problem {
    pub fn new(
        model: Model,
        sources: SourceData,
        init: InitialData,
        space: ControlSpace,
        weights: ObjectiveWeights,
        targets: Targets,
    ) -> Result<Self> {
        sources.validate(&model)?;
        weights.validate()?;
        targets.validate(&model)?;
        if space.nt() != model.nt() {
            return Err(Error::config("controls", "control time grid differs from the state time grid"));
        }
        let p = Problem {
            model,
            sources,
            init,
            space,
            weights,
            targets,
        };
        p.model.grid().check_vector(&p.init.u0)?;
        p.model.grid().check_scalar(&p.init.theta0)?;
        Ok(p)
    }

    pub fn grid(&self) -> &Grid {
        self.model.grid()
    }

    /// Same problem with different physics (e.g. transport switched off).
    pub fn with_model(&self, model: Model) -> Result<Self> {
        Problem::new(
            model,
            self.sources.clone(),
            self.init.clone(),
            self.space.clone(),
            self.weights,
            self.targets.clone(),
        )
    }

    pub fn with_weights(&self, weights: ObjectiveWeights) -> Result<Self> {
        weights.validate()?;
        let mut p = self.clone();
        p.weights = weights;
        Ok(p)
    }

    fn effective_eps(&self, zeta: Option<&Perturbation>) -> (f64, f64) {
        let (a, b) = zeta.map_or((0.0, 0.0), |z| (z.eps1, z.eps2));
        (self.weights.eps1 + a, self.weights.eps2 + b)
    }

    fn data(&self, zeta: Option<&Perturbation>) -> Result<(SourceData, InitialData)> {
        let Some(z) = zeta else {
            return Ok((self.sources.clone(), self.init.clone()));
        };
        z.validate(&self.model, &self.space)?;
        let nt = self.model.nt();
        let src = SourceData {
            f: sum_series(&self.sources.f, &z.f_hat, nt),
            h: sum_series(&self.sources.h, &z.h_hat, nt),
        };
        let mut init = self.init.clone();
        if let Some(u0) = &z.u0_hat {
            init.u0.axpy(1.0, u0);
        }
        if let Some(t0) = &z.theta0_hat {
            init.theta0.axpy(1.0, t0);
        }
        Ok((src, init))
    }

    /// Tracking misfits at level `k >= 1`: `(u^k - u_d^k - u_d_hat^k, ...)`.
    fn misfit(&self, state: &StateTrajectory, k: usize, zeta: Option<&Perturbation>) -> (VectorField2, ScalarField) {
        let mut du = state.u[k].clone();
        self.targets.u_d.add_to(k, -1.0, &mut du);
        let mut dt_ = state.theta[k].clone();
        self.targets.theta_d.add_to(k, -1.0, &mut dt_);
        if let Some(z) = zeta {
            z.u_d_hat.add_to(k, -1.0, &mut du);
            z.theta_d_hat.add_to(k, -1.0, &mut dt_);
        }
        (du, dt_)
    }

    /// Evaluates `J` (perturbed when `zeta` is given) and keeps the state.
    pub fn eval(&self, rho: &Control, zeta: Option<&Perturbation>) -> Result<Evaluation> {
        self.space.check(rho)?;
        if !rho.is_finite() {
            return Err(Error::config("control", "control contains non-finite values"));
        }
        let (src, init) = self.data(zeta)?;
        let state = solve_state(&self.model, &src, Some((&self.space, rho)), &init)?;
        let terms = self.terms(rho, zeta, &state);
        Ok(Evaluation {
            value: terms.total(),
            terms,
            state,
            control_fingerprint: rho.fingerprint(),
        })
    }

    fn terms(&self, rho: &Control, zeta: Option<&Perturbation>, state: &StateTrajectory) -> ObjectiveTerms {
        let grid = self.grid();
        let (nt, dt) = (self.model.nt(), self.model.dt());
        let w = &self.weights;
        let mut t = ObjectiveTerms::default();
        for k in 1..=nt {
            let (du, dth) = self.misfit(state, k, zeta);
            if w.alpha1 != 0.0 {
                t.tracking_u += 0.5 * w.alpha1 * dt * grid.inner(&du, &du);
            }
            if w.alpha2 != 0.0 {
                t.tracking_theta += 0.5 * w.alpha2 * dt * grid.inner(&dth, &dth);
            }
            if let Some(z) = zeta {
                if let Some(e) = z.eta_u.at(k) {
                    t.tilt += dt * grid.inner(e, &state.u[k]);
                }
                if let Some(e) = z.eta_theta.at(k) {
                    t.tilt += dt * grid.inner(e, &state.theta[k]);
                }
            }
        }
        let du = Field::lincomb(1.0, &state.u[nt], -1.0, &self.targets.u_t);
        let dth = Field::lincomb(1.0, &state.theta[nt], -1.0, &self.targets.theta_t);
        t.terminal_u = 0.5 * w.beta1 * grid.inner(&du, &du);
        t.terminal_theta = 0.5 * w.beta2 * grid.inner(&dth, &dth);
        let (e1, e2) = self.effective_eps(zeta);
        let sq = self.space.inner_split(rho, rho);
        t.tikhonov = 0.5 * (e1 * sq.q + e2 * sq.theta);
        if let Some(c) = zeta.and_then(|z| z.control_tilt.as_ref()) {
            t.tilt += self.space.inner(c, rho);
        }
        t
    }

    /// Adjoint loads and terminal data of `J` at a computed state.
    fn adjoint_data(&self, state: &StateTrajectory, zeta: Option<&Perturbation>) -> (LevelLoads, VectorField2, ScalarField) {
        let nt = self.model.nt();
        let w = &self.weights;
        let mut loads = LevelLoads::zeros(&self.model);
        for k in 1..=nt {
            let (mut du, mut dth) = self.misfit(state, k, zeta);
            du.scale(w.alpha1);
            dth.scale(w.alpha2);
            if let Some(z) = zeta {
                z.eta_u.add_to(k, 1.0, &mut du);
                z.eta_theta.add_to(k, 1.0, &mut dth);
            }
            loads.f[k] = du;
            loads.g[k] = dth;
        }
        let mut wt = Field::lincomb(1.0, &state.u[nt], -1.0, &self.targets.u_t);
        wt.scale(w.beta1);
        let mut pt = Field::lincomb(1.0, &state.theta[nt], -1.0, &self.targets.theta_t);
        pt.scale(w.beta2);
        (loads, wt, pt)
    }

    fn check_evaluation(&self, rho: &Control, ev: &Evaluation) -> Result<()> {
        if ev.control_fingerprint != rho.fingerprint() {
            return Err(Error::Argument("evaluation belongs to a different control".into()));
        }
        Ok(())
    }

    /// Adjoint state at an evaluated point.
    pub fn adjoint(&self, rho: &Control, zeta: Option<&Perturbation>, ev: &Evaluation) -> Result<AdjointTrajectory> {
        self.check_evaluation(rho, ev)?;
        let (loads, wt, pt) = self.adjoint_data(&ev.state, zeta);
        sensitivity::solve_adjoint(&self.model, &ev.state, &loads, &wt, &pt)
    }

    /// Gradient at an evaluated point: `chi_q^T w + e1 q + sigma`,
    /// `chi_h^T psi + e2 Theta + Lambda`.
    pub fn gradient(&self, rho: &Control, zeta: Option<&Perturbation>, ev: &Evaluation) -> Result<Gradient> {
        let adjoint = self.adjoint(rho, zeta, ev)?;
        let control = self.gradient_from_adjoint(rho, zeta, &adjoint);
        Ok(Gradient { control, adjoint })
    }

    pub(crate) fn gradient_from_adjoint(&self, rho: &Control, zeta: Option<&Perturbation>, adj: &AdjointTrajectory) -> Control {
        let mut g = self.space.zeros();
        for n in 0..self.model.nt() {
            self.space.restrict_q(&adj.w[n], n, &mut g);
            self.space.restrict_h(&adj.psi[n], n, &mut g);
        }
        let (e1, e2) = self.effective_eps(zeta);
        for (x, r) in g.q.iter_mut().zip(&rho.q) {
            *x += e1 * r;
        }
        for (x, r) in g.theta.iter_mut().zip(&rho.theta) {
            *x += e2 * r;
        }
        if let Some(c) = zeta.and_then(|z| z.control_tilt.as_ref()) {
            g.axpy(1.0, c);
        }
        g
    }

    /// Evaluation and gradient in one call.
    pub fn eval_with_gradient(&self, rho: &Control, zeta: Option<&Perturbation>) -> Result<(Evaluation, Gradient)> {
        let ev = self.eval(rho, zeta)?;
        let g = self.gradient(rho, zeta, &ev)?;
        Ok((ev, g))
    }

    /// Tangent `S'(rho) delta` about an evaluated state.
    pub fn tangent(&self, ev: &Evaluation, delta: &Control) -> Result<LinearTrajectory> {
        self.space.check(delta)?;
        let grid = self.grid();
        let mut src = StepSources::zeros(&self.model);
        for n in 0..self.model.nt() {
            self.space.add_force_q(delta, n, 1.0, &mut src.f[n]);
            self.space.add_force_h(delta, n, 1.0, &mut src.g[n]);
        }
        sensitivity::solve_linearized(&self.model, &ev.state, &src, &grid.vector_zeros(), &grid.scalar_zeros())
    }

    /// Bilinear form `B(d1, d2)` of the second variation, from precomputed
    /// tangents `a = S'd1`, `b = S'd2` and the adjoint at the base point.
    pub fn hessian_form(
        &self,
        zeta: Option<&Perturbation>,
        adj: &AdjointTrajectory,
        d1: &Control,
        a: &LinearTrajectory,
        d2: &Control,
        b: &LinearTrajectory,
    ) -> Result<f64> {
        let grid = self.grid();
        let (nt, dt) = (self.model.nt(), self.model.dt());
        let w = &self.weights;
        let mut s = 0.0;
        for k in 1..=nt {
            if w.alpha1 != 0.0 {
                s += w.alpha1 * dt * grid.inner(&a.v[k], &b.v[k]);
            }
            if w.alpha2 != 0.0 {
                s += w.alpha2 * dt * grid.inner(&a.theta[k], &b.theta[k]);
            }
        }
        s += w.beta1 * grid.inner(&a.v[nt], &b.v[nt]) + w.beta2 * grid.inner(&a.theta[nt], &b.theta[nt]);
        let (e1, e2) = self.effective_eps(zeta);
        let c = self.space.inner_split(d1, d2);
        s += e1 * c.q + e2 * c.theta;
        if self.model.params().advection {
            let second = sensitivity::second_order_sources(&self.model, a, b)?;
            for n in 0..nt {
                s += dt * (grid.inner(&adj.w[n], &second.f[n]) + grid.inner(&adj.psi[n], &second.g[n]));
            }
        }
        Ok(s)
    }

    /// `J''(rho)[delta, delta]`.
    pub fn second_variation(&self, rho: &Control, delta: &Control, zeta: Option<&Perturbation>) -> Result<f64> {
        let ev = self.eval(rho, zeta)?;
        let adj = self.adjoint(rho, zeta, &ev)?;
        let a = self.tangent(&ev, delta)?;
        self.hessian_form(zeta, &adj, delta, &a, delta, &a)
    }

    /// Relative defect `|J''[d1+d2] - J''[d1] - J''[d2] - 2 B(d1, d2)|`.
    pub fn polarization_check(&self, rho: &Control, d1: &Control, d2: &Control, zeta: Option<&Perturbation>) -> Result<f64> {
        let ev = self.eval(rho, zeta)?;
        let adj = self.adjoint(rho, zeta, &ev)?;
        let sum = Control::lincomb(1.0, d1, 1.0, d2);
        let a = self.tangent(&ev, d1)?;
        let b = self.tangent(&ev, d2)?;
        let c = self.tangent(&ev, &sum)?;
        let h1 = self.hessian_form(zeta, &adj, d1, &a, d1, &a)?;
        let h2 = self.hessian_form(zeta, &adj, d2, &b, d2, &b)?;
        let h12 = self.hessian_form(zeta, &adj, &sum, &c, &sum, &c)?;
        let bil = self.hessian_form(zeta, &adj, d1, &a, d2, &b)?;
        let scale = libm::fabs(h1) + libm::fabs(h2) + libm::fabs(h12) + 2.0 * libm::fabs(bil);
        let defect = libm::fabs(h12 - h1 - h2 - 2.0 * bil);
        Ok(if scale > 0.0 { defect / scale } else { 0.0 })
    }

    /// `J'(rho) delta` from a gradient.
    pub fn directional(&self, g: &Gradient, delta: &Control) -> f64 {
        self.space.inner(&g.control, delta)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::boussinesq::{PhysicalParams, TimeGrid};
    use crate::control::ConstantBounds;
    use crate::grid::{GridConfig, RegionMask};
    use crate::synth::{self, FourierSpec};
    use rand::Rng;

    pub(crate) fn small_problem(n: usize, nt: usize, seed: u64, weights: ObjectiveWeights) -> Problem {
        let cfg = GridConfig::unit_square(n).unwrap();
        let model = Model::new(cfg, PhysicalParams::default(), TimeGrid::new(0.25, nt).unwrap()).unwrap();
        let grid = model.grid();
        let mut rng = synth::rng(seed);
        let spec = FourierSpec::default();
        let init = InitialData {
            u0: synth::fourier_solenoidal(grid, spec, &mut rng),
            theta0: synth::fourier_scalar(grid, spec, &mut rng),
        };
        let sources = SourceData {
            f: TimeSeries::Constant(synth::fourier_vector(grid, spec, &mut rng)),
            h: TimeSeries::Zero,
        };
        let mut targets = Targets::zeros(grid);
        targets.u_d = TimeSeries::Constant(synth::fourier_solenoidal(grid, spec, &mut rng));
        targets.theta_d = TimeSeries::Constant(synth::fourier_scalar(grid, spec, &mut rng));
        targets.u_t = synth::fourier_solenoidal(grid, spec, &mut rng);
        targets.theta_t = synth::fourier_scalar(grid, spec, &mut rng);
        let space = ControlSpace::new(
            grid,
            RegionMask::from_rect(&cfg, 0.0, 0.5, 0.0, 1.0).unwrap(),
            RegionMask::from_rect(&cfg, 0.5, 1.0, 0.0, 1.0).unwrap(),
            nt,
            model.dt(),
            ConstantBounds {
                q_lo: [-2.0; 2],
                q_hi: [2.0; 2],
                theta_lo: -2.0,
                theta_hi: 2.0,
            },
        )
        .unwrap();
        Problem::new(model, sources, init, space, weights, targets).unwrap()
    }

    fn random_control(p: &Problem, seed: u64, amp: f64) -> Control {
        let mut rng = synth::rng(seed);
        let mut c = p.space.zeros();
        c.q.iter_mut()
            .chain(c.theta.iter_mut())
            .for_each(|v| *v = amp * rng.gen_range(-1.0..=1.0));
        c
    }

    fn all_weights() -> ObjectiveWeights {
        ObjectiveWeights {
            alpha1: 1.0,
            alpha2: 0.7,
            beta1: 0.5,
            beta2: 0.3,
            eps1: 0.01,
            eps2: 0.02,
        }
    }

    #[test]
    fn weights_validation() {
        let w = ObjectiveWeights {
            alpha1: -1.0,
            ..ObjectiveWeights::default()
        };
        assert!(w.validate().is_err());
        let w = ObjectiveWeights {
            alpha1: 0.0,
            alpha2: 0.0,
            beta1: 0.0,
            beta2: 0.0,
            eps1: 1.0,
            eps2: 0.0,
        };
        assert!(w.validate().is_err());
    }

    #[test]
    fn perfect_tracking_is_zero() {
        let p = small_problem(8, 4, 1, all_weights());
        let rho = p.space.zeros();
        let ev = p.eval(&rho, None).unwrap();
        let mut q = p.clone();
        q.targets = Targets::from_trajectory(&ev.state);
        assert_eq!(q.eval(&rho, None).unwrap().value, 0.0);
    }

    #[test]
    fn eps_only_gradient_is_eps_times_control() {
        let mut p = small_problem(8, 4, 2, all_weights());
        p.weights = ObjectiveWeights {
            alpha1: 0.0,
            alpha2: 0.0,
            beta1: 0.0,
            beta2: 0.0,
            eps1: 0.3,
            eps2: 0.0,
        };
        let rho = random_control(&p, 3, 1.0);
        let (_, g) = p.eval_with_gradient(&rho, None).unwrap();
        for (a, b) in g.control.q.iter().zip(&rho.q) {
            assert_eq!(*a, 0.3 * b);
        }
        assert!(g.control.theta.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let p = small_problem(12, 6, 4, all_weights());
        let rho = random_control(&p, 5, 0.5);
        let delta = random_control(&p, 6, 1.0);
        let z = Perturbation {
            eta_u: TimeSeries::Constant(synth::fourier_solenoidal(p.grid(), FourierSpec::default(), &mut synth::rng(1))),
            control_tilt: Some(random_control(&p, 7, 0.1)),
            eps1: 0.1,
            ..Perturbation::default()
        };
        for zeta in [None, Some(&z)] {
            let (_, g) = p.eval_with_gradient(&rho, zeta).unwrap();
            let d = p.directional(&g, &delta);
            let t = 1e-4;
            let jp = p.eval(&Control::lincomb(1.0, &rho, t, &delta), zeta).unwrap().value;
            let jm = p.eval(&Control::lincomb(1.0, &rho, -t, &delta), zeta).unwrap().value;
            let fd = (jp - jm) / (2.0 * t);
            assert!((fd - d).abs() < 1e-6 * d.abs().max(1e-3), "{fd} vs {d}");
        }
    }

    #[test]
    fn second_variation_taylor_and_symmetry() {
        let p = small_problem(12, 6, 8, all_weights());
        let rho = random_control(&p, 9, 0.5);
        let delta = random_control(&p, 10, 1.0);
        let (ev, g) = p.eval_with_gradient(&rho, None).unwrap();
        let h = p.second_variation(&rho, &delta, None).unwrap();
        let d = p.directional(&g, &delta);
        let rem = |t: f64| {
            let j = p.eval(&Control::lincomb(1.0, &rho, t, &delta), None).unwrap().value;
            (j - ev.value - t * d - 0.5 * t * t * h).abs()
        };
        let (r1, r2) = (rem(1e-1), rem(1e-2));
        let slope = libm::log10(r1 / r2);
        assert!((slope - 3.0).abs() < 0.25, "slope {slope}");
        let h2 = p.second_variation(&rho, &Control::lincomb(3.0, &delta, 0.0, &delta), None).unwrap();
        assert!((h2 - 9.0 * h).abs() < 1e-12 * h2.abs());
        let d2 = random_control(&p, 11, 1.0);
        assert!(p.polarization_check(&rho, &delta, &d2, None).unwrap() < 1e-11);
    }

    #[test]
    fn second_variation_without_transport_is_quadratic_misfit() {
        let p0 = small_problem(8, 4, 12, all_weights());
        let model = p0.model.with_params(PhysicalParams {
            advection: false,
            ..*p0.model.params()
        });
        let p = p0.with_model(model.unwrap()).unwrap();
        let rho = random_control(&p, 1, 1.0);
        let delta = random_control(&p, 2, 1.0);
        let ev = p.eval(&rho, None).unwrap();
        let a = p.tangent(&ev, &delta).unwrap();
        let g = p.grid();
        let dt = p.model.dt();
        let w = p.weights;
        let mut want = 0.0;
        for k in 1..=4 {
            want += w.alpha1 * dt * g.inner(&a.v[k], &a.v[k]) + w.alpha2 * dt * g.inner(&a.theta[k], &a.theta[k]);
        }
        want += w.beta1 * g.inner(&a.v[4], &a.v[4]) + w.beta2 * g.inner(&a.theta[4], &a.theta[4]);
        let c = p.space.inner_split(&delta, &delta);
        want += w.eps1 * c.q + w.eps2 * c.theta;
        assert_eq!(p.second_variation(&rho, &delta, None).unwrap(), want);
    }

    #[test]
    fn tikhonov_monotone_and_nonnegative() {
        let p = small_problem(8, 4, 13, all_weights());
        let rho = random_control(&p, 14, 1.0);
        let a = p.eval(&rho, Some(&Perturbation::tikhonov(0.1, 0.0))).unwrap().value;
        let b = p.eval(&rho, Some(&Perturbation::tikhonov(0.2, 0.1))).unwrap().value;
        assert!(b >= a && a >= 0.0);
    }

    #[test]
    fn mismatched_evaluation_is_rejected() {
        let p = small_problem(8, 4, 1, all_weights());
        let a = p.space.zeros();
        let b = random_control(&p, 2, 1.0);
        let ev = p.eval(&a, None).unwrap();
        assert!(matches!(p.gradient(&b, None, &ev), Err(Error::Argument(_))));
    }

    #[test]
    fn perturbation_norm_pieces() {
        let p = small_problem(8, 4, 1, all_weights());
        assert_eq!(Perturbation::default().norm(&p.model, &p.space, 4.0).unwrap(), 0.0);
        let z = Perturbation::tikhonov(0.25, 0.5);
        assert_eq!(z.norm(&p.model, &p.space, 4.0).unwrap(), 0.75);
        let mut c = p.space.zeros();
        c.theta.iter_mut().for_each(|v| *v = 2.0);
        let z = Perturbation {
            control_tilt: Some(c),
            ..Perturbation::default()
        };
        let m = p.space.region_measure().theta;
        let want = 2.0 * libm::pow(m, 0.25);
        assert!((z.norm(&p.model, &p.space, 4.0).unwrap() - want).abs() < 1e-14);
        let zs = z.scaled(3.0);
        assert!((zs.norm(&p.model, &p.space, 4.0).unwrap() - 3.0 * want).abs() < 1e-13);
    }
}
