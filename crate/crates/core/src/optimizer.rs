//! Box-constrained minimization and first-order diagnostics.
//!
//! The minimizer is a spectral projected gradient method: Barzilai-Borwein
//! steps safeguarded to `[step_min, step_max]`, projected onto the box, with
//! a nonmonotone Armijo line search against the largest of the last
//! `nonmonotone_window` objective values.

use alloc::vec::Vec;

use crate::control::{Control, ControlSpace, Split};
use crate::fit::{self, LinearFit};
use crate::objective::{Evaluation, Gradient, Perturbation, Problem};
use crate::sensitivity::AdjointTrajectory;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptOptions {
    pub max_iters: usize,
    pub kkt_tol: f64,
    /// First spectral step; the first direction is `P(rho - step g) - rho`.
    pub initial_step: f64,
    /// Sufficient-decrease constant.
    pub armijo: f64,
    /// Step reduction factor per backtrack, in `(0, 1)`.
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub step_min: f64,
    pub step_max: f64,
    pub nonmonotone_window: usize,
    /// Stop after this many consecutive iterations with relative change in
    /// `J` below `stagnation_tol`.
    pub stagnation_window: usize,
    pub stagnation_tol: f64,
}

impl Default for OptOptions {
    fn default() -> Self {
        OptOptions {
            max_iters: 500,
            kkt_tol: 1e-6,
            initial_step: 1.0,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
            step_min: 1e-12,
            step_max: 1e12,
            nonmonotone_window: 10,
            stagnation_window: 25,
            stagnation_tol: 1e-15,
        }
    }
}

impl OptOptions {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("optimizer.kkt_tol", self.kkt_tol),
            ("optimizer.initial_step", self.initial_step),
            ("optimizer.armijo", self.armijo),
            ("optimizer.step_min", self.step_min),
            ("optimizer.step_max", self.step_max),
            ("optimizer.stagnation_tol", self.stagnation_tol),
        ];
        for (path, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(path, "must be positive and finite"));
            }
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::config("optimizer.backtrack", "must lie in (0, 1)"));
        }
        if self.armijo >= 1.0 {
            return Err(Error::config("optimizer.armijo", "must be < 1"));
        }
        if self.step_min > self.step_max {
            return Err(Error::config("optimizer.step_min", "must not exceed step_max"));
        }
        if self.nonmonotone_window == 0 || self.stagnation_window == 0 {
            return Err(Error::config("optimizer.window", "windows must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    Stagnation,
    LineSearchFailure,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iterations",
            Termination::Stagnation => "stagnation",
            Termination::LineSearchFailure => "line_search_failure",
        }
    }
}

/// One line of the iterate log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterateRecord {
    pub iter: usize,
    pub j: f64,
    pub kkt: f64,
    /// Accepted step length along the projected direction (0 for the last record).
    pub step: f64,
    pub backtracks: usize,
    pub bang_fraction: Split,
}

#[derive(Debug, Clone)]
pub struct OptResult {
    pub control: Control,
    pub value: f64,
    pub j_history: Vec<f64>,
    pub kkt_history: Vec<f64>,
    pub records: Vec<IterateRecord>,
    pub iterations: usize,
    pub termination: Termination,
    pub bang_fraction: Split,
    /// The initial control was outside the box and was projected.
    pub projected_start: bool,
    /// First iterate; re-running from here with the same options and
    /// perturbation reproduces this result exactly.
    pub start: Control,
    pub evaluation: Evaluation,
    pub gradient: Gradient,
}

impl OptResult {
    pub fn kkt(&self) -> f64 {
        *self.kkt_history.last().unwrap_or(&f64::INFINITY)
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

/// `||rho - P(rho - g)||_{L1} / (1 + ||g||_{L1})`.
pub fn kkt_residual(space: &ControlSpace, rho: &Control, grad: &Control) -> f64 {
    let trial = space.project_box(&Control::lincomb(1.0, rho, -1.0, grad));
    let num = space.distance_l1(rho, &trial);
    num / (1.0 + space.norm_l1(grad).total())
}

/// KKT residual of the (perturbed) problem at `rho`.
pub fn kkt_at(problem: &Problem, rho: &Control, zeta: Option<&Perturbation>) -> Result<f64> {
    let (_, g) = problem.eval_with_gradient(rho, zeta)?;
    Ok(kkt_residual(&problem.space, rho, &g.control))
}

/// Default relative band of [`bang_bang_fraction`].
pub const DEFAULT_BANG_BAND: f64 = 1e-6;

/// Fraction of control mass within `band * (hi - lo)` of either bound, per
/// component. Values with `lo == hi` always count.
pub fn bang_bang_fraction(space: &ControlSpace, rho: &Control, band: f64) -> Result<Split> {
    if !(band >= 0.0) {
        return Err(Error::Argument(alloc::format!("band = {band} must be >= 0")));
    }
    let (lo, hi) = (space.lower(), space.upper());
    let frac = |v: &[f64], l: &[f64], h: &[f64]| -> f64 {
        if v.is_empty() {
            return 0.0;
        }
        let hits = v
            .iter()
            .zip(l.iter().zip(h))
            .filter(|(x, (l, h))| {
                let b = band * (*h - *l);
                **x - **l <= b || **h - **x <= b
            })
            .count();
        hits as f64 / v.len() as f64
    };
    Ok(Split {
        q: frac(&rho.q, &lo.q, &hi.q),
        theta: frac(&rho.theta, &lo.theta, &hi.theta),
    })
}

/// Spectral projected gradient from `rho0` (projected onto the box if needed).
pub fn projected_gradient(problem: &Problem, rho0: &Control, opts: &OptOptions, zeta: Option<&Perturbation>) -> Result<OptResult> {
    opts.validate()?;
    let space = &problem.space;
    space.check(rho0)?;
    if !rho0.is_finite() {
        return Err(Error::config("control", "initial control contains non-finite values"));
    }
    let projected_start = !space.is_admissible(rho0);
    let mut x = space.project_box(rho0);
    let start = x.clone();
    let (mut ev, mut g) = problem.eval_with_gradient(&x, zeta)?;
    let mut lambda = opts.initial_step.clamp(opts.step_min, opts.step_max);
    let mut j_history = Vec::new();
    let mut kkt_history = Vec::new();
    let mut records = Vec::new();
    let mut stagnant = 0usize;
    let mut iter = 0usize;

    let termination = loop {
        let kkt = kkt_residual(space, &x, &g.control);
        let bang = bang_bang_fraction(space, &x, DEFAULT_BANG_BAND)?;
        j_history.push(ev.value);
        kkt_history.push(kkt);
        records.push(IterateRecord {
            iter,
            j: ev.value,
            kkt,
            step: 0.0,
            backtracks: 0,
            bang_fraction: bang,
        });
        if kkt <= opts.kkt_tol {
            break Termination::Converged;
        }
        if iter >= opts.max_iters {
            break Termination::MaxIterations;
        }
        if stagnant >= opts.stagnation_window {
            break Termination::Stagnation;
        }

        let trial = space.project_box(&Control::lincomb(1.0, &x, -lambda, &g.control));
        let d = Control::lincomb(1.0, &trial, -1.0, &x);
        let gd = space.inner(&g.control, &d);
        let start = j_history.len().saturating_sub(opts.nonmonotone_window);
        let j_ref = j_history[start..].iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));

        let mut alpha = 1.0;
        let mut backtracks = 0usize;
        let accepted = loop {
            let cand = if alpha == 1.0 {
                trial.clone()
            } else {
                space.project_box(&Control::lincomb(1.0, &x, alpha, &d))
            };
            let ev_c = problem.eval(&cand, zeta)?;
            if ev_c.value <= j_ref + opts.armijo * alpha * gd {
                break Some((cand, ev_c));
            }
            backtracks += 1;
            if backtracks > opts.max_backtracks {
                break None;
            }
            alpha *= opts.backtrack;
        };
        let Some((x_new, ev_new)) = accepted else {
            records.last_mut().expect("nonempty").backtracks = backtracks;
            break Termination::LineSearchFailure;
        };
        let g_new = problem.gradient(&x_new, zeta, &ev_new)?;

        let s = Control::lincomb(1.0, &x_new, -1.0, &x);
        let y = Control::lincomb(1.0, &g_new.control, -1.0, &g.control);
        let sy = space.inner(&s, &y);
        let ss = space.inner(&s, &s);
        lambda = if sy > 0.0 {
            (ss / sy).clamp(opts.step_min, opts.step_max)
        } else {
            opts.step_max
        };

        let change = libm::fabs(ev_new.value - ev.value);
        if change <= opts.stagnation_tol * (1.0 + libm::fabs(ev.value)) {
            stagnant += 1;
        } else {
            stagnant = 0;
        }
        let last = records.last_mut().expect("nonempty");
        last.step = alpha;
        last.backtracks = backtracks;

        x = x_new;
        ev = ev_new;
        g = g_new;
        iter += 1;
    };

    let bang_fraction = bang_bang_fraction(space, &x, DEFAULT_BANG_BAND)?;
    Ok(OptResult {
        value: ev.value,
        control: x,
        j_history,
        kkt_history,
        records,
        iterations: iter,
        termination,
        bang_fraction,
        projected_start,
        start,
        evaluation: ev,
        gradient: g,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignCheckOptions {
    /// Allowed sign error of the gradient.
    pub tol: f64,
    /// A value within `band * (hi - lo)` of a bound counts as active there.
    pub band: f64,
}

impl Default for SignCheckOptions {
    fn default() -> Self {
        SignCheckOptions {
            tol: 1e-8,
            band: DEFAULT_BANG_BAND,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViolationReport {
    /// Quadrature mass of violating control values, per component.
    pub mass: Split,
    pub count: (usize, usize),
    /// `(component, value index)` of every violation; component 0 is `q`.
    pub flagged: Vec<(usize, usize)>,
}

/// Classifies each control value as active-lower, active-upper or inactive
/// and checks the sign of the gradient there: `g >= -tol`, `g <= tol` and
/// `|g| <= tol` respectively.
pub fn pointwise_sign_check(space: &ControlSpace, rho: &Control, grad: &Control, opts: SignCheckOptions) -> ViolationReport {
    let mut flagged = Vec::new();
    let mut count = (0usize, 0usize);
    for (comp, k, lo, hi) in space.entries() {
        let (x, g) = if comp == 0 {
            (rho.q[k], grad.q[k])
        } else {
            (rho.theta[k], grad.theta[k])
        };
        let b = opts.band * (hi - lo);
        let at_lo = x - lo <= b;
        let at_hi = hi - x <= b;
        let ok = match (at_lo, at_hi) {
            (true, true) => true,
            (true, false) => g >= -opts.tol,
            (false, true) => g <= opts.tol,
            (false, false) => libm::fabs(g) <= opts.tol,
        };
        if !ok {
            flagged.push((comp, k));
            if comp == 0 {
                count.0 += 1;
            } else {
                count.1 += 1;
            }
        }
    }
    ViolationReport {
        mass: Split {
            q: count.0 as f64 * space.weight(),
            theta: count.1 as f64 * space.weight(),
        },
        count,
        flagged,
    }
}

/// Smallness-set masses of one component and the fitted exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMeasure {
    /// `m(eps)` for every entry of the grid: count times value weight.
    pub mass: Vec<f64>,
    pub counts: Vec<usize>,
    pub full_mass: f64,
    /// Fit of `log m` against `log eps` over unsaturated nonzero entries.
    pub fit: Option<LinearFit>,
}

impl ComponentMeasure {
    /// Every mass is zero: the field is bounded away from zero on the grid.
    pub fn vacuous(&self) -> bool {
        self.counts.iter().all(|c| *c == 0)
    }

    /// The exponent estimate; `+inf` when vacuous and `NaN` without a fit.
    pub fn mu(&self) -> f64 {
        if self.vacuous() {
            f64::INFINITY
        } else {
            self.fit.map_or(f64::NAN, |f| f.slope)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureReport {
    pub eps: Vec<f64>,
    pub q: ComponentMeasure,
    pub theta: ComponentMeasure,
}

fn component_measure(values: &[f64], weight: f64, eps: &[f64]) -> ComponentMeasure {
    let mut abs: Vec<f64> = values.iter().map(|v| libm::fabs(*v)).collect();
    abs.sort_by(|a, b| a.total_cmp(b));
    let counts: Vec<usize> = eps.iter().map(|e| abs.partition_point(|v| *v <= *e)).collect();
    let mass: Vec<f64> = counts.iter().map(|c| *c as f64 * weight).collect();
    let (x, y): (Vec<f64>, Vec<f64>) = eps
        .iter()
        .zip(&counts)
        .zip(&mass)
        .filter(|((_, c), _)| **c > 0 && **c < values.len())
        .map(|((e, _), m)| (*e, *m))
        .unzip();
    ComponentMeasure {
        fit: fit::loglog(&x, &y),
        mass,
        counts,
        full_mass: values.len() as f64 * weight,
    }
}

/// Smallness-set measures `|{|field| <= eps}|` of control-space values.
pub fn measure_condition_values(space: &ControlSpace, values: &Control, eps_grid: &[f64]) -> Result<MeasureReport> {
    space.check(values)?;
    if eps_grid.is_empty() || eps_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) || eps_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("eps grid must be positive, finite and strictly increasing".into()));
    }
    Ok(MeasureReport {
        eps: eps_grid.to_vec(),
        q: component_measure(&values.q, space.weight(), eps_grid),
        theta: component_measure(&values.theta, space.weight(), eps_grid),
    })
}

/// Restriction of the adjoint to the control regions, `(chi_q^T w, chi_h^T psi)`.
pub fn adjoint_on_controls(space: &ControlSpace, adj: &AdjointTrajectory) -> Result<Control> {
    if adj.w.len() < space.nt() {
        return Err(Error::config("adjoint", "adjoint does not cover the control time grid"));
    }
    let mut c = space.zeros();
    for n in 0..space.nt() {
        space.restrict_q(&adj.w[n], n, &mut c);
        space.restrict_h(&adj.psi[n], n, &mut c);
    }
    Ok(c)
}

/// Measure-condition estimate from an adjoint trajectory.
pub fn measure_condition_estimate(space: &ControlSpace, adj: &AdjointTrajectory, eps_grid: &[f64]) -> Result<MeasureReport> {
    let values = adjoint_on_controls(space, adj)?;
    measure_condition_values(space, &values, eps_grid)
}
