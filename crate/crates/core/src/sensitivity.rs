//! Tangent, second-order and adjoint solvers of the discrete state equation.
//!
//! All three are exact derivatives of the time stepper in
//! [`crate::boussinesq`], so the discrete duality identity holds to rounding.
//!
//! Tangent step about a state `(u, theta)`, with sources `(F, G)`:
//!
//! ```text
//! th' = H_k^-1 [th + dt (-A(u) th - A(v) theta + G)]
//! v'  = P H_v^-1 P [v + dt (-A(u) v - A(v) u + e th + F)]
//! ```
//!
//! The adjoint runs backward with `w^k = P H_v^-1 P lam_v^{k+1}`,
//! `psi^k = H_k^-1 lam_th^{k+1}` and
//!
//! ```text
//! lam_v^k  = w^k + dt [A(u^k) w^k - (grad u^k)^T w^k - psi^k grad theta^k] + dt Fh^k
//! lam_th^k = psi^k + dt [A(u^k) psi^k + e . w^k] + dt Gh^k
//! ```
//!
//! where the transpose terms are the exact transposes of `v -> A(v) u^k` and
//! `v -> A(v) theta^k`.

use alloc::vec::Vec;

use crate::boussinesq::{Model, StateTrajectory, Warning};
use crate::grid::{Field, ScalarField, VectorField2, DIVERGENCE_WARNING};
use crate::{Error, Result};

/// Level-indexed fields `(v, th)` at levels `0..=nt`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTrajectory {
    pub v: Vec<VectorField2>,
    pub theta: Vec<ScalarField>,
}

/// Step-indexed source terms, one entry per step `n = 0..nt`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSources {
    pub f: Vec<VectorField2>,
    pub g: Vec<ScalarField>,
}

impl StepSources {
    pub fn zeros(model: &Model) -> Self {
        let nt = model.nt();
        StepSources {
            f: alloc::vec![model.grid().vector_zeros(); nt],
            g: alloc::vec![model.grid().scalar_zeros(); nt],
        }
    }
}

/// Level-indexed adjoint loads `(Fh^k, Gh^k)` for `k = 0..=nt`; entry 0 is
/// never read.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelLoads {
    pub f: Vec<VectorField2>,
    pub g: Vec<ScalarField>,
}

impl LevelLoads {
    pub fn zeros(model: &Model) -> Self {
        let nt = model.nt();
        LevelLoads {
            f: alloc::vec![model.grid().vector_zeros(); nt + 1],
            g: alloc::vec![model.grid().scalar_zeros(); nt + 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    /// `w^k` for `k = 0..nt`, solenoidal; entry `nt` holds the projected
    /// terminal datum.
    pub w: Vec<VectorField2>,
    /// `psi^k` for `k = 0..nt`; entry `nt` holds the terminal datum.
    pub psi: Vec<ScalarField>,
    /// Pressure-like potential of `w^k`: sum of both projection potentials.
    pub r: Vec<ScalarField>,
    /// `lam^0`: sensitivity of the objective with respect to the initial data.
    pub initial_v: VectorField2,
    pub initial_theta: ScalarField,
    pub warnings: Vec<Warning>,
}

fn check_base(model: &Model, base: &StateTrajectory) -> Result<()> {
    if base.levels() != model.nt() + 1 || base.theta.len() != model.nt() + 1 {
        return Err(Error::config("trajectory", "base trajectory does not match the time grid"));
    }
    Ok(())
}

fn check_steps(model: &Model, f: usize, g: usize, path: &str) -> Result<()> {
    if f != model.nt() || g != model.nt() {
        return Err(Error::config(path, "expected one entry per time step"));
    }
    Ok(())
}

fn numerical(what: &'static str, step: usize) -> Error {
    Error::Numerical {
        what,
        step,
        residual: f64::INFINITY,
    }
}

/// Linearized solve about `base` with sources `rhs` and initial data `(v0, th0)`.
pub fn solve_linearized(
    model: &Model,
    base: &StateTrajectory,
    rhs: &StepSources,
    v0: &VectorField2,
    th0: &ScalarField,
) -> Result<LinearTrajectory> {
    check_base(model, base)?;
    check_steps(model, rhs.f.len(), rhs.g.len(), "tangent.sources")?;
    let grid = model.grid();
    grid.check_vector(v0)?;
    grid.check_scalar(th0)?;
    let params = model.params();
    let (nt, dt) = (model.nt(), model.dt());
    let mut out = LinearTrajectory {
        v: Vec::with_capacity(nt + 1),
        theta: Vec::with_capacity(nt + 1),
    };
    out.v.push(v0.clone());
    out.theta.push(th0.clone());
    for n in 0..nt {
        let (u, theta) = (&base.u[n], &base.theta[n]);
        let (v, th) = (&out.v[n], &out.theta[n]);

        let mut rt = th.clone();
        if params.advection {
            grid.add_advect_scalar(-dt, u, th, &mut rt);
            grid.add_advect_scalar(-dt, v, theta, &mut rt);
        }
        rt.axpy(dt, &rhs.g[n]);
        let th_next = model.heat_solve(&rt);

        let mut rv = v.clone();
        if params.advection {
            grid.add_advect_vector(-dt, u, v, &mut rv);
            grid.add_advect_vector(-dt, v, u, &mut rv);
        }
        if params.buoyancy {
            rv.axpy(dt, &grid.buoyancy(th, params.buoyancy_dir));
        }
        rv.axpy(dt, &rhs.f[n]);
        let (v_next, _, _) = model.viscous_projection(&rv, n)?;
        if !v_next.is_finite() || !th_next.is_finite() {
            return Err(numerical("tangent step", n));
        }
        out.v.push(v_next);
        out.theta.push(th_next);
    }
    Ok(out)
}

/// Sources of the second-order equation for directions with tangents `a`, `b`:
/// `F = -[A(v_a) v_b + A(v_b) v_a]`, `G = -[A(v_a) th_b + A(v_b) th_a]`,
/// at steps `n = 0..nt`. Symmetric in `(a, b)` bit for bit.
pub fn second_order_sources(model: &Model, a: &LinearTrajectory, b: &LinearTrajectory) -> Result<StepSources> {
    let nt = model.nt();
    if a.v.len() != nt + 1 || b.v.len() != nt + 1 {
        return Err(Error::config("tangent", "tangent trajectory does not match the time grid"));
    }
    let grid = model.grid();
    let mut s = StepSources::zeros(model);
    if !model.params().advection {
        return Ok(s);
    }
    for n in 0..nt {
        let mut f1 = grid.vector_zeros();
        grid.add_advect_vector(-1.0, &a.v[n], &b.v[n], &mut f1);
        let mut f2 = grid.vector_zeros();
        grid.add_advect_vector(-1.0, &b.v[n], &a.v[n], &mut f2);
        s.f[n] = Field::lincomb(1.0, &f1, 1.0, &f2);
        let mut g1 = grid.scalar_zeros();
        grid.add_advect_scalar(-1.0, &a.v[n], &b.theta[n], &mut g1);
        let mut g2 = grid.scalar_zeros();
        grid.add_advect_scalar(-1.0, &b.v[n], &a.theta[n], &mut g2);
        s.g[n] = Field::lincomb(1.0, &g1, 1.0, &g2);
    }
    Ok(s)
}

/// Second-order sensitivity in the directions with tangents `a` and `b`
/// (zero initial data: the control enters linearly).
pub fn solve_second(model: &Model, base: &StateTrajectory, a: &LinearTrajectory, b: &LinearTrajectory) -> Result<LinearTrajectory> {
    let rhs = second_order_sources(model, a, b)?;
    let grid = model.grid();
    solve_linearized(model, base, &rhs, &grid.vector_zeros(), &grid.scalar_zeros())
}

/// Backward adjoint solve with loads `rhs` and terminal data `(w_t, psi_t)`.
///
/// A terminal velocity that is not discretely solenoidal is projected for the
/// stored `w^nt` and recorded as a warning; the recursion itself uses the
/// datum as given, which keeps the duality identity exact.
pub fn solve_adjoint(
    model: &Model,
    base: &StateTrajectory,
    rhs: &LevelLoads,
    w_t: &VectorField2,
    psi_t: &ScalarField,
) -> Result<AdjointTrajectory> {
    check_base(model, base)?;
    let (nt, dt) = (model.nt(), model.dt());
    if rhs.f.len() != nt + 1 || rhs.g.len() != nt + 1 {
        return Err(Error::config("adjoint.loads", "expected one entry per time level"));
    }
    let grid = model.grid();
    grid.check_vector(w_t)?;
    grid.check_scalar(psi_t)?;
    if !w_t.walls_are_zero() {
        return Err(Error::config("adjoint.terminal", "wall-normal components must vanish"));
    }
    let params = model.params();
    let mut warnings = Vec::new();
    let max_div = grid.div(w_t).max_abs();
    let w_end = if max_div > DIVERGENCE_WARNING {
        warnings.push(Warning::TerminalDivergence { max_div });
        grid.project(w_t, nt)?.field
    } else {
        w_t.clone()
    };

    let mut lam_v = w_t.clone();
    lam_v.axpy(dt, &rhs.f[nt]);
    let mut lam_t = psi_t.clone();
    lam_t.axpy(dt, &rhs.g[nt]);

    let mut w = alloc::vec![grid.vector_zeros(); nt + 1];
    let mut psi = alloc::vec![grid.scalar_zeros(); nt + 1];
    let mut r = alloc::vec![grid.scalar_zeros(); nt + 1];
    w[nt] = w_end;
    psi[nt] = psi_t.clone();

    for k in (0..nt).rev() {
        let (wk, pa, pb) = model.viscous_projection(&lam_v, k)?;
        let pk = model.heat_solve(&lam_t);
        let (u, theta) = (&base.u[k], &base.theta[k]);

        let mut nv = wk.clone();
        let mut nt_ = pk.clone();
        if params.advection {
            grid.add_advect_vector(dt, u, &wk, &mut nv);
            grid.add_advect_vector_velocity_transpose(-dt, u, &wk, &mut nv);
            grid.add_advect_scalar_velocity_transpose(-dt, theta, &pk, &mut nv);
            grid.add_advect_scalar(dt, u, &pk, &mut nt_);
        }
        if params.buoyancy {
            nt_.axpy(dt, &grid.buoyancy_transpose(&wk, params.buoyancy_dir));
        }
        if k > 0 {
            nv.axpy(dt, &rhs.f[k]);
            nt_.axpy(dt, &rhs.g[k]);
        }
        if !nv.is_finite() || !nt_.is_finite() {
            return Err(numerical("adjoint step", k));
        }
        let mut rk = pa;
        rk.axpy(1.0, &pb);
        r[k] = rk;
        w[k] = wk;
        psi[k] = pk;
        lam_v = nv;
        lam_t = nt_;
    }
    Ok(AdjointTrajectory {
        w,
        psi,
        r,
        initial_v: lam_v,
        initial_theta: lam_t,
        warnings,
    })
}

/// Both sides of the discrete duality identity for a tangent with sources
/// `delta` and zero initial data:
///
/// ```text
/// sum_{k=1}^{nt} dt (<v^k, Fh^k> + <th^k, Gh^k>) + <v^nt, w_t> + <th^nt, psi_t>
///   = sum_{n=0}^{nt-1} dt (<w^n, F^n> + <psi^n, G^n>)
/// ```
pub fn duality_sides(
    model: &Model,
    base: &StateTrajectory,
    delta: &StepSources,
    loads: &LevelLoads,
    w_t: &VectorField2,
    psi_t: &ScalarField,
) -> Result<(f64, f64)> {
    let grid = model.grid();
    let (nt, dt) = (model.nt(), model.dt());
    let lin = solve_linearized(model, base, delta, &grid.vector_zeros(), &grid.scalar_zeros())?;
    let adj = solve_adjoint(model, base, loads, w_t, psi_t)?;
    let mut lhs = grid.inner(&lin.v[nt], w_t) + grid.inner(&lin.theta[nt], psi_t);
    for k in 1..=nt {
        lhs += dt * (grid.inner(&lin.v[k], &loads.f[k]) + grid.inner(&lin.theta[k], &loads.g[k]));
    }
    let mut rhs = 0.0;
    for n in 0..nt {
        rhs += dt * (grid.inner(&adj.w[n], &delta.f[n]) + grid.inner(&adj.psi[n], &delta.g[n]));
    }
    Ok((lhs, rhs))
}

/// Relative duality defect `|lhs - rhs| / max(|lhs|, |rhs|, 1e-300)`.
pub fn duality_residual(
    model: &Model,
    base: &StateTrajectory,
    delta: &StepSources,
    loads: &LevelLoads,
    w_t: &VectorField2,
    psi_t: &ScalarField,
) -> Result<f64> {
    let (l, r) = duality_sides(model, base, delta, loads, w_t, psi_t)?;
    Ok(libm::fabs(l - r) / libm::fabs(l).max(libm::fabs(r)).max(1e-300))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boussinesq::{solve_state, InitialData, PhysicalParams, SourceData, TimeGrid, TimeSeries};
    use crate::grid::GridConfig;
    use crate::synth::{self, FourierSpec};

    fn setup(n: usize, nt: usize, seed: u64) -> (Model, StateTrajectory, SourceData, InitialData) {
        let m = Model::new(
            GridConfig::unit_square(n).unwrap(),
            PhysicalParams::default(),
            TimeGrid::new(0.2, nt).unwrap(),
        )
        .unwrap();
        let grid = m.grid();
        let mut rng = synth::rng(seed);
        let init = InitialData {
            u0: synth::fourier_solenoidal(grid, FourierSpec::default(), &mut rng),
            theta0: synth::fourier_scalar(grid, FourierSpec::default(), &mut rng),
        };
        let src = SourceData {
            f: TimeSeries::Constant(synth::fourier_vector(grid, FourierSpec::default(), &mut rng)),
            h: TimeSeries::Constant(synth::fourier_scalar(grid, FourierSpec::default(), &mut rng)),
        };
        let base = solve_state(&m, &src, None, &init).unwrap();
        (m, base, src, init)
    }

    fn random_steps(m: &Model, seed: u64) -> StepSources {
        let mut rng = synth::rng(seed);
        let g = m.grid();
        StepSources {
            f: (0..m.nt()).map(|_| synth::random_vector(g, &mut rng)).collect(),
            g: (0..m.nt()).map(|_| synth::random_scalar(g, &mut rng)).collect(),
        }
    }

    fn random_loads(m: &Model, seed: u64) -> LevelLoads {
        let mut rng = synth::rng(seed);
        let g = m.grid();
        LevelLoads {
            f: (0..=m.nt()).map(|_| synth::random_vector(g, &mut rng)).collect(),
            g: (0..=m.nt()).map(|_| synth::random_scalar(g, &mut rng)).collect(),
        }
    }

    #[test]
    fn tangent_matches_finite_differences() {
        let (m, base, src, init) = setup(12, 6, 1);
        let grid = m.grid();
        let delta = random_steps(&m, 2);
        let lin = solve_linearized(&m, &base, &delta, &grid.vector_zeros(), &grid.scalar_zeros()).unwrap();
        let perturbed = |s: f64| {
            let mut f = Vec::new();
            let mut h = Vec::new();
            for n in 0..m.nt() {
                let mut fv = src.f.at(n).unwrap().clone();
                fv.axpy(s, &delta.f[n]);
                f.push(fv);
                let mut hv = src.h.at(n).unwrap().clone();
                hv.axpy(s, &delta.g[n]);
                h.push(hv);
            }
            let sd = SourceData {
                f: TimeSeries::Series(f),
                h: TimeSeries::Series(h),
            };
            solve_state(&m, &sd, None, &init).unwrap()
        };
        let s = 1e-5;
        let (p, q) = (perturbed(s), perturbed(-s));
        let k = m.nt();
        let mut fd = Field::lincomb(0.5 / s, &p.u[k], -0.5 / s, &q.u[k]);
        fd.axpy(-1.0, &lin.v[k]);
        assert!(fd.max_abs() < 1e-7 * (1.0 + lin.v[k].max_abs()), "{}", fd.max_abs());
        let mut ft = Field::lincomb(0.5 / s, &p.theta[k], -0.5 / s, &q.theta[k]);
        ft.axpy(-1.0, &lin.theta[k]);
        assert!(ft.max_abs() < 1e-7 * (1.0 + lin.theta[k].max_abs()));
    }

    #[test]
    fn duality_holds_to_rounding() {
        let (m, base, _, _) = setup(16, 8, 4);
        let mut rng = synth::rng(9);
        let grid = m.grid();
        let wt = synth::fourier_solenoidal(grid, FourierSpec::default(), &mut rng);
        let pt = synth::random_scalar(grid, &mut rng);
        let r = duality_residual(&m, &base, &random_steps(&m, 5), &random_loads(&m, 6), &wt, &pt).unwrap();
        assert!(r < 1e-11, "{r}");
    }

    #[test]
    fn initial_sensitivity_pairs_with_initial_perturbation() {
        let (m, base, _, _) = setup(12, 5, 7);
        let grid = m.grid();
        let mut rng = synth::rng(8);
        let v0 = synth::fourier_solenoidal(grid, FourierSpec::default(), &mut rng);
        let th0 = synth::random_scalar(grid, &mut rng);
        let loads = random_loads(&m, 10);
        let zero = StepSources::zeros(&m);
        let lin = solve_linearized(&m, &base, &zero, &v0, &th0).unwrap();
        let adj = solve_adjoint(&m, &base, &loads, &grid.vector_zeros(), &grid.scalar_zeros()).unwrap();
        let mut lhs = 0.0;
        for k in 1..=m.nt() {
            lhs += m.dt() * (grid.inner(&lin.v[k], &loads.f[k]) + grid.inner(&lin.theta[k], &loads.g[k]));
        }
        let rhs = grid.inner(&adj.initial_v, &v0) + grid.inner(&adj.initial_theta, &th0);
        assert!((lhs - rhs).abs() < 1e-11 * lhs.abs().max(1.0));
    }

    #[test]
    fn adjoint_velocity_is_solenoidal() {
        let (m, base, _, _) = setup(12, 5, 3);
        let grid = m.grid();
        let mut rng = synth::rng(1);
        let wt = synth::random_vector(grid, &mut rng);
        let adj = solve_adjoint(&m, &base, &random_loads(&m, 2), &wt, &grid.scalar_zeros()).unwrap();
        assert!(adj.warnings.iter().any(|w| matches!(w, Warning::TerminalDivergence { .. })));
        for w in &adj.w {
            assert!(grid.div(w).max_abs() < 1e-10);
        }
    }

    #[test]
    fn second_order_sources_are_symmetric() {
        let (m, base, _, _) = setup(10, 4, 5);
        let g = m.grid();
        let a = solve_linearized(&m, &base, &random_steps(&m, 1), &g.vector_zeros(), &g.scalar_zeros()).unwrap();
        let b = solve_linearized(&m, &base, &random_steps(&m, 2), &g.vector_zeros(), &g.scalar_zeros()).unwrap();
        assert_eq!(second_order_sources(&m, &a, &b).unwrap(), second_order_sources(&m, &b, &a).unwrap());
        assert_eq!(solve_second(&m, &base, &a, &b).unwrap(), solve_second(&m, &base, &b, &a).unwrap());
    }

    #[test]
    fn second_order_matches_tangent_differences() {
        let (m, base, src, init) = setup(10, 5, 12);
        let g = m.grid();
        let d = random_steps(&m, 13);
        let zero_v = g.vector_zeros();
        let zero_t = g.scalar_zeros();
        let a = solve_linearized(&m, &base, &d, &zero_v, &zero_t).unwrap();
        let z = solve_second(&m, &base, &a, &a).unwrap();
        let s = 1e-3;
        let shifted = |sgn: f64| {
            let f: Vec<_> = (0..m.nt())
                .map(|n| {
                    let mut x = src.f.at(n).unwrap().clone();
                    x.axpy(sgn * s, &d.f[n]);
                    x
                })
                .collect();
            let h: Vec<_> = (0..m.nt())
                .map(|n| {
                    let mut x = src.h.at(n).unwrap().clone();
                    x.axpy(sgn * s, &d.g[n]);
                    x
                })
                .collect();
            solve_state(
                &m,
                &SourceData {
                    f: TimeSeries::Series(f),
                    h: TimeSeries::Series(h),
                },
                None,
                &init,
            )
            .unwrap()
        };
        let (p, q) = (shifted(1.0), shifted(-1.0));
        let k = m.nt();
        let mut dd = base.u[k].clone();
        dd.scale(-2.0);
        dd.axpy(1.0, &p.u[k]);
        dd.axpy(1.0, &q.u[k]);
        dd.scale(1.0 / (s * s));
        dd.axpy(-1.0, &z.v[k]);
        assert!(dd.max_abs() < 1e-4 * (1.0 + z.v[k].max_abs()), "{}", dd.max_abs());
    }

    #[test]
    fn rejects_mismatched_lengths() {
        let (m, base, _, _) = setup(8, 3, 1);
        let mut s = StepSources::zeros(&m);
        s.f.pop();
        let g = m.grid();
        assert!(matches!(
            solve_linearized(&m, &base, &s, &g.vector_zeros(), &g.scalar_zeros()),
            Err(Error::Config { .. })
        ));
    }
}
