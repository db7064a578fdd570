//! Manufactured-solution convergence study of the forward solver.
//!
//! Exact fields on the unit square:
//!
//! ```text
//! u     = ( sin^2(pi x) sin(2 pi y), -sin(2 pi x) sin^2(pi y) ) cos t
//! theta = sin(pi x) sin(pi y) cos t
//! p     = 0
//! ```
//!
//! The forcing terms that make them solve the system are evaluated at the
//! new time level of each step. The time step shrinks like `h^2`, so the
//! first-order time error does not mask the spatial order.

use alloc::vec::Vec;
use core::f64::consts::PI;

use libm::{cos, sin};

use crate::boussinesq::{solve_state, InitialData, Model, PhysicalParams, SourceData, TimeGrid, TimeSeries};
use crate::fit::{self, LinearFit};
use crate::grid::{Field, GridConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MmsOptions {
    pub sizes: Vec<usize>,
    pub t_final: f64,
    /// `dt <= dt_factor * h^2`.
    pub dt_factor: f64,
    pub params: PhysicalParams,
}

impl Default for MmsOptions {
    fn default() -> Self {
        MmsOptions {
            sizes: alloc::vec![16, 32, 64],
            t_final: 0.1,
            dt_factor: 1.0,
            params: PhysicalParams {
                nu: 0.1,
                kappa: 0.1,
                ..PhysicalParams::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmsLevel {
    pub n: usize,
    pub nt: usize,
    pub h: f64,
    pub dt: f64,
    /// `L^2(Q)` errors, right-endpoint rule over levels `1..=nt`.
    pub error_u: f64,
    pub error_theta: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmsReport {
    pub levels: Vec<MmsLevel>,
    /// Observed order between consecutive levels.
    pub orders: Vec<f64>,
    /// Least-squares fit of `log error` against `log h`.
    pub fit: Option<LinearFit>,
}

fn exact_u(x: f64, y: f64, t: f64) -> (f64, f64) {
    let (sx, sy) = (sin(PI * x), sin(PI * y));
    let c = cos(t);
    (sx * sx * sin(2.0 * PI * y) * c, -sin(2.0 * PI * x) * sy * sy * c)
}

fn exact_theta(x: f64, y: f64, t: f64) -> f64 {
    sin(PI * x) * sin(PI * y) * cos(t)
}

/// Momentum forcing `u_t - nu lap u + (u.grad) u - e theta`.
fn forcing_u(p: &PhysicalParams, x: f64, y: f64, t: f64) -> (f64, f64) {
    let (sx, sy) = (sin(PI * x), sin(PI * y));
    let (s2x, s2y) = (sin(2.0 * PI * x), sin(2.0 * PI * y));
    let (c2x, c2y) = (cos(2.0 * PI * x), cos(2.0 * PI * y));
    let (c, s) = (cos(t), sin(t));
    let pi2 = PI * PI;
    let u1 = sx * sx * s2y * c;
    let u2 = -s2x * sy * sy * c;
    let lap1 = c * (2.0 * pi2 * c2x * s2y - 4.0 * pi2 * sx * sx * s2y);
    let lap2 = -c * (-4.0 * pi2 * s2x * sy * sy + 2.0 * pi2 * s2x * c2y);
    let d1x = PI * s2x * s2y * c;
    let d1y = 2.0 * PI * sx * sx * c2y * c;
    let d2x = -2.0 * PI * c2x * sy * sy * c;
    let d2y = -PI * s2x * s2y * c;
    let adv1 = u1 * d1x + u2 * d1y;
    let adv2 = u1 * d2x + u2 * d2y;
    let th = exact_theta(x, y, t);
    let mut f1 = -sx * sx * s2y * s - p.nu * lap1;
    let mut f2 = s2x * sy * sy * s - p.nu * lap2;
    if p.advection {
        f1 += adv1;
        f2 += adv2;
    }
    if p.buoyancy {
        f1 -= p.buoyancy_dir[0] * th;
        f2 -= p.buoyancy_dir[1] * th;
    }
    (f1, f2)
}

/// Heat forcing `theta_t - kappa lap theta + u.grad theta`.
fn forcing_theta(p: &PhysicalParams, x: f64, y: f64, t: f64) -> f64 {
    let (sx, sy) = (sin(PI * x), sin(PI * y));
    let (cx, cy) = (cos(PI * x), cos(PI * y));
    let c = cos(t);
    let th = sx * sy * c;
    let mut h = -sx * sy * sin(t) + p.kappa * 2.0 * PI * PI * th;
    if p.advection {
        let (u1, u2) = exact_u(x, y, t);
        h += u1 * PI * cx * sy * c + u2 * PI * sx * cy * c;
    }
    h
}

/// Runs the study on the unit square for every grid size.
pub fn run_mms(opts: &MmsOptions) -> Result<MmsReport> {
    if opts.sizes.len() < 2 {
        return Err(Error::config("mms.sizes", "at least two grid sizes are required"));
    }
    if !(opts.dt_factor > 0.0) {
        return Err(Error::config("mms.dt_factor", "must be positive"));
    }
    let mut levels = Vec::with_capacity(opts.sizes.len());
    for &n in &opts.sizes {
        let cfg = GridConfig::unit_square(n)?;
        let h = cfg.hx();
        let nt = libm::ceil(opts.t_final / (opts.dt_factor * h * h)) as usize;
        let model = Model::new(cfg, opts.params, TimeGrid::new(opts.t_final, nt)?)?;
        let grid = model.grid();
        let time = *model.time();
        let p = opts.params;
        let f: Vec<_> = (0..nt)
            .map(|k| {
                let t = time.time(k + 1);
                grid.sample_vector(|x, y| forcing_u(&p, x, y, t).0, |x, y| forcing_u(&p, x, y, t).1)
            })
            .collect();
        let g: Vec<_> = (0..nt)
            .map(|k| {
                let t = time.time(k + 1);
                grid.sample_scalar(|x, y| forcing_theta(&p, x, y, t))
            })
            .collect();
        let src = SourceData {
            f: TimeSeries::Series(f),
            h: TimeSeries::Series(g),
        };
        let init = InitialData {
            u0: grid.from_stream_function(|x, y| {
                let (a, b) = (sin(PI * x), sin(PI * y));
                a * a * b * b / PI
            }),
            theta0: grid.sample_scalar(|x, y| exact_theta(x, y, 0.0)),
        };
        let traj = solve_state(&model, &src, None, &init)?;
        let (mut eu, mut et) = (0.0, 0.0);
        for k in 1..=nt {
            let t = time.time(k);
            let ue = grid.sample_vector(|x, y| exact_u(x, y, t).0, |x, y| exact_u(x, y, t).1);
            let te = grid.sample_scalar(|x, y| exact_theta(x, y, t));
            let du = Field::lincomb(1.0, &traj.u[k], -1.0, &ue);
            let dth = Field::lincomb(1.0, &traj.theta[k], -1.0, &te);
            eu += time.dt() * grid.inner(&du, &du);
            et += time.dt() * grid.inner(&dth, &dth);
        }
        let (error_u, error_theta) = (libm::sqrt(eu), libm::sqrt(et));
        levels.push(MmsLevel {
            n,
            nt,
            h,
            dt: time.dt(),
            error_u,
            error_theta,
            error: libm::sqrt(eu + et),
        });
    }
    let orders = levels
        .windows(2)
        .map(|w| libm::log(w[0].error / w[1].error) / libm::log(w[0].h / w[1].h))
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = levels.iter().map(|l| (l.h, l.error)).unzip();
    Ok(MmsReport {
        fit: fit::loglog(&x, &y),
        levels,
        orders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_velocity_is_solenoidal_and_forcing_is_consistent() {
        let p = PhysicalParams::default();
        let (x, y, t, e) = (0.31, 0.67, 0.4, 1e-5);
        let div = (exact_u(x + e, y, t).0 - exact_u(x - e, y, t).0 + exact_u(x, y + e, t).1 - exact_u(x, y - e, t).1) / (2.0 * e);
        assert!(div.abs() < 1e-8);
        // finite-difference reconstruction of the heat forcing
        let th = |x, y, t| exact_theta(x, y, t);
        let tt = (th(x, y, t + e) - th(x, y, t - e)) / (2.0 * e);
        let lap = (th(x + e, y, t) + th(x - e, y, t) + th(x, y + e, t) + th(x, y - e, t) - 4.0 * th(x, y, t)) / (e * e);
        let (u1, u2) = exact_u(x, y, t);
        let adv = u1 * (th(x + e, y, t) - th(x - e, y, t)) / (2.0 * e) + u2 * (th(x, y + e, t) - th(x, y - e, t)) / (2.0 * e);
        let want = tt - p.kappa * lap + adv;
        assert!((forcing_theta(&p, x, y, t) - want).abs() < 1e-4);
        let uc = |x, y, t| exact_u(x, y, t);
        let comp = |f: &dyn Fn(f64, f64, f64) -> f64| {
            let tt = (f(x, y, t + e) - f(x, y, t - e)) / (2.0 * e);
            let lap = (f(x + e, y, t) + f(x - e, y, t) + f(x, y + e, t) + f(x, y - e, t) - 4.0 * f(x, y, t)) / (e * e);
            let adv = u1 * (f(x + e, y, t) - f(x - e, y, t)) / (2.0 * e) + u2 * (f(x, y + e, t) - f(x, y - e, t)) / (2.0 * e);
            tt - p.nu * lap + adv
        };
        let w1 = comp(&|x, y, t| uc(x, y, t).0);
        let w2 = comp(&|x, y, t| uc(x, y, t).1) - th(x, y, t);
        let (f1, f2) = forcing_u(&p, x, y, t);
        assert!((f1 - w1).abs() < 1e-3, "{f1} {w1}");
        assert!((f2 - w2).abs() < 1e-3, "{f2} {w2}");
    }

    #[test]
    fn coarse_study_converges() {
        let r = run_mms(&MmsOptions {
            sizes: alloc::vec![8, 16],
            t_final: 0.05,
            ..MmsOptions::default()
        })
        .unwrap();
        assert!(r.orders[0] > 1.5, "{:?}", r.levels);
    }
}
