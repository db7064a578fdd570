//! Forward solver for the controlled Boussinesq system.
//!
//! One IMEX Euler step, from level `n` to `n + 1`:
//!
//! ```text
//! theta' = H_k^-1 [theta + dt (-A(u) theta + h + chi_h Theta)]
//! u'     = P H_v^-1 P [u + dt (-A(u) u + e theta + f + chi_q q)]
//! ```
//!
//! `A` is the skew-symmetric transport operator, `H_a = I - dt a lap` with
//! no-slip / homogeneous Dirichlet walls, `P` the discrete Leray projection
//! and `e` the unit buoyancy direction. Transport and buoyancy are explicit
//! and both use level `n`. The projection on both sides of the viscous solve
//! keeps `P H_v^-1 P` symmetric, so the adjoint inherits an exactly
//! solenoidal velocity multiplier.

use alloc::vec::Vec;

use crate::control::{Control, ControlSpace};
use crate::grid::{Field, Grid, GridConfig, ScalarField, VectorField2, DIVERGENCE_WARNING};
use crate::{Error, Result};

/// Courant number above which a warning is recorded.
pub const CFL_WARNING: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Kinematic viscosity.
    pub nu: f64,
    /// Thermal diffusivity.
    pub kappa: f64,
    /// Unit vector along which temperature drives the flow.
    pub buoyancy_dir: [f64; 2],
    /// Include the nonlinear transport terms. When false the system is the
    /// linear Stokes/heat pair coupled only through buoyancy.
    pub advection: bool,
    pub buoyancy: bool,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            nu: 0.05,
            kappa: 0.05,
            buoyancy_dir: [0.0, 1.0],
            advection: true,
            buoyancy: true,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::config("physics.nu", "viscosity must be positive and finite"));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::config("physics.kappa", "diffusivity must be positive and finite"));
        }
        let [a, b] = self.buoyancy_dir;
        if !(libm::fabs(libm::hypot(a, b) - 1.0) <= 1e-12) {
            return Err(Error::config("physics.buoyancy_dir", "direction must be a unit vector"));
        }
        Ok(())
    }
}

/// Uniform partition of `[0, t_final]` into `nt` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_final: f64,
    pub nt: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, nt: usize) -> Result<Self> {
        let t = TimeGrid { t_final, nt };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::config("time.t_final", "final time must be positive and finite"));
        }
        if self.nt == 0 {
            return Err(Error::config("time.nt", "at least one time step is required"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.nt as f64
    }

    /// Time of level `k`.
    pub fn time(&self, k: usize) -> f64 {
        self.t_final * k as f64 / self.nt as f64
    }
}

/// Grid, physics and time discretization of one experiment.
#[derive(Debug, Clone)]
pub struct Model {
    grid: Grid,
    params: PhysicalParams,
    time: TimeGrid,
}

impl Model {
    pub fn new(grid: GridConfig, params: PhysicalParams, time: TimeGrid) -> Result<Self> {
        params.validate()?;
        time.validate()?;
        Ok(Model {
            grid: Grid::new(grid)?,
            params,
            time,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn dt(&self) -> f64 {
        self.time.dt()
    }

    pub fn nt(&self) -> usize {
        self.time.nt
    }

    /// Same grid and time grid with different physics.
    pub fn with_params(&self, params: PhysicalParams) -> Result<Self> {
        params.validate()?;
        Ok(Model {
            grid: self.grid.clone(),
            params,
            time: self.time,
        })
    }

    /// `P H_v^-1 P x`, returning the result and both projection potentials.
    pub(crate) fn viscous_projection(&self, x: &VectorField2, step: usize) -> Result<(VectorField2, ScalarField, ScalarField)> {
        let a = self.grid.project(x, step)?;
        let mid = self.grid.solve_helmholtz_vector(self.dt() * self.params.nu, &a.field);
        let b = self.grid.project(&mid, step)?;
        Ok((b.field, a.potential, b.potential))
    }

    pub(crate) fn heat_solve(&self, x: &ScalarField) -> ScalarField {
        self.grid.solve_helmholtz_scalar(self.dt() * self.params.kappa, x)
    }
}

/// A field sequence over the time grid: absent, frozen, or one entry per index.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum TimeSeries<F> {
    #[default]
    Zero,
    Constant(F),
    Series(Vec<F>),
}

impl<F: Field> TimeSeries<F> {
    pub fn at(&self, k: usize) -> Option<&F> {
        match self {
            TimeSeries::Zero => None,
            TimeSeries::Constant(f) => Some(f),
            TimeSeries::Series(v) => v.get(k),
        }
    }

    /// `out += scale * self[k]`.
    pub fn add_to(&self, k: usize, scale: f64, out: &mut F) {
        if let Some(f) = self.at(k) {
            out.axpy(scale, f);
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, TimeSeries::Zero)
    }

    pub(crate) fn check(&self, len: usize, shape: (usize, usize), path: &str) -> Result<()> {
        let fields: &[F] = match self {
            TimeSeries::Zero => &[],
            TimeSeries::Constant(f) => core::slice::from_ref(f),
            TimeSeries::Series(v) => {
                if v.len() != len {
                    return Err(Error::config(path, alloc::format!("expected {len} entries, got {}", v.len())));
                }
                v
            }
        };
        for f in fields {
            if f.shape() != shape {
                return Err(Error::config(path, "field shape does not match the grid"));
            }
            if !f.is_finite() {
                return Err(Error::config(path, "field contains non-finite values"));
            }
        }
        Ok(())
    }
}

impl TimeSeries<VectorField2> {
    pub(crate) fn check_walls(&self, path: &str) -> Result<()> {
        let ok = match self {
            TimeSeries::Zero => true,
            TimeSeries::Constant(f) => f.walls_are_zero(),
            TimeSeries::Series(v) => v.iter().all(|f| f.walls_are_zero()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(path, "wall-normal components must vanish"))
        }
    }
}

/// Uncontrolled body forces, one entry per time step (`n = 0..nt`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourceData {
    pub f: TimeSeries<VectorField2>,
    pub h: TimeSeries<ScalarField>,
}

impl SourceData {
    pub fn validate(&self, model: &Model) -> Result<()> {
        let shape = (model.grid.nx(), model.grid.ny());
        self.f.check(model.nt(), shape, "sources.f")?;
        self.f.check_walls("sources.f")?;
        self.h.check(model.nt(), shape, "sources.h")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub u0: VectorField2,
    pub theta0: ScalarField,
}

impl InitialData {
    pub fn zeros(grid: &Grid) -> Self {
        InitialData {
            u0: grid.vector_zeros(),
            theta0: grid.scalar_zeros(),
        }
    }
}

/// The control acting on a solve, if any.
pub type Actuation<'a> = Option<(&'a ControlSpace, &'a Control)>;

/// Non-fatal conditions detected during a solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Warning {
    /// Explicit transport exceeds the advisory Courant number.
    Cfl { courant: f64 },
    /// The initial velocity was not discretely solenoidal and was projected.
    InitialDivergence { max_div: f64 },
    /// The control lies outside its box; the solve used it as given.
    ControlOutsideBox,
    /// The terminal adjoint velocity was not solenoidal and was projected.
    TerminalDivergence { max_div: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    /// Velocity at levels `0..=nt`.
    pub u: Vec<VectorField2>,
    /// Temperature at levels `0..=nt`.
    pub theta: Vec<ScalarField>,
    /// Pressure at levels `1..=nt`; entry 0 is zero.
    pub p: Vec<ScalarField>,
    pub warnings: Vec<Warning>,
}

impl StateTrajectory {
    pub fn levels(&self) -> usize {
        self.u.len()
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().all(Field::is_finite) && self.theta.iter().all(Field::is_finite)
    }
}

/// Courant number of explicit transport by `u`.
pub fn courant_number(grid: &Grid, u: &VectorField2, dt: f64) -> f64 {
    let (mx, my) = u.max_components();
    dt * (mx / grid.hx() + my / grid.hy())
}

fn check_actuation(model: &Model, act: Actuation<'_>, warnings: &mut Vec<Warning>) -> Result<()> {
    if let Some((space, c)) = act {
        space.check(c)?;
        if space.nt() != model.nt() {
            return Err(Error::config("controls", "control time grid differs from the state time grid"));
        }
        if !c.is_finite() {
            return Err(Error::config("control", "control contains non-finite values"));
        }
        if !space.is_admissible(c) {
            warnings.push(Warning::ControlOutsideBox);
        }
    }
    Ok(())
}

/// Solves the controlled system forward over the whole time grid.
pub fn solve_state(model: &Model, sources: &SourceData, act: Actuation<'_>, init: &InitialData) -> Result<StateTrajectory> {
    let grid = &model.grid;
    let params = &model.params;
    let (nt, dt) = (model.nt(), model.dt());
    sources.validate(model)?;
    grid.check_vector(&init.u0)?;
    grid.check_scalar(&init.theta0)?;
    if !init.u0.walls_are_zero() {
        return Err(Error::config("initial.u0", "wall-normal components must vanish"));
    }
    if !init.u0.is_finite() || !init.theta0.is_finite() {
        return Err(Error::config("initial", "initial data contains non-finite values"));
    }
    let mut warnings = Vec::new();
    check_actuation(model, act, &mut warnings)?;

    let mut u = init.u0.clone();
    let max_div = grid.div(&u).max_abs();
    if max_div > DIVERGENCE_WARNING {
        warnings.push(Warning::InitialDivergence { max_div });
        u = grid.project(&u, 0)?.field;
    }
    let courant = courant_number(grid, &u, dt);
    if params.advection && courant > CFL_WARNING {
        warnings.push(Warning::Cfl { courant });
    }

    let mut traj = StateTrajectory {
        u: Vec::with_capacity(nt + 1),
        theta: Vec::with_capacity(nt + 1),
        p: Vec::with_capacity(nt + 1),
        warnings: Vec::new(),
    };
    traj.u.push(u);
    traj.theta.push(init.theta0.clone());
    traj.p.push(grid.scalar_zeros());

    for n in 0..nt {
        let (u, theta) = (&traj.u[n], &traj.theta[n]);

        let mut rt = theta.clone();
        if params.advection {
            grid.add_advect_scalar(-dt, u, theta, &mut rt);
        }
        sources.h.add_to(n, dt, &mut rt);
        if let Some((space, c)) = act {
            space.add_force_h(c, n, dt, &mut rt);
        }
        let theta_next = model.heat_solve(&rt);

        let mut ru = u.clone();
        if params.advection {
            grid.add_advect_vector(-dt, u, u, &mut ru);
        }
        if params.buoyancy {
            ru.axpy(dt, &grid.buoyancy(theta, params.buoyancy_dir));
        }
        sources.f.add_to(n, dt, &mut ru);
        if let Some((space, c)) = act {
            space.add_force_q(c, n, dt, &mut ru);
        }
        let (u_next, phi_a, phi_b) = model.viscous_projection(&ru, n)?;

        if !u_next.is_finite() || !theta_next.is_finite() {
            return Err(Error::Numerical {
                what: "state step",
                step: n,
                residual: f64::INFINITY,
            });
        }
        let mut p = phi_a;
        p.axpy(1.0, &phi_b);
        p.scale(1.0 / dt);

        if params.advection {
            let c = courant_number(grid, &u_next, dt);
            if c > CFL_WARNING && !warnings.iter().any(|w| matches!(w, Warning::Cfl { .. })) {
                warnings.push(Warning::Cfl { courant: c });
            }
        }
        traj.u.push(u_next);
        traj.theta.push(theta_next);
        traj.p.push(p);
    }
    traj.warnings = warnings;
    Ok(traj)
}

/// Per-level energies and the discrete energy-estimate ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub rows: Vec<EnergyRow>,
    /// `max_k (||u_k||^2 + ||theta_k||^2)`.
    pub max_energy: f64,
    /// `sum_{k>=1} dt (||grad u_k||^2 + ||grad theta_k||^2)`.
    pub dissipation: f64,
    /// `||F||_{L2(Q)} + ||G||_{L2(Q)} + ||u_0|| + ||theta_0||` with `F`, `G`
    /// the total (source plus control) forcing.
    pub data_norm: f64,
    /// `(max_energy + dissipation) / data_norm^2`; zero for zero data.
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRow {
    pub k: usize,
    pub t: f64,
    pub ke_u: f64,
    pub ke_theta: f64,
    pub enstrophy_u: f64,
    pub grad_theta: f64,
}

pub fn energy_report(
    model: &Model,
    traj: &StateTrajectory,
    sources: &SourceData,
    act: Actuation<'_>,
    init: &InitialData,
) -> Result<EnergyReport> {
    let grid = &model.grid;
    let (nt, dt) = (model.nt(), model.dt());
    if traj.levels() != nt + 1 {
        return Err(Error::config("trajectory", "trajectory does not match the time grid"));
    }
    let mut rows = Vec::with_capacity(nt + 1);
    let (mut max_energy, mut dissipation) = (0.0_f64, 0.0);
    for k in 0..=nt {
        let row = EnergyRow {
            k,
            t: model.time.time(k),
            ke_u: grid.inner(&traj.u[k], &traj.u[k]),
            ke_theta: grid.inner(&traj.theta[k], &traj.theta[k]),
            enstrophy_u: grid.dirichlet_energy_v(&traj.u[k]),
            grad_theta: grid.dirichlet_energy(&traj.theta[k]),
        };
        max_energy = max_energy.max(row.ke_u + row.ke_theta);
        if k > 0 {
            dissipation += dt * (row.enstrophy_u + row.grad_theta);
        }
        rows.push(row);
    }
    let (mut ff, mut gg) = (0.0, 0.0);
    for n in 0..nt {
        let mut f = grid.vector_zeros();
        sources.f.add_to(n, 1.0, &mut f);
        let mut g = grid.scalar_zeros();
        sources.h.add_to(n, 1.0, &mut g);
        if let Some((space, c)) = act {
            space.add_force_q(c, n, 1.0, &mut f);
            space.add_force_h(c, n, 1.0, &mut g);
        }
        ff += dt * grid.inner(&f, &f);
        gg += dt * grid.inner(&g, &g);
    }
    let data_norm = libm::sqrt(ff) + libm::sqrt(gg) + grid.norm2(&init.u0) + grid.norm2(&init.theta0);
    let ratio = if data_norm > 0.0 {
        (max_energy + dissipation) / (data_norm * data_norm)
    } else {
        0.0
    };
    Ok(EnergyReport {
        rows,
        max_energy,
        dissipation,
        data_norm,
        ratio,
    })
}

/// Space-time `L^2(Q)` norm of a level-indexed sequence, right-endpoint rule.
pub fn l2_space_time<F: Field>(grid: &Grid, dt: f64, levels: &[F]) -> f64 {
    let s: f64 = levels.iter().skip(1).map(|f| dt * grid.inner(f, f)).sum();
    libm::sqrt(s)
}

/// `sum_{k>=1} dt ||a_k - b_k||^2` for two level-indexed sequences.
pub fn squared_distance<F: Field>(grid: &Grid, dt: f64, a: &[F], b: &[F]) -> f64 {
    a.iter()
        .zip(b)
        .skip(1)
        .map(|(x, y)| {
            let d = F::lincomb(1.0, x, -1.0, y);
            dt * grid.inner(&d, &d)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ConstantBounds;
    use crate::grid::RegionMask;
    use crate::synth;

    fn model(n: usize, nt: usize) -> Model {
        Model::new(
            GridConfig::unit_square(n).unwrap(),
            PhysicalParams::default(),
            TimeGrid::new(0.5, nt).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_physics() {
        let mut p = PhysicalParams {
            nu: 0.0,
            ..PhysicalParams::default()
        };
        assert!(matches!(p.validate(), Err(Error::Config { .. })));
        p = PhysicalParams::default();
        p.buoyancy_dir = [0.0, 2.0];
        assert!(p.validate().is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn zero_data_stays_at_rest() {
        let m = model(12, 8);
        let tr = solve_state(&m, &SourceData::default(), None, &InitialData::zeros(m.grid())).unwrap();
        assert_eq!(tr.levels(), 9);
        for k in 0..=8 {
            assert_eq!(tr.u[k].max_abs(), 0.0);
            assert_eq!(tr.theta[k].max_abs(), 0.0);
            assert_eq!(tr.p[k].max_abs(), 0.0);
        }
        assert!(tr.warnings.is_empty());
    }

    #[test]
    fn first_step_from_rest_is_projected_buoyancy() {
        let m = model(16, 4);
        let grid = m.grid();
        let mut rng = synth::rng(3);
        let theta0 = synth::random_scalar(grid, &mut rng);
        let init = InitialData {
            u0: grid.vector_zeros(),
            theta0: theta0.clone(),
        };
        let tr = solve_state(&m, &SourceData::default(), None, &init).unwrap();
        let mut rhs = grid.vector_zeros();
        rhs.axpy(m.dt(), &grid.buoyancy(&theta0, [0.0, 1.0]));
        let (want, _, _) = m.viscous_projection(&rhs, 0).unwrap();
        assert_eq!(tr.u[1], want);
    }

    #[test]
    fn states_are_solenoidal_and_deterministic() {
        let m = model(16, 10);
        let grid = m.grid();
        let mut rng = synth::rng(11);
        let init = InitialData {
            u0: synth::fourier_solenoidal(grid, synth::FourierSpec::default(), &mut rng),
            theta0: synth::random_scalar(grid, &mut rng),
        };
        let src = SourceData {
            f: TimeSeries::Constant(synth::random_vector(grid, &mut rng)),
            h: TimeSeries::Zero,
        };
        let a = solve_state(&m, &src, None, &init).unwrap();
        let b = solve_state(&m, &src, None, &init).unwrap();
        assert_eq!(a, b);
        for u in &a.u[1..] {
            assert!(grid.div(u).max_abs() < 1e-10);
            assert!(u.walls_are_zero());
        }
    }

    #[test]
    fn projects_divergent_initial_velocity_with_warning() {
        let m = model(12, 2);
        let grid = m.grid();
        let mut rng = synth::rng(5);
        let init = InitialData {
            u0: synth::random_vector(grid, &mut rng),
            theta0: grid.scalar_zeros(),
        };
        let tr = solve_state(&m, &SourceData::default(), None, &init).unwrap();
        assert!(tr.warnings.iter().any(|w| matches!(w, Warning::InitialDivergence { .. })));
        assert!(grid.div(&tr.u[0]).max_abs() < 1e-10);
    }

    #[test]
    fn cfl_warning_for_fast_flow() {
        let m = model(12, 2);
        let grid = m.grid();
        let mut u0 = grid.from_stream_function(|x, y| {
            let s = libm::sin(core::f64::consts::PI * x) * libm::sin(core::f64::consts::PI * y);
            s * s
        });
        u0.scale(50.0);
        let init = InitialData {
            u0,
            theta0: grid.scalar_zeros(),
        };
        let tr = solve_state(&m, &SourceData::default(), None, &init).unwrap();
        assert!(tr.warnings.iter().any(|w| matches!(w, Warning::Cfl { .. })));
    }

    #[test]
    fn wrong_series_length_is_a_config_error() {
        let m = model(8, 4);
        let src = SourceData {
            f: TimeSeries::Zero,
            h: TimeSeries::Series(vec![m.grid().scalar_zeros(); 3]),
        };
        let err = solve_state(&m, &src, None, &InitialData::zeros(m.grid())).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "sources.h"));
    }

    #[test]
    fn control_equals_equivalent_source() {
        let m = model(12, 5);
        let grid = m.grid();
        let cfg = *grid.config();
        let space = ControlSpace::new(
            grid,
            RegionMask::from_rect(&cfg, 0.25, 0.75, 0.25, 0.75).unwrap(),
            RegionMask::whole(&cfg),
            5,
            m.dt(),
            ConstantBounds {
                q_lo: [-1.0; 2],
                q_hi: [1.0; 2],
                theta_lo: -1.0,
                theta_hi: 1.0,
            },
        )
        .unwrap();
        let c = space.midpoint();
        let mut c2 = c.clone();
        c2.q.iter_mut()
            .enumerate()
            .for_each(|(k, v)| *v = if k % 3 == 0 { 0.7 } else { -0.2 });
        c2.theta.iter_mut().for_each(|v| *v = 0.3);
        let init = InitialData::zeros(grid);
        let a = solve_state(&m, &SourceData::default(), Some((&space, &c2)), &init).unwrap();
        let mut f = Vec::new();
        let mut h = Vec::new();
        for n in 0..5 {
            let mut fv = grid.vector_zeros();
            space.add_force_q(&c2, n, 1.0, &mut fv);
            f.push(fv);
            let mut hv = grid.scalar_zeros();
            space.add_force_h(&c2, n, 1.0, &mut hv);
            h.push(hv);
        }
        let src = SourceData {
            f: TimeSeries::Series(f),
            h: TimeSeries::Series(h),
        };
        let b = solve_state(&m, &src, None, &init).unwrap();
        for k in 0..=5 {
            assert!(Field::lincomb(1.0, &a.u[k], -1.0, &b.u[k]).max_abs() < 1e-14);
            assert!(Field::lincomb(1.0, &a.theta[k], -1.0, &b.theta[k]).max_abs() < 1e-14);
        }
        let mut out = c.clone();
        out.q[0] = 9.0;
        let tr = solve_state(&m, &SourceData::default(), Some((&space, &out)), &init).unwrap();
        assert!(tr.warnings.contains(&Warning::ControlOutsideBox));
    }

    #[test]
    fn energy_report_rows_and_ratio() {
        let m = model(12, 6);
        let grid = m.grid();
        let mut rng = synth::rng(2);
        let init = InitialData {
            u0: synth::fourier_solenoidal(grid, synth::FourierSpec::default(), &mut rng),
            theta0: synth::random_scalar(grid, &mut rng),
        };
        let tr = solve_state(&m, &SourceData::default(), None, &init).unwrap();
        let r = energy_report(&m, &tr, &SourceData::default(), None, &init).unwrap();
        assert_eq!(r.rows.len(), 7);
        assert!(r.ratio > 0.0 && r.ratio.is_finite());
        assert!((r.rows[0].ke_u - grid.inner(&init.u0, &init.u0)).abs() < 1e-15);
    }
}
