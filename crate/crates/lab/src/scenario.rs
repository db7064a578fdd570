//! Turns a validated configuration into a control problem.

use boussinesq_core::boussinesq::{solve_state, InitialData, Model, PhysicalParams, SourceData, TimeGrid, TimeSeries};
use boussinesq_core::control::{ConstantBounds, Control, ControlSpace};
use boussinesq_core::grid::{Field, GridConfig, RegionMask};
use boussinesq_core::objective::{ObjectiveWeights, Problem, Targets};
use boussinesq_core::synth;

use crate::config::{ExperimentConfig, InitialControl, Rect, TargetKind};
use crate::error::LabError;

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ExperimentConfig,
    pub problem: Problem,
    /// Starting control of the base optimization.
    pub initial: Control,
}

pub fn physical_params(cfg: &ExperimentConfig) -> PhysicalParams {
    let p = &cfg.physics;
    PhysicalParams {
        nu: p.nu,
        kappa: p.kappa,
        buoyancy_dir: p.buoyancy_dir,
        advection: p.advection,
        buoyancy: p.buoyancy,
    }
}

pub fn model(cfg: &ExperimentConfig) -> Result<Model, LabError> {
    let g = &cfg.grid;
    let grid = GridConfig::new(g.nx, g.ny, g.lx, g.ly)?;
    Ok(Model::new(
        grid,
        physical_params(cfg),
        TimeGrid::new(cfg.time.t_final, cfg.time.nt)?,
    )?)
}

fn region(cfg: &GridConfig, r: &Rect, path: &str) -> Result<RegionMask, LabError> {
    RegionMask::from_rect(cfg, r.x0, r.x1, r.y0, r.y1).map_err(|e| match LabError::from(e) {
        LabError::Invalid(mut v) => {
            for x in &mut v {
                x.path = path.into();
            }
            LabError::Invalid(v)
        }
        other => other,
    })
}

fn series<F: Field>(amplitude: f64, mut field: F) -> TimeSeries<F> {
    if amplitude == 0.0 {
        TimeSeries::Zero
    } else {
        field.scale(amplitude);
        TimeSeries::Constant(field)
    }
}

impl Scenario {
    /// Draws all seeded fields from one stream in a fixed order, so that an
    /// amplitude set to zero does not shift the others.
    pub fn build(cfg: &ExperimentConfig) -> Result<Self, LabError> {
        let v = cfg.violations();
        if !v.is_empty() {
            return Err(LabError::Invalid(v));
        }
        let model = model(cfg)?;
        let grid = model.grid();
        let gcfg = *grid.config();
        let mut rng = synth::rng(cfg.seed);
        let d = &cfg.data;
        let spec = d.spectrum.spec();
        let force = synth::fourier_vector(grid, spec, &mut rng);
        let heat = synth::fourier_scalar(grid, spec, &mut rng);
        let mut u0 = synth::fourier_solenoidal(grid, spec, &mut rng);
        let mut theta0 = synth::fourier_scalar(grid, spec, &mut rng);
        u0.scale(d.u0_amplitude);
        theta0.scale(d.theta0_amplitude);
        let sources = SourceData {
            f: series(d.force_amplitude, force),
            h: series(d.heat_amplitude, heat),
        };
        let init = InitialData { u0, theta0 };

        let k = &cfg.controls;
        let space = ControlSpace::new(
            grid,
            region(&gcfg, &k.q_region, "controls.q_region")?,
            region(&gcfg, &k.theta_region, "controls.theta_region")?,
            model.nt(),
            model.dt(),
            ConstantBounds {
                q_lo: k.q_lo,
                q_hi: k.q_hi,
                theta_lo: k.theta_lo,
                theta_hi: k.theta_hi,
            },
        )?;

        let t = &cfg.targets;
        let tspec = t.spectrum.spec();
        let mut u_shape = synth::fourier_solenoidal(grid, tspec, &mut rng);
        let mut th_shape = synth::fourier_scalar(grid, tspec, &mut rng);
        let targets = match t.kind {
            TargetKind::Zero => Targets::zeros(grid),
            TargetKind::Fourier => {
                u_shape.scale(t.u_amplitude);
                th_shape.scale(t.theta_amplitude);
                Targets {
                    u_d: TimeSeries::Constant(u_shape.clone()),
                    theta_d: TimeSeries::Constant(th_shape.clone()),
                    u_t: u_shape,
                    theta_t: th_shape,
                }
            }
            TargetKind::Reachable => {
                let reference = Control::lincomb(1.0 - t.reference_fraction, space.lower(), t.reference_fraction, space.upper());
                let traj = solve_state(&model, &sources, Some((&space, &reference)), &init)?;
                let mut tg = Targets::from_trajectory(&traj);
                if let (TimeSeries::Series(us), TimeSeries::Series(ths)) = (&mut tg.u_d, &mut tg.theta_d) {
                    for (u, th) in us.iter_mut().zip(ths.iter_mut()) {
                        u.axpy(t.noise, &u_shape);
                        th.axpy(t.noise, &th_shape);
                    }
                }
                tg.u_t.axpy(t.noise, &u_shape);
                tg.theta_t.axpy(t.noise, &th_shape);
                tg
            }
        };

        let w = &cfg.weights;
        let weights = ObjectiveWeights {
            alpha1: w.alpha1,
            alpha2: w.alpha2,
            beta1: w.beta1,
            beta2: w.beta2,
            eps1: w.eps1,
            eps2: w.eps2,
        };
        let initial = match k.initial {
            InitialControl::Zero => space.zeros(),
            InitialControl::Midpoint => space.midpoint(),
            InitialControl::Lower => space.lower().clone(),
            InitialControl::Upper => space.upper().clone(),
        };
        let problem = Problem::new(model, sources, init, space, weights, targets)?;
        Ok(Scenario {
            config: cfg.clone(),
            problem,
            initial,
        })
    }
}
