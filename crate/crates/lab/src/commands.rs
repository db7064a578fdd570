//! One function per CLI command. Each writes its artifacts and a
//! `summary.json` and reports whether its built-in checks passed.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use boussinesq_core::boussinesq::{energy_report, solve_state, Warning};
use boussinesq_core::control::Control;
use boussinesq_core::fit::LinearFit;
use boussinesq_core::mms::{run_mms, MmsOptions};
use boussinesq_core::objective::Problem;
use boussinesq_core::optimizer::{bang_bang_fraction, measure_condition_estimate, pointwise_sign_check, projected_gradient, OptResult};
use boussinesq_core::stability::{
    growth_probe, second_order_stability_check, stability_sweep, tikhonov_path, tracking_margin, GrowthOptions, GrowthVariant,
    SecondOrderReport, SweepPlan,
};
use boussinesq_core::verify::{duality_instance, random_direction, taylor_remainders};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Family};
use crate::error::LabError;
use crate::exec::Rayon;
use crate::output::{col, num, RunManifest, RunOutput};
use crate::scenario::{self, Scenario};

pub const DUALITY_TOL: f64 = 1e-11;
pub const MMS_MIN_ORDER: f64 = 1.8;
pub const NO_FIT: &str = "no reliable fit";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Optimize,
    TaylorTest,
    DualityCheck,
    Mms,
    TikhonovPath,
    StabilitySweep,
    GrowthProbe,
    SecondOrderCheck,
    MeasureCondition,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::Solve,
        Command::Optimize,
        Command::TaylorTest,
        Command::DualityCheck,
        Command::Mms,
        Command::TikhonovPath,
        Command::StabilitySweep,
        Command::GrowthProbe,
        Command::SecondOrderCheck,
        Command::MeasureCondition,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Optimize => "optimize",
            Command::TaylorTest => "taylor-test",
            Command::DualityCheck => "duality-check",
            Command::Mms => "mms",
            Command::TikhonovPath => "tikhonov-path",
            Command::StabilitySweep => "stability-sweep",
            Command::GrowthProbe => "growth-probe",
            Command::SecondOrderCheck => "second-order-check",
            Command::MeasureCondition => "measure-condition",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, LabError> {
        Command::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Command::ALL.iter().map(|c| c.name()).collect();
            LabError::Usage(format!("unknown command `{s}`; expected one of: {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub threads: usize,
    pub snapshot_stride: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            threads: 1,
            snapshot_stride: None,
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub manifest: RunManifest,
    pub summary: Value,
    /// Built-in checks of the command passed (always true for commands
    /// without checks).
    pub passed: bool,
    /// Short human-readable lines for the terminal.
    pub lines: Vec<String>,
}

/// Fit as JSON; exponents with `R^2 < 0.8` are withheld.
pub fn fit_json(fit: Option<LinearFit>) -> Value {
    match fit {
        Some(f) if f.is_reliable() => json!({
            "slope": f.slope, "intercept": f.intercept, "r2": f.r2, "points": f.points, "reliable": true,
            "display": format!("{:.4} (R^2 = {:.4})", f.slope, f.r2),
        }),
        Some(f) => json!({
            "slope": Value::Null, "r2": f.r2, "points": f.points, "reliable": false, "display": NO_FIT,
        }),
        None => json!({ "slope": Value::Null, "r2": Value::Null, "points": 0, "reliable": false, "display": NO_FIT }),
    }
}

pub fn fit_display(fit: Option<LinearFit>) -> String {
    match fit {
        Some(f) if f.is_reliable() => format!("{:.4} (R^2 = {:.4})", f.slope, f.r2),
        _ => NO_FIT.into(),
    }
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    out: RunOutput,
    opts: RunOptions,
    lines: Vec<String>,
}

/// Validates, runs and writes `manifest.json` last.
pub fn run_command(cmd: Command, cfg: &ExperimentConfig, out_dir: &Path, opts: RunOptions) -> Result<Outcome, LabError> {
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(LabError::Invalid(v));
    }
    let mut out = RunOutput::create(out_dir, cmd.name(), &cfg.hash(), cfg.seed)?;
    out.write_bytes("config.json", format!("{}\n", cfg.to_json()).as_bytes())?;
    let mut ctx = Ctx {
        cfg,
        out,
        opts,
        lines: Vec::new(),
    };
    let (summary, passed) = match cmd {
        Command::Solve => solve(&mut ctx)?,
        Command::Optimize => optimize(&mut ctx)?,
        Command::TaylorTest => taylor(&mut ctx)?,
        Command::DualityCheck => duality(&mut ctx)?,
        Command::Mms => mms(&mut ctx)?,
        Command::TikhonovPath => tikhonov(&mut ctx)?,
        Command::StabilitySweep => sweep(&mut ctx)?,
        Command::GrowthProbe => growth(&mut ctx)?,
        Command::SecondOrderCheck => second_order(&mut ctx)?,
        Command::MeasureCondition => measure(&mut ctx)?,
    };
    let mut summary = summary;
    summary["command"] = json!(cmd.name());
    summary["passed"] = json!(passed);
    let notes = caveats(cmd, cfg);
    if !notes.is_empty() {
        summary["caveats"] = json!(notes);
    }
    ctx.out.write_json("summary.json", &summary)?;
    let Ctx { out, lines, .. } = ctx;
    let manifest = out.finish()?;
    Ok(Outcome {
        summary,
        manifest,
        passed,
        lines,
    })
}

const CORNERS: &str = "rectangular domain with square corners; fitted exponents may include corner effects";
const INITIAL_NORM: &str =
    "initial-data perturbations are measured by the L2 norm of value plus gradient, a proxy for the trace-space norm";
const DIRECTIONS: &str = "growth directions are sampled over all admissible controls; restriction to a critical cone is not implemented";

/// Known modelling limitations that affect how a command's numbers should be read.
fn caveats(cmd: Command, cfg: &ExperimentConfig) -> Vec<&'static str> {
    let mut v = Vec::new();
    if matches!(
        cmd,
        Command::MeasureCondition | Command::TikhonovPath | Command::StabilitySweep | Command::GrowthProbe | Command::SecondOrderCheck
    ) {
        v.push(CORNERS);
    }
    let initial = |f: Family| f == Family::Initial;
    if (cmd == Command::StabilitySweep && initial(cfg.sweep.family))
        || (cmd == Command::SecondOrderCheck && initial(cfg.second_order.family))
    {
        v.push(INITIAL_NORM);
    }
    if matches!(cmd, Command::GrowthProbe | Command::SecondOrderCheck) {
        v.push(DIRECTIONS);
    }
    v
}

fn warning_json(w: &[Warning]) -> Value {
    Value::Array(
        w.iter()
            .map(|w| match w {
                Warning::Cfl { courant } => json!({"kind": "cfl", "courant": courant}),
                Warning::InitialDivergence { max_div } => json!({"kind": "initial_divergence", "max_div": max_div}),
                Warning::ControlOutsideBox => json!({"kind": "control_outside_box"}),
                Warning::TerminalDivergence { max_div } => json!({"kind": "terminal_divergence", "max_div": max_div}),
            })
            .collect(),
    )
}

// ------------------------------------------------------------------ solve

fn solve(ctx: &mut Ctx<'_>) -> Result<(Value, bool), LabError> {
    let sc = Scenario::build(ctx.cfg)?;
    let p = &sc.problem;
    let act = Some((&p.space, &sc.initial));
    let traj = solve_state(&p.model, &p.sources, act, &p.init)?;
    let rep = energy_report(&p.model, &traj, &p.sources, act, &p.init)?;
    let cols = [
        col("k", "1"),
        col("t", "s"),
        col("ke_u", "m^4 s^-2"),
        col("ke_theta", "K^2 m^2"),
        col("enstrophy_u", "m^2 s^-2"),
        col("grad_theta", "K^2"),
    ];
    let rows = rep.rows.iter().map(|r| {
        vec![
            r.k.to_string(),
            num(r.t),
            num(r.ke_u),
            num(r.ke_theta),
            num(r.enstrophy_u),
            num(r.grad_theta),
        ]
    });
    ctx.out.write_csv("energy.csv", &cols, rows.collect::<Vec<_>>())?;
    snapshots(ctx, p, &traj.u, &traj.theta)?;
    let grid = p.grid();
    ctx.out.write_field_csv("theta_final.csv", grid, &traj.theta[p.model.nt()], "K")?;
    ctx.lines.push(format!(
        "max energy {:e}, dissipation {:e}, energy ratio {:e}",
        rep.max_energy, rep.dissipation, rep.ratio
    ));
    Ok((
        json!({
            "max_energy": rep.max_energy,
            "dissipation": rep.dissipation,
            "data_norm": rep.data_norm,
            "energy_ratio": rep.ratio,
            "warnings": warning_json(&traj.warnings),
        }),
        true,
    ))
}

fn snapshots(
    ctx: &mut Ctx<'_>,
    p: &Problem,
    u: &[boussinesq_core::grid::VectorField2],
    theta: &[boussinesq_core::grid::ScalarField],
) -> Result<(), LabError> {
    if !ctx.cfg.output.vtk {
        return Ok(());
    }
    let nt = p.model.nt();
    let stride = ctx.opts.snapshot_stride.unwrap_or(ctx.cfg.output.snapshot_stride);
    let mut levels: Vec<usize> = if stride == 0 { vec![0] } else { (0..=nt).step_by(stride).collect() };
    if levels.last() != Some(&nt) {
        levels.push(nt);
    }
    for k in levels {
        let t = p.model.time().time(k);
        ctx.out.write_vtk(&format!("snapshot_{k:05}.vtk"), p.grid(), &u[k], &theta[k], t)?;
    }
    Ok(())
}

// ------------------------------------------------------------------ optimize

/// The unregularized-by-zeta base solve shared by the stability commands.
pub fn base_solution(sc: &Scenario) -> Result<OptResult, LabError> {
    Ok(projected_gradient(&sc.problem, &sc.initial, &sc.config.optimizer.options(), None)?)
}

fn write_iterates(ctx: &mut Ctx<'_>, name: &str, r: &OptResult) -> Result<(), LabError> {
    let cols = [
        col("iter", "1"),
        col("J", "1"),
        col("kkt", "1"),
        col("step", "1"),
        col("backtracks", "1"),
        col("bang_fraction_q", "1"),
        col("bang_fraction_theta", "1"),
    ];
    let rows = r.records.iter().map(|x| {
        vec![
            x.iter.to_string(),
            num(x.j),
            num(x.kkt),
            num(x.step),
            x.backtracks.to_string(),
            num(x.bang_fraction.q),
            num(x.bang_fraction.theta),
        ]
    });
    ctx.out.write_csv(name, &cols, rows.collect::<Vec<_>>())?;
    Ok(())
}

fn write_control(ctx: &mut Ctx<'_>, p: &Problem, c: &Control, g: &Control) -> Result<(), LabError> {
    let space = &p.space;
    let grid = p.grid();
    let nx = grid.nx();
    let (nq, nh) = (space.region_q().len(), space.region_h().len());
    let mut rows = Vec::new();
    for n in 0..space.nt() {
        for (k, &cell) in space.region_q().cells().iter().enumerate() {
            let (i, j) = (cell % nx, cell / nx);
            let (x, y) = grid.cell_center(i, j);
            let b = (n * nq + k) * 2;
            rows.push(vec![
                n.to_string(),
                i.to_string(),
                j.to_string(),
                num(x),
                num(y),
                num(c.q[b]),
                num(c.q[b + 1]),
                num(g.q[b]),
                num(g.q[b + 1]),
            ]);
        }
    }
    let cols = [
        col("n", "1"),
        col("i", "1"),
        col("j", "1"),
        col("x", "m"),
        col("y", "m"),
        col("q1", "m s^-2"),
        col("q2", "m s^-2"),
        col("grad_q1", "1"),
        col("grad_q2", "1"),
    ];
    ctx.out.write_csv("control_q.csv", &cols, rows)?;
    let mut rows = Vec::new();
    for n in 0..space.nt() {
        for (k, &cell) in space.region_h().cells().iter().enumerate() {
            let (i, j) = (cell % nx, cell / nx);
            let (x, y) = grid.cell_center(i, j);
            let b = n * nh + k;
            rows.push(vec![
                n.to_string(),
                i.to_string(),
                j.to_string(),
                num(x),
                num(y),
                num(c.theta[b]),
                num(g.theta[b]),
            ]);
        }
    }
    let cols = [
        col("n", "1"),
        col("i", "1"),
        col("j", "1"),
        col("x", "m"),
        col("y", "m"),
        col("Theta", "K s^-1"),
        col("grad_Theta", "1"),
    ];
    ctx.out.write_csv("control_theta.csv", &cols, rows)?;
    Ok(())
}

fn opt_json(r: &OptResult) -> Value {
    json!({
        "J": r.value,
        "kkt": r.kkt(),
        "iterations": r.iterations,
        "termination": r.termination.as_str(),
        "converged": r.converged(),
        "projected_start": r.projected_start,
        "bang_fraction_q": r.bang_fraction.q,
        "bang_fraction_theta": r.bang_fraction.theta,
        "solution": "a local solution",
    })
}

fn optimize(ctx: &mut Ctx<'_>) -> Result<(Value, bool), LabError> {
    let sc = Scenario::build(ctx.cfg)?;
    let p = &sc.problem;
    let r = base_solution(&sc)?;
    write_iterates(ctx, "iterates.csv", &r)?;
    write_control(ctx, p, &r.control, &r.gradient.control)?;
    let st = &r.evaluation.state;
    snapshots(ctx, p, &st.u, &st.theta)?;
    let viol = pointwise_sign_check(&p.space, &r.control, &r.gradient.control, ctx.cfg.sign_check.options());
    ctx.lines.push(format!(
        "J = {:e}, kkt = {:e}, {} iterations ({}), a local solution",
        r.value,
        r.kkt(),
        r.iterations,
        r.termination.as_str()
    ));
    let mut s = opt_json(&r);
    s["sign_violation_mass"] = json!(viol.mass.total());
    s["sign_violation_count"] = json!(viol.count.0 + viol.count.1);
    let t = &r.evaluation.terms;
    s["terms"] = serde_json::to_value(TermsJson::from(t)).expect("terms serialize");
    Ok((s, true))
}

#[derive(Serialize)]
struct TermsJson {
    tracking_u: f64,
    tracking_theta: f64,
    terminal_u: f64,
    terminal_theta: f64,
    tikhonov: f64,
    tilt: f64,
}

impl From<&boussinesq_core::objective::ObjectiveTerms> for TermsJson {
    fn from(t: &boussinesq_core::objective::ObjectiveTerms) -> Self {
        TermsJson {
            tracking_u: t.tracking_u,
            tracking_theta: t.tracking_theta,
            terminal_u: t.terminal_u,
            terminal_theta: t.terminal_theta,
            tikhonov: t.tikhonov,
            tilt: t.tilt,
        }
    }
}

// ------------------------------------------------------------------ checks

fn taylor(ctx: &mut Ctx<'_>) -> Result<(Value, bool), LabError> {
    let sc = Scenario::build(ctx.cfg)?;
    let p = &sc.problem;
    let tc = &ctx.cfg.taylor;
    let mut rows = Vec::new();
    let mut per_seed = Vec::new();
    let mut passed = true;
    for &seed in &tc.seeds {
        let (rho, delta) = taylor_pair(p, seed, tc.point_scale, tc.direction_scale);
        let r = taylor_remainders(p, &rho, &delta, &tc.steps)?;
        for (i, t) in r.steps.iter().enumerate() {
            rows.push(vec![seed.to_string(), num(*t), num(r.first[i]), num(r.second[i])]);
        }
        let s1 = r.first_fit.map_or(f64::NAN, |f| f.slope);
        let s2 = r.second_fit.map_or(f64::NAN, |f| f.slope);
        let ok1 = (s1 - 2.0).abs() <= 0.1;
        let ok2 = (s2 - 3.0).abs() <= 0.2;
        passed &= ok1 && ok2;
        ctx.lines
            .push(format!("seed {seed}: gradient slope {s1:.4}, second-variation slope {s2:.4}"));
        per_seed.push(json!({
            "seed": seed, "J": r.value, "directional": r.directional, "second_variation": r.second_variation,
            "gradient_slope": finite_or_null(s1), "gradient_fit": fit_json(r.first_fit), "gradient_ok": ok1,
            "second_slope": finite_or_null(s2), "second_fit": fit_json(r.second_fit), "second_ok": ok2,
        }));
    }
    let cols = [
        col("seed", "1"),
        col("t", "1"),
        col("first_remainder", "1"),
        col("second_remainder", "1"),
    ];
    ctx.out.write_csv("taylor.csv", &cols, rows)?;
    Ok((json!({ "seeds": per_seed, "expected_slopes": [2.0, 3.0] }), passed))
}

/// Seeded base point and direction for the Taylor test.
pub fn taylor_pair(p: &Problem, seed: u64, point_scale: f64, direction_scale: f64) -> (Control, Control) {
    let mut rho = random_direction(p, seed.wrapping_mul(2));
    rho.scale(point_scale);
    let mut delta = random_direction(p, seed.wrapping_mul(2).wrapping_add(1));
    delta.scale(direction_scale);
    (rho, delta)
}

fn duality(ctx: &mut Ctx<'_>) -> Result<(Value, bool), LabError> {
    let model = scenario::model(ctx.cfg)?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for i in 0..ctx.cfg.duality.instances {
        let seed = ctx.cfg.seed.wrapping_add(i as u64);
        let d = duality_instance(&model, seed)?;
        worst = worst.max(d.residual);
        rows.push(vec![i.to_string(), seed.to_string(), num(d.lhs), num(d.rhs), num(d.residual)]);
    }
    let cols = [
        col("instance", "1"),
        col("seed", "1"),
        col("lhs", "1"),
        col("rhs", "1"),
        col("residual", "1"),
    ];
    ctx.out.write_csv("duality.csv", &cols, rows)?;
    let passed = worst <= DUALITY_TOL;
    ctx.lines
        .push(format!("max relative duality residual {worst:e} (tolerance {DUALITY_TOL:e})"));
    Ok((
        json!({ "residual": worst, "tolerance": DUALITY_TOL, "instances": ctx.cfg.duality.instances }),
        passed,
    ))
}

pub fn mms_options(cfg: &ExperimentConfig) -> MmsOptions {
    let m = &cfg.mms;
    let mut params = scenario::physical_params(cfg);
    params.nu = m.nu;
    params.kappa = m.kappa;
    MmsOptions {
        sizes: m.sizes.clone(),
        t_final: m.t_final,
        dt_factor: m.dt_factor,
        params,
    }
}

fn mms(ctx: &mut Ctx<'_>) -> Result<(Value, bool), LabError> {
    let r = run_mms(&mms_options(ctx.cfg))?;
    let cols = [
        col("n", "1"),
        col("nt", "1"),
        col("h", "m"),
        col("dt", "s"),
        col("error_u", "1"),
        col("error_theta", "1"),
        col("error", "1"),
    ];
    let rows = r.levels.iter().map(|l| {
        vec![
            l.n.to_string(),
            l.nt.to_string(),
            num(l.h),
            num(l.dt),
            num(l.error_u),
            num(l.error_theta),
            num(l.error),
        ]
    });
    ctx.out.write_csv("mms.csv", &cols, rows.collect::<Vec<_>>())?;
    let min_order = r.orders.iter().copied().fold(f64::INFINITY, f64::min);
    let passed = min_order >= MMS_MIN_ORDER;
    ctx.lines
        .push(format!("observed orders {:?}, fitted order {}", r.orders, fit_display(r.fit)));
    Ok((
        json!({ "orders": r.orders, "min_order": min_order, "fit": fit_json(r.fit), "required_order": MMS_MIN_ORDER }),
        passed,
    ))
}

// ------------------------------------------------------------------ stability

fn measure(ctx: &mut Ctx<'_>) -> Result<(Value, bool), LabError> {
    let sc = Scenario::build(ctx.cfg)?;
    let p = &sc.problem;
    let base = base_solution(&sc)?;
    write_iterates(ctx, "iterates.csv", &base)?;
    let m = measure_condition_estimate(&p.space, &base.gradient.adjoint, &ctx.cfg.measure.eps_grid)?;
    let rows = m.eps.iter().enumerate().map(|(i, e)| {
        vec![
            num(*e),
            m.q.counts[i].to_string(),
            num(m.q.mass[i]),
            m.theta.counts[i].to_string(),
            num(m.theta.mass[i]),
        ]
    });
    let cols = [
        col("eps", "1"),
        col("count_q", "1"),
        col("mass_q", "m^2 s"),
        col("count_theta", "1"),
        col("mass_theta", "m^2 s"),
    ];
    ctx.out.write_csv("measure.csv", &cols, rows.collect::<Vec<_>>())?;
    let bang = bang_bang_fraction(&p.space, &base.control, ctx.cfg.measure.bang_band)?;
    let viol = pointwise_sign_check(&p.space, &base.control, &base.gradient.control, ctx.cfg.sign_check.options());
    ctx.lines.push(format!("mu_q: {}", fit_display(m.q.fit)));
    ctx.lines.push(format!("mu_theta: {}", fit_display(m.theta.fit)));
    Ok((
        json!({
            "base": opt_json(&base),
            "mu_q": fit_json(m.q.fit), "mu_theta": fit_json(m.theta.fit),
            "vacuous_q": m.q.vacuous(), "vacuous_theta": m.theta.vacuous(),
            "bang_fraction_q": bang.q, "bang_fraction_theta": bang.theta,
            "sign_violation_mass": viol.mass.total(),
            "space_time_measure": p.model.time().t_final * p.grid().area(),
        }),
        true,
    ))
}

fn tikhonov(ctx: &mut Ctx<'_>) -> Result<(Value, bool), LabError> {
    let sc = Scenario::build(ctx.cfg)?;
    let p = &sc.problem;
    let opts = ctx.cfg.optimizer.options();
    let base = base_solution(&sc)?;
    let path = tikhonov_path(p, &base, &ctx.cfg.tikhonov.eps_grid, &opts)?;
    let m = measure_condition_estimate(&p.space, &base.gradient.adjoint, &ctx.cfg.measure.eps_grid)?;
    let rows = path.points.iter().map(|x| {
        vec![
            num(x.eps),
            num(x.distance),
            num(x.value),
            num(x.kkt),
            x.iterations.to_string(),
            x.termination.as_str().to_string(),
        ]
    });
    let cols = [
        col("eps", "1"),
        col("distance_l1", "1"),
        col("J", "1"),
        col("kkt", "1"),
        col("iterations", "1"),
        col("termination", "1"),
    ];
    ctx.out.write_csv("tikhonov.csv", &cols, rows.collect::<Vec<_>>())?;
    let inv = |f: Option<LinearFit>| match f {
        Some(f) if f.is_reliable() && f.slope != 0.0 => json!(1.0 / f.slope),
        _ => json!(NO_FIT),
    };
    ctx.lines.push(format!("distance slope: {}", fit_display(path.fit)));
    ctx.lines
        .push(format!("mu_q: {}, mu_theta: {}", fit_display(m.q.fit), fit_display(m.theta.fit)));
    Ok((
        json!({
            "base": opt_json(&base),
            "fit": fit_json(path.fit),
            "diameter": path.diameter,
            "inverse_mu_q": inv(m.q.fit),
            "inverse_mu_theta": inv(m.theta.fit),
        }),
        true,
    ))
}

pub fn sweep_plan(cfg: &ExperimentConfig) -> SweepPlan {
    let s = &cfg.sweep;
    let mut plan = SweepPlan::new(s.family.core(), s.magnitudes.clone(), cfg.seed);
    plan.spec = s.spectrum.spec();
    plan.warm_start = s.warm_start;
    plan.include_zero = s.include_zero;
    plan.neighborhood = s.neighborhood;
    plan.norm_exponent = s.norm_exponent;
    plan
}

fn sweep(ctx: &mut Ctx<'_>) -> Result<(Value, bool), LabError> {
    let sc = Scenario::build(ctx.cfg)?;
    let p = &sc.problem;
    let opts = ctx.cfg.optimizer.options();
    let base = base_solution(&sc)?;
    let exec = Rayon::new(ctx.opts.threads)?;
    let rep = stability_sweep(p, &base, &sweep_plan(ctx.cfg), &opts, &exec)?;
    let rows = rep.records.iter().map(|r| {
        vec![
            num(r.magnitude),
            num(r.control_distance),
            num(r.state_distance),
            num(r.velocity_sup_distance),
            num(r.adjoint_gap),
            num(r.kkt),
            r.iterations.to_string(),
            r.termination.as_str().to_string(),
            r.outside_neighborhood.to_string(),
            r.local.to_string(),
            r.seed.to_string(),
        ]
    });
    let cols = [
        col("magnitude", "1"),
        col("control_distance", "1"),
        col("state_distance", "1"),
        col("velocity_sup_distance", "m s^-1"),
        col("adjoint_gap", "1"),
        col("kkt", "1"),
        col("iterations", "1"),
        col("termination", "1"),
        col("outside_neighborhood", "1"),
        col("local", "1"),
        col("seed", "1"),
    ];
    ctx.out.write_csv("sweep.csv", &cols, rows.collect::<Vec<_>>())?;
    let failures: Vec<Value> = rep
        .failures
        .iter()
        .map(|(m, e)| json!({"magnitude": m, "error": e.to_string()}))
        .collect();
    ctx.lines
        .push(format!("control-distance exponent: {}", fit_display(rep.control_fit)));
    ctx.lines.push(format!("state-distance exponent: {}", fit_display(rep.state_fit)));
    Ok((
        json!({
            "base": opt_json(&base),
            "family": ctx.cfg.sweep.family.core().as_str(),
            "control_fit": fit_json(rep.control_fit),
            "state_fit": fit_json(rep.state_fit),
            "state_control_constant": rep.state_control_constant,
            "sup_control_constant": rep.sup_control_constant,
            "neighborhood": rep.neighborhood,
            "outside_neighborhood": rep.records.iter().filter(|r| r.outside_neighborhood).count(),
            "failures": failures,
            "threads": exec.threads(),
        }),
        rep.failures.is_empty(),
    ))
}

pub fn growth_options(cfg: &ExperimentConfig) -> GrowthOptions {
    let g = &cfg.growth;
    GrowthOptions {
        n_samples: g.n_samples,
        radii: g.radii.clone(),
        seed: cfg.seed,
        tau: g.tau,
        mu: g.mu,
        variant: g.variant.core(),
        spec: g.spectrum.spec(),
    }
}

fn write_samples(ctx: &mut Ctx<'_>, samples: &[boussinesq_core::stability::GrowthSample]) -> Result<(), LabError> {
    let rows = samples.iter().map(|s| {
        vec![
            num(s.radius),
            s.sample.to_string(),
            s.vertex.to_string(),
            num(s.l1_distance),
            num(s.first_variation),
            num(s.second_variation),
            num(s.lhs),
            num(s.rhs),
        ]
    });
    let cols = [
        col("radius", "1"),
        col("sample", "1"),
        col("vertex", "1"),
        col("l1_distance", "1"),
        col("first_variation", "1"),
        col("second_variation", "1"),
        col("lhs", "1"),
        col("rhs", "1"),
    ];
    ctx.out.write_csv("samples.csv", &cols, rows.collect::<Vec<_>>())?;
    Ok(())
}

fn ratios_json(r: &[(f64, f64)]) -> Value {
    Value::Array(
        r.iter()
            .map(|(a, b)| json!({"radius": a, "min_ratio": finite_or_null(*b)}))
            .collect(),
    )
}

fn growth(ctx: &mut Ctx<'_>) -> Result<(Value, bool), LabError> {
    let sc = Scenario::build(ctx.cfg)?;
    let base = base_solution(&sc)?;
    let rep = growth_probe(&sc.problem, &base, &growth_options(ctx.cfg))?;
    write_samples(ctx, &rep.samples)?;
    ctx.lines.push(format!("tracking margin {:e}", rep.margin));
    for (r, m) in &rep.min_ratio {
        ctx.lines.push(format!("radius {r}: min ratio {m:e}"));
    }
    Ok((
        json!({
            "base": opt_json(&base),
            "variant": match ctx.cfg.growth.variant.core() { GrowthVariant::Control => "control", GrowthVariant::State => "state" },
            "min_ratio": ratios_json(&rep.min_ratio),
            "control_fit": fit_json(rep.control_fit),
            "margin": rep.margin,
            "adjoint_gradient": rep.adjoint_gradient,
        }),
        true,
    ))
}

/// Second-order check at `base` with a perturbation of size
/// `margin_fraction` times the tracking margin.
pub fn second_order_report(sc: &Scenario, base: &OptResult) -> Result<SecondOrderReport, LabError> {
    let (p, cfg) = (&sc.problem, &sc.config);
    let so = &cfg.second_order;
    let (margin, _) = tracking_margin(p, &base.gradient.adjoint);
    let s = cfg.sweep.norm_exponent;
    let magnitude = so.margin_fraction * margin.max(0.0);
    let dir = so.family.core().direction(p, cfg.seed, cfg.sweep.spectrum.spec(), s)?;
    let zeta = dir.scaled(magnitude);
    let mut g = growth_options(cfg);
    g.n_samples = so.n_samples;
    g.radii = so.radii.clone();
    g.variant = GrowthVariant::State;
    Ok(second_order_stability_check(p, base, &zeta, &g, &cfg.optimizer.options(), s)?)
}

fn second_order(ctx: &mut Ctx<'_>) -> Result<(Value, bool), LabError> {
    let sc = Scenario::build(ctx.cfg)?;
    let base = base_solution(&sc)?;
    let rep = second_order_report(&sc, &base)?;
    write_samples(ctx, &rep.samples)?;
    let min = rep.overall_min_ratio();
    match &rep.skipped {
        Some(why) => ctx.lines.push(format!("skipped: {why}")),
        None => ctx.lines.push(format!(
            "margin {:e}, perturbation {:e}, min ratio {}",
            rep.margin,
            rep.perturbation_norm,
            min.map_or("none".into(), |m| format!("{m:e}"))
        )),
    }
    let passed = rep.skipped.is_some() || min.is_some_and(|m| m > 0.0);
    Ok((
        json!({
            "base": opt_json(&base),
            "skipped": rep.skipped,
            "margin": rep.margin,
            "perturbation_norm": rep.perturbation_norm,
            "smallness": rep.smallness,
            "perturbed_kkt": finite_or_null(rep.perturbed_kkt),
            "perturbed_termination": rep.perturbed_termination.map(|t| t.as_str()),
            "control_shift": rep.control_shift,
            "margin_degradation": rep.margin_degradation,
            "min_ratio": ratios_json(&rep.min_ratio),
            "overall_min_ratio": min,
        }),
        passed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for c in Command::ALL {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
        }
        assert_eq!("frobnicate".parse::<Command>().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn withheld_exponent() {
        let f = LinearFit {
            slope: 1.3,
            intercept: 0.0,
            r2: 0.5,
            points: 4,
        };
        assert_eq!(fit_json(Some(f))["display"], NO_FIT);
        assert!(fit_json(Some(f))["slope"].is_null());
        assert_eq!(fit_display(None), NO_FIT);
    }
}
