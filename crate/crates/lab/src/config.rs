//! Experiment configuration: a single JSON document with every section
//! optional. Missing keys take the documented defaults; unknown keys are
//! rejected.

use std::fmt;
use std::path::Path;

use boussinesq_core::optimizer::{OptOptions, SignCheckOptions, DEFAULT_BANG_BAND};
use boussinesq_core::stability::{GrowthVariant, PerturbationFamily};
use boussinesq_core::synth::FourierSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::LabError;

/// One violated constraint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: String,
    pub grid: GridSection,
    pub time: TimeSection,
    pub physics: PhysicsSection,
    pub weights: WeightsSection,
    pub data: DataSection,
    pub targets: TargetSection,
    pub controls: ControlSection,
    pub optimizer: OptimizerSection,
    pub sign_check: SignCheckSection,
    pub measure: MeasureSection,
    pub tikhonov: TikhonovSection,
    pub sweep: SweepSection,
    pub growth: GrowthSection,
    pub second_order: SecondOrderSection,
    pub taylor: TaylorSection,
    pub duality: DualitySection,
    pub mms: MmsSection,
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            output_dir: "out".into(),
            grid: GridSection::default(),
            time: TimeSection::default(),
            physics: PhysicsSection::default(),
            weights: WeightsSection::default(),
            data: DataSection::default(),
            targets: TargetSection::default(),
            controls: ControlSection::default(),
            optimizer: OptimizerSection::default(),
            sign_check: SignCheckSection::default(),
            measure: MeasureSection::default(),
            tikhonov: TikhonovSection::default(),
            sweep: SweepSection::default(),
            growth: GrowthSection::default(),
            second_order: SecondOrderSection::default(),
            taylor: TaylorSection::default(),
            duality: DualitySection::default(),
            mms: MmsSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            nx: 16,
            ny: 16,
            lx: 1.0,
            ly: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub t_final: f64,
    pub nt: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection { t_final: 0.5, nt: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsSection {
    pub nu: f64,
    pub kappa: f64,
    pub buoyancy_dir: [f64; 2],
    /// Transport terms `(u.grad)u` and `u.grad theta`.
    pub advection: bool,
    /// Buoyancy coupling `e theta` in the momentum equation.
    pub buoyancy: bool,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        PhysicsSection {
            nu: 0.05,
            kappa: 0.05,
            buoyancy_dir: [0.0, 1.0],
            advection: true,
            buoyancy: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsSection {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps1: f64,
    pub eps2: f64,
}

impl Default for WeightsSection {
    fn default() -> Self {
        WeightsSection {
            alpha1: 1.0,
            alpha2: 1.0,
            beta1: 0.0,
            beta2: 0.0,
            eps1: 0.0,
            eps2: 0.0,
        }
    }
}

/// Seeded smooth data. Every amplitude scales a sine series with the shared
/// spectrum; zero switches the field off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub force_amplitude: f64,
    pub heat_amplitude: f64,
    pub u0_amplitude: f64,
    pub theta0_amplitude: f64,
    pub spectrum: SpectrumSection,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            force_amplitude: 0.0,
            heat_amplitude: 0.0,
            u0_amplitude: 0.0,
            theta0_amplitude: 0.0,
            spectrum: SpectrumSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub modes: usize,
    pub decay: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        let s = FourierSpec::default();
        SpectrumSection {
            modes: s.modes,
            decay: s.decay,
        }
    }
}

impl SpectrumSection {
    pub fn spec(&self) -> FourierSpec {
        FourierSpec {
            modes: self.modes,
            decay: self.decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// Zero desired states.
    Zero,
    /// Steady seeded sine series.
    Fourier,
    /// The state driven by a reference control plus seeded noise.
    Reachable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    pub kind: TargetKind,
    /// Fourier kind: amplitudes of the velocity and temperature targets.
    pub u_amplitude: f64,
    pub theta_amplitude: f64,
    /// Reachable kind: the reference control is `lo + fraction (hi - lo)`.
    pub reference_fraction: f64,
    /// Reachable kind: amplitude of the steady noise added to the state.
    pub noise: f64,
    pub spectrum: SpectrumSection,
}

impl Default for TargetSection {
    fn default() -> Self {
        TargetSection {
            kind: TargetKind::Zero,
            u_amplitude: 0.0,
            theta_amplitude: 0.0,
            reference_fraction: 0.5,
            noise: 0.0,
            spectrum: SpectrumSection::default(),
        }
    }
}

/// Axis-aligned rectangle in physical coordinates; snapped outwards to cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialControl {
    Zero,
    Midpoint,
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    pub q_region: Rect,
    pub theta_region: Rect,
    /// Bounds of `(q1, q2)`.
    pub q_lo: [f64; 2],
    pub q_hi: [f64; 2],
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub initial: InitialControl,
}

impl Default for ControlSection {
    fn default() -> Self {
        ControlSection {
            q_region: Rect {
                x0: 0.25,
                x1: 0.75,
                y0: 0.25,
                y1: 0.75,
            },
            theta_region: Rect {
                x0: 0.0,
                x1: 0.5,
                y0: 0.0,
                y1: 0.5,
            },
            q_lo: [-1.0, -1.0],
            q_hi: [1.0, 1.0],
            theta_lo: -1.0,
            theta_hi: 1.0,
            initial: InitialControl::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub max_iters: usize,
    pub kkt_tol: f64,
    pub initial_step: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub step_min: f64,
    pub step_max: f64,
    pub nonmonotone_window: usize,
    pub stagnation_window: usize,
    pub stagnation_tol: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let o = OptOptions::default();
        OptimizerSection {
            max_iters: o.max_iters,
            kkt_tol: o.kkt_tol,
            initial_step: o.initial_step,
            armijo: o.armijo,
            backtrack: o.backtrack,
            max_backtracks: o.max_backtracks,
            step_min: o.step_min,
            step_max: o.step_max,
            nonmonotone_window: o.nonmonotone_window,
            stagnation_window: o.stagnation_window,
            stagnation_tol: o.stagnation_tol,
        }
    }
}

impl OptimizerSection {
    pub fn options(&self) -> OptOptions {
        OptOptions {
            max_iters: self.max_iters,
            kkt_tol: self.kkt_tol,
            initial_step: self.initial_step,
            armijo: self.armijo,
            backtrack: self.backtrack,
            max_backtracks: self.max_backtracks,
            step_min: self.step_min,
            step_max: self.step_max,
            nonmonotone_window: self.nonmonotone_window,
            stagnation_window: self.stagnation_window,
            stagnation_tol: self.stagnation_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignCheckSection {
    pub tol: f64,
    pub band: f64,
}

impl Default for SignCheckSection {
    fn default() -> Self {
        let s = SignCheckOptions::default();
        SignCheckSection { tol: s.tol, band: s.band }
    }
}

impl SignCheckSection {
    pub fn options(&self) -> SignCheckOptions {
        SignCheckOptions {
            tol: self.tol,
            band: self.band,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureSection {
    /// Increasing thresholds for `|{|adjoint| <= eps}|`.
    pub eps_grid: Vec<f64>,
    pub bang_band: f64,
}

impl Default for MeasureSection {
    fn default() -> Self {
        MeasureSection {
            eps_grid: vec![1e-5, 2e-5, 5e-5, 1e-4, 2e-4, 5e-4, 1e-3, 2e-3, 5e-3, 1e-2],
            bang_band: DEFAULT_BANG_BAND,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TikhonovSection {
    /// Strictly decreasing, `>= 0`; a trailing zero re-solves the base problem.
    pub eps_grid: Vec<f64>,
}

impl Default for TikhonovSection {
    fn default() -> Self {
        TikhonovSection {
            eps_grid: vec![1e-2, 5e-3, 2e-3, 1e-3, 5e-4, 2e-4, 1e-4, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Tilt,
    Source,
    Target,
    Initial,
}

impl Family {
    pub fn core(self) -> PerturbationFamily {
        match self {
            Family::Tilt => PerturbationFamily::Tilt,
            Family::Source => PerturbationFamily::Source,
            Family::Target => PerturbationFamily::Target,
            Family::Initial => PerturbationFamily::Initial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub family: Family,
    /// Strictly increasing, at least 5 points spanning 2 decades.
    pub magnitudes: Vec<f64>,
    pub warm_start: bool,
    pub include_zero: bool,
    /// Trust radius in `L1 x L1`; `null` selects `0.1 M_U |I x w|`.
    pub neighborhood: Option<f64>,
    pub norm_exponent: f64,
    pub spectrum: SpectrumSection,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            family: Family::Tilt,
            magnitudes: vec![1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2],
            warm_start: true,
            include_zero: true,
            neighborhood: None,
            norm_exponent: 4.0,
            spectrum: SpectrumSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Control,
    State,
}

impl Variant {
    pub fn core(self) -> GrowthVariant {
        match self {
            Variant::Control => GrowthVariant::Control,
            Variant::State => GrowthVariant::State,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthSection {
    pub n_samples: usize,
    /// Fractions in `(0, 1]` of the step towards each sampled point.
    pub radii: Vec<f64>,
    pub tau: f64,
    pub mu: f64,
    pub variant: Variant,
    pub spectrum: SpectrumSection,
}

impl Default for GrowthSection {
    fn default() -> Self {
        GrowthSection {
            n_samples: 8,
            radii: vec![1.0, 0.3, 0.1, 0.03, 0.01],
            tau: 0.5,
            mu: 1.0,
            variant: Variant::Control,
            spectrum: SpectrumSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecondOrderSection {
    /// `||zeta||_P` as a fraction of the measured tracking margin.
    pub margin_fraction: f64,
    pub family: Family,
    pub n_samples: usize,
    pub radii: Vec<f64>,
}

impl Default for SecondOrderSection {
    fn default() -> Self {
        SecondOrderSection {
            margin_fraction: 0.5,
            family: Family::Tilt,
            n_samples: 8,
            radii: vec![1.0, 0.3, 0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaylorSection {
    pub steps: Vec<f64>,
    /// One test per seed; the seed draws both base point and direction.
    pub seeds: Vec<u64>,
    /// Base point entries are uniform in `[-scale, scale]`.
    pub point_scale: f64,
    pub direction_scale: f64,
}

impl Default for TaylorSection {
    fn default() -> Self {
        TaylorSection {
            steps: vec![1e-1, 1e-2, 1e-3, 1e-4],
            seeds: vec![1, 2, 3],
            point_scale: 1.0,
            direction_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualitySection {
    pub instances: usize,
}

impl Default for DualitySection {
    fn default() -> Self {
        DualitySection { instances: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmsSection {
    pub sizes: Vec<usize>,
    pub t_final: f64,
    /// `dt <= dt_factor h^2`.
    pub dt_factor: f64,
    pub nu: f64,
    pub kappa: f64,
}

impl Default for MmsSection {
    fn default() -> Self {
        let m = boussinesq_core::mms::MmsOptions::default();
        MmsSection {
            sizes: m.sizes,
            t_final: m.t_final,
            dt_factor: m.dt_factor,
            nu: m.params.nu,
            kappa: m.params.kappa,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Write a field snapshot every `snapshot_stride` levels; 0 writes only
    /// the first and last level.
    pub snapshot_stride: usize,
    pub vtk: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            snapshot_stride: 0,
            vtk: true,
        }
    }
}

/// `n` points from `a` to `b`, equally spaced in `log`.
pub fn geometric(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n).map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp()).collect()
}

struct Checker(Vec<Violation>);

impl Checker {
    fn fail(&mut self, path: &str, message: impl Into<String>) {
        self.0.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }

    fn positive(&mut self, path: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.fail(path, format!("{} > 0 (got {v})", leaf(path)));
        }
    }

    fn nonneg(&mut self, path: &str, v: f64) {
        if !(v >= 0.0 && v.is_finite()) {
            self.fail(path, format!("{} >= 0 (got {v})", leaf(path)));
        }
    }

    fn at_least(&mut self, path: &str, v: usize, min: usize) {
        if v < min {
            self.fail(path, format!("{} >= {min} (got {v})", leaf(path)));
        }
    }

    fn open_unit(&mut self, path: &str, v: f64) {
        if !(v > 0.0 && v < 1.0) {
            self.fail(path, format!("0 < {} < 1 (got {v})", leaf(path)));
        }
    }

    fn rect(&mut self, path: &str, r: &Rect, lx: f64, ly: f64) {
        let ok = [r.x0, r.x1, r.y0, r.y1].iter().all(|v| v.is_finite());
        if !ok || !(r.x0 < r.x1 && r.y0 < r.y1) {
            self.fail(path, "rectangle needs x0 < x1 and y0 < y1");
        } else if r.x0 < 0.0 || r.y0 < 0.0 || r.x1 > lx || r.y1 > ly {
            self.fail(path, format!("rectangle must lie in [0, {lx}] x [0, {ly}]"));
        }
    }

    fn spectrum(&mut self, path: &str, s: &SpectrumSection) {
        self.at_least(&format!("{path}.modes"), s.modes, 1);
        self.nonneg(&format!("{path}.decay"), s.decay);
    }
}

fn leaf(path: &str) -> &str {
    path.rsplit('.').next().unwrap_or(path)
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl ExperimentConfig {
    /// Every violated constraint, in schema order.
    pub fn violations(&self) -> Vec<Violation> {
        let mut c = Checker(Vec::new());
        let g = &self.grid;
        c.at_least("grid.nx", g.nx, 4);
        c.at_least("grid.ny", g.ny, 4);
        c.positive("grid.lx", g.lx);
        c.positive("grid.ly", g.ly);
        c.positive("time.t_final", self.time.t_final);
        c.at_least("time.nt", self.time.nt, 1);

        let p = &self.physics;
        c.positive("physics.nu", p.nu);
        c.positive("physics.kappa", p.kappa);
        if !p.buoyancy_dir.iter().all(|v| v.is_finite()) {
            c.fail("physics.buoyancy_dir", "components must be finite");
        }

        let w = &self.weights;
        for (k, v) in [
            ("alpha1", w.alpha1),
            ("alpha2", w.alpha2),
            ("beta1", w.beta1),
            ("beta2", w.beta2),
            ("eps1", w.eps1),
            ("eps2", w.eps2),
        ] {
            c.nonneg(&format!("weights.{k}"), v);
        }
        if !(w.alpha1 + w.alpha2 + w.beta1 + w.beta2 > 0.0) {
            c.fail("weights", "alpha1 + alpha2 + beta1 + beta2 > 0");
        }

        let d = &self.data;
        for (k, v) in [
            ("force_amplitude", d.force_amplitude),
            ("heat_amplitude", d.heat_amplitude),
            ("u0_amplitude", d.u0_amplitude),
            ("theta0_amplitude", d.theta0_amplitude),
        ] {
            if !v.is_finite() {
                c.fail(&format!("data.{k}"), "must be finite");
            }
        }
        c.spectrum("data.spectrum", &d.spectrum);

        let t = &self.targets;
        if !(t.u_amplitude.is_finite() && t.theta_amplitude.is_finite()) {
            c.fail("targets", "amplitudes must be finite");
        }
        if !(0.0..=1.0).contains(&t.reference_fraction) {
            c.fail("targets.reference_fraction", "0 <= reference_fraction <= 1");
        }
        c.nonneg("targets.noise", t.noise);
        c.spectrum("targets.spectrum", &t.spectrum);

        let k = &self.controls;
        c.rect("controls.q_region", &k.q_region, g.lx, g.ly);
        c.rect("controls.theta_region", &k.theta_region, g.lx, g.ly);
        for (lo, hi, name) in [
            (k.q_lo[0], k.q_hi[0], "q"),
            (k.q_lo[1], k.q_hi[1], "q"),
            (k.theta_lo, k.theta_hi, "theta"),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                c.fail(&format!("controls.{name}_lo"), format!("{name}_lo <= {name}_hi, both finite"));
            }
        }

        let o = &self.optimizer;
        c.at_least("optimizer.max_iters", o.max_iters, 0);
        c.positive("optimizer.kkt_tol", o.kkt_tol);
        c.positive("optimizer.initial_step", o.initial_step);
        c.open_unit("optimizer.armijo", o.armijo);
        c.open_unit("optimizer.backtrack", o.backtrack);
        c.positive("optimizer.step_min", o.step_min);
        c.positive("optimizer.step_max", o.step_max);
        if o.step_min > o.step_max {
            c.fail("optimizer.step_min", "step_min <= step_max");
        }
        c.at_least("optimizer.nonmonotone_window", o.nonmonotone_window, 1);
        c.at_least("optimizer.stagnation_window", o.stagnation_window, 1);
        c.nonneg("optimizer.stagnation_tol", o.stagnation_tol);

        c.nonneg("sign_check.tol", self.sign_check.tol);
        c.nonneg("sign_check.band", self.sign_check.band);

        let m = &self.measure;
        if m.eps_grid.is_empty() || m.eps_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            c.fail("measure.eps_grid", "non-empty, every eps > 0");
        } else if !strictly_increasing(&m.eps_grid) {
            c.fail("measure.eps_grid", "strictly increasing");
        }
        c.nonneg("measure.bang_band", m.bang_band);

        let e = &self.tikhonov.eps_grid;
        if e.is_empty() || e.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            c.fail("tikhonov.eps_grid", "non-empty, every eps >= 0");
        } else if !e.windows(2).all(|w| w[0] > w[1]) {
            c.fail("tikhonov.eps_grid", "strictly decreasing");
        }

        let s = &self.sweep;
        if s.magnitudes.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            c.fail("sweep.magnitudes", "every magnitude > 0");
        } else if !strictly_increasing(&s.magnitudes) {
            c.fail("sweep.magnitudes", "strictly increasing");
        } else if s.magnitudes.len() < 5 || s.magnitudes[s.magnitudes.len() - 1] < 100.0 * s.magnitudes[0] * (1.0 - 1e-9) {
            c.fail("sweep.magnitudes", "at least 5 points spanning at least 2 decades");
        }
        if let Some(a) = s.neighborhood {
            c.positive("sweep.neighborhood", a);
        }
        if !(s.norm_exponent >= 1.0) {
            c.fail("sweep.norm_exponent", "norm_exponent >= 1");
        }
        c.spectrum("sweep.spectrum", &s.spectrum);

        let gr = &self.growth;
        c.at_least("growth.n_samples", gr.n_samples, 1);
        if gr.radii.is_empty() || gr.radii.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            c.fail("growth.radii", "non-empty, every radius in (0, 1]");
        }
        c.nonneg("growth.tau", gr.tau);
        c.nonneg("growth.mu", gr.mu);
        c.spectrum("growth.spectrum", &gr.spectrum);

        let so = &self.second_order;
        c.positive("second_order.margin_fraction", so.margin_fraction);
        c.at_least("second_order.n_samples", so.n_samples, 1);
        if so.radii.is_empty() || so.radii.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            c.fail("second_order.radii", "non-empty, every radius in (0, 1]");
        }

        let ta = &self.taylor;
        if ta.steps.len() < 2 || ta.steps.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            c.fail("taylor.steps", "at least 2 steps, every step > 0");
        }
        if ta.seeds.is_empty() {
            c.fail("taylor.seeds", "at least one seed");
        }
        c.nonneg("taylor.point_scale", ta.point_scale);
        c.positive("taylor.direction_scale", ta.direction_scale);

        c.at_least("duality.instances", self.duality.instances, 1);

        let mm = &self.mms;
        if mm.sizes.len() < 2 || mm.sizes.iter().any(|n| *n < 4) || mm.sizes.windows(2).any(|w| w[0] >= w[1]) {
            c.fail("mms.sizes", "at least 2 increasing sizes, each >= 4");
        }
        c.positive("mms.t_final", mm.t_final);
        c.positive("mms.dt_factor", mm.dt_factor);
        c.positive("mms.nu", mm.nu);
        c.positive("mms.kappa", mm.kappa);

        if self.output_dir.is_empty() {
            c.fail("output_dir", "must not be empty");
        }
        c.0
    }

    /// Canonical JSON of the resolved configuration.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("configuration serializes"));
        hex::encode(&digest[..8])
    }
}

/// Parses and validates. Reports every violation, not just the first.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, LabError> {
    let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| LabError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let v = cfg.violations();
    if v.is_empty() {
        Ok(cfg)
    } else {
        Err(LabError::Invalid(v))
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, LabError> {
    let text = std::fs::read_to_string(path).map_err(|source| LabError::ConfigFile {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = parse_config("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        let back = parse_config(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn negative_viscosity_names_field() {
        let e = parse_config(r#"{"physics": {"nu": -1}}"#).unwrap_err();
        let LabError::Invalid(v) = e else { panic!("{e:?}") };
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].path, "physics.nu");
        assert!(v[0].message.contains("nu > 0"), "{}", v[0].message);
    }

    #[test]
    fn all_violations_are_collected() {
        let e = parse_config(r#"{"physics": {"nu": -1, "kappa": 0}, "time": {"nt": 0}, "controls": {"q_lo": [2, -1]}}"#).unwrap_err();
        let LabError::Invalid(v) = e else { panic!() };
        let paths: Vec<_> = v.iter().map(|x| x.path.as_str()).collect();
        assert_eq!(paths, ["time.nt", "physics.nu", "physics.kappa", "controls.q_lo"]);
    }

    #[test]
    fn parse_errors_carry_position() {
        let e = parse_config("{\n  \"seed\": 1,\n  \"grid\": {\"nx\": \"x\"}\n}").unwrap_err();
        match e {
            LabError::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_config(r#"{"gird": {}}"#), Err(LabError::Parse { .. })));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn geometric_grid_endpoints() {
        let g = geometric(1e-4, 1e-2, 5);
        assert_eq!(g.len(), 5);
        assert!((g[0] - 1e-4).abs() < 1e-18 && (g[4] - 1e-2).abs() < 1e-15);
        assert!((g[2] - 1e-3).abs() < 1e-15);
    }
}
