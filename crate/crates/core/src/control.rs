//! Box-constrained distributed controls.
//!
//! A control `(q, Theta)` is piecewise constant: one value per control cell
//! and per time step (zero-order hold on the state time grid). The momentum
//! control `q` is a cell-centred 2-vector averaged onto the adjacent faces;
//! the heat control `Theta` acts directly on its cells. Pointwise, `|q|` is
//! measured as `|q1| + |q2|`, so `L^1` norms split over the two components.

use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{Field, Grid, RegionMask, ScalarField, VectorField2};
use crate::{Error, Result};

/// One value per control cell, time step and component.
///
/// `q[(n * nq + p) * 2 + c]` is component `c` at region cell `p` during step
/// `n`; `theta[n * nh + p]` likewise. The same layout holds gradients and
/// directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    pub q: Vec<f64>,
    pub theta: Vec<f64>,
}

impl Control {
    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.theta).all(|v| v.is_finite())
    }

    pub fn axpy(&mut self, a: f64, other: &Control) {
        for (x, y) in self.q.iter_mut().zip(&other.q) {
            *x += a * y;
        }
        for (x, y) in self.theta.iter_mut().zip(&other.theta) {
            *x += a * y;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.q.iter_mut().chain(self.theta.iter_mut()).for_each(|x| *x *= a);
    }

    /// `a * x + b * y`.
    pub fn lincomb(a: f64, x: &Control, b: f64, y: &Control) -> Control {
        let mut out = x.clone();
        out.scale(a);
        out.axpy(b, y);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.q.iter().chain(&self.theta).fold(0.0_f64, |m, v| m.max(libm::fabs(*v)))
    }

    /// Order-sensitive fingerprint of the exact bit patterns (FNV-1a).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.q.iter().chain(&self.theta) {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// Per-component `L^1` (or other) quantities of a control-space object.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Split {
    pub q: f64,
    pub theta: f64,
}

impl Split {
    pub fn total(&self) -> f64 {
        self.q + self.theta
    }
}

/// Control geometry, time grid and box bounds `lo <= rho <= hi`.
#[derive(Debug, Clone)]
pub struct ControlSpace {
    nx: usize,
    ny: usize,
    region_q: RegionMask,
    region_h: RegionMask,
    nt: usize,
    /// `dt * cell_volume`: quadrature weight of every control value.
    weight: f64,
    lower: Control,
    upper: Control,
}

/// Bounds that are constant in space and time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantBounds {
    pub q_lo: [f64; 2],
    pub q_hi: [f64; 2],
    pub theta_lo: f64,
    pub theta_hi: f64,
}

impl ControlSpace {
    pub fn new(grid: &Grid, region_q: RegionMask, region_h: RegionMask, nt: usize, dt: f64, bounds: ConstantBounds) -> Result<Self> {
        let nq = region_q.len();
        let nh = region_h.len();
        let mut lower = Control {
            q: vec![0.0; nt * nq * 2],
            theta: vec![bounds.theta_lo; nt * nh],
        };
        let mut upper = Control {
            q: vec![0.0; nt * nq * 2],
            theta: vec![bounds.theta_hi; nt * nh],
        };
        for k in 0..nt * nq {
            lower.q[2 * k] = bounds.q_lo[0];
            lower.q[2 * k + 1] = bounds.q_lo[1];
            upper.q[2 * k] = bounds.q_hi[0];
            upper.q[2 * k + 1] = bounds.q_hi[1];
        }
        Self::with_bounds(grid, region_q, region_h, nt, dt, lower, upper)
    }

    /// General (space- and time-dependent) bounds in the control layout.
    pub fn with_bounds(
        grid: &Grid,
        region_q: RegionMask,
        region_h: RegionMask,
        nt: usize,
        dt: f64,
        lower: Control,
        upper: Control,
    ) -> Result<Self> {
        let shape = (grid.nx(), grid.ny());
        if region_q.shape() != shape || region_h.shape() != shape {
            return Err(Error::config("controls.region", "control region built for a different grid"));
        }
        if nt == 0 || !(dt > 0.0) {
            return Err(Error::config("time", "nt >= 1 and dt > 0 required"));
        }
        let nq = region_q.len();
        let nh = region_h.len();
        for (b, path) in [(&lower, "controls.lower"), (&upper, "controls.upper")] {
            if b.q.len() != nt * nq * 2 || b.theta.len() != nt * nh {
                return Err(Error::config(path, "bound layout does not match regions and time grid"));
            }
            if !b.is_finite() {
                return Err(Error::config(path, "bounds must be finite"));
            }
        }
        if lower.q.iter().zip(&upper.q).any(|(l, h)| l > h) {
            return Err(Error::config("controls.q_bounds", "lower bound exceeds upper bound"));
        }
        if lower.theta.iter().zip(&upper.theta).any(|(l, h)| l > h) {
            return Err(Error::config("controls.theta_bounds", "lower bound exceeds upper bound"));
        }
        Ok(ControlSpace {
            nx: grid.nx(),
            ny: grid.ny(),
            region_q,
            region_h,
            nt,
            weight: dt * grid.cell_volume(),
            lower,
            upper,
        })
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn region_q(&self) -> &RegionMask {
        &self.region_q
    }

    pub fn region_h(&self) -> &RegionMask {
        &self.region_h
    }

    pub fn lower(&self) -> &Control {
        &self.lower
    }

    pub fn upper(&self) -> &Control {
        &self.upper
    }

    /// Quadrature weight `dt * hx * hy` of a single control value.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn zeros(&self) -> Control {
        Control {
            q: vec![0.0; self.nt * self.region_q.len() * 2],
            theta: vec![0.0; self.nt * self.region_h.len()],
        }
    }

    /// Pointwise midpoint of the box.
    pub fn midpoint(&self) -> Control {
        Control::lincomb(0.5, &self.lower, 0.5, &self.upper)
    }

    pub fn check(&self, c: &Control) -> Result<()> {
        if c.q.len() != self.lower.q.len() || c.theta.len() != self.lower.theta.len() {
            return Err(Error::config("control", "control layout does not match the control space"));
        }
        Ok(())
    }

    /// Componentwise clamp onto the box. Idempotent and `L^2`-nonexpansive.
    pub fn project_box(&self, c: &Control) -> Control {
        let clamp = |v: &[f64], lo: &[f64], hi: &[f64]| -> Vec<f64> {
            v.iter().zip(lo.iter().zip(hi)).map(|(x, (l, h))| x.max(*l).min(*h)).collect()
        };
        Control {
            q: clamp(&c.q, &self.lower.q, &self.upper.q),
            theta: clamp(&c.theta, &self.lower.theta, &self.upper.theta),
        }
    }

    pub fn is_admissible(&self, c: &Control) -> bool {
        let inside = |v: &[f64], lo: &[f64], hi: &[f64]| v.iter().zip(lo.iter().zip(hi)).all(|(x, (l, h))| l <= x && x <= h);
        inside(&c.q, &self.lower.q, &self.upper.q) && inside(&c.theta, &self.lower.theta, &self.upper.theta)
    }

    /// Weighted inner product `sum dt * vol * a . b`.
    pub fn inner(&self, a: &Control, b: &Control) -> f64 {
        let s: f64 = a.q.iter().zip(&b.q).map(|(x, y)| x * y).sum::<f64>() + a.theta.iter().zip(&b.theta).map(|(x, y)| x * y).sum::<f64>();
        s * self.weight
    }

    pub fn inner_split(&self, a: &Control, b: &Control) -> Split {
        Split {
            q: self.weight * a.q.iter().zip(&b.q).map(|(x, y)| x * y).sum::<f64>(),
            theta: self.weight * a.theta.iter().zip(&b.theta).map(|(x, y)| x * y).sum::<f64>(),
        }
    }

    pub fn norm_l1(&self, c: &Control) -> Split {
        Split {
            q: self.weight * c.q.iter().map(|v| libm::fabs(*v)).sum::<f64>(),
            theta: self.weight * c.theta.iter().map(|v| libm::fabs(*v)).sum::<f64>(),
        }
    }

    pub fn norm_l2(&self, c: &Control) -> f64 {
        libm::sqrt(self.inner(c, c))
    }

    /// `||a - b||_{L^1 x L^1}`.
    pub fn distance_l1(&self, a: &Control, b: &Control) -> f64 {
        let d = Control::lincomb(1.0, a, -1.0, b);
        self.norm_l1(&d).total()
    }

    /// `M_U`: the largest `||q||_inf + ||Theta||_inf` over the box.
    pub fn bound_mu(&self) -> f64 {
        let mut mq: f64 = 0.0;
        for (l, h) in self.lower.q.chunks_exact(2).zip(self.upper.q.chunks_exact(2)) {
            let a = libm::fabs(l[0]).max(libm::fabs(h[0]));
            let b = libm::fabs(l[1]).max(libm::fabs(h[1]));
            mq = mq.max(a + b);
        }
        let mt = self
            .lower
            .theta
            .iter()
            .zip(&self.upper.theta)
            .fold(0.0_f64, |m, (l, h)| m.max(libm::fabs(*l)).max(libm::fabs(*h)));
        mq + mt
    }

    /// `||hi - lo||_{L^1 x L^1}`: no two admissible controls are further apart.
    pub fn l1_diameter(&self) -> f64 {
        self.distance_l1(&self.upper, &self.lower)
    }

    /// Space-time measure of the control regions, `(|I x w_q|, |I x w_h|)`.
    pub fn region_measure(&self) -> Split {
        Split {
            q: self.weight * (self.nt * self.region_q.len()) as f64,
            theta: self.weight * (self.nt * self.region_h.len()) as f64,
        }
    }

    // ------------------------------------------------------------ grid coupling

    fn cell_ij(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    /// `out += scale * chi_q q^n` on the faces (cell values averaged to faces).
    pub fn add_force_q(&self, c: &Control, n: usize, scale: f64, out: &mut VectorField2) {
        let nq = self.region_q.len();
        let (nx, ny) = (self.nx, self.ny);
        for (p, &cell) in self.region_q.cells().iter().enumerate() {
            let (i, j) = self.cell_ij(cell);
            let base = (n * nq + p) * 2;
            let (qx, qy) = (0.5 * scale * c.q[base], 0.5 * scale * c.q[base + 1]);
            for fi in [i, i + 1] {
                if fi > 0 && fi < nx {
                    let k = out.x_index(fi, j);
                    out.values_mut()[k] += qx;
                }
            }
            for fj in [j, j + 1] {
                if fj > 0 && fj < ny {
                    let k = out.y_index(i, fj);
                    out.values_mut()[k] += qy;
                }
            }
        }
    }

    /// `out += scale * chi_h Theta^n`.
    pub fn add_force_h(&self, c: &Control, n: usize, scale: f64, out: &mut ScalarField) {
        let nh = self.region_h.len();
        for (p, &cell) in self.region_h.cells().iter().enumerate() {
            let (i, j) = self.cell_ij(cell);
            out.add(i, j, scale * c.theta[n * nh + p]);
        }
    }

    /// Transpose of [`ControlSpace::add_force_q`]: writes `chi_q^T w` into step `n`.
    pub fn restrict_q(&self, w: &VectorField2, n: usize, out: &mut Control) {
        let nq = self.region_q.len();
        let (nx, ny) = (self.nx, self.ny);
        for (p, &cell) in self.region_q.cells().iter().enumerate() {
            let (i, j) = self.cell_ij(cell);
            let mut sx = 0.0;
            for fi in [i, i + 1] {
                if fi > 0 && fi < nx {
                    sx += 0.5 * w.x_at(fi, j);
                }
            }
            let mut sy = 0.0;
            for fj in [j, j + 1] {
                if fj > 0 && fj < ny {
                    sy += 0.5 * w.y_at(i, fj);
                }
            }
            let base = (n * nq + p) * 2;
            out.q[base] = sx;
            out.q[base + 1] = sy;
        }
    }

    /// Transpose of [`ControlSpace::add_force_h`] for step `n`.
    pub fn restrict_h(&self, psi: &ScalarField, n: usize, out: &mut Control) {
        let nh = self.region_h.len();
        for (p, &cell) in self.region_h.cells().iter().enumerate() {
            let (i, j) = self.cell_ij(cell);
            out.theta[n * nh + p] = psi.get(i, j);
        }
    }

    /// Iterates `(component, value index, lower, upper)` over every control value;
    /// component 0 is `q`, 1 is `Theta`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64, f64)> + '_ {
        let q = (0..self.lower.q.len()).map(move |k| (0, k, self.lower.q[k], self.upper.q[k]));
        let t = (0..self.lower.theta.len()).map(move |k| (1, k, self.lower.theta[k], self.upper.theta[k]));
        q.chain(t)
    }
}
