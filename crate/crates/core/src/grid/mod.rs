//! MAC-staggered discretization of a rectangle.
//!
//! Scalars live at cell centres, the x-velocity on vertical faces and the
//! y-velocity on horizontal faces. All velocity fields carry homogeneous
//! no-slip data, so the wall-normal faces are stored but always zero. Every
//! degree of freedom (cell or face) carries the same quadrature weight
//! `hx * hy`, which makes weighted and Euclidean transposes coincide.

mod advect;
mod field;
mod spectral;

use alloc::vec;
use alloc::vec::Vec;

pub use field::{Field, ScalarField, VectorField2};

use crate::{Error, Result};
use advect::EdgeList;
use spectral::{Basis1d, BasisKind};

/// Relative divergence residual above which a projection is reported as failed.
const PROJECTION_RESIDUAL_TOL: f64 = 1e-9;

/// Divergence level above which advection flags its input as compressible.
pub const DIVERGENCE_WARNING: f64 = 1e-8;

/// Cell counts and extents of the rectangular domain `[0, lx] x [0, ly]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl GridConfig {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        let cfg = GridConfig { nx, ny, lx, ly };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `n x n` cells on the unit square.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 4 {
            return Err(Error::config("grid.nx", "nx >= 4 required"));
        }
        if self.ny < 4 {
            return Err(Error::config("grid.ny", "ny >= 4 required"));
        }
        if !(self.lx.is_finite() && self.lx > 0.0) {
            return Err(Error::config("grid.lx", "lx > 0 required"));
        }
        if !(self.ly.is_finite() && self.ly > 0.0) {
            return Err(Error::config("grid.ly", "ly > 0 required"));
        }
        Ok(())
    }

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.hx() * self.hy()
    }
}

/// A control subdomain: a nonempty set of cells, stored in increasing index order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    nx: usize,
    ny: usize,
    cells: Vec<usize>,
}

impl RegionMask {
    /// Cells touching the open rectangle `(x0, x1) x (y0, y1)`; the rectangle is
    /// snapped outward to whole cells.
    pub fn from_rect(cfg: &GridConfig, x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        if !(x0 < x1 && y0 < y1) || !(x0.is_finite() && x1.is_finite() && y0.is_finite() && y1.is_finite()) {
            return Err(Error::config("region", "rectangle must satisfy x0 < x1 and y0 < y1"));
        }
        let snap = |lo: f64, hi: f64, h: f64, n: usize| {
            let a = libm::floor(lo / h + 1e-12).max(0.0) as usize;
            let b = (libm::ceil(hi / h - 1e-12).max(0.0) as usize).min(n);
            (a, b)
        };
        let (i0, i1) = snap(x0, x1, cfg.hx(), cfg.nx);
        let (j0, j1) = snap(y0, y1, cfg.hy(), cfg.ny);
        let mut cells = Vec::new();
        for j in j0..j1 {
            for i in i0..i1 {
                cells.push(j * cfg.nx + i);
            }
        }
        Self::from_cells(cfg, cells)
    }

    pub fn from_cells(cfg: &GridConfig, mut cells: Vec<usize>) -> Result<Self> {
        cells.sort_unstable();
        cells.dedup();
        if cells.is_empty() {
            return Err(Error::config("region", "region must contain at least one cell"));
        }
        if cells.last().is_some_and(|&c| c >= cfg.nx * cfg.ny) {
            return Err(Error::config("region", "cell index outside the grid"));
        }
        Ok(RegionMask {
            nx: cfg.nx,
            ny: cfg.ny,
            cells,
        })
    }

    pub fn whole(cfg: &GridConfig) -> Self {
        RegionMask {
            nx: cfg.nx,
            ny: cfg.ny,
            cells: (0..cfg.nx * cfg.ny).collect(),
        }
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.cells.binary_search(&cell).is_ok()
    }

    /// Position of `cell` inside the region, if present.
    pub fn position(&self, cell: usize) -> Option<usize> {
        self.cells.binary_search(&cell).ok()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }
}

/// A grid with its precomputed spectral bases and advection stencils.
#[derive(Debug, Clone)]
pub struct Grid {
    cfg: GridConfig,
    hx: f64,
    hy: f64,
    // fast-diagonalization bases: scalars, x-faces, y-faces, pressure
    cell_dir_x: Basis1d,
    cell_dir_y: Basis1d,
    node_dir_x: Basis1d,
    node_dir_y: Basis1d,
    cell_neu_x: Basis1d,
    cell_neu_y: Basis1d,
    scalar_edges: EdgeList,
    vector_edges: EdgeList,
}

/// Result of a discrete Leray projection: `field = input - grad(potential)`.
#[derive(Debug, Clone)]
pub struct Projection {
    pub field: VectorField2,
    pub potential: ScalarField,
}

impl Grid {
    pub fn new(cfg: GridConfig) -> Result<Self> {
        cfg.validate()?;
        let (hx, hy) = (cfg.hx(), cfg.hy());
        Ok(Grid {
            cfg,
            hx,
            hy,
            cell_dir_x: Basis1d::new(BasisKind::CellDirichlet, cfg.nx, hx),
            cell_dir_y: Basis1d::new(BasisKind::CellDirichlet, cfg.ny, hy),
            node_dir_x: Basis1d::new(BasisKind::NodeDirichlet, cfg.nx - 1, hx),
            node_dir_y: Basis1d::new(BasisKind::NodeDirichlet, cfg.ny - 1, hy),
            cell_neu_x: Basis1d::new(BasisKind::CellNeumann, cfg.nx, hx),
            cell_neu_y: Basis1d::new(BasisKind::CellNeumann, cfg.ny, hy),
            scalar_edges: EdgeList::scalar(&cfg),
            vector_edges: EdgeList::vector(&cfg),
        })
    }

    pub fn config(&self) -> &GridConfig {
        &self.cfg
    }

    pub fn nx(&self) -> usize {
        self.cfg.nx
    }

    pub fn ny(&self) -> usize {
        self.cfg.ny
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn cell_volume(&self) -> f64 {
        self.hx * self.hy
    }

    /// `|Omega| = lx * ly`.
    pub fn area(&self) -> f64 {
        self.cfg.lx * self.cfg.ly
    }

    pub fn scalar_zeros(&self) -> ScalarField {
        ScalarField::zeros(self.cfg.nx, self.cfg.ny)
    }

    pub fn vector_zeros(&self) -> VectorField2 {
        VectorField2::zeros(self.cfg.nx, self.cfg.ny)
    }

    /// Cell-centre coordinates of cell `(i, j)`.
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }

    /// Samples `f` at cell centres.
    pub fn sample_scalar(&self, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let mut s = self.scalar_zeros();
        for j in 0..self.cfg.ny {
            for i in 0..self.cfg.nx {
                let (x, y) = self.cell_center(i, j);
                s.set(i, j, f(x, y));
            }
        }
        s
    }

    /// Samples the two components on their faces; wall-normal faces stay zero.
    pub fn sample_vector(&self, fx: impl Fn(f64, f64) -> f64, fy: impl Fn(f64, f64) -> f64) -> VectorField2 {
        let (nx, ny) = (self.cfg.nx, self.cfg.ny);
        let mut v = self.vector_zeros();
        for j in 0..ny {
            for i in 1..nx {
                v.set_x(i, j, fx(i as f64 * self.hx, (j as f64 + 0.5) * self.hy));
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                v.set_y(i, j, fy((i as f64 + 0.5) * self.hx, j as f64 * self.hy));
            }
        }
        v
    }

    /// Discrete curl of a stream function sampled at cell corners:
    /// `u = d(psi)/dy`, `v = -d(psi)/dx`. The result is discretely
    /// divergence-free; `psi` must vanish on the boundary for no-slip normals.
    pub fn from_stream_function(&self, psi: impl Fn(f64, f64) -> f64) -> VectorField2 {
        let (nx, ny) = (self.cfg.nx, self.cfg.ny);
        let mut corner = vec![0.0; (nx + 1) * (ny + 1)];
        for j in 0..=ny {
            for i in 0..=nx {
                // corners on the boundary carry psi = 0 exactly
                if i == 0 || j == 0 || i == nx || j == ny {
                    continue;
                }
                corner[j * (nx + 1) + i] = psi(i as f64 * self.hx, j as f64 * self.hy);
            }
        }
        let mut v = self.vector_zeros();
        for j in 0..ny {
            for i in 1..nx {
                let d = corner[(j + 1) * (nx + 1) + i] - corner[j * (nx + 1) + i];
                v.set_x(i, j, d / self.hy);
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                let d = corner[j * (nx + 1) + i + 1] - corner[j * (nx + 1) + i];
                v.set_y(i, j, -d / self.hx);
            }
        }
        v
    }

    pub(crate) fn check_scalar(&self, s: &ScalarField) -> Result<()> {
        if s.shape() != (self.cfg.nx, self.cfg.ny) {
            return Err(Error::config("field", "scalar field shape does not match the grid"));
        }
        Ok(())
    }

    pub(crate) fn check_vector(&self, v: &VectorField2) -> Result<()> {
        if v.shape() != (self.cfg.nx, self.cfg.ny) {
            return Err(Error::config("field", "vector field shape does not match the grid"));
        }
        Ok(())
    }

    // ---------------------------------------------------------------- quadrature

    /// Cell-volume weighted inner product.
    pub fn inner<F: Field>(&self, a: &F, b: &F) -> f64 {
        debug_assert_eq!(a.values().len(), b.values().len());
        let s: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
        s * self.cell_volume()
    }

    pub fn norm2<F: Field>(&self, a: &F) -> f64 {
        libm::sqrt(self.inner(a, a))
    }

    /// Midpoint-rule `L^p` norm; `p = f64::INFINITY` gives the max norm.
    pub fn norm_lp<F: Field>(&self, a: &F, p: f64) -> Result<f64> {
        lp_norm(a.values(), self.cell_volume(), p)
    }

    // ---------------------------------------------------------------- differences

    /// Cell-centred MAC divergence.
    pub fn divergence(&self, v: &VectorField2) -> Result<ScalarField> {
        self.check_vector(v)?;
        Ok(self.div(v))
    }

    pub(crate) fn div(&self, v: &VectorField2) -> ScalarField {
        let (nx, ny) = (self.cfg.nx, self.cfg.ny);
        let mut d = self.scalar_zeros();
        for j in 0..ny {
            for i in 0..nx {
                let ddx = (v.x_at(i + 1, j) - v.x_at(i, j)) / self.hx;
                let ddy = (v.y_at(i, j + 1) - v.y_at(i, j)) / self.hy;
                d.set(i, j, ddx + ddy);
            }
        }
        d
    }

    /// Face gradient of a cell field; zero on wall-normal faces (Neumann).
    pub fn gradient(&self, s: &ScalarField) -> Result<VectorField2> {
        self.check_scalar(s)?;
        Ok(self.grad(s))
    }

    pub(crate) fn grad(&self, s: &ScalarField) -> VectorField2 {
        let (nx, ny) = (self.cfg.nx, self.cfg.ny);
        let mut g = self.vector_zeros();
        for j in 0..ny {
            for i in 1..nx {
                g.set_x(i, j, (s.get(i, j) - s.get(i - 1, j)) / self.hx);
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                g.set_y(i, j, (s.get(i, j) - s.get(i, j - 1)) / self.hy);
            }
        }
        g
    }

    /// 5-point Laplacian of a cell field with mirrored ghosts (`ghost = -interior`),
    /// so the wall value is zero.
    pub fn laplacian_dirichlet(&self, s: &ScalarField) -> Result<ScalarField> {
        self.check_scalar(s)?;
        Ok(self.lap_scalar(s))
    }

    pub(crate) fn lap_scalar(&self, s: &ScalarField) -> ScalarField {
        let (nx, ny) = (self.cfg.nx, self.cfg.ny);
        let (ax, ay) = (1.0 / (self.hx * self.hx), 1.0 / (self.hy * self.hy));
        let mut out = self.scalar_zeros();
        for j in 0..ny {
            for i in 0..nx {
                let c = s.get(i, j);
                let w = if i == 0 { -c } else { s.get(i - 1, j) };
                let e = if i + 1 == nx { -c } else { s.get(i + 1, j) };
                let so = if j == 0 { -c } else { s.get(i, j - 1) };
                let n = if j + 1 == ny { -c } else { s.get(i, j + 1) };
                out.set(i, j, ax * (w - 2.0 * c + e) + ay * (so - 2.0 * c + n));
            }
        }
        out
    }

    /// Componentwise Dirichlet Laplacian of a no-slip velocity field.
    pub fn laplacian_dirichlet_v(&self, v: &VectorField2) -> Result<VectorField2> {
        self.check_vector(v)?;
        Ok(self.lap_vector(v))
    }

    pub(crate) fn lap_vector(&self, v: &VectorField2) -> VectorField2 {
        let (nx, ny) = (self.cfg.nx, self.cfg.ny);
        let (ax, ay) = (1.0 / (self.hx * self.hx), 1.0 / (self.hy * self.hy));
        let mut out = self.vector_zeros();
        // x-faces: Dirichlet nodes in x, mirrored ghosts in y
        for j in 0..ny {
            for i in 1..nx {
                let c = v.x_at(i, j);
                let w = if i == 1 { 0.0 } else { v.x_at(i - 1, j) };
                let e = if i + 1 == nx { 0.0 } else { v.x_at(i + 1, j) };
                let so = if j == 0 { -c } else { v.x_at(i, j - 1) };
                let n = if j + 1 == ny { -c } else { v.x_at(i, j + 1) };
                out.set_x(i, j, ax * (w - 2.0 * c + e) + ay * (so - 2.0 * c + n));
            }
        }
        // y-faces: mirrored ghosts in x, Dirichlet nodes in y
        for j in 1..ny {
            for i in 0..nx {
                let c = v.y_at(i, j);
                let w = if i == 0 { -c } else { v.y_at(i - 1, j) };
                let e = if i + 1 == nx { -c } else { v.y_at(i + 1, j) };
                let so = if j == 1 { 0.0 } else { v.y_at(i, j - 1) };
                let n = if j + 1 == ny { 0.0 } else { v.y_at(i, j + 1) };
                out.set_y(i, j, ax * (w - 2.0 * c + e) + ay * (so - 2.0 * c + n));
            }
        }
        out
    }

    /// Discrete Dirichlet energy `-<lap s, s>`, the analogue of `||grad s||^2`.
    pub fn dirichlet_energy(&self, s: &ScalarField) -> f64 {
        -self.inner(&self.lap_scalar(s), s)
    }

    pub fn dirichlet_energy_v(&self, v: &VectorField2) -> f64 {
        -self.inner(&self.lap_vector(v), v)
    }

    /// Largest one-sided difference quotient of a scalar, walls included
    /// through the mirrored ghost (`2 s / h` at a wall).
    pub fn grad_sup_scalar(&self, s: &ScalarField) -> f64 {
        let (nx, ny) = (self.cfg.nx, self.cfg.ny);
        let mut m: f64 = 0.0;
        for j in 0..ny {
            for i in 0..=nx {
                let l = if i == 0 { -s.get(0, j) } else { s.get(i - 1, j) };
                let r = if i == nx { -s.get(nx - 1, j) } else { s.get(i, j) };
                m = m.max(libm::fabs(r - l) / self.hx);
            }
        }
        for j in 0..=ny {
            for i in 0..nx {
                let l = if j == 0 { -s.get(i, 0) } else { s.get(i, j - 1) };
                let r = if j == ny { -s.get(i, ny - 1) } else { s.get(i, j) };
                m = m.max(libm::fabs(r - l) / self.hy);
            }
        }
        m
    }

    /// Largest difference quotient over both components of a no-slip field.
    pub fn grad_sup_vector(&self, v: &VectorField2) -> f64 {
        let (nx, ny) = (self.cfg.nx, self.cfg.ny);
        let mut m: f64 = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                m = m.max(libm::fabs(v.x_at(i + 1, j) - v.x_at(i, j)) / self.hx);
                m = m.max(libm::fabs(v.y_at(i, j + 1) - v.y_at(i, j)) / self.hy);
            }
        }
        // tangential differences, walls through mirrored ghosts
        for j in 0..=ny {
            for i in 1..nx {
                let l = if j == 0 { -v.x_at(i, 0) } else { v.x_at(i, j - 1) };
                let r = if j == ny { -v.x_at(i, ny - 1) } else { v.x_at(i, j) };
                m = m.max(libm::fabs(r - l) / self.hy);
            }
        }
        for j in 1..ny {
            for i in 0..=nx {
                let l = if i == 0 { -v.y_at(0, j) } else { v.y_at(i - 1, j) };
                let r = if i == nx { -v.y_at(nx - 1, j) } else { v.y_at(i, j) };
                m = m.max(libm::fabs(r - l) / self.hx);
            }
        }
        m
    }

    // ---------------------------------------------------------------- coupling

    /// Buoyancy forcing `dir * theta` interpolated from cells to interior faces.
    pub fn buoyancy(&self, theta: &ScalarField, dir: [f64; 2]) -> VectorField2 {
        let (nx, ny) = (self.cfg.nx, self.cfg.ny);
        let mut out = self.vector_zeros();
        if dir[0] != 0.0 {
            for j in 0..ny {
                for i in 1..nx {
                    out.set_x(i, j, dir[0] * 0.5 * (theta.get(i - 1, j) + theta.get(i, j)));
                }
            }
        }
        if dir[1] != 0.0 {
            for j in 1..ny {
                for i in 0..nx {
                    out.set_y(i, j, dir[1] * 0.5 * (theta.get(i, j - 1) + theta.get(i, j)));
                }
            }
        }
        out
    }

    /// Transpose of [`Grid::buoyancy`].
    pub fn buoyancy_transpose(&self, w: &VectorField2, dir: [f64; 2]) -> ScalarField {
        let (nx, ny) = (self.cfg.nx, self.cfg.ny);
        let mut out = self.scalar_zeros();
        if dir[0] != 0.0 {
            for j in 0..ny {
                for i in 1..nx {
                    let c = dir[0] * 0.5 * w.x_at(i, j);
                    out.add(i - 1, j, c);
                    out.add(i, j, c);
                }
            }
        }
        if dir[1] != 0.0 {
            for j in 1..ny {
                for i in 0..nx {
                    let c = dir[1] * 0.5 * w.y_at(i, j);
                    out.add(i, j - 1, c);
                    out.add(i, j, c);
                }
            }
        }
        out
    }

    // ---------------------------------------------------------------- advection

    /// Skew-symmetric transport `1/2 [(u.grad) s + div(u s)]` of a cell field.
    pub fn advect_scalar(&self, u: &VectorField2, s: &ScalarField) -> Result<ScalarField> {
        self.check_vector(u)?;
        self.check_scalar(s)?;
        let mut out = self.scalar_zeros();
        self.scalar_edges.apply(u.values(), s.values(), out.values_mut());
        Ok(out)
    }

    /// Skew-symmetric transport `1/2 [(u.grad) v + div(u v)]` of a face field.
    pub fn advect_vector(&self, u: &VectorField2, v: &VectorField2) -> Result<VectorField2> {
        self.check_vector(u)?;
        self.check_vector(v)?;
        let mut out = self.vector_zeros();
        self.vector_edges.apply(u.values(), v.values(), out.values_mut());
        Ok(out)
    }

    /// As [`Grid::advect_scalar`], additionally reporting whether `u` violated
    /// the discrete divergence-free precondition.
    pub fn advect_scalar_checked(&self, u: &VectorField2, s: &ScalarField) -> Result<(ScalarField, bool)> {
        let out = self.advect_scalar(u, s)?;
        Ok((out, self.div(u).max_abs() > DIVERGENCE_WARNING))
    }

    pub fn advect_vector_checked(&self, u: &VectorField2, v: &VectorField2) -> Result<(VectorField2, bool)> {
        let out = self.advect_vector(u, v)?;
        Ok((out, self.div(u).max_abs() > DIVERGENCE_WARNING))
    }

    /// `out += scale * A(u) s` for the scalar transport operator.
    pub(crate) fn add_advect_scalar(&self, scale: f64, u: &VectorField2, s: &ScalarField, out: &mut ScalarField) {
        self.scalar_edges.apply_scaled(scale, u.values(), s.values(), out.values_mut());
    }

    pub(crate) fn add_advect_vector(&self, scale: f64, u: &VectorField2, v: &VectorField2, out: &mut VectorField2) {
        self.vector_edges.apply_scaled(scale, u.values(), v.values(), out.values_mut());
    }

    /// `out += scale * z` where `<A(d) s, psi> = <d, z>` for all velocities `d`:
    /// the transpose of the scalar transport with respect to the transporting field.
    pub(crate) fn add_advect_scalar_velocity_transpose(&self, scale: f64, s: &ScalarField, psi: &ScalarField, out: &mut VectorField2) {
        self.scalar_edges
            .velocity_transpose_scaled(scale, s.values(), psi.values(), out.values_mut());
    }

    pub(crate) fn add_advect_vector_velocity_transpose(&self, scale: f64, v: &VectorField2, w: &VectorField2, out: &mut VectorField2) {
        self.vector_edges
            .velocity_transpose_scaled(scale, v.values(), w.values(), out.values_mut());
    }

    // ---------------------------------------------------------------- solvers

    /// Solves `(I - a lap) x = b` for a cell field with Dirichlet walls.
    pub fn solve_helmholtz_scalar(&self, a: f64, b: &ScalarField) -> ScalarField {
        let (nx, ny) = (self.cfg.nx, self.cfg.ny);
        let mut data = b.values().to_vec();
        spectral::solve_separable(&self.cell_dir_x, &self.cell_dir_y, &mut data, nx, ny, 1.0, a);
        ScalarField::from_values(nx, ny, data).expect("shape preserved")
    }

    /// Solves `(I - a lap) x = b` componentwise for a no-slip face field.
    pub fn solve_helmholtz_vector(&self, a: f64, b: &VectorField2) -> VectorField2 {
        let (nx, ny) = (self.cfg.nx, self.cfg.ny);
        let mut out = self.vector_zeros();
        let mut buf = vec![0.0; (nx - 1) * ny];
        for j in 0..ny {
            for i in 1..nx {
                buf[j * (nx - 1) + i - 1] = b.x_at(i, j);
            }
        }
        spectral::solve_separable(&self.node_dir_x, &self.cell_dir_y, &mut buf, nx - 1, ny, 1.0, a);
        for j in 0..ny {
            for i in 1..nx {
                out.set_x(i, j, buf[j * (nx - 1) + i - 1]);
            }
        }
        let mut buf = vec![0.0; nx * (ny - 1)];
        for j in 1..ny {
            for i in 0..nx {
                buf[(j - 1) * nx + i] = b.y_at(i, j);
            }
        }
        spectral::solve_separable(&self.cell_dir_x, &self.node_dir_y, &mut buf, nx, ny - 1, 1.0, a);
        for j in 1..ny {
            for i in 0..nx {
                out.set_y(i, j, buf[(j - 1) * nx + i]);
            }
        }
        out
    }

    /// Zero-mean solution of the Neumann problem `div grad phi = rhs`.
    pub fn solve_poisson_neumann(&self, rhs: &ScalarField) -> ScalarField {
        let (nx, ny) = (self.cfg.nx, self.cfg.ny);
        let mut data: Vec<f64> = rhs.values().iter().map(|r| -r).collect();
        spectral::solve_separable(&self.cell_neu_x, &self.cell_neu_y, &mut data, nx, ny, 0.0, 1.0);
        ScalarField::from_values(nx, ny, data).expect("shape preserved")
    }

    /// Discrete Leray projection `v - grad(phi)` with `div grad phi = div v`.
    pub fn leray_project(&self, v: &VectorField2) -> Result<Projection> {
        self.check_vector(v)?;
        if !v.walls_are_zero() {
            return Err(Error::config("field", "wall-normal velocity must vanish before projection"));
        }
        self.project(v, 0)
    }

    pub(crate) fn project(&self, v: &VectorField2, step: usize) -> Result<Projection> {
        let d = self.div(v);
        let potential = self.solve_poisson_neumann(&d);
        let mut field = v.clone();
        field.axpy(-1.0, &self.grad(&potential));
        let residual = self.div(&field).max_abs();
        let scale = 1.0 + d.max_abs();
        if !(residual <= PROJECTION_RESIDUAL_TOL * scale) {
            return Err(Error::Numerical {
                what: "leray projection",
                step,
                residual,
            });
        }
        Ok(Projection { field, potential })
    }
}

/// Weighted `L^p` norm of raw values with a uniform quadrature weight.
pub fn lp_norm(values: &[f64], weight: f64, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Argument(alloc::format!("norm exponent p = {p} must be >= 1")));
    }
    if p == f64::INFINITY {
        return Ok(values.iter().fold(0.0_f64, |m, v| m.max(libm::fabs(*v))));
    }
    if p == 1.0 {
        return Ok(weight * values.iter().map(|v| libm::fabs(*v)).sum::<f64>());
    }
    if p == 2.0 {
        return Ok(libm::sqrt(weight * values.iter().map(|v| v * v).sum::<f64>()));
    }
    let s: f64 = values.iter().map(|v| libm::pow(libm::fabs(*v), p)).sum();
    Ok(libm::pow(weight * s, 1.0 / p))
}

#[cfg(test)]
mod tests;
