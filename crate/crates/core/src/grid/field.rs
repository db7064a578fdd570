use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Common storage interface of grid fields.
pub trait Field: Clone {
    fn values(&self) -> &[f64];
    fn values_mut(&mut self) -> &mut [f64];
    fn shape(&self) -> (usize, usize);

    /// `self += a * other`.
    fn axpy(&mut self, a: f64, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (x, y) in self.values_mut().iter_mut().zip(other.values()) {
            *x += a * y;
        }
    }

    fn scale(&mut self, a: f64) {
        for x in self.values_mut() {
            *x *= a;
        }
    }

    fn fill_zero(&mut self) {
        for x in self.values_mut() {
            *x = 0.0;
        }
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }

    fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    fn max_abs(&self) -> f64 {
        self.values().iter().fold(0.0_f64, |m, v| m.max(libm::fabs(*v)))
    }

    /// `a * x + b * y`.
    fn lincomb(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        let mut out = x.clone();
        for (o, (xv, yv)) in out.values_mut().iter_mut().zip(x.values().iter().zip(y.values())) {
            *o = a * xv + b * yv;
        }
        out
    }
}

/// Cell-centred scalar, row-major with `i` (x-index) fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        ScalarField {
            nx,
            ny,
            values: vec![0.0; nx * ny],
        }
    }

    pub fn constant(nx: usize, ny: usize, c: f64) -> Self {
        ScalarField {
            nx,
            ny,
            values: vec![c; nx * ny],
        }
    }

    pub fn from_values(nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != nx * ny {
            return Err(Error::config("field", "scalar field needs nx * ny values"));
        }
        Ok(ScalarField { nx, ny, values })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[j * self.nx + i] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.values[j * self.nx + i] += v;
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

impl Field for ScalarField {
    fn values(&self) -> &[f64] {
        &self.values
    }
    fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }
}

/// MAC face field: `(nx + 1) * ny` x-components followed by `nx * (ny + 1)`
/// y-components. Wall-normal faces (`i = 0, nx` for x; `j = 0, ny` for y)
/// hold the no-slip value zero.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField2 {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl VectorField2 {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        VectorField2 {
            nx,
            ny,
            values: vec![0.0; (nx + 1) * ny + nx * (ny + 1)],
        }
    }

    /// Builds a field from its two face arrays; the wall-normal entries must be zero.
    pub fn from_components(nx: usize, ny: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != (nx + 1) * ny || y.len() != nx * (ny + 1) {
            return Err(Error::config("field", "vector field component lengths do not match the grid"));
        }
        let mut values = x;
        values.extend_from_slice(&y);
        let v = VectorField2 { nx, ny, values };
        if !v.walls_are_zero() {
            return Err(Error::config("field", "wall-normal face values must be zero (no-slip)"));
        }
        Ok(v)
    }

    #[inline]
    pub(crate) fn x_len(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    #[inline]
    pub fn x_index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn y_index(&self, i: usize, j: usize) -> usize {
        self.x_len() + j * self.nx + i
    }

    #[inline]
    pub fn x_at(&self, i: usize, j: usize) -> f64 {
        self.values[self.x_index(i, j)]
    }

    #[inline]
    pub fn y_at(&self, i: usize, j: usize) -> f64 {
        self.values[self.y_index(i, j)]
    }

    #[inline]
    pub fn set_x(&mut self, i: usize, j: usize, v: f64) {
        let k = self.x_index(i, j);
        self.values[k] = v;
    }

    #[inline]
    pub fn set_y(&mut self, i: usize, j: usize, v: f64) {
        let k = self.y_index(i, j);
        self.values[k] = v;
    }

    pub fn x(&self) -> &[f64] {
        &self.values[..self.x_len()]
    }

    pub fn y(&self) -> &[f64] {
        &self.values[self.x_len()..]
    }

    pub fn walls_are_zero(&self) -> bool {
        let (nx, ny) = (self.nx, self.ny);
        (0..ny).all(|j| self.x_at(0, j) == 0.0 && self.x_at(nx, j) == 0.0)
            && (0..nx).all(|i| self.y_at(i, 0) == 0.0 && self.y_at(i, ny) == 0.0)
    }

    /// Largest face magnitude per axis, used for CFL estimates.
    pub fn max_components(&self) -> (f64, f64) {
        let mx = self.x().iter().fold(0.0_f64, |m, v| m.max(libm::fabs(*v)));
        let my = self.y().iter().fold(0.0_f64, |m, v| m.max(libm::fabs(*v)));
        (mx, my)
    }
}

impl Field for VectorField2 {
    fn values(&self) -> &[f64] {
        &self.values
    }
    fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }
}
