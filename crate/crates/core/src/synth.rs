//! Seeded synthetic fields: white noise for tests and truncated Fourier
//! series with a tunable decay rate for perturbation experiments.

use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{Field, Grid, ScalarField, VectorField2};

/// The generator used for every seeded quantity in the crate.
pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent uniform `[-1, 1]` values in every cell.
pub fn random_scalar(grid: &Grid, rng: &mut SeededRng) -> ScalarField {
    let mut s = grid.scalar_zeros();
    for v in s.values_mut() {
        *v = rng.gen_range(-1.0..=1.0);
    }
    s
}

/// Independent uniform `[-1, 1]` values on every interior face.
pub fn random_vector(grid: &Grid, rng: &mut SeededRng) -> VectorField2 {
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut v = grid.vector_zeros();
    for j in 0..ny {
        for i in 1..nx {
            v.set_x(i, j, rng.gen_range(-1.0..=1.0));
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            v.set_y(i, j, rng.gen_range(-1.0..=1.0));
        }
    }
    v
}

/// Spectral shape of a synthesized field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierSpec {
    /// Modes per axis.
    pub modes: usize,
    /// Coefficient `(k, l)` is scaled by `(k^2 + l^2)^(-decay / 2)`.
    pub decay: f64,
}

impl Default for FourierSpec {
    fn default() -> Self {
        FourierSpec { modes: 4, decay: 2.0 }
    }
}

fn coefficients(spec: FourierSpec, rng: &mut SeededRng) -> alloc::vec::Vec<f64> {
    let m = spec.modes;
    let mut c = alloc::vec![0.0; m * m];
    for l in 0..m {
        for k in 0..m {
            let kk = ((k + 1) * (k + 1) + (l + 1) * (l + 1)) as f64;
            c[l * m + k] = rng.gen_range(-1.0..=1.0) * libm::pow(kk, -0.5 * spec.decay);
        }
    }
    c
}

fn sine_series(coef: &[f64], m: usize, lx: f64, ly: f64, x: f64, y: f64) -> f64 {
    let mut s = 0.0;
    for l in 0..m {
        let sy = libm::sin((l + 1) as f64 * PI * y / ly);
        for k in 0..m {
            s += coef[l * m + k] * libm::sin((k + 1) as f64 * PI * x / lx) * sy;
        }
    }
    s
}

/// Sine series vanishing on the walls, sampled at cell centres.
pub fn fourier_scalar(grid: &Grid, spec: FourierSpec, rng: &mut SeededRng) -> ScalarField {
    let c = coefficients(spec, rng);
    let (lx, ly) = (grid.config().lx, grid.config().ly);
    grid.sample_scalar(|x, y| sine_series(&c, spec.modes, lx, ly, x, y))
}

/// Componentwise sine series on the faces (not divergence-free).
pub fn fourier_vector(grid: &Grid, spec: FourierSpec, rng: &mut SeededRng) -> VectorField2 {
    let cx = coefficients(spec, rng);
    let cy = coefficients(spec, rng);
    let (lx, ly) = (grid.config().lx, grid.config().ly);
    grid.sample_vector(
        |x, y| sine_series(&cx, spec.modes, lx, ly, x, y),
        |x, y| sine_series(&cy, spec.modes, lx, ly, x, y),
    )
}

/// Discrete curl of a sine-series stream function: exactly divergence-free.
pub fn fourier_solenoidal(grid: &Grid, spec: FourierSpec, rng: &mut SeededRng) -> VectorField2 {
    let c = coefficients(spec, rng);
    let (lx, ly) = (grid.config().lx, grid.config().ly);
    grid.from_stream_function(|x, y| sine_series(&c, spec.modes, lx, ly, x, y))
}
