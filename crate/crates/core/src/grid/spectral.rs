//! Fast diagonalization of separable second-difference operators.
//!
//! Each 1-D operator is a symmetric tridiagonal second difference whose
//! eigenvectors are known in closed form (sine or cosine modes). Tensor
//! products of the 1-D bases diagonalize the 2-D Laplacian exactly, giving a
//! direct solver for `(c I - s lap) x = b`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BasisKind {
    /// Cell-centred unknowns, zero value on the wall via `ghost = -interior`.
    CellDirichlet,
    /// Node unknowns strictly between two Dirichlet wall nodes.
    NodeDirichlet,
    /// Cell-centred unknowns with zero flux through the walls.
    CellNeumann,
}

/// Orthonormal eigenbasis of a 1-D negative second difference.
#[derive(Debug, Clone)]
pub(crate) struct Basis1d {
    n: usize,
    /// `modes[k * n + j]`: entry `j` of eigenvector `k`.
    modes: Vec<f64>,
    /// Eigenvalues of `-d^2/dx^2` (nonnegative).
    eig: Vec<f64>,
}

impl Basis1d {
    pub(crate) fn new(kind: BasisKind, n: usize, h: f64) -> Self {
        let mut modes = vec![0.0; n * n];
        let mut eig = vec![0.0; n];
        let nf = n as f64;
        for k in 0..n {
            let (freq, lam) = match kind {
                BasisKind::CellDirichlet => {
                    let f = (k + 1) as f64 * PI / nf;
                    (f, f)
                }
                BasisKind::NodeDirichlet => {
                    let f = (k + 1) as f64 * PI / (nf + 1.0);
                    (f, f)
                }
                BasisKind::CellNeumann => {
                    let f = k as f64 * PI / nf;
                    (f, f)
                }
            };
            let s = libm::sin(0.5 * lam);
            eig[k] = 4.0 * s * s / (h * h);
            let row = &mut modes[k * n..(k + 1) * n];
            for (j, m) in row.iter_mut().enumerate() {
                let jf = j as f64;
                *m = match kind {
                    BasisKind::CellDirichlet => libm::sin(freq * (jf + 0.5)),
                    BasisKind::NodeDirichlet => libm::sin(freq * (jf + 1.0)),
                    BasisKind::CellNeumann => libm::cos(freq * (jf + 0.5)),
                };
            }
            let norm = libm::sqrt(row.iter().map(|v| v * v).sum::<f64>());
            for m in row.iter_mut() {
                *m /= norm;
            }
        }
        Basis1d { n, modes, eig }
    }

    #[inline]
    fn mode(&self, k: usize) -> &[f64] {
        &self.modes[k * self.n..(k + 1) * self.n]
    }
}

/// Applies the basis along the fast (x) axis of a `rows x b.n` block.
fn along_rows(b: &Basis1d, data: &mut [f64], rows: usize, inverse: bool, scratch: &mut Vec<f64>) {
    let n = b.n;
    scratch.clear();
    scratch.resize(n, 0.0);
    for r in 0..rows {
        let row = &mut data[r * n..(r + 1) * n];
        if inverse {
            scratch.iter_mut().for_each(|s| *s = 0.0);
            for (k, &c) in row.iter().enumerate() {
                for (s, m) in scratch.iter_mut().zip(b.mode(k)) {
                    *s += c * m;
                }
            }
        } else {
            for (k, s) in scratch.iter_mut().enumerate() {
                *s = b.mode(k).iter().zip(row.iter()).map(|(m, v)| m * v).sum();
            }
        }
        row.copy_from_slice(scratch);
    }
}

/// Applies the basis along the slow (y) axis of a `b.n x cols` block.
fn along_cols(b: &Basis1d, data: &mut [f64], cols: usize, inverse: bool, scratch: &mut Vec<f64>) {
    let n = b.n;
    scratch.clear();
    scratch.resize(n * cols, 0.0);
    for k in 0..n {
        let out = &mut scratch[k * cols..(k + 1) * cols];
        for j in 0..n {
            let m = if inverse { b.mode(j)[k] } else { b.mode(k)[j] };
            let src = &data[j * cols..(j + 1) * cols];
            for (o, s) in out.iter_mut().zip(src) {
                *o += m * s;
            }
        }
    }
    data.copy_from_slice(scratch);
}

/// Solves `(shift I + scale (-lap)) x = rhs` in place on an `nx x ny` block.
/// A zero denominator (the constant Neumann mode) maps to a zero coefficient,
/// which fixes the zero-mean gauge.
pub(crate) fn solve_separable(bx: &Basis1d, by: &Basis1d, data: &mut [f64], nx: usize, ny: usize, shift: f64, scale: f64) {
    debug_assert_eq!(bx.n, nx);
    debug_assert_eq!(by.n, ny);
    debug_assert_eq!(data.len(), nx * ny);
    let mut scratch = Vec::new();
    along_rows(bx, data, ny, false, &mut scratch);
    along_cols(by, data, nx, false, &mut scratch);
    for j in 0..ny {
        for i in 0..nx {
            let d = shift + scale * (bx.eig[i] + by.eig[j]);
            let c = &mut data[j * nx + i];
            *c = if d == 0.0 { 0.0 } else { *c / d };
        }
    }
    along_cols(by, data, nx, true, &mut scratch);
    along_rows(bx, data, ny, true, &mut scratch);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_second_difference(kind: BasisKind, n: usize, h: f64) -> Vec<f64> {
        // -d^2 as a dense matrix
        let mut a = vec![0.0; n * n];
        let inv = 1.0 / (h * h);
        for j in 0..n {
            a[j * n + j] = 2.0 * inv;
            if j > 0 {
                a[j * n + j - 1] = -inv;
            }
            if j + 1 < n {
                a[j * n + j + 1] = -inv;
            }
        }
        match kind {
            BasisKind::CellDirichlet => {
                a[0] += inv;
                a[n * n - 1] += inv;
            }
            BasisKind::NodeDirichlet => {}
            BasisKind::CellNeumann => {
                a[0] -= inv;
                a[n * n - 1] -= inv;
            }
        }
        a
    }

    #[test]
    fn modes_are_orthonormal_eigenvectors() {
        for kind in [BasisKind::CellDirichlet, BasisKind::NodeDirichlet, BasisKind::CellNeumann] {
            let (n, h) = (9, 0.3);
            let b = Basis1d::new(kind, n, h);
            let a = dense_second_difference(kind, n, h);
            for k in 0..n {
                let v = b.mode(k);
                for r in 0..n {
                    let av: f64 = (0..n).map(|c| a[r * n + c] * v[c]).sum();
                    assert!((av - b.eig[k] * v[r]).abs() < 1e-11, "{kind:?} mode {k}");
                }
                for l in 0..n {
                    let d: f64 = v.iter().zip(b.mode(l)).map(|(x, y)| x * y).sum();
                    let want = if k == l { 1.0 } else { 0.0 };
                    assert!((d - want).abs() < 1e-13);
                }
            }
        }
    }
}
