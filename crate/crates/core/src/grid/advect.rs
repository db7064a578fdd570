//! Skew-symmetric centred transport on the MAC grid.
//!
//! Each operator is a list of edges between neighbouring unknowns. An edge
//! carries the transporting velocity through the shared control-volume face
//! (a fixed linear combination of at most two velocity unknowns) and adds
//! `+c * phi[b]` to `a` and `-c * phi[a]` to `b`. The assembled matrix is
//! therefore skew-symmetric for every transporting field, and equals
//! `1/2 [(u.grad) phi + div(u phi)]` with centred interpolation.
//! Walls never appear as edge endpoints: their unknowns are identically zero.

use alloc::vec::Vec;

use super::GridConfig;

#[derive(Debug, Clone, Copy)]
struct Edge {
    a: usize,
    b: usize,
    vel: [usize; 2],
    weight: [f64; 2],
    inv2h: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct EdgeList {
    edges: Vec<Edge>,
}

impl EdgeList {
    /// Cell-to-cell edges for a cell-centred scalar.
    pub(crate) fn scalar(cfg: &GridConfig) -> Self {
        let (nx, ny) = (cfg.nx, cfg.ny);
        let (ix, iy) = (0.5 / cfg.hx(), 0.5 / cfg.hy());
        let xlen = (nx + 1) * ny;
        let cell = |i: usize, j: usize| j * nx + i;
        let xf = |i: usize, j: usize| j * (nx + 1) + i;
        let yf = |i: usize, j: usize| xlen + j * nx + i;
        let mut edges = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                if i + 1 < nx {
                    let f = xf(i + 1, j);
                    edges.push(Edge {
                        a: cell(i, j),
                        b: cell(i + 1, j),
                        vel: [f, f],
                        weight: [1.0, 0.0],
                        inv2h: ix,
                    });
                }
                if j + 1 < ny {
                    let f = yf(i, j + 1);
                    edges.push(Edge {
                        a: cell(i, j),
                        b: cell(i, j + 1),
                        vel: [f, f],
                        weight: [1.0, 0.0],
                        inv2h: iy,
                    });
                }
            }
        }
        EdgeList { edges }
    }

    /// Face-to-face edges for both velocity components, over interior faces.
    pub(crate) fn vector(cfg: &GridConfig) -> Self {
        let (nx, ny) = (cfg.nx, cfg.ny);
        let (ix, iy) = (0.5 / cfg.hx(), 0.5 / cfg.hy());
        let xlen = (nx + 1) * ny;
        let xf = |i: usize, j: usize| j * (nx + 1) + i;
        let yf = |i: usize, j: usize| xlen + j * nx + i;
        let mut edges = Vec::with_capacity(4 * nx * ny);
        // x-momentum control volumes, centred on x-faces (i, j), 1 <= i < nx
        for j in 0..ny {
            for i in 1..nx {
                if i + 1 < nx {
                    // through the cell centre (i, j)
                    edges.push(Edge {
                        a: xf(i, j),
                        b: xf(i + 1, j),
                        vel: [xf(i, j), xf(i + 1, j)],
                        weight: [0.5, 0.5],
                        inv2h: ix,
                    });
                }
                if j + 1 < ny {
                    // through the corner (x_i, y_{j+1})
                    edges.push(Edge {
                        a: xf(i, j),
                        b: xf(i, j + 1),
                        vel: [yf(i - 1, j + 1), yf(i, j + 1)],
                        weight: [0.5, 0.5],
                        inv2h: iy,
                    });
                }
            }
        }
        // y-momentum control volumes, centred on y-faces (i, j), 1 <= j < ny
        for j in 1..ny {
            for i in 0..nx {
                if j + 1 < ny {
                    edges.push(Edge {
                        a: yf(i, j),
                        b: yf(i, j + 1),
                        vel: [yf(i, j), yf(i, j + 1)],
                        weight: [0.5, 0.5],
                        inv2h: iy,
                    });
                }
                if i + 1 < nx {
                    edges.push(Edge {
                        a: yf(i, j),
                        b: yf(i + 1, j),
                        vel: [xf(i + 1, j - 1), xf(i + 1, j)],
                        weight: [0.5, 0.5],
                        inv2h: ix,
                    });
                }
            }
        }
        EdgeList { edges }
    }

    #[inline]
    fn coefficient(e: &Edge, u: &[f64]) -> f64 {
        e.inv2h * (e.weight[0] * u[e.vel[0]] + e.weight[1] * u[e.vel[1]])
    }

    /// `out = A(u) phi` (overwrites `out`).
    pub(crate) fn apply(&self, u: &[f64], phi: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        self.apply_scaled(1.0, u, phi, out);
    }

    /// `out += scale * A(u) phi`.
    pub(crate) fn apply_scaled(&self, scale: f64, u: &[f64], phi: &[f64], out: &mut [f64]) {
        for e in &self.edges {
            let c = scale * Self::coefficient(e, u);
            out[e.a] += c * phi[e.b];
            out[e.b] -= c * phi[e.a];
        }
    }

    /// `out += scale * z`, `z` the gradient of `d -> <A(d) phi, psi>`.
    pub(crate) fn velocity_transpose_scaled(&self, scale: f64, phi: &[f64], psi: &[f64], out: &mut [f64]) {
        for e in &self.edges {
            let g = scale * e.inv2h * (phi[e.b] * psi[e.a] - phi[e.a] * psi[e.b]);
            out[e.vel[0]] += e.weight[0] * g;
            out[e.vel[1]] += e.weight[1] * g;
        }
    }
}
