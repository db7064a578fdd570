use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use proptest::prelude::*;

use super::*;
use crate::synth::{self, random_scalar, random_vector};

fn grid(n: usize) -> Grid {
    Grid::new(GridConfig::unit_square(n).unwrap()).unwrap()
}

fn rect_grid(nx: usize, ny: usize, lx: f64, ly: f64) -> Grid {
    Grid::new(GridConfig::new(nx, ny, lx, ly).unwrap()).unwrap()
}

#[test]
fn config_rejects_small_or_degenerate_grids() {
    assert!(GridConfig::new(3, 8, 1.0, 1.0).is_err());
    assert!(GridConfig::new(8, 8, 0.0, 1.0).is_err());
    assert!(GridConfig::new(8, 8, 1.0, f64::NAN).is_err());
    let g = GridConfig::new(8, 4, 2.0, 1.0).unwrap();
    assert_eq!(g.cell_volume(), 0.25 * 0.25);
}

#[test]
fn region_snaps_outward() {
    let cfg = GridConfig::unit_square(8).unwrap();
    // [0.3, 0.6] touches cells 2..=4 (cell 2 spans [0.25, 0.375])
    let r = RegionMask::from_rect(&cfg, 0.3, 0.6, 0.0, 0.125).unwrap();
    assert_eq!(r.cells(), &[2, 3, 4]);
    let exact = RegionMask::from_rect(&cfg, 0.25, 0.5, 0.25, 0.5).unwrap();
    assert_eq!(exact.len(), 4);
    assert!(RegionMask::from_rect(&cfg, 0.5, 0.5, 0.0, 1.0).is_err());
    assert!(RegionMask::from_cells(&cfg, vec![64]).is_err());
}

#[test]
fn divergence_of_constant_field_vanishes_in_interior() {
    let g = grid(8);
    let v = g.sample_vector(|_, _| 1.0, |_, _| 0.0);
    let d = g.divergence(&v).unwrap();
    for j in 0..8 {
        for i in 1..7 {
            assert_eq!(d.get(i, j), 0.0);
        }
    }
}

#[test]
fn divergence_of_linear_solenoidal_field() {
    let g = rect_grid(12, 10, 1.5, 1.0);
    let v = g.sample_vector(|x, _| x, |_, y| -y);
    let d = g.divergence(&v).unwrap();
    for j in 1..9 {
        for i in 1..11 {
            assert!(d.get(i, j).abs() < 1e-12);
        }
    }
}

#[test]
fn divergence_matches_index_oracle() {
    let g = rect_grid(9, 7, 1.0, 0.7);
    let mut rng = synth::rng(3);
    let v = random_vector(&g, &mut rng);
    let d = g.divergence(&v).unwrap();
    let (nx, ny) = (9, 7);
    let (hx, hy) = (g.hx(), g.hy());
    let x = v.x();
    let y = v.y();
    for j in 0..ny {
        for i in 0..nx {
            let want = (x[j * (nx + 1) + i + 1] - x[j * (nx + 1) + i]) / hx + (y[(j + 1) * nx + i] - y[j * nx + i]) / hy;
            assert!((d.values()[j * nx + i] - want).abs() <= 1e-14 * (1.0 + want.abs()));
        }
    }
}

#[test]
fn divergence_rejects_wrong_shape() {
    let g = grid(8);
    let v = VectorField2::zeros(9, 8);
    assert!(matches!(g.divergence(&v), Err(Error::Config { .. })));
}

#[test]
fn projection_is_idempotent() {
    let g = grid(16);
    let mut rng = synth::rng(11);
    let v = random_vector(&g, &mut rng);
    let p = g.leray_project(&v).unwrap().field;
    let pp = g.leray_project(&p).unwrap().field;
    let mut diff = pp.clone();
    diff.axpy(-1.0, &p);
    assert!(g.norm2(&diff) <= 1e-11 * (1.0 + g.norm2(&v)));
}

#[test]
fn projection_annihilates_gradients() {
    let g = grid(16);
    let mut rng = synth::rng(5);
    let phi = random_scalar(&g, &mut rng);
    let gp = g.gradient(&phi).unwrap();
    let p = g.leray_project(&gp).unwrap().field;
    assert!(p.max_abs() <= 1e-10, "{}", p.max_abs());
}

/// Dense Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Vec<f64> {
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&r, &s| a[r * n + col].abs().total_cmp(&a[s * n + col].abs()))
            .unwrap();
        for c in 0..n {
            a.swap(col * n + c, piv * n + c);
        }
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r * n + col] / a[col * n + col];
            for c in col..n {
                a[r * n + c] -= f * a[col * n + c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r * n + c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r * n + r];
    }
    x
}

#[test]
fn projection_matches_dense_poisson_oracle() {
    let n = 16;
    let g = grid(n);
    let mut rng = synth::rng(17);
    let v = random_vector(&g, &mut rng);
    let proj = g.leray_project(&v).unwrap();
    assert!(g.divergence(&proj.field).unwrap().max_abs() <= 1e-10);

    // assemble div grad densely, pin the gauge with a bordered mean constraint
    let nc = n * n;
    let m = nc + 1;
    let mut a = vec![0.0; m * m];
    let h2 = 1.0 / (g.hx() * g.hx());
    for j in 0..n {
        for i in 0..n {
            let r = j * n + i;
            for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (ii, jj) = (i as i64 + di, j as i64 + dj);
                if ii >= 0 && jj >= 0 && ii < n as i64 && jj < n as i64 {
                    a[r * m + (jj as usize) * n + ii as usize] += h2;
                    a[r * m + r] -= h2;
                }
            }
            a[r * m + nc] = 1.0;
            a[nc * m + r] = 1.0;
        }
    }
    let mut b = g.divergence(&v).unwrap().into_values();
    b.push(0.0);
    let phi = dense_solve(a, b, m);
    let phi = ScalarField::from_values(n, n, phi[..nc].to_vec()).unwrap();
    let mut want = v.clone();
    want.axpy(-1.0, &g.gradient(&phi).unwrap());
    let mut diff = want.clone();
    diff.axpy(-1.0, &proj.field);
    assert!(diff.max_abs() < 1e-10, "{}", diff.max_abs());
}

#[test]
fn projection_requires_no_slip_walls() {
    let g = grid(8);
    let mut v = g.vector_zeros();
    let k = v.x_index(0, 3);
    v.values_mut()[k] = 1.0;
    assert!(g.leray_project(&v).is_err());
}

#[test]
fn laplacian_of_zero_is_zero() {
    let g = grid(8);
    assert_eq!(g.laplacian_dirichlet(&g.scalar_zeros()).unwrap(), g.scalar_zeros());
    assert_eq!(g.laplacian_dirichlet_v(&g.vector_zeros()).unwrap(), g.vector_zeros());
}

#[test]
fn laplacian_eigenfunction_refinement_order() {
    let (lx, ly) = (1.0, 0.8);
    let lam = -PI * PI * (1.0 / (lx * lx) + 1.0 / (ly * ly));
    let err = |n: usize| {
        let g = rect_grid(n, n, lx, ly);
        let s = g.sample_scalar(|x, y| (PI * x / lx).sin() * (PI * y / ly).sin());
        let mut r = g.laplacian_dirichlet(&s).unwrap();
        r.axpy(-lam, &s);
        g.norm2(&r) / (lam.abs() * g.norm2(&s))
    };
    let (e1, e2) = (err(16), err(32));
    let order = (e1 / e2).log2();
    assert!(order >= 1.9, "observed order {order}");

    // the x-faces of a vector field see the same eigenfunction
    let errv = |n: usize| {
        let g = rect_grid(n, n, lx, ly);
        let f = |x: f64, y: f64| (PI * x / lx).sin() * (PI * y / ly).sin();
        let v = g.sample_vector(f, f);
        let mut r = g.laplacian_dirichlet_v(&v).unwrap();
        r.axpy(-lam, &v);
        g.norm2(&r) / (lam.abs() * g.norm2(&v))
    };
    let order_v = (errv(16) / errv(32)).log2();
    assert!(order_v >= 1.9, "observed order {order_v}");
}

#[test]
fn laplacian_matches_dense_oracle() {
    let n = 8;
    let g = rect_grid(n, n, 1.0, 1.3);
    let mut rng = synth::rng(23);
    let s = random_scalar(&g, &mut rng);
    let (ax, ay) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    let mut a = vec![0.0; n * n * n * n];
    let nc = n * n;
    for j in 0..n {
        for i in 0..n {
            let r = j * n + i;
            for (di, dj, w) in [(-1i64, 0i64, ax), (1, 0, ax), (0, -1, ay), (0, 1, ay)] {
                let (ii, jj) = (i as i64 + di, j as i64 + dj);
                a[r * nc + r] -= w;
                if ii >= 0 && jj >= 0 && ii < n as i64 && jj < n as i64 {
                    a[r * nc + (jj as usize) * n + ii as usize] += w;
                } else {
                    a[r * nc + r] -= w; // mirrored ghost
                }
            }
        }
    }
    let lap = g.laplacian_dirichlet(&s).unwrap();
    for r in 0..nc {
        let want: f64 = (0..nc).map(|c| a[r * nc + c] * s.values()[c]).sum();
        assert!((lap.values()[r] - want).abs() <= 1e-13 * want.abs().max(ax));
    }
}

#[test]
fn helmholtz_solvers_invert_the_laplacian() {
    let g = rect_grid(12, 9, 1.0, 0.75);
    let mut rng = synth::rng(29);
    let a = 0.013;
    let x = random_scalar(&g, &mut rng);
    let mut b = x.clone();
    b.axpy(-a, &g.laplacian_dirichlet(&x).unwrap());
    let mut d = g.solve_helmholtz_scalar(a, &b);
    d.axpy(-1.0, &x);
    assert!(d.max_abs() < 1e-12);

    let v = random_vector(&g, &mut rng);
    let mut bv = v.clone();
    bv.axpy(-a, &g.laplacian_dirichlet_v(&v).unwrap());
    let mut dv = g.solve_helmholtz_vector(a, &bv);
    dv.axpy(-1.0, &v);
    assert!(dv.max_abs() < 1e-12);
}

#[test]
fn advection_by_zero_velocity_vanishes() {
    let g = grid(8);
    let mut rng = synth::rng(1);
    let s = random_scalar(&g, &mut rng);
    let v = random_vector(&g, &mut rng);
    let z = g.vector_zeros();
    assert_eq!(g.advect_scalar(&z, &s).unwrap().max_abs(), 0.0);
    assert_eq!(g.advect_vector(&z, &v).unwrap().max_abs(), 0.0);
}

#[test]
fn advection_is_energy_neutral_for_solenoidal_transport() {
    let g = rect_grid(16, 12, 1.0, 0.9);
    for seed in 0..10 {
        let mut rng = synth::rng(100 + seed);
        let u = synth::fourier_solenoidal(&g, synth::FourierSpec::default(), &mut rng);
        let s = random_scalar(&g, &mut rng);
        let v = random_vector(&g, &mut rng);
        let (a, warn) = g.advect_scalar_checked(&u, &s).unwrap();
        assert!(!warn);
        assert!(g.inner(&a, &s).abs() <= 1e-12 * g.inner(&s, &s));
        let (av, warn) = g.advect_vector_checked(&u, &v).unwrap();
        assert!(!warn);
        assert!(g.inner(&av, &v).abs() <= 1e-12 * g.inner(&v, &v));
    }
}

#[test]
fn advection_flags_compressible_transport() {
    let g = grid(8);
    let mut rng = synth::rng(2);
    let u = random_vector(&g, &mut rng);
    let s = random_scalar(&g, &mut rng);
    assert!(g.advect_scalar_checked(&u, &s).unwrap().1);
}

#[test]
fn scalar_advection_matches_centred_stencil_oracle() {
    let n = 20;
    let g = grid(n);
    let u = g.sample_vector(|_, _| 1.0, |_, _| 0.0);
    let s = g.sample_scalar(|x, y| (-40.0 * ((x - 0.5).powi(2) + (y - 0.45).powi(2))).exp());
    let out = g.advect_scalar(&u, &s).unwrap();
    let h = g.hx();
    let phi = |i: i64, j: usize| if i < 0 || i >= n as i64 { 0.0 } else { s.get(i as usize, j) };
    for j in 0..n {
        for i in 0..n {
            let (ue, uw) = (u.x_at(i + 1, j), u.x_at(i, j));
            let ii = i as i64;
            let conservative = (ue * 0.5 * (phi(ii, j) + phi(ii + 1, j)) - uw * 0.5 * (phi(ii - 1, j) + phi(ii, j))) / h;
            let advective = (ue * (phi(ii + 1, j) - phi(ii, j)) + uw * (phi(ii, j) - phi(ii - 1, j))) / (2.0 * h);
            let want = 0.5 * (conservative + advective);
            assert!((out.get(i, j) - want).abs() <= 1e-14 * (1.0 + 1.0 / h), "cell {i},{j}");
        }
    }
}

#[test]
fn vector_advection_is_consistent() {
    // (u.grad)u for a solenoidal field, compared with the analytic value away from walls
    let f = |n: usize| {
        let g = grid(n);
        let psi = |x: f64, y: f64| (PI * x).sin().powi(2) * (PI * y).sin().powi(2) / PI;
        let u = g.from_stream_function(psi);
        let ux = |x: f64, y: f64| (PI * x).sin().powi(2) * (2.0 * PI * y).sin();
        let uy = |x: f64, y: f64| -(2.0 * PI * x).sin() * (PI * y).sin().powi(2);
        let ax = |x: f64, y: f64| {
            let dxux = PI * (2.0 * PI * x).sin() * (2.0 * PI * y).sin();
            let dyux = 2.0 * PI * (PI * x).sin().powi(2) * (2.0 * PI * y).cos();
            ux(x, y) * dxux + uy(x, y) * dyux
        };
        let ay = |x: f64, y: f64| {
            let dxuy = -2.0 * PI * (2.0 * PI * x).cos() * (PI * y).sin().powi(2);
            let dyuy = -PI * (2.0 * PI * x).sin() * (2.0 * PI * y).sin();
            ux(x, y) * dxuy + uy(x, y) * dyuy
        };
        let want = g.sample_vector(ax, ay);
        let mut got = g.advect_vector(&u, &u).unwrap();
        got.axpy(-1.0, &want);
        g.norm2(&got)
    };
    let order = (f(16) / f(32)).log2();
    assert!(order > 1.5, "observed order {order}");
}

#[test]
fn velocity_transposes_match_forward_operators() {
    let g = rect_grid(10, 8, 1.0, 0.8);
    let mut rng = synth::rng(41);
    let d = random_vector(&g, &mut rng);
    let s = random_scalar(&g, &mut rng);
    let psi = random_scalar(&g, &mut rng);
    let v = random_vector(&g, &mut rng);
    let w = random_vector(&g, &mut rng);

    let lhs = g.inner(&g.advect_scalar(&d, &s).unwrap(), &psi);
    let mut z = g.vector_zeros();
    g.add_advect_scalar_velocity_transpose(1.0, &s, &psi, &mut z);
    assert!((lhs - g.inner(&d, &z)).abs() <= 1e-13 * (1.0 + lhs.abs()));
    assert!(z.walls_are_zero());

    let lhs = g.inner(&g.advect_vector(&d, &v).unwrap(), &w);
    let mut z = g.vector_zeros();
    g.add_advect_vector_velocity_transpose(1.0, &v, &w, &mut z);
    assert!((lhs - g.inner(&d, &z)).abs() <= 1e-13 * (1.0 + lhs.abs()));
    assert!(z.walls_are_zero());

    let theta = random_scalar(&g, &mut rng);
    let dir = [0.6, 0.8];
    let lhs = g.inner(&g.buoyancy(&theta, dir), &w);
    let rhs = g.inner(&theta, &g.buoyancy_transpose(&w, dir));
    assert!((lhs - rhs).abs() <= 1e-14 * (1.0 + lhs.abs()));
}

#[test]
fn inner_and_norms_basic_values() {
    let g = rect_grid(8, 6, 2.0, 1.5);
    let mut e = g.scalar_zeros();
    e.set(3, 2, 1.0);
    assert_eq!(g.inner(&e, &e), g.hx() * g.hy());
    let one = ScalarField::constant(8, 6, 1.0);
    assert!((g.norm_lp(&one, 1.0).unwrap() - 3.0).abs() < 1e-14);
    assert_eq!(g.norm_lp(&e, f64::INFINITY).unwrap(), 1.0);
    assert!(matches!(g.norm_lp(&one, 0.5), Err(Error::Argument(_))));
    let p3 = g.norm_lp(&one, 3.0).unwrap();
    assert!((p3 - 3.0f64.powf(1.0 / 3.0)).abs() < 1e-14);
}

/// Error-free transformation sums: a double-double accumulator.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

#[test]
fn l2_norm_matches_extended_precision_oracle() {
    let g = rect_grid(37, 23, 1.0, 0.6);
    let mut rng = synth::rng(7);
    let s = random_scalar(&g, &mut rng);
    let (mut hi, mut lo) = (0.0, 0.0);
    for v in s.values() {
        let (p, pe) = two_prod(*v, *v);
        let (t, te) = two_sum(hi, p);
        hi = t;
        lo += te + pe;
    }
    let want = ((hi + lo) * g.cell_volume()).sqrt();
    let got = g.norm_lp(&s, 2.0).unwrap();
    assert!((got - want).abs() <= 1e-13 * want);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn projection_contracts_and_cleans_divergence(seed in 0u64..10_000) {
        let g = grid(12);
        let mut rng = synth::rng(seed);
        let mut v = random_vector(&g, &mut rng);
        v.scale(1.0 + (seed % 7) as f64);
        let p = g.leray_project(&v).unwrap().field;
        prop_assert!(g.divergence(&p).unwrap().max_abs() <= 1e-10);
        prop_assert!(g.norm2(&p) <= g.norm2(&v) * (1.0 + 1e-12));
    }

    #[test]
    fn operators_are_linear(seed in 0u64..10_000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let g = rect_grid(9, 11, 1.0, 1.2);
        let mut rng = synth::rng(seed);
        let (x, y) = (random_scalar(&g, &mut rng), random_scalar(&g, &mut rng));
        let (p, q) = (random_vector(&g, &mut rng), random_vector(&g, &mut rng));
        let u = synth::fourier_solenoidal(&g, synth::FourierSpec::default(), &mut rng);
        let close = |l: &[f64], r: &[f64]| {
            let scale = r.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            l.iter().zip(r).all(|(l, r)| (l - r).abs() <= 1e-13 * scale)
        };
        let xy = ScalarField::lincomb(a, &x, b, &y);
        let pq = VectorField2::lincomb(a, &p, b, &q);

        let l = g.laplacian_dirichlet(&xy).unwrap();
        let r = ScalarField::lincomb(a, &g.laplacian_dirichlet(&x).unwrap(), b, &g.laplacian_dirichlet(&y).unwrap());
        prop_assert!(close(l.values(), r.values()));

        let l = g.divergence(&pq).unwrap();
        let r = ScalarField::lincomb(a, &g.divergence(&p).unwrap(), b, &g.divergence(&q).unwrap());
        prop_assert!(close(l.values(), r.values()));

        let l = g.advect_scalar(&u, &xy).unwrap();
        let r = ScalarField::lincomb(a, &g.advect_scalar(&u, &x).unwrap(), b, &g.advect_scalar(&u, &y).unwrap());
        prop_assert!(close(l.values(), r.values()));

        let l = g.advect_vector(&u, &pq).unwrap();
        let r = VectorField2::lincomb(a, &g.advect_vector(&u, &p).unwrap(), b, &g.advect_vector(&u, &q).unwrap());
        prop_assert!(close(l.values(), r.values()));

        let l = g.leray_project(&pq).unwrap().field;
        let r = VectorField2::lincomb(a, &g.leray_project(&p).unwrap().field, b, &g.leray_project(&q).unwrap().field);
        prop_assert!(close(l.values(), r.values()));
    }
}
