use boussinesq_core::boussinesq::{Model, PhysicalParams, TimeGrid};
use boussinesq_core::control::{ConstantBounds, Control, ControlSpace};
use boussinesq_core::fit;
use boussinesq_core::grid::{Grid, GridConfig, RegionMask};
use boussinesq_core::optimizer::{kkt_residual, measure_condition_values};
use boussinesq_core::synth;
use boussinesq_core::verify::duality_instance;
use proptest::prelude::*;
use rand::Rng;

fn space(n: usize, nt: usize) -> ControlSpace {
    let cfg = GridConfig::unit_square(n).unwrap();
    let grid = Grid::new(cfg).unwrap();
    let bounds = ConstantBounds {
        q_lo: [-1.0, -0.5],
        q_hi: [1.0, 2.0],
        theta_lo: -0.25,
        theta_hi: 0.75,
    };
    ControlSpace::new(
        &grid,
        RegionMask::from_rect(&cfg, 0.0, 0.5, 0.0, 1.0).unwrap(),
        RegionMask::from_rect(&cfg, 0.25, 1.0, 0.5, 1.0).unwrap(),
        nt,
        1.0 / nt as f64,
        bounds,
    )
    .unwrap()
}

fn random_control(s: &ControlSpace, seed: u64, amp: f64) -> Control {
    let mut rng = synth::rng(seed);
    let mut c = s.zeros();
    c.q.iter_mut()
        .chain(c.theta.iter_mut())
        .for_each(|v| *v = amp * rng.gen_range(-1.0..=1.0));
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn box_projection_is_idempotent_admissible_and_nonexpansive(a in 0u64..1_000_000, b in 0u64..1_000_000, amp in 0.1f64..5.0) {
        let s = space(8, 3);
        let (x, y) = (random_control(&s, a, amp), random_control(&s, b, amp));
        let (px, py) = (s.project_box(&x), s.project_box(&y));
        prop_assert!(s.is_admissible(&px));
        prop_assert_eq!(&s.project_box(&px), &px);
        let d = Control::lincomb(1.0, &px, -1.0, &py);
        let e = Control::lincomb(1.0, &x, -1.0, &y);
        prop_assert!(s.norm_l2(&d) <= s.norm_l2(&e));
    }

    #[test]
    fn kkt_residual_vanishes_at_projected_stationary_points(seed in 0u64..1_000_000) {
        let s = space(8, 3);
        let x = s.project_box(&random_control(&s, seed, 3.0));
        // g pushes every value against the bound it sits on, and is zero in the interior
        let mut g = s.zeros();
        for (c, k, lo, hi) in s.entries() {
            let (v, gv) = if c == 0 { (x.q[k], &mut g.q[k]) } else { (x.theta[k], &mut g.theta[k]) };
            *gv = if v == lo { 1.0 } else if v == hi { -1.0 } else { 0.0 };
        }
        prop_assert_eq!(kkt_residual(&s, &x, &g), 0.0);
        let mut bad = g.clone();
        bad.q.iter_mut().for_each(|v| *v = -*v - 1.0);
        prop_assert!(kkt_residual(&s, &x, &bad) > 0.0);
    }

    #[test]
    fn measure_is_nondecreasing_and_counts_brute_force(seed in 0u64..1_000_000, e0 in 1e-3f64..0.1, ratio in 1.1f64..3.0) {
        let s = space(8, 3);
        let v = random_control(&s, seed, 1.0);
        let eps: Vec<f64> = (0..6).map(|k| e0 * ratio.powi(k)).collect();
        let r = measure_condition_values(&s, &v, &eps).unwrap();
        prop_assert!(r.q.mass.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(r.theta.mass.windows(2).all(|w| w[0] <= w[1]));
        for (i, e) in eps.iter().enumerate() {
            prop_assert_eq!(r.q.counts[i], v.q.iter().filter(|x| x.abs() <= *e).count());
            prop_assert_eq!(r.theta.counts[i], v.theta.iter().filter(|x| x.abs() <= *e).count());
        }
    }

    #[test]
    fn loglog_fit_recovers_power_laws(c in 0.01f64..100.0, p in -3.0f64..3.0) {
        let x: Vec<f64> = (0..6).map(|k| 10f64.powf(-(k as f64) / 2.0)).collect();
        let y: Vec<f64> = x.iter().map(|x| c * x.powf(p)).collect();
        let f = fit::loglog(&x, &y).unwrap();
        prop_assert!((f.slope - p).abs() <= 1e-10);
        prop_assert!((f.intercept - c.ln()).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn duality_residual_is_at_rounding_level(seed in 0u64..1_000_000, advection in any::<bool>()) {
        let params = PhysicalParams { advection, ..PhysicalParams::default() };
        let model = Model::new(GridConfig::unit_square(8).unwrap(), params, TimeGrid::new(0.2, 5).unwrap()).unwrap();
        let d = duality_instance(&model, seed).unwrap();
        prop_assert!(d.residual <= 1e-11, "residual {}", d.residual);
    }
}
