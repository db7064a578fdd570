use std::path::PathBuf;

use boussinesq_lab::{load_config, parse_config, ExperimentConfig, LabError, Scenario};
use proptest::prelude::*;

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn default_fixture_is_the_documented_parameter_set() {
    let cfg = load_config(&shipped("default.json")).unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
    assert_eq!((cfg.grid.nx, cfg.grid.ny, cfg.grid.lx, cfg.grid.ly), (16, 16, 1.0, 1.0));
    assert_eq!((cfg.time.t_final, cfg.time.nt), (0.5, 20));
    assert_eq!(
        (cfg.physics.nu, cfg.physics.kappa, cfg.physics.buoyancy_dir),
        (0.05, 0.05, [0.0, 1.0])
    );
    assert!(cfg.physics.advection && cfg.physics.buoyancy);
    assert_eq!(
        (cfg.weights.alpha1, cfg.weights.alpha2, cfg.weights.eps1, cfg.weights.eps2),
        (1.0, 1.0, 0.0, 0.0)
    );
    assert_eq!(
        (cfg.controls.q_lo, cfg.controls.q_hi, cfg.controls.theta_lo, cfg.controls.theta_hi),
        ([-1.0; 2], [1.0; 2], -1.0, 1.0)
    );
    assert_eq!((cfg.optimizer.max_iters, cfg.optimizer.kkt_tol), (500, 1e-6));
    assert_eq!(cfg.sweep.magnitudes, [1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2]);
    assert_eq!(cfg.sweep.norm_exponent, 4.0);
    assert_eq!(cfg.taylor.steps, [1e-1, 1e-2, 1e-3, 1e-4]);
    assert_eq!(cfg.mms.sizes, [16, 32, 64]);
    assert_eq!(cfg.duality.instances, 5);
    assert_eq!(cfg.hash(), "a883ce1292661b0d");
}

#[test]
fn every_shipped_config_builds() {
    for name in ["default.json", "taylor.json", "convex.json", "regression.json", "tracking.json"] {
        let cfg = load_config(&shipped(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        Scenario::build(&cfg).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn experiment_configs_pin_their_shapes() {
    let reg = load_config(&shipped("regression.json")).unwrap();
    assert!(reg.physics.advection && reg.physics.buoyancy);
    assert_eq!((reg.weights.eps1, reg.weights.eps2), (0.0, 0.0));
    let convex = load_config(&shipped("convex.json")).unwrap();
    assert!(!convex.physics.advection && !convex.physics.buoyancy);
    assert_eq!((convex.weights.eps1, convex.weights.eps2), (1e-2, 1e-2));
    for c in [&reg, &convex] {
        assert_eq!((c.grid.nx, c.grid.ny, c.time.nt), (32, 32, 50));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn json_round_trip_preserves_config_and_hash(
        seed in any::<u64>(),
        nx in 4usize..64,
        nt in 1usize..200,
        nu in 1e-4f64..10.0,
        t_final in 1e-3f64..10.0,
        eps in 0.0f64..1.0,
    ) {
        let mut cfg = ExperimentConfig { seed, ..ExperimentConfig::default() };
        cfg.grid.nx = nx;
        cfg.time.nt = nt;
        cfg.time.t_final = t_final;
        cfg.physics.nu = nu;
        cfg.weights.eps1 = eps;
        let back = parse_config(&cfg.to_json()).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn nonpositive_diffusivity_is_rejected_by_path(kappa in -10.0f64..=0.0) {
        let text = format!(r#"{{"physics": {{"kappa": {kappa:?}}}}}"#);
        match parse_config(&text) {
            Err(e @ LabError::Invalid(_)) => {
                prop_assert_eq!(e.exit_code(), 2);
                prop_assert!(e.to_string().contains("physics.kappa"));
            }
            other => prop_assert!(false, "{:?}", other.map(|c| c.physics.kappa)),
        }
    }
}
