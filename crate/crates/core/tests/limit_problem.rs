use difflim::model::{Drift, Noise, Reward};
use difflim::{
    compute_delta_r, estimate_holder_constant, estimate_r1, extract_argmax_set,
    extract_limit_policy, make_auction_model, make_skewed_auction_model, solve_correction_pde,
    solve_diffusion_hjb, ArgmaxSet, AuctionParams, ControlGrid, DiffusionMeshes, Domain, Error,
    ModelSpec, NoiseQuadrature, SourceField, SpaceMesh, SurfaceKind, TimeMesh, ValueSurface,
};
use proptest::prelude::*;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn auction() -> ModelSpec {
    make_auction_model(&AuctionParams::default(), 41).unwrap()
}

fn coarse(model: &ModelSpec) -> DiffusionMeshes {
    DiffusionMeshes::new(&model.domain, 0.05, 2.5e-3).unwrap()
}

#[test]
fn unit_reward_gives_remaining_time() {
    let mut model = auction();
    model.reward = Reward::Constant { value: 1.0 };
    model.controls = ControlGrid::singleton(0.0);
    let meshes = DiffusionMeshes::default_for(&model.domain).unwrap();
    let (v, _) = solve_diffusion_hjb(&model, &meshes).unwrap();
    for i in meshes.space.window(0.5, 1.5) {
        assert!(
            (v.value(0, i) - 1.0).abs() < 1e-3,
            "x={}",
            meshes.space.x(i)
        );
    }
    assert!(v.terminal().iter().all(|&x| x == 0.0));
}

#[test]
fn oversized_time_step_is_refused() {
    let model = auction();
    let meshes = DiffusionMeshes::new(&model.domain, 0.01, 0.01).unwrap();
    match solve_diffusion_hjb(&model, &meshes) {
        Err(Error::SchemeStability(msg)) => assert!(msg.contains("CFL")),
        other => panic!("expected a stability error, got {other:?}"),
    }
}

#[test]
fn full_argmax_with_reward_source_is_the_limit_solve() {
    let model = auction();
    let meshes = coarse(&model);
    let (v, _) = solve_diffusion_hjb(&model, &meshes).unwrap();
    let set = ArgmaxSet::full(meshes.time, meshes.space, model.controls.len());
    let src = SourceField::from_reward(&model, meshes.time, meshes.space);
    let w = solve_correction_pde(&model, &v, &set, &src, &meshes).unwrap();
    let worst = v
        .values()
        .iter()
        .zip(w.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-14, "worst = {worst}");
}

#[test]
fn argmax_set_contains_the_grid_policy() {
    let model = auction();
    let meshes = coarse(&model);
    let (v, _) = solve_diffusion_hjb(&model, &meshes).unwrap();
    let policy = extract_limit_policy(&model, &v);
    let set = extract_argmax_set(&model, &v, 1e-9).unwrap();
    for k in (0..meshes.time.n_steps).step_by(37) {
        for i in 1..meshes.space.n - 1 {
            assert!(set.contains(k, i, policy.index(k, i)), "k={k} i={i}");
        }
    }
}

// Two-point law {-2^-2, 2^-2}, drift 1, quadratic surface q·x²/2:
// the residual integrates to ε·q/2 exactly.
#[test]
fn quadratic_residual_is_exact() {
    let q = 1.7;
    let eps = 2f64.powi(-4);
    let model = ModelSpec::new(
        Drift::Constant { value: 1.0 },
        Noise::Additive { scale: 1.0 },
        Reward::Constant { value: 0.0 },
        NoiseQuadrature::new(vec![-0.25, 0.25], vec![0.5, 0.5]).unwrap(),
        ControlGrid::singleton(0.0),
        Domain::new(-1.0, 1.0, 1.0).unwrap(),
    )
    .unwrap();
    let time = TimeMesh::covering(1.0, 0.5).unwrap();
    let space = SpaceMesh::new(-1.0, 2f64.powi(-6), 129).unwrap();
    let s = ValueSurface::from_fn(SurfaceKind::Diffusion, time, space, |_, x| 0.5 * q * x * x);
    let r = compute_delta_r(&model, &s, eps).unwrap();
    let expected = 0.5 * eps * q;
    for k in 0..s.n_slices() {
        for i in 16..space.n - 16 {
            let got = r.value(k, i, 0);
            assert!(
                ((got - expected) / expected).abs() < 1e-12,
                "i={i}: {got} vs {expected}"
            );
        }
    }
}

// Skewed two-point law {-c, 2c} with weights {2/3, 1/3}, no drift, cubic
// surface x³/6: the residual integrates to √ε·c³/3.
#[test]
fn cubic_residual_is_exact() {
    let c = 2f64.powi(-3);
    let eps = 2f64.powi(-4);
    let model = skewed_fixture(c);
    let time = TimeMesh::covering(1.0, 0.5).unwrap();
    let space = SpaceMesh::new(-1.0, 2f64.powi(-6), 129).unwrap();
    let s = ValueSurface::from_fn(SurfaceKind::Diffusion, time, space, |_, x| x.powi(3) / 6.0);
    let r = compute_delta_r(&model, &s, eps).unwrap();
    let expected = eps.sqrt() * c.powi(3) / 3.0;
    for i in 16..space.n - 16 {
        let got = r.value(0, i, 0);
        assert!(
            ((got - expected) / expected).abs() < 1e-10,
            "i={i}: {got} vs {expected}"
        );
    }

    let h = estimate_holder_constant(&s, 1.0).unwrap();
    assert!((h.k - 1.0).abs() < 1e-8, "K = {}", h.k);

    let r1 = estimate_r1(&model, &s).unwrap();
    assert!(!r1.is_zero());
    let third = c.powi(3) / 3.0;
    for i in 8..space.n - 8 {
        assert!((r1.value(0, i, 0) - third).abs() < 1e-9 * third.max(1.0));
    }
}

fn skewed_fixture(c: f64) -> ModelSpec {
    ModelSpec::new(
        Drift::Zero,
        Noise::Additive { scale: 1.0 },
        Reward::Constant { value: 0.0 },
        NoiseQuadrature::two_point(c).unwrap(),
        ControlGrid::singleton(0.0),
        Domain::new(-1.0, 1.0, 1.0).unwrap(),
    )
    .unwrap()
}

#[test]
fn skewed_auction_has_a_live_correction() {
    let model = make_skewed_auction_model(&AuctionParams::default(), 0.1).unwrap();
    let meshes = coarse(&model);
    let (v, _) = solve_diffusion_hjb(&model, &meshes).unwrap();
    let r1 = estimate_r1(&model, &v).unwrap();
    assert!(!r1.is_zero());
    let set = extract_argmax_set(&model, &v, 1e-9).unwrap();
    let phi = solve_correction_pde(&model, &v, &set, &r1, &meshes).unwrap();
    assert!(phi.sup_norm() > 0.0);
    assert!(phi.terminal().iter().all(|&x| x == 0.0));
}

proptest! {
    #![proptest_config(cases(24))]

    #[test]
    fn symmetric_laws_have_no_correction(half_width in 0.01f64..0.3, half_nodes in 1usize..30, odd in any::<bool>()) {
        let n = 2 * half_nodes + usize::from(odd);
        let params = AuctionParams { noise_half_width: half_width, ..AuctionParams::default() };
        let model = make_auction_model(&params, n).unwrap();
        let time = TimeMesh::covering(1.0, 0.25).unwrap();
        let space = SpaceMesh::covering(&model.domain, 0.05).unwrap();
        let v = ValueSurface::from_fn(SurfaceKind::Diffusion, time, space, |t, x| (1.0 - t) * (3.0 * x).sin());
        let r1 = estimate_r1(&model, &v).unwrap();
        prop_assert!(r1.is_zero());
        prop_assert_eq!(r1.sup_norm(), 0.0);
    }

    #[test]
    fn symmetric_two_node_laws_have_no_correction(c in 0.01f64..0.5, w in 0.1f64..0.9) {
        let model = ModelSpec::new(
            Drift::MeanReverting { kappa: 0.5, r0: 0.15 },
            Noise::Additive { scale: 1.0 },
            Reward::Constant { value: w },
            NoiseQuadrature::new(vec![-c, c], vec![0.5, 0.5]).unwrap(),
            ControlGrid::even(0.0, 0.5, 3).unwrap(),
            Domain::new(-1.0, 1.0, 1.0).unwrap(),
        )
        .unwrap();
        let time = TimeMesh::covering(1.0, 0.5).unwrap();
        let space = SpaceMesh::covering(&model.domain, 0.1).unwrap();
        let v = ValueSurface::from_fn(SurfaceKind::Diffusion, time, space, |_, x| x.powi(3));
        prop_assert!(estimate_r1(&model, &v).unwrap().is_zero());
    }
}

// Smooth reward, skewed noise: the corrected limit tracks the jump value
// better than the limit alone.
#[test]
fn correction_improves_a_smooth_skewed_problem() {
    use difflim::experiments::{run_convergence, StudyConfig};
    use difflim::model::RewardFn;
    use std::sync::Arc;

    let model = ModelSpec::new(
        Drift::Zero,
        Noise::Additive { scale: 1.0 },
        Reward::Custom(RewardFn(Arc::new(|x, _a| (3.0 * x).sin()))),
        NoiseQuadrature::two_point(0.3).unwrap(),
        ControlGrid::singleton(0.0),
        Domain::new(-2.0, 3.0, 1.0).unwrap(),
    )
    .unwrap();
    let cfg = StudyConfig {
        eps_grid: vec![0.1, 10f64.powf(-1.5)],
        window: (-0.5, 1.5),
        ..StudyConfig::default()
    };
    let report = run_convergence(&model, &cfg).unwrap();
    assert!(report.correction_active);
    assert_eq!(report.rows.len(), 2);
    for r in &report.rows {
        assert!(
            r.corrected_error < 0.7 * r.value_error,
            "eps={}: {} vs {}",
            r.epsilon,
            r.corrected_error,
            r.value_error
        );
    }
}
