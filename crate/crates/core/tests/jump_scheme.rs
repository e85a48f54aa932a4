use difflim::{
    build_jump_kernel, default_jump_meshes, evaluate_fixed_policy_on_chain, jump_step,
    make_auction_model, solve_jump_hjb, AuctionParams, ConstantPolicy, ControlGrid, Domain,
    FnPolicy, JumpMeshes, ModelSpec, SpaceMesh, TimeMesh,
};
use proptest::prelude::*;

fn auction() -> ModelSpec {
    make_auction_model(&AuctionParams::default(), 41).unwrap()
}

fn small_auction(params: AuctionParams, n_controls: usize) -> ModelSpec {
    let mut m = make_auction_model(&params, 41).unwrap();
    let step = 3.0 / (n_controls - 1) as f64;
    m.controls = ControlGrid::even(0.0, step, n_controls).unwrap();
    m
}

fn params() -> impl Strategy<Value = AuctionParams> {
    (
        0.2f64..1.0,
        0.1f64..0.9,
        0.1f64..0.9,
        0.0f64..0.4,
        0.02f64..0.3,
    )
        .prop_map(
            |(v, comp_frac, kappa, r0, noise_half_width)| AuctionParams {
                v,
                comp_hi: comp_frac * v,
                kappa,
                r0,
                noise_half_width,
            },
        )
}

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

#[test]
fn default_step_ratio_is_fixed() {
    let target = 2f64.powf(-2.0 / 3.0);
    let domain = Domain::new(-0.5, 3.0, 1.0).unwrap();
    for eps in [1.0, 0.5, 0.1, 10f64.powf(-1.5), 0.02, 0.01] {
        let m = default_jump_meshes(eps, &domain).unwrap();
        assert!(
            ((m.time.dt / eps) - target).abs() < 1e-12 * target,
            "eps={eps}"
        );
        assert!(m.time.dt / eps <= 1.0);
    }
}

proptest! {
    #![proptest_config(cases(64))]

    #[test]
    fn kernel_rows_are_stochastic(
        eps_idx in 0usize..3,
        node in 0.0f64..1.0,
        control in 0usize..301,
    ) {
        let eps = [1.0, 0.1, 0.01][eps_idx];
        let model = auction();
        let meshes = default_jump_meshes(eps, &model.domain).unwrap();
        let kernel = build_jump_kernel(&model, eps, meshes.space).unwrap();
        let i = ((meshes.space.n - 1) as f64 * node) as usize;
        let row = kernel.row(i, control);
        prop_assert!(row.entries.iter().all(|&(_, p)| p >= 0.0));
        prop_assert!(row.absorbed >= 0.0);
        prop_assert!((row.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!(row.entries.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn kernel_rows_stochastic_for_any_scale(eps in 1e-3f64..1.0, node in 0.0f64..1.0, control in 0usize..301) {
        let model = auction();
        let space = SpaceMesh::covering(&model.domain, 0.01).unwrap();
        let kernel = build_jump_kernel(&model, eps, space).unwrap();
        let i = ((space.n - 1) as f64 * node) as usize;
        prop_assert!((kernel.row(i, control).total_mass() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(cases(100))]

    // Raising one entry of the later slice never lowers any entry of the
    // earlier one, and lifts none by more than the bump.
    #[test]
    fn step_is_monotone_under_perturbation(
        p in params(),
        eps in 0.05f64..1.0,
        ratio in 0.05f64..=1.0,
        dx in 0.01f64..0.05,
        seed_vals in prop::collection::vec(-1.0f64..1.0, 8),
        bump_at in 0.0f64..1.0,
        bump in 1e-6f64..1.0,
    ) {
        let model = small_auction(p, 16);
        let space = SpaceMesh::covering(&model.domain, dx).unwrap();
        let kernel = build_jump_kernel(&model, eps, space).unwrap();
        let next: Vec<f64> = (0..space.n)
            .map(|i| {
                let x = space.x(i);
                seed_vals.iter().enumerate().map(|(j, c)| c * (j as f64 * 2.1 * x).sin()).sum()
            })
            .collect();
        let j = ((space.n - 1) as f64 * bump_at) as usize;
        let mut bumped = next.clone();
        bumped[j] += bump;
        let dt = ratio * eps;
        let base = jump_step(&kernel, dt, &next).unwrap();
        let up = jump_step(&kernel, dt, &bumped).unwrap();
        for i in 0..space.n {
            let d = up[i] - base[i];
            prop_assert!(d >= -1e-14, "node {} dropped by {}", i, d);
            prop_assert!(d <= bump * (1.0 + 1e-12) + 1e-14);
        }
    }

    #[test]
    fn fixed_policies_never_beat_the_optimum(
        eps in 0.2f64..1.0,
        a_idx in 0usize..16,
        threshold in 0.0f64..1.5,
    ) {
        let model = small_auction(AuctionParams::default(), 16);
        let meshes = default_jump_meshes(eps, &model.domain).unwrap();
        let (v, _) = solve_jump_hjb(&model, eps, &meshes).unwrap();
        let constant = evaluate_fixed_policy_on_chain(&model, eps, &meshes, &ConstantPolicy(a_idx)).unwrap();
        let switching = FnPolicy(move |_t: f64, x: f64| if x < threshold { a_idx } else { 0 });
        let switched = evaluate_fixed_policy_on_chain(&model, eps, &meshes, &switching).unwrap();
        for (k, (&opt, (&c, &s))) in v.values().iter().zip(constant.values().iter().zip(switched.values())).enumerate() {
            prop_assert!(c <= opt + 1e-12, "entry {}", k);
            prop_assert!(s <= opt + 1e-12, "entry {}", k);
        }
    }
}

#[test]
fn optimal_grid_policy_reproduces_value_on_chain() {
    let model = auction();
    let eps = 0.1;
    let meshes = default_jump_meshes(eps, &model.domain).unwrap();
    let (v, policy) = solve_jump_hjb(&model, eps, &meshes).unwrap();
    let j = evaluate_fixed_policy_on_chain(&model, eps, &meshes, &policy).unwrap();
    let worst = v
        .values()
        .iter()
        .zip(j.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-13, "worst = {worst}");
}

#[test]
fn unstable_step_is_refused() {
    let model = auction();
    let space = SpaceMesh::covering(&model.domain, 0.05).unwrap();
    let kernel = build_jump_kernel(&model, 0.1, space).unwrap();
    let next = vec![0.0; space.n];
    assert!(jump_step(&kernel, 0.11, &next).is_err());
    assert!(jump_step(&kernel, 0.1, &next).is_ok());
    assert!(jump_step(&kernel, 0.05, &next[1..]).is_err());
    let meshes = JumpMeshes {
        space,
        time: TimeMesh::covering(1.0, 0.2).unwrap(),
    };
    assert!(solve_jump_hjb(&model, 0.1, &meshes).is_err());
}

#[test]
fn node_cap_is_enforced() {
    let domain = Domain::new(-0.5, 3.0, 1.0).unwrap();
    assert!(difflim::jump::default_jump_meshes_capped(0.01, &domain, 1000).is_err());
    assert!(difflim::jump::default_jump_meshes_capped(0.01, &domain, 1 << 22).is_ok());
}
