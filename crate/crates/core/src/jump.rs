//! Backward dynamic program for the pure-jump HJB equation.
//!
//! One explicit step of length `h` reads
//!
//! ```text
//! V_k(x_i) = V_{k+1}(x_i) + (h/ε)·max_a [ Σ_j p_ij(a) V_{k+1}(x_j) − V_{k+1}(x_i) + ε·r(x_i, a) ]
//! ```
//!
//! where `p_ij(a)` is the one-jump transition kernel on the space mesh. The
//! value is normalised by the jump intensity `1/ε`, so it is directly
//! comparable with the diffusive limit. The step is monotone iff `h/ε ≤ 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{bracket_position, SpaceMesh, TimeMesh};
use crate::model::{Domain, ModelSpec};
use crate::policy::FeedbackPolicy;
use crate::surface::{PolicySurface, SurfaceKind, ValueSurface};

/// Default cap on `space nodes × time slices` for jump solves.
pub const DEFAULT_NODE_CAP: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpMeshes {
    pub space: SpaceMesh,
    pub time: TimeMesh,
}

impl JumpMeshes {
    pub fn grid_nodes(&self) -> usize {
        self.space.n * self.time.n_slices()
    }
}

/// `dx = ε^{3/2}/2`, `dt = dx^{2/3}`, capped at [`DEFAULT_NODE_CAP`] grid nodes.
pub fn default_jump_meshes(epsilon: f64, domain: &Domain) -> Result<JumpMeshes> {
    default_jump_meshes_capped(epsilon, domain, DEFAULT_NODE_CAP)
}

pub fn default_jump_meshes_capped(epsilon: f64, domain: &Domain, cap: usize) -> Result<JumpMeshes> {
    check_epsilon(epsilon)?;
    domain.check()?;
    let dx = epsilon.powf(1.5) / 2.0;
    let dt = dx.powf(2.0 / 3.0);
    let n_space = (domain.width() / dx + 1e-9).floor() + 1.0;
    let n_steps = (domain.horizon / dt - 1e-9).ceil().max(1.0);
    let nodes = n_space * (n_steps + 1.0);
    if nodes > cap as f64 {
        return Err(Error::Resource {
            nodes: nodes.min(usize::MAX as f64) as usize,
            bytes: (nodes * 10.0) as u64,
            cap,
        });
    }
    Ok(JumpMeshes {
        space: SpaceMesh::covering(domain, dx)?,
        time: TimeMesh::covering(domain.horizon, dt)?,
    })
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::config(format!(
            "epsilon must lie in (0, 1] (got {epsilon})"
        )));
    }
    Ok(())
}

/// One row of the transition kernel: where the mass of a jump from node `i`
/// under control `m` ends up.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRow {
    /// `(destination node, probability)`, sorted by node, no duplicates.
    pub entries: Vec<(usize, f64)>,
    /// Mass leaving the mesh (valued 0 under the Dirichlet condition).
    pub absorbed: f64,
}

impl KernelRow {
    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum::<f64>() + self.absorbed
    }
}

/// Shifts in node units when `b1` ignores the mark and `b2` ignores `(x, a)`.
#[derive(Debug, Clone)]
struct SeparableShifts {
    /// `√ε·b2(e_k)/dx`
    noise: Vec<f64>,
    lo: f64,
    hi: f64,
}

/// Lazily evaluated one-jump kernel `p_ij(a)`: each quadrature node's
/// destination `x_i + ε·b1 + √ε·b2` deposits its weight linearly on the two
/// bracketing mesh nodes.
#[derive(Debug, Clone)]
pub struct JumpKernel<'m> {
    model: &'m ModelSpec,
    epsilon: f64,
    mesh: SpaceMesh,
    weights: Vec<f64>,
    separable: Option<SeparableShifts>,
}

/// Builds the kernel for `model` at scale `epsilon` on `mesh`.
pub fn build_jump_kernel<'m>(
    model: &'m ModelSpec,
    epsilon: f64,
    mesh: SpaceMesh,
) -> Result<JumpKernel<'m>> {
    check_epsilon(epsilon)?;
    let sqrt_eps = epsilon.sqrt();
    let separable = (model.drift.is_mark_free() && model.noise.is_state_free()).then(|| {
        let noise: Vec<f64> = model
            .quadrature
            .nodes()
            .iter()
            .map(|&e| sqrt_eps * model.b2(0.0, 0.0, e) / mesh.dx)
            .collect();
        let lo = noise.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = noise.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        SeparableShifts { noise, lo, hi }
    });
    Ok(JumpKernel {
        model,
        epsilon,
        mesh,
        weights: model.quadrature.weights().to_vec(),
        separable,
    })
}

impl<'m> JumpKernel<'m> {
    pub fn mesh(&self) -> &SpaceMesh {
        &self.mesh
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n_controls(&self) -> usize {
        self.model.controls.len()
    }

    /// Fractional destination positions (node units) of every quadrature node.
    fn positions(&self, i: usize, m: usize, out: &mut Vec<f64>) {
        out.clear();
        let x = self.mesh.x(i);
        let a = self.model.controls.value(m);
        match &self.separable {
            Some(s) => {
                let base = i as f64 + self.epsilon * self.model.b1(x, a, 0.0) / self.mesh.dx;
                out.extend(s.noise.iter().map(|d| base + d));
            }
            None => {
                for &e in self.model.quadrature.nodes() {
                    let y = x + self.model.jump(self.epsilon, x, a, e);
                    out.push((y - self.mesh.x_lo) / self.mesh.dx);
                }
            }
        }
    }

    /// Materialised kernel row for node `i` and control `m`.
    pub fn row(&self, i: usize, m: usize) -> KernelRow {
        let mut pos = Vec::with_capacity(self.weights.len());
        self.positions(i, m, &mut pos);
        let mut raw: Vec<(usize, f64)> = Vec::with_capacity(2 * pos.len());
        let mut absorbed = 0.0;
        for (&p, &w) in pos.iter().zip(&self.weights) {
            match bracket_position(p, self.mesh.n) {
                Some(b) => {
                    if b.frac < 1.0 {
                        raw.push((b.left, w * (1.0 - b.frac)));
                    }
                    if b.frac > 0.0 {
                        raw.push((b.left + 1, w * b.frac));
                    }
                }
                None => absorbed += w,
            }
        }
        raw.sort_by_key(|&(j, _)| j);
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(raw.len());
        for (j, p) in raw {
            match entries.last_mut() {
                Some((last, acc)) if *last == j => *acc += p,
                _ => entries.push((j, p)),
            }
        }
        KernelRow { entries, absorbed }
    }

    /// `Σ_j p_ij(a_m)·v_j` without materialising the row.
    #[inline]
    pub fn expectation(&self, i: usize, m: usize, v: &[f64]) -> f64 {
        let n = self.mesh.n;
        let last = (n - 1) as f64;
        match &self.separable {
            Some(s) => {
                let x = self.mesh.x(i);
                let a = self.model.controls.value(m);
                let base = i as f64 + self.epsilon * self.model.b1(x, a, 0.0) / self.mesh.dx;
                expectation_separable(base, s, &self.weights, v, last)
            }
            None => {
                let mut pos = Vec::with_capacity(self.weights.len());
                self.positions(i, m, &mut pos);
                let mut acc = 0.0;
                for (&p, &w) in pos.iter().zip(&self.weights) {
                    if let Some(b) = bracket_position(p, n) {
                        let l = v[b.left];
                        acc += w * (l + b.frac * (v[b.left + 1] - l));
                    }
                }
                acc
            }
        }
    }
}

#[inline]
fn expectation_separable(base: f64, s: &SeparableShifts, w: &[f64], v: &[f64], last: f64) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    if base + s.lo >= 0.0 && base + s.hi < last {
        // Entire support strictly inside the mesh.
        for (d, wk) in s.noise.iter().zip(w) {
            let p = base + d;
            let l = p as usize;
            let f = p - l as f64;
            let vl = v[l];
            acc += wk * (vl + f * (v[l + 1] - vl));
        }
    } else {
        for (d, wk) in s.noise.iter().zip(w) {
            let p = base + d;
            if p >= 0.0 && p <= last {
                let l = (p as usize).min(n - 2);
                let f = p - l as f64;
                let vl = v[l];
                acc += wk * (vl + f * (v[l + 1] - vl));
            }
        }
    }
    acc
}

fn check_guard(epsilon: f64, dt: f64) -> Result<()> {
    let ratio = dt / epsilon;
    if ratio > 1.0 + 1e-12 {
        return Err(Error::SchemeStability(format!(
            "dt/epsilon = {ratio} > 1 (dt = {dt}, epsilon = {epsilon}); the jump scheme is not monotone"
        )));
    }
    Ok(())
}

fn check_slice(slice: &[f64], k: usize) -> Result<()> {
    if let Some(i) = slice.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            slice: k,
            detail: format!("non-finite value at node {i}"),
        });
    }
    Ok(())
}

/// `ε·r(x_i, a_m)` for every node and control.
fn scaled_rewards(model: &ModelSpec, epsilon: f64, space: &SpaceMesh) -> Vec<f64> {
    let controls = model.controls.values();
    let mut table = Vec::with_capacity(space.n * controls.len());
    for i in 0..space.n {
        let x = space.x(i);
        table.extend(controls.iter().map(|&a| epsilon * model.reward(x, a)));
    }
    table
}

fn bellman_step(
    kernel: &JumpKernel,
    rewards: &[f64],
    rate: f64,
    next: &[f64],
    cur: &mut [f64],
    row: &mut [u16],
) {
    let n = next.len();
    let n_controls = kernel.n_controls();
    cur[1..n - 1]
        .par_iter_mut()
        .zip(row[1..n - 1].par_iter_mut())
        .enumerate()
        .with_min_len(32)
        .for_each(|(off, (out, choice))| {
            let i = off + 1;
            let r_row = &rewards[i * n_controls..(i + 1) * n_controls];
            let mut best = f64::NEG_INFINITY;
            let mut best_m = 0usize;
            for (m, &r) in r_row.iter().enumerate() {
                let h = kernel.expectation(i, m, next) + r;
                if h > best {
                    best = h;
                    best_m = m;
                }
            }
            *out = next[i] + rate * (best - next[i]);
            *choice = best_m as u16;
        });
}

/// One backward step of the scheme of length `dt` applied to an arbitrary
/// later slice `next`. Boundary entries are copied from `next`.
pub fn jump_step(kernel: &JumpKernel, dt: f64, next: &[f64]) -> Result<Vec<f64>> {
    let mesh = *kernel.mesh();
    if next.len() != mesh.n {
        return Err(Error::config(format!(
            "slice has {} entries, mesh has {} nodes",
            next.len(),
            mesh.n
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::config(format!("dt must be > 0 (got {dt})")));
    }
    let eps = kernel.epsilon();
    check_guard(eps, dt)?;
    let rewards = scaled_rewards(kernel.model, eps, &mesh);
    let mut cur = next.to_vec();
    let mut row = vec![0u16; mesh.n];
    bellman_step(kernel, &rewards, dt / eps, next, &mut cur, &mut row);
    Ok(cur)
}

/// Solves the jump HJB backward from the zero terminal slice and records the
/// maximising control (smallest index on ties) at every interior node.
pub fn solve_jump_hjb(
    model: &ModelSpec,
    epsilon: f64,
    meshes: &JumpMeshes,
) -> Result<(ValueSurface, PolicySurface)> {
    check_guard(epsilon, meshes.time.dt)?;
    let kernel = build_jump_kernel(model, epsilon, meshes.space)?;
    let rewards = scaled_rewards(model, epsilon, &meshes.space);

    let mut values =
        ValueSurface::zeros(SurfaceKind::Jump, Some(epsilon), meshes.time, meshes.space);
    let mut policy = PolicySurface::zeros(meshes.time, meshes.space);

    for k in (0..meshes.time.n_steps).rev() {
        let rate = meshes.time.step(k) / epsilon;
        let (cur, next) = values.step_pair(k);
        bellman_step(&kernel, &rewards, rate, next, cur, policy.row_mut(k));
        check_slice(values.slice(k), k)?;
    }
    Ok((values, policy))
}

/// Value of a fixed feedback policy on the same Markov chain: the jump-solver
/// recursion with the control plugged in instead of maximised over.
pub fn evaluate_fixed_policy_on_chain(
    model: &ModelSpec,
    epsilon: f64,
    meshes: &JumpMeshes,
    policy: &dyn FeedbackPolicy,
) -> Result<ValueSurface> {
    check_guard(epsilon, meshes.time.dt)?;
    let kernel = build_jump_kernel(model, epsilon, meshes.space)?;
    let n = meshes.space.n;
    let n_controls = model.controls.len();
    let space = meshes.space;
    let mut values =
        ValueSurface::zeros(SurfaceKind::Jump, Some(epsilon), meshes.time, meshes.space);

    for k in (0..meshes.time.n_steps).rev() {
        let t = meshes.time.t(k);
        let rate = meshes.time.step(k) / epsilon;
        let (cur, next) = values.step_pair(k);
        let bad_control = cur[1..n - 1]
            .par_iter_mut()
            .enumerate()
            .with_min_len(32)
            .map(|(off, out)| {
                let i = off + 1;
                let x = space.x(i);
                let m = policy.control_index(t, x);
                if m >= n_controls {
                    return Some((i, m));
                }
                let a = model.controls.value(m);
                let h = kernel.expectation(i, m, next) + epsilon * model.reward(x, a);
                *out = next[i] + rate * (h - next[i]);
                None
            })
            .find_first(|bad| bad.is_some())
            .flatten();
        if let Some((i, m)) = bad_control {
            return Err(Error::config(format!(
                "policy returned control index {m} at step {k}, node {i}; grid has {n_controls} controls"
            )));
        }
        check_slice(values.slice(k), k)?;
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        make_auction_model, AuctionParams, ControlGrid, Drift, Noise, NoiseQuadrature, Reward,
    };
    use crate::policy::ConstantPolicy;

    fn static_model(controls: ControlGrid) -> ModelSpec {
        ModelSpec::new(
            Drift::Zero,
            Noise::Zero,
            Reward::Custom(crate::model::RewardFn(std::sync::Arc::new(|x, a| {
                1.0 - (x - a).powi(2)
            }))),
            NoiseQuadrature::uniform(0.1, 4).unwrap(),
            controls,
            Domain::new(-1.0, 1.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn default_mesh_sizes() {
        let d = Domain::new(-0.5, 3.0, 1.0).unwrap();
        let m = default_jump_meshes(1.0, &d).unwrap();
        assert_eq!(m.space.dx, 0.5);
        assert!((m.time.dt - 2f64.powf(-2.0 / 3.0)).abs() < 1e-15);
        let m = default_jump_meshes(1e-2, &d).unwrap();
        assert_eq!(m.space.n, 7001);
        for eps in [1.0, 0.3, 0.1, 0.05, 10f64.powf(-1.5), 0.01] {
            let m = default_jump_meshes(eps, &d).unwrap();
            assert!((m.time.dt / eps - 2f64.powf(-2.0 / 3.0)).abs() < 1e-12);
        }
        assert!(matches!(
            default_jump_meshes(1e-3, &d),
            Err(Error::Resource { .. })
        ));
        assert!(default_jump_meshes(0.0, &d).is_err());
        assert!(default_jump_meshes(1.5, &d).is_err());
    }

    #[test]
    fn zero_dynamics_kernel_is_identity() {
        let model = static_model(ControlGrid::even(0.0, 0.5, 3).unwrap());
        let mesh = SpaceMesh::new(-1.0, 0.1, 21).unwrap();
        let k = build_jump_kernel(&model, 0.2, mesh).unwrap();
        for i in 0..mesh.n {
            let row = k.row(i, 1);
            assert_eq!(row.entries.len(), 1);
            assert_eq!(row.entries[0].0, i);
            assert!((row.entries[0].1 - 1.0).abs() < 1e-15);
            assert_eq!(row.absorbed, 0.0);
        }
    }

    #[test]
    fn destination_on_node_gives_single_entry() {
        // Constant drift moving exactly one node per jump.
        let mut model = static_model(ControlGrid::singleton(0.0));
        model.drift = Drift::Constant { value: 0.5 };
        let mesh = SpaceMesh::new(-1.0, 0.125, 17).unwrap();
        let k = build_jump_kernel(&model, 0.25, mesh).unwrap();
        let row = k.row(3, 0);
        assert_eq!(row.entries, vec![(4, 1.0)]);
        let edge = k.row(16, 0);
        assert!(edge.entries.is_empty());
        assert_eq!(edge.absorbed, 1.0);
    }

    #[test]
    fn auction_kernel_rows_are_stochastic() {
        let model = make_auction_model(&AuctionParams::default(), 41).unwrap();
        let meshes = default_jump_meshes(0.1, &model.domain).unwrap();
        let k = build_jump_kernel(&model, 0.1, meshes.space).unwrap();
        let i = meshes.space.nearest(0.5);
        for m in 0..model.controls.len() {
            let row = k.row(i, m);
            assert!((row.total_mass() - 1.0).abs() < 1e-12);
            assert_eq!(row.absorbed, 0.0);
            assert!(row.entries.iter().all(|&(_, p)| p >= 0.0));
        }
    }

    #[test]
    fn expectation_matches_materialised_row() {
        let model = make_auction_model(&AuctionParams::default(), 41).unwrap();
        let meshes = default_jump_meshes(0.1, &model.domain).unwrap();
        let k = build_jump_kernel(&model, 0.1, meshes.space).unwrap();
        let v: Vec<f64> = meshes.space.nodes().map(|x| (3.0 * x).sin()).collect();
        for &i in &[0usize, 1, 5, 100, meshes.space.n - 2, meshes.space.n - 1] {
            for &m in &[0usize, 150, 300] {
                let row = k.row(i, m);
                let direct: f64 = row.entries.iter().map(|&(j, p)| p * v[j]).sum();
                assert!((k.expectation(i, m, &v) - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_kernel_one_step_back() {
        let model = static_model(ControlGrid::even(-0.5, 0.25, 5).unwrap());
        let eps = 0.1;
        let meshes = JumpMeshes {
            space: SpaceMesh::new(-1.0, 0.25, 9).unwrap(),
            time: TimeMesh::covering(1.0, 0.05).unwrap(),
        };
        let (v, p) = solve_jump_hjb(&model, eps, &meshes).unwrap();
        let k = meshes.time.n_steps - 1;
        for i in 1..8 {
            let x = meshes.space.x(i);
            let best = model
                .controls
                .values()
                .iter()
                .map(|&a| model.reward(x, a))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((v.value(k, i) - meshes.time.step(k) * best).abs() < 1e-14);
            let a = model.controls.value(p.index(k, i));
            assert!((model.reward(x, a) - best).abs() < 1e-15);
        }
        assert!(v.terminal().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_reward_gives_zero_value() {
        let mut model = make_auction_model(&AuctionParams::default(), 11).unwrap();
        model.reward = Reward::Constant { value: 0.0 };
        let meshes = default_jump_meshes(0.3, &model.domain).unwrap();
        let (v, _) = solve_jump_hjb(&model, 0.3, &meshes).unwrap();
        assert!(v.values().iter().all(|&x| x == 0.0));
        let j = evaluate_fixed_policy_on_chain(&model, 0.3, &meshes, &ConstantPolicy(7)).unwrap();
        assert!(j.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unstable_time_step_rejected() {
        let model = make_auction_model(&AuctionParams::default(), 11).unwrap();
        let meshes = JumpMeshes {
            space: SpaceMesh::covering(&model.domain, 0.05).unwrap(),
            time: TimeMesh::covering(1.0, 0.2).unwrap(),
        };
        let err = solve_jump_hjb(&model, 0.1, &meshes).unwrap_err();
        assert!(matches!(err, Error::SchemeStability(_)));
    }

    #[test]
    fn out_of_range_policy_rejected() {
        let model = make_auction_model(&AuctionParams::default(), 11).unwrap();
        let meshes = default_jump_meshes(0.5, &model.domain).unwrap();
        let err =
            evaluate_fixed_policy_on_chain(&model, 0.5, &meshes, &ConstantPolicy(301)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn auction_best_static_bid_at_zero_reserve() {
        let model = make_auction_model(&AuctionParams::default(), 41).unwrap();
        let x = 0.0;
        let mut best = (0usize, f64::NEG_INFINITY);
        for (m, &a) in model.controls.values().iter().enumerate() {
            let r = model.reward(x, a);
            if r > best.1 {
                best = (m, r);
            }
        }
        assert_eq!(best.0, 30);
        assert!((best.1 - 0.35).abs() < 1e-12);
    }
}
