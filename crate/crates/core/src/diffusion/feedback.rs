//! The limit feedback evaluated off-grid.

use super::stencil::{hamiltonian, local_diffs, LocalDiffs};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::policy::FeedbackPolicy;
use crate::surface::{SurfaceKind, ValueSurface};

/// Argmax of `μ(x, a)·∂ₓV̄ + ½σ²(x, a)·∂²ₓₓV̄ + r(x, a)` at an arbitrary state.
///
/// The difference quotients of `V̄` are those of the solver, interpolated
/// linearly between the two bracketing interior nodes; the coefficients and the
/// reward are evaluated at `x` itself. Time lookup follows the grid convention:
/// on `(t_k, t_{k+1}]` the quotients come from slice `k + 1`.
#[derive(Debug, Clone, Copy)]
pub struct LimitFeedback<'a> {
    model: &'a ModelSpec,
    surface: &'a ValueSurface,
    half_sig2: Option<f64>,
}

impl<'a> LimitFeedback<'a> {
    pub fn new(model: &'a ModelSpec, surface: &'a ValueSurface) -> Result<Self> {
        if surface.kind != SurfaceKind::Diffusion {
            return Err(Error::config(format!(
                "limit feedback needs a diffusion surface (got {})",
                surface.kind.as_str()
            )));
        }
        let half_sig2 = model
            .noise
            .is_state_free()
            .then(|| 0.5 * model.sigma2(0.0, model.controls.value(0)));
        Ok(Self {
            model,
            surface,
            half_sig2,
        })
    }

    fn diffs(&self, k: usize, x: f64) -> LocalDiffs {
        let space = &self.surface.space;
        let v = self.surface.slice(k + 1);
        let mut pos = ((x - space.x_lo) / space.dx).clamp(1.0, (space.n - 2) as f64);
        if (pos - pos.round()).abs() < 1e-9 {
            pos = pos.round();
        }
        let left = (pos.floor() as usize).min(space.n - 3);
        let frac = pos - left as f64;
        let l = local_diffs(v, left, space.dx);
        if frac == 0.0 {
            return l;
        }
        let r = local_diffs(v, left + 1, space.dx);
        LocalDiffs {
            forward: l.forward + frac * (r.forward - l.forward),
            backward: l.backward + frac * (r.backward - l.backward),
            second: l.second + frac * (r.second - l.second),
        }
    }
}

impl FeedbackPolicy for LimitFeedback<'_> {
    fn control_index(&self, t: f64, x: f64) -> usize {
        let k = self.surface.time.step_at(t);
        let d = self.diffs(k, x);
        let model = self.model;
        let mut best = f64::NEG_INFINITY;
        let mut best_m = 0;
        for (m, &a) in model.controls.values().iter().enumerate() {
            let mu = model.mu(x, a);
            let hs = self.half_sig2.unwrap_or_else(|| 0.5 * model.sigma2(x, a));
            let h = hamiltonian(mu, hs, &d, model.reward(x, a));
            if h > best {
                best = h;
                best_m = m;
            }
        }
        best_m
    }
}
