//! Monte Carlo simulation of the controlled compound-Poisson state.
//!
//! Jumps arrive at rate `1/ε`. At a jump at time `s` the control is read from
//! the policy at `(s, X_{s−})`, the gain grows by `ε·r(X_{s−}, a)` and the state
//! moves by `ε·b1 + √ε·b2`. The state is never clamped to the domain.
//!
//! Each path draws from its own ChaCha8 stream (`seed`, stream = path index), so
//! estimates are reproducible and independent of the worker count.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ContinuousLaw, ModelSpec};
use crate::policy::FeedbackPolicy;

/// Where jump marks are drawn from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSampling {
    /// The model's discrete quadrature, shared with the solvers.
    #[default]
    Quadrature,
    /// The continuous law the quadrature was derived from.
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub tau: f64,
    pub x_pre: f64,
    pub a: f64,
    pub x_post: f64,
    pub gain_cum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub epsilon: f64,
    pub t0: f64,
    pub x0: f64,
    pub seed: u64,
    pub events: Vec<JumpEvent>,
}

impl Trajectory {
    /// Normalised gain `ε·Σ r` over the whole path.
    pub fn gain(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.gain_cum)
    }

    pub fn final_state(&self) -> f64 {
        self.events.last().map_or(self.x0, |e| e.x_post)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub x0: f64,
    pub t0: f64,
}

enum MarkSampler {
    Discrete(WeightedIndex<f64>, Vec<f64>),
    Uniform(f64),
}

impl MarkSampler {
    fn new(model: &ModelSpec, sampling: NoiseSampling) -> Result<Self> {
        match sampling {
            NoiseSampling::Quadrature => {
                let w = WeightedIndex::new(model.quadrature.weights().iter().copied())
                    .map_err(|e| Error::config(format!("quadrature weights unusable: {e}")))?;
                Ok(MarkSampler::Discrete(w, model.quadrature.nodes().to_vec()))
            }
            NoiseSampling::Continuous => match model.quadrature.law() {
                Some(ContinuousLaw::Uniform { half_width }) => Ok(MarkSampler::Uniform(half_width)),
                None => Err(Error::config(
                    "continuous noise sampling needs a quadrature built from a continuous law",
                )),
            },
        }
    }

    #[inline]
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            MarkSampler::Discrete(w, nodes) => nodes[w.sample(rng)],
            MarkSampler::Uniform(h) => rng.random_range(-*h..*h),
        }
    }
}

struct PathRunner<'a> {
    model: &'a ModelSpec,
    epsilon: f64,
    sqrt_eps: f64,
    horizon: f64,
    policy: &'a dyn FeedbackPolicy,
    marks: MarkSampler,
    clock: Exp<f64>,
}

impl<'a> PathRunner<'a> {
    fn new(
        model: &'a ModelSpec,
        epsilon: f64,
        policy: &'a dyn FeedbackPolicy,
        x0: f64,
        t0: f64,
        sampling: NoiseSampling,
    ) -> Result<Self> {
        crate::jump::check_epsilon(epsilon)?;
        let horizon = model.domain.horizon;
        if !(t0 >= 0.0 && t0 <= horizon) {
            return Err(Error::config(format!(
                "t0 must lie in [0, {horizon}] (got {t0})"
            )));
        }
        if !x0.is_finite() {
            return Err(Error::config(format!("x0 must be finite (got {x0})")));
        }
        let clock =
            Exp::new(1.0 / epsilon).map_err(|e| Error::config(format!("jump clock: {e}")))?;
        Ok(Self {
            model,
            epsilon,
            sqrt_eps: epsilon.sqrt(),
            horizon,
            policy,
            marks: MarkSampler::new(model, sampling)?,
            clock,
        })
    }

    fn run(
        &self,
        x0: f64,
        t0: f64,
        seed: u64,
        path: u64,
        mut record: Option<&mut Vec<JumpEvent>>,
    ) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        let n_controls = self.model.controls.len();
        let (mut t, mut x, mut gain) = (t0, x0, 0.0);
        loop {
            t += self.clock.sample(&mut rng);
            if t > self.horizon {
                return Ok(gain);
            }
            let m = self.policy.control_index(t, x);
            if m >= n_controls {
                return Err(Error::config(format!(
                    "policy returned control index {m} at t={t}, x={x}; grid has {n_controls} controls"
                )));
            }
            let a = self.model.controls.value(m);
            let e = self.marks.sample(&mut rng);
            gain += self.epsilon * self.model.reward(x, a);
            let x_post =
                x + self.epsilon * self.model.b1(x, a, e) + self.sqrt_eps * self.model.b2(x, a, e);
            if let Some(events) = record.as_deref_mut() {
                events.push(JumpEvent {
                    tau: t,
                    x_pre: x,
                    a,
                    x_post,
                    gain_cum: gain,
                });
            }
            x = x_post;
        }
    }
}

/// One path on stream 0 of `seed`, with marks from the quadrature.
pub fn simulate_path(
    model: &ModelSpec,
    epsilon: f64,
    policy: &dyn FeedbackPolicy,
    x0: f64,
    t0: f64,
    seed: u64,
) -> Result<Trajectory> {
    simulate_path_with(
        model,
        epsilon,
        policy,
        x0,
        t0,
        seed,
        0,
        NoiseSampling::Quadrature,
    )
}

/// One path on an explicit stream. Path `i` of [`evaluate_policy_mc`] with the
/// same seed is `simulate_path_with(.., seed, i, ..)`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_path_with(
    model: &ModelSpec,
    epsilon: f64,
    policy: &dyn FeedbackPolicy,
    x0: f64,
    t0: f64,
    seed: u64,
    path: u64,
    sampling: NoiseSampling,
) -> Result<Trajectory> {
    let runner = PathRunner::new(model, epsilon, policy, x0, t0, sampling)?;
    let mut events = Vec::new();
    runner.run(x0, t0, seed, path, Some(&mut events))?;
    Ok(Trajectory {
        epsilon,
        t0,
        x0,
        seed,
        events,
    })
}

/// Mean and standard error of the normalised gain over `n_paths` paths.
/// With one path the standard error is NaN.
pub fn evaluate_policy_mc(
    model: &ModelSpec,
    epsilon: f64,
    policy: &dyn FeedbackPolicy,
    x0: f64,
    t0: f64,
    n_paths: usize,
    seed: u64,
) -> Result<MCEstimate> {
    evaluate_policy_mc_with(
        model,
        epsilon,
        policy,
        x0,
        t0,
        n_paths,
        seed,
        NoiseSampling::Quadrature,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate_policy_mc_with(
    model: &ModelSpec,
    epsilon: f64,
    policy: &dyn FeedbackPolicy,
    x0: f64,
    t0: f64,
    n_paths: usize,
    seed: u64,
    sampling: NoiseSampling,
) -> Result<MCEstimate> {
    if n_paths == 0 {
        return Err(Error::config("need at least one path"));
    }
    let runner = PathRunner::new(model, epsilon, policy, x0, t0, sampling)?;
    let gains = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| runner.run(x0, t0, seed, p, None))
        .collect::<Result<Vec<f64>>>()?;
    let n = n_paths as f64;
    let mean = gains.iter().sum::<f64>() / n;
    let var = gains.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(MCEstimate {
        mean,
        stderr: (var / n).sqrt(),
        n_paths,
        seed,
        epsilon,
        x0,
        t0,
    })
}
