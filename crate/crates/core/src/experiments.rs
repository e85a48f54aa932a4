//! Convergence and cost studies over a grid of ε values.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diffusion::{
    compute_error_bound, estimate_holder_constant, estimate_r1, extract_argmax_set,
    solve_correction_pde, solve_diffusion_hjb, DiffusionMeshes, ErrorBound, LimitFeedback,
};
use crate::error::{Error, Result};
use crate::jump::{
    default_jump_meshes_capped, evaluate_fixed_policy_on_chain, solve_jump_hjb, DEFAULT_NODE_CAP,
};
use crate::model::ModelSpec;
use crate::surface::{SurfaceKind, ValueSurface};

pub const DEFAULT_WINDOW: (f64, f64) = (-0.2, 1.0);
pub const DEFAULT_ARGMAX_TOL: f64 = 1e-9;

/// `{10⁻¹, 10^{-1.5}, 10⁻²}`.
pub fn default_eps_grid() -> Vec<f64> {
    vec![0.1, 10f64.powf(-1.5), 0.01]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub eps_grid: Vec<f64>,
    pub window: (f64, f64),
    pub beta: f64,
    /// Diffusion mesh spacing; the time step is `dx²` unless `diffusion_dt` is set.
    pub diffusion_dx: f64,
    pub diffusion_dt: Option<f64>,
    pub node_cap: usize,
    pub argmax_tol: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            eps_grid: default_eps_grid(),
            window: DEFAULT_WINDOW,
            beta: 1.0,
            diffusion_dx: 1e-2,
            diffusion_dt: None,
            node_cap: DEFAULT_NODE_CAP,
            argmax_tol: DEFAULT_ARGMAX_TOL,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        if self.eps_grid.is_empty() {
            return Err(Error::config("epsilon grid is empty"));
        }
        if let Some(e) = self.eps_grid.iter().find(|&&e| !(e > 0.0 && e <= 1.0)) {
            return Err(Error::config(format!(
                "epsilon values must lie in (0, 1] (got {e})"
            )));
        }
        let (a, b) = self.window;
        let d = &model.domain;
        if !(a < b && a >= d.x_lo && b <= d.x_hi) {
            return Err(Error::config(format!(
                "window [{a}, {b}] must be non-empty and inside [{}, {}]",
                d.x_lo, d.x_hi
            )));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::config(format!(
                "beta must lie in (0, 1] (got {})",
                self.beta
            )));
        }
        if !(self.diffusion_dx > 0.0) {
            return Err(Error::config("diffusion dx must be > 0"));
        }
        Ok(())
    }

    pub fn diffusion_meshes(&self, model: &ModelSpec) -> Result<DiffusionMeshes> {
        let dx = self.diffusion_dx;
        DiffusionMeshes::new(&model.domain, dx, self.diffusion_dt.unwrap_or(dx * dx))
    }
}

/// Slope of the least-squares line through `(ln x, ln y)`; `None` with fewer
/// than two points or a non-positive value.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|&v| !(v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Largest `|f(x_i) − g(x_i)|` over the nodes of `surface` inside the window at `t = 0`.
fn window_sup(surface: &ValueSurface, window: (f64, f64), other: impl Fn(f64) -> f64) -> f64 {
    surface
        .space
        .window(window.0, window.1)
        .map(|i| (surface.value(0, i) - other(surface.space.x(i))).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub n_space: usize,
    pub n_steps: usize,
    /// `sup |V^ε − V̄|(0, ·)` on the window.
    pub value_error: f64,
    /// `sup |V^ε − V̄ − ε^{β/2}δV̄¹|(0, ·)` on the window.
    pub corrected_error: f64,
    /// `max (V^ε − J^ε(limit feedback))(0, ·)` on the window.
    pub policy_gap: f64,
    pub min_policy_gap: f64,
    pub jump_seconds: f64,
    pub policy_eval_seconds: f64,
    pub error_bound: Option<ErrorBound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyFailure {
    pub epsilon: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slopes {
    pub value_error: Option<f64>,
    pub corrected_error: Option<f64>,
    pub policy_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub schema: u32,
    pub window: (f64, f64),
    pub beta: f64,
    pub diffusion_dx: f64,
    pub diffusion_dt: f64,
    pub diffusion_seconds: f64,
    pub correction_seconds: f64,
    /// False when `r¹` vanishes identically and the correction is exactly zero.
    pub correction_active: bool,
    pub holder_k: f64,
    pub rows: Vec<ConvergenceRow>,
    pub failures: Vec<StudyFailure>,
    pub slopes: Slopes,
    pub value_error_decreasing: bool,
}

/// Solved limit problem shared by every ε of a study.
pub struct LimitSolution {
    pub meshes: DiffusionMeshes,
    pub value: ValueSurface,
    pub correction: ValueSurface,
    pub correction_active: bool,
    pub diffusion_seconds: f64,
    pub correction_seconds: f64,
}

pub fn solve_limit(model: &ModelSpec, cfg: &StudyConfig) -> Result<LimitSolution> {
    let meshes = cfg.diffusion_meshes(model)?;
    let start = Instant::now();
    let (value, _) = solve_diffusion_hjb(model, &meshes)?;
    let diffusion_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let r1 = estimate_r1(model, &value)?;
    let correction_active = !r1.is_zero();
    let correction = if correction_active {
        let set = extract_argmax_set(model, &value, cfg.argmax_tol)?;
        solve_correction_pde(model, &value, &set, &r1, &meshes)?
    } else {
        ValueSurface::zeros(SurfaceKind::Correction, None, meshes.time, meshes.space)
    };
    Ok(LimitSolution {
        meshes,
        value,
        correction,
        correction_active,
        diffusion_seconds,
        correction_seconds: start.elapsed().as_secs_f64(),
    })
}

fn study_row(
    model: &ModelSpec,
    cfg: &StudyConfig,
    limit: &LimitSolution,
    eps: f64,
) -> Result<ConvergenceRow> {
    let meshes = default_jump_meshes_capped(eps, &model.domain, cfg.node_cap)?;
    let start = Instant::now();
    let (v, _) = solve_jump_hjb(model, eps, &meshes)?;
    let jump_seconds = start.elapsed().as_secs_f64();

    let scale = eps.powf(cfg.beta / 2.0);
    let value_error = window_sup(&v, cfg.window, |x| limit.value.interpolate(0, x));
    let corrected_error = window_sup(&v, cfg.window, |x| {
        limit.value.interpolate(0, x) + scale * limit.correction.interpolate(0, x)
    });

    let start = Instant::now();
    let feedback = LimitFeedback::new(model, &limit.value)?;
    let j = evaluate_fixed_policy_on_chain(model, eps, &meshes, &feedback)?;
    let policy_eval_seconds = start.elapsed().as_secs_f64();
    let gaps: Vec<f64> = v
        .space
        .window(cfg.window.0, cfg.window.1)
        .map(|i| v.value(0, i) - j.value(0, i))
        .collect();

    let bound = estimate_holder_constant(&limit.value, cfg.beta)
        .and_then(|est| compute_error_bound(model, &est, &limit.value, eps, 0.0))
        .ok();
    Ok(ConvergenceRow {
        epsilon: eps,
        n_space: meshes.space.n,
        n_steps: meshes.time.n_steps,
        value_error,
        corrected_error,
        policy_gap: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min_policy_gap: gaps.iter().copied().fold(f64::INFINITY, f64::min),
        jump_seconds,
        policy_eval_seconds,
        error_bound: bound,
    })
}

/// Runs the study against an already solved limit problem. Failures at one ε
/// are recorded and the study moves on.
pub fn run_convergence_with(
    model: &ModelSpec,
    cfg: &StudyConfig,
    limit: &LimitSolution,
) -> Result<ConvergenceReport> {
    cfg.validate(model)?;
    let holder_k = estimate_holder_constant(&limit.value, cfg.beta)?.k;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &eps in &cfg.eps_grid {
        match study_row(model, cfg, limit, eps) {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(StudyFailure {
                epsilon: eps,
                error: e.to_string(),
            }),
        }
    }
    let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    let col = |f: fn(&ConvergenceRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let slopes = Slopes {
        value_error: log_log_slope(&eps, &col(|r| r.value_error)),
        corrected_error: log_log_slope(&eps, &col(|r| r.corrected_error)),
        policy_gap: log_log_slope(&eps, &col(|r| r.policy_gap)),
    };
    let mut by_eps: Vec<&ConvergenceRow> = rows.iter().collect();
    by_eps.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let value_error_decreasing = by_eps
        .windows(2)
        .all(|w| w[1].value_error < w[0].value_error);
    Ok(ConvergenceReport {
        schema: crate::io::SCHEMA_VERSION,
        window: cfg.window,
        beta: cfg.beta,
        diffusion_dx: limit.meshes.space.dx,
        diffusion_dt: limit.meshes.time.dt,
        diffusion_seconds: limit.diffusion_seconds,
        correction_seconds: limit.correction_seconds,
        correction_active: limit.correction_active,
        holder_k,
        rows,
        failures,
        slopes,
        value_error_decreasing,
    })
}

pub fn run_convergence(model: &ModelSpec, cfg: &StudyConfig) -> Result<ConvergenceReport> {
    cfg.validate(model)?;
    let limit = solve_limit(model, cfg)?;
    run_convergence_with(model, cfg, &limit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub epsilon: f64,
    pub n_space: usize,
    pub n_steps: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: u32,
    pub rows: Vec<BenchRow>,
    pub failures: Vec<StudyFailure>,
    pub diffusion_seconds: f64,
    /// Slope of `ln(seconds)` against `ln(1/ε)`.
    pub slope: Option<f64>,
}

impl BenchReport {
    pub fn from_rows(
        rows: Vec<BenchRow>,
        failures: Vec<StudyFailure>,
        diffusion_seconds: f64,
    ) -> Self {
        let inv: Vec<f64> = rows.iter().map(|r| 1.0 / r.epsilon).collect();
        let secs: Vec<f64> = rows.iter().map(|r| r.seconds).collect();
        Self {
            schema: crate::io::SCHEMA_VERSION,
            slope: log_log_slope(&inv, &secs),
            rows,
            failures,
            diffusion_seconds,
        }
    }
}

impl From<&ConvergenceReport> for BenchReport {
    fn from(r: &ConvergenceReport) -> Self {
        let rows = r
            .rows
            .iter()
            .map(|row| BenchRow {
                epsilon: row.epsilon,
                n_space: row.n_space,
                n_steps: row.n_steps,
                seconds: row.jump_seconds,
            })
            .collect();
        BenchReport::from_rows(rows, r.failures.clone(), r.diffusion_seconds)
    }
}

/// Times one jump solve per ε and one diffusion solve.
pub fn run_bench(model: &ModelSpec, cfg: &StudyConfig) -> Result<BenchReport> {
    cfg.validate(model)?;
    let meshes = cfg.diffusion_meshes(model)?;
    let start = Instant::now();
    solve_diffusion_hjb(model, &meshes)?;
    let diffusion_seconds = start.elapsed().as_secs_f64();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &eps in &cfg.eps_grid {
        let timed = default_jump_meshes_capped(eps, &model.domain, cfg.node_cap).and_then(|m| {
            let start = Instant::now();
            solve_jump_hjb(model, eps, &m)?;
            Ok(BenchRow {
                epsilon: eps,
                n_space: m.space.n,
                n_steps: m.time.n_steps,
                seconds: start.elapsed().as_secs_f64(),
            })
        });
        match timed {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(StudyFailure {
                epsilon: eps,
                error: e.to_string(),
            }),
        }
    }
    Ok(BenchReport::from_rows(rows, failures, diffusion_seconds))
}

/// `epsilon,value_error,corrected_error,policy_gap,jump_seconds` rows.
pub fn convergence_csv(report: &ConvergenceReport) -> String {
    use crate::io::fmt17;
    let mut out = String::from("epsilon,value_error,corrected_error,policy_gap,jump_seconds\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt17(r.epsilon),
            fmt17(r.value_error),
            fmt17(r.corrected_error),
            fmt17(r.policy_gap),
            fmt17(r.jump_seconds)
        ));
    }
    out
}

/// `epsilon,seconds` rows.
pub fn bench_csv(report: &BenchReport) -> String {
    use crate::io::fmt17;
    let mut out = String::from("epsilon,seconds\n");
    for r in &report.rows {
        out.push_str(&format!("{},{}\n", fmt17(r.epsilon), fmt17(r.seconds)));
    }
    out
}
