use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use difflim::experiments::{bench_csv, convergence_csv, run_bench, run_convergence, StudyConfig};
use difflim::io::{
    read_surface_csv, write_atomic, write_estimate_json, write_json, write_surface_csv,
    write_surface_summary, write_trajectory_csv,
};
use difflim::model::ModelConfig;
use difflim::{
    default_jump_meshes, estimate_r1, evaluate_policy_mc, extract_argmax_set, extract_limit_policy,
    simulate_path, solve_correction_pde, solve_diffusion_hjb, solve_jump_hjb, DiffusionMeshes,
    FeedbackPolicy, LimitFeedback, ModelSpec, PolicySurface, SurfaceKind, ValueSurface,
};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "difflim",
    version,
    about = "Jump and diffusive-limit control solvers"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Model configuration (JSON). The auction model is used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Args)]
struct LimitArgs {
    /// Diffusion mesh spacing; the time step is dx².
    #[arg(long, default_value_t = 0.01)]
    dx: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicySource {
    /// Argmax of the limit Hamiltonian, evaluated at the current state.
    Limit,
    /// Grid policy of the jump solve at the same ε.
    Jump,
    /// Control column of a surface CSV given by --policy-file.
    File,
}

#[derive(Args)]
struct PolicyArgs {
    #[arg(long, value_enum, default_value = "limit")]
    policy: PolicySource,
    #[arg(long)]
    policy_file: Option<PathBuf>,
    #[command(flatten)]
    limit: LimitArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the jump HJB at one ε.
    SolveJump {
        #[arg(long, value_parser = parse_eps)]
        epsilon: f64,
    },
    /// Solve the limit HJB.
    SolveDiff {
        #[command(flatten)]
        limit: LimitArgs,
    },
    /// Solve the first-order correction to the limit value.
    SolveCorrection {
        #[command(flatten)]
        limit: LimitArgs,
        #[arg(long, default_value_t = 1e-9)]
        argmax_tol: f64,
    },
    /// Simulate one path per start and estimate the gain by Monte Carlo.
    Simulate {
        #[arg(long, value_parser = parse_eps)]
        epsilon: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.15,0.3,0.7")]
        x0: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Monte Carlo gain of a policy from one start.
    Evaluate {
        #[arg(long, value_parser = parse_eps)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.15)]
        x0: f64,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Value-error and policy-gap study over an ε grid.
    Converge {
        #[command(flatten)]
        study: StudyArgs,
    },
    /// Jump-solve cost over an ε grid.
    Bench {
        #[command(flatten)]
        study: StudyArgs,
    },
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long, value_delimiter = ',', value_parser = parse_eps,
          default_value = "0.1,10^-1.5,0.01")]
    eps_grid: Vec<f64>,
    /// Interior comparison window `A,B`.
    #[arg(long, value_delimiter = ',', num_args = 2, default_value = "-0.2,1.0")]
    window: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[command(flatten)]
    limit: LimitArgs,
}

impl StudyArgs {
    fn config(&self) -> StudyConfig {
        StudyConfig {
            eps_grid: self.eps_grid.clone(),
            window: (self.window[0], self.window[1]),
            beta: self.beta,
            diffusion_dx: self.limit.dx,
            ..StudyConfig::default()
        }
    }
}

/// Accepts plain floats and `10^p`.
fn parse_eps(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = match s.strip_prefix("10^") {
        Some(p) => 10f64.powf(p.parse::<f64>().map_err(|e| format!("{s}: {e}"))?),
        None => s.parse::<f64>().map_err(|e| format!("{s}: {e}"))?,
    };
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("epsilon must lie in (0, 1] (got {v})"))
    }
}

fn eps_tag(eps: f64) -> String {
    format!("{eps:.4e}")
}

type CmdResult = Result<(), Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let model = match &cli.common.config {
        Some(path) => ModelConfig::load(path)?.build()?,
        None => ModelConfig::default().build()?,
    };
    let out = &cli.common.out;
    std::fs::create_dir_all(out).map_err(|e| format!("cannot create {}: {e}", out.display()))?;
    match cli.command {
        Command::SolveJump { epsilon } => solve_jump(&model, epsilon, out),
        Command::SolveDiff { limit } => solve_diff(&model, &limit, out),
        Command::SolveCorrection { limit, argmax_tol } => {
            solve_correction(&model, &limit, argmax_tol, out)
        }
        Command::Simulate {
            epsilon,
            x0,
            seed,
            paths,
            policy,
        } => simulate(&model, epsilon, &x0, seed, paths, &policy, out),
        Command::Evaluate {
            epsilon,
            x0,
            t0,
            seed,
            paths,
            policy,
        } => {
            let source = PolicyHolder::load(&model, epsilon, &policy)?;
            let est = evaluate_policy_mc(
                &model,
                epsilon,
                source.policy(&model)?.as_ref(),
                x0,
                t0,
                paths,
                seed,
            )?;
            let path = out.join(format!("estimate_eps{}_x{x0}.json", eps_tag(epsilon)));
            write_estimate_json(&est, &path)?;
            println!(
                "mean {:.6} stderr {:.2e} ({} paths)",
                est.mean, est.stderr, est.n_paths
            );
            Ok(())
        }
        Command::Converge { study } => {
            let report = run_convergence(&model, &study.config())?;
            write_json(&report, &out.join("convergence.json"))?;
            write_atomic(
                &out.join("convergence.csv"),
                convergence_csv(&report).as_bytes(),
            )?;
            for r in &report.rows {
                println!(
                    "eps {:.4e}  value error {:.3e}  corrected {:.3e}  policy gap {:.3e}  jump {:.2}s",
                    r.epsilon, r.value_error, r.corrected_error, r.policy_gap, r.jump_seconds
                );
            }
            for f in &report.failures {
                eprintln!("eps {:.4e} failed: {}", f.epsilon, f.error);
            }
            println!(
                "value-error slope {:?}, gap slope {:?}",
                report.slopes.value_error, report.slopes.policy_gap
            );
            Ok(())
        }
        Command::Bench { study } => {
            let report = run_bench(&model, &study.config())?;
            write_json(&report, &out.join("bench.json"))?;
            write_atomic(&out.join("bench.csv"), bench_csv(&report).as_bytes())?;
            for r in &report.rows {
                println!(
                    "eps {:.4e}  {} x {} nodes  {:.3}s",
                    r.epsilon, r.n_space, r.n_steps, r.seconds
                );
            }
            for f in &report.failures {
                eprintln!("eps {:.4e} failed: {}", f.epsilon, f.error);
            }
            println!(
                "diffusion {:.3}s, cost slope {:?}",
                report.diffusion_seconds, report.slope
            );
            Ok(())
        }
    }
}

fn report_surface(label: &str, v: &ValueSurface, seconds: f64) {
    let sup = v.initial().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    println!("{label}: |V(0,.)|_inf = {sup:.6}, {seconds:.3}s");
}

fn solve_jump(model: &ModelSpec, eps: f64, out: &Path) -> CmdResult {
    let meshes = default_jump_meshes(eps, &model.domain)?;
    println!(
        "dx = {:.4e}, dt = {:.4e}, dt/eps = {:.6} ({} x {} nodes)",
        meshes.space.dx,
        meshes.time.dt,
        meshes.time.dt / eps,
        meshes.space.n,
        meshes.time.n_steps
    );
    let start = Instant::now();
    let (v, p) = solve_jump_hjb(model, eps, &meshes)?;
    let secs = start.elapsed().as_secs_f64();
    let tag = eps_tag(eps);
    write_surface_csv(
        &v,
        Some((&p, &model.controls)),
        &out.join(format!("jump_eps{tag}.csv")),
    )?;
    write_surface_summary(&v, &[], &out.join(format!("jump_eps{tag}.json")))?;
    report_surface("jump", &v, secs);
    Ok(())
}

fn limit_meshes(model: &ModelSpec, limit: &LimitArgs) -> difflim::Result<DiffusionMeshes> {
    DiffusionMeshes::new(&model.domain, limit.dx, limit.dx * limit.dx)
}

fn solve_diff(model: &ModelSpec, limit: &LimitArgs, out: &Path) -> CmdResult {
    let meshes = limit_meshes(model, limit)?;
    let start = Instant::now();
    let (v, p) = solve_diffusion_hjb(model, &meshes)?;
    let secs = start.elapsed().as_secs_f64();
    write_surface_csv(&v, Some((&p, &model.controls)), &out.join("diffusion.csv"))?;
    write_surface_summary(&v, &[], &out.join("diffusion.json"))?;
    report_surface("diffusion", &v, secs);
    Ok(())
}

fn solve_correction(model: &ModelSpec, limit: &LimitArgs, tol: f64, out: &Path) -> CmdResult {
    let meshes = limit_meshes(model, limit)?;
    let start = Instant::now();
    let (v, _) = solve_diffusion_hjb(model, &meshes)?;
    let r1 = estimate_r1(model, &v)?;
    let phi = if r1.is_zero() {
        ValueSurface::zeros(SurfaceKind::Correction, None, meshes.time, meshes.space)
    } else {
        let set = extract_argmax_set(model, &v, tol)?;
        solve_correction_pde(model, &v, &set, &r1, &meshes)?
    };
    let secs = start.elapsed().as_secs_f64();
    write_surface_csv(&phi, None, &out.join("correction.csv"))?;
    write_surface_summary(&phi, &[], &out.join("correction.json"))?;
    if r1.is_zero() {
        println!("r1 vanishes identically: correction is zero");
    } else {
        println!("sup |r1| = {:.6e}", r1.sup_norm());
    }
    report_surface("correction", &phi, secs);
    Ok(())
}

/// Owns whatever a policy source needs to stay alive.
enum PolicyHolder {
    Limit(ValueSurface),
    Grid(PolicySurface),
}

impl PolicyHolder {
    fn load(model: &ModelSpec, eps: f64, args: &PolicyArgs) -> difflim::Result<Self> {
        match args.policy {
            PolicySource::Limit => {
                let meshes = limit_meshes(model, &args.limit)?;
                Ok(PolicyHolder::Limit(solve_diffusion_hjb(model, &meshes)?.0))
            }
            PolicySource::Jump => {
                let meshes = default_jump_meshes(eps, &model.domain)?;
                Ok(PolicyHolder::Grid(solve_jump_hjb(model, eps, &meshes)?.1))
            }
            PolicySource::File => {
                let path = args.policy_file.as_ref().ok_or_else(|| {
                    difflim::Error::Config("--policy file needs --policy-file".into())
                })?;
                Ok(PolicyHolder::Grid(
                    read_surface_csv(path)?.policy(&model.controls)?,
                ))
            }
        }
    }

    fn policy<'a>(&'a self, model: &'a ModelSpec) -> difflim::Result<Box<dyn FeedbackPolicy + 'a>> {
        Ok(match self {
            PolicyHolder::Limit(v) => Box::new(LimitFeedback::new(model, v)?),
            PolicyHolder::Grid(p) => Box::new(p),
        })
    }
}

fn simulate(
    model: &ModelSpec,
    eps: f64,
    x0s: &[f64],
    seed: u64,
    paths: usize,
    args: &PolicyArgs,
    out: &Path,
) -> CmdResult {
    let holder = PolicyHolder::load(model, eps, args)?;
    if let PolicyHolder::Limit(v) = &holder {
        let grid = extract_limit_policy(model, v);
        write_surface_csv(
            v,
            Some((&grid, &model.controls)),
            &out.join("limit_policy.csv"),
        )?;
    }
    let policy = holder.policy(model)?;
    let tag = eps_tag(eps);
    let mut estimates = Vec::new();
    for &x0 in x0s {
        let traj = simulate_path(model, eps, policy.as_ref(), x0, 0.0, seed)?;
        write_trajectory_csv(&traj, &out.join(format!("trajectory_eps{tag}_x{x0}.csv")))?;
        let est = evaluate_policy_mc(model, eps, policy.as_ref(), x0, 0.0, paths, seed)?;
        println!(
            "x0 {x0}: {} jumps on the sample path, mean gain {:.6} (stderr {:.2e})",
            traj.events.len(),
            est.mean,
            est.stderr
        );
        estimates.push(difflim::io::estimate_json(&est));
    }
    let summary = json!({ "schema": difflim::io::SCHEMA_VERSION, "estimates": estimates });
    write_json(&summary, &out.join(format!("estimates_eps{tag}.json")))?;
    Ok(())
}
