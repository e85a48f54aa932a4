//! Value functions and policies for a pure-jump control problem with
//! frequent small jumps, and for its diffusive limit.
//!
//! The jump problem is solved by an explicit Markov-chain scheme
//! ([`solve_jump_hjb`]), the limit by an upwind finite-difference scheme
//! ([`solve_diffusion_hjb`]). The limit feedback can be evaluated exactly on
//! the jump chain or by Monte Carlo ([`evaluate_policy_mc`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffusion;
pub mod error;
pub mod experiments;
pub mod io;
pub mod jump;
pub mod mesh;
pub mod model;
pub mod policy;
pub mod sim;
pub mod surface;

pub use diffusion::{
    compute_delta_r, compute_error_bound, corrected_value, estimate_holder_constant, estimate_r1,
    extract_argmax_set, extract_limit_policy, solve_correction_pde, solve_diffusion_hjb, ArgmaxSet,
    DiffusionMeshes, ErrorBound, HolderEstimate, LimitFeedback, ResidualField, SourceField,
};
pub use error::{Error, Result};
pub use jump::{
    build_jump_kernel, default_jump_meshes, evaluate_fixed_policy_on_chain, jump_step,
    solve_jump_hjb, JumpKernel, JumpMeshes,
};
pub use mesh::{SpaceMesh, TimeMesh};
pub use model::{
    aggregate_drift, aggregate_volatility, auction_reward, make_auction_model,
    make_skewed_auction_model, make_two_point_quadrature, make_uniform_quadrature, validate_model,
    AuctionParams, ControlGrid, Domain, ModelSpec, NoiseQuadrature, ValidationReport,
};
pub use policy::{ConstantPolicy, FeedbackPolicy, FnPolicy};
pub use sim::{
    evaluate_policy_mc, simulate_path, JumpEvent, MCEstimate, NoiseSampling, Trajectory,
};
pub use surface::{PolicySurface, SurfaceKind, ValueSurface};
