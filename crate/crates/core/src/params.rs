//! Named constants: numerical cutoffs, defaults and scenario calibrations.
//!
//! Every threshold the library or its scenarios compare against lives here so
//! that no module carries a bare literal with experimental meaning.

use crate::linalg::NsCoeffs;

// ---- linear algebra ----

/// Singular values at or below `RANK_CUTOFF_REL * sigma_max` count as zero.
pub const RANK_CUTOFF_REL: f64 = 1e-12;

/// Quintic coefficients used by the common Muon implementations.
///
/// Five iterations of this polynomial leave a few bands of normalized input
/// outside [0.7, 1.3]; for instance an input already at 1.0 ends at 0.696.
pub const MUON_REFERENCE_COEFFS: NsCoeffs = NsCoeffs { a: 3.4445, b: -4.7750, c: 2.0315 };

/// Default quintic coefficients.
///
/// Minimax fit so that five iterations send every normalized singular value
/// in [0.01/sqrt(8), 1] into [0.86, 1.06]. That range covers any input with
/// condition number <= 100 and min(rows, cols) <= 8 after Frobenius scaling.
pub const DEFAULT_NS_COEFFS: NsCoeffs = NsCoeffs { a: 3.1173, b: -4.7020, c: 2.5099 };

pub const DEFAULT_NS_ITERATIONS: usize = 5;

// ---- seeds ----

/// Offsets added to a run seed to derive independent streams.
pub const SEED_OFFSET_TARGET_U: u64 = 0x1000_0001;
pub const SEED_OFFSET_TARGET_V: u64 = 0x1000_0002;
pub const SEED_OFFSET_TARGET_VPERP: u64 = 0x1000_0003;
/// Factor `l` of a LoRA chain uses `seed + SEED_OFFSET_INIT_FACTOR + l`.
pub const SEED_OFFSET_INIT_FACTOR: u64 = 0x2000_0000;
pub const SEED_OFFSET_INIT_ROTATION: u64 = 0x3000_0000;
/// Basin perturbation `j` of base run `i` uses `seed + OFFSET + 1000 i + j`.
pub const SEED_OFFSET_BASIN_DIRECTION: u64 = 0x4000_0000;
pub const SEED_OFFSET_BASIN_BASE: u64 = 0x5000_0000;

// ---- optimizer ----

/// A factor whose Frobenius norm exceeds this counts as diverged.
pub const DIVERGENCE_NORM_CAP: f64 = 1e8;

pub const DEFAULT_BETA: f64 = 1e-8;

// ---- diagnostics ----

/// Active-set tolerance as a fraction of the smallest tracked target value.
pub const ACTIVE_EPSILON_FRACTION: f64 = 0.05;

// ---- shared experimental setup ----

pub const LORA_M: usize = 60;
pub const LORA_N: usize = 70;
pub const LORA_SIGMA: [f64; 5] = [8.0, 5.0, 3.0, 1.5, 0.7];
pub const LORA_GAMMA: f64 = 1e-3;
pub const LORA_ETA: f64 = 0.01;
/// Common loss floor and step budget for loss-comparison runs.
pub const LOSS_FLOOR: f64 = 1e-6;
pub const LOSS_FLOOR_STEP_BUDGET: usize = 50_000;

// ---- scenario calibrations ----

pub const UNIFORM_SLOPE_GAP: f64 = 0.15;
/// Absolute tolerance on |eᵢ| used to read off the convergence order.
pub const ORDER_EPSILON: f64 = 0.05;
pub const ALIGNMENT_SUP_BOUND: f64 = 0.1;
pub const DESCENT_SLACK: f64 = 1e-9;
pub const SURROGATE_SLACK: f64 = 1e-9;
pub const EXP_RATE_MIN_R2: f64 = 0.9;

pub const SWEEP_MOMENTA: [f64; 4] = [0.0, 0.3, 0.5, 0.9];
/// Step size for the momentum sweep; the oscillation floor of a fixed-step
/// orthogonalized update scales with eta, and 1e-3 brings it below 1e-4.
pub const SWEEP_ETA: f64 = 1e-3;
pub const SWEEP_STEPS: usize = 6_000;
pub const SWEEP_SLOPE_GAP: f64 = 0.2;
pub const SWEEP_LOSS_BOUND: f64 = 1e-4;

pub const RANK_SWEEP_RANKS: [usize; 4] = [1, 2, 3, 4];
pub const RANK_SWEEP_ETA: f64 = 1e-4;
pub const RANK_SWEEP_STEPS: usize = 36_000;
pub const RANK_SWEEP_STRIDE: usize = 100;
pub const RANK_SWEEP_DISTANCE_BOUND: f64 = 1e-3;
pub const RANK_SWEEP_LOSS_TOL: f64 = 1e-3;

pub const DEPTH_SWEEP_DEPTHS: [usize; 4] = [2, 3, 4, 5];
pub const DEPTH_SWEEP_STEPS: usize = 2_000;
pub const DEPTH_SWEEP_MIN_R2: f64 = 0.95;
pub const DEPTH_SWEEP_SLOPE_GAP: f64 = 0.2;

pub const NS_INTERVAL: (f64, f64) = (0.7, 1.3);

/// Block construction for the balancedness drift experiment.
pub const DRIFT_DIMS: (usize, usize, usize) = (4, 4, 2);
pub const DRIFT_TARGET_RANK: usize = 3;
pub const DRIFT_A: f64 = 1.0;
pub const DRIFT_B: f64 = 0.5;
pub const DRIFT_SIGMA: f64 = 2.0;
/// Matched step size and count for the block construction. The GD drift
/// per step is exactly eta^2 times a gradient quadratic, so a small eta
/// keeps it well below the SpecSmoothed drift, which is first order in eta.
pub const DRIFT_ETA: f64 = 1e-5;
pub const DRIFT_STEPS: usize = 1_000;
/// Step size and count for the drift comparison from the LoRA start.
pub const DRIFT_LORA_ETA: f64 = 1e-3;
pub const DRIFT_LORA_STEPS: usize = 1_000;
pub const DRIFT_RATIO: f64 = 100.0;
pub const DRIFT_GD_BOUND: f64 = 1e-6;
pub const DRIFT_SYMMETRIC_RATE_BOUND: f64 = 1e-9;

pub const REG_LAMBDA: f64 = 0.1;
/// The smoothed update is a gradient step of size eta/sqrt(beta) near a
/// minimum; stability needs that times the top curvature (about 16) below 2.
pub const REG_ETA: f64 = 1e-5;
pub const REG_STEPS: usize = 400_000;
pub const REG_STRIDE: usize = 1_000;
pub const REG_GRAD_TOL: f64 = 1e-6;
pub const REG_SIGMA_TOL: f64 = 5e-3;
pub const REG_SUPPRESSED_BOUND: f64 = 1e-3;
/// Small target whose last singular value lies below `REG_LAMBDA`.
pub const REG_SUPPRESS_DIMS: (usize, usize) = (8, 9);
pub const REG_SUPPRESS_SIGMA: [f64; 3] = [1.0, 0.5, 0.05];

pub const BASIN_M: usize = 9;
pub const BASIN_N: usize = 9;
pub const BASIN_RANK: usize = 4;
pub const BASIN_SIGMA: [f64; 4] = [1.0, 0.5, 0.2, 0.05];
pub const BASIN_GAMMA: f64 = 5e-4;
pub const BASIN_ETA: f64 = 1e-4;
pub const BASIN_STOP_LOSS: f64 = 1e-12;
pub const BASIN_BASE_STEPS: usize = 20_000;
pub const BASIN_PERTURBED_STEPS: usize = 30_000;
pub const BASIN_STRIDE: usize = 100;
/// A run counts as converged to a global minimum once its loss is at most this.
pub const BASIN_CONVERGED_LOSS: f64 = 1e-6;
pub const BASIN_CI_SCALE: (usize, usize) = (5, 10);
pub const BASIN_FULL_SCALE: (usize, usize) = (20, 50);

pub const RANK1_SIGMA: f64 = 2.0;
pub const RANK1_ALPHA: f64 = 0.8;
pub const RANK1_BETA: f64 = 1e-8;
pub const RANK1_GAMMAS: [f64; 3] = [1e-2, 1e-3, 1e-4];
pub const RANK1_T_END: f64 = 8.0;
pub const RANK1_DT: f64 = 1e-3;
pub const RANK1_RESIDUAL_TOL: f64 = 1e-4;
pub const RANK1_C_TOL: f64 = 1e-6;
pub const RANK1_GAP_FACTOR: f64 = 10.0;
/// Residual norm below which a rank-1 trajectory counts as saturated.
pub const RANK1_SATURATION_RESIDUAL: f64 = 1e-8;

/// Integrator halving budget and the loss level treated as the rounding floor.
pub const ODE_MAX_HALVINGS: u32 = 10;
pub const ODE_LOSS_FLOOR: f64 = 1e-26;
/// Fraction of the first-order predicted loss decrease an accepted step must
/// realize. One half also rejects steps that jump across a minimum, which
/// realize far less than the prediction.
pub const ODE_SUFFICIENT_DECREASE: f64 = 0.5;

pub const MODE_PAIR_START: f64 = 0.01;
pub const MODE_PAIR_SKEWED_START: (f64, f64) = (0.012, 0.008);
pub const MODE_PAIR_T_END: f64 = 8.0;
pub const MODE_PAIR_DT: f64 = 1e-3;
pub const MODE_PAIR_GAP_SLACK: f64 = 1e-9;
pub const MODE_PAIR_PRODUCT_TOL: f64 = 1e-4;

/// Environment variable naming the worker count for parallel scenarios.
pub const WORKERS_ENV: &str = "SPECFLOW_WORKERS";
