//! Named scenarios.
//!
//! A scenario is a deterministic procedure of its name, a seed and a few
//! overridable knobs ([`ScenarioOptions`]). It produces trajectory logs, a
//! typed outcome, a JSON summary and a list of named pass/fail checks.
//! Independent runs inside a scenario execute on a worker pool; results are
//! always gathered in input order, never completion order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::diagnostics::convergence_order;
use crate::diagnostics::{
    all_active_window, balancedness_rate, block_drift_rate, diagonal_surrogate_error, final_decade_fit, max_pairwise_gap,
    product_active_window, root_spectrum_fits, sqrt_coordinate_slopes, LineFit, RunMetadata, TrajectoryLog,
};
use crate::error::{Error, Result};
use crate::linalg::{sample_gaussian, Matrix};
use crate::optimize::{initialize, run_from, InitSpec, Method, RunConfig, RunResult, StopReason};
use crate::params::*;
use crate::problem::{
    best_rank_k_approx, construct_target_from_spec, eckart_young_loss, gradients, FactorState, TargetMatrix, TargetSpec,
};
use crate::scalar_ode::{
    integrate_mode_pair_with, integrate_rank1_with, rank1_assumption, ModePair, ModeTrajectory, Rank1Assumption, Rank1State,
    Rank1Trajectory,
};

pub struct ScenarioInfo {
    pub name: &'static str,
    pub description: &'static str,
}

pub const SCENARIOS: &[ScenarioInfo] = &[
    ScenarioInfo {
        name: "uniform_growth",
        description: "SpecExact, SpecSmoothed and GD from one LoRA start on the 60x70 target",
    },
    ScenarioInfo { name: "loss_comparison", description: "SpecSmoothed against GD down to the common loss floor" },
    ScenarioInfo { name: "momentum_sweep_exact", description: "SpecExact with momentum mu in {0, 0.3, 0.5, 0.9}" },
    ScenarioInfo { name: "momentum_sweep_ns", description: "MuonNS (momentum plus Newton-Schulz) over the same momenta" },
    ScenarioInfo { name: "rank_sweep", description: "SpecExact at LoRA rank 1..4 against the best rank-r approximation" },
    ScenarioInfo { name: "depth_sweep", description: "SpecExact on chains of 2..5 factors" },
    ScenarioInfo { name: "basin", description: "perturbed restarts around converged SpecSmoothed minima on a 9x9 target" },
    ScenarioInfo { name: "invariant_drift", description: "balancedness drift of GD against SpecSmoothed" },
    ScenarioInfo { name: "regularized", description: "weight-decayed SpecSmoothed and its stationary spectrum" },
    ScenarioInfo { name: "rank1_ode", description: "rank-one scalar flow over the initialization-scale grid" },
    ScenarioInfo { name: "mode_pairs", description: "decoupled mode pairs under spectral initialization" },
];

pub fn scenario_names() -> Vec<&'static str> {
    SCENARIOS.iter().map(|s| s.name).collect()
}

/// Knobs shared by every scenario; `None` keeps the scenario's calibrated value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOptions {
    pub seed: u64,
    pub workers: Option<usize>,
    pub eta: Option<f64>,
    pub max_steps: Option<usize>,
    pub log_stride: Option<usize>,
    pub lambda: Option<f64>,
    /// (base runs, perturbations per base run) for the basin scenario.
    pub basin_scale: (usize, usize),
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        ScenarioOptions {
            seed: 0,
            workers: None,
            eta: None,
            max_steps: None,
            log_stride: None,
            lambda: None,
            basin_scale: BASIN_FULL_SCALE,
        }
    }
}

impl ScenarioOptions {
    pub fn with_seed(seed: u64) -> Self {
        ScenarioOptions { seed, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: impl Into<String>, passed: bool, detail: String) -> Check {
    Check { name: name.into(), passed, detail }
}

/// Rows of a scalar trajectory, written like a log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTable {
    pub label: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub seed: u64,
    pub logs: Vec<TrajectoryLog>,
    pub tables: Vec<SeriesTable>,
    pub summary: Value,
    pub checks: Vec<Check>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Runs the scenario called `name`.
pub fn run_scenario(name: &str, opts: &ScenarioOptions) -> Result<ScenarioReport> {
    let (logs, tables, summary, checks) = match name {
        "uniform_growth" => {
            let o = uniform_growth(opts)?;
            (o.runs.iter().map(|r| r.log.clone()).collect(), vec![], o.summary(), o.checks())
        }
        "loss_comparison" => {
            let o = loss_comparison(opts)?;
            (vec![o.smoothed_log.clone(), o.gd_log.clone()], vec![], o.summary(), o.checks())
        }
        "momentum_sweep_exact" | "momentum_sweep_ns" => {
            let orth = if name.ends_with("exact") { Orthogonalizer::Exact } else { Orthogonalizer::NewtonSchulz };
            let o = momentum_sweep(opts, orth)?;
            (o.runs.iter().map(|r| r.log.clone()).collect(), vec![], o.summary(), o.checks())
        }
        "rank_sweep" => {
            let o = rank_sweep(opts)?;
            (o.runs.iter().map(|r| r.log.clone()).collect(), vec![], o.summary(), o.checks())
        }
        "depth_sweep" => {
            let o = depth_sweep(opts)?;
            (o.runs.iter().map(|r| r.log.clone()).collect(), vec![], o.summary(), o.checks())
        }
        "basin" => {
            let o = basin(opts)?;
            (o.base_logs.clone(), vec![], o.summary(), o.checks())
        }
        "invariant_drift" => {
            let o = invariant_drift(opts)?;
            let logs = [&o.block, &o.lora].iter().flat_map(|p| [p.gd_log.clone(), p.smoothed_log.clone()]).collect();
            (logs, vec![], o.summary(), o.checks())
        }
        "regularized" => {
            let o = regularized(opts)?;
            (vec![o.log.clone(), o.suppression.log.clone()], vec![], o.summary(), o.checks())
        }
        "rank1_ode" => {
            let o = rank1_ode(opts)?;
            (vec![], o.tables(), o.summary(), o.checks())
        }
        "mode_pairs" => {
            let o = mode_pairs(opts)?;
            (vec![], o.tables(), o.summary(), o.checks())
        }
        other => {
            return Err(Error::invalid(format!("unknown scenario `{other}`; known: {}", scenario_names().join(", "))));
        }
    };
    Ok(ScenarioReport { name: name.to_string(), seed: opts.seed, logs, tables, summary, checks })
}

// ---- plumbing ----

/// Worker count: `requested`, else the environment variable, else the number
/// of available cores.
pub fn worker_count(requested: Option<usize>) -> Result<usize> {
    if let Some(n) = requested {
        return if n > 0 { Ok(n) } else { Err(Error::invalid("worker count must be positive")) };
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::invalid(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

/// Maps `f` over `items` on `workers` threads. Output follows input order and
/// the first error in input order wins.
fn par_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let out: Vec<Result<R>> = pool.install(|| items.par_iter().map(&f).collect());
    out.into_iter().collect()
}

fn run_tagged(
    config: &RunConfig,
    target: &TargetMatrix,
    spec: Option<&TargetSpec>,
    scenario: &str,
    label: String,
) -> Result<RunResult> {
    let state = initialize(config, target)?;
    run_state_tagged(state, config, target, spec, scenario, label)
}

fn run_state_tagged(
    state: FactorState,
    config: &RunConfig,
    target: &TargetMatrix,
    spec: Option<&TargetSpec>,
    scenario: &str,
    label: String,
) -> Result<RunResult> {
    let mut meta = RunMetadata::new(&label, config);
    meta.scenario = Some(scenario.to_string());
    meta.target = spec.cloned();
    run_from(state, config, target, meta)
}

fn window_pair(w: &Option<std::ops::RangeInclusive<usize>>) -> Option<(usize, usize)> {
    w.as_ref().map(|w| (*w.start(), *w.end()))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("none".to_string(), |v| format!("{v:.6e}"))
}

pub fn lora_spec(seed: u64) -> TargetSpec {
    TargetSpec { m: LORA_M, n: LORA_N, sigma: LORA_SIGMA.to_vec(), seed }
}

/// Two-factor LoRA run on the shared target, stopping at the common loss floor.
pub fn lora_config(method: Method, eta: f64, seed: u64, max_steps: usize) -> RunConfig {
    RunConfig { max_steps, stop_loss: LOSS_FLOOR, ..RunConfig::new(method, eta, LORA_SIGMA.len(), LORA_GAMMA, seed) }
}

fn default_epsilon(config: &RunConfig, sigma: &[f64]) -> f64 {
    let k = config.rank.min(sigma.len());
    config.epsilon.unwrap_or(ACTIVE_EPSILON_FRACTION * sigma[k - 1])
}

// ---- uniform growth and loss comparison ----

pub const GROWTH_METHODS: [Method; 3] = [Method::SpecExact, Method::SpecSmoothed, Method::Gd];

/// Per-run measurements behind the growth, ordering, alignment and descent checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthAnalysis {
    pub method: Method,
    pub final_loss: f64,
    pub steps_to_floor: Option<usize>,
    /// First block of logged steps with every `eᵢ ≤ −ε`.
    pub window: Option<(usize, usize)>,
    pub slopes: Vec<f64>,
    pub slope_gap: Option<f64>,
    /// Settle order at `ORDER_EPSILON`; `None` if some mode never settles.
    pub order: Option<Vec<usize>>,
    pub sup_off_g: f64,
    pub sup_xz_perp: f64,
    /// Largest `ℒ(k+1) − ℒ(k)` between consecutive records.
    pub max_loss_increase: f64,
    /// Largest `|σ_π(i)(AB) − dᵢ| − 2(‖Off G‖_F + ‖XZ⊥‖_F)` over the records.
    pub max_surrogate_excess: f64,
    pub final_decade_r2: Option<f64>,
}

pub fn analyze_growth(log: &TrajectoryLog, sigma: &[f64]) -> Result<GrowthAnalysis> {
    let config = &log.metadata.config;
    let last = log.final_record().ok_or_else(|| Error::invalid("empty log"))?;
    let window = all_active_window(log, default_epsilon(config, sigma))?;
    let slopes = window.clone().and_then(|w| sqrt_coordinate_slopes(log, w).ok()).unwrap_or_default();
    let slope_gap = (!slopes.is_empty()).then(|| max_pairwise_gap(&slopes));
    let (mut sup_off, mut sup_xzp, mut excess) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for r in &log.records {
        let c = r.core.as_ref().ok_or_else(|| Error::Unsupported("growth analysis needs core variables".into()))?;
        sup_off = sup_off.max(c.off_g_fro);
        sup_xzp = sup_xzp.max(c.xz_perp_fro);
        let err = diagonal_surrogate_error(&c.d, &r.product_singular_values);
        excess = excess.max(err - 2.0 * (c.off_g_fro + c.xz_perp_fro));
    }
    let max_loss_increase = log.records.windows(2).map(|w| w[1].loss - w[0].loss).fold(f64::NEG_INFINITY, f64::max);
    Ok(GrowthAnalysis {
        method: config.method,
        final_loss: last.loss,
        steps_to_floor: log.first_step_below(LOSS_FLOOR),
        window: window_pair(&window),
        slope_gap,
        slopes,
        order: convergence_order(log, ORDER_EPSILON).ok(),
        sup_off_g: sup_off,
        sup_xz_perp: sup_xzp,
        max_loss_increase,
        max_surrogate_excess: excess,
        final_decade_r2: final_decade_fit(log).ok().map(|f| f.r2),
    })
}

#[derive(Debug, Clone)]
pub struct GrowthRun {
    pub log: TrajectoryLog,
    pub stop: StopReason,
    pub analysis: GrowthAnalysis,
}

#[derive(Debug, Clone)]
pub struct UniformGrowth {
    pub eta: f64,
    pub target: TargetSpec,
    /// In [`GROWTH_METHODS`] order.
    pub runs: Vec<GrowthRun>,
}

impl UniformGrowth {
    pub fn run(&self, method: Method) -> &GrowthRun {
        self.runs.iter().find(|r| r.analysis.method == method).expect("every growth method is run")
    }

    pub fn summary(&self) -> Value {
        json!({
            "eta": self.eta,
            "target": self.target,
            "runs": self.runs.iter().map(|r| json!({"stop": r.stop, "analysis": r.analysis})).collect::<Vec<_>>(),
        })
    }

    pub fn checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        let smallest_first: Vec<usize> = (1..=LORA_SIGMA.len()).rev().collect();
        let largest_first: Vec<usize> = (1..=LORA_SIGMA.len()).collect();
        for m in [Method::SpecExact, Method::SpecSmoothed] {
            let a = &self.run(m).analysis;
            let name = m.name();
            out.push(check(
                format!("{name} reaches loss <= {LOSS_FLOOR:e}"),
                a.steps_to_floor.is_some(),
                format!("final loss {:.6e}, first step below {:?}", a.final_loss, a.steps_to_floor),
            ));
            out.push(check(
                format!("{name} sqrt(d) slope gap <= {UNIFORM_SLOPE_GAP}"),
                a.slope_gap.is_some_and(|g| g <= UNIFORM_SLOPE_GAP),
                format!("gap {} over window {:?}", fmt_opt(a.slope_gap), a.window),
            ));
            out.push(check(
                format!("{name} converges smallest-first"),
                a.order.as_ref() == Some(&smallest_first),
                format!("order {:?}", a.order),
            ));
            out.push(check(
                format!("{name} loss never rises by more than {DESCENT_SLACK:e}"),
                a.max_loss_increase <= DESCENT_SLACK,
                format!("largest increase {:.6e}", a.max_loss_increase),
            ));
        }
        let gd = &self.run(Method::Gd).analysis;
        out.push(check("GD converges largest-first", gd.order.as_ref() == Some(&largest_first), format!("order {:?}", gd.order)));
        for r in &self.runs {
            let a = &r.analysis;
            out.push(check(
                format!("{} diagonal surrogate bound", a.method.name()),
                a.max_surrogate_excess <= SURROGATE_SLACK,
                format!("largest excess {:.6e}", a.max_surrogate_excess),
            ));
        }
        let s = &self.run(Method::SpecSmoothed).analysis;
        out.push(check(
            format!("SpecSmoothed alignment stays <= {ALIGNMENT_SUP_BOUND}"),
            s.sup_off_g <= ALIGNMENT_SUP_BOUND && s.sup_xz_perp <= ALIGNMENT_SUP_BOUND,
            format!("sup off {:.6e}, sup xz_perp {:.6e}", s.sup_off_g, s.sup_xz_perp),
        ));
        out.push(check(
            format!("SpecSmoothed final-decade log-loss fit R^2 >= {EXP_RATE_MIN_R2}"),
            s.final_decade_r2.is_some_and(|r2| r2 >= EXP_RATE_MIN_R2),
            format!("R^2 {}", fmt_opt(s.final_decade_r2)),
        ));
        out
    }
}

fn growth_runs(opts: &ScenarioOptions, methods: &[Method], scenario: &str) -> Result<(f64, TargetSpec, Vec<GrowthRun>)> {
    let eta = opts.eta.unwrap_or(LORA_ETA);
    let steps = opts.max_steps.unwrap_or(LOSS_FLOOR_STEP_BUDGET);
    let spec = lora_spec(opts.seed);
    let target = construct_target_from_spec(&spec)?;
    let runs = par_map(methods, worker_count(opts.workers)?, |&m| {
        let mut config = lora_config(m, eta, opts.seed, steps);
        if let Some(s) = opts.log_stride {
            config.log_stride = s;
        }
        let res = run_tagged(&config, &target, Some(&spec), scenario, m.name().to_string())?;
        let analysis = analyze_growth(&res.log, &spec.sigma)?;
        Ok(GrowthRun { log: res.log, stop: res.stop, analysis })
    })?;
    Ok((eta, spec, runs))
}

pub fn uniform_growth(opts: &ScenarioOptions) -> Result<UniformGrowth> {
    let (eta, target, runs) = growth_runs(opts, &GROWTH_METHODS, "uniform_growth")?;
    Ok(UniformGrowth { eta, target, runs })
}

#[derive(Debug, Clone)]
pub struct LossComparison {
    pub smoothed_steps: Option<usize>,
    pub gd_steps: Option<usize>,
    pub smoothed_log: TrajectoryLog,
    pub gd_log: TrajectoryLog,
}

impl LossComparison {
    /// The comparison read off an existing growth run, which uses the same configurations.
    pub fn from_growth(g: &UniformGrowth) -> Self {
        let (s, d) = (g.run(Method::SpecSmoothed), g.run(Method::Gd));
        LossComparison {
            smoothed_steps: s.analysis.steps_to_floor,
            gd_steps: d.analysis.steps_to_floor,
            smoothed_log: s.log.clone(),
            gd_log: d.log.clone(),
        }
    }

    pub fn smoothed_faster(&self) -> bool {
        match (self.smoothed_steps, self.gd_steps) {
            (Some(s), Some(g)) => s < g,
            (Some(_), None) => true,
            _ => false,
        }
    }

    pub fn summary(&self) -> Value {
        json!({
            "loss_floor": LOSS_FLOOR,
            "step_budget": self.smoothed_log.metadata.config.max_steps,
            "smoothed_steps": self.smoothed_steps,
            "gd_steps": self.gd_steps,
            "smoothed_final_loss": self.smoothed_log.final_record().map(|r| r.loss),
            "gd_final_loss": self.gd_log.final_record().map(|r| r.loss),
        })
    }

    pub fn checks(&self) -> Vec<Check> {
        vec![check(
            format!("SpecSmoothed reaches {LOSS_FLOOR:e} in fewer steps than GD"),
            self.smoothed_faster(),
            format!("SpecSmoothed {:?}, GD {:?}", self.smoothed_steps, self.gd_steps),
        )]
    }
}

pub fn loss_comparison(opts: &ScenarioOptions) -> Result<LossComparison> {
    let (_, _, mut runs) = growth_runs(opts, &[Method::SpecSmoothed, Method::Gd], "loss_comparison")?;
    let gd = runs.pop().expect("two runs");
    let smoothed = runs.pop().expect("two runs");
    Ok(LossComparison {
        smoothed_steps: smoothed.analysis.steps_to_floor,
        gd_steps: gd.analysis.steps_to_floor,
        smoothed_log: smoothed.log,
        gd_log: gd.log,
    })
}

// ---- momentum sweep ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orthogonalizer {
    Exact,
    NewtonSchulz,
}

#[derive(Debug, Clone)]
pub struct MomentumRun {
    pub mu: f64,
    pub log: TrajectoryLog,
    pub diverged_at: Option<usize>,
    pub final_loss: f64,
    pub window: Option<(usize, usize)>,
    pub slopes: Vec<f64>,
    pub slope_gap: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MomentumSweep {
    pub orthogonalizer: Orthogonalizer,
    pub eta: f64,
    pub runs: Vec<MomentumRun>,
}

/// Configuration of one sweep point; at `mu = 0` with the exact
/// orthogonalizer it equals the uniform-growth SpecExact configuration.
pub fn momentum_config(orth: Orthogonalizer, mu: f64, eta: f64, seed: u64, max_steps: usize) -> RunConfig {
    let method = match orth {
        Orthogonalizer::Exact => Method::SpecExact,
        Orthogonalizer::NewtonSchulz => Method::MuonNs,
    };
    RunConfig { mu, ..lora_config(method, eta, seed, max_steps) }
}

pub fn momentum_sweep(opts: &ScenarioOptions, orth: Orthogonalizer) -> Result<MomentumSweep> {
    let eta = opts.eta.unwrap_or(SWEEP_ETA);
    let steps = opts.max_steps.unwrap_or(SWEEP_STEPS);
    let spec = lora_spec(opts.seed);
    let target = construct_target_from_spec(&spec)?;
    let scenario = match orth {
        Orthogonalizer::Exact => "momentum_sweep_exact",
        Orthogonalizer::NewtonSchulz => "momentum_sweep_ns",
    };
    let runs = par_map(&SWEEP_MOMENTA, worker_count(opts.workers)?, |&mu| {
        let mut config = momentum_config(orth, mu, eta, opts.seed, steps);
        if let Some(s) = opts.log_stride {
            config.log_stride = s;
        }
        let (log, diverged_at) = match run_tagged(&config, &target, Some(&spec), scenario, format!("mu={mu}")) {
            Ok(r) => (r.log, None),
            // Divergence at large momentum is a result, not a failure of the sweep.
            Err(Error::DivergedRun { step, log }) => (*log, Some(step)),
            Err(e) => return Err(e),
        };
        let window = all_active_window(&log, default_epsilon(&config, &spec.sigma))?;
        let slopes = window.clone().and_then(|w| sqrt_coordinate_slopes(&log, w).ok()).unwrap_or_default();
        let final_loss = log.final_record().map_or(f64::NAN, |r| r.loss);
        Ok(MomentumRun {
            mu,
            diverged_at,
            final_loss,
            window: window_pair(&window),
            slope_gap: (!slopes.is_empty()).then(|| max_pairwise_gap(&slopes)),
            slopes,
            log,
        })
    })?;
    Ok(MomentumSweep { orthogonalizer: orth, eta, runs })
}

impl MomentumSweep {
    pub fn summary(&self) -> Value {
        json!({
            "orthogonalizer": self.orthogonalizer,
            "eta": self.eta,
            "runs": self.runs.iter().map(|r| json!({
                "mu": r.mu, "diverged_at": r.diverged_at, "final_loss": r.final_loss,
                "window": r.window, "slopes": r.slopes, "slope_gap": r.slope_gap,
            })).collect::<Vec<_>>(),
        })
    }

    pub fn checks(&self) -> Vec<Check> {
        let tag = match self.orthogonalizer {
            Orthogonalizer::Exact => "exact",
            Orthogonalizer::NewtonSchulz => "Newton-Schulz",
        };
        let mut out = Vec::new();
        for r in &self.runs {
            out.push(check(
                format!("{tag} mu={} slope gap <= {SWEEP_SLOPE_GAP}", r.mu),
                r.diverged_at.is_none() && r.slope_gap.is_some_and(|g| g <= SWEEP_SLOPE_GAP),
                format!("gap {} over window {:?}, diverged at {:?}", fmt_opt(r.slope_gap), r.window, r.diverged_at),
            ));
            out.push(check(
                format!("{tag} mu={} final loss <= {SWEEP_LOSS_BOUND:e}", r.mu),
                r.diverged_at.is_none() && r.final_loss <= SWEEP_LOSS_BOUND,
                format!("final loss {:.6e}", r.final_loss),
            ));
        }
        out
    }
}

// ---- rank sweep ----

#[derive(Debug, Clone)]
pub struct RankRun {
    pub rank: usize,
    pub log: TrajectoryLog,
    pub final_loss: f64,
    pub eckart_young_loss: f64,
    /// `‖AB − best rank-r approximation‖_F` at the final step.
    pub distance: f64,
    pub top_singular_value: f64,
}

#[derive(Debug, Clone)]
pub struct RankSweep {
    pub eta: f64,
    pub runs: Vec<RankRun>,
}

pub fn rank_config(rank: usize, eta: f64, seed: u64, max_steps: usize) -> RunConfig {
    RunConfig { rank, log_stride: RANK_SWEEP_STRIDE, ..lora_config(Method::SpecExact, eta, seed, max_steps) }
}

pub fn rank_sweep(opts: &ScenarioOptions) -> Result<RankSweep> {
    let eta = opts.eta.unwrap_or(RANK_SWEEP_ETA);
    let steps = opts.max_steps.unwrap_or(RANK_SWEEP_STEPS);
    let spec = lora_spec(opts.seed);
    let target = construct_target_from_spec(&spec)?;
    let runs = par_map(&RANK_SWEEP_RANKS, worker_count(opts.workers)?, |&rank| {
        let mut config = rank_config(rank, eta, opts.seed, steps);
        if let Some(s) = opts.log_stride {
            config.log_stride = s;
        }
        let res = run_tagged(&config, &target, Some(&spec), "rank_sweep", format!("r={rank}"))?;
        let last = res.log.final_record().expect("runs log their final step");
        let best = best_rank_k_approx(&target, rank)?;
        Ok(RankRun {
            rank,
            final_loss: last.loss,
            eckart_young_loss: eckart_young_loss(&spec.sigma, rank),
            distance: (res.state.product() - best).norm(),
            top_singular_value: last.product_singular_values[0],
            log: res.log,
        })
    })?;
    Ok(RankSweep { eta, runs })
}

impl RankSweep {
    pub fn summary(&self) -> Value {
        json!({
            "eta": self.eta,
            "runs": self.runs.iter().map(|r| json!({
                "rank": r.rank, "final_loss": r.final_loss, "eckart_young_loss": r.eckart_young_loss,
                "distance": r.distance, "top_singular_value": r.top_singular_value,
            })).collect::<Vec<_>>(),
        })
    }

    pub fn checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        for r in &self.runs {
            out.push(check(
                format!("r={} distance to best rank-r approximation <= {RANK_SWEEP_DISTANCE_BOUND:e}", r.rank),
                r.distance <= RANK_SWEEP_DISTANCE_BOUND,
                format!("distance {:.6e}", r.distance),
            ));
            out.push(check(
                format!("r={} final loss matches the Eckart-Young residual", r.rank),
                (r.final_loss - r.eckart_young_loss).abs() <= RANK_SWEEP_LOSS_TOL,
                format!("loss {:.9} vs {:.9}", r.final_loss, r.eckart_young_loss),
            ));
            if r.rank == 1 {
                out.push(check(
                    "r=1 top singular value reaches sigma_1",
                    (r.top_singular_value - LORA_SIGMA[0]).abs() <= RANK_SWEEP_DISTANCE_BOUND,
                    format!("top singular value {:.9}", r.top_singular_value),
                ));
            }
        }
        out
    }
}

// ---- depth sweep ----

#[derive(Debug, Clone)]
pub struct DepthRun {
    pub depth: usize,
    pub log: TrajectoryLog,
    pub window: Option<(usize, usize)>,
    pub fits: Vec<LineFit>,
    pub slope_gap: Option<f64>,
    pub min_r2: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DepthSweep {
    pub eta: f64,
    pub runs: Vec<DepthRun>,
}

pub fn depth_config(depth: usize, eta: f64, seed: u64, max_steps: usize) -> RunConfig {
    RunConfig { depth, ..lora_config(Method::SpecExact, eta, seed, max_steps) }
}

pub fn depth_sweep(opts: &ScenarioOptions) -> Result<DepthSweep> {
    let eta = opts.eta.unwrap_or(LORA_ETA);
    let steps = opts.max_steps.unwrap_or(DEPTH_SWEEP_STEPS);
    let spec = lora_spec(opts.seed);
    let target = construct_target_from_spec(&spec)?;
    let runs = par_map(&DEPTH_SWEEP_DEPTHS, worker_count(opts.workers)?, |&depth| {
        let mut config = depth_config(depth, eta, opts.seed, steps);
        if let Some(s) = opts.log_stride {
            config.log_stride = s;
        }
        let res = run_tagged(&config, &target, Some(&spec), "depth_sweep", format!("L={depth}"))?;
        let eps = default_epsilon(&config, &spec.sigma);
        let window = product_active_window(&res.log, &spec.sigma, eps);
        let fits = window.clone().and_then(|w| root_spectrum_fits(&res.log, w, depth).ok()).unwrap_or_default();
        let slopes: Vec<f64> = fits.iter().map(|f| f.slope).collect();
        Ok(DepthRun {
            depth,
            window: window_pair(&window),
            slope_gap: (!slopes.is_empty()).then(|| max_pairwise_gap(&slopes)),
            min_r2: fits.iter().map(|f| f.r2).reduce(f64::min),
            fits,
            log: res.log,
        })
    })?;
    Ok(DepthSweep { eta, runs })
}

impl DepthSweep {
    pub fn summary(&self) -> Value {
        json!({
            "eta": self.eta,
            "runs": self.runs.iter().map(|r| json!({
                "depth": r.depth, "window": r.window, "fits": r.fits, "slope_gap": r.slope_gap, "min_r2": r.min_r2,
            })).collect::<Vec<_>>(),
        })
    }

    pub fn checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        for r in &self.runs {
            out.push(check(
                format!("L={} root-spectrum fits R^2 >= {DEPTH_SWEEP_MIN_R2}", r.depth),
                r.min_r2.is_some_and(|x| x >= DEPTH_SWEEP_MIN_R2),
                format!("min R^2 {} over window {:?}", fmt_opt(r.min_r2), r.window),
            ));
            out.push(check(
                format!("L={} root-spectrum slope gap <= {DEPTH_SWEEP_SLOPE_GAP}", r.depth),
                r.slope_gap.is_some_and(|g| g <= DEPTH_SWEEP_SLOPE_GAP),
                format!("gap {}", fmt_opt(r.slope_gap)),
            ));
        }
        out
    }
}

// ---- basin ----

/// One run of the basin probe, measured against a reference minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinResult {
    pub base: usize,
    /// `None` for the base run that produced the reference minimum.
    pub perturbation: Option<usize>,
    pub converged: bool,
    pub final_loss: f64,
    pub steps: usize,
    pub initial_distance: f64,
    pub final_distance: f64,
    /// `initial_distance − final_distance`.
    pub decrement: f64,
}

#[derive(Debug, Clone)]
pub struct BasinOutcome {
    pub scale: (usize, usize),
    pub base_logs: Vec<TrajectoryLog>,
    pub base: Vec<BasinResult>,
    pub perturbed: Vec<BasinResult>,
    /// Restart from a reference minimum itself.
    pub zero_radius: BasinResult,
}

pub fn basin_spec(seed: u64) -> TargetSpec {
    TargetSpec { m: BASIN_M, n: BASIN_N, sigma: BASIN_SIGMA.to_vec(), seed }
}

pub fn basin_config(seed: u64, max_steps: usize) -> RunConfig {
    RunConfig {
        max_steps,
        stop_loss: BASIN_STOP_LOSS,
        log_stride: BASIN_STRIDE,
        ..RunConfig::new(Method::SpecSmoothed, BASIN_ETA, BASIN_RANK, BASIN_GAMMA, seed)
    }
}

/// Frobenius distance between two chains of equal shapes.
pub fn chain_distance(a: &[Matrix], b: &[Matrix]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum::<f64>().sqrt()
}

/// Runs `config` from `start` and measures distances to `minimum`.
pub fn basin_probe(
    target: &TargetMatrix,
    minimum: &[Matrix],
    start: Vec<Matrix>,
    config: &RunConfig,
    ids: (usize, Option<usize>),
    label: String,
) -> Result<(BasinResult, TrajectoryLog)> {
    let initial_distance = chain_distance(&start, minimum);
    let config = RunConfig { init: InitSpec::explicit(start), ..config.clone() };
    let res = run_tagged(&config, target, None, "basin", label)?;
    let final_loss = res.log.final_record().map_or(f64::NAN, |r| r.loss);
    let final_distance = chain_distance(&res.state.factors, minimum);
    let result = BasinResult {
        base: ids.0,
        perturbation: ids.1,
        converged: final_loss <= BASIN_CONVERGED_LOSS,
        final_loss,
        steps: res.state.step_index,
        initial_distance,
        final_distance,
        decrement: initial_distance - final_distance,
    };
    Ok((result, res.log))
}

/// `minimum` moved by a Gaussian direction scaled to Frobenius norm `radius`.
pub fn perturb(minimum: &[Matrix], radius: f64, seed: u64) -> Vec<Matrix> {
    let total: usize = minimum.iter().map(|w| w.len()).sum();
    let g = sample_gaussian(total, 1, seed);
    let scale = radius / g.norm();
    let mut offset = 0;
    minimum
        .iter()
        .map(|w| {
            let dir = Matrix::from_column_slice(w.nrows(), w.ncols(), &g.as_slice()[offset..offset + w.len()]);
            offset += w.len();
            w + dir * scale
        })
        .collect()
}

pub fn basin(opts: &ScenarioOptions) -> Result<BasinOutcome> {
    let (n_base, n_pert) = opts.basin_scale;
    if n_base == 0 {
        return Err(Error::invalid("basin needs at least one base run"));
    }
    let workers = worker_count(opts.workers)?;
    let spec = basin_spec(opts.seed);
    let target = construct_target_from_spec(&spec)?;
    let bases: Vec<usize> = (0..n_base).collect();
    let base_runs = par_map(&bases, workers, |&i| {
        let seed = opts.seed.wrapping_add(SEED_OFFSET_BASIN_BASE).wrapping_add(i as u64);
        let config = basin_config(seed, BASIN_BASE_STEPS);
        let init = initialize(&config, &target)?;
        let res = run_state_tagged(init.clone(), &config, &target, Some(&spec), "basin", format!("base_{i:02}"))?;
        let final_loss = res.log.final_record().map_or(f64::NAN, |r| r.loss);
        if !(final_loss <= BASIN_CONVERGED_LOSS) {
            return Err(Error::Scenario(format!(
                "basin base run {i} did not converge: loss {final_loss:.3e} after {} steps ({:?})",
                res.state.step_index, res.stop
            )));
        }
        let distance = chain_distance(&init.factors, &res.state.factors);
        let result = BasinResult {
            base: i,
            perturbation: None,
            converged: true,
            final_loss,
            steps: res.state.step_index,
            initial_distance: distance,
            final_distance: 0.0,
            decrement: distance,
        };
        Ok((result, res.log, res.state.factors))
    })?;
    let pairs: Vec<(usize, usize)> = (0..n_base).flat_map(|i| (0..n_pert).map(move |j| (i, j))).collect();
    let perturbed = par_map(&pairs, workers, |&(i, j)| {
        let (base, _, minimum) = &base_runs[i];
        let seed = opts.seed.wrapping_add(SEED_OFFSET_BASIN_DIRECTION).wrapping_add(1000 * i as u64).wrapping_add(j as u64);
        let start = perturb(minimum, base.initial_distance, seed);
        let config = basin_config(opts.seed, BASIN_PERTURBED_STEPS);
        Ok(basin_probe(&target, minimum, start, &config, (i, Some(j)), format!("base_{i:02}_perturbed_{j:02}"))?.0)
    })?;
    let minimum = &base_runs[0].2;
    let config = basin_config(opts.seed, BASIN_PERTURBED_STEPS);
    let (zero_radius, _) = basin_probe(&target, minimum, minimum.clone(), &config, (0, None), "base_00_zero_radius".into())?;
    let (base, base_logs) = base_runs.into_iter().map(|(r, l, _)| (r, l)).unzip();
    Ok(BasinOutcome { scale: (n_base, n_pert), base_logs, base, perturbed, zero_radius })
}

impl BasinOutcome {
    pub fn summary(&self) -> Value {
        let decrements: Vec<f64> = self.perturbed.iter().map(|r| r.decrement).collect();
        json!({
            "scale": self.scale,
            "base": self.base,
            "perturbed": self.perturbed,
            "min_decrement": decrements.iter().cloned().reduce(f64::min),
            "max_perturbed_loss": self.perturbed.iter().map(|r| r.final_loss).reduce(f64::max),
            "zero_radius": self.zero_radius,
        })
    }

    pub fn checks(&self) -> Vec<Check> {
        let unconverged = self.perturbed.iter().filter(|r| !r.converged).count();
        let min_dec = self.perturbed.iter().map(|r| r.decrement).reduce(f64::min);
        vec![
            check("every base run converges", self.base.iter().all(|r| r.converged), format!("{} base runs", self.base.len())),
            check(
                "every perturbed run converges",
                unconverged == 0,
                format!("{unconverged} of {} perturbed runs above loss {BASIN_CONVERGED_LOSS:e}", self.perturbed.len()),
            ),
            check(
                "every distance decrement is positive",
                self.perturbed.iter().all(|r| r.decrement > 0.0),
                format!("smallest decrement {}", fmt_opt(min_dec)),
            ),
            check(
                "zero-radius restart stays put",
                self.zero_radius.converged && self.zero_radius.decrement == 0.0,
                format!("decrement {:e}, loss {:e}", self.zero_radius.decrement, self.zero_radius.final_loss),
            ),
        ]
    }
}

// ---- invariant drift ----

/// Block point `A = [aI; 0]`, `B = [bI 0]` against the target `σ [I_{r*} 0]`
/// on `DRIFT_DIMS`, where the balancedness rate is a multiple of the identity.
pub fn drift_block(a: f64, b: f64) -> Result<(TargetMatrix, FactorState)> {
    let (m, n, r) = DRIFT_DIMS;
    let k = DRIFT_TARGET_RANK;
    let eye_m = Matrix::identity(m, m);
    let eye_n = Matrix::identity(n, n);
    let target = TargetMatrix::from_frames(
        eye_m.columns(0, k).into_owned(),
        vec![DRIFT_SIGMA; k],
        eye_n.columns(0, k).into_owned(),
        eye_n.columns(k, n - k).into_owned(),
    )?;
    let mut fa = Matrix::zeros(m, r);
    let mut fb = Matrix::zeros(r, n);
    for i in 0..r {
        fa[(i, i)] = a;
        fb[(i, i)] = b;
    }
    Ok((target, FactorState::new(vec![fa, fb])?))
}

#[derive(Debug, Clone)]
pub struct DriftPair {
    pub setting: String,
    pub eta: f64,
    pub steps: usize,
    pub gd_max: f64,
    pub smoothed_max: f64,
    pub gd_log: TrajectoryLog,
    pub smoothed_log: TrajectoryLog,
}

impl DriftPair {
    pub fn ratio(&self) -> f64 {
        self.smoothed_max / self.gd_max
    }
}

#[derive(Debug, Clone)]
pub struct DriftOutcome {
    pub block: DriftPair,
    pub lora: DriftPair,
    /// Largest entry of the smoothed-flow balancedness rate at the `a = b` block point.
    pub symmetric_rate: f64,
    /// Closed-form rate coefficient at the unbalanced block point.
    pub block_rate: f64,
}

fn max_drift(log: &TrajectoryLog) -> Result<f64> {
    Ok(crate::diagnostics::balancedness_drift(log)?.into_iter().fold(0.0, f64::max))
}

pub fn invariant_drift(opts: &ScenarioOptions) -> Result<DriftOutcome> {
    let (block_target, block_state) = drift_block(DRIFT_A, DRIFT_B)?;
    let spec = lora_spec(opts.seed);
    let lora_target = construct_target_from_spec(&spec)?;
    let block_steps = opts.max_steps.unwrap_or(DRIFT_STEPS);
    let lora_steps = opts.max_steps.unwrap_or(DRIFT_LORA_STEPS);
    let jobs: Vec<(bool, Method)> =
        [true, false].iter().flat_map(|&b| [Method::Gd, Method::SpecSmoothed].map(|m| (b, m))).collect();
    let logs = par_map(&jobs, worker_count(opts.workers)?, |&(block, method)| {
        if block {
            let config = RunConfig {
                max_steps: block_steps,
                init: InitSpec::explicit(block_state.factors.clone()),
                ..RunConfig::new(method, DRIFT_ETA, DRIFT_DIMS.2, 1.0, opts.seed)
            };
            Ok(run_tagged(&config, &block_target, None, "invariant_drift", format!("block_{}", method.name()))?.log)
        } else {
            let config = RunConfig { stop_loss: 0.0, ..lora_config(method, DRIFT_LORA_ETA, opts.seed, lora_steps) };
            Ok(run_tagged(&config, &lora_target, Some(&spec), "invariant_drift", format!("lora_{}", method.name()))?.log)
        }
    })?;
    let mut it = logs.into_iter();
    let mut pair = |setting: &str, eta: f64, steps: usize| -> Result<DriftPair> {
        let gd_log = it.next().expect("four runs");
        let smoothed_log = it.next().expect("four runs");
        Ok(DriftPair {
            setting: setting.into(),
            eta,
            steps,
            gd_max: max_drift(&gd_log)?,
            smoothed_max: max_drift(&smoothed_log)?,
            gd_log,
            smoothed_log,
        })
    };
    let block = pair("block", DRIFT_ETA, block_steps)?;
    let lora = pair("lora", DRIFT_LORA_ETA, lora_steps)?;
    let (_, sym_state) = drift_block(DRIFT_A, DRIFT_A)?;
    let sym_matrix = balancedness_rate(&sym_state, &block_target, DEFAULT_BETA)?.amax();
    let symmetric_rate = sym_matrix.max(block_drift_rate(DRIFT_A, DRIFT_A, DRIFT_SIGMA, DEFAULT_BETA).abs());
    Ok(DriftOutcome { block, lora, symmetric_rate, block_rate: block_drift_rate(DRIFT_A, DRIFT_B, DRIFT_SIGMA, DEFAULT_BETA) })
}

impl DriftOutcome {
    pub fn summary(&self) -> Value {
        let p = |d: &DriftPair| json!({"eta": d.eta, "steps": d.steps, "gd_max": d.gd_max, "smoothed_max": d.smoothed_max, "ratio": d.ratio()});
        json!({
            "block": p(&self.block),
            "lora": p(&self.lora),
            "symmetric_rate": self.symmetric_rate,
            "block_rate": self.block_rate,
        })
    }

    pub fn checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        for d in [&self.block, &self.lora] {
            out.push(check(
                format!("{} GD drift <= {DRIFT_GD_BOUND:e}", d.setting),
                d.gd_max <= DRIFT_GD_BOUND,
                format!("GD drift {:.6e}", d.gd_max),
            ));
            out.push(check(
                format!("{} SpecSmoothed drift >= {DRIFT_RATIO} x GD drift", d.setting),
                d.smoothed_max >= DRIFT_RATIO * d.gd_max,
                format!("SpecSmoothed {:.6e}, GD {:.6e}, ratio {:.3e}", d.smoothed_max, d.gd_max, d.ratio()),
            ));
        }
        out.push(check(
            format!("balanced start has drift rate <= {DRIFT_SYMMETRIC_RATE_BOUND:e}"),
            self.symmetric_rate <= DRIFT_SYMMETRIC_RATE_BOUND,
            format!("rate {:.6e}", self.symmetric_rate),
        ));
        out
    }
}

// ---- regularized ----

#[derive(Debug, Clone)]
pub struct SuppressionRun {
    pub target: TargetSpec,
    pub lambda: f64,
    pub log: TrajectoryLog,
    pub final_singular_values: Vec<f64>,
    pub gradient_norms: Vec<f64>,
    /// Largest final product singular value among modes with `σᵢ ≤ λ`.
    pub max_suppressed: f64,
}

#[derive(Debug, Clone)]
pub struct RegularizedOutcome {
    pub lambda: f64,
    pub log: TrajectoryLog,
    pub stop: StopReason,
    pub steps: usize,
    pub final_singular_values: Vec<f64>,
    /// `σᵢ − λ` for every retained mode `σᵢ > λ`.
    pub expected: Vec<f64>,
    pub max_sigma_error: f64,
    pub gradient_norms: Vec<f64>,
    pub suppression: SuppressionRun,
}

pub fn regularized_config(lambda: f64, eta: f64, rank: usize, seed: u64, max_steps: usize) -> RunConfig {
    RunConfig {
        lambda,
        max_steps,
        stop_grad_norm: REG_GRAD_TOL,
        log_stride: REG_STRIDE,
        ..RunConfig::new(Method::SpecSmoothed, eta, rank, LORA_GAMMA, seed)
    }
}

pub fn regularized(opts: &ScenarioOptions) -> Result<RegularizedOutcome> {
    let lambda = opts.lambda.unwrap_or(REG_LAMBDA);
    let eta = opts.eta.unwrap_or(REG_ETA);
    let steps = opts.max_steps.unwrap_or(REG_STEPS);
    let specs = [
        lora_spec(opts.seed),
        TargetSpec { m: REG_SUPPRESS_DIMS.0, n: REG_SUPPRESS_DIMS.1, sigma: REG_SUPPRESS_SIGMA.to_vec(), seed: opts.seed },
    ];
    let runs = par_map(&specs, worker_count(opts.workers)?, |spec| {
        let target = construct_target_from_spec(spec)?;
        let mut config = regularized_config(lambda, eta, spec.sigma.len(), opts.seed, steps);
        if let Some(s) = opts.log_stride {
            config.log_stride = s;
        }
        let label = format!("lambda={lambda}_{}x{}", spec.m, spec.n);
        let res = run_tagged(&config, &target, Some(spec), "regularized", label)?;
        let grads: Vec<f64> = gradients(&res.state, &target, lambda)?.iter().map(|g| g.norm()).collect();
        Ok((res, grads))
    })?;
    let mut it = runs.into_iter();
    let (main, grads) = it.next().expect("two runs");
    let (small, small_grads) = it.next().expect("two runs");
    let svals = main.log.final_record().expect("final record").product_singular_values.clone();
    let expected: Vec<f64> = LORA_SIGMA.iter().filter(|&&s| s > lambda).map(|s| s - lambda).collect();
    let max_sigma_error = expected.iter().zip(&svals).map(|(e, s)| (e - s).abs()).fold(0.0, f64::max);
    let small_svals = small.log.final_record().expect("final record").product_singular_values.clone();
    let max_suppressed =
        REG_SUPPRESS_SIGMA.iter().zip(&small_svals).filter(|(&s, _)| s <= lambda).map(|(_, &v)| v).fold(0.0, f64::max);
    Ok(RegularizedOutcome {
        lambda,
        stop: main.stop,
        steps: main.state.step_index,
        final_singular_values: svals,
        expected,
        max_sigma_error,
        gradient_norms: grads,
        log: main.log,
        suppression: SuppressionRun {
            target: specs[1].clone(),
            lambda,
            log: small.log,
            final_singular_values: small_svals,
            gradient_norms: small_grads,
            max_suppressed,
        },
    })
}

impl RegularizedOutcome {
    pub fn summary(&self) -> Value {
        json!({
            "lambda": self.lambda,
            "stop": self.stop,
            "steps": self.steps,
            "final_singular_values": self.final_singular_values,
            "expected": self.expected,
            "max_sigma_error": self.max_sigma_error,
            "gradient_norms": self.gradient_norms,
            "suppression": {
                "target": self.suppression.target,
                "final_singular_values": self.suppression.final_singular_values,
                "gradient_norms": self.suppression.gradient_norms,
                "max_suppressed": self.suppression.max_suppressed,
            },
        })
    }

    pub fn checks(&self) -> Vec<Check> {
        let gmax = self.gradient_norms.iter().cloned().fold(0.0, f64::max);
        vec![
            check(
                format!("gradient norms <= {REG_GRAD_TOL:e}"),
                gmax <= REG_GRAD_TOL,
                format!("largest gradient norm {gmax:.6e} after {} steps ({:?})", self.steps, self.stop),
            ),
            check(
                format!("retained singular values within {REG_SIGMA_TOL:e} of sigma - lambda"),
                self.max_sigma_error <= REG_SIGMA_TOL,
                format!("largest error {:.6e}", self.max_sigma_error),
            ),
            check(
                format!("modes with sigma <= lambda end below {REG_SUPPRESSED_BOUND:e}"),
                self.suppression.max_suppressed <= REG_SUPPRESSED_BOUND,
                format!("largest suppressed value {:.6e}", self.suppression.max_suppressed),
            ),
        ]
    }
}

// ---- rank-one ODE ----

#[derive(Debug, Clone)]
pub struct Rank1Run {
    pub gamma: f64,
    pub alpha: f64,
    pub assumption: Rank1Assumption,
    pub trajectory: Rank1Trajectory,
}

impl Rank1Run {
    pub fn loss_monotone(&self) -> bool {
        self.trajectory.samples.windows(2).all(|w| w[1].loss <= w[0].loss)
    }
}

#[derive(Debug, Clone)]
pub struct Rank1Outcome {
    pub runs: Vec<Rank1Run>,
    /// `α = 1`: B starts on the target direction.
    pub aligned: Rank1Run,
}

fn rank1_run(gamma: f64, alpha: f64) -> Result<Rank1Run> {
    let init = Rank1State::lora(gamma, alpha, RANK1_SIGMA, RANK1_BETA);
    let trajectory = integrate_rank1_with(init, RANK1_T_END, RANK1_DT, 1, RANK1_SATURATION_RESIDUAL)?;
    Ok(Rank1Run { gamma, alpha, assumption: rank1_assumption(gamma, alpha, RANK1_SIGMA, RANK1_BETA), trajectory })
}

pub fn rank1_ode(opts: &ScenarioOptions) -> Result<Rank1Outcome> {
    let runs = par_map(&RANK1_GAMMAS, worker_count(opts.workers)?, |&g| rank1_run(g, RANK1_ALPHA))?;
    Ok(Rank1Outcome { runs, aligned: rank1_run(RANK1_GAMMAS[1], 1.0)? })
}

impl Rank1Outcome {
    pub fn tables(&self) -> Vec<SeriesTable> {
        self.runs
            .iter()
            .chain(std::iter::once(&self.aligned))
            .map(|r| SeriesTable {
                label: format!("gamma={}_alpha={}", r.gamma, r.alpha),
                columns: ["t", "a", "b", "c", "ab", "loss", "m"].map(String::from).to_vec(),
                rows: r.trajectory.samples.iter().map(|s| vec![s.t, s.a, s.b, s.c, s.ab, s.loss, s.m]).collect(),
            })
            .collect()
    }

    pub fn summary(&self) -> Value {
        let one = |r: &Rank1Run| {
            let t = &r.trajectory;
            json!({
                "gamma": r.gamma, "alpha": r.alpha, "assumption": r.assumption,
                "sup_gap": t.sup_gap, "sup_rate_gap": t.sup_rate_gap,
                "final_residual": t.final_residual(), "final_c": t.final_state.c,
                "max_m_before_saturation": t.max_m_before_saturation, "max_c_increase": t.max_c_increase,
                "stats": t.stats,
            })
        };
        json!({
            "sigma": RANK1_SIGMA, "beta": RANK1_BETA,
            "runs": self.runs.iter().map(one).collect::<Vec<_>>(),
            "aligned": one(&self.aligned),
        })
    }

    pub fn checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        for r in &self.runs {
            let t = &r.trajectory;
            let g = r.gamma;
            out.push(check(
                format!("gamma={g} satisfies the small-initialization condition"),
                r.assumption.holds,
                format!("{:?}", r.assumption),
            ));
            out.push(check(
                format!("gamma={g} final |ab - sigma| <= {RANK1_RESIDUAL_TOL:e}"),
                t.final_residual() <= RANK1_RESIDUAL_TOL,
                format!("{:.6e}", t.final_residual()),
            ));
            out.push(check(
                format!("gamma={g} final c <= {RANK1_C_TOL:e}"),
                t.final_state.c <= RANK1_C_TOL,
                format!("{:.6e}", t.final_state.c),
            ));
            out.push(check(
                format!("gamma={g} sup |a - b| <= {RANK1_GAP_FACTOR} gamma"),
                t.sup_gap <= RANK1_GAP_FACTOR * g,
                format!("{:.6e}", t.sup_gap),
            ));
            out.push(check(
                format!("gamma={g} loss never increases"),
                r.loss_monotone(),
                format!("{} accepted steps", t.stats.accepted_steps),
            ));
            out.push(check(
                format!("gamma={g} m < 0 until saturation"),
                t.max_m_before_saturation < 0.0,
                format!("largest m {:.6e}", t.max_m_before_saturation),
            ));
            out.push(check(
                format!("gamma={g} |c| never increases"),
                t.max_c_increase <= 0.0,
                format!("largest increase {:.6e}", t.max_c_increase),
            ));
        }
        let gaps: Vec<f64> = self.runs.iter().map(|r| r.trajectory.sup_gap).collect();
        out.push(check("sup |a - b| shrinks with gamma", gaps.windows(2).all(|w| w[1] < w[0]), format!("{gaps:?}")));
        let a = &self.aligned;
        out.push(check(
            "alpha=1 keeps c = 0 and |a - b| <= gamma",
            a.trajectory.samples.iter().all(|s| s.c == 0.0) && a.trajectory.sup_gap <= a.gamma + MODE_PAIR_GAP_SLACK,
            format!("sup gap {:.6e}", a.trajectory.sup_gap),
        ));
        out
    }
}

// ---- spectral-initialization mode pairs ----

#[derive(Debug, Clone)]
pub struct ModePairRun {
    pub sigma_i: f64,
    pub start: (f64, f64),
    pub trajectory: ModeTrajectory,
}

impl ModePairRun {
    pub fn initial_gap(&self) -> f64 {
        (self.start.0 - self.start.1).abs()
    }

    pub fn final_product_error(&self) -> f64 {
        (self.trajectory.final_pair.sa * self.trajectory.final_pair.sb - self.sigma_i).abs()
    }
}

#[derive(Debug, Clone)]
pub struct ModePairOutcome {
    pub runs: Vec<ModePairRun>,
}

pub fn mode_pairs(opts: &ScenarioOptions) -> Result<ModePairOutcome> {
    let starts = [(MODE_PAIR_START, MODE_PAIR_START), MODE_PAIR_SKEWED_START];
    let jobs: Vec<(f64, (f64, f64))> = starts.iter().flat_map(|&s| LORA_SIGMA.map(|sig| (sig, s))).collect();
    let runs = par_map(&jobs, worker_count(opts.workers)?, |&(sigma_i, start)| {
        let init = ModePair { sa: start.0, sb: start.1, sigma_i, beta: DEFAULT_BETA };
        let trajectory = integrate_mode_pair_with(init, MODE_PAIR_T_END, MODE_PAIR_DT, 1)?;
        Ok(ModePairRun { sigma_i, start, trajectory })
    })?;
    Ok(ModePairOutcome { runs })
}

impl ModePairOutcome {
    pub fn tables(&self) -> Vec<SeriesTable> {
        self.runs
            .iter()
            .map(|r| SeriesTable {
                label: format!("sigma={}_start={}_{}", r.sigma_i, r.start.0, r.start.1),
                columns: ["t", "sa", "sb", "product"].map(String::from).to_vec(),
                rows: r.trajectory.samples.iter().map(|s| vec![s.t, s.sa, s.sb, s.product]).collect(),
            })
            .collect()
    }

    pub fn summary(&self) -> Value {
        json!({
            "runs": self.runs.iter().map(|r| json!({
                "sigma_i": r.sigma_i, "start": r.start, "initial_gap": r.initial_gap(),
                "sup_gap": r.trajectory.sup_gap, "final_product_error": r.final_product_error(),
                "stats": r.trajectory.stats,
            })).collect::<Vec<_>>(),
        })
    }

    pub fn checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        for r in &self.runs {
            let tag = format!("sigma={} start=({}, {})", r.sigma_i, r.start.0, r.start.1);
            out.push(check(
                format!("{tag} gap never exceeds its initial value"),
                r.trajectory.sup_gap <= r.initial_gap() + MODE_PAIR_GAP_SLACK,
                format!("sup gap {:.6e}, initial {:.6e}", r.trajectory.sup_gap, r.initial_gap()),
            ));
            out.push(check(
                format!("{tag} product reaches sigma within {MODE_PAIR_PRODUCT_TOL:e}"),
                r.final_product_error() <= MODE_PAIR_PRODUCT_TOL,
                format!("error {:.6e}", r.final_product_error()),
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names_are_unique_and_dispatch() {
        let names = scenario_names();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
        assert!(matches!(run_scenario("no_such", &ScenarioOptions::default()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn worker_count_rejects_zero() {
        assert!(worker_count(Some(0)).is_err());
        assert_eq!(worker_count(Some(3)).unwrap(), 3);
    }

    #[test]
    fn par_map_keeps_input_order_and_first_error() {
        let items: Vec<usize> = (0..50).collect();
        let out = par_map(&items, 4, |&i| Ok(i * i)).unwrap();
        assert_eq!(out, items.iter().map(|i| i * i).collect::<Vec<_>>());
        let err = par_map(&items, 4, |&i| if i % 7 == 3 { Err(Error::invalid(format!("{i}"))) } else { Ok(i) });
        assert!(matches!(err, Err(Error::InvalidArgument(m)) if m == "3"));
    }

    #[test]
    fn perturbation_has_requested_radius() {
        let base = vec![Matrix::zeros(3, 2), Matrix::from_element(2, 4, 1.0)];
        let p = perturb(&base, 0.25, 9);
        assert!((chain_distance(&p, &base) - 0.25).abs() < 1e-14);
        assert_eq!(perturb(&base, 0.0, 9), base);
    }

    #[test]
    fn drift_block_rate_is_identity_multiple() {
        let (t, s) = drift_block(DRIFT_A, DRIFT_B).unwrap();
        let rate = balancedness_rate(&s, &t, DEFAULT_BETA).unwrap();
        let c = block_drift_rate(DRIFT_A, DRIFT_B, DRIFT_SIGMA, DEFAULT_BETA);
        assert!(c.abs() > 1e-3);
        assert!((rate - Matrix::identity(2, 2) * c).amax() < 1e-12);
    }

    #[test]
    fn momentum_zero_exact_config_is_the_growth_config() {
        let a = momentum_config(Orthogonalizer::Exact, 0.0, 1e-3, 5, 100);
        assert_eq!(a, lora_config(Method::SpecExact, 1e-3, 5, 100));
        assert_eq!(depth_config(2, 0.01, 5, 100), lora_config(Method::SpecExact, 0.01, 5, 100));
    }
}
