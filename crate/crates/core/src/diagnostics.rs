//! Quantities measured along a trajectory: core variables in the target's
//! singular frames, product spectra, active sets, effective rank, slopes of
//! the square-root diagonal coordinates, convergence order and the drift of
//! the balancedness matrix `AᵀA − BBᵀ`.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{orthogonalize_smoothed, qr_r, singular_values, Matrix};
use crate::optimize::RunConfig;
use crate::params::{ACTIVE_EPSILON_FRACTION, RANK_CUTOFF_REL};
use crate::problem::{chain_product, gradients, FactorState, TargetMatrix, TargetSpec};

/// Core variables `X = U_rᵀA`, `Z = BV_r`, `Z_⊥ = BV_⊥`, `G = XZ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreSnapshot {
    pub x: Matrix,
    pub z: Matrix,
    pub z_perp: Matrix,
    pub g: Matrix,
    /// First `min(r, r*)` diagonal entries of `G`.
    pub d: Vec<f64>,
    /// `dᵢ − σᵢ`.
    pub e: Vec<f64>,
    /// `‖G − Diag(diag G)‖_F` over the full `G`.
    pub off_g_fro: f64,
    /// `‖X Z_⊥‖_F`.
    pub xz_perp_fro: f64,
}

impl CoreSnapshot {
    pub fn summary(&self) -> CoreSummary {
        CoreSummary { d: self.d.clone(), e: self.e.clone(), off_g_fro: self.off_g_fro, xz_perp_fro: self.xz_perp_fro }
    }
}

/// The scalar part of a [`CoreSnapshot`], kept per logged step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreSummary {
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub off_g_fro: f64,
    pub xz_perp_fro: f64,
}

pub fn core_variables(state: &FactorState, target: &TargetMatrix) -> Result<CoreSnapshot> {
    if state.depth() != 2 {
        return Err(Error::Unsupported(format!("core variables are defined for two factors, got depth {}", state.depth())));
    }
    if state.shape() != target.y.shape() {
        return Err(Error::invalid("state does not match target shape"));
    }
    let (a, b) = (&state.factors[0], &state.factors[1]);
    let x = target.u_r.tr_mul(a);
    let z = b * &target.v_r;
    let z_perp = b * &target.v_perp;
    let g = &x * &z;
    let k = state.rank().min(target.rank());
    let d: Vec<f64> = (0..k).map(|i| g[(i, i)]).collect();
    let e = d.iter().zip(&target.sigma).map(|(d, s)| d - s).collect();
    let mut off = g.clone();
    off.fill_diagonal(0.0);
    let off_g_fro = off.norm();
    let xz_perp_fro = (&x * &z_perp).norm();
    Ok(CoreSnapshot { x, z, z_perp, g, d, e, off_g_fro, xz_perp_fro })
}

/// Top `r` singular values of the chain product (r = inner rank), entries at
/// or below the rank cutoff reported as 0.
///
/// Uses `σ(W_L⋯W_1) = σ(R_L W_{L-1}⋯W_2 R_1ᵀ)` with `R_L`, `R_1` the
/// triangular QR factors of `W_L` and `W_1ᵀ`, which avoids an m×n SVD.
pub fn product_singular_values(state: &FactorState) -> Result<Vec<f64>> {
    let f = &state.factors;
    let r = state.rank();
    let (m, n) = state.shape();
    let ra = qr_r(&f[0]);
    let rb = qr_r(&f[f.len() - 1].transpose());
    let mut core = ra;
    if f.len() > 2 {
        core *= chain_product(&f[1..f.len() - 1]);
    }
    let core = core * rb.transpose();
    let mut s = singular_values(&core)?;
    let smax = s.first().copied().unwrap_or(0.0);
    for x in s.iter_mut() {
        if *x <= RANK_CUTOFF_REL * smax {
            *x = 0.0;
        }
    }
    s.resize(r.min(m).min(n), 0.0);
    Ok(s)
}

/// Max over a greedy matching of `|σ_π(i) − dᵢ|`: the `dᵢ` are visited in
/// descending order and each takes the nearest unused singular value
/// (missing values count as 0).
pub fn diagonal_surrogate_error(d: &[f64], product_svals: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&i, &j| d[j].total_cmp(&d[i]).then(i.cmp(&j)));
    let mut pool: Vec<f64> = product_svals.to_vec();
    pool.resize(pool.len().max(d.len()), 0.0);
    let mut used = vec![false; pool.len()];
    let mut worst = 0.0f64;
    for i in order {
        let (mut best, mut best_gap) = (usize::MAX, f64::INFINITY);
        for (j, &s) in pool.iter().enumerate() {
            let gap = (s - d[i]).abs();
            if !used[j] && gap < best_gap {
                best = j;
                best_gap = gap;
            }
        }
        used[best] = true;
        worst = worst.max(best_gap);
    }
    worst
}

/// `exp(−Σ pᵢ log pᵢ)` with `pᵢ = σᵢ / Σσ` over values above the rank cutoff.
pub fn effective_rank(singular_values: &[f64]) -> Result<f64> {
    let smax = singular_values.iter().cloned().fold(0.0f64, f64::max);
    if !(smax > 0.0) {
        return Err(Error::invalid("effective rank of an all-zero spectrum"));
    }
    let kept: Vec<f64> = singular_values.iter().cloned().filter(|&s| s > RANK_CUTOFF_REL * smax).collect();
    let total: f64 = kept.iter().sum();
    let entropy: f64 = kept.iter().map(|s| s / total).map(|p| -p * p.ln()).sum();
    Ok(entropy.exp())
}

/// `AᵀA − BBᵀ` (r×r).
pub fn balancedness(a: &Matrix, b: &Matrix) -> Matrix {
    a.tr_mul(a) - b * b.transpose()
}

/// Time derivative of `AᵀA − BBᵀ` along the smoothed spectral flow
/// `Ȧ = −𝒯_β(∇_A)`, `Ḃ = −𝒯_β(∇_B)`.
pub fn balancedness_rate(state: &FactorState, target: &TargetMatrix, beta: f64) -> Result<Matrix> {
    if state.depth() != 2 {
        return Err(Error::Unsupported("balancedness is defined for two factors".into()));
    }
    let g = gradients(state, target, 0.0)?;
    let (a, b) = (&state.factors[0], &state.factors[1]);
    let a_dot = -orthogonalize_smoothed(&g[0], beta)?;
    let b_dot = -orthogonalize_smoothed(&g[1], beta)?;
    let ata = a_dot.tr_mul(a);
    let bbt = &b_dot * b.transpose();
    Ok(&ata + ata.transpose() - &bbt - bbt.transpose())
}

/// Scalar coefficient of `I_r` in the drift rate of `AᵀA − BBᵀ` at the block
/// point `A = [aI; 0]`, `B = [bI 0]` for target `σ I` under the smoothed flow.
pub fn block_drift_rate(a: f64, b: f64, sigma: f64, beta: f64) -> f64 {
    let res = a * b - sigma;
    -2.0 * a * b * res * (1.0 / (b * b * res * res + beta).sqrt() - 1.0 / (a * a * res * res + beta).sqrt())
}

/// Per-step snapshot written to trajectory logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    /// Continuous time `step · η`.
    pub time: f64,
    pub loss: f64,
    pub product_singular_values: Vec<f64>,
    /// Absent for chains deeper than two factors.
    pub core: Option<CoreSummary>,
    /// Zero-based mode indices with `|eᵢ| > ε`.
    pub active_set: Vec<usize>,
    /// 0 when the product is zero (the measure itself is undefined there).
    pub effective_rank: f64,
    /// Absent for chains deeper than two factors.
    pub balancedness_drift: Option<f64>,
    pub per_factor_fro_norms: Vec<f64>,
}

/// Per-run constants needed to produce [`StepDiagnostics`].
#[derive(Debug, Clone)]
pub struct DiagnosticsContext {
    pub eta: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub initial_balancedness: Option<Matrix>,
}

impl DiagnosticsContext {
    pub fn new(state: &FactorState, target: &TargetMatrix, config: &RunConfig) -> Result<Self> {
        let k = state.rank().min(target.rank());
        let epsilon = config.epsilon.unwrap_or(ACTIVE_EPSILON_FRACTION * target.sigma[k - 1]);
        let initial_balancedness = (state.depth() == 2).then(|| balancedness(&state.factors[0], &state.factors[1]));
        Ok(DiagnosticsContext { eta: config.eta, lambda: config.lambda, epsilon, initial_balancedness })
    }
}

pub fn step_diagnostics(state: &FactorState, target: &TargetMatrix, ctx: &DiagnosticsContext) -> Result<StepDiagnostics> {
    let loss = crate::problem::loss(state, target, ctx.lambda)?.value;
    let svals = product_singular_values(state)?;
    let core = if state.depth() == 2 { Some(core_variables(state, target)?.summary()) } else { None };
    // Deep chains measure the gap on the product spectrum instead of dᵢ.
    let gaps: Vec<f64> = match &core {
        Some(c) => c.e.clone(),
        None => svals.iter().zip(&target.sigma).map(|(s, t)| s - t).collect(),
    };
    let active_set = gaps.iter().enumerate().filter(|(_, e)| e.abs() > ctx.epsilon).map(|(i, _)| i).collect();
    let effective_rank = effective_rank(&svals).unwrap_or(0.0);
    let balancedness_drift =
        ctx.initial_balancedness.as_ref().map(|b0| (balancedness(&state.factors[0], &state.factors[1]) - b0).norm());
    Ok(StepDiagnostics {
        step: state.step_index,
        time: state.step_index as f64 * ctx.eta,
        loss,
        product_singular_values: svals,
        core,
        active_set,
        effective_rank,
        balancedness_drift,
        per_factor_fro_norms: state.fro_norms(),
    })
}

/// Everything needed to identify and re-run a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub label: String,
    pub scenario: Option<String>,
    pub seed: u64,
    pub config: RunConfig,
    pub target: Option<TargetSpec>,
    pub version: String,
}

impl RunMetadata {
    pub fn new(label: &str, config: &RunConfig) -> Self {
        RunMetadata {
            label: label.to_string(),
            scenario: None,
            seed: config.seed,
            config: config.clone(),
            target: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub metadata: RunMetadata,
    pub records: Vec<StepDiagnostics>,
}

impl TrajectoryLog {
    pub fn final_record(&self) -> Option<&StepDiagnostics> {
        self.records.last()
    }

    /// First logged step with loss at most `level`.
    pub fn first_step_below(&self, level: f64) -> Option<usize> {
        self.records.iter().find(|r| r.loss <= level).map(|r| r.step)
    }

    fn cores(&self) -> Result<Vec<&CoreSummary>> {
        self.records
            .iter()
            .map(|r| r.core.as_ref().ok_or_else(|| Error::Unsupported("log has no core variables".into())))
            .collect()
    }
}

/// Least-squares line with coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::invalid(format!("a line fit needs at least 3 paired points, got {}", xs.len())));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("a line fit needs distinct abscissae"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(LineFit { slope, intercept, r2 })
}

fn window_records<'a>(log: &'a TrajectoryLog, window: &RangeInclusive<usize>) -> Result<Vec<&'a StepDiagnostics>> {
    let recs: Vec<_> = log.records.iter().filter(|r| window.contains(&r.step)).collect();
    if recs.len() < 3 {
        return Err(Error::invalid(format!("window {window:?} holds {} records, need at least 3", recs.len())));
    }
    Ok(recs)
}

/// Per-mode line fits of `√dᵢ` against time over the steps in `window`.
pub fn sqrt_coordinate_fits(log: &TrajectoryLog, window: RangeInclusive<usize>) -> Result<Vec<LineFit>> {
    let recs = window_records(log, &window)?;
    let cores: Vec<&CoreSummary> = recs
        .iter()
        .map(|r| r.core.as_ref().ok_or_else(|| Error::Unsupported("log has no core variables".into())))
        .collect::<Result<_>>()?;
    let k = cores[0].d.len();
    let ts: Vec<f64> = recs.iter().map(|r| r.time).collect();
    (0..k)
        .map(|i| {
            let ys: Vec<f64> = cores
                .iter()
                .map(|c| {
                    if c.d[i] < 0.0 {
                        Err(Error::invalid(format!("d_{} is negative inside the window", i + 1)))
                    } else {
                        Ok(c.d[i].sqrt())
                    }
                })
                .collect::<Result<_>>()?;
            linear_fit(&ts, &ys)
        })
        .collect()
}

/// Least-squares slopes of `√dᵢ(t)` over `window`, one per mode.
pub fn sqrt_coordinate_slopes(log: &TrajectoryLog, window: RangeInclusive<usize>) -> Result<Vec<f64>> {
    Ok(sqrt_coordinate_fits(log, window)?.into_iter().map(|f| f.slope).collect())
}

/// Per-mode fits of `σᵢ(∏W)^{1/L}` against time over `window`.
pub fn root_spectrum_fits(log: &TrajectoryLog, window: RangeInclusive<usize>, depth: usize) -> Result<Vec<LineFit>> {
    let recs = window_records(log, &window)?;
    let ts: Vec<f64> = recs.iter().map(|r| r.time).collect();
    let k = recs[0].product_singular_values.len();
    (0..k)
        .map(|i| {
            let ys: Vec<f64> = recs.iter().map(|r| r.product_singular_values[i].powf(1.0 / depth as f64)).collect();
            linear_fit(&ts, &ys)
        })
        .collect()
}

/// `max − min` of a slope list.
pub fn max_pairwise_gap(values: &[f64]) -> f64 {
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    hi - lo
}

fn first_block(steps: impl Iterator<Item = (usize, bool)>) -> Option<RangeInclusive<usize>> {
    let mut start = None;
    let mut end = 0;
    for (step, ok) in steps {
        match (ok, start) {
            (true, None) => {
                start = Some(step);
                end = step;
            }
            (true, Some(_)) => end = step,
            (false, Some(_)) => break,
            (false, None) => {}
        }
    }
    start.map(|s| s..=end)
}

/// First contiguous block of logged steps in which every mode has `eᵢ ≤ −ε`.
pub fn all_active_window(log: &TrajectoryLog, epsilon: f64) -> Result<Option<RangeInclusive<usize>>> {
    let cores = log.cores()?;
    Ok(first_block(log.records.iter().zip(cores).map(|(r, c)| (r.step, c.e.iter().all(|&e| e <= -epsilon)))))
}

/// First contiguous block of logged steps where every product singular value
/// is positive and at most `σᵢ − ε`.
pub fn product_active_window(log: &TrajectoryLog, sigma: &[f64], epsilon: f64) -> Option<RangeInclusive<usize>> {
    first_block(log.records.iter().map(|r| {
        let ok = r.product_singular_values.iter().zip(sigma).all(|(&s, &t)| s > 0.0 && s <= t - epsilon);
        (r.step, ok)
    }))
}

/// For each mode, the first logged step from which `|eᵢ| ≤ ε` holds at every
/// later record.
pub fn settle_steps(log: &TrajectoryLog, epsilon: f64) -> Result<Vec<usize>> {
    let cores = log.cores()?;
    let last = cores.last().ok_or_else(|| Error::invalid("empty log"))?;
    let k = last.e.len();
    (0..k)
        .map(|i| {
            if last.e[i].abs() > epsilon {
                return Err(Error::NonConvergent { mode: i + 1, last_abs_e: last.e[i].abs() });
            }
            let mut settle = log.records.len() - 1;
            while settle > 0 && cores[settle - 1].e[i].abs() <= epsilon {
                settle -= 1;
            }
            Ok(log.records[settle].step)
        })
        .collect()
}

/// Modes (1-based) sorted by settle step; ties keep mode order.
pub fn convergence_order(log: &TrajectoryLog, epsilon: f64) -> Result<Vec<usize>> {
    let settle = settle_steps(log, epsilon)?;
    let mut modes: Vec<usize> = (1..=settle.len()).collect();
    modes.sort_by_key(|&m| (settle[m - 1], m));
    Ok(modes)
}

/// `‖(AᵀA − BBᵀ)(t) − (AᵀA − BBᵀ)(0)‖_F` for every logged step.
pub fn balancedness_drift(log: &TrajectoryLog) -> Result<Vec<f64>> {
    log.records
        .iter()
        .map(|r| r.balancedness_drift.ok_or_else(|| Error::Unsupported("log has no balancedness drift".into())))
        .collect()
}

/// Line fit of `log₁₀ ℒ` against step over the final decade of loss: the
/// records after the last one whose loss is at least ten times the final loss.
pub fn final_decade_fit(log: &TrajectoryLog) -> Result<LineFit> {
    let last = log.final_record().ok_or_else(|| Error::invalid("empty log"))?;
    let floor = last.loss;
    if !(floor > 0.0) {
        return Err(Error::invalid("final loss must be positive for a log-linear fit"));
    }
    let start = log.records.iter().rposition(|r| r.loss >= 10.0 * floor).unwrap_or(0);
    let recs = &log.records[start..];
    let xs: Vec<f64> = recs.iter().map(|r| r.step as f64).collect();
    let ys: Vec<f64> = recs.iter().map(|r| r.loss.log10()).collect();
    linear_fit(&xs, &ys)
}
