//! Scalar reductions of the smoothed spectral flow, integrated with classic
//! fourth-order Runge–Kutta.
//!
//! * Rank one: `A = a u`, `B = b vᵀ + c zᵀ` with `z ⊥ v`, target `σ u vᵀ`.
//! * Spectral initialization: each mode pair `(σ_A,i, σ_B,i)` evolves alone.
//!
//! Accepted steps never increase the loss, and each must realize at least half
//! of the decrease `h·dℒ/dt` predicted by the flow; otherwise the step is
//! retried at half the step size, and the halving persists for the rest of the
//! run. This rejects both the spurious fixed points and the jumps across the
//! minimum that a sign-like right-hand side produces for an over-long step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ODE_LOSS_FLOOR, ODE_MAX_HALVINGS, ODE_SUFFICIENT_DECREASE};

/// `f_β(x) = x / √(x² + β)`, the scalar action of the smoothed orthogonalization.
pub fn f_beta(x: f64, beta: f64) -> f64 {
    x / (x * x + beta).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rank1State {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub sigma: f64,
    pub beta: f64,
    /// `⟨v, w⟩` for the initial direction `w` of B.
    pub alpha: f64,
}

impl Rank1State {
    /// `A(0) = 0`, `B(0) = γ wᵀ` with `w = α v + √(1−α²) z`.
    pub fn lora(gamma: f64, alpha: f64, sigma: f64, beta: f64) -> Self {
        Rank1State { a: 0.0, b: gamma * alpha, c: gamma * (1.0 - alpha * alpha).max(0.0).sqrt(), sigma, beta, alpha }
    }

    fn with(&self, y: [f64; 3]) -> Self {
        Rank1State { a: y[0], b: y[1], c: y[2], ..*self }
    }

    pub fn residual_sq(&self) -> f64 {
        let r = self.a * self.b - self.sigma;
        r * r + (self.a * self.c).powi(2)
    }

    /// `½‖d‖²` with `d = (ab − σ, ac)`.
    pub fn loss(&self) -> f64 {
        0.5 * self.residual_sq()
    }

    /// `m = (ab − σ) b + a c²`, the coefficient driving `a`.
    pub fn m(&self) -> f64 {
        (self.a * self.b - self.sigma) * self.b + self.a * self.c * self.c
    }
}

/// `(ȧ, ḃ, ċ)` of the rank-one smoothed flow.
pub fn rank1_rhs(s: &Rank1State) -> (f64, f64, f64) {
    let m = s.m();
    let denom = (s.a * s.a * s.residual_sq() + s.beta).sqrt();
    let res = s.a * s.b - s.sigma;
    (-m / (m * m + s.beta).sqrt(), -s.a * res / denom, -s.a * s.a * s.c / denom)
}

/// Outcome of checking the small-initialization condition on γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rank1Assumption {
    /// `T = √(1−α²)/α · (1 + 4√β/σ)`.
    pub t: f64,
    pub gamma_sq_bound: f64,
    pub gamma_bound: f64,
    pub holds: bool,
}

/// Checks `γ² < ασ / (4(1−α²)^{3/2})` and
/// `γ < min{(σ/2) / (√(1−α²)(α + T)), 1}`.
pub fn rank1_assumption(gamma: f64, alpha: f64, sigma: f64, beta: f64) -> Rank1Assumption {
    let s = (1.0 - alpha * alpha).max(0.0).sqrt();
    let t = s / alpha * (1.0 + 4.0 * beta.sqrt() / sigma);
    let gamma_sq_bound = if s == 0.0 { f64::INFINITY } else { alpha * sigma / (4.0 * s.powi(3)) };
    let gamma_bound = if s == 0.0 { 1.0 } else { ((sigma / 2.0) / (s * (alpha + t))).min(1.0) };
    let holds = alpha > 0.0 && alpha <= 1.0 && gamma > 0.0 && gamma * gamma < gamma_sq_bound && gamma < gamma_bound;
    Rank1Assumption { t, gamma_sq_bound, gamma_bound, holds }
}

fn rk4<const N: usize>(y: [f64; N], dt: f64, f: &impl Fn([f64; N]) -> [f64; N]) -> [f64; N] {
    let add = |y: [f64; N], k: [f64; N], h: f64| -> [f64; N] {
        let mut out = y;
        for i in 0..N {
            out[i] += h * k[i];
        }
        out
    };
    let k1 = f(y);
    let k2 = f(add(y, k1, dt / 2.0));
    let k3 = f(add(y, k2, dt / 2.0));
    let k4 = f(add(y, k3, dt));
    let mut out = y;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Why an integration ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OdeStop {
    /// Reached `t_end`.
    Horizon,
    /// The loss reached the rounding floor and stopped decreasing.
    LossFloor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeStats {
    pub accepted_steps: usize,
    pub halvings: u32,
    pub final_dt: f64,
    pub stop: OdeStop,
}

/// Drives RK4 from `y0`, calling `visit(t, y)` at every accepted state
/// (including the initial one).
fn integrate<const N: usize>(
    y0: [f64; N],
    t_end: f64,
    dt0: f64,
    rhs: impl Fn([f64; N]) -> [f64; N],
    loss: impl Fn([f64; N]) -> f64,
    loss_grad: impl Fn([f64; N]) -> [f64; N],
    mut visit: impl FnMut(f64, [f64; N]),
) -> Result<OdeStats> {
    if !(dt0 > 0.0 && t_end >= 0.0) {
        return Err(Error::invalid("integration needs dt > 0 and t_end >= 0"));
    }
    let (mut t, mut y, mut dt, mut halvings, mut accepted) = (0.0, y0, dt0, 0u32, 0usize);
    let mut l = loss(y);
    visit(t, y);
    while t < t_end {
        let h = dt.min(t_end - t);
        let y_new = rk4(y, h, &rhs);
        let l_new = loss(y_new);
        let (f, g) = (rhs(y), loss_grad(y));
        let slope: f64 = (0..N).map(|i| f[i] * g[i]).sum();
        if !(l_new <= l + ODE_SUFFICIENT_DECREASE * h * slope.min(0.0)) {
            if l <= ODE_LOSS_FLOOR {
                return Ok(OdeStats { accepted_steps: accepted, halvings, final_dt: dt, stop: OdeStop::LossFloor });
            }
            if halvings >= ODE_MAX_HALVINGS {
                return Err(Error::StepSize { t, halvings });
            }
            dt /= 2.0;
            halvings += 1;
            continue;
        }
        y = y_new;
        l = l_new;
        t += h;
        accepted += 1;
        visit(t, y);
    }
    Ok(OdeStats { accepted_steps: accepted, halvings, final_dt: dt, stop: OdeStop::Horizon })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rank1Sample {
    pub t: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub ab: f64,
    pub loss: f64,
    pub m: f64,
}

/// Rank-one trajectory: sampled records plus statistics over every accepted step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rank1Trajectory {
    pub samples: Vec<Rank1Sample>,
    pub stats: OdeStats,
    pub sup_gap: f64,
    pub sup_rate_gap: f64,
    /// Largest `m` seen while the residual `‖d‖` exceeded the saturation level.
    pub max_m_before_saturation: f64,
    /// Largest increase of `|c|` between consecutive accepted steps (≤ 0 when
    /// non-increasing). The magnitude is used because near zero a finite step
    /// can overshoot `c` to a negligibly small negative value.
    pub max_c_increase: f64,
    pub min_coordinate: f64,
    pub final_state: Rank1State,
}

impl Rank1Trajectory {
    pub fn final_residual(&self) -> f64 {
        (self.final_state.a * self.final_state.b - self.final_state.sigma).abs()
    }
}

pub fn integrate_rank1(init: Rank1State, t_end: f64, dt: f64) -> Result<Rank1Trajectory> {
    integrate_rank1_with(init, t_end, dt, 1, crate::params::RANK1_SATURATION_RESIDUAL)
}

/// As [`integrate_rank1`], keeping every `stride`-th accepted state (plus the
/// last) and treating `‖d‖ ≤ saturation` as saturated for the sign check on m.
pub fn integrate_rank1_with(init: Rank1State, t_end: f64, dt: f64, stride: usize, saturation: f64) -> Result<Rank1Trajectory> {
    if !(init.beta > 0.0) {
        return Err(Error::invalid("rank-one flow needs beta > 0"));
    }
    let stride = stride.max(1);
    let rhs = |y: [f64; 3]| {
        let (da, db, dc) = rank1_rhs(&init.with(y));
        [da, db, dc]
    };
    let loss = |y: [f64; 3]| init.with(y).loss();
    let loss_grad = |y: [f64; 3]| {
        let s = init.with(y);
        [s.m(), (s.a * s.b - s.sigma) * s.a, s.a * s.a * s.c]
    };
    let mut samples = Vec::new();
    let (mut sup_gap, mut sup_rate_gap, mut max_m, mut max_dc, mut min_coord) =
        (0.0f64, 0.0f64, f64::NEG_INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    let mut prev_c: Option<f64> = None;
    let mut count = 0usize;
    let (mut last, mut last_t) = (init, 0.0);
    let stats = integrate([init.a, init.b, init.c], t_end, dt, rhs, loss, loss_grad, |t, y| {
        let s = init.with(y);
        let (da, db, _) = rank1_rhs(&s);
        sup_gap = sup_gap.max((s.a - s.b).abs());
        sup_rate_gap = sup_rate_gap.max((da - db).abs());
        if s.residual_sq().sqrt() > saturation {
            max_m = max_m.max(s.m());
        }
        if let Some(pc) = prev_c {
            max_dc = max_dc.max(s.c.abs() - pc.abs());
        }
        prev_c = Some(s.c);
        min_coord = min_coord.min(s.a.min(s.b).min(s.c));
        if count.is_multiple_of(stride) {
            samples.push(Rank1Sample { t, a: s.a, b: s.b, c: s.c, ab: s.a * s.b, loss: s.loss(), m: s.m() });
        }
        count += 1;
        last = s;
        last_t = t;
    })?;
    if !(count - 1).is_multiple_of(stride) {
        samples.push(Rank1Sample {
            t: last_t,
            a: last.a,
            b: last.b,
            c: last.c,
            ab: last.a * last.b,
            loss: last.loss(),
            m: last.m(),
        });
    }
    Ok(Rank1Trajectory {
        samples,
        stats,
        sup_gap,
        sup_rate_gap,
        max_m_before_saturation: max_m,
        max_c_increase: max_dc,
        min_coordinate: min_coord,
        final_state: last,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModePair {
    pub sa: f64,
    pub sb: f64,
    pub sigma_i: f64,
    pub beta: f64,
}

impl ModePair {
    pub fn loss(&self) -> f64 {
        0.5 * (self.sa * self.sb - self.sigma_i).powi(2)
    }
}

/// `(ṡa, ṡb) = (−f_β((sa·sb − σ) sb), −f_β((sa·sb − σ) sa))`.
pub fn mode_pair_rhs(p: &ModePair) -> (f64, f64) {
    let res = p.sa * p.sb - p.sigma_i;
    (-f_beta(res * p.sb, p.beta), -f_beta(res * p.sa, p.beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSample {
    pub t: f64,
    pub sa: f64,
    pub sb: f64,
    pub product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTrajectory {
    pub samples: Vec<ModeSample>,
    pub stats: OdeStats,
    pub sup_gap: f64,
    pub max_product: f64,
    pub final_pair: ModePair,
}

pub fn integrate_mode_pair(init: ModePair, t_end: f64, dt: f64) -> Result<ModeTrajectory> {
    integrate_mode_pair_with(init, t_end, dt, 1)
}

pub fn integrate_mode_pair_with(init: ModePair, t_end: f64, dt: f64, stride: usize) -> Result<ModeTrajectory> {
    if !(init.beta > 0.0) {
        return Err(Error::invalid("mode-pair flow needs beta > 0"));
    }
    let stride = stride.max(1);
    let with = |y: [f64; 2]| ModePair { sa: y[0], sb: y[1], ..init };
    let rhs = |y: [f64; 2]| {
        let (a, b) = mode_pair_rhs(&with(y));
        [a, b]
    };
    let mut samples = Vec::new();
    let (mut sup_gap, mut max_product, mut count, mut last, mut last_t) = (0.0f64, f64::NEG_INFINITY, 0usize, init, 0.0);
    let loss_grad = |y: [f64; 2]| {
        let res = y[0] * y[1] - init.sigma_i;
        [res * y[1], res * y[0]]
    };
    let stats = integrate(
        [init.sa, init.sb],
        t_end,
        dt,
        rhs,
        |y| with(y).loss(),
        loss_grad,
        |t, y| {
            let p = with(y);
            sup_gap = sup_gap.max((p.sa - p.sb).abs());
            max_product = max_product.max(p.sa * p.sb);
            if count.is_multiple_of(stride) {
                samples.push(ModeSample { t, sa: p.sa, sb: p.sb, product: p.sa * p.sb });
            }
            count += 1;
            last = p;
            last_t = t;
        },
    )?;
    if !(count - 1).is_multiple_of(stride) {
        samples.push(ModeSample { t: last_t, sa: last.sa, sb: last.sb, product: last.sa * last.sb });
    }
    Ok(ModeTrajectory { samples, stats, sup_gap, max_product, final_pair: last })
}
