//! Fixed-step optimizers on a factor chain: gradient descent, spectral descent
//! with the exact or smoothed orthogonalization, and Muon (momentum followed by
//! Newton–Schulz).
//!
//! Every factor moves along `D_l` built from `M_l ← ∇_{W_l} + μ M_l`, with all
//! gradients taken at the pre-step point.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{step_diagnostics, DiagnosticsContext, RunMetadata, TrajectoryLog};
use crate::error::{Error, Result};
use crate::linalg::{
    newton_schulz, orthogonalize_exact, orthogonalize_smoothed, sample_gaussian, sample_orthonormal, Matrix, NsCoeffs,
};
use crate::params::{
    DEFAULT_NS_COEFFS, DEFAULT_NS_ITERATIONS, DIVERGENCE_NORM_CAP, SEED_OFFSET_INIT_FACTOR, SEED_OFFSET_INIT_ROTATION,
};
use crate::problem::{gradients_unchecked, FactorState, TargetMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "GD")]
    Gd,
    SpecExact,
    SpecSmoothed,
    #[serde(rename = "MuonNS")]
    MuonNs,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Gd, Method::SpecExact, Method::SpecSmoothed, Method::MuonNs];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gd => "GD",
            Method::SpecExact => "SpecExact",
            Method::SpecSmoothed => "SpecSmoothed",
            Method::MuonNs => "MuonNS",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }

    pub fn is_spectral(self) -> bool {
        !matches!(self, Method::Gd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitKind {
    #[serde(rename = "LoRA")]
    Lora,
    Spectral,
    Explicit,
}

impl InitKind {
    pub fn name(self) -> &'static str {
        match self {
            InitKind::Lora => "LoRA",
            InitKind::Spectral => "Spectral",
            InitKind::Explicit => "Explicit",
        }
    }

    pub fn parse(s: &str) -> Option<InitKind> {
        [InitKind::Lora, InitKind::Spectral, InitKind::Explicit].into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub kind: InitKind,
    pub gamma: f64,
    pub spectral_sigma_a: Option<Vec<f64>>,
    pub spectral_sigma_b: Option<Vec<f64>>,
    pub explicit_factors: Option<Vec<Matrix>>,
}

impl InitSpec {
    /// `A(0) = 0`, remaining factors `γ`-scaled Gaussian.
    pub fn lora(gamma: f64) -> Self {
        InitSpec { kind: InitKind::Lora, gamma, spectral_sigma_a: None, spectral_sigma_b: None, explicit_factors: None }
    }

    pub fn spectral(sigma_a: Vec<f64>, sigma_b: Vec<f64>) -> Self {
        InitSpec {
            kind: InitKind::Spectral,
            gamma: 0.0,
            spectral_sigma_a: Some(sigma_a),
            spectral_sigma_b: Some(sigma_b),
            explicit_factors: None,
        }
    }

    pub fn explicit(factors: Vec<Matrix>) -> Self {
        InitSpec {
            kind: InitKind::Explicit,
            gamma: 0.0,
            spectral_sigma_a: None,
            spectral_sigma_b: None,
            explicit_factors: Some(factors),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub eta: f64,
    pub mu: f64,
    pub beta: f64,
    pub lambda: f64,
    pub max_steps: usize,
    /// Stop once the (regularized) loss is at most this; 0 disables it in practice.
    pub stop_loss: f64,
    /// Stop once every gradient has Frobenius norm at most this; 0 disables.
    pub stop_grad_norm: f64,
    pub seed: u64,
    pub init: InitSpec,
    pub depth: usize,
    /// Inner dimension r of the chain.
    pub rank: usize,
    pub ns_iterations: usize,
    pub ns_coeffs: NsCoeffs,
    pub log_stride: usize,
    /// Active-set tolerance; `None` means 5% of the smallest tracked target value.
    pub epsilon: Option<f64>,
}

impl RunConfig {
    /// Two-factor LoRA run with the defaults for `method`.
    pub fn new(method: Method, eta: f64, rank: usize, gamma: f64, seed: u64) -> Self {
        RunConfig {
            method,
            eta,
            mu: 0.0,
            beta: if method == Method::SpecSmoothed { crate::params::DEFAULT_BETA } else { 0.0 },
            lambda: 0.0,
            max_steps: 1_000,
            stop_loss: 0.0,
            stop_grad_norm: 0.0,
            seed,
            init: InitSpec::lora(gamma),
            depth: 2,
            rank,
            ns_iterations: DEFAULT_NS_ITERATIONS,
            ns_coeffs: DEFAULT_NS_COEFFS,
            log_stride: 1,
            epsilon: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::invalid(m));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return fail(format!("eta must be positive, got {}", self.eta));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return fail(format!("mu must lie in [0, 1], got {}", self.mu));
        }
        if self.mu > 0.0 && !matches!(self.method, Method::MuonNs | Method::SpecExact) {
            return fail(format!("momentum is only used by MuonNS and SpecExact, not {}", self.method.name()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return fail(format!("beta must be nonnegative, got {}", self.beta));
        }
        match self.method {
            Method::SpecSmoothed if self.beta <= 0.0 => return fail("SpecSmoothed requires beta > 0".into()),
            Method::SpecExact if self.beta != 0.0 => return fail("SpecExact requires beta = 0".into()),
            _ => {}
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        if !(self.stop_loss >= 0.0) || !(self.stop_grad_norm >= 0.0) {
            return fail("stopping thresholds must be nonnegative".into());
        }
        if self.depth < 2 {
            return fail(format!("depth must be at least 2, got {}", self.depth));
        }
        if self.rank == 0 {
            return fail("rank must be positive".into());
        }
        if self.ns_iterations == 0 {
            return fail("ns_iterations must be positive".into());
        }
        if self.log_stride == 0 {
            return fail("log_stride must be positive".into());
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return fail(format!("epsilon must be positive, got {eps}"));
            }
        }
        if self.init.kind == InitKind::Lora && !(self.init.gamma > 0.0 && self.init.gamma.is_finite()) {
            return fail(format!("LoRA init requires gamma > 0, got {}", self.init.gamma));
        }
        Ok(())
    }
}

pub fn initialize(config: &RunConfig, target: &TargetMatrix) -> Result<FactorState> {
    config.validate()?;
    let (m, n, r) = (target.m(), target.n(), config.rank);
    let factors = match config.init.kind {
        InitKind::Lora => {
            let mut f = vec![Matrix::zeros(m, r)];
            for l in 1..config.depth {
                let cols = if l + 1 == config.depth { n } else { r };
                let seed = config.seed.wrapping_add(SEED_OFFSET_INIT_FACTOR).wrapping_add(l as u64);
                f.push(sample_gaussian(r, cols, seed) * config.init.gamma);
            }
            f
        }
        InitKind::Spectral => {
            if config.depth != 2 {
                return Err(Error::invalid("spectral init is defined for two factors"));
            }
            if r > target.rank() {
                return Err(Error::invalid(format!("spectral init needs rank <= {}", target.rank())));
            }
            let (Some(sa), Some(sb)) = (&config.init.spectral_sigma_a, &config.init.spectral_sigma_b) else {
                return Err(Error::invalid("spectral init needs both diagonals"));
            };
            if sa.len() != r || sb.len() != r {
                return Err(Error::invalid(format!("spectral diagonals must have length {r}")));
            }
            let bound = target.sigma.iter().cloned().fold(f64::INFINITY, f64::min).sqrt();
            if sa.iter().chain(sb).any(|&x| !(x > 0.0 && x < bound)) {
                return Err(Error::invalid(format!("spectral diagonal entries must lie in (0, {bound})")));
            }
            let q = sample_orthonormal(r, r, config.seed.wrapping_add(SEED_OFFSET_INIT_ROTATION))?;
            let mut ua = target.u_r.columns(0, r).into_owned();
            let mut vb = target.v_r.columns(0, r).transpose();
            for i in 0..r {
                ua.column_mut(i).scale_mut(sa[i]);
                vb.row_mut(i).scale_mut(sb[i]);
            }
            vec![ua * q.transpose(), q * vb]
        }
        InitKind::Explicit => {
            let Some(f) = &config.init.explicit_factors else {
                return Err(Error::invalid("explicit init needs factors"));
            };
            if f.len() != config.depth || f[0].ncols() != r {
                return Err(Error::invalid("explicit factors disagree with depth or rank"));
            }
            f.clone()
        }
    };
    let mut state = FactorState::new(factors)?;
    if state.shape() != (m, n) {
        return Err(Error::invalid("initial chain does not match the target shape"));
    }
    if config.mu > 0.0 {
        state.momentum = Some(state.factors.iter().map(|w| Matrix::zeros(w.nrows(), w.ncols())).collect());
    }
    Ok(state)
}

/// Update direction for one factor from its (momentum-accumulated) gradient.
pub fn direction(buffer: &Matrix, config: &RunConfig) -> Result<Matrix> {
    match config.method {
        Method::Gd => Ok(buffer.clone()),
        Method::SpecExact => orthogonalize_exact(buffer),
        Method::SpecSmoothed => orthogonalize_smoothed(buffer, config.beta),
        // A zero buffer has no direction; the iteration itself rejects it.
        Method::MuonNs if buffer.iter().all(|&x| x == 0.0) => Ok(buffer.clone()),
        Method::MuonNs => newton_schulz(buffer, config.ns_iterations, config.ns_coeffs),
    }
}

/// One simultaneous update of every factor.
pub fn step(state: &FactorState, target: &TargetMatrix, config: &RunConfig) -> Result<FactorState> {
    state.validate()?;
    if state.shape() != target.y.shape() {
        return Err(Error::invalid("state does not match target shape"));
    }
    if state.momentum.is_some() != (config.mu > 0.0) {
        return Err(Error::invalid("momentum buffers must be present exactly when mu > 0"));
    }
    let (grads, _) = gradients_unchecked(&state.factors, &target.y, config.lambda);
    apply_gradients(state, grads, config)
}

fn apply_gradients(state: &FactorState, grads: Vec<Matrix>, config: &RunConfig) -> Result<FactorState> {
    let next_step = state.step_index + 1;
    let buffers: Vec<Matrix> = match &state.momentum {
        Some(prev) => grads.into_iter().zip(prev).map(|(g, m)| g + m * config.mu).collect(),
        None => grads,
    };
    let mut factors = Vec::with_capacity(buffers.len());
    for (w, buf) in state.factors.iter().zip(&buffers) {
        let d = direction(buf, config).map_err(|e| match e {
            Error::InvalidArgument(_) if buf.iter().any(|x| !x.is_finite()) => Error::Divergence { step: next_step },
            other => other,
        })?;
        let w_new = w - d * config.eta;
        if w_new.iter().any(|x| !x.is_finite()) || w_new.norm() > DIVERGENCE_NORM_CAP {
            return Err(Error::Divergence { step: next_step });
        }
        factors.push(w_new);
    }
    Ok(FactorState { factors, momentum: state.momentum.as_ref().map(|_| buffers), step_index: next_step })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    LossFloor,
    GradientNorm,
    StepBudget,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub log: TrajectoryLog,
    pub state: FactorState,
    pub stop: StopReason,
    /// First step index at which the loss was at most `stop_loss`, if reached.
    pub steps_to_stop_loss: Option<usize>,
}

/// Runs from the initialization described by `config`.
pub fn run(config: &RunConfig, target: &TargetMatrix) -> Result<TrajectoryLog> {
    Ok(run_detailed(config, target)?.log)
}

pub fn run_detailed(config: &RunConfig, target: &TargetMatrix) -> Result<RunResult> {
    let state = initialize(config, target)?;
    run_from(state, config, target, RunMetadata::new(config.method.name(), config))
}

/// Iterates `step` from `state`, recording diagnostics at step 0, every
/// `log_stride` steps and at the final step.
pub fn run_from(mut state: FactorState, config: &RunConfig, target: &TargetMatrix, metadata: RunMetadata) -> Result<RunResult> {
    config.validate()?;
    state.validate()?;
    if state.momentum.is_some() != (config.mu > 0.0) {
        return Err(Error::invalid("momentum buffers must be present exactly when mu > 0"));
    }
    let ctx = DiagnosticsContext::new(&state, target, config)?;
    let mut log = TrajectoryLog { metadata, records: vec![step_diagnostics(&state, target, &ctx)?] };
    let start = state.step_index;
    let stop = loop {
        let (grads, value) = gradients_unchecked(&state.factors, &target.y, config.lambda);
        if value <= config.stop_loss {
            break StopReason::LossFloor;
        }
        if state.step_index - start >= config.max_steps {
            break StopReason::StepBudget;
        }
        if config.stop_grad_norm > 0.0 && grads.iter().all(|g| g.norm() <= config.stop_grad_norm) {
            break StopReason::GradientNorm;
        }
        state = match apply_gradients(&state, grads, config) {
            Ok(s) => s,
            Err(Error::Divergence { step }) => return Err(Error::DivergedRun { step, log: Box::new(log) }),
            Err(e) => return Err(e),
        };
        if (state.step_index - start).is_multiple_of(config.log_stride) {
            log.records.push(step_diagnostics(&state, target, &ctx)?);
        }
    };
    if log.records.last().map(|r| r.step) != Some(state.step_index) {
        log.records.push(step_diagnostics(&state, target, &ctx)?);
    }
    let steps_to_stop_loss = (stop == StopReason::LossFloor).then_some(state.step_index);
    Ok(RunResult { log, state, stop, steps_to_stop_loss })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{construct_target, loss};

    fn scalar_target(sigma: f64) -> TargetMatrix {
        let one = Matrix::from_element(1, 1, 1.0);
        TargetMatrix::from_frames(one.clone(), vec![sigma], one, Matrix::zeros(1, 0)).unwrap()
    }

    fn scalar_state(a: f64, b: f64) -> FactorState {
        FactorState::new(vec![Matrix::from_element(1, 1, a), Matrix::from_element(1, 1, b)]).unwrap()
    }

    #[test]
    fn gd_scalar_step() {
        let t = scalar_target(2.0);
        let cfg = RunConfig::new(Method::Gd, 0.1, 1, 1e-3, 0);
        let s = step(&scalar_state(1.0, 1.0), &t, &cfg).unwrap();
        assert!((s.factors[0][(0, 0)] - 1.1).abs() < 1e-15);
        assert!((s.factors[1][(0, 0)] - 1.1).abs() < 1e-15);
        assert_eq!(s.step_index, 1);
    }

    #[test]
    fn smoothed_scalar_step() {
        let t = scalar_target(2.0);
        let cfg = RunConfig::new(Method::SpecSmoothed, 0.1, 1, 1e-3, 0);
        let s = step(&scalar_state(1.0, 1.0), &t, &cfg).unwrap();
        assert!((s.factors[0][(0, 0)] - 1.1).abs() <= 5e-9);
        let expected = 1.0 + 0.1 / (1.0f64 + 1e-8).sqrt();
        assert!((s.factors[0][(0, 0)] - expected).abs() < 1e-15);
    }

    #[test]
    fn global_minimum_is_a_fixed_point() {
        // Exactly representable factorization, so the gradients are exactly zero.
        let eye = Matrix::identity(3, 3);
        let t = TargetMatrix::from_frames(
            eye.columns(0, 2).into_owned(),
            vec![4.0, 1.0],
            eye.columns(0, 2).into_owned(),
            eye.columns(2, 1).into_owned(),
        )
        .unwrap();
        let a = Matrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let s0 = FactorState::new(vec![a.clone(), a.transpose()]).unwrap();
        assert!(crate::problem::gradients(&s0, &t, 0.0).unwrap().iter().all(|g| g.iter().all(|&x| x == 0.0)));
        for method in Method::ALL {
            let cfg = RunConfig::new(method, 0.01, 2, 1e-3, 0);
            let s1 = step(&s0, &t, &cfg).unwrap();
            assert_eq!(s1.factors, s0.factors, "{}", method.name());
        }
    }

    #[test]
    fn exact_zero_gradient_gives_zero_spectral_direction() {
        let cfg = RunConfig::new(Method::SpecExact, 0.1, 2, 1e-3, 0);
        assert_eq!(direction(&Matrix::zeros(3, 2), &cfg).unwrap(), Matrix::zeros(3, 2));
        let muon = RunConfig::new(Method::MuonNs, 0.1, 2, 1e-3, 0);
        assert_eq!(direction(&Matrix::zeros(3, 2), &muon).unwrap(), Matrix::zeros(3, 2));
    }

    #[test]
    fn lora_init_shapes_and_scale() {
        let t = construct_target(60, 70, &crate::params::LORA_SIGMA, 3).unwrap();
        let cfg = RunConfig::new(Method::SpecExact, 0.01, 5, 1e-3, 3);
        let s = initialize(&cfg, &t).unwrap();
        assert_eq!(s.factors[0], Matrix::zeros(60, 5));
        let expected = 1e-3 * (5.0f64 * 70.0).sqrt();
        assert!((s.factors[1].norm() - expected).abs() < 0.1 * expected);
        assert!(s.momentum.is_none());

        let deep = RunConfig { depth: 4, mu: 0.5, ..cfg };
        let s = initialize(&deep, &t).unwrap();
        assert_eq!(s.depth(), 4);
        assert_eq!(s.factors[0], Matrix::zeros(60, 5));
        assert!(s.factors[1..].iter().all(|w| w.norm() > 0.0));
        assert_eq!(s.factors[1].shape(), (5, 5));
        assert_eq!(s.momentum.as_ref().unwrap().len(), 4);
    }

    #[test]
    fn spectral_init_product_cancels_rotation() {
        let t = construct_target(8, 7, &[3.0, 2.0, 1.0], 2).unwrap();
        let d = vec![0.1, 0.05, 0.01];
        let cfg =
            RunConfig { init: InitSpec::spectral(d.clone(), d.clone()), ..RunConfig::new(Method::SpecSmoothed, 0.01, 3, 0.0, 9) };
        let s = initialize(&cfg, &t).unwrap();
        let mut expected = t.u_r.clone();
        for (i, di) in d.iter().enumerate() {
            expected.column_mut(i).scale_mut(di * di);
        }
        let expected = expected * t.v_r.transpose();
        assert!((s.product() - expected).amax() < 1e-14);

        let too_big = RunConfig { init: InitSpec::spectral(vec![1.0, 0.1, 0.1], d.clone()), ..cfg };
        assert!(initialize(&too_big, &t).is_err());
    }

    #[test]
    fn explicit_init_passes_through() {
        let t = construct_target(4, 3, &[1.0], 0).unwrap();
        let f = vec![sample_gaussian(4, 2, 1), sample_gaussian(2, 3, 2)];
        let cfg = RunConfig { init: InitSpec::explicit(f.clone()), ..RunConfig::new(Method::Gd, 0.01, 2, 0.0, 0) };
        assert_eq!(initialize(&cfg, &t).unwrap().factors, f);
    }

    #[test]
    fn config_validation() {
        let base = RunConfig::new(Method::SpecSmoothed, 0.01, 2, 1e-3, 0);
        assert!(base.validate().is_ok());
        assert!(RunConfig { beta: 0.0, ..base.clone() }.validate().is_err());
        assert!(RunConfig { method: Method::SpecExact, ..base.clone() }.validate().is_err());
        assert!(RunConfig { mu: 0.5, ..base.clone() }.validate().is_err());
        assert!(RunConfig { eta: 0.0, ..base.clone() }.validate().is_err());
        assert!(RunConfig { init: InitSpec::lora(0.0), ..base.clone() }.validate().is_err());
        assert!(RunConfig { depth: 1, ..base }.validate().is_err());
    }

    #[test]
    fn budget_bound_run_records_every_step() {
        let t = construct_target(6, 5, &[3.0, 1.0], 1).unwrap();
        let cfg = RunConfig { max_steps: 7, ..RunConfig::new(Method::Gd, 0.01, 2, 1e-3, 0) };
        let log = run(&cfg, &t).unwrap();
        assert_eq!(log.records.len(), 8);
        assert!(log.records.windows(2).all(|w| w[1].step == w[0].step + 1));
    }

    #[test]
    fn stride_keeps_final_record() {
        let t = construct_target(6, 5, &[3.0, 1.0], 1).unwrap();
        let cfg = RunConfig { max_steps: 10, log_stride: 4, ..RunConfig::new(Method::Gd, 0.01, 2, 1e-3, 0) };
        let steps: Vec<usize> = run(&cfg, &t).unwrap().records.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 4, 8, 10]);
    }

    #[test]
    fn runs_are_bitwise_deterministic() {
        let t = construct_target(10, 9, &[3.0, 2.0, 1.0], 5).unwrap();
        for method in Method::ALL {
            let mut cfg = RunConfig::new(method, 0.01, 3, 1e-3, 5);
            cfg.max_steps = 50;
            let a = run(&cfg, &t).unwrap();
            let b = run(&cfg, &t).unwrap();
            assert_eq!(a, b, "{}", method.name());
        }
    }

    #[test]
    fn divergence_is_reported_with_partial_log() {
        let t = construct_target(6, 5, &[3.0, 1.0], 1).unwrap();
        let cfg = RunConfig { max_steps: 500, ..RunConfig::new(Method::Gd, 5.0, 2, 1.0, 0) };
        match run(&cfg, &t) {
            Err(Error::DivergedRun { step, log }) => {
                assert!(step >= 1);
                assert!(!log.records.is_empty());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn column_space_of_first_factor_stays_in_target_span() {
        let t = construct_target(12, 10, &[3.0, 2.0, 1.0], 4).unwrap();
        let proj = Matrix::identity(12, 12) - &t.u_r * t.u_r.transpose();
        for method in [Method::Gd, Method::SpecExact, Method::SpecSmoothed] {
            let cfg = RunConfig::new(method, 0.01, 3, 1e-3, 4);
            let mut s = initialize(&cfg, &t).unwrap();
            for _ in 0..100 {
                s = step(&s, &t, &cfg).unwrap();
                let a = &s.factors[0];
                assert!((&proj * a).norm() <= 1e-8 * a.norm().max(1e-300), "{}", method.name());
            }
        }
    }

    #[test]
    fn spectral_update_norm_bound() {
        let t = construct_target(12, 10, &[3.0, 2.0, 1.0], 4).unwrap();
        for method in [Method::SpecExact, Method::SpecSmoothed] {
            let cfg = RunConfig::new(method, 0.01, 3, 1e-3, 4);
            let mut s = initialize(&cfg, &t).unwrap();
            for _ in 0..50 {
                let (grads, _) = gradients_unchecked(&s.factors, &t.y, 0.0);
                for g in &grads {
                    assert!(direction(g, &cfg).unwrap().norm() <= 3f64.sqrt() + 1e-9);
                }
                s = step(&s, &t, &cfg).unwrap();
            }
        }
    }

    #[test]
    fn stop_loss_ends_the_run() {
        let t = construct_target(6, 5, &[1.0, 0.5], 1).unwrap();
        let cfg = RunConfig { max_steps: 100_000, stop_loss: 1e-3, ..RunConfig::new(Method::Gd, 0.05, 2, 1e-2, 0) };
        let res = run_detailed(&cfg, &t).unwrap();
        assert_eq!(res.stop, StopReason::LossFloor);
        assert!(loss(&res.state, &t, 0.0).unwrap().value <= 1e-3);
        assert_eq!(res.steps_to_stop_loss, Some(res.state.step_index));
    }
}
