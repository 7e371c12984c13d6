//! The factorization objective `½‖W_L⋯W_1 − Y‖² + (λ/2)Σ‖W_l‖²`, its gradients,
//! and construction of targets with a known singular spectrum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, orthonormalize, sample_gaussian, sample_orthonormal, Matrix};
use crate::params::{SEED_OFFSET_TARGET_U, SEED_OFFSET_TARGET_V, SEED_OFFSET_TARGET_VPERP};

/// How a target was built; enough to rebuild it bitwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub m: usize,
    pub n: usize,
    pub sigma: Vec<f64>,
    pub seed: u64,
}

/// Ground truth `Y = U_r diag(σ) V_rᵀ` with `[V_r | V_⊥]` orthogonal.
#[derive(Debug, Clone)]
pub struct TargetMatrix {
    pub y: Matrix,
    pub u_r: Matrix,
    pub sigma: Vec<f64>,
    pub v_r: Matrix,
    pub v_perp: Matrix,
}

impl TargetMatrix {
    pub fn m(&self) -> usize {
        self.y.nrows()
    }

    pub fn n(&self) -> usize {
        self.y.ncols()
    }

    /// Number of nonzero target singular values, r*.
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Builds a target from explicit frames. `sigma` must be positive and
    /// non-increasing; repeated values are allowed here (block constructions
    /// such as `σ I` need them), unlike in [`construct_target`].
    pub fn from_frames(u_r: Matrix, sigma: Vec<f64>, v_r: Matrix, v_perp: Matrix) -> Result<Self> {
        let k = sigma.len();
        let (m, n) = (u_r.nrows(), v_r.nrows());
        if u_r.ncols() != k || v_r.ncols() != k || v_perp.nrows() != n || v_perp.ncols() + k != n {
            return Err(Error::invalid("target frame shapes do not match the spectrum"));
        }
        if sigma.iter().any(|&s| !(s > 0.0 && s.is_finite())) || sigma.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("target singular values must be positive and non-increasing"));
        }
        let mut v_full = Matrix::zeros(n, n);
        v_full.columns_mut(0, k).copy_from(&v_r);
        v_full.columns_mut(k, n - k).copy_from(&v_perp);
        let orth_err = (v_full.transpose() * &v_full - Matrix::identity(n, n)).amax();
        let u_err = (u_r.transpose() * &u_r - Matrix::identity(k, k)).amax();
        if orth_err > 1e-10 || u_err > 1e-10 {
            return Err(Error::invalid("target frames are not orthonormal"));
        }
        let mut us = u_r.clone();
        for (j, &s) in sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(s);
        }
        let y = us * v_r.transpose();
        debug_assert_eq!(y.shape(), (m, n));
        Ok(TargetMatrix { y, u_r, sigma, v_r, v_perp })
    }
}

/// Target with random orthonormal frames derived from `seed` and the given
/// strictly decreasing positive spectrum.
pub fn construct_target(m: usize, n: usize, sigma: &[f64], seed: u64) -> Result<TargetMatrix> {
    let k = sigma.len();
    if k == 0 || k > m.min(n) {
        return Err(Error::invalid(format!("need 1 <= len(sigma) <= min(m, n) = {}, got {k}", m.min(n))));
    }
    if sigma.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::invalid("target singular values must be positive"));
    }
    if sigma.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("target singular values must be strictly decreasing"));
    }
    let u_r = sample_orthonormal(m, k, seed.wrapping_add(SEED_OFFSET_TARGET_U))?;
    let v_r = sample_orthonormal(n, k, seed.wrapping_add(SEED_OFFSET_TARGET_V))?;
    // Complete V_r: QR of [V_r | G] reproduces V_r in its first k columns.
    let mut basis = Matrix::zeros(n, n);
    basis.columns_mut(0, k).copy_from(&v_r);
    basis.columns_mut(k, n - k).copy_from(&sample_gaussian(n, n - k, seed.wrapping_add(SEED_OFFSET_TARGET_VPERP)));
    let q = orthonormalize(basis);
    let v_perp = q.columns(k, n - k).into_owned();
    TargetMatrix::from_frames(u_r, sigma.to_vec(), v_r, v_perp)
}

pub fn construct_target_from_spec(spec: &TargetSpec) -> Result<TargetMatrix> {
    construct_target(spec.m, spec.n, &spec.sigma, spec.seed)
}

/// Factor chain `[W_L, …, W_1]` (product `W_L ⋯ W_1`), plus momentum buffers.
///
/// In the two-factor case `factors = [A, B]` with A m×r and B r×n.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorState {
    pub factors: Vec<Matrix>,
    pub momentum: Option<Vec<Matrix>>,
    pub step_index: usize,
}

impl FactorState {
    pub fn new(factors: Vec<Matrix>) -> Result<Self> {
        let s = FactorState { factors, momentum: None, step_index: 0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.factors.len() < 2 {
            return Err(Error::invalid("a factor chain needs at least two factors"));
        }
        for (l, w) in self.factors.windows(2).enumerate() {
            if w[0].ncols() != w[1].nrows() {
                return Err(Error::invalid(format!(
                    "factor {l} is {}x{} but factor {} is {}x{}",
                    w[0].nrows(),
                    w[0].ncols(),
                    l + 1,
                    w[1].nrows(),
                    w[1].ncols()
                )));
            }
        }
        for (l, w) in self.factors.iter().enumerate() {
            ensure_finite(w, &format!("factor {l}"))?;
        }
        if let Some(mom) = &self.momentum {
            if mom.len() != self.factors.len() || mom.iter().zip(&self.factors).any(|(a, b)| a.shape() != b.shape()) {
                return Err(Error::invalid("momentum buffers do not match factor shapes"));
            }
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.factors.len()
    }

    /// Inner (LoRA) rank: the column count of the first factor.
    pub fn rank(&self) -> usize {
        self.factors[0].ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.factors[0].nrows(), self.factors[self.factors.len() - 1].ncols())
    }

    pub fn product(&self) -> Matrix {
        chain_product(&self.factors)
    }

    pub fn fro_norms(&self) -> Vec<f64> {
        self.factors.iter().map(|w| w.norm()).collect()
    }
}

/// `W_0 W_1 ⋯` for a non-empty slice.
pub fn chain_product(factors: &[Matrix]) -> Matrix {
    let mut it = factors.iter();
    let first = it.next().expect("non-empty chain").clone();
    it.fold(first, |acc, w| acc * w)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub residual_fro: f64,
}

fn check_shape(state: &FactorState, target: &TargetMatrix) -> Result<()> {
    if state.shape() != target.y.shape() {
        return Err(Error::invalid(format!("chain product is {:?} but target is {:?}", state.shape(), target.y.shape())));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be nonnegative, got {lambda}")));
    }
    Ok(())
}

pub fn loss(state: &FactorState, target: &TargetMatrix, lambda: f64) -> Result<LossValue> {
    state.validate()?;
    check_shape(state, target)?;
    check_lambda(lambda)?;
    let residual_fro = (state.product() - &target.y).norm();
    let mut value = 0.5 * residual_fro * residual_fro;
    if lambda > 0.0 {
        value += 0.5 * lambda * state.factors.iter().map(|w| w.norm_squared()).sum::<f64>();
    }
    Ok(LossValue { value, residual_fro })
}

/// `∇_{W_l} = (∏_{k>l} W_k)ᵀ R (∏_{k<l} W_k)ᵀ + λ W_l`, returned in chain order.
pub fn gradients(state: &FactorState, target: &TargetMatrix, lambda: f64) -> Result<Vec<Matrix>> {
    check_shape(state, target)?;
    check_lambda(lambda)?;
    Ok(gradients_unchecked(&state.factors, &target.y, lambda).0)
}

/// Gradients plus the loss at the same point, sharing the product computation.
pub(crate) fn gradients_unchecked(factors: &[Matrix], y: &Matrix, lambda: f64) -> (Vec<Matrix>, f64) {
    let len = factors.len();
    // prefix[j] = W[0]⋯W[j-1] (None for j = 0); suffix[j] = W[j+1]⋯W[len-1].
    let mut prefix: Vec<Option<Matrix>> = Vec::with_capacity(len);
    prefix.push(None);
    for j in 1..len {
        let next = match &prefix[j - 1] {
            None => factors[0].clone(),
            Some(p) => p * &factors[j - 1],
        };
        prefix.push(Some(next));
    }
    let mut suffix: Vec<Option<Matrix>> = vec![None; len];
    for j in (0..len - 1).rev() {
        suffix[j] = Some(match &suffix[j + 1] {
            None => factors[len - 1].clone(),
            Some(s) => &factors[j + 1] * s,
        });
    }
    let product = match &prefix[len - 1] {
        Some(p) => p * &factors[len - 1],
        None => factors[0].clone(),
    };
    let residual = product - y;
    let mut value = 0.5 * residual.norm_squared();
    if lambda > 0.0 {
        value += 0.5 * lambda * factors.iter().map(|w| w.norm_squared()).sum::<f64>();
    }
    let grads = (0..len)
        .map(|j| {
            let left = match &prefix[j] {
                Some(p) => p.tr_mul(&residual),
                None => residual.clone(),
            };
            let mut g = match &suffix[j] {
                Some(s) => left * s.transpose(),
                None => left,
            };
            if lambda > 0.0 {
                g += &factors[j] * lambda;
            }
            g
        })
        .collect();
    (grads, value)
}

/// Truncated SVD `U_r[:, :k] diag(σ_1..σ_k) V_r[:, :k]ᵀ`.
pub fn best_rank_k_approx(target: &TargetMatrix, k: usize) -> Result<Matrix> {
    if k == 0 || k > target.rank() {
        return Err(Error::invalid(format!("k must lie in 1..={}, got {k}", target.rank())));
    }
    let mut us = target.u_r.columns(0, k).into_owned();
    for j in 0..k {
        us.column_mut(j).scale_mut(target.sigma[j]);
    }
    Ok(us * target.v_r.columns(0, k).transpose())
}

/// The minimal unregularized loss at inner rank k: `½ Σ_{i>k} σᵢ²`.
pub fn eckart_young_loss(sigma: &[f64], k: usize) -> f64 {
    0.5 * sigma.iter().skip(k).map(|s| s * s).sum::<f64>()
}
