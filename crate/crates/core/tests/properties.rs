//! Property tests for the orthogonalization operators, the objective and the
//! serialization layer.

use proptest::prelude::*;

use specflow::cli_io::config::parse_config;
use specflow::cli_io::output::format_real;
use specflow::linalg::{
    frobenius_inner, newton_schulz, orthogonalize_exact, orthogonalize_smoothed, sample_gaussian, sample_orthonormal,
    singular_values, Matrix,
};
use specflow::params::{DEFAULT_NS_COEFFS, DEFAULT_NS_ITERATIONS};
use specflow::problem::{construct_target, gradients, loss, FactorState};

fn gaussian() -> impl Strategy<Value = Matrix> {
    (1usize..=12, 1usize..=12, any::<u64>()).prop_map(|(m, n, seed)| sample_gaussian(m, n, seed))
}

/// Square orthogonal matrix of size `n`.
fn orthogonal(n: usize, seed: u64) -> Matrix {
    sample_orthonormal(n, n, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_is_idempotent(m in gaussian()) {
        let t = orthogonalize_exact(&m).unwrap();
        let tt = orthogonalize_exact(&t).unwrap();
        prop_assert!((&tt - &t).amax() <= 1e-10);
    }

    #[test]
    fn exact_is_orthogonally_equivariant(m in gaussian(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let (q, p) = (orthogonal(m.nrows(), s1), orthogonal(m.ncols(), s2));
        let lhs = orthogonalize_exact(&(&q * &m * &p)).unwrap();
        let rhs = &q * orthogonalize_exact(&m).unwrap() * &p;
        prop_assert!((lhs - rhs).amax() <= 1e-9);
    }

    /// `𝒯(M)` maximizes `⟨M, Q⟩` over the spectral-norm unit ball.
    #[test]
    fn exact_attains_the_dual_norm(m in gaussian(), seed in any::<u64>()) {
        let best = frobenius_inner(&m, &orthogonalize_exact(&m).unwrap());
        let other = orthogonalize_exact(&sample_gaussian(m.nrows(), m.ncols(), seed)).unwrap();
        prop_assert!(frobenius_inner(&m, &other) <= best + 1e-10 * best.max(1.0));
    }

    #[test]
    fn smoothed_scaling_law(m in gaussian(), c in 0.01f64..100.0, beta in 1e-6f64..1.0) {
        // 𝒯_{c²β}(cM) = 𝒯_β(M)
        let lhs = orthogonalize_smoothed(&(&m * c), c * c * beta).unwrap();
        let rhs = orthogonalize_smoothed(&m, beta).unwrap();
        prop_assert!((lhs - rhs).amax() <= 1e-9);
    }

    #[test]
    fn smoothed_is_contractive_and_order_preserving(m in gaussian(), beta in 1e-8f64..10.0) {
        let before = singular_values(&m).unwrap();
        let after = singular_values(&orthogonalize_smoothed(&m, beta).unwrap()).unwrap();
        prop_assert!(after[0] < 1.0 + 1e-12);
        for (b, a) in before.iter().zip(&after) {
            prop_assert!((a - b / (b * b + beta).sqrt()).abs() <= 1e-9);
        }
    }

    #[test]
    fn smoothed_tends_to_exact(seed in any::<u64>(), n in 1usize..8) {
        // Well separated from zero so that β = 1e-14 is negligible.
        let m = orthogonal(n, seed) * Matrix::from_diagonal(&nalgebra::DVector::from_fn(n, |i, _| 1.0 + i as f64));
        let gap = (orthogonalize_smoothed(&m, 1e-14).unwrap() - orthogonalize_exact(&m).unwrap()).amax();
        prop_assert!(gap <= 1e-12);
    }

    #[test]
    fn newton_schulz_ignores_scale(m in gaussian(), c in 1e-3f64..1e3) {
        prop_assume!(m.norm() > 0.0);
        let a = newton_schulz(&m, DEFAULT_NS_ITERATIONS, DEFAULT_NS_COEFFS).unwrap();
        let b = newton_schulz(&(&m * c), DEFAULT_NS_ITERATIONS, DEFAULT_NS_COEFFS).unwrap();
        prop_assert!((a - b).amax() <= 1e-10);
    }

    #[test]
    fn loss_is_nonnegative_and_gradient_is_a_descent_direction(
        m in 2usize..7, n in 2usize..7, r in 1usize..4, seed in any::<u64>(), lambda in 0.0f64..0.5,
    ) {
        let t = construct_target(m, n, &[2.0], seed).unwrap();
        let state = FactorState::new(vec![sample_gaussian(m, r, seed ^ 1), sample_gaussian(r, n, seed ^ 2)]).unwrap();
        let l0 = loss(&state, &t, lambda).unwrap().value;
        prop_assert!(l0 >= 0.0);
        let g = gradients(&state, &t, lambda).unwrap();
        let gsq: f64 = g.iter().map(|x| x.norm_squared()).sum();
        prop_assume!(gsq > 1e-12);
        let h = 1e-4 / gsq.sqrt();
        let stepped: Vec<Matrix> = state.factors.iter().zip(&g).map(|(w, gw)| w - gw * h).collect();
        let l1 = loss(&FactorState::new(stepped).unwrap(), &t, lambda).unwrap().value;
        prop_assert!(l1 < l0);
    }

    /// The weight-decay term adds exactly `λW` to every gradient.
    #[test]
    fn weight_decay_gradient_is_additive(seed in any::<u64>(), lambda in 0.0f64..2.0, depth in 2usize..5) {
        let t = construct_target(4, 5, &[1.5, 0.5], seed).unwrap();
        let mut dims = vec![4];
        dims.extend(std::iter::repeat_n(3, depth - 1));
        dims.push(5);
        let factors: Vec<Matrix> = (0..depth).map(|l| sample_gaussian(dims[l], dims[l + 1], seed.wrapping_add(l as u64))).collect();
        let state = FactorState::new(factors.clone()).unwrap();
        let g0 = gradients(&state, &t, 0.0).unwrap();
        let gl = gradients(&state, &t, lambda).unwrap();
        for ((a, b), w) in g0.iter().zip(&gl).zip(&factors) {
            prop_assert!((b - a - w * lambda).amax() <= 1e-12 * (1.0 + b.amax()));
        }
    }

    #[test]
    fn reals_round_trip_through_text(bits in any::<u64>()) {
        let x = f64::from_bits(bits);
        prop_assume!(x.is_finite());
        prop_assert_eq!(format_real(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn resolved_config_parses_to_the_same_document(seed in any::<u64>(), eta in 1e-6f64..1.0, steps in 1usize..100_000) {
        let doc = parse_config(&format!("scenario = rank_sweep\nseed = {seed}\neta = {eta}\nmax_steps = {steps}\n")).unwrap();
        let again = parse_config(&doc.render()).unwrap();
        prop_assert_eq!(again.resolved, doc.resolved);
        prop_assert_eq!(again.options.eta, Some(eta));
        prop_assert_eq!(again.options.max_steps, Some(steps));
        prop_assert_eq!(again.options.seed, seed);
    }
}
