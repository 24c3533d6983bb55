//! Loss and penalty families with gradients, plus the gradient-to-weight
//! kernels that turn loss curvature into observation weights and penalty
//! curvature into per-parameter weight decay.

/// Floor applied to |residual| in the check/hinge weights; the raw 1/|r|
/// weight is singular at an exact fit and the clamp bounds the M-step
/// condition number.
pub const DEFAULT_CLAMP_EPS: f64 = 1e-6;

/// Coefficients with |β| below this are treated as zero and marked for
/// removal from the active set under sparsity-inducing penalties.
pub const DEFAULT_ZERO_TOL: f64 = 1e-8;

/// Loss families. `Check` carries its quantile level q ∈ (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossFamily {
    /// Binomial negative log-likelihood with per-observation trial counts.
    Logistic,
    Squared,
    Check { q: f64 },
    /// Margin loss max(r, 0) on r = 1 − ỹ·xᵀβ. The observation weight is
    /// inferred by analogy with the check loss; results using it are
    /// derived-by-analogy rather than tabulated.
    Hinge,
}

impl LossFamily {
    pub fn is_classification(self) -> bool {
        matches!(self, LossFamily::Logistic | LossFamily::Hinge)
    }
}

/// Penalty families; all scale parameters are strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyFamily {
    Ridge { tau: f64 },
    Lasso { tau: f64 },
    DoublePareto { tau: f64, a: f64, gamma: f64 },
}

impl PenaltyFamily {
    pub fn tau(self) -> f64 {
        match self {
            PenaltyFamily::Ridge { tau }
            | PenaltyFamily::Lasso { tau }
            | PenaltyFamily::DoublePareto { tau, .. } => tau,
        }
    }
}

/// Location/asymmetry/scale constants of the variance-mean mixture for a loss
/// family, plus the penalty-side locations (zero for every implemented
/// penalty).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightKernelParams {
    pub mu_z: f64,
    pub kappa_z: f64,
    pub sigma: f64,
    pub mu_beta: f64,
    pub kappa_beta: f64,
}

impl WeightKernelParams {
    /// Mixture constants for a loss family at unit trial count:
    /// logistic (0, −1/2, 1); squared (0, 0, 1); check (0, 1−2q, √2);
    /// hinge (0, −1, √2).
    pub fn for_loss(loss: LossFamily) -> Self {
        let (kappa_z, sigma) = match loss {
            LossFamily::Logistic => (-0.5, 1.0),
            LossFamily::Squared => (0.0, 1.0),
            LossFamily::Check { q } => (1.0 - 2.0 * q, std::f64::consts::SQRT_2),
            LossFamily::Hinge => (-1.0, std::f64::consts::SQRT_2),
        };
        Self { mu_z: 0.0, kappa_z, sigma, mu_beta: 0.0, kappa_beta: 0.0 }
    }
}

/// Numerically stable log(1 + e^z).
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Logistic function 1/(1 + e^{−z}).
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Loss value and derivative at the working variable `z`. For `Logistic`, `m`
/// is the trial count and the value is m·log(1+e^z); other families ignore
/// `m`. At the check-loss kink the subgradient element q − 1/2 (midpoint
/// convention) is returned; the hinge kink returns 1/2 by the same
/// convention.
pub fn loss_value_grad(family: LossFamily, z: f64, m: f64) -> (f64, f64) {
    match family {
        LossFamily::Logistic => (m * softplus(z), m * sigmoid(z)),
        LossFamily::Squared => (0.5 * z * z, z),
        LossFamily::Check { q } => {
            let value = 0.5 * z.abs() + (q - 0.5) * z;
            let grad = if z > 0.0 {
                q
            } else if z < 0.0 {
                q - 1.0
            } else {
                q - 0.5
            };
            (value, grad)
        }
        LossFamily::Hinge => {
            let value = z.max(0.0);
            let grad = if z > 0.0 {
                1.0
            } else if z < 0.0 {
                0.0
            } else {
                0.5
            };
            (value, grad)
        }
    }
}

/// E-step observation weight. Logistic: m·tanh(z/2)/(2z), with the Taylor
/// value m·(1/4 − z²/48) below |z| = 1e-4 (series error < 1e-17 at the
/// switch). Check and hinge: 1/max(|r|, clamp_eps). Squared: 1.
pub fn obs_weight(family: LossFamily, z_or_residual: f64, m: f64, clamp_eps: f64) -> f64 {
    match family {
        LossFamily::Logistic => {
            let z = z_or_residual;
            if z.abs() < 1e-4 {
                m * (0.25 - z * z / 48.0)
            } else {
                m * (0.5 * z).tanh() / (2.0 * z)
            }
        }
        LossFamily::Squared => 1.0,
        LossFamily::Check { .. } | LossFamily::Hinge => {
            1.0 / z_or_residual.abs().max(clamp_eps)
        }
    }
}

/// Penalty value and derivative at a single coordinate. Lasso and
/// double-Pareto return the zero subgradient element at β = 0.
pub fn penalty_value_grad(family: PenaltyFamily, beta_j: f64) -> (f64, f64) {
    match family {
        PenaltyFamily::Ridge { .. } => (0.5 * beta_j * beta_j, beta_j),
        PenaltyFamily::Lasso { .. } => {
            let grad = if beta_j == 0.0 { 0.0 } else { beta_j.signum() };
            (beta_j.abs(), grad)
        }
        PenaltyFamily::DoublePareto { a, gamma, .. } => {
            let value = gamma * (beta_j.abs() / a).ln_1p();
            let grad = if beta_j == 0.0 {
                0.0
            } else {
                gamma * beta_j.signum() / (a + beta_j.abs())
            };
            (value, grad)
        }
    }
}

/// E-step parameter weight (adaptive weight decay). Ridge: τ². Lasso:
/// τ²/|β|. Double-Pareto: γτ²/((a+|β|)·|β|). For the sparsity-inducing
/// families, |β| below `zero_tol` returns `f64::INFINITY`, signaling removal
/// from the active set.
pub fn param_weight(family: PenaltyFamily, beta_j: f64, zero_tol: f64) -> f64 {
    let b = beta_j.abs();
    match family {
        PenaltyFamily::Ridge { tau } => tau * tau,
        PenaltyFamily::Lasso { tau } => {
            if b < zero_tol {
                f64::INFINITY
            } else {
                tau * tau / b
            }
        }
        PenaltyFamily::DoublePareto { tau, a, gamma } => {
            if b < zero_tol {
                f64::INFINITY
            } else {
                gamma * tau * tau / ((a + b) * b)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn loss_examples() {
        let (v, g) = loss_value_grad(LossFamily::Logistic, 0.0, 1.0);
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((g - 0.5).abs() < 1e-15);

        let (v, g) = loss_value_grad(LossFamily::Squared, 3.0, 1.0);
        assert_eq!((v, g), (4.5, 3.0));

        // oracle: evaluate ρ_q(θ) = ½|θ| + (q−½)θ and its slope at θ = −1
        let (v, g) = loss_value_grad(LossFamily::Check { q: 0.9 }, -1.0, 1.0);
        assert!((v - 0.1).abs() < 1e-15);
        assert!((g - (-0.1)).abs() < 1e-15);
    }

    #[test]
    fn check_kink_uses_midpoint_subgradient() {
        let (_, g) = loss_value_grad(LossFamily::Check { q: 0.7 }, 0.0, 1.0);
        assert!((g - 0.2).abs() < 1e-15);
    }

    #[test]
    fn obs_weight_examples() {
        assert!((obs_weight(LossFamily::Logistic, 0.0, 1.0, DEFAULT_CLAMP_EPS) - 0.25).abs() < 1e-15);
        let w = obs_weight(LossFamily::Logistic, 2.0, 1.0, DEFAULT_CLAMP_EPS);
        assert!((w - 1.0_f64.tanh() / 4.0).abs() < 1e-15);
        assert!((w - 0.190399).abs() < 1e-6);

        assert!((obs_weight(LossFamily::Check { q: 0.5 }, 0.25, 1.0, DEFAULT_CLAMP_EPS) - 4.0).abs() < 1e-15);
        assert!((obs_weight(LossFamily::Check { q: 0.5 }, 0.0, 1.0, DEFAULT_CLAMP_EPS) - 1e6).abs() < 1e-9);
        assert_eq!(obs_weight(LossFamily::Squared, 7.0, 1.0, DEFAULT_CLAMP_EPS), 1.0);
    }

    #[test]
    fn taylor_switch_is_smooth() {
        // both branches agree to far below the stated 1e-17 at the switch point
        let z: f64 = 1e-4;
        let taylor = 0.25 - z * z / 48.0;
        let exact = (0.5 * z).tanh() / (2.0 * z);
        assert!((taylor - exact).abs() < 1e-16);
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(penalty_value_grad(PenaltyFamily::Ridge { tau: 1.0 }, 2.0), (2.0, 2.0));
        assert_eq!(penalty_value_grad(PenaltyFamily::Lasso { tau: 1.0 }, -1.5), (1.5, -1.0));
        let (v, g) =
            penalty_value_grad(PenaltyFamily::DoublePareto { tau: 1.0, a: 1.0, gamma: 2.0 }, 1.0);
        assert!((v - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        assert!((g - 1.0).abs() < 1e-15);
    }

    #[test]
    fn param_weight_examples() {
        assert!((param_weight(PenaltyFamily::Lasso { tau: 1.0 }, 0.5, DEFAULT_ZERO_TOL) - 2.0).abs() < 1e-15);
        assert_eq!(param_weight(PenaltyFamily::Ridge { tau: 3.0 }, -17.2, DEFAULT_ZERO_TOL), 9.0);
        let w = param_weight(
            PenaltyFamily::DoublePareto { tau: 1.0, a: 1.0, gamma: 2.0 },
            1.0,
            DEFAULT_ZERO_TOL,
        );
        assert!((w - 1.0).abs() < 1e-15);
        assert!(param_weight(PenaltyFamily::Lasso { tau: 1.0 }, 1e-12, DEFAULT_ZERO_TOL).is_infinite());
    }

    #[test]
    fn lasso_weight_reproduces_penalty_gradient() {
        // β·λ̂ = τ²·g′(β) exactly away from zero
        let tau = 1.7;
        for &b in &[0.3, -2.0, 5.5, -0.04] {
            let lam = param_weight(PenaltyFamily::Lasso { tau }, b, DEFAULT_ZERO_TOL);
            let (_, g) = penalty_value_grad(PenaltyFamily::Lasso { tau }, b);
            assert!((b * lam - tau * tau * g).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_to_weight_identity_per_family() {
        // (z − μ_z)·ω̂ = κ_z + σ²·f′(z) away from kinks and the clamp floor
        let mut r = ChaCha8Rng::seed_from_u64(99);
        let families = [
            LossFamily::Logistic,
            LossFamily::Squared,
            LossFamily::Check { q: 0.3 },
            LossFamily::Hinge,
        ];
        for family in families {
            let k = WeightKernelParams::for_loss(family);
            let mut checked = 0;
            while checked < 1000 {
                let z = r.gen::<f64>() * 40.0 - 20.0;
                if z.abs() < 1e-3 {
                    continue;
                }
                checked += 1;
                let w = obs_weight(family, z, 1.0, DEFAULT_CLAMP_EPS);
                let (_, fp) = loss_value_grad(family, z, 1.0);
                let lhs = (z - k.mu_z) * w;
                let rhs = k.kappa_z + k.sigma * k.sigma * fp;
                assert!(
                    (lhs - rhs).abs() < 1e-10,
                    "{family:?} identity residual {} at z={z}",
                    (lhs - rhs).abs()
                );
            }
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut r = ChaCha8Rng::seed_from_u64(12);
        let h = 1e-6;
        let losses = [
            LossFamily::Logistic,
            LossFamily::Squared,
            LossFamily::Check { q: 0.8 },
            LossFamily::Hinge,
        ];
        for family in losses {
            for _ in 0..100 {
                let z = r.gen::<f64>() * 10.0 - 5.0;
                if z.abs() < 1e-3 {
                    continue; // keep away from the kinks
                }
                let (_, g) = loss_value_grad(family, z, 1.0);
                let fd = (loss_value_grad(family, z + h, 1.0).0
                    - loss_value_grad(family, z - h, 1.0).0)
                    / (2.0 * h);
                assert!((g - fd).abs() < 1e-5, "{family:?} grad {g} vs fd {fd} at {z}");
            }
        }
        let penalties = [
            PenaltyFamily::Ridge { tau: 1.0 },
            PenaltyFamily::Lasso { tau: 1.0 },
            PenaltyFamily::DoublePareto { tau: 1.0, a: 0.7, gamma: 1.3 },
        ];
        for family in penalties {
            for _ in 0..100 {
                let b = r.gen::<f64>() * 6.0 - 3.0;
                if b.abs() < 1e-3 {
                    continue;
                }
                let (_, g) = penalty_value_grad(family, b);
                let fd = (penalty_value_grad(family, b + h).0 - penalty_value_grad(family, b - h).0)
                    / (2.0 * h);
                assert!((g - fd).abs() < 1e-5);
            }
        }
    }

    proptest! {
        #[test]
        fn logistic_weight_bounded_and_positive(z in -1e6f64..1e6) {
            let w = obs_weight(LossFamily::Logistic, z, 1.0, DEFAULT_CLAMP_EPS);
            prop_assert!(w > 0.0 && w <= 0.25 + 1e-15);
        }

        #[test]
        fn logistic_weight_decreasing_in_magnitude(a in 0.0f64..50.0, d in 1e-3f64..10.0) {
            let w1 = obs_weight(LossFamily::Logistic, a, 1.0, DEFAULT_CLAMP_EPS);
            let w2 = obs_weight(LossFamily::Logistic, a + d, 1.0, DEFAULT_CLAMP_EPS);
            prop_assert!(w2 < w1);
        }
    }
}
