//! Evidence-based hyperparameter selection: effective degrees of freedom,
//! generalized cross-validation, shrinkage factors, and the Laplace
//! log-evidence (up to its additive constant).

use crate::linalg::{CholeskyFactor, DenseMatrix, LinalgError};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("effective degrees of freedom {gamma} must be below n = {n}")]
    DegenerateDof { gamma: f64, n: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Shrinkage factor d²/(d² + k) of a component with singular value d under
/// ridge penalty k.
pub fn gen_ridge_shrinkage(d: f64, k: f64) -> f64 {
    debug_assert!(d > 0.0 && k >= 0.0);
    let d2 = d * d;
    d2 / (d2 + k)
}

/// Effective number of parameters Σ_a λ_a/(λ_a + τ_w²) from the eigenvalues
/// of the data-misfit Hessian; always in [0, k].
pub fn effective_dof(eigs: &[f64], tau_w_sq: f64) -> f64 {
    debug_assert!(tau_w_sq > 0.0);
    eigs.iter().map(|l| l / (l + tau_w_sq)).sum()
}

/// k − τ_w²·tr(A⁻¹) from the posterior Hessian A = τ_w²I + B directly, via
/// its Cholesky factor.
pub fn effective_dof_from_hessian(a: &DenseMatrix, tau_w_sq: f64) -> Result<f64, SelectionError> {
    let k = a.rows() as f64;
    let tr = CholeskyFactor::new(a)?.trace_inverse();
    Ok(k - tau_w_sq * tr)
}

/// GCV(τ) = n⁻¹‖y−ŷ‖² / (1 − γ/n)².
pub fn gcv_score(residual_sq_norm: f64, gamma: f64, n: usize) -> Result<f64, SelectionError> {
    debug_assert!(residual_sq_norm >= 0.0);
    if gamma >= n as f64 {
        return Err(SelectionError::DegenerateDof { gamma, n });
    }
    let nf = n as f64;
    let denom = 1.0 - gamma / nf;
    Ok(residual_sq_norm / nf / (denom * denom))
}

/// Index of the GCV-minimizing penalty; ties within `1e-12` relative go to
/// the larger penalty (more regularization). Entries are (penalty, score).
pub fn select_by_gcv(scored: &[(f64, f64)]) -> Option<usize> {
    if scored.is_empty() {
        return None;
    }
    let mut best = 0usize;
    for (i, (pen, score)) in scored.iter().enumerate().skip(1) {
        let (bpen, bscore) = scored[best];
        let tol = 1e-12 * bscore.abs().max(1.0);
        if *score < bscore - tol || ((*score - bscore).abs() <= tol && *pen > bpen) {
            best = i;
        }
    }
    Some(best)
}

/// Laplace log-evidence −τ_w²·E_W − τ_D²·E_D − ½·log det A, up to the
/// additive constant; only differences across hyperparameter values are
/// meaningful.
pub fn laplace_log_evidence(
    e_w: f64,
    e_d: f64,
    tau_w_sq: f64,
    tau_d_sq: f64,
    a: &DenseMatrix,
) -> Result<f64, SelectionError> {
    let log_det = CholeskyFactor::new(a)?.log_det();
    Ok(-tau_w_sq * e_w - tau_d_sq * e_d - 0.5 * log_det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigenvalues;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shrinkage_examples() {
        assert!((gen_ridge_shrinkage(2.0, 1.0) - 0.8).abs() < 1e-15);
        assert_eq!(gen_ridge_shrinkage(3.0, 0.0), 1.0);
        assert!(gen_ridge_shrinkage(1e-9, 1.0) < 1e-15);
    }

    #[test]
    fn dof_examples() {
        assert!((effective_dof(&[1.0; 4], 1.0) - 2.0).abs() < 1e-15);
        assert!((effective_dof(&[4.0, 1.0], 1e-12) - 2.0).abs() < 1e-9);
        assert!((effective_dof(&[4.0, 1.0], 1.0) - 1.3).abs() < 1e-15);
    }

    #[test]
    fn dof_hessian_examples() {
        // A = 2 I₄ with τ_w² = 1 (B = I): 4 − 4·(1/2) = 2
        let mut a = DenseMatrix::identity(4);
        for i in 0..4 {
            a.set(i, i, 2.0);
        }
        assert!((effective_dof_from_hessian(&a, 1.0).unwrap() - 2.0).abs() < 1e-12);

        // diagonal B = diag(4, 1): agrees with the eigenvalue form
        let a = DenseMatrix::from_rows(&[vec![5.0, 0.0], vec![0.0, 2.0]]);
        assert!((effective_dof_from_hessian(&a, 1.0).unwrap() - 1.3).abs() < 1e-12);
    }

    #[test]
    fn dof_forms_agree_on_random_spd() {
        let mut r = ChaCha8Rng::seed_from_u64(31);
        for trial in 0..10 {
            let p = 5;
            let mut b = DenseMatrix::zeros(p, p);
            for i in 0..p {
                for j in 0..p {
                    b.set(i, j, r.gen::<f64>() - 0.5);
                }
            }
            // B = MᵀM
            let mut spd = DenseMatrix::zeros(p, p);
            for i in 0..p {
                for j in 0..p {
                    let mut s = 0.0;
                    for k in 0..p {
                        s += b.get(k, i) * b.get(k, j);
                    }
                    spd.set(i, j, s);
                }
            }
            let tau_w_sq = 0.7;
            let eigs = sym_eigenvalues(&spd).unwrap();
            let via_eigs = effective_dof(&eigs, tau_w_sq);
            let mut a = spd.clone();
            for i in 0..p {
                a.set(i, i, a.get(i, i) + tau_w_sq);
            }
            let via_hessian = effective_dof_from_hessian(&a, tau_w_sq).unwrap();
            assert!(
                (via_eigs - via_hessian).abs() < 1e-9,
                "trial {trial}: {via_eigs} vs {via_hessian}"
            );
        }
    }

    #[test]
    fn shrinkage_weight_identity() {
        // λ_a/(λ_a + τ²) = shrinkage(√λ_a, τ²)
        for &(l, t2) in &[(4.0_f64, 1.0), (0.3, 0.7), (10.0, 0.01)] {
            let lhs = l / (l + t2);
            let rhs = gen_ridge_shrinkage(l.sqrt(), t2);
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn gcv_examples() {
        assert_eq!(gcv_score(0.0, 1.0, 4).unwrap(), 0.0);
        assert!((gcv_score(4.0, 0.0, 4).unwrap() - 1.0).abs() < 1e-15);
        assert!((gcv_score(4.0, 2.0, 4).unwrap() - 4.0).abs() < 1e-15);
        assert!(matches!(
            gcv_score(4.0, 4.0, 4),
            Err(SelectionError::DegenerateDof { .. })
        ));
    }

    #[test]
    fn gcv_tie_breaks_to_larger_penalty() {
        let scored = [(0.1, 2.0), (1.0, 1.0), (10.0, 1.0)];
        assert_eq!(select_by_gcv(&scored), Some(2));
        assert_eq!(select_by_gcv(&[]), None);
    }

    #[test]
    fn log_evidence_prefers_matching_precision() {
        // differences across τ_w² are meaningful: log det grows with precision
        let a1 = DenseMatrix::from_rows(&[vec![1.5, 0.2], vec![0.2, 1.1]]);
        let e1 = laplace_log_evidence(1.0, 2.0, 0.5, 1.0, &a1).unwrap();
        let mut a2 = a1.clone();
        for i in 0..2 {
            a2.set(i, i, a2.get(i, i) + 1.0);
        }
        let e2 = laplace_log_evidence(1.0, 2.0, 1.5, 1.0, &a2).unwrap();
        assert!(e1 > e2);
    }
}
