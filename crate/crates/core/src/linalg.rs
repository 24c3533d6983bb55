//! Dense symmetric linear algebra for the M-step: Cholesky solves, trace of
//! the inverse, Jacobi eigenvalues / condition numbers, and weighted Gram
//! assembly from a cached design matrix.

use thiserror::Error;

/// Relative pivot tolerance: a Cholesky pivot at or below this fraction of the
/// largest diagonal entry is treated as not positive definite.
pub const CHOL_PIVOT_RTOL: f64 = 1e-12;

/// Eigenvalue ratio below which `spectral_cond` reports an infinite condition.
pub const COND_SINGULAR_RTOL: f64 = 1e-14;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    /// A leading minor was nonpositive during factorization. For M-step
    /// matrices this signals a degenerate weight configuration upstream.
    #[error("matrix is not positive definite (pivot {pivot:.3e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("active set is empty")]
    EmptyActiveSet,
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Self {
        assert_eq!(entries.len(), rows * cols, "entry count must be rows*cols");
        Self { rows, cols, entries }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut entries = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            entries.extend_from_slice(row);
        }
        Self { rows: r, cols: c, entries }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|v| v.is_finite())
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// y = Aᵀ x
    pub fn t_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for (yj, aij) in y.iter_mut().zip(self.row(i)) {
                *yj += xi * aij;
            }
        }
        y
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn check_finite(&self) -> Result<(), LinalgError> {
        for i in 0..self.rows {
            for j in 0..self.cols {
                if !self.get(i, j).is_finite() {
                    return Err(LinalgError::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(())
    }
}

/// Lower-triangular Cholesky factor of an SPD matrix, reusable across solves
/// and for the trace of the inverse.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    n: usize,
    // lower triangle, row-major n×n (upper part zero)
    l: Vec<f64>,
}

impl CholeskyFactor {
    /// Unpivoted Cholesky. A pivot at or below `CHOL_PIVOT_RTOL` times the
    /// largest diagonal entry is reported as `NotPositiveDefinite`.
    pub fn new(a: &DenseMatrix) -> Result<Self, LinalgError> {
        assert_eq!(a.rows(), a.cols(), "matrix must be square");
        a.check_finite()?;
        let n = a.rows();
        let max_diag = (0..n).map(|i| a.get(i, i)).fold(0.0_f64, f64::max);
        let tol = CHOL_PIVOT_RTOL * max_diag.max(0.0);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= tol {
                        return Err(LinalgError::NotPositiveDefinite { index: i, pivot: s });
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solve A x = b via the factor.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if b.len() != self.n {
            return Err(LinalgError::DimensionMismatch { expected: self.n, got: b.len() });
        }
        let n = self.n;
        let l = &self.l;
        // forward: L z = b
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= l[i * n + k] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
        // backward: Lᵀ x = z
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= l[k * n + i] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
        Ok(x)
    }

    /// tr(A⁻¹) = ‖L⁻¹‖_F², accumulated column by column of L⁻¹.
    pub fn trace_inverse(&self) -> f64 {
        let n = self.n;
        let l = &self.l;
        let mut total = 0.0;
        let mut col = vec![0.0; n];
        for j in 0..n {
            // forward-substitute L v = e_j; entries above j are zero
            for (i, v) in col.iter_mut().enumerate().take(j) {
                debug_assert!(i < j);
                *v = 0.0;
            }
            for i in j..n {
                let mut s = if i == j { 1.0 } else { 0.0 };
                for k in j..i {
                    s -= l[i * n + k] * col[k];
                }
                col[i] = s / l[i * n + i];
                total += col[i] * col[i];
            }
        }
        total
    }

    /// log det A = 2 Σ log L_ii.
    pub fn log_det(&self) -> f64 {
        let n = self.n;
        (0..n).map(|i| self.l[i * n + i].ln()).sum::<f64>() * 2.0
    }
}

/// Solve `a · x = b` for symmetric positive definite `a`.
pub fn chol_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    CholeskyFactor::new(a)?.solve(b)
}

/// tr(a⁻¹) for SPD `a`.
pub fn trace_inverse(a: &DenseMatrix) -> Result<f64, LinalgError> {
    Ok(CholeskyFactor::new(a)?.trace_inverse())
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi sweeps, ascending.
/// Converged when the off-diagonal norm drops below 1e-12 of the Frobenius
/// norm.
pub fn sym_eigenvalues(a: &DenseMatrix) -> Result<Vec<f64>, LinalgError> {
    assert_eq!(a.rows(), a.cols(), "matrix must be square");
    a.check_finite()?;
    let n = a.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut m = a.entries.clone();
    let fro = a.frobenius_norm();
    let tol = 1e-12 * fro;
    let off = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[i * n + j] * m[i * n + j];
                }
            }
        }
        s.sqrt()
    };
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        if off(&m) <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                // smaller-angle rotation root
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(eigs)
}

/// λ_max / λ_min of a symmetric PSD matrix; `f64::INFINITY` when
/// λ_min < 1e-14 · λ_max.
pub fn spectral_cond(a: &DenseMatrix) -> Result<f64, LinalgError> {
    let eigs = sym_eigenvalues(a)?;
    let max = *eigs.last().expect("nonempty matrix");
    let min = eigs[0];
    if min < COND_SINGULAR_RTOL * max {
        return Ok(f64::INFINITY);
    }
    Ok(max / min)
}

/// Cached per-observation sufficient statistics for assembling weighted Gram
/// matrices. Stores the raw n×p row matrix and accumulates Σ ωᵢ xᵢxᵢᵀ on
/// demand: the arithmetic matches the explicit outer-product cache at O(np)
/// memory, and the content never depends on β or the iteration index.
#[derive(Debug, Clone)]
pub struct GramCache {
    x: DenseMatrix,
}

impl GramCache {
    pub fn new(x: DenseMatrix) -> Self {
        Self { x }
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn design(&self) -> &DenseMatrix {
        &self.x
    }

    /// (Σᵢ ωᵢ xᵢxᵢᵀ + diag(prior))_γγ restricted to the active set.
    /// Cost O(n·|γ|²); no dependence on β.
    pub fn assemble(
        &self,
        obs_weights: &[f64],
        prior_precisions: &[f64],
        active: &[usize],
    ) -> Result<DenseMatrix, LinalgError> {
        if active.is_empty() {
            return Err(LinalgError::EmptyActiveSet);
        }
        let n = self.n();
        let p = self.p();
        assert_eq!(obs_weights.len(), n, "one weight per observation");
        assert_eq!(prior_precisions.len(), p, "one precision per coordinate");
        let g = active.len();
        let mut a = vec![0.0; g * g];
        let mut xs = vec![0.0; g];
        for i in 0..n {
            let row = self.x.row(i);
            for (s, &j) in xs.iter_mut().zip(active) {
                *s = row[j];
            }
            let w = obs_weights[i];
            for (ai, &xa) in xs.iter().enumerate() {
                let c = w * xa;
                if c == 0.0 {
                    continue;
                }
                let dst = &mut a[ai * g..(ai + 1) * g];
                for (bi, &xb) in xs.iter().enumerate().skip(ai) {
                    dst[bi] += c * xb;
                }
            }
        }
        // mirror the upper triangle, add the prior diagonal
        for ai in 0..g {
            a[ai * g + ai] += prior_precisions[active[ai]];
            for bi in ai + 1..g {
                a[bi * g + ai] = a[ai * g + bi];
            }
        }
        Ok(DenseMatrix::new(g, g, a))
    }

    /// (Xᵀ v)_γ restricted to the active set.
    pub fn weighted_cross(&self, v: &[f64], active: &[usize]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(v.len(), n, "one coefficient per observation");
        let mut out = vec![0.0; active.len()];
        for i in 0..n {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            let row = self.x.row(i);
            for (o, &j) in out.iter_mut().zip(active) {
                *o += vi * row[j];
            }
        }
        out
    }
}

/// Build the sufficient-statistics cache from a design matrix.
pub fn gram_build(x: DenseMatrix) -> GramCache {
    GramCache::new(x)
}
