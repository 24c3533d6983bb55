//! Proximal operators, Moreau envelopes, half-quadratic minimizers,
//! ISTA/FISTA with the accelerated step sequence, and Bregman divergences.

use crate::engine::{RunTrace, TraceRecord};
use crate::linalg::{sym_eigenvalues, DenseMatrix};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ProxError {
    #[error("no closed-form proximal operator for exponent {0}")]
    UnsupportedExponent(f64),
    #[error("no half-quadratic minimizer tabulated for {form:?} with {penalty:?}")]
    UnsupportedPair { form: HqForm, penalty: ScalarPenalty },
    #[error("arguments must be strictly positive for this generator")]
    DomainError,
}

/// Scalar penalty families with half-quadratic envelopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarPenalty {
    /// |x|^p, p > 0
    AbsPow(f64),
    /// √(α + x²)
    AlphaL1(f64),
    /// |x|/α − log(1 + |x|/α)
    L1Pareto(f64),
    /// x²/2 for |x| ≤ α, α|x| − α²/2 beyond
    Huber(f64),
    /// log cosh(αx)
    LogCosh(f64),
    /// γ log(1 + |x|/a)
    DoublePareto { a: f64, gamma: f64 },
}

impl ScalarPenalty {
    pub fn value(self, x: f64) -> f64 {
        match self {
            ScalarPenalty::AbsPow(p) => x.abs().powf(p),
            ScalarPenalty::AlphaL1(alpha) => (alpha + x * x).sqrt(),
            ScalarPenalty::L1Pareto(alpha) => {
                let t = x.abs() / alpha;
                t - t.ln_1p()
            }
            ScalarPenalty::Huber(alpha) => {
                let a = x.abs();
                if a <= alpha {
                    0.5 * x * x
                } else {
                    alpha * a - 0.5 * alpha * alpha
                }
            }
            ScalarPenalty::LogCosh(alpha) => {
                // log cosh t = |t| − log 2 + log1p(e^{−2|t|})
                let t = (alpha * x).abs();
                t - std::f64::consts::LN_2 + (-2.0 * t).exp().ln_1p()
            }
            ScalarPenalty::DoublePareto { a, gamma } => gamma * (x.abs() / a).ln_1p(),
        }
    }
}

/// The two half-quadratic representations: the scale (Geman–Reynolds) form
/// with minimizer φ′(x)/x, and the location (Geman–Yang) form with minimizer
/// x − φ′(x).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HqForm {
    Scale,
    Location,
}

/// arg min_z ½(y−z)² + λ|z|^p for p ∈ {1, 3/2, 2, 3}.
pub fn prox_lp(y: f64, lam: f64, p: f64) -> Result<f64, ProxError> {
    debug_assert!(lam > 0.0);
    let s = y.abs();
    let sign = if y < 0.0 { -1.0 } else { 1.0 };
    // all listed prox maps are odd: compute on the magnitude, restore the sign
    let m = if p == 1.0 {
        (s - lam).max(0.0)
    } else if p == 1.5 {
        let c = 9.0 * lam * lam / 8.0;
        s + c * (1.0 - (1.0 + 16.0 * s / (9.0 * lam * lam)).sqrt())
    } else if p == 2.0 {
        s / (1.0 + 2.0 * lam)
    } else if p == 3.0 {
        ((1.0 + 12.0 * lam * s).sqrt() - 1.0) / (6.0 * lam)
    } else {
        return Err(ProxError::UnsupportedExponent(p));
    };
    Ok(sign * m)
}

/// arg min_z ½(y−z)² + λ|z|^p for 0 < p < 1. The stationarity condition has
/// no root when the threshold regime induced by z* = (λp(1−p))^{1/(2−p)} is
/// empty; otherwise the larger root is found by safeguarded Newton and
/// compared against zero for the global optimum.
pub fn prox_lp_subunit(y: f64, lam: f64, p: f64) -> f64 {
    debug_assert!(lam > 0.0 && p > 0.0 && p < 1.0);
    let s = y.abs();
    if s == 0.0 {
        return 0.0;
    }
    let sign = y.signum();
    // h(z) = z + λp z^{p−1} − s is convex on z > 0 with minimum at z_c
    let z_c = (lam * p * (1.0 - p)).powf(1.0 / (2.0 - p));
    let h = |z: f64| z + lam * p * z.powf(p - 1.0) - s;
    if h(z_c) > 0.0 {
        return 0.0;
    }
    // Newton from z = s: h(s) > 0 and h is convex increasing on [z_c, ∞)
    let mut z = s;
    for _ in 0..200 {
        let hz = h(z);
        let dz = 1.0 + lam * p * (p - 1.0) * z.powf(p - 2.0);
        let next = (z - hz / dz).clamp(z_c, s);
        if (next - z).abs() <= 1e-15 * (1.0 + s) {
            z = next;
            break;
        }
        z = next;
    }
    let obj_zero = 0.5 * s * s;
    let obj_z = 0.5 * (s - z) * (s - z) + lam * z.powf(p);
    if obj_z < obj_zero {
        sign * z
    } else {
        0.0
    }
}

/// arg min_z ½(u−z)² + γ log(1 + |z|/a). The closed-form stationary
/// candidate [(|u|−a) + √((a+|u|)² − 4γ)]/2 is compared against zero so the
/// returned point is the global minimizer of the nonconvex objective; where
/// a|u| > γ this coincides with the usual clamped closed form.
pub fn prox_double_pareto(u: f64, a: f64, gam: f64) -> f64 {
    debug_assert!(a > 0.0 && gam >= 0.0);
    if u == 0.0 || gam == 0.0 {
        return u;
    }
    let s = u.abs();
    let disc = (a + s) * (a + s) - 4.0 * gam;
    if disc < 0.0 {
        return 0.0;
    }
    let z = 0.5 * ((s - a) + disc.sqrt());
    if z <= 0.0 {
        return 0.0;
    }
    let obj_z = 0.5 * (s - z) * (s - z) + gam * (z / a).ln_1p();
    let obj_zero = 0.5 * s * s;
    if obj_z < obj_zero {
        u.signum() * z
    } else {
        0.0
    }
}

/// Golden-section minimization of a unimodal function on [lo, hi].
fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, width: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > width {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// arg min_z λ·φ(z) + ½(z−v)², routed to the closed form when one exists and
/// otherwise to golden-section search (the remaining families are convex, so
/// the objective is strictly unimodal).
pub fn prox_scalar(penalty: ScalarPenalty, v: f64, lam: f64) -> f64 {
    if lam == 0.0 {
        return v;
    }
    match penalty {
        ScalarPenalty::AbsPow(p) if p == 1.0 || p == 1.5 || p == 2.0 || p == 3.0 => {
            prox_lp(v, lam, p).expect("closed-form exponent")
        }
        ScalarPenalty::AbsPow(p) if p < 1.0 => prox_lp_subunit(v, lam, p),
        ScalarPenalty::DoublePareto { a, gamma } => prox_double_pareto(v, a, lam * gamma),
        _ => {
            // shrinkage toward zero: the minimizer lies between 0 and v
            let (lo, hi) = if v >= 0.0 { (0.0, v) } else { (v, 0.0) };
            let f = |z: f64| lam * penalty.value(z) + 0.5 * (z - v) * (z - v);
            golden_section(f, lo - 1e-12, hi + 1e-12, 1e-11 * (1.0 + v.abs()))
        }
    }
}

/// Moreau envelope inf_z { φ(z) + (z−x)²/(2γ) }; never exceeds φ(x).
pub fn moreau_envelope(penalty: ScalarPenalty, gam: f64, x: f64) -> f64 {
    debug_assert!(gam > 0.0);
    let z = prox_scalar(penalty, x, gam);
    penalty.value(z) + (z - x) * (z - x) / (2.0 * gam)
}

/// Tabulated half-quadratic minimizer ŝ for a (form, penalty) pair; pairs
/// absent from the table are reported as unsupported rather than derived
/// numerically.
pub fn hq_minimizer(form: HqForm, penalty: ScalarPenalty, x: f64) -> Result<f64, ProxError> {
    let unsupported = || ProxError::UnsupportedPair { form, penalty };
    match form {
        HqForm::Scale => match penalty {
            ScalarPenalty::AbsPow(p) if p > 1.0 && p <= 2.0 => Ok(p * x.abs().powf(p - 2.0)),
            ScalarPenalty::AbsPow(_) => Err(unsupported()),
            ScalarPenalty::AlphaL1(alpha) => Ok(1.0 / (alpha + x * x).sqrt()),
            ScalarPenalty::L1Pareto(alpha) => Ok(1.0 / (alpha * (alpha + x.abs()))),
            ScalarPenalty::Huber(alpha) => Ok(1.0_f64.min(alpha / x.abs())),
            ScalarPenalty::LogCosh(alpha) => {
                if x.abs() < 1e-8 {
                    Ok(alpha * alpha)
                } else {
                    Ok(alpha * (alpha * x).tanh() / x)
                }
            }
            ScalarPenalty::DoublePareto { .. } => Err(unsupported()),
        },
        HqForm::Location => match penalty {
            ScalarPenalty::AlphaL1(alpha) => Ok(x - x / (alpha + x * x).sqrt()),
            ScalarPenalty::L1Pareto(alpha) => Ok(x - x / (alpha * (alpha + x.abs()))),
            ScalarPenalty::LogCosh(alpha) => Ok(x - alpha * (alpha * x).tanh()),
            _ => Err(unsupported()),
        },
    }
}

/// Accelerated step sequence λ_s = (1 + √(1+4λ_{s−1}²))/2 from λ₀ = 0,
/// with γ_s = (1−λ_s)/λ_{s+1}.
#[derive(Debug, Clone)]
pub struct NesterovSeq {
    /// λ_0 ..= λ_{t_max+1}
    pub lambda: Vec<f64>,
    /// γ_s for s = 0 ..= t_max
    pub gamma: Vec<f64>,
}

impl NesterovSeq {
    /// Extrapolation coefficient (λ_s − 1)/λ_{s+1} = −γ_s.
    pub fn extrapolation(&self, s: usize) -> f64 {
        (self.lambda[s] - 1.0) / self.lambda[s + 1]
    }
}

pub fn nesterov_seq(t_max: usize) -> NesterovSeq {
    assert!(t_max >= 1);
    let mut lambda: Vec<f64> = Vec::with_capacity(t_max + 2);
    lambda.push(0.0);
    for _ in 0..t_max + 1 {
        let prev = *lambda.last().unwrap();
        lambda.push(0.5 * (1.0 + (1.0 + 4.0 * prev * prev).sqrt()));
    }
    let gamma = (0..=t_max).map(|s| (1.0 - lambda[s]) / lambda[s + 1]).collect();
    NesterovSeq { lambda, gamma }
}

/// One proximal-gradient step for ½‖y−Xβ‖² + τΣφ(β_j):
/// prox_{τφ/α}(β + α⁻¹Xᵀ(y−Xβ)) applied coordinatewise. `alpha` must be at
/// least the largest eigenvalue of XᵀX for the step to be a descent step.
pub fn ista_step(
    beta: &[f64],
    design: &DenseMatrix,
    y: &[f64],
    alpha: f64,
    tau: f64,
    penalty: ScalarPenalty,
) -> Vec<f64> {
    let fitted = design.matvec(beta);
    let resid: Vec<f64> = y.iter().zip(&fitted).map(|(yi, fi)| yi - fi).collect();
    let grad_step = design.t_matvec(&resid);
    beta.iter()
        .zip(&grad_step)
        .map(|(b, g)| prox_scalar(penalty, b + g / alpha, tau / alpha))
        .collect()
}

fn composite_objective(
    design: &DenseMatrix,
    y: &[f64],
    beta: &[f64],
    tau: f64,
    penalty: ScalarPenalty,
) -> f64 {
    let fitted = design.matvec(beta);
    let rss: f64 = y.iter().zip(&fitted).map(|(yi, fi)| (yi - fi) * (yi - fi)).sum();
    0.5 * rss + tau * beta.iter().map(|b| penalty.value(*b)).sum::<f64>()
}

/// ISTA with the accelerated extrapolation sequence, from β = 0, step 1/L
/// with L the largest eigenvalue of XᵀX. Records the composite objective at
/// the proximal iterate each step.
pub fn fista_run(
    design: &DenseMatrix,
    y: &[f64],
    tau: f64,
    penalty: ScalarPenalty,
    iters: usize,
) -> RunTrace {
    assert!(iters >= 1);
    let p = design.cols();
    // L = λ_max(XᵀX)
    let mut xtx = DenseMatrix::zeros(p, p);
    for i in 0..design.rows() {
        let row = design.row(i);
        for j in 0..p {
            for k in j..p {
                let v = xtx.get(j, k) + row[j] * row[k];
                xtx.set(j, k, v);
                if j != k {
                    xtx.set(k, j, v);
                }
            }
        }
    }
    let lmax = *sym_eigenvalues(&xtx).expect("finite design").last().unwrap();

    let seq = nesterov_seq(iters);
    let start = Instant::now();
    let mut y_cur = vec![0.0; p];
    let mut x = y_cur.clone();
    let mut records = Vec::with_capacity(iters + 1);
    let nnz = |b: &[f64]| b.iter().filter(|v| **v != 0.0).count();
    records.push(TraceRecord {
        iter: 0,
        objective: composite_objective(design, y, &y_cur, tau, penalty),
        elapsed_s: 0.0,
        active_set_size: nnz(&y_cur),
        extra: Vec::new(),
    });
    for s in 1..=iters {
        let y_next = ista_step(&x, design, y, lmax, tau, penalty);
        let mu = seq.extrapolation(s);
        x = y_next
            .iter()
            .zip(&y_cur)
            .map(|(next, prev)| next + mu * (next - prev))
            .collect();
        y_cur = y_next;
        records.push(TraceRecord {
            iter: s,
            objective: composite_objective(design, y, &y_cur, tau, penalty),
            elapsed_s: start.elapsed().as_secs_f64(),
            active_set_size: nnz(&y_cur),
            extra: Vec::new(),
        });
    }
    RunTrace { records, final_beta: y_cur, converged: false }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BregmanGenerator {
    Euclid,
    KullbackLeibler,
    ItakuraSaito,
}

/// Bregman divergence of the named generator; nonnegative, zero iff x = y.
pub fn bregman_div(generator: BregmanGenerator, x: f64, y: f64) -> Result<f64, ProxError> {
    match generator {
        BregmanGenerator::Euclid => Ok(0.5 * (x - y) * (x - y)),
        BregmanGenerator::KullbackLeibler => {
            if x <= 0.0 || y <= 0.0 {
                return Err(ProxError::DomainError);
            }
            Ok(x * (x / y).ln() - x + y)
        }
        BregmanGenerator::ItakuraSaito => {
            if x <= 0.0 || y <= 0.0 {
                return Err(ProxError::DomainError);
            }
            let r = x / y;
            Ok(r - r.ln() - 1.0)
        }
    }
}

/// Tight quadratic-envelope weights for the L¹ norm: λ_i = |β_i| attains
/// equality in Σ(β_i²/(2λ_i) + λ_i/2) = ‖β‖₁.
pub fn lasso_amgm_weight(beta: &[f64]) -> Vec<f64> {
    beta.iter().map(|b| b.abs()).collect()
}

/// Σ(β_i²/(2λ_i) + λ_i/2) over coordinates with λ_i > 0; zero-weight
/// coordinates contribute their boundary value 0.
pub fn lasso_amgm_envelope(beta: &[f64], lambda: &[f64]) -> f64 {
    beta.iter()
        .zip(lambda)
        .map(|(b, l)| if *l > 0.0 { b * b / (2.0 * l) + l / 2.0 } else { 0.0 })
        .sum()
}
