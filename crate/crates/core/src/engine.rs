//! The full-batch scale-mixture EM loop: E-step weights from the loss and
//! penalty kernels, a weighted least-squares M-step on the active set, the
//! Nesterov-accelerated variant, and a warm-started regularization path over
//! shared sufficient statistics.

use crate::kernels::{
    self, loss_value_grad, obs_weight, param_weight, penalty_value_grad, sigmoid, LossFamily,
    PenaltyFamily, WeightKernelParams,
};
use crate::linalg::{CholeskyFactor, GramCache, LinalgError};
use crate::prox::nesterov_seq;
use crate::synth::Dataset;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("every coordinate was pruned from the active set")]
    AllCoordinatesPruned,
}

/// Loss/penalty pairing with its kernel constants and the effective ridge
/// precision ρ (the coefficient of the quadratic prior term when the penalty
/// is Ridge; ignored for the adaptive penalties, whose coefficient is
/// λ̂_j/τ²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureSpec {
    pub loss: LossFamily,
    pub penalty: PenaltyFamily,
    pub kernel: WeightKernelParams,
    pub prior_precision: f64,
    pub clamp_eps: f64,
    pub zero_tol: f64,
}

impl MixtureSpec {
    pub fn new(loss: LossFamily, penalty: PenaltyFamily, prior_precision: f64) -> Self {
        Self {
            loss,
            penalty,
            kernel: WeightKernelParams::for_loss(loss),
            prior_precision,
            clamp_eps: kernels::DEFAULT_CLAMP_EPS,
            zero_tol: kernels::DEFAULT_ZERO_TOL,
        }
    }

    pub fn logistic_ridge(rho: f64) -> Self {
        Self::new(LossFamily::Logistic, PenaltyFamily::Ridge { tau: 1.0 }, rho)
    }

    pub fn logistic_lasso(tau: f64) -> Self {
        Self::new(LossFamily::Logistic, PenaltyFamily::Lasso { tau }, 0.0)
    }

    pub fn squared_ridge(rho: f64) -> Self {
        Self::new(LossFamily::Squared, PenaltyFamily::Ridge { tau: 1.0 }, rho)
    }

    fn is_sparsity_inducing(&self) -> bool {
        !matches!(self.penalty, PenaltyFamily::Ridge { .. })
    }

    /// Per-coordinate precision added to the weighted Gram matrix, given the
    /// parameter weight λ̂_j from the E-step.
    fn coordinate_precision(&self, lambda_hat: f64) -> f64 {
        match self.penalty {
            PenaltyFamily::Ridge { .. } => self.prior_precision,
            PenaltyFamily::Lasso { tau } | PenaltyFamily::DoublePareto { tau, .. } => {
                let t2 = tau * tau;
                lambda_hat / t2
            }
        }
    }

    /// Penalty contribution to the objective, on the same scale as the
    /// coordinate precisions used in the solve.
    fn penalty_total(&self, beta: &[f64]) -> f64 {
        match self.penalty {
            PenaltyFamily::Ridge { .. } => {
                self.prior_precision * 0.5 * beta.iter().map(|b| b * b).sum::<f64>()
            }
            _ => beta.iter().map(|b| penalty_value_grad(self.penalty, *b).0).sum(),
        }
    }

    pub(crate) fn penalty_gradient(&self, beta_j: f64) -> f64 {
        match self.penalty {
            PenaltyFamily::Ridge { .. } => self.prior_precision * beta_j,
            _ => penalty_value_grad(self.penalty, beta_j).1,
        }
    }
}

/// Iteration state: coefficients, the latest weights, and the active set.
/// Coordinates outside the active set are exactly zero.
#[derive(Debug, Clone)]
pub struct SmemState {
    pub beta: Vec<f64>,
    pub obs_weights: Vec<f64>,
    pub param_weights: Vec<f64>,
    pub active: Vec<usize>,
    pub iter: usize,
}

impl SmemState {
    pub fn new(n: usize, p: usize) -> Self {
        Self {
            beta: vec![0.0; p],
            obs_weights: vec![0.0; n],
            param_weights: vec![0.0; p],
            active: (0..p).collect(),
            iter: 0,
        }
    }
}

/// E-step output: observation weights, parameter weights, and the working
/// right-hand-side coefficients κ (Xᵀκ is the M-step right-hand side).
#[derive(Debug, Clone)]
pub struct EStep {
    pub obs_weights: Vec<f64>,
    pub param_weights: Vec<f64>,
    pub kappa: Vec<f64>,
}

fn linear_predictor(data: &Dataset, beta: &[f64], active: &[usize]) -> Vec<f64> {
    let n = data.n();
    let mut z = vec![0.0; n];
    for (i, zi) in z.iter_mut().enumerate() {
        let row = data.x.row(i);
        let mut s = 0.0;
        for &j in active {
            s += row[j] * beta[j];
        }
        *zi = s;
    }
    z
}

/// Adaptive weights at the current state. Classification losses work on the
/// linear predictor z = xᵀβ; regression losses on the residual y − xᵀβ. The
/// κ vector is y − m/2 for logistic, ω∘y for the regression losses, and
/// ỹ∘(ω+1) for the hinge working response.
pub fn estep(state: &SmemState, data: &Dataset, spec: &MixtureSpec) -> EStep {
    let n = data.n();
    let z = linear_predictor(data, &state.beta, &state.active);
    let mut obs_weights = vec![0.0; n];
    let mut kappa = vec![0.0; n];
    match spec.loss {
        LossFamily::Logistic => {
            for i in 0..n {
                obs_weights[i] = obs_weight(spec.loss, z[i], data.m[i], spec.clamp_eps);
                kappa[i] = data.y[i] - data.m[i] / 2.0;
            }
        }
        LossFamily::Squared | LossFamily::Check { .. } => {
            for i in 0..n {
                let r = data.y[i] - z[i];
                obs_weights[i] = obs_weight(spec.loss, r, data.m[i], spec.clamp_eps);
                kappa[i] = obs_weights[i] * data.y[i];
            }
        }
        LossFamily::Hinge => {
            for i in 0..n {
                let ys = 2.0 * data.y[i] - 1.0;
                let margin = 1.0 - ys * z[i];
                obs_weights[i] = obs_weight(spec.loss, margin, data.m[i], spec.clamp_eps);
                kappa[i] = ys * (obs_weights[i] + 1.0);
            }
        }
    }
    let param_weights = state
        .beta
        .iter()
        .map(|b| param_weight(spec.penalty, *b, spec.zero_tol))
        .collect();
    EStep { obs_weights, param_weights, kappa }
}

/// Weighted least-squares update on the active set:
/// β_γ = (Λ_γ + XᵀΩ̂X)_γγ⁻¹ (Xᵀκ)_γ, inactive coordinates set to zero.
/// Requires every active parameter weight to be finite.
pub fn mstep(
    es: &EStep,
    cache: &GramCache,
    spec: &MixtureSpec,
    active: &[usize],
) -> Result<Vec<f64>, EngineError> {
    let p = cache.p();
    let prior: Vec<f64> =
        es.param_weights.iter().map(|l| spec.coordinate_precision(*l)).collect();
    debug_assert!(active.iter().all(|&j| prior[j].is_finite()));
    let a = cache.assemble(&es.obs_weights, &prior, active)?;
    let b = cache.weighted_cross(&es.kappa, active);
    let sol = CholeskyFactor::new(&a)?.solve(&b)?;
    let mut beta = vec![0.0; p];
    for (&j, v) in active.iter().zip(&sol) {
        beta[j] = *v;
    }
    Ok(beta)
}

/// Scalar effective step size 1/(ω̂ + τ⁻²λ̂).
pub fn effective_step_size(omega_hat: f64, lambda_hat: f64, tau: f64) -> f64 {
    debug_assert!(omega_hat > 0.0 && lambda_hat >= 0.0 && tau > 0.0);
    1.0 / (omega_hat + lambda_hat / (tau * tau))
}

/// Per-iteration record: the regularized objective is the penalized negative
/// log-likelihood divided by n (per-observation scale).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub objective: f64,
    pub elapsed_s: f64,
    pub active_set_size: usize,
    pub extra: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub final_beta: Vec<f64>,
    pub converged: bool,
}

impl RunTrace {
    pub fn final_objective(&self) -> f64 {
        self.records.last().expect("trace has at least the initial record").objective
    }
}

/// Iteration budget plus optional tolerances (0 disables a tolerance).
/// `abs_grad_tol` compares against the ∞-norm of the gradient of the total
/// (unnormalized) regularized objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub max_iter: usize,
    pub rel_obj_tol: f64,
    pub abs_grad_tol: f64,
}

impl StoppingRule {
    pub fn fixed(max_iter: usize) -> Self {
        Self { max_iter, rel_obj_tol: 0.0, abs_grad_tol: 0.0 }
    }

    pub fn with_grad_tol(max_iter: usize, abs_grad_tol: f64) -> Self {
        Self { max_iter, rel_obj_tol: 0.0, abs_grad_tol }
    }
}

/// Total (unnormalized) negative log-likelihood.
pub fn nll_total(data: &Dataset, loss: LossFamily, beta: &[f64]) -> f64 {
    let active: Vec<usize> = (0..data.p()).collect();
    let z = linear_predictor(data, beta, &active);
    let mut total = 0.0;
    for i in 0..data.n() {
        total += match loss {
            LossFamily::Logistic => {
                loss_value_grad(loss, z[i], data.m[i]).0 - data.y[i] * z[i]
            }
            LossFamily::Squared | LossFamily::Check { .. } => {
                loss_value_grad(loss, data.y[i] - z[i], data.m[i]).0
            }
            LossFamily::Hinge => {
                let ys = 2.0 * data.y[i] - 1.0;
                (1.0 - ys * z[i]).max(0.0)
            }
        };
    }
    total
}

/// Per-observation mean negative log-likelihood.
pub fn mean_nll(data: &Dataset, loss: LossFamily, beta: &[f64]) -> f64 {
    nll_total(data, loss, beta) / data.n() as f64
}

/// Mean regularized objective: (NLL + penalty)/n.
pub fn regularized_objective(data: &Dataset, spec: &MixtureSpec, beta: &[f64]) -> f64 {
    (nll_total(data, spec.loss, beta) + spec.penalty_total(beta)) / data.n() as f64
}

/// Gradient of the total regularized objective (subgradients at kinks).
pub fn objective_gradient(data: &Dataset, spec: &MixtureSpec, beta: &[f64]) -> Vec<f64> {
    let n = data.n();
    let p = data.p();
    let active: Vec<usize> = (0..p).collect();
    let z = linear_predictor(data, beta, &active);
    let mut grad = vec![0.0; p];
    for i in 0..n {
        let coeff = match spec.loss {
            LossFamily::Logistic => data.m[i] * sigmoid(z[i]) - data.y[i],
            LossFamily::Squared | LossFamily::Check { .. } => {
                -loss_value_grad(spec.loss, data.y[i] - z[i], data.m[i]).1
            }
            LossFamily::Hinge => {
                let ys = 2.0 * data.y[i] - 1.0;
                let margin = 1.0 - ys * z[i];
                -ys * loss_value_grad(spec.loss, margin, data.m[i]).1
            }
        };
        if coeff == 0.0 {
            continue;
        }
        let row = data.x.row(i);
        for (g, x) in grad.iter_mut().zip(row) {
            *g += coeff * x;
        }
    }
    for (g, b) in grad.iter_mut().zip(beta) {
        *g += spec.penalty_gradient(*b);
    }
    grad
}

fn grad_inf_norm(data: &Dataset, spec: &MixtureSpec, beta: &[f64]) -> f64 {
    objective_gradient(data, spec, beta)
        .iter()
        .fold(0.0_f64, |acc, g| acc.max(g.abs()))
}

/// Extra columns recorded per iteration.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Observation indices whose adaptive weight ω̂ is recorded each
    /// iteration as `omega_<i>`.
    pub probe_obs: Vec<usize>,
    /// Record per-iteration M-step wall time as `mstep_s`.
    pub record_mstep_time: bool,
}

fn probe_extras(
    data: &Dataset,
    spec: &MixtureSpec,
    beta: &[f64],
    active: &[usize],
    probes: &[usize],
) -> Vec<(String, f64)> {
    probes
        .iter()
        .map(|&i| {
            let row = data.x.row(i);
            let z: f64 = active.iter().map(|&j| row[j] * beta[j]).sum();
            let v = match spec.loss {
                LossFamily::Logistic => obs_weight(spec.loss, z, data.m[i], spec.clamp_eps),
                LossFamily::Squared | LossFamily::Check { .. } => {
                    obs_weight(spec.loss, data.y[i] - z, data.m[i], spec.clamp_eps)
                }
                LossFamily::Hinge => {
                    let ys = 2.0 * data.y[i] - 1.0;
                    obs_weight(spec.loss, 1.0 - ys * z, data.m[i], spec.clamp_eps)
                }
            };
            (format!("omega_{i}"), v)
        })
        .collect()
}

/// Initial coefficients. Ridge starts from zero; the sparsity-inducing
/// penalties start from one unshrunk weighted least-squares solve at the
/// zero-coefficient weights (a zero start would mark every coordinate for
/// removal).
fn init_beta(
    data: &Dataset,
    cache: &GramCache,
    spec: &MixtureSpec,
) -> Result<Vec<f64>, EngineError> {
    let p = data.p();
    if !spec.is_sparsity_inducing() {
        return Ok(vec![0.0; p]);
    }
    let state = SmemState::new(data.n(), p);
    let es = estep(&state, data, spec);
    let active: Vec<usize> = (0..p).collect();
    let prior = vec![1e-6; p];
    let a = cache.assemble(&es.obs_weights, &prior, &active)?;
    let b = cache.weighted_cross(&es.kappa, &active);
    Ok(CholeskyFactor::new(&a)?.solve(&b)?)
}

fn prune(state: &mut SmemState, spec: &MixtureSpec) {
    if !spec.is_sparsity_inducing() {
        return;
    }
    let beta = &mut state.beta;
    let tol = spec.zero_tol;
    state.active.retain(|&j| {
        if param_weight(spec.penalty, beta[j], tol).is_infinite() {
            beta[j] = 0.0;
            false
        } else {
            true
        }
    });
}

struct Runner<'a> {
    data: &'a Dataset,
    cache: &'a GramCache,
    spec: &'a MixtureSpec,
    stop: &'a StoppingRule,
    opts: &'a RunOptions,
    warm_start: Option<Vec<f64>>,
}

impl Runner<'_> {
    fn run(self, accelerate: bool) -> Result<RunTrace, EngineError> {
        let data = self.data;
        let spec = self.spec;
        let stop = self.stop;
        let n = data.n();
        let p = data.p();
        let start = Instant::now();

        let beta0 = match self.warm_start {
            Some(b) => b,
            None => init_beta(data, self.cache, spec)?,
        };
        let mut state = SmemState::new(n, p);
        state.beta = beta0;
        prune(&mut state, spec);
        if state.active.is_empty() {
            return Err(EngineError::AllCoordinatesPruned);
        }

        let mut records = Vec::with_capacity(stop.max_iter + 1);
        let push = |rec_iter: usize,
                        beta: &[f64],
                        active: &[usize],
                        mstep_s: Option<f64>,
                        elapsed: f64,
                        records: &mut Vec<TraceRecord>| {
            let mut extra = probe_extras(data, spec, beta, active, &self.opts.probe_obs);
            if let Some(t) = mstep_s {
                if self.opts.record_mstep_time {
                    extra.push(("mstep_s".to_string(), t));
                }
            }
            records.push(TraceRecord {
                iter: rec_iter,
                objective: regularized_objective(data, spec, beta),
                elapsed_s: elapsed,
                active_set_size: active.len(),
                extra,
            });
        };
        push(0, &state.beta, &state.active, None, 0.0, &mut records);

        let seq = if accelerate { Some(nesterov_seq(stop.max_iter.max(1))) } else { None };
        // main iterate (the accelerated variant solves at the extrapolated
        // point held in `state.beta`)
        let mut main_beta = state.beta.clone();
        let mut converged = false;

        for t in 1..=stop.max_iter {
            prune(&mut state, spec);
            if state.active.is_empty() {
                return Err(EngineError::AllCoordinatesPruned);
            }
            if accelerate {
                // keep the main iterate consistent with pruning
                for (j, b) in main_beta.iter_mut().enumerate() {
                    if !state.active.contains(&j) {
                        *b = 0.0;
                    }
                }
            }
            let es = estep(&state, data, spec);
            let m0 = Instant::now();
            let beta_next = mstep(&es, self.cache, spec, &state.active)?;
            let mstep_s = m0.elapsed().as_secs_f64();
            state.obs_weights = es.obs_weights;
            state.param_weights = es.param_weights;
            state.iter = t;

            if let Some(seq) = &seq {
                let mu = seq.extrapolation(t);
                let extrapolated: Vec<f64> = beta_next
                    .iter()
                    .zip(&main_beta)
                    .map(|(next, prev)| next + mu * (next - prev))
                    .collect();
                main_beta = beta_next;
                state.beta = extrapolated;
            } else {
                state.beta = beta_next.clone();
                main_beta = beta_next;
            }

            push(
                t,
                &main_beta,
                &state.active,
                Some(mstep_s),
                start.elapsed().as_secs_f64(),
                &mut records,
            );

            let cur = records[records.len() - 1].objective;
            let prev = records[records.len() - 2].objective;
            if stop.rel_obj_tol > 0.0 && (prev - cur).abs() <= stop.rel_obj_tol * prev.abs().max(1.0)
            {
                converged = true;
                break;
            }
            if stop.abs_grad_tol > 0.0
                && grad_inf_norm(data, spec, &main_beta) <= stop.abs_grad_tol
            {
                converged = true;
                break;
            }
        }

        Ok(RunTrace { records, final_beta: main_beta, converged })
    }
}

/// Full-batch EM. The recorded objective is nonincreasing (to numerical
/// precision) and coordinates marked by an infinite parameter weight are
/// zeroed and never re-enter the active set.
pub fn run_smem(
    data: &Dataset,
    spec: &MixtureSpec,
    stop: &StoppingRule,
) -> Result<RunTrace, EngineError> {
    run_smem_with(data, spec, stop, &RunOptions::default())
}

pub fn run_smem_with(
    data: &Dataset,
    spec: &MixtureSpec,
    stop: &StoppingRule,
    opts: &RunOptions,
) -> Result<RunTrace, EngineError> {
    let cache = GramCache::new(data.x.clone());
    Runner { data, cache: &cache, spec, stop, opts, warm_start: None }.run(false)
}

/// EM with Nesterov extrapolation: each iteration solves at the extrapolated
/// point, then combines with coefficients (λ_s−1)/λ_{s+1} from the step
/// sequence. The objective is recorded at the main iterate; monotonicity is
/// not guaranteed (the price of acceleration).
pub fn run_smem_nesterov(
    data: &Dataset,
    spec: &MixtureSpec,
    stop: &StoppingRule,
) -> Result<RunTrace, EngineError> {
    run_smem_nesterov_with(data, spec, stop, &RunOptions::default())
}

pub fn run_smem_nesterov_with(
    data: &Dataset,
    spec: &MixtureSpec,
    stop: &StoppingRule,
    opts: &RunOptions,
) -> Result<RunTrace, EngineError> {
    let cache = GramCache::new(data.x.clone());
    Runner { data, cache: &cache, spec, stop, opts, warm_start: None }.run(true)
}

/// One fit along a regularization path.
#[derive(Debug, Clone)]
pub struct RegPathFit {
    pub penalty: f64,
    pub beta: Vec<f64>,
    pub final_nll: f64,
    pub elapsed_s: f64,
    pub iterations: usize,
}

impl MixtureSpec {
    /// Reinterpret a path precision value for this spec's penalty family:
    /// the effective ridge precision for Ridge, τ⁻² for the adaptive
    /// penalties.
    pub fn with_penalty_value(&self, precision: f64) -> Self {
        let mut out = *self;
        match &mut out.penalty {
            PenaltyFamily::Ridge { .. } => out.prior_precision = precision,
            PenaltyFamily::Lasso { tau } | PenaltyFamily::DoublePareto { tau, .. } => {
                *tau = 1.0 / precision.sqrt();
            }
        }
        out
    }
}

/// Fits along a decreasing grid of prior precisions. The sufficient
/// statistics (the Gram cache) are built once and shared; each penalty
/// warm-starts from the previous penalty's solution, so later fits need only
/// a handful of sweeps. With a single penalty value this is exactly
/// [`run_smem`].
pub fn reg_path(
    data: &Dataset,
    spec_template: &MixtureSpec,
    penalties: &[f64],
    stop: &StoppingRule,
) -> Result<Vec<RegPathFit>, EngineError> {
    assert!(!penalties.is_empty());
    debug_assert!(penalties.windows(2).all(|w| w[0] >= w[1]), "penalties must decrease");
    let cache = GramCache::new(data.x.clone());
    let opts = RunOptions::default();
    let mut warm: Option<Vec<f64>> = None;
    let mut out = Vec::with_capacity(penalties.len());
    for &pen in penalties {
        let spec = spec_template.with_penalty_value(pen);
        let t0 = Instant::now();
        let trace = Runner {
            data,
            cache: &cache,
            spec: &spec,
            stop,
            opts: &opts,
            warm_start: warm.clone(),
        }
        .run(false)?;
        let elapsed_s = t0.elapsed().as_secs_f64();
        warm = Some(trace.final_beta.clone());
        out.push(RegPathFit {
            penalty: pen,
            final_nll: mean_nll(data, spec.loss, &trace.final_beta),
            iterations: trace.records.last().unwrap().iter,
            beta: trace.final_beta,
            elapsed_s,
        });
    }
    Ok(out)
}
