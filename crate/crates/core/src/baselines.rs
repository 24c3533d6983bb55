//! Reference first-order optimizers used for comparison: Adam/AdamW, SGD
//! with heavy-ball or Nesterov momentum, and proximal Robbins–Monro
//! (implicit SGD solved by one Newton step per batch).

use crate::engine::{regularized_objective, EngineError, MixtureSpec, RunTrace, TraceRecord};
use crate::kernels::{sigmoid, LossFamily};
use crate::linalg::{CholeskyFactor, DenseMatrix};
use crate::prox::nesterov_seq;
use crate::synth::{seeded_rng, Dataset};
use rand::Rng;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Decoupled weight decay (multiply θ by 1−λ before the adaptive step).
    pub decoupled: bool,
}

impl AdamConfig {
    /// (β₁, β₂, ε) = (0.9, 0.999, 1e-8), no weight decay.
    pub fn default_with_lr(alpha: f64) -> Self {
        Self { alpha, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0, decoupled: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentumMode {
    HeavyBall,
    Nesterov,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumConfig {
    pub alpha: f64,
    pub mu: f64,
    pub mode: MomentumMode,
}

/// Implicit SGD with the schedule α_t = c/√(1+t), each update solved by one
/// Newton step on the batch. `nesterov` applies the accelerated
/// extrapolation sequence across steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrmConfig {
    pub step_scale: f64,
    pub nesterov: bool,
}

/// Optimizer state shared by the baseline families: parameters, Adam moment
/// vectors, the previous iterate for momentum, and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub theta: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub prev_theta: Vec<f64>,
    pub t: usize,
}

impl OptState {
    pub fn new(p: usize) -> Self {
        Self { theta: vec![0.0; p], m: vec![0.0; p], v: vec![0.0; p], prev_theta: vec![0.0; p], t: 0 }
    }

    pub fn from_theta(theta: Vec<f64>) -> Self {
        let p = theta.len();
        Self { prev_theta: theta.clone(), theta, m: vec![0.0; p], v: vec![0.0; p], t: 0 }
    }
}

/// One Adam/AdamW update with bias-corrected moments
/// m̂ = m/(1−β₁ᵗ), v̂ = v/(1−β₂ᵗ).
pub fn adam_step(state: &OptState, g: &[f64], cfg: &AdamConfig) -> OptState {
    assert_eq!(g.len(), state.theta.len());
    let t = state.t + 1;
    let mut out = state.clone();
    out.prev_theta = state.theta.clone();
    out.t = t;
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for j in 0..g.len() {
        out.m[j] = cfg.beta1 * state.m[j] + (1.0 - cfg.beta1) * g[j];
        out.v[j] = cfg.beta2 * state.v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
        let m_hat = out.m[j] / bc1;
        let v_hat = out.v[j] / bc2;
        let mut theta = state.theta[j];
        if cfg.decoupled {
            theta *= 1.0 - cfg.weight_decay;
        }
        out.theta[j] = theta - cfg.alpha * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    out
}

/// Heavy-ball: θ⁺ = θ − α∇f(θ) + μ(θ − θ_prev).
/// Nesterov: v = θ + μ(θ − θ_prev), θ⁺ = v − α∇f(v).
pub fn momentum_step(
    state: &OptState,
    grad_fn: impl Fn(&[f64]) -> Vec<f64>,
    cfg: &MomentumConfig,
) -> OptState {
    let p = state.theta.len();
    let mut out = state.clone();
    out.prev_theta = state.theta.clone();
    out.t = state.t + 1;
    match cfg.mode {
        MomentumMode::HeavyBall => {
            let g = grad_fn(&state.theta);
            for j in 0..p {
                out.theta[j] = state.theta[j] - cfg.alpha * g[j]
                    + cfg.mu * (state.theta[j] - state.prev_theta[j]);
            }
        }
        MomentumMode::Nesterov => {
            let lookahead: Vec<f64> = (0..p)
                .map(|j| state.theta[j] + cfg.mu * (state.theta[j] - state.prev_theta[j]))
                .collect();
            let g = grad_fn(&lookahead);
            for j in 0..p {
                out.theta[j] = lookahead[j] - cfg.alpha * g[j];
            }
        }
    }
    out
}

/// One implicit update θ⁺ = θ − α_t·(I + α_t·H)⁻¹∇ℓ(θ) with
/// α_t = c/√(1+t); exact for quadratic losses.
pub fn prm_step(
    state: &OptState,
    grad_and_hessian: impl Fn(&[f64]) -> (Vec<f64>, DenseMatrix),
    cfg: &PrmConfig,
) -> Result<OptState, EngineError> {
    let p = state.theta.len();
    let alpha = cfg.step_scale / (1.0 + state.t as f64).sqrt();
    let (g, h) = grad_and_hessian(&state.theta);
    let mut sys = DenseMatrix::identity(p);
    for i in 0..p {
        for j in 0..p {
            sys.set(i, j, sys.get(i, j) + alpha * h.get(i, j));
        }
    }
    let dir = CholeskyFactor::new(&sys)?.solve(&g)?;
    let mut out = state.clone();
    out.prev_theta = state.theta.clone();
    out.t = state.t + 1;
    for j in 0..p {
        out.theta[j] = state.theta[j] - alpha * dir[j];
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineMethod {
    Adam(AdamConfig),
    Momentum(MomentumConfig),
    Prm(PrmConfig),
}

#[derive(Debug, Clone, Default)]
pub struct BaselineOptions {
    /// Coordinates whose Adam second-moment estimate is recorded each epoch
    /// as `v_<j>`.
    pub probe_coords: Vec<usize>,
}

/// Gradient of the mean regularized objective estimated on a batch.
fn batch_gradient(data: &Dataset, spec: &MixtureSpec, theta: &[f64], batch: &[usize]) -> Vec<f64> {
    let p = data.p();
    let n = data.n() as f64;
    let b = batch.len() as f64;
    let mut g = vec![0.0; p];
    for &i in batch {
        let row = data.x.row(i);
        let z: f64 = row.iter().zip(theta).map(|(a, c)| a * c).sum();
        let coeff = match spec.loss {
            LossFamily::Logistic => data.m[i] * sigmoid(z) - data.y[i],
            LossFamily::Squared => z - data.y[i],
            LossFamily::Check { q } => {
                let r = data.y[i] - z;
                -(crate::kernels::loss_value_grad(LossFamily::Check { q }, r, data.m[i]).1)
            }
            LossFamily::Hinge => {
                let ys = 2.0 * data.y[i] - 1.0;
                if 1.0 - ys * z > 0.0 {
                    -ys
                } else {
                    0.0
                }
            }
        };
        for (gj, xj) in g.iter_mut().zip(row) {
            *gj += coeff * xj;
        }
    }
    for gj in g.iter_mut() {
        *gj /= b;
    }
    for (gj, th) in g.iter_mut().zip(theta) {
        *gj += spec.penalty_gradient(*th) / n;
    }
    g
}

/// Exact batch Hessian of the mean regularized objective (smooth losses;
/// the kinked losses contribute only the penalty curvature).
fn batch_hessian(data: &Dataset, spec: &MixtureSpec, theta: &[f64], batch: &[usize]) -> DenseMatrix {
    let p = data.p();
    let n = data.n() as f64;
    let b = batch.len() as f64;
    let mut h = DenseMatrix::zeros(p, p);
    for &i in batch {
        let row = data.x.row(i);
        let z: f64 = row.iter().zip(theta).map(|(a, c)| a * c).sum();
        let w = match spec.loss {
            LossFamily::Logistic => {
                let pr = sigmoid(z);
                data.m[i] * pr * (1.0 - pr)
            }
            LossFamily::Squared => 1.0,
            _ => 0.0,
        } / b;
        if w == 0.0 {
            continue;
        }
        for j in 0..p {
            let c = w * row[j];
            for k in j..p {
                let v = h.get(j, k) + c * row[k];
                h.set(j, k, v);
                if j != k {
                    h.set(k, j, v);
                }
            }
        }
    }
    if let crate::kernels::PenaltyFamily::Ridge { .. } = spec.penalty {
        for j in 0..p {
            h.set(j, j, h.get(j, j) + spec.prior_precision / n);
        }
    }
    h
}

fn shuffled_indices(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    // one shuffle per epoch from a generator keyed by (seed, epoch)
    let mut rng = seeded_rng(seed, 1000 + epoch as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Mini-batch run of a baseline optimizer on the mean regularized objective.
/// The batch order is a per-epoch shuffle keyed by (seed, epoch), so traces
/// are bit-identical for a fixed seed; the full-data objective is recorded
/// once per epoch.
pub fn run_baseline(
    data: &Dataset,
    spec: &MixtureSpec,
    method: BaselineMethod,
    epochs: usize,
    batch_size: usize,
    seed: u64,
) -> Result<RunTrace, EngineError> {
    run_baseline_with(data, spec, method, epochs, batch_size, seed, &BaselineOptions::default())
}

pub fn run_baseline_with(
    data: &Dataset,
    spec: &MixtureSpec,
    method: BaselineMethod,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    opts: &BaselineOptions,
) -> Result<RunTrace, EngineError> {
    let n = data.n();
    let p = data.p();
    assert!(batch_size >= 1 && batch_size <= n, "batch size must be in [1, n]");
    let start = Instant::now();
    let mut state = OptState::new(p);
    let steps_per_epoch = n.div_ceil(batch_size);
    let accel = match method {
        BaselineMethod::Prm(cfg) if cfg.nesterov => {
            Some(nesterov_seq((epochs * steps_per_epoch).max(1)))
        }
        _ => None,
    };
    // main iterate for the accelerated variant (state.theta holds the
    // extrapolation point)
    let mut main_theta = state.theta.clone();

    let mut records = Vec::with_capacity(epochs + 1);
    let push = |epoch: usize, theta: &[f64], st: &OptState, elapsed: f64, recs: &mut Vec<TraceRecord>| {
        let extra = opts
            .probe_coords
            .iter()
            .map(|&j| (format!("v_{j}"), st.v[j]))
            .collect();
        recs.push(TraceRecord {
            iter: epoch,
            objective: regularized_objective(data, spec, theta),
            elapsed_s: elapsed,
            active_set_size: p,
            extra,
        });
    };
    push(0, &main_theta, &state, 0.0, &mut records);

    let mut step_index = 0usize;
    for epoch in 0..epochs {
        let order = shuffled_indices(n, seed, epoch);
        for batch in order.chunks(batch_size) {
            match method {
                BaselineMethod::Adam(cfg) => {
                    let g = batch_gradient(data, spec, &state.theta, batch);
                    state = adam_step(&state, &g, &cfg);
                    main_theta = state.theta.clone();
                }
                BaselineMethod::Momentum(cfg) => {
                    state = momentum_step(
                        &state,
                        |theta| batch_gradient(data, spec, theta, batch),
                        &cfg,
                    );
                    main_theta = state.theta.clone();
                }
                BaselineMethod::Prm(cfg) => {
                    let next = prm_step(
                        &state,
                        |theta| {
                            (
                                batch_gradient(data, spec, theta, batch),
                                batch_hessian(data, spec, theta, batch),
                            )
                        },
                        &cfg,
                    )?;
                    if let Some(seq) = &accel {
                        step_index += 1;
                        let mu = seq.extrapolation(step_index);
                        let solved = next.theta.clone();
                        let extrapolated: Vec<f64> = solved
                            .iter()
                            .zip(&main_theta)
                            .map(|(cur, prev)| cur + mu * (cur - prev))
                            .collect();
                        main_theta = solved;
                        state = next;
                        state.theta = extrapolated;
                    } else {
                        state = next;
                        main_theta = state.theta.clone();
                    }
                }
            }
        }
        push(epoch + 1, &main_theta, &state, start.elapsed().as_secs_f64(), &mut records);
    }
    Ok(RunTrace { records, final_beta: main_theta, converged: false })
}
