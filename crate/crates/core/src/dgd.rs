//! Decentralized gradient descent `x⁺ = W_D x − α∇F_c(x)` and its auxiliary
//! function `L_α(x) = F_c(x) + (1/2α) xᵀ(I − W_D)x`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::netweights::MixingMatrix;
use crate::problems::{AnnulusCertificate, CriticalKind, ProblemInstance};
use crate::rng::{self, rng, stream};
use crate::trace::{self, Algorithm, RunOptions, Termination, Trace, TraceRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct DgdState {
    pub x: DVector<f64>,
    pub iter: usize,
}

impl DgdState {
    pub fn new(x: DVector<f64>) -> Self {
        DgdState { x, iter: 0 }
    }
}

fn check_sizes(x: &DVector<f64>, d: &MixingMatrix, problem: &ProblemInstance) -> Result<()> {
    if d.n() != problem.n || x.len() != problem.n * problem.m {
        return Err(Error::Shape(format!(
            "state of length {} and {}×{} weights do not match n={}, m={}",
            x.len(),
            d.n(),
            d.n(),
            problem.n,
            problem.m
        )));
    }
    Ok(())
}

/// One DGD round.
pub fn dgd_step(state: &DgdState, d: &MixingMatrix, problem: &ProblemInstance, alpha: f64) -> Result<DgdState> {
    check_sizes(&state.x, d, problem)?;
    let g = problem.gradient_c(&state.x);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { iter: state.iter });
    }
    let x = linalg::mix(&d.entries, &state.x, problem.m) - g * alpha;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { iter: state.iter + 1 });
    }
    Ok(DgdState { x, iter: state.iter + 1 })
}

/// `L_α(x)`.
pub fn lyapunov_l_alpha(x: &DVector<f64>, d: &MixingMatrix, alpha: f64, problem: &ProblemInstance) -> f64 {
    let wx = linalg::mix(&d.entries, x, problem.m);
    problem.value_c(x) + x.dot(&(x - wx)) / (2.0 * alpha)
}

/// `∇L_α(x) = ∇F_c(x) + (1/α)(I − W_D)x`.
pub fn grad_l_alpha(x: &DVector<f64>, d: &MixingMatrix, alpha: f64, problem: &ProblemInstance) -> DVector<f64> {
    let wx = linalg::mix(&d.entries, x, problem.m);
    problem.gradient_c(x) + (x - wx) / alpha
}

/// `∇²L_α(x) = ∇²F_c(x) + (1/α)(I − W_D)`.
pub fn hessian_l_alpha(x: &DVector<f64>, d: &MixingMatrix, alpha: f64, problem: &ProblemInstance) -> DMatrix<f64> {
    let nm = x.len();
    let w = linalg::kron_identity(&d.entries, problem.m);
    problem.hessian_c(x) + (DMatrix::<f64>::identity(nm, nm) - w) / alpha
}

/// `σ_min(I + D)/L_c`.
pub fn alpha_max(d: &MixingMatrix, l_c: f64) -> Result<f64> {
    if !(l_c > 0.0) {
        return Err(Error::Parameter(format!("L_c must be positive, got {l_c}")));
    }
    let n = d.n();
    Ok(linalg::sigma_min(&(DMatrix::<f64>::identity(n, n) + &d.entries)) / l_c)
}

/// `σ_min(D)/L_c`, the step rule used for second-order presets.
pub fn alpha_second_order(d: &MixingMatrix, l_c: f64) -> Result<f64> {
    if !(l_c > 0.0) {
        return Err(Error::Parameter(format!("L_c must be positive, got {l_c}")));
    }
    Ok(linalg::sigma_min(&d.entries) / l_c)
}

/// Per-agent almost-consensus bound `σ₂^ν‖x_i⁰‖ + αH/(1−σ₂)`.
pub fn consensus_bound(nu: usize, sigma2: f64, h: f64, alpha: f64, x0_norms: &[f64]) -> Vec<f64> {
    let decay = sigma2.powi(nu as i32);
    let floor = alpha * h / (1.0 - sigma2);
    x0_norms.iter().map(|v| decay * v + floor).collect()
}

/// `K' = n√n·L_c·H/(1−σ₂)`.
pub fn eps_crit_constant(n: usize, l_c: f64, h: f64, sigma2: f64) -> f64 {
    let n = n as f64;
    n * n.sqrt() * l_c * h / (1.0 - sigma2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaB {
    pub value: f64,
    /// Sampled `max_i sup_{‖θ‖≤R} ‖∇f_i(θ)‖`.
    pub h: f64,
    pub certified: bool,
}

/// Ball-invariance step threshold `min_i min{εD_ii/h, 2D_iiδ(R−ε)/h²}`.
pub fn alpha_b(problem: &ProblemInstance, d: &MixingMatrix, cert: &AnnulusCertificate, samples: usize, seed: u64) -> AlphaB {
    let (r, eps) = (cert.r, cert.eps);
    let mut g = rng(seed, stream::SAMPLE);
    let mut h: f64 = 0.0;
    for k in 0..samples {
        let theta = if k % 2 == 0 { rng::unit_vector(&mut g, problem.m) * r } else { rng::uniform_ball(&mut g, problem.m, r) };
        for l in &problem.locals {
            h = h.max(l.gradient(&theta).norm());
        }
    }
    if !cert.certified || !(cert.delta > 0.0) || h == 0.0 {
        return AlphaB { value: 0.0, h, certified: false };
    }
    let value = d
        .entries
        .diagonal()
        .iter()
        .map(|&dii| (eps * dii / h).min(2.0 * dii * cert.delta * (r - eps) / (h * h)))
        .fold(f64::INFINITY, f64::min);
    AlphaB { value, h, certified: true }
}

fn record(
    iter: usize,
    x: &DVector<f64>,
    wx: &DVector<f64>,
    g: &DVector<f64>,
    alpha: f64,
    problem: &ProblemInstance,
    opts: &RunOptions,
) -> TraceRecord {
    let m = problem.m;
    let (cons_err, max_dev) = trace::consensus_errors(x, m);
    let x_bar = linalg::block_mean(x, m);
    let (proj_eu, dist) = trace::saddle_projections(&x_bar, &opts.saddle);
    let penalty = x - wx;
    TraceRecord {
        iter,
        lyapunov: problem.value_c(x) + x.dot(&penalty) / (2.0 * alpha),
        merit: None,
        grad_l_norm: Some((g + &penalty / alpha).norm()),
        cons_err,
        max_agent_dev: max_dev,
        grad_f_mean_norm: problem.gradient(&x_bar).norm(),
        y_bar_norm: None,
        track_residual: None,
        grad_fc_norm: g.norm(),
        proj_eu,
        dist_to_saddle: dist,
    }
}

/// Runs DGD from `x0`, stopping at `max_iters` or when `‖∇L_α‖∞ < stop_tol`.
pub fn run_dgd(problem: &ProblemInstance, d: &MixingMatrix, alpha: f64, x0: &DVector<f64>, opts: &RunOptions) -> Result<Trace> {
    check_sizes(x0, d, problem)?;
    if !(alpha > 0.0) {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    let m = problem.m;
    let stride = opts.record_stride.max(1);
    let mut x = x0.clone();
    let mut records = Vec::new();
    let mut h_sup: f64 = 0.0;
    let mut termination = Termination::MaxIters;
    let mut iter = 0;
    loop {
        let g = problem.gradient_c(&x);
        let wx = linalg::mix(&d.entries, &x, m);
        h_sup = h_sup.max(g.norm());
        let grad_l = &g + (&x - &wx) / alpha;
        let converged = linalg::norm_inf(&grad_l) < opts.stop_tol;
        let done = converged || iter >= opts.max_iters;
        if iter % stride == 0 || done {
            records.push(record(iter, &x, &wx, &g, alpha, problem, opts));
        }
        if converged {
            termination = Termination::Converged { iter };
        }
        if done {
            break;
        }
        let next = wx - g * alpha;
        if next.iter().any(|v| !v.is_finite()) || !h_sup.is_finite() {
            termination = Termination::Diverged { iter: iter + 1 };
            break;
        }
        x = next;
        iter += 1;
    }
    Ok(Trace { algo: Algorithm::Dgd, records, x0: x0.clone(), x, y: None, iterations: iter, termination, h_sup })
}

/// Verdict of the DGD limit-point versus strict-saddle link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleLinkVerdict {
    pub dist_condition: bool,
    pub consensus_condition: bool,
    pub nearest_is_saddle: bool,
    /// `υᵀ∇²F(θ*)υ + L_∇²‖x̄−θ*‖ + nL_∇²c‖x−1⊗x̄‖`.
    pub test_vector_bound: Option<f64>,
    /// `(1⊗υ)ᵀ∇²L_α(x)(1⊗υ)/n`.
    pub rayleigh: Option<f64>,
    pub lambda_min: Option<f64>,
    /// `Some(true)` when all conditions hold and the eigensolve confirms.
    pub strict_saddle_of_l_alpha: Option<bool>,
}

/// Checks whether a near-stationary DGD iterate sits at a strict saddle of
/// `L_α` by the curvature-transfer argument from `F` to `L_α`.
pub fn dgd_saddle_link(x_limit: &DVector<f64>, problem: &ProblemInstance, d: &MixingMatrix, alpha: f64) -> Result<SaddleLinkVerdict> {
    check_sizes(x_limit, d, problem)?;
    let m = problem.m;
    let n = problem.n;
    let x_bar = linalg::block_mean(x_limit, m);
    let nearest = problem
        .critical_points
        .iter()
        .min_by(|a, b| (&a.theta - &x_bar).norm().partial_cmp(&(&b.theta - &x_bar).norm()).unwrap());
    let Some(crit) = nearest else {
        return Ok(SaddleLinkVerdict {
            dist_condition: false,
            consensus_condition: false,
            nearest_is_saddle: false,
            test_vector_bound: None,
            rayleigh: None,
            lambda_min: None,
            strict_saddle_of_l_alpha: None,
        });
    };
    let delta = -crit.lambda_min;
    let sm = &problem.smoothness;
    let dist = (&x_bar - &crit.theta).norm();
    let cons = (x_limit - linalg::replicate(&x_bar, n)).norm();
    let nearest_is_saddle = crit.kind == CriticalKind::StrictSaddle && delta > 0.0;
    let dist_condition = nearest_is_saddle && (sm.l_hess == 0.0 || dist < delta / (2.0 * sm.l_hess));
    let consensus_condition = nearest_is_saddle && (sm.l_hess_c == 0.0 || cons < delta / (2.0 * n as f64 * sm.l_hess_c));
    if !(dist_condition && consensus_condition && nearest_is_saddle) {
        return Ok(SaddleLinkVerdict {
            dist_condition,
            consensus_condition,
            nearest_is_saddle,
            test_vector_bound: None,
            rayleigh: None,
            lambda_min: None,
            strict_saddle_of_l_alpha: None,
        });
    }
    let ups = crit.u_u.normalize();
    let bound = ups.dot(&(problem.hessian(&crit.theta) * &ups)) + sm.l_hess * dist + n as f64 * sm.l_hess_c * cons;
    let hess = hessian_l_alpha(x_limit, d, alpha, problem);
    let v = linalg::replicate(&ups, n);
    let rayleigh = v.dot(&(&hess * &v)) / n as f64;
    let (vals, _) = linalg::sym_eigen_sorted(&hess);
    Ok(SaddleLinkVerdict {
        dist_condition,
        consensus_condition,
        nearest_is_saddle,
        test_vector_bound: Some(bound),
        rayleigh: Some(rayleigh),
        lambda_min: Some(vals[0]),
        strict_saddle_of_l_alpha: Some(bound < 0.0 && vals[0] < 0.0),
    })
}

/// `M(x) = max(dist(x̄, SoS), ‖x − 1⊗x̄‖)` over registered local minima
/// (distance is `+∞` when none are registered).
pub fn merit_sos(x: &DVector<f64>, problem: &ProblemInstance) -> f64 {
    let m = problem.m;
    let x_bar = linalg::block_mean(x, m);
    let dist = problem
        .critical_points
        .iter()
        .filter(|c| c.kind == CriticalKind::LocalMinCandidate)
        .map(|c| (&c.theta - &x_bar).norm())
        .fold(f64::INFINITY, f64::min);
    dist.max((x - linalg::replicate(&x_bar, problem.n)).norm())
}
