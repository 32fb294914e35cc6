//! Second-order diagnostics for the tracking map in `(x, h)` coordinates,
//! `h = y − ∇F_c(x)`:
//!
//! ```text
//! x⁺ = W_R x − α(h + ∇F_c(x))
//! h⁺ = W_C h + (W_C − I)∇F_c(x)
//! ```
//!
//! The map leaves `S = R^{nm} × span(W_C − I)` invariant; Jacobians are
//! restricted to `S` through an orthonormal basis before eigensolving.

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgd;
use crate::dogt::{self, DogtOptions, YInit};
use crate::error::{Error, Result};
use crate::linalg;
use crate::netweights::{self, MixingMatrix};
use crate::problems::{self, CriticalKind, ProblemInstance};
use crate::rng::{self, rng, stream};
use crate::trace::{Algorithm, RunOptions, SaddleRef, Trace};

/// Spectral radius above which a fixed point counts as unstable.
pub const UNSTABLE_MARGIN: f64 = 1e-9;
/// Tolerance for the fixed-point residual relative to `1 + ‖u*‖`.
pub const FIXED_POINT_TOL: f64 = 1e-10;

/// A consensual critical point embedded in the `(x, h)` state space.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensualSaddle {
    pub theta_star: DVector<f64>,
    /// `(1⊗θ*, −∇F_c(1⊗θ*))`.
    pub u_star: DVector<f64>,
    pub lambda_min: f64,
    pub u_u: DVector<f64>,
    pub kind: CriticalKind,
}

impl ConsensualSaddle {
    pub fn x(&self) -> DVector<f64> {
        let nm = self.u_star.len() / 2;
        self.u_star.rows(0, nm).into_owned()
    }

    pub fn reference(&self) -> SaddleRef {
        SaddleRef { theta: self.theta_star.clone(), u_u: self.u_u.clone() }
    }
}

/// One step of the map in `(x, h)` coordinates.
pub fn g_map(u: &DVector<f64>, r: &MixingMatrix, c: &MixingMatrix, alpha: f64, problem: &ProblemInstance) -> DVector<f64> {
    let nm = problem.n * problem.m;
    let m = problem.m;
    let x = u.rows(0, nm).into_owned();
    let h = u.rows(nm, nm).into_owned();
    let g = problem.gradient_c(&x);
    let x_next = linalg::mix(&r.entries, &x, m) - (&h + &g) * alpha;
    let h_next = linalg::mix(&c.entries, &h, m) + linalg::mix(&c.entries, &g, m) - &g;
    let mut out = DVector::zeros(2 * nm);
    out.rows_mut(0, nm).copy_from(&x_next);
    out.rows_mut(nm, nm).copy_from(&h_next);
    out
}

/// `‖g(u) − u‖`.
pub fn fixed_point_residual(u: &DVector<f64>, r: &MixingMatrix, c: &MixingMatrix, alpha: f64, problem: &ProblemInstance) -> f64 {
    (g_map(u, r, c, alpha, problem) - u).norm()
}

/// Embeds any stationary `θ` without requiring it to be a saddle.
pub fn embed_consensual_point(problem: &ProblemInstance, theta: &DVector<f64>) -> Result<ConsensualSaddle> {
    let class = problems::classify_critical(problem, theta, 0.0)?;
    let x = linalg::replicate(theta, problem.n);
    let h = -problem.gradient_c(&x);
    let nm = x.len();
    let mut u = DVector::zeros(2 * nm);
    u.rows_mut(0, nm).copy_from(&x);
    u.rows_mut(nm, nm).copy_from(&h);
    Ok(ConsensualSaddle { theta_star: theta.clone(), u_star: u, lambda_min: class.lambda_min, u_u: class.u_u, kind: class.kind })
}

/// Embeds a strict saddle `θ*` and verifies the fixed-point property.
pub fn embed_consensual_saddle(
    problem: &ProblemInstance,
    theta_star: &DVector<f64>,
    r: &MixingMatrix,
    c: &MixingMatrix,
    alpha: f64,
) -> Result<ConsensualSaddle> {
    let s = embed_consensual_point(problem, theta_star)?;
    if s.kind != CriticalKind::StrictSaddle {
        return Err(Error::Classification(format!("not a strict saddle: λ_min = {:e}", s.lambda_min)));
    }
    let res = fixed_point_residual(&s.u_star, r, c, alpha, problem);
    if res > FIXED_POINT_TOL * (1.0 + s.u_star.norm()) {
        return Err(Error::Validation(format!("embedded saddle is not a fixed point: residual {res:e}")));
    }
    Ok(s)
}

/// Orthonormal basis of `span((C − I) ⊗ I_m)`; its dimension must be `m(n−1)`.
pub fn basis_span(c: &MixingMatrix, m: usize) -> Result<DMatrix<f64>> {
    let n = c.n();
    let b = linalg::range_basis(&(&c.entries - DMatrix::identity(n, n)), 1e-10);
    if b.ncols() != n - 1 {
        return Err(Error::Degenerate(format!("rank(W_C − I) = {} but m(n−1) = {} expected", b.ncols() * m, (n - 1) * m)));
    }
    Ok(linalg::kron_identity(&b, m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBundle {
    /// Full `2nm × 2nm` differential.
    pub dg_tilde: DMatrix<f64>,
    pub u_h: DMatrix<f64>,
    /// `Uᵀ Dg̃ U` with `U = diag(I, U_h)`, of size `(2n−1)m`.
    pub projected: DMatrix<f64>,
    pub spectrum: Vec<Complex<f64>>,
}

impl JacobianBundle {
    pub fn spectral_radius(&self) -> f64 {
        self.spectrum.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// `U = diag(I_{nm}, U_h)`.
pub fn lift_matrix(u_h: &DMatrix<f64>) -> DMatrix<f64> {
    let nm = u_h.nrows();
    let k = u_h.ncols();
    let mut u = DMatrix::zeros(2 * nm, nm + k);
    u.view_mut((0, 0), (nm, nm)).fill_with_identity();
    u.view_mut((nm, nm), (nm, k)).copy_from(u_h);
    u
}

/// Full and projected differentials of the map at state `x`.
pub fn assemble_dg(x: &DVector<f64>, r: &MixingMatrix, c: &MixingMatrix, alpha: f64, problem: &ProblemInstance) -> Result<JacobianBundle> {
    let m = problem.m;
    let nm = problem.n * m;
    if x.len() != nm || r.n() != problem.n || c.n() != problem.n {
        return Err(Error::Shape("state or weights do not match the problem".into()));
    }
    let hess = problem.hessian_c(x);
    let wr = linalg::kron_identity(&r.entries, m);
    let wc = linalg::kron_identity(&c.entries, m);
    let eye = DMatrix::<f64>::identity(nm, nm);
    let mut dg = DMatrix::zeros(2 * nm, 2 * nm);
    dg.view_mut((0, 0), (nm, nm)).copy_from(&(&wr - &hess * alpha));
    dg.view_mut((0, nm), (nm, nm)).copy_from(&(-&eye * alpha));
    dg.view_mut((nm, 0), (nm, nm)).copy_from(&((&wc - &eye) * &hess));
    dg.view_mut((nm, nm), (nm, nm)).copy_from(&wc);
    let u_h = basis_span(c, m)?;
    let u = lift_matrix(&u_h);
    let projected = u.transpose() * &dg * &u;
    let spectrum = linalg::eigenvalues(&projected);
    Ok(JacobianBundle { dg_tilde: dg, u_h, projected, spectrum })
}

/// Which hypothesis the instability argument rests on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstabilityCondition {
    SymmetricWeights,
    ScalarDimension,
    /// Only the lazy-weights route applies; the verdict is numerical.
    Conditional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstabilityCertificate {
    pub fixed_point_residual: f64,
    pub spradii: f64,
    pub unstable: bool,
    pub witness_eigenvalue: (f64, f64),
    /// `‖Dg̃ w − λw‖/‖w‖` for the lifted witness `w = Uv`.
    pub witness_residual: f64,
    /// `‖(I − P_S) w‖/‖w‖`.
    pub membership_residual: f64,
    pub condition: InstabilityCondition,
}

/// Real eigenvector (or real/imaginary pair) for the eigenvalue `lam`.
fn eigvec(a: &DMatrix<f64>, lam: Complex<f64>) -> (DVector<f64>, DVector<f64>) {
    let k = a.nrows();
    let shifted = a - DMatrix::identity(k, k) * lam.re;
    if lam.im.abs() < 1e-14 {
        let (v, _) = linalg::null_vector(&shifted);
        return (v, DVector::zeros(k));
    }
    let mut big = DMatrix::zeros(2 * k, 2 * k);
    big.view_mut((0, 0), (k, k)).copy_from(&shifted);
    big.view_mut((k, k), (k, k)).copy_from(&shifted);
    big.view_mut((0, k), (k, k)).copy_from(&(DMatrix::identity(k, k) * lam.im));
    big.view_mut((k, 0), (k, k)).copy_from(&(DMatrix::identity(k, k) * -lam.im));
    let (v, _) = linalg::null_vector(&big);
    (v.rows(0, k).into_owned(), v.rows(k, k).into_owned())
}

/// Eigensolve of the projected differential at `u*`.
pub fn instability_certificate(saddle: &ConsensualSaddle, r: &MixingMatrix, c: &MixingMatrix, alpha: f64, problem: &ProblemInstance) -> Result<InstabilityCertificate> {
    let x = saddle.x();
    let bundle = assemble_dg(&x, r, c, alpha, problem)?;
    let lam = bundle
        .spectrum
        .iter()
        .copied()
        .max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap())
        .unwrap_or(Complex::new(0.0, 0.0));
    let (vr, vi) = eigvec(&bundle.projected, lam);
    let u = lift_matrix(&bundle.u_h);
    let (wr, wi) = (&u * vr, &u * vi);
    let (dr, di) = (&bundle.dg_tilde * &wr, &bundle.dg_tilde * &wi);
    let res_re = &dr - &wr * lam.re + &wi * lam.im;
    let res_im = &di - &wi * lam.re - &wr * lam.im;
    let wnorm = (wr.norm_squared() + wi.norm_squared()).sqrt().max(f64::MIN_POSITIVE);
    let witness_residual = (res_re.norm_squared() + res_im.norm_squared()).sqrt() / wnorm;
    let p = &u * u.transpose();
    let out_re = &wr - &p * &wr;
    let out_im = &wi - &p * &wi;
    let membership_residual = (out_re.norm_squared() + out_im.norm_squared()).sqrt() / wnorm;
    let condition = if r.is_symmetric() && c.is_symmetric() {
        InstabilityCondition::SymmetricWeights
    } else if problem.m == 1 {
        InstabilityCondition::ScalarDimension
    } else {
        InstabilityCondition::Conditional
    };
    let spradii = lam.norm();
    Ok(InstabilityCertificate {
        fixed_point_residual: fixed_point_residual(&saddle.u_star, r, c, alpha, problem),
        spradii,
        unstable: spradii > 1.0 + UNSTABLE_MARGIN,
        witness_eigenvalue: (lam.re, lam.im),
        witness_residual,
        membership_residual,
        condition,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QScan {
    pub q_at_one: f64,
    /// Hadamard bound of the matrix at `λ = 1`.
    pub scale: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// First grid cell above 1 where `Q` changes sign.
    pub bracket: Option<(f64, f64)>,
    /// Bisected root inside the bracket.
    pub root: Option<f64>,
}

fn q_matrix(lam: f64, wr: &DMatrix<f64>, wc: &DMatrix<f64>, hess: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
    let k = wr.nrows();
    let eye = DMatrix::<f64>::identity(k, k);
    (wc - &eye * lam) * (wr - &eye * lam) + hess * (alpha * (lam - 1.0))
}

/// Grid `1 + 10^s` for `s` log-spaced from `-8` to `log10(upper − 1)`.
pub fn default_q_grid(upper: f64, points: usize) -> Vec<f64> {
    let hi = (upper - 1.0).max(1e-6).log10();
    (0..points).map(|k| 1.0 + 10f64.powf(-8.0 + (hi + 8.0) * k as f64 / (points - 1).max(1) as f64)).collect()
}

/// Scans `Q(λ) = det((W_C − λI)(W_R − λI) + α(λ − 1)∇²F_c*)` on `grid`.
pub fn q_scan(saddle: &ConsensualSaddle, r: &MixingMatrix, c: &MixingMatrix, alpha: f64, problem: &ProblemInstance, grid: &[f64]) -> QScan {
    let m = problem.m;
    let hess = problem.hessian_c(&saddle.x());
    let wr = linalg::kron_identity(&r.entries, m);
    let wc = linalg::kron_identity(&c.entries, m);
    let q = |lam: f64| q_matrix(lam, &wr, &wc, &hess, alpha).determinant();
    let at_one = q_matrix(1.0, &wr, &wc, &hess, alpha);
    let scale: f64 = at_one.column_iter().map(|col| col.norm().max(f64::MIN_POSITIVE)).product();
    let values: Vec<f64> = grid.iter().map(|&l| q(l)).collect();
    let mut bracket = None;
    for k in 1..grid.len() {
        if grid[k - 1] > 1.0 && values[k - 1] != 0.0 && values[k - 1].signum() != values[k].signum() {
            bracket = Some((grid[k - 1], grid[k]));
            break;
        }
    }
    let root = bracket.map(|(mut lo, mut hi)| {
        let s_lo = q(lo).signum();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if q(mid).signum() == s_lo {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        0.5 * (lo + hi)
    });
    QScan { q_at_one: at_one.determinant(), scale, grid: grid.to_vec(), values, bracket, root }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffeoCertificate {
    pub alpha: f64,
    /// `σ_min(CR)/L_c`.
    pub bound: f64,
    pub probes: usize,
    pub min_sigma_projected: f64,
    pub min_sigma_schur: f64,
    /// Probe indices with a numerically singular differential.
    pub counterexamples: Vec<usize>,
    pub nonsingular: bool,
}

/// Samples states around the registered critical points (or the origin) and
/// checks the projected differential and its Schur reduction are nonsingular.
pub fn check_diffeomorphism(
    r: &MixingMatrix,
    c: &MixingMatrix,
    alpha: f64,
    problem: &ProblemInstance,
    probe_count: usize,
    seed: u64,
) -> Result<DiffeoCertificate> {
    let m = problem.m;
    let nm = problem.n * m;
    if linalg::sigma_min(&r.entries) < 1e-12 || linalg::sigma_min(&c.entries) < 1e-12 {
        return Err(Error::Precondition("R and C must be nonsingular".into()));
    }
    let bound = linalg::sigma_min(&(&c.entries * &r.entries)) / problem.smoothness.l_c;
    if !(alpha > 0.0 && alpha < bound) {
        return Err(Error::Inadmissible(format!("alpha = {alpha:e} outside (0, σ_min(CR)/L_c = {bound:e})")));
    }
    let centre = problem.critical_points.first().map(|c| linalg::replicate(&c.theta, problem.n)).unwrap_or_else(|| DVector::zeros(nm));
    let wc_inv = linalg::kron_identity(&c.entries.clone().try_inverse().ok_or_else(|| Error::Numerical("C inverse".into()))?, m);
    let wr = linalg::kron_identity(&r.entries, m);
    let mut g = rng(seed, stream::PROBE);
    let mut min_p = f64::INFINITY;
    let mut min_s = f64::INFINITY;
    let mut counterexamples = Vec::new();
    for k in 0..probe_count {
        let x = &centre + rng::gaussian_vector(&mut g, nm, 1.0 + centre.norm() / (nm as f64).sqrt());
        let bundle = assemble_dg(&x, r, c, alpha, problem)?;
        let sp = linalg::sigma_min(&bundle.projected);
        let schur = &wr - &wc_inv * problem.hessian_c(&x) * alpha;
        let ss = linalg::sigma_min(&schur);
        min_p = min_p.min(sp);
        min_s = min_s.min(ss);
        if sp <= 1e-10 || ss <= 1e-10 {
            counterexamples.push(k);
        }
    }
    Ok(DiffeoCertificate {
        alpha,
        bound,
        probes: probe_count,
        min_sigma_projected: min_p,
        min_sigma_schur: min_s,
        nonsingular: counterexamples.is_empty(),
        counterexamples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TBound {
    pub c_q: f64,
    pub c_p: f64,
    pub d_tilde: usize,
    pub log10_t: f64,
    /// `+∞` when the value overflows.
    pub t: f64,
}

/// Lazy-weights threshold `t ≥ (C_P + 2C_Q)^{d̃−1} C_P / (αδ/d̃)^{d̃}`, with
/// `C_Q`, `C_P` maximised over the registered strict saddles.
pub fn t_bound(problem: &ProblemInstance, r_tilde: &MixingMatrix, c_tilde: &MixingMatrix, alpha: f64, delta: f64) -> Result<TBound> {
    let m = problem.m;
    let nm = problem.n * m;
    let saddles: Vec<_> = problem.critical_points.iter().filter(|c| c.kind == CriticalKind::StrictSaddle).collect();
    if saddles.is_empty() {
        return Err(Error::Precondition("no registered strict saddle".into()));
    }
    let eye = DMatrix::<f64>::identity(nm, nm);
    let wr = linalg::kron_identity(&r_tilde.entries, m) - &eye;
    let wc = linalg::kron_identity(&c_tilde.entries, m) - &eye;
    let (mut c_q, mut c_p) = (0.0f64, 0.0f64);
    for s in saddles {
        let hess = problem.hessian_c(&linalg::replicate(&s.theta, problem.n));
        let mut q = DMatrix::zeros(2 * nm, 2 * nm);
        q.view_mut((0, 0), (nm, nm)).copy_from(&(&eye - &hess * alpha));
        q.view_mut((0, nm), (nm, nm)).copy_from(&(-&eye * alpha));
        q.view_mut((nm, nm), (nm, nm)).copy_from(&eye);
        let mut p = DMatrix::zeros(2 * nm, 2 * nm);
        p.view_mut((0, 0), (nm, nm)).copy_from(&wr);
        p.view_mut((nm, 0), (nm, nm)).copy_from(&(&wc * &hess));
        p.view_mut((nm, nm), (nm, nm)).copy_from(&wc);
        c_q = c_q.max(linalg::spectral_norm(&q));
        c_p = c_p.max(linalg::spectral_norm(&p));
    }
    Ok(t_bound_formula(c_q, c_p, 2 * nm, alpha, delta))
}

pub fn t_bound_formula(c_q: f64, c_p: f64, d_tilde: usize, alpha: f64, delta: f64) -> TBound {
    let d = d_tilde as f64;
    let ln_t = (d - 1.0) * (c_p + 2.0 * c_q).ln() + c_p.ln() - d * (alpha * delta / d).ln();
    let log10_t = ln_t / std::f64::consts::LN_10;
    TBound { c_q, c_p, d_tilde, log10_t, t: ln_t.exp() }
}

/// How the initial state of an escape run is drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct EscapeConfig {
    /// Standard deviation of the Gaussian perturbation `x_i⁰ = θ* + ε_i`.
    pub init_std: f64,
    pub num_seeds: usize,
    pub first_seed: u64,
    pub alpha: f64,
    pub iters: usize,
    pub record_stride: usize,
    /// Escape requires final/initial ratios above this factor.
    pub factor: f64,
    /// Stationarity tolerance for the second-order check.
    pub tol: f64,
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeOutcome {
    pub seed: u64,
    pub proj0: f64,
    pub proj_final: f64,
    pub dist0: f64,
    pub dist_final: f64,
    pub escaped: bool,
    /// `Some(true)` when the final mean is stationary with `λ_min ≥ −tol`.
    pub second_order: Option<bool>,
    pub merit_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EscapeReport {
    pub algo: Algorithm,
    pub frequency: f64,
    pub outcomes: Vec<EscapeOutcome>,
    pub traces: Vec<Trace>,
}

/// Initial point `1⊗θ* + ε` with `ε ~ N(0, std²)` per coordinate.
pub fn perturbed_init(theta: &DVector<f64>, n: usize, std: f64, seed: u64) -> DVector<f64> {
    linalg::replicate(theta, n) + rng::gaussian_vector(&mut rng(seed, stream::INIT_X), n * theta.len(), std)
}

/// Network for an escape run: `D` for DGD, `(R, C)` for DOGT.
#[derive(Debug, Clone, Copy)]
pub enum EscapeWeights<'a> {
    Dgd(&'a MixingMatrix),
    Dogt(&'a MixingMatrix, &'a MixingMatrix),
}

/// Runs one algorithm from perturbations of the saddle across seeds, in
/// parallel, and reports the sampled escape frequency.
pub fn escape_statistics(problem: &ProblemInstance, weights: EscapeWeights<'_>, saddle: &ConsensualSaddle, cfg: &EscapeConfig) -> Result<EscapeReport> {
    if cfg.num_seeds == 0 {
        return Err(Error::Parameter("escape statistics need at least one seed".into()));
    }
    let n = problem.n;
    let m = problem.m;
    let run_opts = RunOptions { max_iters: cfg.iters, record_stride: cfg.record_stride, stop_tol: 0.0, saddle: Some(saddle.reference()) };
    let seeds: Vec<u64> = (0..cfg.num_seeds as u64).map(|k| cfg.first_seed + k).collect();
    let results: Vec<Result<(EscapeOutcome, Trace)>> = seeds
        .par_iter()
        .map(|&seed| {
            let x0 = perturbed_init(&saddle.theta_star, n, cfg.init_std, seed);
            let trace = match weights {
                EscapeWeights::Dgd(d) => dgd::run_dgd(problem, d, cfg.alpha, &x0, &run_opts)?,
                EscapeWeights::Dogt(r, c) => {
                    let opts = DogtOptions {
                        run: run_opts.clone(),
                        y_init: YInit::RandomizedConsensus,
                        seed,
                        force: cfg.force,
                        ..Default::default()
                    };
                    dogt::run_dogt(problem, r, c, cfg.alpha, &x0, &opts)?.trace
                }
            };
            let first = trace.first();
            let last = trace.last();
            let (proj0, dist0) = (first.proj_eu.unwrap_or(0.0), first.dist_to_saddle.unwrap_or(0.0));
            let (proj_final, dist_final) = (last.proj_eu.unwrap_or(0.0), last.dist_to_saddle.unwrap_or(0.0));
            let escaped = proj_final > cfg.factor * proj0 && dist_final > cfg.factor * dist0;
            let x_bar = linalg::block_mean(&trace.x, m);
            let second_order = if problem.gradient(&x_bar).norm() < cfg.tol {
                let (vals, _) = linalg::sym_eigen_sorted(&problem.hessian(&x_bar));
                Some(vals[0] >= -cfg.tol)
            } else {
                None
            };
            let merit_m = dgd::merit_sos(&trace.x, problem);
            Ok((EscapeOutcome { seed, proj0, proj_final, dist0, dist_final, escaped, second_order, merit_m }, trace))
        })
        .collect();
    let mut outcomes = Vec::with_capacity(results.len());
    let mut traces = Vec::with_capacity(results.len());
    for r in results {
        let (o, t) = r?;
        outcomes.push(o);
        traces.push(t);
    }
    let frequency = outcomes.iter().filter(|o| o.escaped).count() as f64 / outcomes.len() as f64;
    let algo = match weights {
        EscapeWeights::Dgd(_) => Algorithm::Dgd,
        EscapeWeights::Dogt(..) => Algorithm::Dogt,
    };
    Ok(EscapeReport { algo, frequency, outcomes, traces })
}

/// `σ_min(CR)/L_c`, the step bound for the diffeomorphism property.
pub fn diffeo_alpha_bound(r: &MixingMatrix, c: &MixingMatrix, l_c: f64) -> f64 {
    linalg::sigma_min(&(&c.entries * &r.entries)) / l_c
}

/// Spectral constants shortcut used by certificates.
pub fn descent_alpha_bound(r: &MixingMatrix, c: &MixingMatrix, problem: &ProblemInstance) -> Result<f64> {
    let spec = netweights::spectral_constants(r, c)?;
    Ok(dogt::alpha_bound(&spec, problem.smoothness.l_c, problem.smoothness.l, problem.n).practical)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netweights::{build_topology, metropolis_weights, StochasticKind, TopologyKind};
    use crate::problems::{quadratic_saddle, scalar_quadratic_saddle, LocalOracle};

    fn ring(n: usize) -> MixingMatrix {
        metropolis_weights(&build_topology(&TopologyKind::Ring, n, false, 0).unwrap()).unwrap()
    }

    #[test]
    fn quadratic_saddle_is_fixed_point() {
        let p = quadratic_saddle(4, 5, 0.01, 3).unwrap();
        let w = ring(5);
        let theta = p.strict_saddle().unwrap().theta.clone();
        let s = embed_consensual_saddle(&p, &theta, &w, &w, 0.05).unwrap();
        assert!(fixed_point_residual(&s.u_star, &w, &w, 0.05, &p) < 1e-10 * (1.0 + s.u_star.norm()));
    }

    #[test]
    fn zero_objective_has_no_saddle() {
        let p = ProblemInstance::new("zero", vec![LocalOracle::Zero { dim: 2 }; 3], 1.0, 0).unwrap();
        let w = ring(3);
        assert!(matches!(embed_consensual_saddle(&p, &DVector::zeros(2), &w, &w, 0.1), Err(Error::Classification(_))));
    }

    #[test]
    fn basis_examples() {
        let one = MixingMatrix::new(DMatrix::from_element(1, 1, 1.0), StochasticKind::DoublyStochastic).unwrap();
        assert_eq!(basis_span(&one, 2).unwrap().ncols(), 0);
        let half = MixingMatrix::new(DMatrix::from_element(2, 2, 0.5), StochasticKind::DoublyStochastic).unwrap();
        let u = basis_span(&half, 1).unwrap();
        assert_eq!(u.ncols(), 1);
        assert!((u[(0, 0)].abs() - 0.5f64.sqrt()).abs() < 1e-14 && (u[(0, 0)] + u[(1, 0)]).abs() < 1e-14);
        assert_eq!(basis_span(&ring(5), 3).unwrap().ncols(), 12);
    }

    #[test]
    fn scalar_single_agent_jacobian() {
        let one = MixingMatrix::new(DMatrix::from_element(1, 1, 1.0), StochasticKind::DoublyStochastic).unwrap();
        let q = -0.3;
        let p = ProblemInstance::new(
            "scalar",
            vec![LocalOracle::Quadratic { q: DMatrix::from_element(1, 1, q), b: DVector::zeros(1) }],
            1.0,
            0,
        )
        .unwrap();
        let b = assemble_dg(&DVector::zeros(1), &one, &one, 0.5, &p).unwrap();
        assert_eq!(b.dg_tilde, DMatrix::from_row_slice(2, 2, &[1.0 - 0.5 * q, -0.5, 0.0, 1.0]));
        assert_eq!(b.projected.nrows(), 1);
        assert!((b.projected[(0, 0)] - (1.0 - 0.5 * q)).abs() < 1e-15);
        let s = embed_consensual_saddle(&p, &DVector::zeros(1), &one, &one, 0.5).unwrap();
        let cert = instability_certificate(&s, &one, &one, 0.5, &p).unwrap();
        assert!((cert.spradii - 1.15).abs() < 1e-12 && cert.unstable);
    }

    #[test]
    fn zero_hessian_spectrum_is_block_triangular() {
        let p = ProblemInstance::new("zero", vec![LocalOracle::Zero { dim: 1 }; 4], 1.0, 0).unwrap();
        let w = ring(4);
        let b = assemble_dg(&DVector::zeros(4), &w, &w, 0.1, &p).unwrap();
        let mut got: Vec<f64> = b.spectrum.iter().map(|z| z.re).collect();
        let mut want: Vec<f64> = linalg::eigenvalues(&w.entries).iter().map(|z| z.re).collect();
        let tail = b.u_h.transpose() * linalg::kron_identity(&w.entries, 1) * &b.u_h;
        want.extend(linalg::eigenvalues(&tail).iter().map(|z| z.re));
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn q_scan_brackets_the_unstable_root() {
        let topo = build_topology(&TopologyKind::Ring, 5, true, 0).unwrap();
        let r = netweights::row_stochastic_weights(&topo).unwrap();
        let c = netweights::col_stochastic_weights(&topo).unwrap();
        let p = scalar_quadratic_saddle(5, 0.5, 2).unwrap();
        let alpha = 0.5 * diffeo_alpha_bound(&r, &c, p.smoothness.l_c);
        let theta = p.strict_saddle().unwrap().theta.clone();
        let s = embed_consensual_saddle(&p, &theta, &r, &c, alpha).unwrap();
        let cert = instability_certificate(&s, &r, &c, alpha, &p).unwrap();
        assert!(cert.unstable && cert.witness_residual < 1e-8 && cert.membership_residual < 1e-8);
        let scan = q_scan(&s, &r, &c, alpha, &p, &default_q_grid(cert.spradii + 1.0, 4000));
        assert!(scan.q_at_one.abs() <= 1e-8 * scan.scale);
        let root = scan.root.expect("sign change");
        let real_above: Vec<f64> = assemble_dg(&s.x(), &r, &c, alpha, &p)
            .unwrap()
            .spectrum
            .iter()
            .filter(|z| z.im.abs() < 1e-12 && z.re > 1.0 + 1e-9)
            .map(|z| z.re)
            .collect();
        assert!(real_above.iter().any(|&e| (e - root).abs() < 1e-6), "{root} vs {real_above:?}");
    }

    #[test]
    fn t_bound_two_dimensional_substitution() {
        let t = t_bound_formula(2.0, 3.0, 2, 0.1, 0.5);
        let hand = (3.0 + 4.0) * 3.0 / (0.1f64 * 0.5 / 2.0).powi(2);
        assert!((t.t - hand).abs() < 1e-9 * hand);
        assert!(t_bound_formula(2.0, 3.0, 4, 0.1, 0.5).t > t.t);
    }
}
