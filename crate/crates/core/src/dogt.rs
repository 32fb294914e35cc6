//! Gradient tracking over directed graphs:
//! `x⁺ = W_R x − αy`, `y⁺ = W_C y + ∇F_c(x⁺) − ∇F_c(x)`.
//!
//! The Lyapunov function is
//! `L(x, y) = F(x̄) + ‖x − 1x̄‖²_R + ϰ‖y − cȳ‖²_C` with `x̄ = rᵀx`, `ȳ = 1ᵀy`,
//! and `d` is the matching merit, `L⁺ ≤ L − d²` for admissible `α`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::netweights::{self, MixingMatrix, SpectralConstants, StochasticKind};
use crate::problems::ProblemInstance;
use crate::rng::{self, rng, stream};
use crate::trace::{self, Algorithm, RunOptions, Termination, Trace, TraceRecord};

/// Cap on `ε_x`, `ε_y` when the matching contraction factor vanishes.
pub const EPS_CAP: f64 = 1e3;
/// Relative tolerance of the `ȳ = ḡ` identity.
pub const TRACKING_TOL: f64 = 1e-9;
/// Absolute slack added to the descent inequality.
pub const DESCENT_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DogtState {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub iter: usize,
}

impl DogtState {
    pub fn new(x: DVector<f64>, y: DVector<f64>) -> Self {
        DogtState { x, y, iter: 0 }
    }

    /// `h = y − ∇F_c(x)`.
    pub fn h(&self, problem: &ProblemInstance) -> DVector<f64> {
        &self.y - problem.gradient_c(&self.x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum YInit {
    Canonical,
    RandomizedConsensus,
}

impl std::str::FromStr for YInit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(YInit::Canonical),
            "randomized-consensus" | "randomized" => Ok(YInit::RandomizedConsensus),
            other => Err(Error::Kind(format!("unknown y-init mode '{other}'"))),
        }
    }
}

fn check_kind(w: &MixingMatrix, want: StochasticKind, name: &str) -> Result<()> {
    if w.kind == want || w.kind == StochasticKind::DoublyStochastic {
        Ok(())
    } else {
        Err(Error::Kind(format!("{name} must be {want:?}, got {:?}", w.kind)))
    }
}

fn check_sizes(x: &DVector<f64>, r: &MixingMatrix, c: &MixingMatrix, problem: &ProblemInstance) -> Result<()> {
    let nm = problem.n * problem.m;
    if r.n() != problem.n || c.n() != problem.n || x.len() != nm {
        return Err(Error::Shape(format!(
            "state of length {} with {}- and {}-agent weights does not match n={}, m={}",
            x.len(),
            r.n(),
            c.n(),
            problem.n,
            problem.m
        )));
    }
    Ok(())
}

/// Initial tracking variable.
pub fn init_y(x0: &DVector<f64>, c: &MixingMatrix, problem: &ProblemInstance, seed: u64, mode: YInit) -> Result<DVector<f64>> {
    check_kind(c, StochasticKind::ColumnStochastic, "C")?;
    let g = problem.gradient_c(x0);
    match mode {
        YInit::Canonical => Ok(g),
        YInit::RandomizedConsensus => {
            let mut r = rng(seed, stream::INIT_Y);
            let prev = rng::gaussian_vector(&mut r, x0.len(), 1.0);
            Ok(g + linalg::mix(&c.entries, &prev, problem.m) - prev)
        }
    }
}

/// One DOGT round.
pub fn dogt_step(state: &DogtState, r: &MixingMatrix, c: &MixingMatrix, alpha: f64, problem: &ProblemInstance) -> Result<DogtState> {
    check_sizes(&state.x, r, c, problem)?;
    let g = problem.gradient_c(&state.x);
    let (x, y, _) = advance(&state.x, &state.y, &g, r, c, alpha, problem);
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Divergence { iter: state.iter + 1 });
    }
    Ok(DogtState { x, y, iter: state.iter + 1 })
}

fn advance(
    x: &DVector<f64>,
    y: &DVector<f64>,
    g: &DVector<f64>,
    r: &MixingMatrix,
    c: &MixingMatrix,
    alpha: f64,
    problem: &ProblemInstance,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let m = problem.m;
    let x_next = linalg::mix(&r.entries, x, m) - y * alpha;
    let g_next = problem.gradient_c(&x_next);
    let y_next = linalg::mix(&c.entries, y, m) + &g_next - g;
    (x_next, y_next, g_next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMeans {
    pub x_bar: DVector<f64>,
    pub y_bar: DVector<f64>,
    pub g_bar: DVector<f64>,
}

/// `x̄ = rᵀx`, `ȳ = 1ᵀy`, `ḡ = 1ᵀ∇F_c(x)`; errors if `ȳ ≠ ḡ`.
pub fn weighted_means(state: &DogtState, r: &DVector<f64>, problem: &ProblemInstance) -> Result<WeightedMeans> {
    let m = problem.m;
    let g = problem.gradient_c(&state.x);
    let x_bar = linalg::weighted_block_sum(&state.x, r, m);
    let y_bar = linalg::block_sum(&state.y, m);
    let g_bar = linalg::block_sum(&g, m);
    let gap = (&y_bar - &g_bar).norm();
    if gap > TRACKING_TOL * (1.0 + g.lp_norm(1)) {
        return Err(Error::Validation(format!("tracking identity violated: |ȳ − ḡ| = {gap:e}")));
    }
    Ok(WeightedMeans { x_bar, y_bar, g_bar })
}

/// Residual of `h` outside `span(W_C − I) ⊗ I_m`. For column-stochastic
/// irreducible `C` that span is `1^⊥ ⊗ R^m`, so the residual is the
/// component along `1/√n`.
pub fn span_residual(h: &DVector<f64>, c: &MixingMatrix, m: usize) -> f64 {
    let n = c.n();
    linalg::block_sum(h, m).norm() / (n as f64).sqrt()
}

/// Which step-size bound counts as admissible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaRegime {
    #[default]
    Practical,
    Conservative,
}

/// The three practical bounds, their minimum and the conservative bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaBounds {
    pub tilde: [f64; 3],
    pub practical: f64,
    pub conservative: f64,
}

impl AlphaBounds {
    pub fn get(&self, regime: AlphaRegime) -> f64 {
        match regime {
            AlphaRegime::Practical => self.practical,
            AlphaRegime::Conservative => self.conservative,
        }
    }
}

/// Step-size bounds from the network constants and `L_c`, `L`.
pub fn alpha_bound(spec: &SpectralConstants, l_c: f64, l: f64, n: usize) -> AlphaBounds {
    let nf = n as f64;
    let ar = 1.0 - spec.rho_r * spec.rho_r;
    let ac = 1.0 - spec.rho_c * spec.rho_c;
    let (r, c) = (spec.r_min, spec.c_min);
    let lc2 = l_c * l_c;
    let t1 = r * ar / (3.0 * nf * lc2);
    let t2 = ar * ar * ac * ac * r * r * c * c / (1152.0 * lc2 * (2.0 + l));
    let t3 = r * c * ar / (2.0 * (l + 16.0 * nf));
    let conservative = ar * ar * ac * ac * r * r * c * c / (1152.0 * lc2 * (l + 16.0 * nf));
    AlphaBounds { tilde: [t1, t2, t3], practical: t1.min(t2).min(t3), conservative }
}

/// Free parameters of the Lyapunov construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeParams {
    pub eps_x: f64,
    pub eps_y: f64,
    pub eps: f64,
    pub varkappa: f64,
    /// The `ξ` in `ε = ξ/(1+ξ)`; taken as `ζ`.
    pub xi: f64,
    pub eps_x_capped: bool,
    pub eps_y_capped: bool,
}

/// Default free parameters, with `ξ = ζ` and the degenerate-`ρ` cap.
pub fn default_free_params(spec: &SpectralConstants, l_c: f64) -> Result<FreeParams> {
    if !(spec.rho_r < 1.0 && spec.rho_c < 1.0) {
        return Err(Error::Precondition(format!("need ρ_R, ρ_C < 1, got {}, {}", spec.rho_r, spec.rho_c)));
    }
    if !(l_c > 0.0) {
        return Err(Error::Parameter(format!("L_c must be positive, got {l_c}")));
    }
    let (rr, rc) = (spec.rho_r * spec.rho_r, spec.rho_c * spec.rho_c);
    let eps_x_capped = spec.rho_r_degenerate();
    let eps_y_capped = spec.rho_c_degenerate();
    let eps_x = if eps_x_capped { EPS_CAP } else { ((1.0 - rr) / (4.0 * rr)).min(EPS_CAP) };
    let eps_y = if eps_y_capped { EPS_CAP } else { ((1.0 - rc) / (2.0 * rc)).min(EPS_CAP) };
    let xi = spec.zeta;
    Ok(FreeParams {
        eps_x,
        eps_y,
        eps: xi / (1.0 + xi),
        varkappa: spec.c_min * spec.r_min * (1.0 - rr) * (1.0 - rc) / (24.0 * l_c * l_c),
        xi,
        eps_x_capped: eps_x_capped || eps_x == EPS_CAP,
        eps_y_capped: eps_y_capped || eps_y == EPS_CAP,
    })
}

/// One side condition on the free parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovParams {
    /// Step at which the constants are evaluated.
    pub alpha: f64,
    pub eps_x: f64,
    pub eps_y: f64,
    pub eps: f64,
    pub xi: f64,
    pub varkappa: f64,
    pub eps_x_capped: bool,
    pub eps_y_capped: bool,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub k6: f64,
    #[serde(rename = "Gamma")]
    pub gamma: f64,
    pub rho_tilde_r: f64,
    pub rho_tilde_c: f64,
    #[serde(rename = "M")]
    pub m_const: f64,
    #[serde(rename = "K")]
    pub k_len: f64,
    /// `max(K_{2,R}, K_{2,C})`.
    pub k_par: f64,
    pub alpha_bound: f64,
    pub bounds: AlphaBounds,
    pub regime: AlphaRegime,
    pub l_c: f64,
    pub l: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub zeta: f64,
    pub constraints: Vec<ConstraintCheck>,
}

impl LyapunovParams {
    pub fn feasible(&self) -> bool {
        self.rho_tilde_r < 1.0 && self.rho_tilde_c < 1.0 && self.gamma > 0.0
    }
}

/// All constants for the given free parameters at step `alpha`.
pub fn compute_params(
    spec: &SpectralConstants,
    l_c: f64,
    l: f64,
    alpha: f64,
    free: &FreeParams,
    regime: AlphaRegime,
) -> Result<LyapunovParams> {
    if !(alpha > 0.0) {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    let n = spec.n;
    let nf = n as f64;
    let k = &spec.k;
    let FreeParams { eps_x, eps_y, eps, varkappa: kap, .. } = *free;
    let zeta = spec.zeta;
    let lc2 = l_c * l_c;
    let k2 = 2.0 * k.k_rc * k.k_rc * (1.0 + 1.0 / eps_x);
    let k3 = 2.0 * nf * (1.0 + 1.0 / eps_x);
    let k4 = 3.0 * k.k_c2.powi(2) * k.k_2c.powi(2) * lc2;
    let k5 = 3.0 * k.k_c2.powi(2) * lc2;
    let k6 = 3.0 * k.k_c2.powi(2) * k.k_2r.powi(2) * lc2;
    let (rr, rc) = (spec.rho_r * spec.rho_r, spec.rho_c * spec.rho_c);
    let rho_tilde_r =
        rr * (1.0 + eps_x) + alpha * nf * lc2 * k.k_2r.powi(2) * (1.0 + zeta / eps) / 2.0 + kap * k6 * (1.0 + 1.0 / eps_y);
    let rho_tilde_c = rc * (1.0 + eps_y)
        + alpha * k.k_2c.powi(2) * (1.0 + 1.0 / eps) / (2.0 * kap)
        + alpha * alpha * ((l * k.k_2c.powi(2) + k2) / kap + k4 * (1.0 + 1.0 / eps_y));
    let gamma = (zeta - eps * zeta / 2.0 - eps / 2.0) * alpha - (l * zeta * zeta + k3 + k5 * kap) * alpha * alpha;
    let k_par = k.k_2r.max(k.k_2c);
    let m_const = 2f64.sqrt()
        * ((2.0 * spec.r_max + l_c * nf.sqrt()).powi(2) / (spec.r_min * (1.0 - rho_tilde_r)))
            .max(2.0 * kap * spec.c_max / (spec.c_min * spec.c_min * (1.0 - rho_tilde_c)))
            .max(1.0 / gamma)
            .sqrt();
    let k_len = 3f64.sqrt()
        * (1.0 + l_c)
        * (4.0 * nf * k_par * k_par / (1.0 - rho_tilde_r))
            .max(k_par * k_par / (kap * (1.0 - rho_tilde_c)) * (alpha + 2.0 * nf.sqrt() / (1.0 + l_c)).powi(2))
            .max(alpha * alpha / gamma)
            .sqrt();
    let bounds = alpha_bound(spec, l_c, l, n);
    let constraint = |name: &str, lhs: f64, rhs: f64| ConstraintCheck { name: name.into(), lhs, rhs, holds: lhs < rhs };
    let constraints = vec![
        constraint("eps_x < (1 - rho_R^2)/rho_R^2", eps_x * rr, 1.0 - rr),
        constraint("eps_y < (1 - rho_C^2)/rho_C^2", eps_y * rc, 1.0 - rc),
        constraint("0 < eps", 0.0, eps),
        constraint("eps < 2 zeta/(1 + zeta)", eps, 2.0 * zeta / (1.0 + zeta)),
        ConstraintCheck {
            name: "varkappa <= rho_R^2 eps_x/(K6 (1 + 1/eps_y))".into(),
            lhs: kap,
            rhs: rr * eps_x / (k6 * (1.0 + 1.0 / eps_y)),
            holds: kap <= rr * eps_x / (k6 * (1.0 + 1.0 / eps_y)),
        },
    ];
    Ok(LyapunovParams {
        alpha,
        eps_x,
        eps_y,
        eps,
        xi: free.xi,
        varkappa: kap,
        eps_x_capped: free.eps_x_capped,
        eps_y_capped: free.eps_y_capped,
        k2,
        k3,
        k4,
        k5,
        k6,
        gamma,
        rho_tilde_r,
        rho_tilde_c,
        m_const,
        k_len,
        k_par,
        alpha_bound: bounds.get(regime),
        bounds,
        regime,
        l_c,
        l,
        r_min: spec.r_min,
        r_max: spec.r_max,
        c_min: spec.c_min,
        c_max: spec.c_max,
        zeta,
        constraints,
    })
}

/// Default parameters evaluated at `alpha` (the regime's bound when `None`).
/// Errors name the first violated feasibility inequality.
pub fn default_params(
    spec: &SpectralConstants,
    l_c: f64,
    l: f64,
    alpha: Option<f64>,
    regime: AlphaRegime,
) -> Result<LyapunovParams> {
    let free = default_free_params(spec, l_c)?;
    let a = alpha.unwrap_or_else(|| alpha_bound(spec, l_c, l, spec.n).get(regime));
    let p = compute_params(spec, l_c, l, a, &free, regime)?;
    if !(p.rho_tilde_r < 1.0) {
        return Err(Error::Infeasible(format!("rho_tilde_R < 1 fails: {} at alpha = {a:e}", p.rho_tilde_r)));
    }
    if !(p.rho_tilde_c < 1.0) {
        return Err(Error::Infeasible(format!("rho_tilde_C < 1 fails: {} at alpha = {a:e}", p.rho_tilde_c)));
    }
    if !(p.gamma > 0.0) {
        return Err(Error::Infeasible(format!("Gamma > 0 fails: {} at alpha = {a:e}", p.gamma)));
    }
    Ok(p)
}

/// Consensus parts of a state: `x − 1x̄` and `y − cȳ` with `x̄ = rᵀx`.
fn deviations(x: &DVector<f64>, y: &DVector<f64>, r: &DVector<f64>, c: &DVector<f64>, m: usize) -> (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>) {
    let n = r.len();
    let x_bar = linalg::weighted_block_sum(x, r, m);
    let y_bar = linalg::block_sum(y, m);
    let dx = x - linalg::replicate(&x_bar, n);
    let dy = y - linalg::outer_stack(c, &y_bar);
    (x_bar, y_bar, dx, dy)
}

/// `L(x, y)`.
pub fn lyapunov_l(state: &DogtState, params: &LyapunovParams, r: &DVector<f64>, c: &DVector<f64>, problem: &ProblemInstance) -> f64 {
    let m = problem.m;
    let (x_bar, _, dx, dy) = deviations(&state.x, &state.y, r, c, m);
    problem.value(&x_bar) + netweights::norm_r(&dx, r, m).powi(2) + params.varkappa * netweights::norm_c(&dy, c, m).powi(2)
}

/// Merit `d(x, y)`; uses `Σ∇f_i(x_i)` in the last term.
pub fn merit_d(state: &DogtState, params: &LyapunovParams, r: &DVector<f64>, c: &DVector<f64>, problem: &ProblemInstance) -> f64 {
    let g_bar = linalg::block_sum(&problem.gradient_c(&state.x), problem.m);
    merit_from_parts(state, params, r, c, &g_bar, problem.m)
}

fn merit_from_parts(state: &DogtState, params: &LyapunovParams, r: &DVector<f64>, c: &DVector<f64>, g_bar: &DVector<f64>, m: usize) -> f64 {
    let (_, _, dx, dy) = deviations(&state.x, &state.y, r, c, m);
    let v = (1.0 - params.rho_tilde_r) * netweights::norm_r(&dx, r, m).powi(2)
        + params.varkappa * (1.0 - params.rho_tilde_c) * netweights::norm_c(&dy, c, m).powi(2)
        + params.gamma * g_bar.norm_squared();
    v.max(0.0).sqrt()
}

/// `(∇_x L, ∇_y L)` stacked into a `2nm`-vector.
pub fn grad_l(state: &DogtState, params: &LyapunovParams, r: &DVector<f64>, c: &DVector<f64>, problem: &ProblemInstance) -> DVector<f64> {
    let m = problem.m;
    let n = r.len();
    let (x_bar, _, dx, dy) = deviations(&state.x, &state.y, r, c, m);
    let gf = problem.gradient(&x_bar);
    let mut out = DVector::zeros(2 * n * m);
    for i in 0..n {
        let gx = &gf * r[i] + linalg::block(&dx, i, m) * (2.0 * r[i]);
        let gy = linalg::block(&dy, i, m) * (2.0 * params.varkappa / c[i]);
        out.rows_mut(i * m, m).copy_from(&gx);
        out.rows_mut(n * m + i * m, m).copy_from(&gy);
    }
    out
}

/// Controls specific to DOGT runs.
#[derive(Debug, Clone, PartialEq)]
pub struct DogtOptions {
    pub run: RunOptions,
    pub y_init: YInit,
    pub seed: u64,
    /// Accept `α` above the admissible bound.
    pub force: bool,
    pub regime: AlphaRegime,
    /// Levels for the `T_ε = min{ν : d ≤ ε}` measurement.
    pub eps_levels: Vec<f64>,
}

impl Default for DogtOptions {
    fn default() -> Self {
        DogtOptions {
            run: RunOptions::default(),
            y_init: YInit::Canonical,
            seed: 0,
            force: false,
            regime: AlphaRegime::Practical,
            eps_levels: vec![1e-1, 1e-2, 1e-3, 1e-4],
        }
    }
}

/// Per-run invariant bookkeeping.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DogtDiagnostics {
    /// Iterations with `L⁺ > L − d² + slack`.
    pub descent_violations: usize,
    pub max_descent_excess: f64,
    /// Iterations with `‖∇L‖ > M d` (relative slack `1e-9`).
    pub gradient_bound_violations: usize,
    /// Largest `|1ᵀh|/(1 + ‖∇F_c‖₁)` seen.
    pub max_tracking_gap: f64,
    pub sum_d_squared: f64,
    pub l_first: f64,
    pub l_min: f64,
    /// Constants were evaluated at a smaller step than the one run.
    pub forced: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DogtRun {
    pub trace: Trace,
    pub params: LyapunovParams,
    pub diagnostics: DogtDiagnostics,
    /// `(ε, T_ε)`.
    pub t_eps: Vec<(f64, Option<usize>)>,
}

/// Parameters for a run at `alpha`, honouring `force`.
pub fn run_params(spec: &SpectralConstants, problem: &ProblemInstance, alpha: f64, force: bool, regime: AlphaRegime) -> Result<(LyapunovParams, bool)> {
    let (l_c, l) = (problem.smoothness.l_c, problem.smoothness.l);
    let bounds = alpha_bound(spec, l_c, l, spec.n);
    let bound = bounds.get(regime);
    if alpha <= bound {
        return Ok((default_params(spec, l_c, l, Some(alpha), regime)?, false));
    }
    if !force {
        return Err(Error::Inadmissible(format!("alpha = {alpha:e} exceeds the {regime:?} bound {bound:e}")));
    }
    Ok((default_params(spec, l_c, l, Some(bound), regime)?, true))
}

/// Runs DOGT from `x0`. Stops at `max_iters` or when both
/// `‖x − 1x̄‖∞` and `‖y‖∞` drop below `stop_tol`.
pub fn run_dogt(
    problem: &ProblemInstance,
    r_mat: &MixingMatrix,
    c_mat: &MixingMatrix,
    alpha: f64,
    x0: &DVector<f64>,
    opts: &DogtOptions,
) -> Result<DogtRun> {
    check_kind(r_mat, StochasticKind::RowStochastic, "R")?;
    check_kind(c_mat, StochasticKind::ColumnStochastic, "C")?;
    check_sizes(x0, r_mat, c_mat, problem)?;
    if !(alpha > 0.0) {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    let spec = netweights::spectral_constants(r_mat, c_mat)?;
    let (params, forced) = run_params(&spec, problem, alpha, opts.force, opts.regime)?;
    let r = r_mat.left()?;
    let c = c_mat.right()?;
    let m = problem.m;
    let n = problem.n;
    let stride = opts.run.record_stride.max(1);

    let mut diag = DogtDiagnostics { forced, ..Default::default() };
    if forced {
        diag.warnings.push(format!(
            "alpha = {alpha:e} above the {:?} bound {:e}; constants evaluated at the bound and descent checks are advisory",
            opts.regime, params.alpha_bound
        ));
    }
    let mut t_eps: Vec<(f64, Option<usize>)> = opts.eps_levels.iter().map(|&e| (e, None)).collect();

    let mut state = DogtState::new(x0.clone(), init_y(x0, c_mat, problem, opts.seed, opts.y_init)?);
    let mut g = problem.gradient_c(&state.x);
    let mut records = Vec::new();
    let mut h_sup: f64 = 0.0;
    let mut termination = Termination::MaxIters;
    let mut prev: Option<(f64, f64)> = None;
    diag.l_min = f64::INFINITY;
    loop {
        let iter = state.iter;
        h_sup = h_sup.max(g.norm());
        let g_bar = linalg::block_sum(&g, m);
        let y_bar = linalg::block_sum(&state.y, m);
        let gap = (&y_bar - &g_bar).norm() / (1.0 + g.lp_norm(1));
        diag.max_tracking_gap = diag.max_tracking_gap.max(gap);
        let l_val = lyapunov_l(&state, &params, &r, &c, problem);
        let d_val = merit_from_parts(&state, &params, &r, &c, &g_bar, m);
        if iter == 0 {
            diag.l_first = l_val;
        }
        diag.l_min = diag.l_min.min(l_val);
        if let Some((l_prev, d_prev)) = prev {
            let excess = l_val - (l_prev - d_prev * d_prev + DESCENT_SLACK * (1.0 + l_prev.abs()));
            if excess > 0.0 {
                diag.descent_violations += 1;
                diag.max_descent_excess = diag.max_descent_excess.max(excess);
            }
        }
        for slot in t_eps.iter_mut() {
            if slot.1.is_none() && d_val <= slot.0 {
                slot.1 = Some(iter);
            }
        }
        let gl = grad_l(&state, &params, &r, &c, problem);
        let gl_norm = gl.norm();
        if gl_norm > params.m_const * d_val * (1.0 + 1e-9) + 1e-300 {
            diag.gradient_bound_violations += 1;
        }

        let x_bar = linalg::weighted_block_sum(&state.x, &r, m);
        let dev_inf = linalg::norm_inf(&(&state.x - linalg::replicate(&x_bar, n)));
        let converged = dev_inf.max(linalg::norm_inf(&state.y)) < opts.run.stop_tol;
        let done = converged || iter >= opts.run.max_iters;
        if iter % stride == 0 || done {
            let (cons_err, max_dev) = trace::consensus_errors(&state.x, m);
            let (proj_eu, dist) = trace::saddle_projections(&x_bar, &opts.run.saddle);
            records.push(TraceRecord {
                iter,
                lyapunov: l_val,
                merit: Some(d_val),
                grad_l_norm: Some(gl_norm),
                cons_err,
                max_agent_dev: max_dev,
                grad_f_mean_norm: problem.gradient(&x_bar).norm(),
                y_bar_norm: Some(y_bar.norm()),
                track_residual: Some((&y_bar - &g_bar).norm()),
                grad_fc_norm: g.norm(),
                proj_eu,
                dist_to_saddle: dist,
            });
        }
        if converged {
            termination = Termination::Converged { iter };
        }
        if done {
            break;
        }
        diag.sum_d_squared += d_val * d_val;
        let (x, y, g_next) = advance(&state.x, &state.y, &g, r_mat, c_mat, alpha, problem);
        if x.iter().chain(y.iter()).chain(g_next.iter()).any(|v| !v.is_finite()) {
            termination = Termination::Diverged { iter: iter + 1 };
            diag.warnings.push(format!("non-finite state at iteration {}", iter + 1));
            break;
        }
        prev = Some((l_val, d_val));
        state = DogtState { x, y, iter: iter + 1 };
        g = g_next;
    }
    if diag.descent_violations > 0 && !forced {
        diag.warnings.push(format!("{} descent violations at admissible alpha", diag.descent_violations));
    }
    let iterations = state.iter;
    let trace = Trace {
        algo: Algorithm::Dogt,
        records,
        x0: x0.clone(),
        x: state.x,
        y: Some(state.y),
        iterations,
        termination,
        h_sup,
    };
    Ok(DogtRun { trace, params, diagnostics: diag, t_eps })
}

/// Convergence-rate classification of a distance-to-limit tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum RateClass {
    Finite { iter: usize },
    Geometric { tau: f64, r2: f64 },
    Sublinear { exponent: f64, r2: f64 },
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 && sxx > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, r2)
}

/// Fits `log e` against `ν` and `log ν`; `e = 0` from some index on is finite.
pub fn rate_classify(iters: &[usize], errs: &[f64]) -> Result<RateClass> {
    if iters.len() != errs.len() || iters.len() < 3 {
        return Err(Error::Shape("rate fit needs at least three matching points".into()));
    }
    if let Some(k) = (0..errs.len()).find(|&k| errs[k..].iter().all(|&e| e == 0.0)) {
        return Ok(RateClass::Finite { iter: iters[k] });
    }
    let pts: Vec<(f64, f64)> = iters
        .iter()
        .zip(errs)
        .filter(|(&i, &e)| i > 0 && e > 0.0)
        .map(|(&i, &e)| (i as f64, e.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Degenerate("too few positive points to fit a rate".into()));
    }
    let nu: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let log_nu: Vec<f64> = nu.iter().map(|v| v.ln()).collect();
    let le: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (s_geo, r2_geo) = linear_fit(&nu, &le);
    let (s_pow, r2_pow) = linear_fit(&log_nu, &le);
    if r2_geo >= r2_pow {
        Ok(RateClass::Geometric { tau: s_geo.exp(), r2: r2_geo })
    } else {
        Ok(RateClass::Sublinear { exponent: s_pow, r2: r2_pow })
    }
}
