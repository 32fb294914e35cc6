//! Benchmark objectives `F(θ) = Σ_i f_i(θ)` with per-agent oracles.
//!
//! Matrix variables are flattened column-major. Global regularizers are split
//! as `λ/(2n)` per agent so the agent sum reproduces the global objective.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, rng, stream};

/// Safety factor applied to sampled curvature estimates.
pub const LIPSCHITZ_SAFETY: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeuronVariant {
    SquaredSigmoid,
    Tanh,
    SigmoidSq,
    LogSigmoidGap,
}

impl std::str::FromStr for NeuronVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared-sigmoid" => Ok(Self::SquaredSigmoid),
            "tanh" => Ok(Self::Tanh),
            "sigmoid-sq" => Ok(Self::SigmoidSq),
            "log-sigmoid-gap" => Ok(Self::LogSigmoidGap),
            other => Err(Error::Parameter(format!("unknown neuron variant '{other}'"))),
        }
    }
}

/// One agent's objective.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalOracle {
    Zero { dim: usize },
    /// `(λ/2)‖θ‖²`.
    Ridge { dim: usize, lambda: f64 },
    /// `½(θ−b)ᵀQ(θ−b)`.
    Quadratic { q: DMatrix<f64>, b: DVector<f64> },
    /// `¼{(1/n)‖θ‖⁴ − 2θᵀMθ}` with `M` symmetrized.
    Pca { mat: DMatrix<f64>, n_agents: f64 },
    /// `¼((aᵀθ)² − y)² + (reg/2)‖θ‖²`.
    PhaseRetrieval { a: DVector<f64>, y: f64, reg: f64 },
    /// `¼(tr(TᵀAT) − y)² + (reg/2)‖T‖²_F`, `T` is `rows × rank`; `a` is symmetrized.
    MatrixSensing { a: DMatrix<f64>, y: f64, reg: f64, rows: usize, rank: usize },
    /// `−log Σ_d φ(z − θ_d) + (ridge/2)Σ_d‖θ_d‖²`, `φ` Gaussian with covariance `var·I`.
    GaussianMixture { z: DVector<f64>, var: f64, q: usize, ridge: f64 },
    /// `(1/n)[−ln σ(ξ̃ sᵀQw) + (τ/2)(‖Q‖²_F + ‖w‖²)]`, `θ = (vec Q, w)`.
    BilinearLogistic { s: DVector<f64>, label: f64, tau: f64, n_agents: f64, p: usize },
    Neuron { s: DVector<f64>, xi: f64, variant: NeuronVariant, lambda: f64, mu: f64, n_agents: f64 },
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `−ln σ(u) = ln(1 + e^{−u})`, stable.
fn neg_log_sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        (-u).exp().ln_1p()
    } else {
        -u + u.exp().ln_1p()
    }
}

impl LocalOracle {
    pub fn dim(&self) -> usize {
        match self {
            LocalOracle::Zero { dim } | LocalOracle::Ridge { dim, .. } => *dim,
            LocalOracle::Quadratic { b, .. } => b.len(),
            LocalOracle::Pca { mat, .. } => mat.nrows(),
            LocalOracle::PhaseRetrieval { a, .. } => a.len(),
            LocalOracle::MatrixSensing { rows, rank, .. } => rows * rank,
            LocalOracle::GaussianMixture { z, q, .. } => z.len() * q,
            LocalOracle::BilinearLogistic { s, p, .. } => s.len() * p + p,
            LocalOracle::Neuron { s, .. } => s.len(),
        }
    }

    // Scalar-link models `g(u) + (ridge/2)‖θ‖²` with `u = κ sᵀθ`.
    fn neuron_parts(&self, theta: &DVector<f64>) -> (f64, f64, f64, f64, f64) {
        let LocalOracle::Neuron { s, xi, variant, lambda, mu, n_agents } = self else { unreachable!() };
        match variant {
            NeuronVariant::SquaredSigmoid => {
                let u = s.dot(theta);
                let sg = sigmoid(u);
                let d1 = sg * (1.0 - sg);
                let d2 = d1 * (1.0 - 2.0 * sg);
                let r = xi - sg;
                let c = 1.0 / (2.0 * n_agents);
                (c * r * r, -2.0 * c * r * d1, 2.0 * c * (d1 * d1 - r * d2), 1.0, c * lambda)
            }
            NeuronVariant::Tanh => {
                let u = xi * s.dot(theta);
                let t = u.tanh();
                (1.0 - t, -(1.0 - t * t), 2.0 * t * (1.0 - t * t), *xi, *lambda)
            }
            NeuronVariant::SigmoidSq => {
                let u = xi * s.dot(theta);
                let sg = sigmoid(u);
                let d1 = sg * (1.0 - sg);
                let d2 = d1 * (1.0 - 2.0 * sg);
                let r = 1.0 - sg;
                (r * r, -2.0 * r * d1, 2.0 * d1 * d1 - 2.0 * r * d2, *xi, *lambda)
            }
            NeuronVariant::LogSigmoidGap => {
                let u = xi * s.dot(theta);
                let v = neg_log_sigmoid(u) - neg_log_sigmoid(u + mu);
                let g1 = -sigmoid(-u) + sigmoid(-u - mu);
                let g2 = sigmoid(u) * sigmoid(-u) - sigmoid(u + mu) * sigmoid(-u - mu);
                (v, g1, g2, *xi, *lambda)
            }
        }
    }

    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        match self {
            LocalOracle::Zero { .. } => 0.0,
            LocalOracle::Ridge { lambda, .. } => 0.5 * lambda * theta.norm_squared(),
            LocalOracle::Quadratic { q, b } => {
                let d = theta - b;
                0.5 * d.dot(&(q * &d))
            }
            LocalOracle::Pca { mat, n_agents } => {
                let t2 = theta.norm_squared();
                0.25 * (t2 * t2 / n_agents - 2.0 * theta.dot(&(mat * theta)))
            }
            LocalOracle::PhaseRetrieval { a, y, reg } => {
                let v = a.dot(theta);
                0.25 * (v * v - y).powi(2) + 0.5 * reg * theta.norm_squared()
            }
            LocalOracle::MatrixSensing { a, y, reg, rows, rank } => {
                let t = DMatrix::from_column_slice(*rows, *rank, theta.as_slice());
                let u = (t.transpose() * a * &t).trace();
                0.25 * (u - y).powi(2) + 0.5 * reg * theta.norm_squared()
            }
            LocalOracle::GaussianMixture { z, var, q, ridge } => {
                let m = z.len();
                let e: Vec<f64> = (0..*q).map(|d| -(z - theta.rows(d * m, m)).norm_squared() / (2.0 * var)).collect();
                let emax = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = emax + e.iter().map(|v| (v - emax).exp()).sum::<f64>().ln();
                let log_norm = 0.5 * m as f64 * (2.0 * std::f64::consts::PI * var).ln();
                -lse + log_norm + 0.5 * ridge * theta.norm_squared()
            }
            LocalOracle::BilinearLogistic { s, label, tau, n_agents, p } => {
                let d = s.len();
                let qm = DMatrix::from_column_slice(d, *p, &theta.as_slice()[..d * p]);
                let w = theta.rows(d * p, *p);
                let u = label * s.dot(&(qm * w));
                (neg_log_sigmoid(u) + 0.5 * tau * theta.norm_squared()) / n_agents
            }
            LocalOracle::Neuron { .. } => {
                let (g, _, _, _, ridge) = self.neuron_parts(theta);
                g + 0.5 * ridge * theta.norm_squared()
            }
        }
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        match self {
            LocalOracle::Zero { dim } => DVector::zeros(*dim),
            LocalOracle::Ridge { lambda, .. } => theta * *lambda,
            LocalOracle::Quadratic { q, b } => q * (theta - b),
            LocalOracle::Pca { mat, n_agents } => theta * (theta.norm_squared() / n_agents) - mat * theta,
            LocalOracle::PhaseRetrieval { a, y, reg } => {
                let v = a.dot(theta);
                a * ((v * v - y) * v) + theta * *reg
            }
            LocalOracle::MatrixSensing { a, y, reg, rows, rank } => {
                let t = DMatrix::from_column_slice(*rows, *rank, theta.as_slice());
                let at = a * &t;
                let u = (t.transpose() * &at).trace();
                DVector::from_column_slice((at * (u - y)).as_slice()) + theta * *reg
            }
            LocalOracle::GaussianMixture { z, var, q, ridge } => {
                let (w, a) = self.gmm_weights(theta, z, *var, *q);
                let m = z.len();
                let mut g = theta * *ridge;
                for d in 0..*q {
                    let mut blk = g.rows_mut(d * m, m);
                    blk -= &a[d] * w[d];
                }
                g
            }
            LocalOracle::BilinearLogistic { s, label, tau, n_agents, p } => {
                let d = s.len();
                let qm = DMatrix::from_column_slice(d, *p, &theta.as_slice()[..d * p]);
                let w = theta.rows(d * p, *p).into_owned();
                let u = label * s.dot(&(&qm * &w));
                let coef = -sigmoid(-u) * label;
                let gq = s * w.transpose() * coef;
                let gw = qm.transpose() * s * coef;
                let mut g = DVector::zeros(d * p + p);
                g.rows_mut(0, d * p).copy_from_slice(gq.as_slice());
                g.rows_mut(d * p, *p).copy_from(&gw);
                (g + theta * *tau) / *n_agents
            }
            LocalOracle::Neuron { s, .. } => {
                let (_, g1, _, kappa, ridge) = self.neuron_parts(theta);
                s * (g1 * kappa) + theta * ridge
            }
        }
    }

    pub fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let dim = self.dim();
        let eye = DMatrix::<f64>::identity(dim, dim);
        match self {
            LocalOracle::Zero { .. } => DMatrix::zeros(dim, dim),
            LocalOracle::Ridge { lambda, .. } => eye * *lambda,
            LocalOracle::Quadratic { q, .. } => q.clone(),
            LocalOracle::Pca { mat, n_agents } => {
                (eye * theta.norm_squared() + theta * theta.transpose() * 2.0) / *n_agents - mat
            }
            LocalOracle::PhaseRetrieval { a, y, reg } => {
                let v = a.dot(theta);
                a * a.transpose() * (3.0 * v * v - y) + eye * *reg
            }
            LocalOracle::MatrixSensing { a, y, reg, rows, rank } => {
                let t = DMatrix::from_column_slice(*rows, *rank, theta.as_slice());
                let at = a * &t;
                let u = (t.transpose() * &at).trace();
                let g = DVector::from_column_slice(at.as_slice());
                DMatrix::<f64>::identity(*rank, *rank).kronecker(a) * (u - y) + &g * g.transpose() * 2.0 + eye * *reg
            }
            LocalOracle::GaussianMixture { z, var, q, ridge } => {
                let (w, a) = self.gmm_weights(theta, z, *var, *q);
                let m = z.len();
                let mut h = eye * *ridge;
                let mut gbar = DVector::zeros(dim);
                for d in 0..*q {
                    let mut blk = h.view_mut((d * m, d * m), (m, m));
                    blk += DMatrix::<f64>::identity(m, m) * (w[d] / var) - &a[d] * a[d].transpose() * w[d];
                    gbar.rows_mut(d * m, m).copy_from(&(&a[d] * w[d]));
                }
                h + &gbar * gbar.transpose()
            }
            LocalOracle::BilinearLogistic { s, label, tau, n_agents, p } => {
                let d = s.len();
                let qm = DMatrix::from_column_slice(d, *p, &theta.as_slice()[..d * p]);
                let w = theta.rows(d * p, *p).into_owned();
                let u = label * s.dot(&(&qm * &w));
                let mut du = DVector::zeros(dim);
                du.rows_mut(0, d * p).copy_from_slice((s * w.transpose() * *label).as_slice());
                du.rows_mut(d * p, *p).copy_from(&(qm.transpose() * s * *label));
                // ∂²u/∂Q_{ab}∂w_c = ξ̃ s_a δ_{bc}
                let mut d2u = DMatrix::zeros(dim, dim);
                for b in 0..*p {
                    for a_ in 0..d {
                        let k = b * d + a_;
                        d2u[(k, d * p + b)] = label * s[a_];
                        d2u[(d * p + b, k)] = label * s[a_];
                    }
                }
                let h = &du * du.transpose() * (sigmoid(u) * sigmoid(-u)) - d2u * sigmoid(-u) + eye * *tau;
                h / *n_agents
            }
            LocalOracle::Neuron { s, .. } => {
                let (_, _, g2, kappa, ridge) = self.neuron_parts(theta);
                s * s.transpose() * (g2 * kappa * kappa) + eye * ridge
            }
        }
    }

    // Softmax responsibilities and scaled residuals `(z − θ_d)/var`.
    fn gmm_weights(&self, theta: &DVector<f64>, z: &DVector<f64>, var: f64, q: usize) -> (Vec<f64>, Vec<DVector<f64>>) {
        let m = z.len();
        let a: Vec<DVector<f64>> = (0..q).map(|d| (z - theta.rows(d * m, m)) / var).collect();
        let e: Vec<f64> = (0..q).map(|d| -(z - theta.rows(d * m, m)).norm_squared() / (2.0 * var)).collect();
        let emax = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ex: Vec<f64> = e.iter().map(|v| (v - emax).exp()).collect();
        let sum: f64 = ex.iter().sum();
        (ex.iter().map(|v| v / sum).collect(), a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessData {
    pub l_i: Vec<f64>,
    pub l_max: f64,
    /// Lipschitz constant of the stacked gradient `∇F_c`.
    pub l_c: f64,
    /// Lipschitz constant of `∇F`.
    pub l: f64,
    pub l_hess: f64,
    pub l_hess_c: f64,
    /// `exact` or a description of the sampling estimator.
    pub method: String,
}

impl SmoothnessData {
    fn from_parts(l_i: Vec<f64>, lh_i: Vec<f64>, method: String) -> Self {
        let l_max = l_i.iter().cloned().fold(0.0, f64::max);
        SmoothnessData {
            l: l_i.iter().sum(),
            l_max,
            l_c: l_max,
            l_hess: lh_i.iter().sum(),
            l_hess_c: lh_i.iter().cloned().fold(0.0, f64::max),
            l_i,
            method,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticalKind {
    LocalMinCandidate,
    StrictSaddle,
}

/// A critical point of `F` known by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownCritical {
    pub theta: DVector<f64>,
    pub kind: CriticalKind,
    pub lambda_min: f64,
    pub u_u: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub locals: Vec<LocalOracle>,
    pub smoothness: SmoothnessData,
    pub critical_points: Vec<KnownCritical>,
}

impl ProblemInstance {
    /// Builds an instance, validating dimensions. Smoothness constants are
    /// exact for quadratics and ridge terms and estimated otherwise.
    pub fn new(name: &str, locals: Vec<LocalOracle>, sample_radius: f64, seed: u64) -> Result<Self> {
        let n = locals.len();
        if n == 0 {
            return Err(Error::Size("need at least one agent".into()));
        }
        let m = locals[0].dim();
        if locals.iter().any(|l| l.dim() != m) {
            return Err(Error::Shape("local oracles have different dimensions".into()));
        }
        let smoothness = if locals.iter().all(|l| matches!(l, LocalOracle::Quadratic { .. } | LocalOracle::Ridge { .. } | LocalOracle::Zero { .. })) {
            let l_i = locals.iter().map(|l| linalg::spectral_norm(&l.hessian(&DVector::zeros(m)))).collect();
            SmoothnessData::from_parts(l_i, vec![0.0; n], "exact".into())
        } else {
            estimate_smoothness(&locals, m, sample_radius, 200, seed)
        };
        Ok(ProblemInstance { name: name.into(), n, m, locals, smoothness, critical_points: Vec::new() })
    }

    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        self.locals.iter().map(|l| l.value(theta)).sum()
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.m);
        for l in &self.locals {
            g += l.gradient(theta);
        }
        g
    }

    pub fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.m, self.m);
        for l in &self.locals {
            h += l.hessian(theta);
        }
        h
    }

    fn agent_block(&self, x: &DVector<f64>, i: usize) -> DVector<f64> {
        linalg::block(x, i, self.m).into_owned()
    }

    /// `F_c(x) = Σ_i f_i(x_i)`.
    pub fn value_c(&self, x: &DVector<f64>) -> f64 {
        (0..self.n).map(|i| self.locals[i].value(&self.agent_block(x, i))).sum()
    }

    /// `∇F_c(x)`, stacked.
    pub fn gradient_c(&self, x: &DVector<f64>) -> DVector<f64> {
        let m = self.m;
        let mut g = DVector::zeros(self.n * m);
        for i in 0..self.n {
            g.rows_mut(i * m, m).copy_from(&self.locals[i].gradient(&self.agent_block(x, i)));
        }
        g
    }

    /// `∇²F_c(x)`, block diagonal.
    pub fn hessian_c(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let blocks: Vec<DMatrix<f64>> = (0..self.n).map(|i| self.locals[i].hessian(&self.agent_block(x, i))).collect();
        linalg::block_diag(&blocks)
    }

    /// Scale used for stationarity tests: `1 + Σ_i ‖∇f_i(θ)‖`.
    pub fn gradient_scale(&self, theta: &DVector<f64>) -> f64 {
        1.0 + self.locals.iter().map(|l| l.gradient(theta).norm()).sum::<f64>()
    }

    /// The first registered strict saddle, if any.
    pub fn strict_saddle(&self) -> Option<&KnownCritical> {
        self.critical_points.iter().find(|c| c.kind == CriticalKind::StrictSaddle)
    }
}

/// Per-agent `L_i` and Hessian-Lipschitz estimates by sampling the ball of
/// radius `radius`, multiplied by [`LIPSCHITZ_SAFETY`].
pub fn estimate_smoothness(locals: &[LocalOracle], m: usize, radius: f64, samples: usize, seed: u64) -> SmoothnessData {
    let mut g = rng(seed, stream::SAMPLE);
    let pts: Vec<DVector<f64>> = (0..samples).map(|_| rng::uniform_ball(&mut g, m, radius)).collect();
    let mut l_i = Vec::with_capacity(locals.len());
    let mut lh_i = Vec::with_capacity(locals.len());
    for l in locals {
        let hs: Vec<DMatrix<f64>> = pts.iter().map(|p| l.hessian(p)).collect();
        let lmax = hs.iter().map(linalg::spectral_norm).fold(0.0, f64::max);
        let mut lh: f64 = 0.0;
        for k in 1..pts.len() {
            let dist = (&pts[k] - &pts[k - 1]).norm();
            if dist > 1e-12 {
                lh = lh.max(linalg::spectral_norm(&(&hs[k] - &hs[k - 1])) / dist);
            }
        }
        l_i.push(LIPSCHITZ_SAFETY * lmax);
        lh_i.push(LIPSCHITZ_SAFETY * lh);
    }
    let method = format!("sampled {samples} points in ball radius {radius}, safety factor {LIPSCHITZ_SAFETY}");
    SmoothnessData::from_parts(l_i, lh_i, method)
}

/// Quadratic with one strict saddle: `ΣQ_i` has `m−1` eigenvalues uniform on
/// `(0, n]` and one eigenvalue `−nδ`.
pub fn quadratic_saddle(m: usize, n: usize, delta: f64, seed: u64) -> Result<ProblemInstance> {
    quadratic_family(m, n, -delta, 1e3, seed)
}

/// Same construction with the negative eigenvalue replaced by `+nδ`.
pub fn quadratic_convexified(m: usize, n: usize, delta: f64, b_std: f64, seed: u64) -> Result<ProblemInstance> {
    quadratic_family(m, n, delta, b_std, seed)
}

/// Shared recipe: `ΣQ_i = V diag(λ) Vᵀ` with `V` from a Gaussian QR, split as
/// `Q_i = ΣQ/n + E_i` with zero-sum symmetric Gaussian perturbations `E_i`.
pub fn quadratic_family(m: usize, n: usize, signed_delta: f64, b_std: f64, seed: u64) -> Result<ProblemInstance> {
    if m < 2 || n < 1 || signed_delta == 0.0 || !signed_delta.is_finite() {
        return Err(Error::Parameter(format!("need m ≥ 2, n ≥ 1, delta ≠ 0 (m={m}, n={n}, delta={signed_delta})")));
    }
    for attempt in 0..16u64 {
        let mut g = rng(seed.wrapping_add(attempt), stream::PROBLEM);
        let v = rng::gaussian_matrix(&mut g, m, m).qr().q();
        let mut lam: Vec<f64> = (0..m - 1).map(|_| n as f64 * (1.0 - g.random::<f64>())).collect();
        lam.push(n as f64 * signed_delta);
        let total = &v * DMatrix::from_diagonal(&DVector::from_vec(lam.clone())) * v.transpose();
        let total = (&total + total.transpose()) * 0.5;
        let raw: Vec<DMatrix<f64>> = (0..n)
            .map(|_| {
                let a = rng::gaussian_matrix(&mut g, m, m);
                (&a + a.transpose()) * (0.5 / (m as f64).sqrt())
            })
            .collect();
        let mean = raw.iter().fold(DMatrix::zeros(m, m), |acc, e| acc + e) / n as f64;
        let qs: Vec<DMatrix<f64>> = if n == 1 {
            vec![total.clone()]
        } else {
            raw.iter().map(|e| &total / n as f64 + e - &mean).collect()
        };
        let bs: Vec<DVector<f64>> = (0..n).map(|_| rng::gaussian_vector(&mut g, m, b_std)).collect();
        let sum_q = qs.iter().fold(DMatrix::zeros(m, m), |acc, q| acc + q);
        let rhs = qs.iter().zip(&bs).fold(DVector::zeros(m), |acc, (q, b)| acc + q * b);
        let Some(theta) = sum_q.clone().lu().solve(&rhs) else { continue };
        if linalg::sigma_min(&sum_q) < 1e-12 {
            continue;
        }
        let locals: Vec<LocalOracle> = qs.into_iter().zip(bs).map(|(q, b)| LocalOracle::Quadratic { q, b }).collect();
        let name = if signed_delta < 0.0 { "quadratic-saddle" } else { "quadratic-convexified" };
        let mut inst = ProblemInstance::new(name, locals, 1.0, seed)?;
        let (vals, vecs) = linalg::sym_eigen_sorted(&sum_q);
        let kind = if vals[0] < 0.0 { CriticalKind::StrictSaddle } else { CriticalKind::LocalMinCandidate };
        inst.critical_points.push(KnownCritical { theta, kind, lambda_min: vals[0], u_u: vecs.column(0).into_owned() });
        return Ok(inst);
    }
    Err(Error::Numerical("could not draw a nonsingular quadratic instance".into()))
}

/// Scalar quadratics `½q_i(θ−b_i)²` with `Σq_i = −nδ` (a strict local max in
/// one dimension); individual curvatures are heterogeneous.
pub fn scalar_quadratic_saddle(n: usize, delta: f64, seed: u64) -> Result<ProblemInstance> {
    if n < 1 || !(delta > 0.0) {
        return Err(Error::Parameter("need n ≥ 1 and delta > 0".into()));
    }
    let mut g = rng(seed, stream::PROBLEM);
    let raw: Vec<f64> = (0..n).map(|_| rng::gaussian_vector(&mut g, 1, 1.0)[0]).collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    let qs: Vec<f64> = raw.iter().map(|r| if n == 1 { -delta } else { r - mean - delta }).collect();
    let bs: Vec<f64> = (0..n).map(|_| rng::gaussian_vector(&mut g, 1, 1.0)[0]).collect();
    let sum_q: f64 = qs.iter().sum();
    let theta = qs.iter().zip(&bs).map(|(q, b)| q * b).sum::<f64>() / sum_q;
    let locals = qs
        .iter()
        .zip(&bs)
        .map(|(&q, &b)| LocalOracle::Quadratic { q: DMatrix::from_element(1, 1, q), b: DVector::from_element(1, b) })
        .collect();
    let mut inst = ProblemInstance::new("scalar-quadratic-saddle", locals, 1.0, seed)?;
    inst.critical_points.push(KnownCritical {
        theta: DVector::from_element(1, theta),
        kind: CriticalKind::StrictSaddle,
        lambda_min: sum_q,
        u_u: DVector::from_element(1, 1.0),
    });
    Ok(inst)
}

/// Distributed PCA split of `¼‖θθᵀ − ΣM_i‖²_F`.
pub fn distributed_pca(m_list: &[DMatrix<f64>]) -> Result<ProblemInstance> {
    let n = m_list.len();
    let dim = m_list.first().map(|m| m.nrows()).ok_or_else(|| Error::Size("empty matrix list".into()))?;
    if m_list.iter().any(|m| m.nrows() != dim || m.ncols() != dim) {
        return Err(Error::Shape("PCA matrices must be square with a common size".into()));
    }
    let locals: Vec<LocalOracle> = m_list
        .iter()
        .map(|m| LocalOracle::Pca { mat: (m + m.transpose()) * 0.5, n_agents: n as f64 })
        .collect();
    let sum = locals.iter().fold(DMatrix::zeros(dim, dim), |acc, l| match l {
        LocalOracle::Pca { mat, .. } => acc + mat,
        _ => acc,
    });
    let (vals, vecs) = linalg::sym_eigen_sorted(&sum);
    let radius = 2.0 * vals[dim - 1].abs().sqrt().max(1.0);
    let mut inst = ProblemInstance::new("distributed-pca", locals, radius, 0)?;
    let lead = vals[dim - 1];
    if lead > 0.0 {
        let theta = vecs.column(dim - 1) * lead.sqrt();
        let (hv, hvec) = linalg::sym_eigen_sorted(&inst.hessian(&theta));
        let kind = if hv[0] < -1e-9 { CriticalKind::StrictSaddle } else { CriticalKind::LocalMinCandidate };
        inst.critical_points.push(KnownCritical { theta, kind, lambda_min: hv[0], u_u: hvec.column(0).into_owned() });
    }
    Ok(inst)
}

/// Phase retrieval `¼Σ((a_iᵀθ)² − y_i)² + (λ/2)‖θ‖²`.
pub fn phase_retrieval(a_list: &[DVector<f64>], y_list: &[f64], lambda: f64) -> Result<ProblemInstance> {
    let n = a_list.len();
    if n == 0 || y_list.len() != n {
        return Err(Error::Shape("need one measurement per sensing vector".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::Parameter("lambda must be positive".into()));
    }
    let reg = lambda / n as f64;
    let locals = a_list.iter().zip(y_list).map(|(a, &y)| LocalOracle::PhaseRetrieval { a: a.clone(), y, reg }).collect();
    let radius = 2.0 * y_list.iter().cloned().fold(1.0, f64::max).sqrt();
    ProblemInstance::new("phase-retrieval", locals, radius, 0)
}

/// Matrix sensing `¼Σ(⟨A_i, TTᵀ⟩ − y_i)² + (λ/2)‖T‖²_F`, `T ∈ R^{m×r}`.
pub fn matrix_sensing(a_list: &[DMatrix<f64>], y_list: &[f64], lambda: f64, rank: usize) -> Result<ProblemInstance> {
    let n = a_list.len();
    if n == 0 || y_list.len() != n || rank == 0 {
        return Err(Error::Shape("need one measurement per sensing matrix and rank ≥ 1".into()));
    }
    let rows = a_list[0].nrows();
    if a_list.iter().any(|a| a.nrows() != rows || a.ncols() != rows) {
        return Err(Error::Shape("sensing matrices must be square with a common size".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::Parameter("lambda must be positive".into()));
    }
    let reg = lambda / n as f64;
    let locals = a_list
        .iter()
        .zip(y_list)
        .map(|(a, &y)| LocalOracle::MatrixSensing { a: (a + a.transpose()) * 0.5, y, reg, rows, rank })
        .collect();
    let radius = 2.0 * y_list.iter().map(|y| y.abs()).fold(1.0, f64::max).sqrt();
    ProblemInstance::new("matrix-sensing", locals, radius, 0)
}

/// Gaussian mixture negative log-likelihood with `q` components and
/// covariance `sigma_tilde · I`.
pub fn gaussian_mixture(z_list: &[DVector<f64>], sigma_tilde: f64, q: usize, ridge: f64) -> Result<ProblemInstance> {
    if !(sigma_tilde > 0.0) {
        return Err(Error::Parameter(format!("sigma_tilde must be positive, got {sigma_tilde}")));
    }
    if q < 2 || z_list.is_empty() || ridge < 0.0 {
        return Err(Error::Parameter("need q ≥ 2 components, data, and ridge ≥ 0".into()));
    }
    let dz = z_list[0].len();
    if z_list.iter().any(|z| z.len() != dz) {
        return Err(Error::Shape("data points have different dimensions".into()));
    }
    let locals = z_list.iter().map(|z| LocalOracle::GaussianMixture { z: z.clone(), var: sigma_tilde, q, ridge }).collect();
    let spread = z_list.iter().map(|z| z.norm()).fold(1.0, f64::max);
    ProblemInstance::new("gaussian-mixture", locals, 2.0 * spread, 0)
}

/// Bilinear logistic regression; labels in `{0, 1}` map to `ξ̃ = 2ξ − 1`.
pub fn bilinear_logistic(s_list: &[DVector<f64>], xi_list: &[f64], tau: f64, d: usize, p: usize) -> Result<ProblemInstance> {
    let n = s_list.len();
    if n == 0 || xi_list.len() != n {
        return Err(Error::Shape("need one label per sample".into()));
    }
    if s_list.iter().any(|s| s.len() != d) || p == 0 {
        return Err(Error::Shape(format!("samples must have dimension d={d} and p ≥ 1")));
    }
    if !(tau > 0.0) {
        return Err(Error::Parameter("tau must be positive".into()));
    }
    if xi_list.iter().any(|&x| x != 0.0 && x != 1.0) {
        return Err(Error::Parameter("labels must be 0 or 1".into()));
    }
    let locals = s_list
        .iter()
        .zip(xi_list)
        .map(|(s, &xi)| LocalOracle::BilinearLogistic { s: s.clone(), label: 2.0 * xi - 1.0, tau, n_agents: n as f64, p })
        .collect();
    let mut inst = ProblemInstance::new("bilinear-logistic", locals, 3.0, 0)?;
    let origin = DVector::zeros(d * p + p);
    let (hv, hvec) = linalg::sym_eigen_sorted(&inst.hessian(&origin));
    let kind = if hv[0] < 0.0 { CriticalKind::StrictSaddle } else { CriticalKind::LocalMinCandidate };
    inst.critical_points.push(KnownCritical { theta: origin, kind, lambda_min: hv[0], u_u: hvec.column(0).into_owned() });
    Ok(inst)
}

/// Single-neuron binary classification losses.
pub fn neuron_losses(s_list: &[DVector<f64>], xi_list: &[f64], variant: NeuronVariant, lambda: f64, mu: f64) -> Result<ProblemInstance> {
    let n = s_list.len();
    if n == 0 || xi_list.len() != n {
        return Err(Error::Shape("need one label per sample".into()));
    }
    if !(lambda > 0.0) || (variant == NeuronVariant::LogSigmoidGap && !(mu > 0.0)) {
        return Err(Error::Parameter("lambda (and mu for log-sigmoid-gap) must be positive".into()));
    }
    let locals = s_list
        .iter()
        .zip(xi_list)
        .map(|(s, &xi)| LocalOracle::Neuron { s: s.clone(), xi, variant, lambda, mu, n_agents: n as f64 })
        .collect();
    ProblemInstance::new("neuron", locals, 3.0, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnnulusMethod {
    ClosedFormBound,
    SampledInfimum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnulusCertificate {
    pub r: f64,
    pub eps: f64,
    /// Certified margin: the closed-form bound when available and positive,
    /// otherwise the sampled infimum.
    pub delta: f64,
    pub sampled_infimum: f64,
    pub closed_form: Option<f64>,
    pub method: AnnulusMethod,
    pub certified: bool,
}

/// Closed-form lower bound of `min_i ⟨∇f_i(θ), θ/‖θ‖⟩` over the shell, for the
/// classes that have one.
pub fn annulus_closed_form(problem: &ProblemInstance, r: f64, eps: f64) -> Option<f64> {
    let inner = r - eps;
    let mut bound = f64::INFINITY;
    for l in &problem.locals {
        let b = match l {
            LocalOracle::Ridge { lambda, .. } => lambda * inner,
            LocalOracle::PhaseRetrieval { y, reg, .. } | LocalOracle::MatrixSensing { y, reg, .. } => {
                reg * inner - y * y / (4.0 * inner)
            }
            LocalOracle::Pca { mat, n_agents } => {
                let k4 = problem.m as f64;
                let smax = linalg::spectral_norm(mat);
                // increasing in ‖θ‖ once past the stationary radius
                let at = |t: f64| t.powi(3) / (n_agents * k4) - smax * t;
                let turn = (smax * n_agents * k4 / 3.0).sqrt();
                if turn > inner && turn < r { at(turn) } else { at(inner).min(at(r)) }
            }
            _ => return None,
        };
        bound = bound.min(b);
    }
    Some(bound)
}

/// Sampled infimum of `min_i ⟨∇f_i(θ), θ/‖θ‖⟩` over `{R−ε ≤ ‖θ‖ ≤ R}`, with
/// extra probes along registered critical-point eigenvectors.
pub fn annulus_margin(problem: &ProblemInstance, r: f64, eps: f64, sample_count: usize, seed: u64) -> Result<AnnulusCertificate> {
    if !(eps > 0.0 && eps < r) {
        return Err(Error::Parameter(format!("need 0 < eps < R, got eps={eps}, R={r}")));
    }
    let m = problem.m;
    let mut g = rng(seed, stream::SAMPLE);
    let mut dirs: Vec<DVector<f64>> = (0..sample_count).map(|_| rng::unit_vector(&mut g, m)).collect();
    for c in &problem.critical_points {
        dirs.push(c.u_u.normalize());
        dirs.push(-c.u_u.normalize());
    }
    let mut inf = f64::INFINITY;
    for (k, dir) in dirs.iter().enumerate() {
        let radii = if k < sample_count { vec![r - eps + eps * g.random::<f64>()] } else { vec![r - eps, r - 0.5 * eps, r] };
        for rho in radii {
            let theta = dir * rho;
            for l in &problem.locals {
                inf = inf.min(l.gradient(&theta).dot(dir));
            }
        }
    }
    let closed = annulus_closed_form(problem, r, eps);
    let (delta, method) = match closed {
        Some(b) if b > 0.0 => (b, AnnulusMethod::ClosedFormBound),
        _ => (inf, AnnulusMethod::SampledInfimum),
    };
    Ok(AnnulusCertificate { r, eps, delta, sampled_infimum: inf, closed_form: closed, method, certified: delta > 0.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalClass {
    pub kind: CriticalKind,
    pub lambda_min: f64,
    pub u_u: DVector<f64>,
}

/// Strict saddle iff `λ_min(∇²F(θ)) < −delta_tol`.
pub fn classify_critical(problem: &ProblemInstance, theta: &DVector<f64>, delta_tol: f64) -> Result<CriticalClass> {
    let grad = problem.gradient(theta).norm();
    let scale = problem.gradient_scale(theta);
    if grad > 1e-8 * scale {
        return Err(Error::Precondition(format!("point is not stationary: ‖∇F‖ = {grad:e}")));
    }
    let (vals, vecs) = linalg::sym_eigen_sorted(&problem.hessian(theta));
    let kind = if vals[0] < -delta_tol { CriticalKind::StrictSaddle } else { CriticalKind::LocalMinCandidate };
    Ok(CriticalClass { kind, lambda_min: vals[0], u_u: vecs.column(0).into_owned() })
}

/// Draws `n` points from an equal-weight two-component scalar mixture.
pub fn draw_two_mixture(n: usize, mu: (f64, f64), std: f64, seed: u64) -> Vec<DVector<f64>> {
    let mut g = rng(seed, stream::PROBLEM);
    (0..n)
        .map(|_| {
            let centre = if g.random::<bool>() { mu.0 } else { mu.1 };
            DVector::from_element(1, centre + rng::gaussian_vector(&mut g, 1, std)[0])
        })
        .collect()
}
