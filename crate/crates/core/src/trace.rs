//! Per-iteration run records shared by both engines.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Dgd,
    Dogt,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dgd => "dgd",
            Algorithm::Dogt => "dogt",
        }
    }
}

/// One recorded iteration. Engine-specific fields are `None` when unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    /// `L_α` (DGD) or `L` (DOGT).
    pub lyapunov: f64,
    /// Merit `d` (DOGT).
    pub merit: Option<f64>,
    /// `‖∇L_α(x)‖` (DGD).
    pub grad_l_norm: Option<f64>,
    /// `(1/n)√(Σ_i‖x_i − x̄‖²)` with the arithmetic mean.
    pub cons_err: f64,
    /// `max_i ‖x_i − x̄‖` with the arithmetic mean.
    pub max_agent_dev: f64,
    /// `‖∇F(x̄)‖` at the engine's mean (arithmetic for DGD, `rᵀx` for DOGT).
    pub grad_f_mean_norm: f64,
    /// `‖Σ_i y_i‖` (DOGT).
    pub y_bar_norm: Option<f64>,
    /// `‖Σ_i y_i − Σ_i ∇f_i(x_i)‖` (DOGT).
    pub track_residual: Option<f64>,
    /// `‖∇F_c(x)‖`.
    pub grad_fc_norm: f64,
    /// `|⟨x̄ − θ*, u^u⟩|` when a saddle is registered.
    pub proj_eu: Option<f64>,
    /// `‖x̄ − θ*‖` when a saddle is registered.
    pub dist_to_saddle: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum Termination {
    MaxIters,
    Converged { iter: usize },
    Diverged { iter: usize },
}

/// A completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub algo: Algorithm,
    pub records: Vec<TraceRecord>,
    pub x0: DVector<f64>,
    /// Last finite iterate.
    pub x: DVector<f64>,
    /// Last finite tracking variable (DOGT).
    pub y: Option<DVector<f64>>,
    pub iterations: usize,
    pub termination: Termination,
    /// `max_ν ‖∇F_c(x^ν)‖` over every iteration, recorded or not.
    pub h_sup: f64,
}

impl Trace {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("runs record iteration 0")
    }

    pub fn first(&self) -> &TraceRecord {
        &self.records[0]
    }
}

/// Reference point for the saddle projections.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleRef {
    pub theta: DVector<f64>,
    pub u_u: DVector<f64>,
}

/// Shared run controls.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub max_iters: usize,
    pub record_stride: usize,
    /// Stationarity tolerance (sup-norm).
    pub stop_tol: f64,
    pub saddle: Option<SaddleRef>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { max_iters: 1000, record_stride: 1, stop_tol: 1e-10, saddle: None }
    }
}

/// `(1/n)√(Σ_i‖x_i − x̄‖²)` and `max_i ‖x_i − x̄‖`.
pub fn consensus_errors(x: &DVector<f64>, m: usize) -> (f64, f64) {
    let n = x.len() / m;
    let mean = linalg::block_mean(x, m);
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    for i in 0..n {
        let d = (linalg::block(x, i, m) - &mean).norm_squared();
        sum += d;
        max = max.max(d.sqrt());
    }
    (sum.sqrt() / n as f64, max)
}

/// Saddle projections of a mean iterate.
pub fn saddle_projections(x_bar: &DVector<f64>, saddle: &Option<SaddleRef>) -> (Option<f64>, Option<f64>) {
    match saddle {
        Some(s) => {
            let d = x_bar - &s.theta;
            (Some(d.dot(&s.u_u).abs()), Some(d.norm()))
        }
        None => (None, None),
    }
}

/// First index after which `values` changes by less than `rel` (relative)
/// across a window of `window` entries.
pub fn plateau_index(values: &[f64], window: usize, rel: f64) -> Option<usize> {
    if values.len() <= window {
        return None;
    }
    (0..values.len() - window).find(|&k| {
        let a = values[k];
        let b = values[k + window];
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE) || (a == 0.0 && b == 0.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consensus_error_uses_one_over_n() {
        let x = DVector::from_vec(vec![1.0, -1.0, 0.0, 0.0]);
        let (c, mx) = consensus_errors(&x, 1);
        assert!((c - 2f64.sqrt() / 4.0).abs() < 1e-15);
        assert_eq!(mx, 1.0);
    }

    #[test]
    fn plateau_detection() {
        let mut v: Vec<f64> = (0..50).map(|k| 1.0 / (k as f64 + 1.0)).collect();
        v.extend(std::iter::repeat(0.02).take(200));
        assert_eq!(plateau_index(&v, 100, 1e-12), Some(49));
        assert_eq!(plateau_index(&v[..40], 100, 1e-12), None);
    }
}
