//! Experiment runner: presets, seeded sweeps, CSV traces and run metadata.
//!
//! Trace CSV header (fixed):
//!
//! ```text
//! iter,lyapunov,merit,grad_l_norm,cons_err,max_agent_dev,grad_f_mean_norm,
//! y_bar_norm,track_residual,grad_fc_norm,proj_eu,dist_to_saddle
//! ```
//!
//! Floats are written with 17 significant digits; fields an engine does not
//! produce are left empty.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dgd;
use crate::dogt::{self, AlphaRegime, DogtDiagnostics, DogtOptions, LyapunovParams, YInit};
use crate::error::{Error, Result};
use crate::linalg;
use crate::netweights::{self, MixingMatrix, Topology, TopologyKind};
use crate::problems::{self, ProblemInstance};
use crate::rng::{self, rng, stream};
use crate::saddle;
use crate::trace::{Algorithm, RunOptions, SaddleRef, Trace, TraceRecord};

pub const TRACE_HEADER: [&str; 12] = [
    "iter",
    "lyapunov",
    "merit",
    "grad_l_norm",
    "cons_err",
    "max_agent_dev",
    "grad_f_mean_norm",
    "y_bar_norm",
    "track_residual",
    "grad_fc_norm",
    "proj_eu",
    "dist_to_saddle",
];

/// Escape needs the final projection and distance above this multiple of
/// their initial values.
pub const ESCAPE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemPreset {
    /// `m`-dimensional quadratic with one saddle (or its convexified twin).
    Quadratic { m: usize, delta: f64, b_std: f64, convexified: bool },
    /// Bilinear logistic regression with `s_i ~ N(ξ_i, 1)`, `ξ_i ∈ {0, 1}`.
    Bilinear { d: usize, p: usize, tau: f64 },
    /// Two-component mixture estimation from one point per agent.
    Gmm { mu1: f64, mu2: f64, std: f64, sigma_tilde: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphPreset {
    Ring,
    CycleDirected,
    Path,
    Complete,
    RandomUndirected,
    RandomDirected,
}

impl GraphPreset {
    pub fn directed(self) -> bool {
        matches!(self, GraphPreset::CycleDirected | GraphPreset::RandomDirected)
    }

    fn kind(self) -> TopologyKind {
        match self {
            GraphPreset::Ring | GraphPreset::CycleDirected => TopologyKind::Ring,
            GraphPreset::Path => TopologyKind::Path,
            GraphPreset::Complete => TopologyKind::Complete,
            GraphPreset::RandomUndirected | GraphPreset::RandomDirected => TopologyKind::RandomStronglyConnected,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GraphPreset::Ring => "ring",
            GraphPreset::CycleDirected => "cycle-directed",
            GraphPreset::Path => "path",
            GraphPreset::Complete => "complete",
            GraphPreset::RandomUndirected => "random-undirected",
            GraphPreset::RandomDirected => "random-directed",
        }
    }
}

impl std::str::FromStr for GraphPreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ring" => GraphPreset::Ring,
            "cycle-directed" => GraphPreset::CycleDirected,
            "path" => GraphPreset::Path,
            "complete" => GraphPreset::Complete,
            "random-undirected" => GraphPreset::RandomUndirected,
            "random-directed" => GraphPreset::RandomDirected,
            other => return Err(Error::Kind(format!("unknown graph preset '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub preset: GraphPreset,
    pub n: usize,
    /// Seed for random topologies.
    #[serde(default)]
    pub seed: u64,
}

/// Step-size policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum AlphaPolicy {
    Explicit { value: f64 },
    /// `factor · σ_min(I + D)/L_c` for DGD and `factor ·` the admissible bound
    /// for DOGT.
    Theoretical { factor: f64 },
    /// `factor · σ_min(I + D)/max|λ(∇²F(θ*))|` for both algorithms.
    HessianScaled { factor: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "kebab-case")]
pub enum InitRecipe {
    /// `x_i⁰ = θ* + ε_i` with Gaussian `ε_i`.
    SaddlePerturbed { std: f64 },
    /// Every agent starts at one point drawn uniformly from `[lo, hi]^m`.
    SharedUniform { lo: f64, hi: f64 },
    /// Independent Gaussian draws per agent.
    Gaussian { std: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: ProblemPreset,
    pub graph: GraphSpec,
    pub algorithms: Vec<Algorithm>,
    pub alpha: AlphaPolicy,
    #[serde(default)]
    pub force: bool,
    #[serde(default)]
    pub regime: AlphaRegime,
    pub iters: usize,
    pub seeds: Vec<u64>,
    /// Seed for the problem instance when it is shared across seeds.
    #[serde(default)]
    pub problem_seed: u64,
    /// Draw a fresh instance per seed instead of sharing one.
    #[serde(default)]
    pub instance_per_seed: bool,
    pub init: InitRecipe,
    pub y_init: YInit,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub contour: Option<ContourSpec>,
}

fn default_stride() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// All validation failures, collected before anything runs.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.seeds.is_empty() {
            errs.push("seed list is empty".to_string());
        }
        if self.iters == 0 {
            errs.push("iteration budget must be positive".to_string());
        }
        if self.algorithms.is_empty() {
            errs.push("no algorithm selected".to_string());
        }
        if self.record_stride == 0 {
            errs.push("record stride must be positive".to_string());
        }
        if self.graph.n == 0 {
            errs.push("graph needs at least one agent".to_string());
        }
        if self.graph.preset.directed() && self.algorithms.contains(&Algorithm::Dgd) {
            errs.push(format!("DGD needs an undirected graph, got {}", self.graph.preset.name()));
        }
        match &self.alpha {
            AlphaPolicy::Explicit { value } if !(*value > 0.0) => errs.push(format!("alpha must be positive, got {value}")),
            AlphaPolicy::Theoretical { factor } | AlphaPolicy::HessianScaled { factor } if !(*factor > 0.0) => {
                errs.push(format!("alpha factor must be positive, got {factor}"))
            }
            _ => {}
        }
        match &self.problem {
            ProblemPreset::Quadratic { m, delta, b_std, .. } => {
                if *m < 2 {
                    errs.push("quadratic preset needs m ≥ 2".to_string());
                }
                if !(*delta > 0.0) || !(*b_std >= 0.0) {
                    errs.push("quadratic preset needs delta > 0 and b_std ≥ 0".to_string());
                }
            }
            ProblemPreset::Bilinear { d, p, tau } => {
                if *d == 0 || *p == 0 || !(*tau > 0.0) {
                    errs.push("bilinear preset needs d, p ≥ 1 and tau > 0".to_string());
                }
            }
            ProblemPreset::Gmm { std, sigma_tilde, .. } => {
                if !(*std > 0.0) || !(*sigma_tilde > 0.0) {
                    errs.push("gmm preset needs positive std and sigma_tilde".to_string());
                }
            }
        }
        if let InitRecipe::SharedUniform { lo, hi } = self.init {
            if !(lo < hi) {
                errs.push("shared-uniform init needs lo < hi".to_string());
            }
        }
        if self.contour.is_some() && self.problem_dim() != 2 {
            errs.push("contour output needs a two-dimensional problem".to_string());
        }
        errs
    }

    pub fn problem_dim(&self) -> usize {
        match &self.problem {
            ProblemPreset::Quadratic { m, .. } => *m,
            ProblemPreset::Bilinear { d, p, .. } => d * p + p,
            ProblemPreset::Gmm { .. } => 2,
        }
    }
}

/// Quadratic saddle-escape experiment: ring of 10, `m = 20`, `δ = 0.01`.
pub fn preset_quadratic() -> ExperimentConfig {
    ExperimentConfig {
        name: "quadratic".into(),
        problem: ProblemPreset::Quadratic { m: 20, delta: 0.01, b_std: 1e3, convexified: false },
        graph: GraphSpec { preset: GraphPreset::Ring, n: 10, seed: 0 },
        algorithms: vec![Algorithm::Dgd, Algorithm::Dogt],
        alpha: AlphaPolicy::HessianScaled { factor: 0.99 },
        force: true,
        regime: AlphaRegime::Practical,
        iters: 8000,
        seeds: (0..50).collect(),
        problem_seed: 2024,
        instance_per_seed: false,
        init: InitRecipe::SaddlePerturbed { std: 1.0 },
        y_init: YInit::RandomizedConsensus,
        record_stride: 10,
        out_dir: None,
        contour: None,
    }
}

/// Bilinear logistic regression, `d = p = 1`, `τ = 0.2`, five agents.
pub fn preset_bilinear(directed: bool) -> ExperimentConfig {
    ExperimentConfig {
        name: if directed { "bilinear-directed" } else { "bilinear" }.into(),
        problem: ProblemPreset::Bilinear { d: 1, p: 1, tau: 0.2 },
        graph: GraphSpec { preset: if directed { GraphPreset::CycleDirected } else { GraphPreset::Ring }, n: 5, seed: 0 },
        algorithms: if directed { vec![Algorithm::Dogt] } else { vec![Algorithm::Dgd, Algorithm::Dogt] },
        alpha: AlphaPolicy::Explicit { value: 0.9 },
        force: true,
        regime: AlphaRegime::Practical,
        iters: 100,
        seeds: (0..10).collect(),
        problem_seed: 0,
        instance_per_seed: true,
        init: InitRecipe::SharedUniform { lo: -1.0, hi: 1.0 },
        y_init: YInit::Canonical,
        record_stride: 1,
        out_dir: None,
        contour: Some(ContourSpec { lo: [-2.0, -2.0], hi: [2.0, 2.0], points: 81 }),
    }
}

/// Scalar two-mixture, means `0` and `−5`, variance 25, `σ̃ = 1`.
pub fn preset_gmm(directed: bool) -> ExperimentConfig {
    ExperimentConfig {
        name: if directed { "gmm-directed" } else { "gmm" }.into(),
        problem: ProblemPreset::Gmm { mu1: 0.0, mu2: -5.0, std: 5.0, sigma_tilde: 1.0 },
        graph: GraphSpec { preset: if directed { GraphPreset::CycleDirected } else { GraphPreset::Ring }, n: 5, seed: 0 },
        algorithms: if directed { vec![Algorithm::Dogt] } else { vec![Algorithm::Dgd, Algorithm::Dogt] },
        alpha: AlphaPolicy::Explicit { value: 0.1 },
        force: true,
        regime: AlphaRegime::Practical,
        iters: 250,
        seeds: (0..10).collect(),
        problem_seed: 0,
        instance_per_seed: true,
        init: InitRecipe::SharedUniform { lo: -10.0, hi: 10.0 },
        y_init: YInit::Canonical,
        record_stride: 1,
        out_dir: None,
        contour: Some(ContourSpec { lo: [-15.0, -15.0], hi: [15.0, 15.0], points: 121 }),
    }
}

pub fn preset(name: &str, directed: bool) -> Result<ExperimentConfig> {
    match name {
        "quadratic" => Ok(preset_quadratic()),
        "bilinear" => Ok(preset_bilinear(directed)),
        "gmm" => Ok(preset_gmm(directed)),
        other => Err(Error::Kind(format!("unknown preset '{other}'"))),
    }
}

/// Builds the problem instance for `seed`.
pub fn build_problem(preset: &ProblemPreset, n: usize, seed: u64) -> Result<ProblemInstance> {
    match preset {
        ProblemPreset::Quadratic { m, delta, b_std, convexified } => {
            if *convexified {
                problems::quadratic_convexified(*m, n, *delta, *b_std, seed)
            } else {
                problems::quadratic_family(*m, n, -*delta, *b_std, seed)
            }
        }
        ProblemPreset::Bilinear { d, p, tau } => {
            let mut g = rng(seed, stream::PROBLEM);
            let xi: Vec<f64> = (0..n).map(|_| if g.random::<bool>() { 1.0 } else { 0.0 }).collect();
            let s: Vec<DVector<f64>> = xi.iter().map(|&x| rng::gaussian_vector(&mut g, *d, 1.0).add_scalar(x)).collect();
            problems::bilinear_logistic(&s, &xi, *tau, *d, *p)
        }
        ProblemPreset::Gmm { mu1, mu2, std, sigma_tilde } => {
            let z = problems::draw_two_mixture(n, (*mu1, *mu2), *std, seed);
            problems::gaussian_mixture(&z, *sigma_tilde, 2, 0.0)
        }
    }
}

/// Mixing matrices for a graph: `D` (undirected only) and the `(R, C)` pair.
#[derive(Debug, Clone)]
pub struct Network {
    pub topology: Topology,
    pub d: Option<MixingMatrix>,
    pub r: MixingMatrix,
    pub c: MixingMatrix,
}

pub fn build_network(spec: &GraphSpec) -> Result<Network> {
    let directed = spec.preset.directed();
    let topology = netweights::build_topology(&spec.preset.kind(), spec.n, directed, spec.seed)?;
    if directed {
        let r = netweights::row_stochastic_weights(&topology)?;
        let c = netweights::col_stochastic_weights(&topology)?;
        Ok(Network { topology, d: None, r, c })
    } else {
        let d = netweights::metropolis_weights(&topology)?;
        Ok(Network { topology, d: Some(d.clone()), r: d.clone(), c: d })
    }
}

/// Initial iterate for a seed.
pub fn initial_point(recipe: &InitRecipe, problem: &ProblemInstance, seed: u64) -> Result<DVector<f64>> {
    let (n, m) = (problem.n, problem.m);
    match recipe {
        InitRecipe::SaddlePerturbed { std } => {
            let s = problem
                .strict_saddle()
                .ok_or_else(|| Error::Precondition("saddle-perturbed init needs a registered strict saddle".into()))?;
            Ok(crate::saddle::perturbed_init(&s.theta, n, *std, seed))
        }
        InitRecipe::SharedUniform { lo, hi } => {
            let mut g = rng(seed, stream::INIT_X);
            let p = DVector::from_iterator(m, (0..m).map(|_| lo + (hi - lo) * g.random::<f64>()));
            Ok(linalg::replicate(&p, n))
        }
        InitRecipe::Gaussian { std } => Ok(rng::gaussian_vector(&mut rng(seed, stream::INIT_X), n * m, *std)),
    }
}

/// Resolved step for one algorithm.
pub fn resolve_alpha(policy: &AlphaPolicy, algo: Algorithm, net: &Network, problem: &ProblemInstance, regime: AlphaRegime) -> Result<f64> {
    let n = problem.n;
    let sigma_i_plus = |d: &MixingMatrix| linalg::sigma_min(&(DMatrix::<f64>::identity(n, n) + &d.entries));
    match policy {
        AlphaPolicy::Explicit { value } => Ok(*value),
        AlphaPolicy::Theoretical { factor } => match algo {
            Algorithm::Dgd => {
                let d = net.d.as_ref().ok_or_else(|| Error::Precondition("DGD needs doubly stochastic weights".into()))?;
                Ok(factor * dgd::alpha_max(d, problem.smoothness.l_c)?)
            }
            Algorithm::Dogt => {
                let spec = netweights::spectral_constants(&net.r, &net.c)?;
                Ok(factor * dogt::alpha_bound(&spec, problem.smoothness.l_c, problem.smoothness.l, n).get(regime))
            }
        },
        AlphaPolicy::HessianScaled { factor } => {
            let d = net.d.as_ref().ok_or_else(|| Error::Precondition("hessian-scaled step needs doubly stochastic weights".into()))?;
            let s = problem.strict_saddle().or(problem.critical_points.first()).ok_or_else(|| {
                Error::Precondition("hessian-scaled step needs a registered critical point".into())
            })?;
            let (vals, _) = linalg::sym_eigen_sorted(&problem.hessian(&s.theta));
            let l = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            Ok(factor * sigma_i_plus(d) / l)
        }
    }
}

/// One finished run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub algo: Algorithm,
    pub alpha: f64,
    pub trace: Trace,
    pub params: Option<LyapunovParams>,
    pub diagnostics: Option<DogtDiagnostics>,
    /// Recorded means `x̄` (arithmetic) per recorded iteration.
    pub means: Vec<(usize, DVector<f64>)>,
    pub saddle: Option<SaddleRef>,
}

impl RunResult {
    pub fn escaped(&self) -> Option<bool> {
        let (a, b) = (self.trace.first(), self.trace.last());
        match (a.proj_eu, b.proj_eu, a.dist_to_saddle, b.dist_to_saddle) {
            (Some(p0), Some(p1), Some(d0), Some(d1)) => Some(p1 > ESCAPE_FACTOR * p0 && d1 > ESCAPE_FACTOR * d0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Artifacts {
    pub config: ExperimentConfig,
    pub runs: Vec<RunResult>,
    pub metadata: serde_json::Value,
    pub summary: Vec<SummaryRow>,
}

impl Artifacts {
    pub fn runs_for(&self, algo: Algorithm) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(move |r| r.algo == algo)
    }
}

fn run_one(
    cfg: &ExperimentConfig,
    problem: &ProblemInstance,
    net: &Network,
    algo: Algorithm,
    seed: u64,
    x0: &DVector<f64>,
) -> Result<RunResult> {
    let alpha = resolve_alpha(&cfg.alpha, algo, net, problem, cfg.regime)?;
    let saddle = problem.strict_saddle().map(|s| SaddleRef { theta: s.theta.clone(), u_u: s.u_u.clone() });
    let opts = RunOptions { max_iters: cfg.iters, record_stride: cfg.record_stride, stop_tol: 0.0, saddle: saddle.clone() };
    let (trace, params, diagnostics) = match algo {
        Algorithm::Dgd => {
            let d = net.d.as_ref().ok_or_else(|| Error::Precondition("DGD needs doubly stochastic weights".into()))?;
            (dgd::run_dgd(problem, d, alpha, x0, &opts)?, None, None)
        }
        Algorithm::Dogt => {
            let dopts = DogtOptions { run: opts, y_init: cfg.y_init, seed, force: cfg.force, regime: cfg.regime, ..Default::default() };
            let run = dogt::run_dogt(problem, &net.r, &net.c, alpha, x0, &dopts)?;
            (run.trace, Some(run.params), Some(run.diagnostics))
        }
    };
    let means = if cfg.contour.is_some() { trajectory_means(problem, net, cfg, algo, alpha, x0, seed)? } else { Vec::new() };
    Ok(RunResult { seed, algo, alpha, trace, params, diagnostics, means, saddle })
}

/// Re-runs the iteration and keeps the arithmetic means at each recorded step.
fn trajectory_means(
    problem: &ProblemInstance,
    net: &Network,
    cfg: &ExperimentConfig,
    algo: Algorithm,
    alpha: f64,
    x0: &DVector<f64>,
    seed: u64,
) -> Result<Vec<(usize, DVector<f64>)>> {
    let m = problem.m;
    let stride = cfg.record_stride.max(1);
    let mut out = vec![(0, linalg::block_mean(x0, m))];
    match algo {
        Algorithm::Dgd => {
            let d = net.d.as_ref().expect("validated");
            let mut s = dgd::DgdState::new(x0.clone());
            for k in 1..=cfg.iters {
                s = dgd::dgd_step(&s, d, problem, alpha)?;
                if k % stride == 0 || k == cfg.iters {
                    out.push((k, linalg::block_mean(&s.x, m)));
                }
            }
        }
        Algorithm::Dogt => {
            let y0 = dogt::init_y(x0, &net.c, problem, seed, cfg.y_init)?;
            let mut s = dogt::DogtState::new(x0.clone(), y0);
            for k in 1..=cfg.iters {
                s = dogt::dogt_step(&s, &net.r, &net.c, alpha, problem)?;
                if k % stride == 0 || k == cfg.iters {
                    out.push((k, linalg::block_mean(&s.x, m)));
                }
            }
        }
    }
    Ok(out)
}

/// Runs every (seed, algorithm) pair in parallel and writes outputs when
/// `out_dir` is set.
pub fn run(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(Error::Validation(errs.join("; ")));
    }
    let net = build_network(&cfg.graph)?;
    let n = cfg.graph.n;
    let shared = if cfg.instance_per_seed { None } else { Some(build_problem(&cfg.problem, n, cfg.problem_seed)?) };
    let jobs: Vec<(u64, Algorithm)> = cfg.seeds.iter().flat_map(|&s| cfg.algorithms.iter().map(move |&a| (s, a))).collect();
    let results: Vec<Result<RunResult>> = jobs
        .par_iter()
        .map(|&(seed, algo)| {
            let owned;
            let problem = match &shared {
                Some(p) => p,
                None => {
                    owned = build_problem(&cfg.problem, n, seed)?;
                    &owned
                }
            };
            let x0 = initial_point(&cfg.init, problem, seed)?;
            run_one(cfg, problem, &net, algo, seed, &x0)
        })
        .collect();
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let reference = match &shared {
        Some(p) => p.clone(),
        None => build_problem(&cfg.problem, n, cfg.seeds[0])?,
    };
    let metadata = metadata(cfg, &net, &reference, &runs)?;
    let summary = compare(&runs);
    let art = Artifacts { config: cfg.clone(), runs, metadata, summary };
    if let Some(dir) = &cfg.out_dir {
        write_artifacts(&art, dir, &reference)?;
    }
    Ok(art)
}

fn metadata(cfg: &ExperimentConfig, net: &Network, problem: &ProblemInstance, runs: &[RunResult]) -> Result<serde_json::Value> {
    let spec = netweights::spectral_constants(&net.r, &net.c)?;
    let sm = &problem.smoothness;
    let dogt_bounds = dogt::alpha_bound(&spec, sm.l_c, sm.l, problem.n);
    let dgd_bounds = match &net.d {
        Some(d) => json!({
            "alpha_max": dgd::alpha_max(d, sm.l_c)?,
            "alpha_second_order": dgd::alpha_second_order(d, sm.l_c)?,
            "sigma2": netweights::sigma2(&d.entries),
        }),
        None => serde_json::Value::Null,
    };
    let per_run: Vec<serde_json::Value> = runs
        .iter()
        .map(|r| {
            json!({
                "seed": r.seed,
                "algo": r.algo.name(),
                "alpha": r.alpha,
                "termination": r.trace.termination,
                "iterations": r.trace.iterations,
                "h_sup": r.trace.h_sup,
                "final": r.trace.last(),
                "escaped": r.escaped(),
                "lyapunov_params": r.params,
                "diagnostics": r.diagnostics,
            })
        })
        .collect();
    Ok(json!({
        "config": cfg,
        "prng": rng::PRNG_NAME,
        "graph": { "preset": cfg.graph.preset.name(), "n": net.topology.n, "edges": net.topology.edges, "directed": net.topology.directed },
        "weights": { "R": net.r.to_json(), "C": net.c.to_json() },
        "spectral": spec,
        "smoothness": sm,
        "problem": { "name": problem.name, "n": problem.n, "m": problem.m, "instance_per_seed": cfg.instance_per_seed },
        "critical_points": problem.critical_points.iter().map(|c| json!({
            "theta": c.theta.as_slice(), "kind": c.kind, "lambda_min": c.lambda_min, "u_u": c.u_u.as_slice()
        })).collect::<Vec<_>>(),
        "alpha_bounds": { "dogt": dogt_bounds, "dgd": dgd_bounds, "regime": cfg.regime },
        "xi_choice": "xi = zeta = r^T c",
        "runs": per_run,
    }))
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn record_row(r: &TraceRecord) -> Vec<String> {
    vec![
        r.iter.to_string(),
        fmt(r.lyapunov),
        opt(r.merit),
        opt(r.grad_l_norm),
        fmt(r.cons_err),
        fmt(r.max_agent_dev),
        fmt(r.grad_f_mean_norm),
        opt(r.y_bar_norm),
        opt(r.track_residual),
        fmt(r.grad_fc_norm),
        opt(r.proj_eu),
        opt(r.dist_to_saddle),
    ]
}

/// Writes one trace as CSV.
pub fn write_trace_csv(trace: &Trace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    for r in &trace.records {
        w.write_record(record_row(r)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Mean over runs of each column, aligned on recorded iterations.
pub fn aggregate(runs: &[&RunResult]) -> Vec<TraceRecord> {
    let Some(first) = runs.first() else { return Vec::new() };
    let len = runs.iter().map(|r| r.trace.records.len()).min().unwrap_or(0);
    let k = runs.len() as f64;
    let mean = |f: &dyn Fn(&TraceRecord) -> f64, i: usize| runs.iter().map(|r| f(&r.trace.records[i])).sum::<f64>() / k;
    let mean_opt = |f: &dyn Fn(&TraceRecord) -> Option<f64>, i: usize| -> Option<f64> {
        let vals: Option<Vec<f64>> = runs.iter().map(|r| f(&r.trace.records[i])).collect();
        vals.map(|v| v.iter().sum::<f64>() / k)
    };
    (0..len)
        .map(|i| TraceRecord {
            iter: first.trace.records[i].iter,
            lyapunov: mean(&|r| r.lyapunov, i),
            merit: mean_opt(&|r| r.merit, i),
            grad_l_norm: mean_opt(&|r| r.grad_l_norm, i),
            cons_err: mean(&|r| r.cons_err, i),
            max_agent_dev: mean(&|r| r.max_agent_dev, i),
            grad_f_mean_norm: mean(&|r| r.grad_f_mean_norm, i),
            y_bar_norm: mean_opt(&|r| r.y_bar_norm, i),
            track_residual: mean_opt(&|r| r.track_residual, i),
            grad_fc_norm: mean(&|r| r.grad_fc_norm, i),
            proj_eu: mean_opt(&|r| r.proj_eu, i),
            dist_to_saddle: mean_opt(&|r| r.dist_to_saddle, i),
        })
        .collect()
}

/// Grid evaluation of `F` over a rectangle (two-dimensional problems).
pub fn contour_grid(problem: &ProblemInstance, spec: &ContourSpec) -> Vec<(f64, f64, f64)> {
    let k = spec.points.max(2);
    let mut out = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            let a = spec.lo[0] + (spec.hi[0] - spec.lo[0]) * i as f64 / (k - 1) as f64;
            let b = spec.lo[1] + (spec.hi[1] - spec.lo[1]) * j as f64 / (k - 1) as f64;
            out.push((a, b, problem.value(&DVector::from_vec(vec![a, b]))));
        }
    }
    out
}

fn write_artifacts(art: &Artifacts, dir: &Path, reference: &ProblemInstance) -> Result<()> {
    fs::create_dir_all(dir)?;
    let graph = art.config.graph.preset.name();
    for r in &art.runs {
        write_trace_csv(&r.trace, &dir.join(format!("{}_{graph}_seed{}.csv", r.algo.name(), r.seed)))?;
        if !r.means.is_empty() {
            let mut w = csv::Writer::from_path(dir.join(format!("{}_{graph}_seed{}_means.csv", r.algo.name(), r.seed))).map_err(csv_err)?;
            let mut header = vec!["iter".to_string()];
            header.extend((0..r.means[0].1.len()).map(|k| format!("theta_{k}")));
            w.write_record(&header).map_err(csv_err)?;
            for (it, v) in &r.means {
                let mut row = vec![it.to_string()];
                row.extend(v.iter().map(|&x| fmt(x)));
                w.write_record(&row).map_err(csv_err)?;
            }
            w.flush()?;
        }
    }
    for algo in &art.config.algorithms {
        let runs: Vec<&RunResult> = art.runs_for(*algo).collect();
        let agg = aggregate(&runs);
        let trace = Trace {
            algo: *algo,
            records: agg,
            x0: DVector::zeros(0),
            x: DVector::zeros(0),
            y: None,
            iterations: 0,
            termination: crate::trace::Termination::MaxIters,
            h_sup: 0.0,
        };
        write_trace_csv(&trace, &dir.join(format!("{}_{graph}_aggregate.csv", algo.name())))?;
    }
    if let Some(spec) = &art.config.contour {
        if !art.config.instance_per_seed || art.config.seeds.len() == 1 {
            write_contour(reference, spec, &dir.join("contour_grid.csv"))?;
        } else {
            for &seed in &art.config.seeds {
                let p = build_problem(&art.config.problem, art.config.graph.n, seed)?;
                write_contour(&p, spec, &dir.join(format!("contour_grid_seed{seed}.csv")))?;
            }
        }
    }
    fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&art.metadata)?)?;
    fs::write(dir.join("config.json"), art.config.to_json()?)?;
    fs::write(dir.join("summary.txt"), summary_table(&art.summary))?;
    Ok(())
}

fn write_contour(problem: &ProblemInstance, spec: &ContourSpec, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["theta_0", "theta_1", "F"]).map_err(csv_err)?;
    for (a, b, f) in contour_grid(problem, spec) {
        w.write_record([fmt(a), fmt(b), fmt(f)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Final metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algo: Algorithm,
    pub seed: u64,
    pub alpha: f64,
    pub cons_err: f64,
    pub grad_f_mean_norm: f64,
    pub lyapunov: f64,
    pub escaped: Option<bool>,
}

/// Side-by-side final metrics.
pub fn compare(runs: &[RunResult]) -> Vec<SummaryRow> {
    runs.iter()
        .map(|r| {
            let last = r.trace.last();
            SummaryRow {
                algo: r.algo,
                seed: r.seed,
                alpha: r.alpha,
                cons_err: last.cons_err,
                grad_f_mean_norm: last.grad_f_mean_norm,
                lyapunov: last.lyapunov,
                escaped: r.escaped(),
            }
        })
        .collect()
}

/// Same table from traces read back from CSV files.
pub fn compare_files(paths: &[PathBuf]) -> Result<Vec<(String, TraceRecord)>> {
    paths.iter().map(|p| Ok((p.display().to_string(), read_last_record(p)?))).collect()
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse::<f64>().map(Some).map_err(|e| Error::Io(format!("bad float '{s}': {e}")))
    }
}

/// Reads every record of a trace CSV.
pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut rd = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if header != TRACE_HEADER {
        return Err(Error::Io(format!("{} does not have the trace header", path.display())));
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row.map_err(csv_err)?;
        let f = |k: usize| parse_opt(&row[k]);
        let req = |k: usize| f(k)?.ok_or_else(|| Error::Io(format!("missing {} in {}", TRACE_HEADER[k], path.display())));
        out.push(TraceRecord {
            iter: row[0].parse().map_err(|e| Error::Io(format!("bad iter: {e}")))?,
            lyapunov: req(1)?,
            merit: f(2)?,
            grad_l_norm: f(3)?,
            cons_err: req(4)?,
            max_agent_dev: req(5)?,
            grad_f_mean_norm: req(6)?,
            y_bar_norm: f(7)?,
            track_residual: f(8)?,
            grad_fc_norm: req(9)?,
            proj_eu: f(10)?,
            dist_to_saddle: f(11)?,
        });
    }
    Ok(out)
}

fn read_last_record(path: &Path) -> Result<TraceRecord> {
    read_trace_csv(path)?.pop().ok_or_else(|| Error::Io(format!("{} has no records", path.display())))
}

pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mut s = format!("{:<6} {:>6} {:>12} {:>24} {:>24} {:>24} {:>8}\n", "algo", "seed", "alpha", "cons_err", "grad_F_mean", "lyapunov", "escaped");
    for r in rows {
        let esc = r.escaped.map(|e| if e { "yes" } else { "no" }).unwrap_or("-");
        s.push_str(&format!(
            "{:<6} {:>6} {:>12.4e} {:>24.16e} {:>24.16e} {:>24.16e} {:>8}\n",
            r.algo.name(),
            r.seed,
            r.alpha,
            r.cons_err,
            r.grad_f_mean_norm,
            r.lyapunov,
            esc
        ));
    }
    s
}

/// Stochasticity, Perron and spectral certificates for a graph preset.
pub fn weights_report(spec: &GraphSpec) -> Result<serde_json::Value> {
    let net = build_network(spec)?;
    let constants = netweights::spectral_constants(&net.r, &net.c)?;
    let cert = |w: &MixingMatrix| {
        let (row, col) = w.stochasticity_residuals();
        json!({
            "kind": w.kind,
            "row_residual": row,
            "col_residual": col,
            "perron_residual": w.perron_residual(),
            "perron": w.perron().as_slice(),
            "compliant": w.is_compliant(&net.topology),
            "positive_diagonal": w.has_positive_diagonal(),
            "symmetric": w.is_symmetric(),
        })
    };
    Ok(json!({
        "graph": spec.preset.name(),
        "n": spec.n,
        "edges": net.topology.edges,
        "R": cert(&net.r),
        "C": cert(&net.c),
        "spectral": constants,
    }))
}

/// Instability certificate for DOGT at the embedded strict saddle of a
/// quadratic instance. `m = 1` draws the scalar instance and adds a `Q` scan.
/// `alpha = None` uses `0.1/L_c`.
pub fn saddle_report(graph: &GraphSpec, m: usize, delta: f64, seed: u64, alpha: Option<f64>) -> Result<serde_json::Value> {
    let net = build_network(graph)?;
    let p = if m == 1 {
        problems::scalar_quadratic_saddle(graph.n, delta, seed)?
    } else {
        problems::quadratic_family(m, graph.n, -delta, 1.0, seed)?
    };
    let alpha = alpha.unwrap_or(0.1 / p.smoothness.l_c);
    let theta = p.strict_saddle().ok_or_else(|| Error::Precondition("instance has no strict saddle".into()))?.theta.clone();
    let s = saddle::embed_consensual_saddle(&p, &theta, &net.r, &net.c, alpha)?;
    let cert = saddle::instability_certificate(&s, &net.r, &net.c, alpha, &p)?;
    let q = (m == 1).then(|| saddle::q_scan(&s, &net.r, &net.c, alpha, &p, &saddle::default_q_grid(4.0, 400)));
    Ok(json!({
        "alpha": alpha,
        "fixed_point_residual": cert.fixed_point_residual,
        "spradii": cert.spradii,
        "unstable": cert.unstable,
        "witness_eigenvalue": [cert.witness_eigenvalue.0, cert.witness_eigenvalue.1],
        "witness_residual": cert.witness_residual,
        "alpha_bounds": {
            "descent": saddle::descent_alpha_bound(&net.r, &net.c, &p)?,
            "diffeo": saddle::diffeo_alpha_bound(&net.r, &net.c, p.smoothness.l_c),
        },
        "conditions_used": [cert.condition],
        "q_scan": q.map(|q| json!({ "q_at_one": q.q_at_one, "scale": q.scale, "bracket": q.bracket, "root": q.root })),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_seed_list_is_rejected() {
        let mut cfg = preset_bilinear(false);
        cfg.seeds.clear();
        assert!(matches!(run(&cfg), Err(Error::Validation(_))));
    }

    #[test]
    fn dgd_on_directed_graph_is_rejected() {
        let mut cfg = preset_bilinear(true);
        cfg.algorithms.push(Algorithm::Dgd);
        assert!(cfg.validate().iter().any(|e| e.contains("undirected")));
    }

    #[test]
    fn config_round_trips() {
        for cfg in [preset_quadratic(), preset_bilinear(true), preset_gmm(false)] {
            let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn quadratic_step_matches_hessian_rule() {
        let cfg = preset_quadratic();
        let net = build_network(&cfg.graph).unwrap();
        let p = build_problem(&cfg.problem, 10, cfg.problem_seed).unwrap();
        let a = resolve_alpha(&cfg.alpha, Algorithm::Dgd, &net, &p, cfg.regime).unwrap();
        let d = net.d.unwrap();
        let (vals, _) = linalg::sym_eigen_sorted(&p.hessian(&p.strict_saddle().unwrap().theta));
        let lmax = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let want = 0.99 * linalg::sigma_min(&(DMatrix::<f64>::identity(10, 10) + &d.entries)) / lmax;
        assert_eq!(a, want);
    }

    #[test]
    fn csv_round_trip_and_determinism() {
        let mut cfg = preset_bilinear(false);
        cfg.seeds = vec![3];
        cfg.iters = 20;
        let dir = std::env::temp_dir().join(format!("distopt-harness-{}", std::process::id()));
        cfg.out_dir = Some(dir.clone());
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        for (x, y) in a.runs.iter().zip(&b.runs) {
            assert_eq!(x.trace.records, y.trace.records);
        }
        let back = read_trace_csv(&dir.join("dogt_ring_seed3.csv")).unwrap();
        let orig = &a.runs.iter().find(|r| r.algo == Algorithm::Dogt).unwrap().trace.records;
        assert_eq!(back.len(), orig.len());
        for (p, q) in back.iter().zip(orig) {
            assert_eq!(p.cons_err, q.cons_err);
            assert_eq!(p.merit, q.merit);
        }
        assert!(dir.join("metadata.json").exists());
        assert!(dir.join("contour_grid.csv").exists());
        fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn identical_runs_give_identical_summaries() {
        let mut cfg = preset_gmm(false);
        cfg.seeds = vec![1];
        cfg.iters = 10;
        cfg.contour = None;
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.summary, b.summary);
    }
}
