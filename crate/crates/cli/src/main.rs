use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use distopt::harness::{self, AlphaPolicy, ExperimentConfig, GraphPreset, GraphSpec, ProblemPreset};
use distopt::trace::Algorithm;
use distopt::Error;

#[derive(Parser)]
#[command(name = "distopt", version, about = "Distributed DGD / DOGT experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Quadratic,
    Bilinear,
    Gmm,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Dgd,
    Dogt,
    Both,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a preset (or a JSON config) and write traces.
    Run {
        #[arg(long, value_enum, conflicts_with = "config")]
        preset: Option<Preset>,
        /// JSON file mirroring `ExperimentConfig`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        algo: Option<Algo>,
        /// ring, cycle-directed, path, complete, random-undirected, random-directed.
        #[arg(long)]
        graph: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        /// Problem dimension (quadratic preset only).
        #[arg(long)]
        m: Option<usize>,
        /// `auto` keeps the preset policy.
        #[arg(long, default_value = "auto")]
        alpha: String,
        #[arg(long)]
        force: bool,
        #[arg(long)]
        iters: Option<usize>,
        /// Half-open range `a..b`.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the resolved config and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Build mixing matrices for a graph and print their certificates.
    CheckWeights {
        #[arg(long, default_value = "ring")]
        graph: String,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Instability certificate at the strict saddle of a quadratic instance.
    CertifySaddle {
        #[arg(long, default_value = "ring")]
        graph: String,
        #[arg(long, default_value_t = 5)]
        n: usize,
        /// `m = 1` draws a scalar instance.
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `auto` uses 0.1/L_c.
        #[arg(long, default_value = "auto")]
        alpha: String,
    },
    /// Final-row summary of trace CSV files.
    Compare {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, Error> {
    let bad = || Error::Validation(format!("seeds must look like a..b, got '{s}'"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    if b <= a {
        return Err(Error::Validation(format!("empty seed range '{s}'")));
    }
    Ok((a..b).collect())
}

fn parse_alpha(s: &str) -> Result<Option<f64>, Error> {
    if s == "auto" {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| Error::Validation(format!("alpha must be 'auto' or a number, got '{s}'")))
}

#[allow(clippy::too_many_arguments)]
fn build_config(
    preset: Option<Preset>,
    config: Option<PathBuf>,
    algo: Option<Algo>,
    graph: Option<String>,
    n: Option<usize>,
    m: Option<usize>,
    alpha: &str,
    force: bool,
    iters: Option<usize>,
    seeds: Option<String>,
    out: Option<PathBuf>,
) -> Result<ExperimentConfig, Error> {
    let graph = graph.map(|g| g.parse::<GraphPreset>()).transpose()?;
    let mut cfg = match (preset, config) {
        (_, Some(path)) => ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?,
        (Some(p), None) => {
            let name = match p {
                Preset::Quadratic => "quadratic",
                Preset::Bilinear => "bilinear",
                Preset::Gmm => "gmm",
            };
            harness::preset(name, graph.is_some_and(|g| g.directed()))?
        }
        (None, None) => return Err(Error::Validation("give --preset or --config".into())),
    };
    if let Some(g) = graph {
        cfg.graph.preset = g;
    }
    if let Some(n) = n {
        cfg.graph.n = n;
    }
    if let Some(m_new) = m {
        match &mut cfg.problem {
            ProblemPreset::Quadratic { m, .. } => *m = m_new,
            _ => return Err(Error::Validation("--m applies to the quadratic preset only".into())),
        }
    }
    if let Some(a) = algo {
        cfg.algorithms = match a {
            Algo::Dgd => vec![Algorithm::Dgd],
            Algo::Dogt => vec![Algorithm::Dogt],
            Algo::Both => vec![Algorithm::Dgd, Algorithm::Dogt],
        };
    } else if cfg.graph.preset.directed() {
        cfg.algorithms.retain(|a| *a == Algorithm::Dogt);
    }
    if let Some(v) = parse_alpha(alpha)? {
        cfg.alpha = AlphaPolicy::Explicit { value: v };
    }
    cfg.force |= force;
    if let Some(k) = iters {
        cfg.iters = k;
    }
    if let Some(s) = seeds {
        cfg.seeds = parse_seeds(&s)?;
    }
    if out.is_some() {
        cfg.out_dir = out;
    }
    if cfg.contour.is_some() && cfg.problem_dim() != 2 {
        cfg.contour = None;
    }
    Ok(cfg)
}

fn graph_spec(graph: &str, n: usize, seed: u64) -> Result<GraphSpec, Error> {
    Ok(GraphSpec { preset: graph.parse()?, n, seed })
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.cmd {
        Cmd::Run { preset, config, algo, graph, n, m, alpha, force, iters, seeds, out, dry_run } => {
            let cfg = build_config(preset, config, algo, graph, n, m, &alpha, force, iters, seeds, out)?;
            if dry_run {
                println!("{}", cfg.to_json()?);
                return Ok(());
            }
            let art = harness::run(&cfg)?;
            print!("{}", harness::summary_table(&art.summary));
            for r in &art.runs {
                if let Some(d) = &r.diagnostics {
                    for w in &d.warnings {
                        eprintln!("warning [{} seed {}]: {w}", r.algo.name(), r.seed);
                    }
                }
            }
            if let Some(dir) = &cfg.out_dir {
                eprintln!("wrote {}", dir.display());
            }
        }
        Cmd::CheckWeights { graph, n, seed } => println!("{}", serde_json::to_string_pretty(&harness::weights_report(&graph_spec(&graph, n, seed)?)?)?),
        Cmd::CertifySaddle { graph, n, m, delta, seed, alpha } => {
            println!("{}", serde_json::to_string_pretty(&harness::saddle_report(&graph_spec(&graph, n, 0)?, m, delta, seed, parse_alpha(&alpha)?)?)?)
        }
        Cmd::Compare { files } => {
            println!("{:<48} {:>8} {:>24} {:>24} {:>24}", "file", "iter", "cons_err", "grad_F_mean", "lyapunov");
            for (name, rec) in harness::compare_files(&files)? {
                println!("{name:<48} {:>8} {:>24.16e} {:>24.16e} {:>24.16e}", rec.iter, rec.cons_err, rec.grad_f_mean_norm, rec.lyapunov);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
