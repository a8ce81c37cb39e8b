//! Command-line driver: each pipeline stage as a subcommand, plus `run` for
//! the whole pipeline with caching and `report` for the markdown summary.

mod config;
mod manifest;
mod pipeline;
mod report;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::{Config, LambdaSpec};
use manifest::{CheckKind, CheckOutcome, Manifest};
use stages::Inputs;

#[derive(Parser, Debug)]
#[command(name = "hypercyclic", version, about = "Build and verify a unitary-plus-rank-two hypercyclic operator model")]
struct Cli {
    /// TOML configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    cmd: Option<Cmd>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Exact check of the level-set hypotheses for the lacunary parameters.
    BelovCheck {
        #[arg(long)]
        m_max: Option<u32>,
    },
    /// Cover the level set and build the nested-interval tree.
    BuildCantor {
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        truncation: Option<usize>,
    },
    /// Pairing identities at sampled points.
    VerifyIdentities {
        #[arg(long)]
        tree: Option<PathBuf>,
        /// A count of tree endpoints, or a file of hex angles.
        #[arg(long)]
        lambdas: Option<LambdaSpec>,
        /// analytic, direct or both.
        #[arg(long)]
        path: Option<String>,
    },
    /// Finite model on the span of sampled eigenfunctions.
    BuildModel {
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long)]
        m: Option<usize>,
    },
    /// Per-point residual table of a stored model.
    EigenResiduals {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        tree: Option<PathBuf>,
    },
    /// Unitary-plus-finite-rank splitting of a stored model.
    Decompose {
        #[arg(long)]
        model: Option<PathBuf>,
        /// te or contraction.
        #[arg(long)]
        method: Option<String>,
    },
    /// Orbit statistics of T or V.
    Orbit {
        #[arg(long)]
        model: Option<PathBuf>,
        /// T or V.
        #[arg(long)]
        matrix: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        /// Write rows while iterating instead of keeping the orbit.
        #[arg(long)]
        stream: bool,
    },
    /// Markdown summary from the manifest in the output directory.
    Report,
    /// Every stage in order, with caching.
    Run,
}

/// 0: all checks pass; 2: a hard check failed; 3: only trend checks failed.
fn exit_for<'a>(checks: impl Iterator<Item = &'a CheckOutcome>) -> ExitCode {
    let (mut hard, mut trend) = (false, false);
    for c in checks.filter(|c| !c.pass) {
        match c.kind {
            CheckKind::Hard => hard = true,
            CheckKind::Trend => trend = true,
        }
    }
    ExitCode::from(if hard {
        2
    } else if trend {
        3
    } else {
        0
    })
}

fn print_failures<'a>(checks: impl Iterator<Item = &'a CheckOutcome>) {
    for c in checks.filter(|c| !c.pass) {
        eprintln!("check failed: {} = {:e} (limit {:e}, {})", c.name, c.value, c.limit, c.source);
    }
}

fn set_threads(n: usize) -> Result<()> {
    #[cfg(feature = "parallel")]
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    #[cfg(not(feature = "parallel"))]
    if n > 1 {
        eprintln!("built without the parallel feature; --threads {n} ignored");
    }
    Ok(())
}

fn single(cfg: &Config, stage: &str, inputs: &Inputs) -> Result<ExitCode> {
    cfg.validate()?;
    let m = pipeline::run_single(cfg, stage, inputs)?;
    let checks = m.stage(stage).map(|s| s.checks.clone()).unwrap_or_default();
    print_failures(checks.iter());
    eprintln!("{stage}: wrote {}", cfg.out.display());
    Ok(exit_for(checks.iter()))
}

fn real_main(cli: Cli) -> Result<ExitCode> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let mut inputs = Inputs::in_dir(&cfg.out);
    match &cli.cmd {
        Some(Cmd::BelovCheck { m_max }) => cfg.belov.m_max = m_max.unwrap_or(cfg.belov.m_max),
        Some(Cmd::BuildCantor { depth, delta, truncation }) => {
            if let Some(d) = depth {
                cfg.cantor.depth = *d;
                cfg.cantor.compare_depth = cfg.cantor.compare_depth.min(d.saturating_sub(1));
            }
            cfg.cantor.delta = delta.unwrap_or(cfg.cantor.delta);
            cfg.series.truncation = truncation.unwrap_or(cfg.series.truncation);
        }
        Some(Cmd::VerifyIdentities { tree, lambdas, path }) => {
            inputs.tree = tree.clone().unwrap_or(inputs.tree);
            cfg.identities.lambdas = lambdas.clone().unwrap_or(cfg.identities.lambdas);
            cfg.identities.path = path.clone().unwrap_or(cfg.identities.path);
        }
        Some(Cmd::BuildModel { tree, m }) => {
            inputs.tree = tree.clone().unwrap_or(inputs.tree);
            cfg.model.m = m.unwrap_or(cfg.model.m);
            let m = cfg.model.m;
            cfg.model.trend.retain(|&k| k <= m);
            cfg.orbit.crowding.retain(|&k| k <= m);
        }
        Some(Cmd::EigenResiduals { model, tree }) => {
            inputs.tree = tree.clone().unwrap_or(inputs.tree);
            inputs.model = model.clone().unwrap_or(inputs.model);
        }
        Some(Cmd::Decompose { model, method }) => {
            inputs.model = model.clone().unwrap_or(inputs.model);
            if let Some(m) = method {
                cfg.decompose.methods = vec![m.clone()];
            }
        }
        Some(Cmd::Orbit { model, matrix, steps, eps, stream }) => {
            inputs.model = model.clone().unwrap_or(inputs.model);
            if let Some(m) = matrix {
                cfg.orbit.matrices = vec![m.clone()];
            }
            cfg.orbit.steps = steps.unwrap_or(cfg.orbit.steps);
            cfg.orbit.eps = eps.unwrap_or(cfg.orbit.eps);
            cfg.orbit.stream |= *stream;
        }
        _ => {}
    }
    if cli.print_config {
        print!("{}", cfg.to_toml()?);
        return Ok(ExitCode::SUCCESS);
    }
    set_threads(cfg.threads)?;
    let Some(cmd) = cli.cmd else {
        anyhow::bail!("no subcommand given; see --help");
    };
    match cmd {
        Cmd::BelovCheck { .. } => single(&cfg, "belov-check", &inputs),
        Cmd::BuildCantor { .. } => single(&cfg, "build-cantor", &inputs),
        Cmd::VerifyIdentities { .. } => single(&cfg, "verify-identities", &inputs),
        Cmd::BuildModel { .. } => single(&cfg, "build-model", &inputs),
        Cmd::Decompose { .. } => single(&cfg, "decompose", &inputs),
        Cmd::Orbit { .. } => single(&cfg, "orbit", &inputs),
        Cmd::EigenResiduals { .. } => {
            std::fs::create_dir_all(&cfg.out)?;
            let o = stages::eigen_residuals(&cfg, &inputs, &cfg.out)?;
            print_failures(o.checks.iter());
            Ok(exit_for(o.checks.iter()))
        }
        Cmd::Report => {
            let m = Manifest::load_or_default(&cfg.out)?;
            report::emit_report(&m, &cfg.out)?;
            eprintln!("wrote {}", cfg.out.join("summary.md").display());
            Ok(exit_for(m.checks()))
        }
        Cmd::Run => {
            let m = pipeline::run_pipeline(&cfg)?;
            print_failures(m.checks());
            for s in &m.stages {
                eprintln!("{:<18} {:?} {:.2}s", s.name, s.status, s.wall_time_s);
            }
            Ok(exit_for(m.checks()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
