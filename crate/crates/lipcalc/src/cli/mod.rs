//! Command-line front end. Every subcommand reads plain-text inputs, writes
//! its artifacts into `--out-dir` and prints a JSON summary on stdout.

mod commands;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::Value;

#[derive(Parser, Debug)]
#[command(name = "lipcalc", version, about = "Lipschitz analysis on finite metric measure spaces")]
pub struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory receiving output files.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for `exp run --parallel`.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Numerical tolerance for solvers and rank decisions.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// JSON config providing defaults for the flags above and per-experiment
    /// parameter overrides under `experiments`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub tol: Option<f64>,
    #[serde(default)]
    pub experiments: serde_json::Map<String, Value>,
}

/// Flags after merging the config file (flags win).
#[derive(Debug, Clone)]
pub struct Globals {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub threads: usize,
    pub tol: Option<f64>,
    pub experiments: serde_json::Map<String, Value>,
}

#[derive(Args, Debug, Clone)]
pub struct SpaceArgs {
    /// SpaceSpec JSON, or a distance-matrix CSV with an id header row.
    #[arg(long)]
    pub space: PathBuf,
    /// Weights CSV (`point_id,weight`); uniform when absent.
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate or import a space and export it as CSV.
    #[command(subcommand)]
    Space(SpaceCmd),
    /// Build an ε-net.
    Net {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        eps: f64,
        #[arg(long, value_enum, default_value = "greedy")]
        strategy: StrategyArg,
    },
    /// McShane extension of a field given on a subset.
    Mcshane {
        #[command(flatten)]
        space: SpaceArgs,
        /// `point_id,value` on the subset.
        #[arg(long)]
        subset: PathBuf,
    },
    /// Pointwise Lipschitz profiles.
    #[command(subcommand)]
    Lip(LipCmd),
    /// Minimal Hajłasz gradient.
    Hajlasz {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        field: PathBuf,
        /// Exponent in (1, ∞) or `inf`.
        #[arg(long, default_value = "2")]
        p: String,
        #[arg(long, default_value_t = 100_000)]
        max_iters: usize,
    },
    /// Stencil derivations and their linear algebra.
    #[command(subcommand)]
    Deriv(DerivCmd),
    /// Differentials on charts.
    #[command(subcommand)]
    Diff(DiffCmd),
    /// Piecewise-linear extension over a dyadic Kuhn triangulation.
    Pl {
        /// Ambient dimension N.
        #[arg(long)]
        dim: usize,
        /// Lattice spacing 2^{-level}.
        #[arg(long)]
        level: i32,
        /// Lattice field CSV `k0,…,value`.
        #[arg(long)]
        lattice: PathBuf,
        /// Query points CSV `q0,…`.
        #[arg(long)]
        queries: PathBuf,
    },
    /// Assouad embedding of the snowflake `(X, d^s)`.
    Embed {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        s: f64,
        /// Number of dyadic scales; all scales between the extreme distances when absent.
        #[arg(long)]
        scales: Option<usize>,
    },
    /// Distortion audit of a given embedding.
    Audit {
        #[command(flatten)]
        space: SpaceArgs,
        /// Embedding CSV `point_id,z0,…`.
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        s: f64,
    },
    /// Registered experiments.
    #[command(subcommand)]
    Exp(ExpCmd),
}

#[derive(Subcommand, Debug)]
pub enum SpaceCmd {
    /// Materialize a SpaceSpec JSON.
    Gen {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Validate a distance matrix and weights.
    Import {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum StrategyArg {
    Greedy,
    Farthest,
}

#[derive(Args, Debug, Clone)]
pub struct ScaleArgs {
    /// Coarsest scale.
    #[arg(long)]
    pub r0: f64,
    /// Number of scales `r0, r0/2, …`.
    #[arg(long, default_value_t = 4)]
    pub count: usize,
}

#[derive(Subcommand, Debug)]
pub enum LipCmd {
    /// Slopes at one point across scales.
    Profile {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        point: String,
        #[command(flatten)]
        scales: ScaleArgs,
    },
    /// `Lip̂/lip̂` at every point.
    Ratio {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        field: PathBuf,
        #[command(flatten)]
        scales: ScaleArgs,
    },
}

#[derive(Subcommand, Debug)]
pub enum DerivCmd {
    /// Build a stencil derivation.
    Build {
        #[command(flatten)]
        space: SpaceArgs,
        /// Scheme JSON (inline or file), e.g. `{"kind":"coordinate_axis","axis":0}`.
        #[arg(long)]
        scheme: String,
        /// Support radius.
        #[arg(long)]
        h: f64,
    },
    /// Jacobi field of stencils applied to generators.
    Jacobi {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long = "stencil", required = true)]
        stencils: Vec<PathBuf>,
        #[arg(long)]
        h: f64,
        #[arg(long = "generator", required = true)]
        generators: Vec<PathBuf>,
    },
    /// Cofactor orthogonalization of a Jacobi field.
    Orthogonalize {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        jacobi: PathBuf,
    },
    /// Pushforward of a derivation along a map to a finite target.
    Pushforward {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        stencil: PathBuf,
        #[arg(long)]
        h: f64,
        /// `point_id,target` with integer targets.
        #[arg(long)]
        map: PathBuf,
        /// `target,value`.
        #[arg(long)]
        pi: PathBuf,
    },
    /// Essential rank of budget stencils across radii.
    Rank {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long, num_args = 1.., required = true)]
        radii: Vec<f64>,
        #[arg(long, default_value_t = 4)]
        budget: usize,
        /// Generator fields; coordinates and |x|² when absent.
        #[arg(long = "generator")]
        generators: Vec<PathBuf>,
        #[arg(long)]
        embedding_dim: Option<usize>,
    },
}

#[derive(Subcommand, Debug)]
pub enum DiffCmd {
    /// Least-squares differential at every chart point.
    Estimate {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        chart: PathBuf,
        #[arg(long)]
        r: f64,
    },
    /// Residual profile and verdict at one point.
    Residual {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        chart: PathBuf,
        #[arg(long)]
        differentials: PathBuf,
        #[arg(long)]
        point: String,
        #[command(flatten)]
        scales: ScaleArgs,
    },
    /// Lip-derivation comparison for coordinate stencils.
    Check {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long = "field", required = true)]
        family: Vec<PathBuf>,
        #[arg(long)]
        h: f64,
        #[command(flatten)]
        scales: ScaleArgs,
        #[arg(long, default_value_t = 1.5)]
        budget: f64,
    },
}

#[derive(Subcommand, Debug)]
pub enum ExpCmd {
    /// Run one experiment, or `all`.
    Run {
        id: String,
        /// Parameter override `key=value`, value parsed as JSON when possible.
        #[arg(long = "set")]
        set: Vec<String>,
        /// SpaceSpec JSON replacing the default space.
        #[arg(long)]
        space: Option<PathBuf>,
        /// Run independent experiments concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Regenerate a run from its manifest and compare outputs.
    Replay { manifest: PathBuf },
    /// List registered experiments.
    List,
}

pub fn main() -> Result<i32> {
    let cli = Cli::parse();
    let config: ConfigFile = match &cli.config {
        Some(p) => lipcalc::io::read_json(p)?,
        None => ConfigFile::default(),
    };
    let globals = Globals {
        seed: cli.seed.or(config.seed).unwrap_or(0),
        out_dir: cli.out_dir.clone().or(config.out_dir).unwrap_or_else(|| PathBuf::from(".")),
        threads: cli.threads.or(config.threads).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1),
        tol: cli.tol.or(config.tol),
        experiments: config.experiments,
    };
    commands::dispatch(cli.command, &globals)
}
