//! Command-line flags, the JSON run configuration and their merge into a
//! validated job.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use hslab::bubble::BubbleParams;
use hslab::geometry::{ModelManifold, MIN_GRID_NODES};
use hslab::green::DEFAULT_GREEN_NODES;
use hslab::potential::Potential;
use hslab::subcritical::{default_q_ladder, DEFAULT_GRID_NODES, MAX_ITERS};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Invalid configuration, reported with the offending field.
#[derive(Debug, Error)]
#[error("field `{field}`: {message}")]
pub struct UsageError {
    pub field: String,
    pub message: String,
}

impl UsageError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hslab", version, about = "Hardy-Sobolev constants, expansions, masses and minimizers on round spheres")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,

    /// JSON run configuration; its fields override the flags
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Write the JSON report here instead of stdout
    #[arg(long, global = true)]
    pub json: Option<PathBuf>,

    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,

    /// Optional SVG plot (expand, mass, minimize)
    #[arg(long, global = true)]
    pub svg: Option<PathBuf>,

    /// Seed for randomized checks
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SubcommandName {
    Constants,
    Identities,
    Bubble,
    Expand,
    Mass,
    Minimize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// K(n,s), 2*(s), c_{n,s} and the expansion constants
    Constants(ConstantsArgs),
    /// Closed form against quadrature for the bubble integrals, over a grid of (n, s)
    Identities(IdentitiesArgs),
    /// Integrals and PDE residual of the bubble for one (n, s)
    Bubble(BubbleArgs),
    /// ε-expansion of J along the concentrating test functions
    Expand(ExpandArgs),
    /// Green's function and mass on S³
    Mass(MassArgs),
    /// Subcritical minimization and continuation to the critical exponent
    Minimize(MinimizeArgs),
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct ConstantsArgs {
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum IdentityGrid {
    /// n = 5..10, s = 0, 0.25, …, 1.75, plus the n = 3 normalization
    Default,
    /// n = 5, 6 and s = 0, 1
    Coarse,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct IdentitiesArgs {
    #[arg(long, value_enum)]
    pub grid: Option<IdentityGrid>,
    /// Extra (n, s) points drawn with the seed
    #[arg(long)]
    pub random_points: Option<usize>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct BubbleArgs {
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long)]
    pub s: Option<f64>,
    /// Points of the log grid for the PDE residual
    #[arg(long)]
    pub residual_points: Option<usize>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct ExpandArgs {
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub a_const: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub eps_min: Option<f64>,
    #[arg(long)]
    pub eps_max: Option<f64>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct MassArgs {
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long, conflicts_with = "a_file")]
    pub a_const: Option<f64>,
    /// CSV with columns r,a
    #[arg(long)]
    pub a_file: Option<PathBuf>,
    #[arg(long = "grid-N")]
    pub grid_n: Option<usize>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct MinimizeArgs {
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub a_const: Option<f64>,
    /// Comma-separated, increasing, ending at 2*(s)
    #[arg(long, value_delimiter = ',')]
    pub q_ladder: Option<Vec<f64>>,
    #[arg(long = "grid-N")]
    pub grid_n: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSpec {
    pub kind: Option<String>,
    pub n: Option<u32>,
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "N")]
    pub nodes: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

/// Everything a run can be configured with. Flags and the `--config` file
/// both produce one of these; the file's fields take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Option<SubcommandName>,
    #[serde(default)]
    pub manifold: ManifoldSpec,
    #[serde(default)]
    pub grid: GridSpec,
    pub s: Option<f64>,
    /// Full potential description, e.g. {"kind": "bump", ...}
    pub a: Option<Potential>,
    pub a_const: Option<f64>,
    pub a_file: Option<PathBuf>,
    pub rho: Option<f64>,
    pub eps_min: Option<f64>,
    pub eps_max: Option<f64>,
    pub q_ladder: Option<Vec<f64>>,
    pub max_iters: Option<usize>,
    pub identity_grid: Option<IdentityGrid>,
    pub random_points: Option<usize>,
    pub residual_points: Option<usize>,
    #[serde(default)]
    pub output: OutputSpec,
    pub seed: Option<u64>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($field:ident).+) => {
        if $src.$($field).+.is_some() {
            $dst.$($field).+ = $src.$($field).+.clone();
        }
    };
}

impl RunConfig {
    pub fn from_cli(cli: &Cli) -> Self {
        let mut cfg = RunConfig {
            output: OutputSpec {
                csv: cli.csv.clone(),
                json: cli.json.clone(),
                svg: cli.svg.clone(),
            },
            seed: cli.seed,
            ..Default::default()
        };
        let Some(cmd) = &cli.command else {
            return cfg;
        };
        match cmd {
            Command::Constants(a) => {
                cfg.subcommand = Some(SubcommandName::Constants);
                cfg.manifold.n = a.n;
                cfg.manifold.radius = a.radius;
                cfg.s = a.s;
            }
            Command::Identities(a) => {
                cfg.subcommand = Some(SubcommandName::Identities);
                cfg.identity_grid = a.grid;
                cfg.random_points = a.random_points;
            }
            Command::Bubble(a) => {
                cfg.subcommand = Some(SubcommandName::Bubble);
                cfg.manifold.n = a.n;
                cfg.s = a.s;
                cfg.residual_points = a.residual_points;
            }
            Command::Expand(a) => {
                cfg.subcommand = Some(SubcommandName::Expand);
                cfg.manifold.n = a.n;
                cfg.manifold.radius = a.radius;
                cfg.s = a.s;
                cfg.a_const = a.a_const;
                cfg.rho = a.rho;
                cfg.eps_min = a.eps_min;
                cfg.eps_max = a.eps_max;
            }
            Command::Mass(a) => {
                cfg.subcommand = Some(SubcommandName::Mass);
                cfg.manifold.n = Some(3);
                cfg.manifold.radius = a.radius;
                cfg.a_const = a.a_const;
                cfg.a_file = a.a_file.clone();
                cfg.grid.nodes = a.grid_n;
            }
            Command::Minimize(a) => {
                cfg.subcommand = Some(SubcommandName::Minimize);
                cfg.manifold.n = a.n;
                cfg.manifold.radius = a.radius;
                cfg.s = a.s;
                cfg.a_const = a.a_const;
                cfg.q_ladder = a.q_ladder.clone();
                cfg.grid.nodes = a.grid_n;
                cfg.max_iters = a.max_iters;
            }
        }
        cfg
    }

    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError::new("config", format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| UsageError::new("config", format!("{}: {e}", path.display())))
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(mut self, other: &RunConfig) -> Self {
        overlay!(self, other, subcommand);
        overlay!(self, other, manifold.kind);
        overlay!(self, other, manifold.n);
        overlay!(self, other, manifold.radius);
        overlay!(self, other, grid.nodes);
        overlay!(self, other, s);
        if other.a.is_some() || other.a_const.is_some() || other.a_file.is_some() {
            self.a = other.a.clone();
            self.a_const = other.a_const;
            self.a_file = other.a_file.clone();
        }
        overlay!(self, other, rho);
        overlay!(self, other, eps_min);
        overlay!(self, other, eps_max);
        overlay!(self, other, q_ladder);
        overlay!(self, other, max_iters);
        overlay!(self, other, identity_grid);
        overlay!(self, other, random_points);
        overlay!(self, other, residual_points);
        overlay!(self, other, output.csv);
        overlay!(self, other, output.json);
        overlay!(self, other, output.svg);
        overlay!(self, other, seed);
        self
    }
}

/// A fully validated request.
#[derive(Debug, Clone)]
pub enum Job {
    Constants {
        params: BubbleParams,
        radius: f64,
    },
    Identities {
        grid: IdentityGrid,
        random_points: usize,
        seed: u64,
    },
    Bubble {
        params: BubbleParams,
        residual_points: usize,
    },
    Expand {
        manifold: ModelManifold,
        s: f64,
        a: Potential,
        rho: f64,
        eps: Option<(f64, f64)>,
    },
    Mass {
        manifold: ModelManifold,
        a: Potential,
        nodes: usize,
    },
    Minimize {
        manifold: ModelManifold,
        s: f64,
        a: Potential,
        ladder: Vec<f64>,
        nodes: usize,
        max_iters: usize,
    },
}

#[derive(Debug, Clone)]
pub struct Run {
    pub job: Job,
    pub output: OutputSpec,
}

fn require<T: Copy>(v: Option<T>, field: &str) -> Result<T, UsageError> {
    v.ok_or_else(|| UsageError::new(field, "required"))
}

fn finite(v: f64, field: &str) -> Result<f64, UsageError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(UsageError::new(field, "must be finite"))
    }
}

fn manifold(cfg: &RunConfig, default_n: Option<u32>) -> Result<ModelManifold, UsageError> {
    if let Some(kind) = &cfg.manifold.kind {
        if kind != "sphere" && kind != "round_sphere" {
            return Err(UsageError::new("manifold.kind", format!("unsupported manifold `{kind}`")));
        }
    }
    let n = cfg.manifold.n.or(default_n);
    let n = require(n, "manifold.n")?;
    let radius = finite(cfg.manifold.radius.unwrap_or(1.0), "manifold.radius")?;
    if n < 3 {
        return Err(UsageError::new("manifold.n", format!("dimension must be at least 3, got {n}")));
    }
    ModelManifold::sphere(n, radius).map_err(|e| UsageError::new("manifold.radius", e.to_string()))
}

fn bubble_params(n: u32, s: f64) -> Result<BubbleParams, UsageError> {
    let s = finite(s, "s")?;
    BubbleParams::new(n, s).map_err(|e| {
        let field = if n < 3 { "manifold.n" } else { "s" };
        UsageError::new(field, e.to_string())
    })
}

fn potential(cfg: &RunConfig) -> Result<Potential, UsageError> {
    let given = [cfg.a.is_some(), cfg.a_const.is_some(), cfg.a_file.is_some()];
    if given.iter().filter(|&&g| g).count() > 1 {
        return Err(UsageError::new("a", "give exactly one of a, a_const, a_file"));
    }
    let a = if let Some(a) = &cfg.a {
        a.clone()
    } else if let Some(v) = cfg.a_const {
        Potential::constant(finite(v, "a_const")?)
    } else if let Some(path) = &cfg.a_file {
        read_potential_file(path)?
    } else {
        return Err(UsageError::new("a_const", "required (or a, a_file)"));
    };
    a.validate().map_err(|e| UsageError::new("a", e.to_string()))?;
    Ok(a)
}

/// Radial samples `r,a` (header optional) as a piecewise-linear potential.
fn read_potential_file(path: &Path) -> Result<Potential, UsageError> {
    let field = "a_file";
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| UsageError::new(field, format!("{}: {e}", path.display())))?;
    let (mut r, mut a) = (Vec::new(), Vec::new());
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| UsageError::new(field, e.to_string()))?;
        if rec.len() != 2 {
            return Err(UsageError::new(field, format!("row {}: expected 2 columns", line + 1)));
        }
        let parse = |k: usize| rec[k].parse::<f64>();
        match (parse(0), parse(1)) {
            (Ok(x), Ok(y)) => {
                r.push(x);
                a.push(y);
            }
            // a header line
            _ if line == 0 => continue,
            _ => return Err(UsageError::new(field, format!("row {}: not a number", line + 1))),
        }
    }
    Ok(Potential::Tabulated { r, a })
}

fn nodes(cfg: &RunConfig, default: usize) -> Result<usize, UsageError> {
    let n = cfg.grid.nodes.unwrap_or(default);
    if n < MIN_GRID_NODES {
        return Err(UsageError::new("grid.N", format!("at least {MIN_GRID_NODES} nodes, got {n}")));
    }
    Ok(n)
}

impl Run {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, UsageError> {
        let sub = require(cfg.subcommand, "subcommand")?;
        let job = match sub {
            SubcommandName::Constants => {
                let m = manifold(cfg, None)?;
                Job::Constants {
                    params: bubble_params(m.n, require(cfg.s, "s")?)?,
                    radius: m.radius,
                }
            }
            SubcommandName::Identities => Job::Identities {
                grid: cfg.identity_grid.unwrap_or(IdentityGrid::Default),
                random_points: cfg.random_points.unwrap_or(0),
                seed: cfg.seed.unwrap_or(0),
            },
            SubcommandName::Bubble => {
                let n = require(cfg.manifold.n, "manifold.n")?;
                let residual_points = cfg.residual_points.unwrap_or(241);
                if residual_points < 2 {
                    return Err(UsageError::new("residual_points", "at least 2"));
                }
                Job::Bubble {
                    params: bubble_params(n, require(cfg.s, "s")?)?,
                    residual_points,
                }
            }
            SubcommandName::Expand => {
                let m = manifold(cfg, None)?;
                let s = require(cfg.s, "s")?;
                bubble_params(m.n, s)?;
                let rho = finite(cfg.rho.unwrap_or(0.4 * m.radius), "rho")?;
                if !(rho > 0.0 && rho < 0.5 * m.injectivity_radius()) {
                    return Err(UsageError::new("rho", format!("must lie in (0, πR/2), got {rho}")));
                }
                let eps = match (cfg.eps_min, cfg.eps_max) {
                    (None, None) => None,
                    (Some(lo), Some(hi)) => {
                        let (lo, hi) = (finite(lo, "eps_min")?, finite(hi, "eps_max")?);
                        if !(lo > 0.0 && hi > lo) {
                            return Err(UsageError::new("eps_min", "need 0 < eps_min < eps_max"));
                        }
                        if hi > 0.1 * rho {
                            return Err(UsageError::new("eps_max", format!("must not exceed rho/10 = {}", 0.1 * rho)));
                        }
                        Some((lo, hi))
                    }
                    (None, Some(_)) => return Err(UsageError::new("eps_min", "required with eps_max")),
                    (Some(_), None) => return Err(UsageError::new("eps_max", "required with eps_min")),
                };
                Job::Expand {
                    manifold: m,
                    s,
                    a: potential(cfg)?,
                    rho,
                    eps,
                }
            }
            SubcommandName::Mass => {
                let m = manifold(cfg, Some(3))?;
                if m.n != 3 {
                    return Err(UsageError::new("manifold.n", "the mass is computed on S³ only"));
                }
                Job::Mass {
                    manifold: m,
                    a: potential(cfg)?,
                    nodes: nodes(cfg, DEFAULT_GREEN_NODES)?,
                }
            }
            SubcommandName::Minimize => {
                let m = manifold(cfg, None)?;
                let s = require(cfg.s, "s")?;
                let params = bubble_params(m.n, s)?;
                let ladder = match &cfg.q_ladder {
                    Some(l) => l.clone(),
                    None => default_q_ladder(params.crit),
                };
                if ladder.is_empty() {
                    return Err(UsageError::new("q_ladder", "empty"));
                }
                if !ladder.windows(2).all(|w| w[1] > w[0]) {
                    return Err(UsageError::new("q_ladder", "must be strictly increasing"));
                }
                if ladder.iter().any(|&q| !(q > 2.0 && q <= params.crit + 1e-12)) {
                    return Err(UsageError::new(
                        "q_ladder",
                        format!("entries must lie in (2, 2*(s)] = (2, {}]", params.crit),
                    ));
                }
                let max_iters = cfg.max_iters.unwrap_or(MAX_ITERS);
                if max_iters == 0 {
                    return Err(UsageError::new("max_iters", "must be positive"));
                }
                Job::Minimize {
                    manifold: m,
                    s,
                    a: potential(cfg)?,
                    ladder,
                    nodes: nodes(cfg, DEFAULT_GRID_NODES)?,
                    max_iters,
                }
            }
        };
        if cfg.output.svg.is_some() && !matches!(sub, SubcommandName::Expand | SubcommandName::Mass | SubcommandName::Minimize) {
            return Err(UsageError::new("output.svg", "no plot for this subcommand"));
        }
        Ok(Run {
            job,
            output: cfg.output.clone(),
        })
    }
}

/// `HSLAB_THREADS`, if set, caps the worker pool.
pub fn thread_cap() -> Result<Option<usize>, UsageError> {
    match std::env::var("HSLAB_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(k) if k > 0 => Ok(Some(k)),
            _ => Err(UsageError::new("HSLAB_THREADS", format!("expected a positive integer, got `{v}`"))),
        },
    }
}
