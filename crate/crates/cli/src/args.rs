use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use hkm_core::hilbert::{Grid, SpaceSpec};
use hkm_core::similarity::KernelSpec;

#[derive(Debug, Parser)]
#[command(
    name = "hkm",
    version,
    about = "Generalized K-means via SDP relaxation, with a Monte Carlo lab"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster a CSV dataset and write assignment.csv, zhat.csv, diagnostics.json.
    Cluster(ClusterArgs),
    /// Run an error-curve or Sobolev-comparison experiment.
    Simulate(RunArgs),
    /// Run quadratic-form tail, MGF and moment checks.
    TailCheck(RunArgs),
    /// Run a (delta, n) recovery phase diagram.
    PhaseDiagram(RunArgs),
    /// Parse a dataset and report its shape.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// euclidean | l2 | sobolev:K | poly:C,R | rbf:H
    #[arg(long, default_value = "euclidean")]
    pub space: SpaceArg,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Primal and dual stopping tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Compare the rounded partition with the dataset's label column.
    #[arg(long)]
    pub score: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; results do not depend on this value.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub data: PathBuf,
}

/// `--space` value. Functional spaces use a uniform grid on `[0, 1]` with
/// one node per coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpaceArg {
    Euclidean,
    L2,
    Sobolev(usize),
    Poly { c: f64, r: u32 },
    Rbf { h: f64 },
}

impl FromStr for SpaceArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, param) = match s.split_once(':') {
            Some((k, p)) => (k, Some(p)),
            None => (s, None),
        };
        let num = |p: &str, what: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| format!("invalid {what} '{p}'"))
        };
        match (kind, param) {
            ("euclidean", None) => Ok(SpaceArg::Euclidean),
            ("l2", None) => Ok(SpaceArg::L2),
            ("sobolev", Some(p)) => p
                .trim()
                .parse()
                .map(SpaceArg::Sobolev)
                .map_err(|_| format!("invalid sobolev order '{p}'")),
            ("poly", Some(p)) => {
                let (c, r) = p.split_once(',').ok_or("poly expects poly:C,R")?;
                let r = r
                    .trim()
                    .parse()
                    .map_err(|_| format!("invalid polynomial degree '{r}'"))?;
                Ok(SpaceArg::Poly {
                    c: num(c, "polynomial offset")?,
                    r,
                })
            }
            ("rbf", Some(p)) => Ok(SpaceArg::Rbf {
                h: num(p, "bandwidth")?,
            }),
            _ => Err(format!(
                "unknown space '{s}' (expected euclidean, l2, sobolev:K, poly:C,R or rbf:H)"
            )),
        }
    }
}

impl SpaceArg {
    pub fn to_spec(self, dim: usize) -> hkm_core::error::Result<SpaceSpec> {
        match self {
            SpaceArg::Euclidean => Ok(SpaceSpec::euclidean(dim)),
            SpaceArg::L2 => Ok(SpaceSpec::l2(Grid::uniform(dim)?)),
            SpaceArg::Sobolev(k) => SpaceSpec::sobolev(Grid::uniform(dim)?, k),
            SpaceArg::Poly { c, r } => SpaceSpec::kernel(KernelSpec::Polynomial { c, r }),
            SpaceArg::Rbf { h } => SpaceSpec::kernel(KernelSpec::Rbf { h }),
        }
    }
}
