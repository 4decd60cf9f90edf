use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ldx_core::{Error, Result};

/// Higher-order large-deviation expansions: rates, coefficients and
/// validation against exact and Monte Carlo oracles.
#[derive(Debug, Parser)]
#[command(name = "ldx", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Saddle point, rate and variance over a grid of levels.
    Rate,
    /// Strong coefficients D_m and the polynomials P_m.
    Expand,
    /// Leading coefficient by the series pipeline and by the closed form.
    Firstorder,
    /// Compare truncated expansions with an oracle over a grid of N.
    Validate,
    /// Spectral-gap scan, lattice and Diophantine checks, range end.
    Diagnose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleKind {
    /// Exact enumeration (iid finite laws).
    Exact,
    /// Dynamic programming over reachable sums (finite chains).
    Dp,
    /// Importance sampling under the tilted chain (finite chains and iid laws).
    Mc,
    /// Certified cylinder brackets (expanding maps).
    Cylinder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Model file (JSON).
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,

    /// Excess level over the asymptotic mean.
    #[arg(long, global = true, allow_negative_numbers = true, conflicts_with = "a_grid")]
    pub a: Option<f64>,

    /// Grid of excess levels, `start:stop:count` (inclusive).
    #[arg(long = "a-grid", global = true, value_name = "S:E:N")]
    pub a_grid: Option<String>,

    /// Expansion order r; coefficients D_m are produced for m <= r/2.
    #[arg(long, global = true)]
    pub order: Option<usize>,

    /// Values of N, e.g. `20,30,40` or `8..16,200`.
    #[arg(long = "N-grid", alias = "n-grid", global = true, value_name = "LIST")]
    pub n_grid: Option<String>,

    #[arg(long, global = true, value_enum)]
    pub oracle: Option<OracleKind>,

    /// Monte Carlo sample count.
    #[arg(long, global = true, default_value_t = 100_000)]
    pub samples: u64,

    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Grid of imaginary parts for the gap scan, `start:stop:count`.
    #[arg(long = "s-grid", global = true, value_name = "S:E:N")]
    pub s_grid: Option<String>,

    /// Cauchy circle radius (default: from the analyticity strip and the model scale).
    #[arg(long, global = true)]
    pub radius: Option<f64>,

    /// Cauchy circle node count (default: max(64, 4 J)).
    #[arg(long, global = true)]
    pub nodes: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Output file; a `<out>.diag.json` sidecar is written next to it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

/// Parses `start:stop:count` into `count` equispaced points, endpoints included.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!("grid `{text}` must have the form start:stop:count")));
    }
    let num = |s: &str| -> Result<f64> {
        s.trim().parse::<f64>().map_err(|_| Error::Config(format!("grid `{text}`: `{s}` is not a number")))
    };
    let (start, stop) = (num(parts[0])?, num(parts[1])?);
    let count: usize = parts[2]
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("grid `{text}`: `{}` is not a count", parts[2])))?;
    Ok(match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count).map(|i| start + (stop - start) * i as f64 / (count - 1) as f64).collect(),
    })
}

/// Parses a comma list of integers and inclusive ranges `a..b`.
pub fn parse_n_grid(text: &str) -> Result<Vec<u64>> {
    let bad = |s: &str| Error::Config(format!("N-grid entry `{s}` is not a positive integer or range"));
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((lo, hi)) = item.split_once("..") {
            let lo: u64 = lo.trim().parse().map_err(|_| bad(item))?;
            let hi: u64 = hi.trim().parse().map_err(|_| bad(item))?;
            if lo > hi {
                return Err(bad(item));
            }
            out.extend(lo..=hi);
        } else {
            out.push(item.parse().map_err(|_| bad(item))?);
        }
    }
    if out.contains(&0) {
        return Err(Error::Config("N-grid values must be at least 1".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0.5:1.0:2").unwrap(), vec![0.5, 1.0]);
        assert_eq!(parse_grid("0.1:0.3:0").unwrap(), Vec::<f64>::new());
        assert_eq!(parse_grid("2:9:1").unwrap(), vec![2.0]);
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("a:2:3").is_err());
    }

    #[test]
    fn n_grids() {
        assert_eq!(parse_n_grid("8..10, 200,1000").unwrap(), vec![8, 9, 10, 200, 1000]);
        assert!(parse_n_grid("0,4").is_err());
        assert!(parse_n_grid("9..8").is_err());
        assert!(parse_n_grid("x").is_err());
    }
}
