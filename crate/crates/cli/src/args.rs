use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Numeric flag: a constant expression such as `1/128`, `2.5e-3` or `3*pi^2`.
pub fn parse_num(text: &str) -> Result<f64, String> {
    let e = fundgap::expr::parse::<f64>(text, 0).map_err(|e| format!("`{text}`: {e}"))?;
    let value = e.eval(&[]);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("`{text}` is not finite"))
    }
}

#[derive(Parser, Debug)]
#[command(name = "fundgap", version)]
#[command(about = "Fundamental-gap comparison: 1D models, nD eigensolvers, moduli checks and parabolic flows")]
pub struct Cli {
    /// File of `key = value` defaults; `[subcommand]` sections apply to one subcommand
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Write the JSON report here instead of stdout
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Directory for CSV artifacts
    #[arg(long, global = true)]
    pub csv_dir: Option<PathBuf>,

    /// Record wall time in the report (reports are then no longer byte-identical)
    #[arg(long, global = true)]
    pub timing: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_accept_constant_expressions() {
        assert_eq!(parse_num("1/128").unwrap(), 1.0 / 128.0);
        assert_eq!(parse_num("2.5e-3").unwrap(), 2.5e-3);
        assert!((parse_num("3*pi^2").unwrap() - 3.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
        assert!(parse_num("x1").is_err());
        assert!(parse_num("1/0").is_err());
    }
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Gap μ1 - μ0 of -d²/dz² + Ṽ on (-D/2, D/2) with Dirichlet ends
    Gap1d(Gap1dArgs),
    /// Gap λ1 - λ0 of -Δ + V on a convex domain
    Gapnd(GapndArgs),
    /// Prüfer angle path for a trial μ
    Prufer(PruferArgs),
    /// Pairwise modulus checks
    #[command(subcommand)]
    Moduli(ModuliVerb),
    /// Truncated ψ-evolution from the barrier supersolution
    EvolvePsi(EvolvePsiArgs),
    /// Neumann heat equation with drift on a box and its decay rate
    HeatDrift(HeatDriftArgs),
    /// Gap from the decay of osc(u1/u0)
    GapDecay(GapDecayArgs),
    /// Convexity modulus, nD gap, 1D gap and the comparison in one report
    Verify(VerifyArgs),
}

impl Command {
    /// Name used for config sections and in reports.
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gap1d(_) => "gap1d",
            Command::Gapnd(_) => "gapnd",
            Command::Prufer(_) => "prufer",
            Command::Moduli(v) => match v {
                ModuliVerb::Convexity(_) => "moduli.convexity",
                ModuliVerb::Logconc(_) => "moduli.logconc",
                ModuliVerb::Continuity(_) => "moduli.continuity",
                ModuliVerb::Contraction(_) => "moduli.contraction",
            },
            Command::EvolvePsi(_) => "evolve-psi",
            Command::HeatDrift(_) => "heat-drift",
            Command::GapDecay(_) => "gap-decay",
            Command::Verify(_) => "verify",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Shoot,
    Fd,
    /// Shooting, with finite differences as a cross-check
    Both,
}

#[derive(Args, Debug, Serialize)]
pub struct Gap1dArgs {
    /// Comparison potential Ṽ(z) (even)
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    pub potential: String,
    #[arg(long, value_parser = parse_num)]
    pub diameter: f64,
    #[arg(long, value_enum, default_value = "shoot")]
    pub method: MethodArg,
    /// Finite-difference cells on (-D/2, D/2)
    #[arg(long, default_value_t = 1024)]
    pub grid: usize,
    /// Shooting samples on [0, D/2]
    #[arg(long, default_value_t = 400)]
    pub samples: usize,
    /// Robin parameter ε (φ = -ε φ' at ±D/2)
    #[arg(long, value_parser = parse_num)]
    pub robin_eps: Option<f64>,
    /// Observed FD order from n/4, n/2, n cells
    #[arg(long)]
    pub order: bool,
    /// Largest allowed |FD - shooting| with --method both
    #[arg(long, value_parser = parse_num, default_value = "5e-3")]
    pub cross_tol: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct GapndArgs {
    /// interval:a,b | square:s | rect:w1,w2[,w3] | disc:r[@cx,cy] | polygon:x,y;x,y;...
    #[arg(long)]
    pub domain: String,
    /// V(x1, ..., xn); `r` is |x|
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    pub potential: String,
    /// Coarse spacing; the fine level is h/2
    #[arg(long, value_parser = parse_num, default_value = "1/64")]
    pub h: f64,
    /// Relative eigen-residual target
    #[arg(long, value_parser = parse_num, default_value = "1e-9")]
    pub tol: f64,
    /// Eigenvalues to report at the fine level (at least 2)
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Comparison potential Ṽ(z); without it the bound is 3π²/D² (V convex)
    #[arg(long, allow_hyphen_values = true)]
    pub profile: Option<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Ground,
    Excited,
}

#[derive(Args, Debug, Serialize)]
pub struct PruferArgs {
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    pub potential: String,
    #[arg(long, value_parser = parse_num)]
    pub diameter: f64,
    #[arg(long, value_parser = parse_num)]
    pub mu: f64,
    #[arg(long, value_enum, default_value = "ground")]
    pub mode: ModeArg,
    #[arg(long, value_parser = parse_num)]
    pub robin_eps: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
}

#[derive(Args, Debug, Serialize, Clone)]
pub struct PairArgs {
    #[arg(long)]
    pub domain: String,
    #[arg(long, value_parser = parse_num, default_value = "1/64")]
    pub h: f64,
    #[arg(long, default_value_t = 20_240_601)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub bins: usize,
    #[arg(long, default_value_t = 512)]
    pub per_bin: usize,
    /// Check every pair of nodes instead of a stratified sample
    #[arg(long)]
    pub all_pairs: bool,
    /// Pass threshold for the worst violation
    #[arg(long, value_parser = parse_num)]
    pub tol: Option<f64>,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModuliVerb {
    /// (∇V(y) - ∇V(x))·e ≥ 2Ṽ'(|y-x|/2)
    Convexity(ConvexityArgs),
    /// (∇log φ0(y) - ∇log φ0(x))·e ≤ 2ψ(|y-x|/2)
    Logconc(LogconcArgs),
    /// |f(y) - f(x)| ≤ 2η(|y-x|/2)
    Continuity(ContinuityArgs),
    /// (X(y) - X(x))·e ≤ 2ω(|y-x|/2)
    Contraction(ContractionArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct ConvexityArgs {
    #[command(flatten)]
    pub pairs: PairArgs,
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    pub potential: String,
    /// Ṽ(z); the modulus is Ṽ'
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    pub profile: String,
    /// Also tabulate the optimal modulus on this many z-bins
    #[arg(long)]
    pub optimal: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct LogconcArgs {
    #[command(flatten)]
    pub pairs: PairArgs,
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    pub potential: String,
    /// `ground` for (log φ̃0)' of --profile, `sharp` for -(π/D)tan(πz/D), or an expression in z
    #[arg(long, allow_hyphen_values = true, default_value = "ground")]
    pub psi: String,
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    pub profile: String,
    /// Boundary margin in units of h
    #[arg(long, value_parser = parse_num, default_value = "2")]
    pub margin: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct ContinuityArgs {
    #[command(flatten)]
    pub pairs: PairArgs,
    /// f(x1, ..., xn)
    #[arg(long, allow_hyphen_values = true)]
    pub function: String,
    /// η(z)
    #[arg(long, allow_hyphen_values = true)]
    pub eta: String,
}

#[derive(Args, Debug, Serialize)]
pub struct ContractionArgs {
    #[command(flatten)]
    pub pairs: PairArgs,
    /// Components separated by `;`, or `log-ground` for ∇log φ0 of --potential
    #[arg(long, allow_hyphen_values = true)]
    pub field: String,
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    pub potential: String,
    /// ω(z), or `sharp` for -(π/D)tan(πz/D)
    #[arg(long, allow_hyphen_values = true)]
    pub omega: String,
    /// Boundary margin in units of h
    #[arg(long, value_parser = parse_num, default_value = "0")]
    pub margin: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct EvolvePsiArgs {
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    pub profile: String,
    #[arg(long, value_parser = parse_num, default_value = "1")]
    pub diameter: f64,
    /// Truncation levels
    #[arg(long, value_parser = parse_num, value_delimiter = ',', default_values = ["1", "10", "100"])]
    pub k: Vec<f64>,
    /// Barrier parameter s
    #[arg(long, value_parser = parse_num, default_value = "10")]
    pub s: f64,
    #[arg(long, value_parser = parse_num, default_value = "0.6")]
    pub t_end: f64,
    #[arg(long, value_parser = parse_num, default_value = "1e-3")]
    pub dt: f64,
    #[arg(long, default_value_t = 2000)]
    pub cells: usize,
    /// Compare with the Robin profile on [0, fraction·D/2]
    #[arg(long, value_parser = parse_num, default_value = "0.9")]
    pub fraction: f64,
    #[arg(long, value_parser = parse_num, default_value = "1e-3")]
    pub conv_tol: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct HeatDriftArgs {
    /// interval or rectangle whose widths are multiples of h
    #[arg(long)]
    pub domain: String,
    #[arg(long, value_parser = parse_num, default_value = "1/256")]
    pub h: f64,
    /// Components separated by `;`, or `log-ground` for 2∇log of the Dirichlet ground state of -Δ
    #[arg(long, allow_hyphen_values = true)]
    pub drift: Option<String>,
    /// v0(x1, ..., xn)
    #[arg(long, allow_hyphen_values = true)]
    pub initial: String,
    #[arg(long, value_parser = parse_num, default_value = "0.2")]
    pub t_end: f64,
    #[arg(long, value_parser = parse_num, default_value = "1e-4")]
    pub dt: f64,
    /// Expected decay exponent
    #[arg(long, value_parser = parse_num)]
    pub expect: Option<f64>,
    /// Relative tolerance on the expected exponent
    #[arg(long, value_parser = parse_num, default_value = "1e-3")]
    pub rate_tol: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct GapDecayArgs {
    #[arg(long)]
    pub domain: String,
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    pub potential: String,
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    pub profile: String,
    #[arg(long, value_parser = parse_num, default_value = "1/64")]
    pub h: f64,
    #[arg(long, value_parser = parse_num, default_value = "1e-3")]
    pub dt: f64,
    /// Defaults to 25/(λ1 - λ0)
    #[arg(long, value_parser = parse_num)]
    pub t_end: Option<f64>,
    #[arg(long, default_value_t = 20_240_601)]
    pub seed: u64,
    #[arg(long, default_value_t = 128)]
    pub per_bin: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct VerifyArgs {
    #[arg(long)]
    pub domain: String,
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    pub potential: String,
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    pub profile: String,
    #[arg(long, value_parser = parse_num, default_value = "1/32")]
    pub h: f64,
    #[arg(long, default_value_t = 20_240_601)]
    pub seed: u64,
    #[arg(long, default_value_t = 128)]
    pub per_bin: usize,
    #[arg(long, value_parser = parse_num, default_value = "1e-8")]
    pub convexity_tol: f64,
    /// Finite-difference cells for the 1D cross-check
    #[arg(long, default_value_t = 4096)]
    pub fd_cells: usize,
    #[arg(long, value_parser = parse_num, default_value = "1e-4")]
    pub cross_tol: f64,
}
