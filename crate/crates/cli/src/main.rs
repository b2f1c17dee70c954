//! `va-affine`: price, verify and sweep variable annuity contracts.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 domain or unsupported-contract error.

mod commands;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "va-affine",
    version,
    about = "Variable annuity valuation in a discrete-time affine model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Price all legs and write a JSON report.
    Price(PriceArgs),
    /// Compare closed-form legs with the Monte Carlo oracle.
    Verify(VerifyArgs),
    /// Price over a range of one parameter and write a CSV table.
    Sweep(SweepArgs),
    /// Check that the discounted stock is a martingale under the model.
    CheckMartingale(MartingaleArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    contract: PathBuf,
    #[arg(long)]
    loadings: PathBuf,
}

#[derive(Debug, Args, Clone, Copy)]
struct QuadArgs {
    /// Damping abscissa, `w > 1`.
    #[arg(long)]
    w: Option<f64>,
    /// Number of quadrature nodes.
    #[arg(long)]
    nodes: Option<usize>,
    /// Truncation of the Fourier integral.
    #[arg(long = "lambda-max")]
    lambda_max: Option<f64>,
}

#[derive(Debug, Args, Clone, Copy)]
struct McArgs {
    /// Monte Carlo paths.
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct PriceArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    quad: QuadArgs,
    #[command(flatten)]
    mc: McArgs,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the report as `name,value` rows.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Fail instead of simulating legs without a closed form.
    #[arg(long)]
    closed_form_only: bool,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    quad: QuadArgs,
    #[command(flatten)]
    mc: McArgs,
    /// Pass threshold in standard errors.
    #[arg(long, default_value_t = 4.0)]
    k_sigma: f64,
    /// JSON copy of the verification table.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Corrupt the closed form on purpose (negative control).
    #[arg(long, value_enum, hide = true)]
    fault: Option<FaultArg>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    quad: QuadArgs,
    #[command(flatten)]
    mc: McArgs,
    #[arg(long, value_enum)]
    parameter: SweepParameter,
    #[arg(long)]
    from: f64,
    #[arg(long)]
    to: f64,
    #[arg(long, default_value_t = 5)]
    steps: usize,
    /// CSV path; stdout when omitted.
    #[arg(long, visible_alias = "csv")]
    out: Option<PathBuf>,
    #[arg(long)]
    closed_form_only: bool,
}

#[derive(Debug, Args)]
struct MartingaleArgs {
    #[arg(long)]
    model: PathBuf,
    /// Also check `E[S_t] = S_0` by simulation.
    #[arg(long, default_value_t = 0)]
    paths: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 12)]
    horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParameter {
    Delta,
    PenaltyScale,
    HazardScaleM,
    HazardScaleS,
    W,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    KappaTerminal,
    KappaMiddle,
    KappaEarly,
    KappaTie,
    FourierConstant,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Price(a) => commands::price(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::CheckMartingale(a) => commands::check_martingale(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
