use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use blowuplab_cli::{cmd_analyze_tree, cmd_run_reduction, cmd_solve_linear, cmd_sweep, cmd_verify, CliError, RunOptions};

#[derive(Parser)]
#[command(name = "blowuplab", version, about = "Bubble-tree analysis, projected linear solves and reductions on the flat torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: the config's `output`, else ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated α values replacing the configured list.
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (fallback: BLOWUPLAB_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the bubble tree at every α.
    ///
    /// tree.csv columns: alpha,bubble,mu,rate,height,influence_radius,lower,higher
    /// (bubble indices 1-based, lists joined by ';').
    AnalyzeTree(Common),
    /// Solve the projected linear problem at every α.
    ///
    /// RHS: zero | kernel_shift:i,j | bubble_power:i | cross_terms.
    /// linear.csv columns: alpha,phi_max,h1_norm,weighted_max,multiplier_sum,iterations,residual.
    SolveLinear {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rhs: Option<String>,
    },
    /// Run the nonlinear reduction at every α.
    ///
    /// reduction.csv columns: alpha,mu_min,status,iterations,star_norm,h1_norm,in_S_alpha,E_alpha.
    RunReduction(Common),
    /// Check integral and pointwise estimates along the α sweep.
    ///
    /// verify.csv columns: alpha,estimate,label,point,lhs,rhs,ratio,normalized.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated estimate ids (default: all configured, else all).
        #[arg(long, value_delimiter = ',')]
        estimates: Option<Vec<String>>,
    },
    /// Reductions over all α with the C⁰ verdict.
    ///
    /// e_alpha.csv columns: alpha,mu_min,status,iterations,star_norm,h1_norm,in_S_alpha,E_alpha.
    Sweep(Common),
}

fn configure_threads(requested: Option<usize>) -> Result<(), CliError> {
    let threads = match requested {
        Some(t) => Some(t),
        None => match std::env::var("BLOWUPLAB_THREADS") {
            Ok(v) => Some(v.trim().parse().map_err(|_| CliError::Usage(format!("BLOWUPLAB_THREADS = `{v}` is not an integer")))?),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::AnalyzeTree(c) | Command::RunReduction(c) | Command::Sweep(c) => c,
        Command::SolveLinear { common, .. } | Command::Verify { common, .. } => common,
    };
    configure_threads(common.threads)?;
    let opts = RunOptions { out: common.out.clone(), alphas: common.alphas.clone(), seed: common.seed };
    let config = common.config.clone();
    match &cli.command {
        Command::AnalyzeTree(_) => cmd_analyze_tree(&config, &opts).map(drop),
        Command::SolveLinear { rhs, .. } => cmd_solve_linear(&config, rhs.as_deref(), &opts).map(drop),
        Command::RunReduction(_) => cmd_run_reduction(&config, &opts).map(drop),
        Command::Verify { estimates, .. } => cmd_verify(&config, estimates.as_deref(), &opts).map(drop),
        Command::Sweep(_) => cmd_sweep(&config, &opts).map(drop),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
