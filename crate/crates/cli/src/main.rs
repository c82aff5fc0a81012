use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use irkm_cli::config::Config;
use irkm_cli::target::parse_target_auto;
use irkm_cli::verify::{render, run_checks, VerifyOptions};
use irkm_cli::{runner, sweep, CliError, VERSION};

#[derive(Parser)]
#[command(name = "irkm", version = VERSION, about = "Kernel feature-learning experiments (IRKM, RFM, KRR)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured method and seed at one sample size.
    Run {
        config: PathBuf,
        /// Override `out_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the grid of sample sizes × seeds × methods and aggregate results.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the numerical core against small independent oracles.
    Verify {
        /// Offset added to analytic gradients; any nonzero value should fail.
        #[arg(long, hide = true, default_value_t = 0.0)]
        perturb_gradient: f64,
    },
    /// Parse a target expression and print its canonical form.
    ParseTarget {
        expr: String,
        /// Ambient dimension; defaults to the largest variable index.
        #[arg(long)]
        dim: Option<usize>,
    },
}

fn load(config: &Path, out: Option<PathBuf>) -> Result<Config, CliError> {
    let mut cfg = Config::load(config)?;
    if let Some(out) = out {
        cfg.out_dir = out;
    }
    Ok(cfg)
}

fn real_main(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load(&config, out)?;
            for r in runner::cmd_run(&cfg)? {
                println!(
                    "{:<5} seed {:<4} n {:<6} best step {:<3} best test MSE {:.6e}  final {:.6e}",
                    r.method.name(),
                    r.seed,
                    r.n,
                    r.trace.best_step,
                    r.best().test_mse,
                    r.final_record().test_mse
                );
            }
            println!("wrote {}", cfg.out_dir.display());
        }
        Command::Sweep { config, out } => {
            let cfg = load(&config, out)?;
            let results = sweep::cmd_sweep(&cfg)?;
            for a in sweep::aggregate(&results) {
                println!("{:<5} n {:<6} runs {:<3} mean {:.6e}  std {:.3e}", a.method.name(), a.n, a.count, a.mean, a.std);
            }
            println!("wrote {}", cfg.out_dir.display());
        }
        Command::Verify { perturb_gradient } => {
            let out = run_checks(&VerifyOptions {
                gradient_perturbation: perturb_gradient,
            });
            print!("{}", render(&out));
            if out.iter().any(|o| !o.passed) {
                return Ok(ExitCode::from(1));
            }
        }
        Command::ParseTarget { expr, dim } => {
            let f = match dim {
                Some(d) => irkm_cli::target::parse_target(&expr, d),
                None => parse_target_auto(&expr),
            }
            .map_err(|e| CliError::Config(format!("target: {e}")))?;
            println!("{f}");
            println!("dim {}  degree {}  leap {}  squared norm {}", f.dim(), f.degree(), f.leap_complexity(), f.squared_norm());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
