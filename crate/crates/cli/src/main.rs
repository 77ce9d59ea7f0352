use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shiftcal::commands::{self, BoundOptions};
use shiftcal::config::RunConfig;
use shiftcal::output::resolve_out_dir;
use shiftcal::Result;
use shiftcal_core::metrics::{DEFAULT_BINS, DEFAULT_TOP_K};

/// Recalibration under covariate shift: experiments, reports and bound checks.
#[derive(Parser)]
#[command(name = "shiftcal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured method for every seed.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        /// Output directory; overrides the config and SHIFTCAL_OUT_DIR.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Reliability bins and diagram of a checkpoint on labeled data.
    Reliability {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Labeled CSV in the dataset format.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Check the calibration bound on an enumerable scenario.
    VerifyBound {
        #[arg(long, default_value = "grid-K3")]
        scenario: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Weight bound U; defaults to the domain's largest true weight.
        #[arg(long)]
        clamp_bound: Option<f64>,
        /// Replace the multiplier (1+U)^4, to confirm violations are detected.
        #[arg(long)]
        debug_lambda: Option<f64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Spread of estimated importance weights across seeds.
    IwReport {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        top: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let dir = resolve_out_dir(out.as_deref(), cfg.out_dir.as_deref());
            let outcome = commands::run(&cfg, &dir);
            // Partial results are on disk either way; report what exists.
            if let Ok(o) = &outcome {
                for (m, s) in &o.degenerate {
                    eprintln!("warning: {m} seed {s}: learned features lost source accuracy");
                }
            }
            if let Ok(summary) = std::fs::read_to_string(dir.join("summary.csv")) {
                print!("{summary}");
            }
            outcome?;
            println!("wrote {}", dir.display());
        }
        Command::Reliability {
            checkpoint,
            data,
            bins,
            out,
        } => {
            let dir = resolve_out_dir(out.as_deref(), None);
            let o = commands::reliability(&checkpoint, &data, bins, &dir)?;
            println!("ece {} overconfident_ece {}", o.report.ece, o.report.overconfident_ece);
            println!("wrote {} and {}", o.csv_path.display(), o.svg_path.display());
        }
        Command::VerifyBound {
            scenario,
            trials,
            seed,
            clamp_bound,
            debug_lambda,
            out,
        } => {
            let dir = resolve_out_dir(out.as_deref(), None);
            let opts = BoundOptions {
                scenario,
                trials,
                seed,
                clamp_bound,
                debug_lambda,
            };
            let s = commands::verify_bound(&opts, &dir)?;
            println!("U = {} lambda = {}", s.clamp_bound, s.lambda);
            println!(
                "{} instances: {} bound violations, {} chain violations, min slack {:e}",
                s.trials.len(),
                s.bound_violations(),
                s.chain_violations(),
                s.min_slack()
            );
            println!("tight instance slack {:e}", s.tight.slack);
            println!("adversarial instance slack {:e}", s.adversarial.slack);
            println!("wrote {}", s.csv_path.display());
        }
        Command::IwReport { config, top, out } => {
            let cfg = RunConfig::load(&config)?;
            let dir = resolve_out_dir(out.as_deref(), cfg.out_dir.as_deref());
            let o = commands::iw_report(&cfg, top, &dir)?;
            print!("{}", o.report.to_csv());
            println!("wrote {} and {}", o.csv_path.display(), o.svg_path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // Exit code 2 is reserved for bound violations, so usage errors exit 1.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
