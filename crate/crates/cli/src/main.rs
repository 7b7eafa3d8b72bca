use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sprint_cusum::calibration::SprintFraction;
use sprint_cusum_cli::commands::{
    cmd_calibrate, cmd_monitor, cmd_simulate, parse_fraction, AppError, CalibrateArgs,
    MonitorArgs, Prewhiten, SimulateArgs,
};
use sprint_cusum_cli::experiments::{Case, Method};

#[derive(Parser)]
#[command(name = "sprint-cusum", version, about = "CUSUM charts with bootstrap-calibrated, sprint-length-indexed limits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate a limit schedule from in-control Phase-I data.
    Calibrate {
        /// CSV file with one observation per row.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "schedule.toml")]
        output: PathBuf,
        /// 0-based column holding the observations.
        #[arg(long, default_value_t = 0)]
        column: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200.0)]
        arl0: f64,
        #[arg(long = "jmax", default_value_t = 50)]
        j_max: usize,
        /// Target mean first sprint as a fraction of j_max: 0.5, 0.75 or 1.0.
        #[arg(long, default_value = "0.75", value_parser = parse_fraction)]
        sprint_fraction: SprintFraction,
        #[arg(long, default_value_t = 5000)]
        boot_reps: usize,
        #[arg(long, default_value_t = 100)]
        tune_reps: usize,
        /// off, aic:<max_order> or fixed:<order>.
        #[arg(long, default_value = "off")]
        prewhiten: Prewhiten,
    },
    /// Monitor a Phase-II stream with a calibrated schedule.
    Monitor {
        #[arg(long)]
        schedule: PathBuf,
        /// CSV file, or `-` for standard input (the default).
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        column: usize,
        /// Restart at zero after a signal instead of stopping.
        #[arg(long = "continue")]
        continue_after_signal: bool,
        /// Write the per-step log (n, x, z, c, t, limit) here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run Monte Carlo studies.
    Simulate {
        #[arg(long, default_value = "I")]
        case: Case,
        /// Comma-separated subset of C, NP1, NP2, B1, B2, B3.
        #[arg(long, default_value = "C,NP1,NP2,B1,B2,B3", value_delimiter = ',')]
        methods: Vec<Method>,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long = "jmax", default_value_t = 50)]
        j_max: usize,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        /// Phase-I sample size.
        #[arg(long, default_value_t = 1000)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200.0)]
        arl0: f64,
        #[arg(long, default_value_t = 2000)]
        boot_reps: usize,
        /// Bootstrap-validity study of the conditional distributions.
        #[arg(long)]
        table1: bool,
        /// Calibrate on the true in-control distribution instead of Phase-I data.
        #[arg(long)]
        known: bool,
        /// Also write plot-ready long-format CSV here.
        #[arg(long)]
        long_format: Option<PathBuf>,
        /// Worker threads (defaults to all cores); output does not depend on it.
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), AppError> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Calibrate { input, output, column, seed, arl0, j_max, sprint_fraction, boot_reps, tune_reps, prewhiten } => {
            let args = CalibrateArgs { input, output, column, seed, arl0, j_max, fraction: sprint_fraction, boot_reps, tune_reps, prewhiten };
            cmd_calibrate(&args, &mut out)?;
        }
        Command::Monitor { schedule, input, column, continue_after_signal, log } => {
            cmd_monitor(&MonitorArgs { schedule, input, column, continue_after_signal, log }, &mut out)?;
        }
        Command::Simulate { case, methods, delta, j_max, reps, m, seed, arl0, boot_reps, table1, known, long_format, threads } => {
            let args = SimulateArgs { case, methods, delta, j_max, reps, m, seed, arl0, boot_reps, table1, known, long_format };
            match threads {
                Some(n) => {
                    let pool = rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build()
                        .map_err(|e| AppError::Usage(e.to_string()))?;
                    let mut buf = Vec::new();
                    pool.install(|| cmd_simulate(&args, &mut buf))?;
                    out.write_all(&buf)?;
                }
                None => cmd_simulate(&args, &mut out)?,
            }
        }
    }
    out.flush().map_err(AppError::from)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
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
