//! `cubicwave`: experiment runner for the focusing cubic wave equation.
//!
//! Exit status: 0 success, 1 usage error, 2 numerical failure, 3
//! indeterminate experiment.

mod commands;
mod figures;
mod settings;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use settings::{DataArgs, OutArgs, SolverArgs};

#[derive(Parser, Debug)]
#[command(name = "cubicwave", version, about = "Hyperboloidal evolutions of the focusing cubic wave equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evolve one initial datum and write its run record.
    Evolve {
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Grid points (nearest to these rho) to record as time series.
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 1.0])]
        sample_rho: Vec<f64>,
        /// Times of recorded profiles.
        #[arg(long, value_delimiter = ',')]
        snapshot_tau: Vec<f64>,
    },
    /// Self-convergence factor Q(tau) from runs at cells, 2 cells, 4 cells, ...
    Converge {
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Fit the attractor family to a run.
    Fit {
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long, value_enum, default_value_t = FitMethod::Space)]
        method: FitMethod,
        #[arg(long)]
        tau_start: Option<f64>,
        #[arg(long)]
        tau_end: Option<f64>,
        #[arg(long, value_enum)]
        weighting: Option<WeightingArg>,
        /// Every n-th grid point in time fits.
        #[arg(long)]
        stride: Option<usize>,
        /// Window starts for `--method limit`.
        #[arg(long, value_delimiter = ',')]
        starts: Vec<f64>,
        /// Window `t0,t1` over which the space-fit modulation is
        /// extrapolated; without it the last slice's parameters are used.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        extrapolate: Vec<f64>,
    },
    /// Local power index d ln|Phi| / d ln tau at chosen points.
    PowerIndex {
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long, value_delimiter = ',')]
        rho: Vec<f64>,
        /// Physical radii, mapped to the grid point nearest their rho.
        #[arg(long, value_delimiter = ',')]
        radius: Vec<f64>,
    },
    /// Bisect the Gaussian amplitude for a threshold.
    Bisect {
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long, value_enum)]
        mode: BisectMode,
        #[arg(long)]
        lo: Option<f64>,
        #[arg(long)]
        hi: Option<f64>,
        /// Absolute bracket tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Tolerance relative to the initial bracket (overrides --tol).
        #[arg(long)]
        rel_tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Divergence-time spread counted as simultaneous (simultaneous mode).
        #[arg(long)]
        simultaneity: Option<f64>,
    },
    /// Blowup analysis in either chart.
    Blowup {
        #[arg(long, value_enum, default_value_t = Chart::Hyperboloidal)]
        solver: Chart,
        #[command(flatten)]
        settings: SolverArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Outer radius of the standard-chart domain.
        #[arg(long)]
        r_max: Option<f64>,
        /// Final time of the standard-chart run (default r_max).
        #[arg(long)]
        max_t: Option<f64>,
        /// Range of T - t used for the rate (hyperboloidal) or attractor
        /// fit (standard).
        #[arg(long, value_delimiter = ',', num_args = 2)]
        fit_window: Vec<f64>,
        /// Range of T - t for the difference slope (standard).
        #[arg(long, value_delimiter = ',', num_args = 2)]
        slope_window: Vec<f64>,
        /// Predict the blowup from an attractor fit over `t0,t1`
        /// (hyperboloidal).
        #[arg(long, value_delimiter = ',', num_args = 2)]
        predict: Vec<f64>,
        /// Largest rho used by the prediction fit.
        #[arg(long)]
        rho_max: Option<f64>,
    },
    /// Run the scripted experiment behind one figure (2-9) and write its data.
    ReproduceFigure {
        #[arg(value_parser = clap::value_parser!(u8).range(2..=9))]
        figure: u8,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitMethod {
    /// Per-point fits in tau.
    Time,
    /// Per-slice fits in rho.
    Space,
    /// Time fits on [s, 2s] extrapolated in 1/s.
    Limit,
    /// Two time fits combined to cancel the leading window bias.
    Extrapolated,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightingArg {
    Absolute,
    Relative,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum BisectMode {
    Critical,
    Flip,
    Simultaneous,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Chart {
    Hyperboloidal,
    Standard,
}

/// Bad input; exit status 1.
#[derive(Debug)]
pub struct Usage(pub String);

/// The experiment could not decide; exit status 3.
#[derive(Debug)]
pub struct Indeterminate(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for Indeterminate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "indeterminate: {}", self.0)
    }
}

impl std::error::Error for Usage {}
impl std::error::Error for Indeterminate {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Indeterminate>() {
            return 3;
        }
        if cause.is::<Usage>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<cubicwave::Error>() {
            return match e {
                cubicwave::Error::Config(_)
                | cubicwave::Error::Parse { .. }
                | cubicwave::Error::Bracket(_)
                | cubicwave::Error::Domain { .. } => 1,
                _ => 2,
            };
        }
    }
    2
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Evolve { solver, data, out, sample_rho, snapshot_tau } => {
            commands::evolve(&solver, &data, &out, &sample_rho, &snapshot_tau)
        }
        Command::Converge { solver, data, out, levels } => commands::converge(&solver, &data, &out, levels),
        Command::Fit { solver, data, out, method, tau_start, tau_end, weighting, stride, starts, extrapolate } => {
            let fit = commands::FitArgs { method, tau_start, tau_end, weighting, stride, starts, extrapolate };
            commands::fit(&solver, &data, &out, &fit)
        }
        Command::PowerIndex { solver, data, out, rho, radius } => commands::power_index(&solver, &data, &out, &rho, &radius),
        Command::Bisect { solver, out, mode, lo, hi, tol, rel_tol, max_iter, simultaneity } => {
            let b = commands::BisectArgs { mode, lo, hi, tol, rel_tol, max_iter, simultaneity };
            commands::bisect(&solver, &out, &b)
        }
        Command::Blowup { solver, settings, data, out, r_max, max_t, fit_window, slope_window, predict, rho_max } => {
            let b = commands::BlowupArgs { r_max, max_t, fit_window, slope_window, predict, rho_max };
            match solver {
                Chart::Hyperboloidal => commands::blowup_hyperboloidal(&settings, &data, &out, &b),
                Chart::Standard => commands::blowup_standard(&settings, &data, &out, &b),
            }
        }
        Command::ReproduceFigure { figure, out } => figures::reproduce(figure, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
