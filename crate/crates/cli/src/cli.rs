//! Argument definitions and dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands;
use crate::error::{exit, CliError};

#[derive(Debug, Parser)]
#[command(name = "diffpass", version, about = "Differential-passivity checks, simulations and figure demos")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan the conditions certifying a bundled system over a grid.
    Check(CheckArgs),
    /// Integrate the prolonged system and test the dissipation inequality.
    Simulate(SimulateArgs),
    /// Regenerate the data behind one of the bundled figures.
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StorageArg {
    /// The certificate the example ships with.
    Default,
    /// The example's own metric under the three general conditions.
    #[value(alias = "custom-mB")]
    Custom,
    /// `M = Q` for gradient systems.
    Natural,
    /// `M = Q P Q` for gradient systems.
    Qpq,
    /// Constant `M = P`.
    Constant,
}

impl StorageArg {
    pub fn as_str(self) -> &'static str {
        match self {
            StorageArg::Default => "default",
            StorageArg::Custom => "custom",
            StorageArg::Natural => "natural",
            StorageArg::Qpq => "qpq",
            StorageArg::Constant => "constant",
        }
    }
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Registry name: osc-a, osc-b, osc-c, rc, rigid-body, linear-fixture.
    pub system: String,
    #[arg(long, value_enum, default_value = "default")]
    pub storage: StorageArg,
    /// Weight matrix: a scalar `c` (for `c I`) or rows `a,b;c,d`.
    #[arg(long = "P", allow_hyphen_values = true)]
    pub p: Option<String>,
    /// `lo:hi:count` per axis, axes separated by commas.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Input samples for input-dependent conditions, `;`-separated vectors.
    #[arg(long = "u-samples", allow_hyphen_values = true)]
    pub u_samples: Option<String>,
    /// Tolerance for every condition (defaults: 1e-9 for eigenvalue margins,
    /// 1e-8 for residuals).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-point tables as `<stem>.<condition>.csv`.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub system: String,
    /// Initial state, comma-separated; repeat for an ensemble.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Vec<String>,
    /// Initial variation (default: all ones).
    #[arg(long, allow_hyphen_values = true)]
    pub dx0: Option<String>,
    /// Input signal, one expression per channel, comma-separated.
    #[arg(long, allow_hyphen_values = true)]
    pub u: Option<String>,
    /// Input variation (default: zero).
    #[arg(long, allow_hyphen_values = true)]
    pub du: Option<String>,
    /// Step size (default: the example's recommended step).
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long = "T", default_value_t = 10.0)]
    pub t_final: f64,
    #[arg(long, value_enum, default_value = "default")]
    pub storage: StorageArg,
    #[arg(long = "P", allow_hyphen_values = true)]
    pub p: Option<String>,
    /// Largest accepted dissipation residual.
    #[arg(long, default_value_t = 1e-6)]
    pub rtol: f64,
    /// Trajectory CSV; ensembles write `<stem>.<k>.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the JSON summary here instead of standard output.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DemoName {
    #[value(name = "fig1-small")]
    Fig1Small,
    #[value(name = "fig1-large")]
    Fig1Large,
    #[value(name = "fig2")]
    Fig2,
    #[value(name = "fig3-track")]
    Fig3Track,
    #[value(name = "fig3-feedback")]
    Fig3Feedback,
}

impl DemoName {
    pub fn as_str(self) -> &'static str {
        match self {
            DemoName::Fig1Small => "fig1-small",
            DemoName::Fig1Large => "fig1-large",
            DemoName::Fig2 => "fig2",
            DemoName::Fig3Track => "fig3-track",
            DemoName::Fig3Feedback => "fig3-feedback",
        }
    }
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    pub name: DemoName,
    #[arg(long = "out-dir", default_value = ".")]
    pub out_dir: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status. Diagnostics go to `err`, results to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::PASS };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
            } else {
                let _ = write!(out, "{rendered}");
            }
            return code;
        }
    };
    let result = match &cli.command {
        Command::Check(a) => commands::check(a, out),
        Command::Simulate(a) => commands::simulate(a, out, err),
        Command::Demo(a) => commands::demo(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => report_error(&e, err),
    }
}

fn report_error(e: &CliError, err: &mut dyn Write) -> i32 {
    let _ = writeln!(err, "error: {e}");
    e.exit_code()
}
