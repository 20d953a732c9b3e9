use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "geoext", version, about = "Projective geodesic extensions of nonholonomic systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Classify a Chaplygin system by its gyroscopic data.
    Classify(ClassifyArgs),
    /// Check a candidate extension: (A′), (B′), completion and pregeodesics.
    Check(CheckArgs),
    /// Integrate nonholonomic, geodesic or reduced dynamics to CSV.
    Integrate(IntegrateArgs),
    /// Sweep a parameter and tabulate a check.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Built-in system: particle, carriage, r4math, flat.
    #[arg(long, conflicts_with = "config")]
    pub builtin: Option<String>,
    /// System description file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Parameter override `K=V`, repeatable.
    #[arg(long = "param", value_name = "K=V")]
    pub params: Vec<String>,
    /// Residual tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Lattice points per coordinate.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Seed for randomized sample states.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory for written files.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Emit JSON (default).
    #[arg(long, conflicts_with = "markdown")]
    pub json: bool,
    /// Emit markdown.
    #[arg(long)]
    pub markdown: bool,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[command(flatten)]
    pub common: Common,
    /// Conformal factor F.
    #[arg(long = "F", default_value = "0", allow_hyphen_values = true)]
    pub f: String,
    /// Entry `a:i=expr` of ḡ(X_a, X_i), repeatable.
    #[arg(long = "gbar", value_name = "A:I=EXPR", allow_hyphen_values = true)]
    pub gbar: Vec<String>,
    /// Recover the candidate by scanning a one-parameter family.
    #[arg(long, value_enum)]
    pub scan: Option<ScanKind>,
    /// Scan grid `lo:hi:step`.
    #[arg(long, default_value = "-4:4:0.25", allow_hyphen_values = true)]
    pub scan_range: String,
    /// Pregeodesic test states.
    #[arg(long, default_value_t = 3)]
    pub states: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanKind {
    Beta,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum What {
    Nh,
    Geodesic,
    Reduced,
}

#[derive(Args, Debug)]
pub struct IntegrateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Initial point, comma separated (reduced coordinates for `reduced`).
    #[arg(long, allow_hyphen_values = true)]
    pub q: String,
    /// Initial frame velocity, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub v: String,
    #[arg(long, default_value_t = 1.0)]
    pub t_end: f64,
    /// Fixed RK4 step; adaptive Dormand–Prince when absent.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, value_enum, default_value = "nh")]
    pub what: What,
    /// Completed metric written by `check`.
    #[arg(long)]
    pub metric: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepCheck {
    #[value(name = "f0-scan")]
    F0Scan,
    Classify,
    Phi,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// `name=lo:hi:step`, inclusive.
    #[arg(long, conflicts_with = "values")]
    pub range: Option<String>,
    /// `name=v1,v2,...`.
    #[arg(long)]
    pub values: Option<String>,
    #[arg(long, value_enum)]
    pub check: SweepCheck,
    /// Scan grid `lo:hi:step` for `f0-scan`.
    #[arg(long, default_value = "-4:4:0.25", allow_hyphen_values = true)]
    pub scan_range: String,
}
