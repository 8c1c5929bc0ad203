mod commands;
mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Mutual Information Divergence and related caption/image metrics over
/// paired embedding files.
#[derive(Parser, Debug)]
#[command(name = "midm", version, about, long_about = None)]
pub struct Cli {
    /// Worker threads (falls back to MIDM_THREADS, then all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit reference moments and save a model file
    Fit(FitArgs),
    /// Score evaluation pairs: per-pair PMI and the MID aggregate
    Mid(MidArgs),
    /// PMI of a single pair
    Pmi(PmiArgs),
    /// Comparison metrics
    Baseline(BaselineArgs),
    /// MID as a growing fraction of pairs is misaligned
    ShuffleCurve(ShuffleArgs),
    /// Rank correlation as the reference set shrinks
    Parsimony(ParsimonyArgs),
    /// Pairwise accuracy of ground truth over foils
    FoilAcc(FoilArgs),
    /// Fraction of triples where the foiled sample scores lowest
    ReasonAcc(ReasonArgs),
    /// Kendall rank correlation between scores and judgments
    Corr(CorrArgs),
    /// Write correlated Gaussian pairs with a known mutual information
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EpsPreset {
    Default,
    Foil,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub x: Option<PathBuf>,
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Covariance regularizer [default: 5e-4]
    #[arg(long, conflicts_with = "eps_preset")]
    pub eps: Option<f64>,
    #[arg(long, value_enum)]
    pub eps_preset: Option<EpsPreset>,
    #[arg(long)]
    pub out: PathBuf,
    /// Run manifest supplying reference paths and epsilon
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Manifest override, `key=value` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Args, Debug)]
pub struct MidArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    /// Report path (stdout when omitted)
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub pretty: bool,
}

#[derive(Args, Debug)]
pub struct PmiArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated x features
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with_all = ["x", "row"])]
    pub x_vec: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "x_vec")]
    pub y_vec: Option<Vec<f64>>,
    #[arg(long, requires_all = ["y", "row"])]
    pub x: Option<PathBuf>,
    #[arg(long)]
    pub y: Option<PathBuf>,
    #[arg(long)]
    pub row: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    ClipS,
    RefclipS,
    Refmid,
    Infonce,
    Rprec,
    Fid,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub metric: Metric,
    /// Condition features (images); for fid, the first sample set
    #[arg(long)]
    pub x: PathBuf,
    /// Generated features (captions); for fid, the second sample set
    #[arg(long)]
    pub y: PathBuf,
    /// Reference caption features, `refs-per-item` consecutive rows per item
    #[arg(long)]
    pub refs: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub refs_per_item: usize,
    /// Model for the MID term of refmid
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub weight: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub candidates: Option<usize>,
    /// Distractor sampling seed (rprec)
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ShuffleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Tau {
    B,
    C,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Aggregate {
    Median,
    PerJudgment,
}

#[derive(Args, Debug)]
pub struct ParsimonyArgs {
    #[arg(long)]
    pub ref_x: PathBuf,
    #[arg(long)]
    pub ref_y: PathBuf,
    /// Judged items, one row per item
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    /// `item<TAB>score<TAB>judgment`, item = row index in --x/--y
    #[arg(long)]
    pub judgments: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.6,0.8,1")]
    pub fractions: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "c")]
    pub tau: Tau,
    #[arg(long, value_enum, default_value = "per-judgment")]
    pub aggregate: Aggregate,
    #[arg(long, conflicts_with = "eps_preset")]
    pub eps: Option<f64>,
    #[arg(long, value_enum)]
    pub eps_preset: Option<EpsPreset>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TieName {
    Half,
    Random,
}

#[derive(Args, Debug)]
pub struct FoilArgs {
    /// Ground-truth scores, one per line (or a `mid` report)
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub foil: PathBuf,
    #[arg(long, value_enum, default_value = "half")]
    pub tie: TieName,
    /// Required with `--tie random`
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ReasonArgs {
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long)]
    pub fake: PathBuf,
    #[arg(long)]
    pub foiled: PathBuf,
}

#[derive(Args, Debug)]
pub struct CorrArgs {
    /// `id<TAB>score<TAB>judgment`
    #[arg(long)]
    pub judgments: PathBuf,
    /// Replace the score column: scores by row index (ids must be row indices)
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "b")]
    pub tau: Tau,
    #[arg(long, value_enum, default_value = "per-judgment")]
    pub aggregate: Aggregate,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub rho: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = "synth_x.emb")]
    pub out_x: PathBuf,
    #[arg(long, default_value = "synth_y.emb")]
    pub out_y: PathBuf,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(midm::Error),
}

impl From<midm::Error> for CliError {
    fn from(e: midm::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(e) if e.is_numeric() => EXIT_NUMERIC,
            CliError::Lib(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("MIDM_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("MIDM_THREADS must be a positive integer, got '{v}'"))),
        _ => Ok(None),
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code. Diagnostics go to `err` as a single line.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    // the pool runs the command against a buffer; `out` need not be Send
    let mut buf = Vec::new();
    let result = thread_count(cli.threads).and_then(|threads| match threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?
            .install(|| commands::dispatch(&cli.command, &mut buf)),
        None => commands::dispatch(&cli.command, &mut buf),
    });
    let _ = out.write_all(&buf);
    let _ = out.flush();
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "midm: {}", e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}

fn main() -> ExitCode {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock());
    ExitCode::from(code as u8)
}
