use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(name = "pose-dynamics", version, about = "Kinematic and recurrence analysis of pose keypoint time series")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct InputArgs {
    /// Pose CSV, pose JSON file, or directory of per-frame JSON files.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Sampling rate in Hz.
    #[arg(long, default_value_t = 60.0)]
    pub rate: f64,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Person index in pose JSON.
    #[arg(long, default_value_t = 0)]
    pub person: usize,
    /// Keypoint array name in pose JSON.
    #[arg(long, default_value = "pose_keypoints_2d")]
    pub json_key: String,
}

#[derive(Copy, Clone, ValueEnum)]
pub enum Format {
    Csv,
    PoseJson,
}

#[derive(Copy, Clone, ValueEnum)]
pub enum Norm {
    Zscore,
    Unit,
    None,
}

#[derive(Copy, Clone, ValueEnum)]
pub enum Scope {
    Trial,
    Window,
}

#[derive(Copy, Clone, ValueEnum)]
pub enum RescaleArg {
    Mean,
    Max,
    None,
}

#[derive(Copy, Clone, ValueEnum)]
pub enum TemplateArg {
    GlobalMean,
    ReferenceFrame,
}

/// Window geometry; omitted length means one window over the whole signal.
#[derive(Args, Clone)]
pub struct WindowArgs {
    /// Window length in samples.
    #[arg(long)]
    pub window: Option<usize>,
    /// Fractional overlap in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    pub overlap: f64,
}

/// A table of series (e.g. a features CSV) and its sampling rate.
#[derive(Args, Clone)]
pub struct SeriesArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    /// Sampling rate in Hz.
    #[arg(long, default_value_t = 60.0)]
    pub rate: f64,
}

#[derive(Args, Clone)]
pub struct RecurrenceArgs {
    #[arg(long, short)]
    pub m: usize,
    #[arg(long)]
    pub tau: usize,
    /// Defaults to tau.
    #[arg(long)]
    pub theiler: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub lmin: usize,
    /// Rescaled radius (0.2 when neither this nor --target-rr is given).
    #[arg(long, conflicts_with = "target_rr")]
    pub epsilon: Option<f64>,
    /// Choose the radius that gives this recurrence rate (fraction).
    #[arg(long)]
    pub target_rr: Option<f64>,
    #[arg(long, value_enum, default_value_t = RescaleArg::Mean)]
    pub rescale: RescaleArg,
    /// Per-window normalization before embedding.
    #[arg(long, value_enum, default_value_t = Norm::Zscore)]
    pub normalize: Norm,
    #[command(flatten)]
    pub windows: WindowArgs,
    /// Metrics CSV.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write the whole-signal recurrence plot as PGM.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Mask, resample, fill gaps, filter and normalize a pose recording.
    Preprocess {
        #[command(flatten)]
        input: InputArgs,
        /// Mask observations below this confidence.
        #[arg(long)]
        confidence_min: Option<f64>,
        /// Longest gap (samples) to fill by linear interpolation.
        #[arg(long)]
        max_gap: Option<usize>,
        /// Zero-phase Butterworth low-pass cutoff in Hz.
        #[arg(long)]
        filter_cutoff: Option<f64>,
        #[arg(long, default_value_t = 4)]
        filter_order: usize,
        /// New sampling rate in Hz (cubic spline).
        #[arg(long)]
        resample: Option<f64>,
        #[arg(long, value_enum, default_value_t = Norm::None)]
        normalize: Norm,
        #[arg(long, value_enum, default_value_t = Scope::Trial)]
        scope: Scope,
        /// Block length in samples for window-scope normalization.
        #[arg(long)]
        window: Option<usize>,
        /// Output pose CSV.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Procrustes alignment of one or more recordings onto a shared template.
    Align {
        /// Pose recordings (CSV or JSON).
        #[arg(long = "input", short, required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 60.0)]
        rate: f64,
        /// Template keypoints (labels or indices), comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        keypoints: Vec<String>,
        #[arg(long, value_enum, default_value_t = TemplateArg::GlobalMean)]
        template: TemplateArg,
        /// Template points CSV (keypoint,x,y[,z]) instead of building one.
        #[arg(long, conflicts_with = "template")]
        template_file: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        reference_frame: usize,
        /// Rigid fit without scaling.
        #[arg(long)]
        no_scale: bool,
        /// One fit per block of this many frames.
        #[arg(long)]
        window: Option<usize>,
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Kinematic features and windowed summaries from a feature spec file.
    Features {
        #[command(flatten)]
        input: InputArgs,
        /// TOML file with [[features]] entries.
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        windows: WindowArgs,
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Delay and dimension from AMI and false nearest neighbours.
    EmbedParams {
        #[command(flatten)]
        series: SeriesArgs,
        /// Columns to analyse; the sample-level choice combines them.
        #[arg(long = "column", short, required = true)]
        columns: Vec<String>,
        #[arg(long, default_value_t = 100)]
        max_lag: usize,
        #[arg(long, default_value_t = 10)]
        max_m: usize,
        #[arg(long, default_value_t = 32)]
        bins: usize,
        /// Directory for the AMI and FNN curves.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Auto-recurrence quantification of one series.
    Rqa {
        #[command(flatten)]
        series: SeriesArgs,
        #[arg(long, short)]
        column: String,
        #[command(flatten)]
        rec: RecurrenceArgs,
    },
    /// Cross (or joint) recurrence quantification of two series.
    Crqa {
        #[command(flatten)]
        series: SeriesArgs,
        #[arg(long)]
        column_a: String,
        #[arg(long)]
        column_b: String,
        /// Second table for column B (defaults to the first).
        #[arg(long)]
        input_b: Option<PathBuf>,
        /// Joint instead of cross recurrence.
        #[arg(long)]
        joint: bool,
        #[command(flatten)]
        rec: RecurrenceArgs,
    },
    /// Multidimensional recurrence quantification over several series.
    Mdrqa {
        #[command(flatten)]
        series: SeriesArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        columns: Vec<String>,
        #[command(flatten)]
        rec: RecurrenceArgs,
    },
    /// Posture PCA and principal movements.
    Pca {
        #[arg(long = "input", short, required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 60.0)]
        rate: f64,
        #[arg(long)]
        standardize: bool,
        #[arg(long)]
        components: Option<usize>,
        #[arg(long, default_value_t = 3)]
        movements: usize,
        #[arg(long, default_value_t = 1.0)]
        target_rms: f64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Gap-interpolation simulation on a noisy sine.
    SimulateGaps {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        trials: usize,
        /// Gap lengths as multiples of tau.
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,1.5,2,3,4")]
        gaps: Vec<f64>,
        #[arg(long, default_value_t = 3000)]
        samples: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Execute a full run configuration.
    Run {
        /// TOML run configuration.
        #[arg(long, short)]
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(3);
        }
    }
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // core errors already embed their causes in the message
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
