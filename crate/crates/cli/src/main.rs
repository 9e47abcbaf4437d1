//! `grainkit`: film grain analysis, synthesis and measurement from the
//! command line.

mod commands;
mod config;
mod error;
mod video;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::video::RawFormat;

#[derive(Parser, Debug)]
#[command(name = "grainkit", version, about = "Film grain analysis, FGC SEI coding and grain synthesis")]
#[command(after_help = "Exit codes: 0 success, 2 usage, 3 I/O, 4 validation, 5 internal.")]
pub struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    /// Errors only.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate grain parameters from a video and write them as an `.fgs` sidecar.
    Analyze(AnalyzeArgs),
    /// Blend synthetic grain described by an `.fgs` sidecar into a video.
    Synthesize(SynthesizeArgs),
    /// Print the FGC SEI records of an `.fgs` sidecar.
    InspectSei(InspectArgs),
    /// Inject known grain into a clean video, analyze it and compare.
    Roundtrip(RoundtripArgs),
    /// PSNR and grain strength of a test video against a reference.
    Metrics(MetricsArgs),
    /// Decoding throughput with and without grain synthesis.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct ConfigArgs {
    /// TOML config file with optional [denoise], [analysis] and [synthesis]
    /// tables.
    #[arg(short, long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        if let Some(t) = self.threads {
            cfg.synthesis.threads = t;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Input video (Y4M, or raw I420/I010 with --width/--height).
    pub input: PathBuf,
    #[command(flatten)]
    pub raw: RawFormat,
    /// Output sidecar.
    #[arg(short, long, value_name = "FGS")]
    pub output: PathBuf,
    /// Write per-epoch diagnostics as JSON.
    #[arg(long, value_name = "JSON")]
    pub diagnostics: Option<PathBuf>,
    /// Temporal denoiser (block-matching, temporal-mean).
    #[arg(long)]
    pub denoiser: Option<String>,
    /// Cutoff estimator (calibrated, linear).
    #[arg(long)]
    pub cutoff_estimator: Option<String>,
    /// Frames between full analyses.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Upper bound on intensity intervals per component (1 to 10).
    #[arg(long)]
    pub max_intervals: Option<usize>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct SynthesizeArgs {
    /// Decoded video to add grain to.
    pub input: PathBuf,
    #[command(flatten)]
    pub raw: RawFormat,
    /// Sidecar with per-frame FGC SEI records.
    #[arg(short, long, value_name = "FGS")]
    pub sidecar: PathBuf,
    /// Output video; Y4M if the input is Y4M or the name ends in `.y4m`.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Master seed of the per-block random streams.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grain deblocking filter (vertical, both, none).
    #[arg(long)]
    pub deblock: Option<String>,
    /// Write the per-frame blend reports as a JSON array.
    #[arg(long, value_name = "JSON")]
    pub report: Option<PathBuf>,
    /// Pattern database cache, built and written if missing.
    #[arg(long, value_name = "FILE")]
    pub db_cache: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    pub sidecar: PathBuf,
    /// JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct RoundtripArgs {
    /// Clean input video.
    pub input: PathBuf,
    #[command(flatten)]
    pub raw: RawFormat,
    /// Injected luma scaling factor (0 to 255).
    #[arg(long, default_value_t = 40)]
    pub sf: i32,
    /// Injected horizontal cutoff (2 to 14).
    #[arg(long, default_value_t = 8)]
    pub h_cutoff: i32,
    /// Injected vertical cutoff (2 to 14).
    #[arg(long, default_value_t = 8)]
    pub v_cutoff: i32,
    /// Injected log2_scale_factor (2 to 7).
    #[arg(long, default_value_t = 3)]
    pub log2_scale_factor: u8,
    /// Master seed of the injected grain.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report path; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Also write the grained video.
    #[arg(long)]
    pub grained: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Reference video.
    pub reference: PathBuf,
    /// Test video, same format.
    pub test: PathBuf,
    #[command(flatten)]
    pub raw: RawFormat,
    #[arg(long, value_enum, default_value = "json")]
    pub format: ReportFormat,
    /// Report path; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Input video, held in memory during the runs.
    pub input: PathBuf,
    #[command(flatten)]
    pub raw: RawFormat,
    /// Sidecar to apply; without it every frame gets one interval of
    /// sf 40, cutoffs (8, 8), on all components.
    #[arg(short, long, value_name = "FGS")]
    pub sidecar: Option<PathBuf>,
    /// Thread counts to measure.
    #[arg(long = "threads-list", value_delimiter = ',', default_value = "1")]
    pub thread_counts: Vec<usize>,
    /// Timings are the best of this many runs.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Use only the first N frames.
    #[arg(long)]
    pub frames: Option<usize>,
    /// JSON report path.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

fn command_with_config_help() -> clap::Command {
    let defaults = format!(
        "TOML config file with optional [denoise], [analysis] and [synthesis] tables. \
         Missing keys keep their defaults, unknown keys are rejected. Defaults:\n\n{}",
        RunConfig::default_toml()
    );
    let mut cmd = Cli::command();
    for name in ["analyze", "synthesize", "roundtrip", "metrics", "bench"] {
        let help = defaults.clone();
        cmd = cmd.mut_subcommand(name, |s| s.mut_arg("config", |a| a.long_help(help)));
    }
    cmd
}

fn main() -> ExitCode {
    let matches = match command_with_config_help().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    let level = if cli.quiet {
        "error"
    } else {
        ["warn", "info", "debug", "trace"][usize::from(cli.verbose.min(3))]
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind as u8)
        }
    }
}
