//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 math-domain
//! error, 1 anything else.

mod commands;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, ErrorKind, Result};

/// Environment variable overriding where computed embeddings are cached.
pub const CACHE_DIR_ENV: &str = "ADHERENCE_CACHE_DIR";

#[derive(Debug, Parser)]
#[command(name = "prompt-adherence", version, about = "Audio prompt adherence scoring and experiment harness")]
pub struct Cli {
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample prompt/stem window pairs and write a manifest plus window cache.
    Pairs(PairsArgs),
    /// Embed a pair set (or ingest an external embedding file).
    Embed(EmbedArgs),
    /// Score candidate embeddings against matching and non-matching references.
    Score(ScoreArgs),
    /// Experiment 1: distances of matching and deranged candidates.
    Exp1(ExpArgs),
    /// Experiment 2: adherence scores of matching and deranged candidates.
    Exp2(ExpArgs),
    /// Experiment 3: adherence scores under pitch, time and random perturbations.
    Exp3(ExpArgs),
    /// Render a synthetic multitrack collection.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    /// Collection directories laid out as `<dir>/<project>/<stem>.wav`.
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    pub collections: Vec<PathBuf>,
    #[arg(long)]
    pub n_windows: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    pub window_seconds: f64,
    #[arg(long, default_value_t = 1.0)]
    pub hop_seconds: f64,
    /// Keep drawing with replacement once the eligible grid is exhausted.
    #[arg(long)]
    pub allow_replacement: bool,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Pair set directory written by `pairs`.
    #[arg(long)]
    pub pairs: PathBuf,
    /// `builtin` (alias `builtin-logmel`) or `external:<path to AEMB file>`.
    #[arg(long, default_value = "builtin")]
    pub backend: String,
    #[arg(long, default_value = "mix")]
    pub fusion: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Embeddings of the matching reference pairs.
    #[arg(long)]
    pub reference_emb: PathBuf,
    #[arg(long)]
    pub candidate_emb: PathBuf,
    /// Embeddings of the non-matching reference pairs. Optional for CONC
    /// embeddings, whose stem halves are deranged in place.
    #[arg(long)]
    pub nonmatching_emb: Option<PathBuf>,
    #[arg(long, default_value = "mmd")]
    pub metric: String,
    #[arg(long, default_value = "np")]
    pub projection: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ExpArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// `bright` or `hollow`.
    #[arg(long, default_value = "bright")]
    pub style: String,
    #[arg(long, default_value_t = 20)]
    pub n_projects: usize,
    #[arg(long, default_value_t = 30.0)]
    pub seconds: f64,
    #[arg(long)]
    pub seed: u64,
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Math => 4,
        ErrorKind::Other => 1,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let json = cli.json;
    match run(cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let text = if json { out.json } else { out.text };
            let _ = writeln!(stdout, "{}", text.trim_end());
            0
        }
        Err(e) => {
            let code = exit_code(&e);
            if json {
                let body = serde_json::json!({ "error": e.to_string(), "exit_code": code });
                println!("{body}");
            }
            eprintln!("error: {e}");
            code
        }
    }
}

pub fn main() -> i32 {
    main_with_args(std::env::args_os())
}

/// A command's result rendered both ways.
struct Output {
    text: String,
    json: String,
}

fn run(cli: Cli) -> Result<Output> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("configuring thread pool: {e}")))?;
    }
    match cli.command {
        Command::Pairs(a) => commands::pairs(&a),
        Command::Embed(a) => commands::embed(&a),
        Command::Score(a) => commands::score(&a),
        Command::Exp1(a) => commands::experiment(1, &a),
        Command::Exp2(a) => commands::experiment(2, &a),
        Command::Exp3(a) => commands::experiment(3, &a),
        Command::Synth(a) => commands::synth(&a),
    }
}
