mod data;
mod interpret;
mod model;
mod verify;

use std::fmt;
use std::path::{Path, PathBuf};

use titv_core::Error;

use crate::args::{Cli, Command};
use crate::config::FileConfig;

/// Why a command failed, and the exit status that goes with it.
#[derive(Debug)]
pub enum Failure {
    Core(Error),
    /// One or more invariant suites did not hold.
    Verification(Vec<String>),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(e) if e.is_validation() => 2,
            Failure::Core(Error::Io { source, .. })
                if source.kind() == std::io::ErrorKind::NotFound =>
            {
                2
            }
            _ => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Verification(v) => write!(f, "verification failed:\n  {}", v.join("\n  ")),
        }
    }
}

pub type Outcome = std::result::Result<(), Failure>;

/// Global settings after merging the config file with the flags.
pub struct Context {
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub out_dir: PathBuf,
    pub file: FileConfig,
}

impl Context {
    fn new(cli: &Cli, argv: Vec<String>) -> Result<Self, Error> {
        let file = match &cli.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let threads = cli.threads.or(file.threads).unwrap_or(1);
        if threads == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        Ok(Context {
            argv,
            seed: cli.seed.or(file.seed),
            threads,
            out_dir: cli
                .out_dir
                .clone()
                .or_else(|| file.out_dir.clone())
                .unwrap_or_else(|| ".".into()),
            file,
        })
    }
}

pub fn run(cli: Cli, argv: Vec<String>) -> Outcome {
    let ctx = Context::new(&cli, argv)?;
    match &cli.command {
        Command::Synth(a) => data::synth(&ctx, a),
        Command::Ingest(a) => data::ingest(&ctx, a),
        Command::Train(a) => model::train(&ctx, a),
        Command::Evaluate(a) => model::evaluate(&ctx, a),
        Command::Interpret(a) => interpret::interpret(&ctx, a),
        Command::Verify(a) => verify::verify(a),
        Command::Baseline(a) => model::baseline(&ctx, a),
    }
}

/// Machine-readable result line.
pub fn emit(key: &str, value: impl fmt::Display) {
    println!("{key}={value}");
}

pub fn emit_path(key: &str, path: &Path) {
    emit(key, path.display());
}

pub fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "na".into(), |x| x.to_string())
}

/// Keeps ids and feature names usable as file name components.
pub fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}
