//! Command-line front end.

mod commands;
pub mod config;
mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{ArgAction, Parser, Subcommand};

use crate::error::{Error, ErrorKind, Result};

pub use config::{Paths, PipelineOptions, RunConfig, RUN_CONFIG_FILE};
pub use pipeline::{run_pipeline, PipelineReport};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "protoglyph",
    version,
    about = "Learn and compare aligned character prototypes"
)]
pub struct Cli {
    /// TOML config file; its values override flags.
    #[arg(long, global = true, env = "PROTOGLYPH_CONFIG")]
    pub config: Option<PathBuf>,
    /// Master seed for training and synthesis.
    #[arg(long, global = true, env = "PROTOGLYPH_SEED")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "PROTOGLYPH_OUT", default_value = "out")]
    pub out: PathBuf,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic two-subtype corpus.
    Synth,
    /// Train a reference model on a corpus.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Re-estimate the prototypes of a reference model on a corpus.
    Finetune {
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// One finetuned model per document instead of one overall.
        #[arg(long)]
        per_document: bool,
    },
    /// Filter finetuned prototypes with reference masks and flag failures.
    Filter {
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long = "model")]
        models: Vec<PathBuf>,
    },
    /// Difference maps between two models.
    Compare {
        #[arg(long)]
        a: Option<PathBuf>,
        #[arg(long)]
        b: Option<PathBuf>,
    },
    /// Character and document graphs for a fleet of finetuned models.
    Graph {
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        ref_a: Option<PathBuf>,
        #[arg(long)]
        ref_b: Option<PathBuf>,
        #[arg(long = "model")]
        models: Vec<PathBuf>,
        /// Manifest supplying subtypes, reference membership and frequencies.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Per-subtype prototype variability.
    Variability {
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long = "model")]
        models: Vec<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Everything, from one manifest.
    Pipeline {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
}

fn path_flags(command: &Command) -> toml::Table {
    let mut t = toml::Table::new();
    let mut put = |k: &str, v: &Option<PathBuf>| {
        if let Some(p) = v {
            t.insert(k.into(), toml::Value::String(p.display().to_string()));
        }
    };
    let models = match command {
        Command::Synth => None,
        Command::Train { corpus } | Command::Pipeline { corpus } => {
            put("corpus", corpus);
            None
        }
        Command::Finetune {
            reference, corpus, ..
        } => {
            put("reference", reference);
            put("corpus", corpus);
            None
        }
        Command::Filter { reference, models } => {
            put("reference", reference);
            Some(models)
        }
        Command::Compare { a, b } => {
            put("a", a);
            put("b", b);
            None
        }
        Command::Graph {
            reference,
            ref_a,
            ref_b,
            models,
            corpus,
        } => {
            put("reference", reference);
            put("ref_a", ref_a);
            put("ref_b", ref_b);
            put("corpus", corpus);
            Some(models)
        }
        Command::Variability {
            reference,
            models,
            corpus,
        } => {
            put("reference", reference);
            put("corpus", corpus);
            Some(models)
        }
    };
    if let Some(models) = models.filter(|m| !m.is_empty()) {
        let list = models
            .iter()
            .map(|p| toml::Value::String(p.display().to_string()))
            .collect();
        t.insert("models".into(), toml::Value::Array(list));
    }
    t
}

impl Cli {
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut flags = toml::Table::new();
        if let Some(seed) = self.seed {
            let seed = i64::try_from(seed)
                .map_err(|_| Error::config("seed", "must fit in a signed 64-bit integer"))?;
            flags.insert("seed".into(), toml::Value::Integer(seed));
        }
        let paths = path_flags(&self.command);
        if !paths.is_empty() {
            flags.insert("paths".into(), toml::Value::Table(paths));
        }
        RunConfig::resolve(flags, self.config.as_deref())
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Usage => EXIT_USAGE,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Numeric => EXIT_NUMERIC,
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let config = cli.resolve_config()?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Synth => commands::synth(&config, out),
        Command::Train { .. } => commands::train(&config, out),
        Command::Finetune { per_document, .. } => commands::finetune(&config, out, *per_document),
        Command::Filter { .. } => commands::filter(&config, out),
        Command::Compare { .. } => commands::compare(&config, out),
        Command::Graph { .. } => commands::graph(&config, out),
        Command::Variability { .. } => commands::variability(&config, out),
        Command::Pipeline { .. } => run_pipeline(&config, out).map(|_| ()),
    }
}

/// Parse `args`, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
