use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use storyq::{run, Command, Options, TrainTarget};

/// Visual storytelling and question generation pipeline.
#[derive(Debug, Parser)]
#[command(name = "storyq", version)]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", env = "STORYQ_OUT_DIR")]
    out: Option<PathBuf>,
    /// Process only the first N sequences.
    #[arg(long, value_name = "N")]
    limit: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Train one model and write its checkpoint.
    Train {
        #[command(subcommand)]
        target: Target,
    },
    /// Write a story and a question for every input sequence.
    Generate {
        /// Photo-sequence corpus; defaults to the configured input.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Rank table, question types, significance and repetition counts.
    Evaluate {
        /// Question files (repeatable); defaults to the configured list.
        #[arg(long = "questions")]
        questions: Vec<PathBuf>,
        #[arg(long)]
        rankings: Option<PathBuf>,
    },
    /// Print the tables of the last evaluation.
    Report,
}

#[derive(Debug, Subcommand)]
enum Target {
    Terms,
    Lm,
    Story,
    Question,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let opts = Options {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        limit: cli.limit,
    };
    let cmd = match cli.command {
        Cmd::Train { target } => Command::Train(match target {
            Target::Terms => TrainTarget::Terms,
            Target::Lm => TrainTarget::Lm,
            Target::Story => TrainTarget::Story,
            Target::Question => TrainTarget::Question,
        }),
        Cmd::Generate { input } => Command::Generate { input },
        Cmd::Evaluate { questions, rankings } => Command::Evaluate { questions, rankings },
        Cmd::Report => Command::Report,
    };
    match run(&opts, &cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
