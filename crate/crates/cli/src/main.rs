//! `melody-rd`: corpus preparation, training and the experiment suite.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage, configuration or input error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use melody_rd::adaptor::ModelKind;

#[derive(Parser, Debug)]
#[command(name = "melody-rd", version, about = "Resource-bounded program induction for melodies")]
pub struct Cli {
    /// Root seed; every internal seed is derived from it. Overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = one per core). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Strict TOML configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CorpusArgs {
    /// Corpus file (line or JSON format). Without it a synthetic corpus is used.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Held-out corpus. Without it the last `corpus.n_eval` melodies are held out.
    #[arg(long)]
    pub eval: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Preprocess a raw corpus, or synthesize one, and write it out.
    Prepare {
        #[arg(short = 'i', long = "input", conflicts_with_all = ["synth", "planted"])]
        input: Option<PathBuf>,
        /// Synthetic corpus spec, e.g. `n=500 mean-len=50 motifs=20`.
        #[arg(long, num_args = 1.., conflicts_with = "planted")]
        synth: Option<Vec<String>>,
        /// Planted two-motif corpus spec, e.g. `n=20 len=30 first=4 second=5 prefix=t`.
        #[arg(long, num_args = 1..)]
        planted: Option<Vec<String>>,
        /// Output path; `.json` selects the structured format.
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
        #[arg(long, default_value_t = melody_rd::melody::MIN_MELODY_LEN)]
        min_len: usize,
    },
    /// Rate-distortion sweep over description-length and search budgets.
    RdSweep {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, alias = "model", value_delimiter = ',')]
        models: Option<Vec<ModelKind>>,
        #[arg(long, value_delimiter = ',')]
        r_l: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        r_s: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        n_train: Option<Vec<usize>>,
        #[arg(long)]
        n_seeds: Option<usize>,
    },
    /// Train a library and save it.
    Train {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        proposals: Option<usize>,
    },
    /// One-shot generalization with a saved library.
    Generalize {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        library: PathBuf,
        #[arg(long, value_delimiter = ',')]
        r_s: Option<Vec<usize>>,
        #[arg(long)]
        n_seeds: Option<usize>,
    },
    /// Fraction of subprograms shared across training melodies.
    Uniqueness {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, alias = "model", value_delimiter = ',')]
        models: Option<Vec<ModelKind>>,
        #[arg(long, value_delimiter = ',')]
        n_train: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        r_s: Option<Vec<usize>>,
        #[arg(long)]
        n_seeds: Option<usize>,
    },
    /// Matched-run curriculum analysis and random-library baseline, or a
    /// given ordering against random ones.
    Curriculum {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Ordering CSV with a `melody_id` column (as written by `synergy`).
        #[arg(long)]
        ordering: Option<PathBuf>,
        #[arg(long)]
        melodies: Option<usize>,
        #[arg(long)]
        n_curricula: Option<usize>,
        #[arg(long)]
        n_random: Option<usize>,
        #[arg(long)]
        baseline_trials: Option<usize>,
        #[arg(long)]
        train_proposals: Option<usize>,
        #[arg(long)]
        eval_r_l: Option<f64>,
        #[arg(long)]
        eval_r_s: Option<usize>,
    },
    /// Greedy synergy-maximizing curriculum.
    Synergy {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        melodies: Option<usize>,
        #[arg(long)]
        n_pairs: Option<usize>,
        #[arg(long)]
        train_proposals: Option<usize>,
    },
    /// Encode one melody under a budget and decode it.
    DecodeDemo {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        melody: Option<String>,
        /// Library to encode with (adaptor model); the plain grammar otherwise.
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long)]
        r_l: Option<f64>,
        #[arg(long)]
        r_s: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(commands::Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
