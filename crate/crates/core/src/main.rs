use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use planopt::gateway::BackendKind;
use planopt::kb::SplitName;
use planopt::runner::{self, CliError, GlobalOpts};

#[derive(Parser)]
#[command(name = "planopt", version, about = "Optimize and run tool-call retrieval plans")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the backend kind from the config.
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Scripted,
    Http,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic knowledge base with planted queries.
    GenKb {
        #[arg(long)]
        out: PathBuf,
        /// JSON generator parameters.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Run the optimization loop and populate the run directory.
    Optimize {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        queries: PathBuf,
    },
    /// Score a plan on one query split.
    Evaluate {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value = "test")]
        split: SplitName,
        /// Per-query metrics CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank candidates for one query.
    Answer {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
    },
    /// Summarize a run directory.
    Report,
    /// Run the threshold grid.
    Sweep {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        queries: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let opts = GlobalOpts {
        config: cli.config,
        backend: cli.backend.map(|b| match b {
            BackendArg::Scripted => BackendKind::Scripted,
            BackendArg::Http => BackendKind::Http,
        }),
        seed: cli.seed,
        run_dir: cli.run_dir,
        parallelism: cli.parallelism,
    };
    let stdout = &mut std::io::stdout().lock();
    match cli.command {
        Command::GenKb { out, params } => {
            let params = runner::load_params(params.as_deref())?;
            runner::cmd_gen_kb(opts.seed.unwrap_or(1), &params, &out, stdout)
        }
        Command::Optimize { kb, queries } => runner::cmd_optimize(&opts, &kb, &queries, stdout),
        Command::Evaluate { plan, kb, queries, split, out } => {
            runner::cmd_evaluate(&opts, &plan, &kb, &queries, split, out.as_deref(), stdout)
        }
        Command::Answer { plan, kb, query, top_k } => runner::cmd_answer(&opts, &plan, &kb, &query, top_k, stdout),
        Command::Report => runner::cmd_report(&opts, stdout),
        Command::Sweep { kb, queries } => runner::cmd_sweep(&opts, &kb, &queries, stdout),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
