//! `taxoprompt`: induce, score, evaluate and analyze taxonomies from the
//! command line.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

mod commands;
mod manifest;
mod model;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use settings::Settings;

/// A mistake in how the tool was invoked, as opposed to bad input data.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Parser)]
#[command(name = "taxoprompt", version, about = "Zero-shot taxonomy induction with language models")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Predict hypernyms for every term of a terminology.
    Induce(InduceArgs),
    /// Score sentences (one per line) with a language model.
    Score(ScoreArgs),
    /// Edge-level precision, recall and F-score against a gold taxonomy.
    Evaluate(EvaluateArgs),
    /// Single-token and prompt-frequency analyses.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Induce and evaluate over a grid of templates and k.
    Sweep(SweepArgs),
}

#[derive(Args)]
pub struct InduceArgs {
    /// Config file (TOML, or a run manifest); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
    /// Predicted taxonomy, `hyponym<TAB>hypernym` per line.
    #[arg(long)]
    pub out: PathBuf,
    /// Run manifest [default: OUT.manifest.json].
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: String,
    /// Sentences, one per line; `-` reads stdin.
    #[arg(long, default_value = "-")]
    pub input: PathBuf,
    /// `log_score<TAB>sentence` per line; `-` writes stdout.
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long, requires = "gold")]
    pub pred: Option<PathBuf>,
    #[arg(long, requires = "pred")]
    pub gold: Option<PathBuf>,
    /// Metrics JSON of earlier `evaluate --json` runs to macro-average with.
    #[arg(long, num_args = 1..)]
    pub avg: Vec<PathBuf>,
    /// Also write metrics as JSON; `-` prints JSON instead of the table.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Report the F-score of the averaged P and R as well.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Subcommand)]
pub enum AnalyzeCommand {
    /// Share of terms whose gold hypernyms are single tokens, and the F-score
    /// gain when evaluating on those terms only.
    SingleToken(SingleTokenArgs),
    /// Case-insensitive occurrence counts of prompt patterns in a corpus.
    PromptFreq(PromptFreqArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Json,
    Tsv,
}

#[derive(Args)]
pub struct SingleTokenArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
    #[arg(long)]
    pub gold: PathBuf,
    /// Only measure the retained share; needs just the model's tokenizer.
    #[arg(long)]
    pub filter_only: bool,
    /// Write the filtered gold taxonomy here.
    #[arg(long)]
    pub filtered_gold: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub output_format: OutputFormat,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PromptFreqArgs {
    /// Plain-text corpus files, or directories searched recursively.
    #[arg(long, required = true, num_args = 1..)]
    pub corpus: Vec<PathBuf>,
    /// Patterns, one per line; template patterns count their connective.
    /// Defaults to the connectives of the built-in templates.
    #[arg(long)]
    pub patterns: Option<PathBuf>,
    /// `pattern<TAB>F` rows; each pattern's F-scores are averaged into the report.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "tsv")]
    pub output_format: OutputFormat,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
    #[arg(long)]
    pub gold: PathBuf,
    /// Template names or patterns to try.
    #[arg(long, value_delimiter = ',', default_value = "gen,spec,type")]
    pub templates: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
    pub ks: Vec<usize>,
    /// Write each cell's predictions and manifest into this directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Also write the rows as JSON; `-` prints JSON instead of the table.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Induce(args) => commands::induce::run(&args),
        Command::Score(args) => commands::score::run(&args),
        Command::Evaluate(args) => commands::evaluate::run(&args),
        Command::Analyze(AnalyzeCommand::SingleToken(args)) => commands::analyze::single_token(&args),
        Command::Analyze(AnalyzeCommand::PromptFreq(args)) => commands::analyze::prompt_freq(&args),
        Command::Sweep(args) => commands::sweep::run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
