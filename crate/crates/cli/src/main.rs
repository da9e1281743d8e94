mod cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Run and inspect a screenshot-driven computer-control agent.
#[derive(Parser)]
#[command(name = "cradle", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the agent loop described by a profile.
    Run(RunArgs),
    /// Re-apply a trajectory's recorded input to its scenario and check the screens match.
    Replay {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Inspect skill libraries.
    Skills {
        #[command(subcommand)]
        action: SkillsCmd,
    },
    /// Evaluation metrics over runs, trade ledgers or step counts.
    Metrics {
        #[command(subcommand)]
        which: MetricsCmd,
        /// Print JSON instead of aligned text.
        #[arg(long, global = true)]
        json: bool,
    },
    /// Draw numbered marks on screenshots.
    Augment(AugmentArgs),
}

#[derive(Args)]
pub struct RunArgs {
    #[arg(long)]
    pub profile: PathBuf,
    /// Overrides the profile's step cap.
    #[arg(long)]
    pub max_steps: Option<u32>,
    /// Response cache keyed by request digest. Without --record or --strict,
    /// known requests are replayed and new ones are recorded.
    #[arg(long)]
    pub cassette: Option<PathBuf>,
    /// Start the cassette afresh and record every response.
    #[arg(long, requires = "cassette", conflicts_with = "strict")]
    pub record: bool,
    /// Fail on any request the cassette does not hold.
    #[arg(long, requires = "cassette")]
    pub strict: bool,
    /// Where to write the trajectory; defaults to trajectories/<profile name>.jsonl.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SkillsCmd {
    /// Print name and description of every skill.
    List(StoreArgs),
    /// Print one skill's script.
    Show {
        name: String,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Parse and validate a skill file.
    Lint { path: PathBuf },
}

#[derive(Args)]
pub struct StoreArgs {
    /// A saved skill store; the bundled preset is used when absent.
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long, default_value = "games", value_parser = ["games", "software"])]
    pub preset: String,
}

#[derive(Subcommand)]
enum MetricsCmd {
    /// Success rate and step statistics over trajectories of repeated runs.
    Runs { trajectories: Vec<PathBuf> },
    /// Trading metrics from a `buy,sell,valuation` CSV with a `failed=<m>` header.
    Trade { ledger: PathBuf },
    /// Expected steps as a percentage of steps taken.
    Efficiency {
        #[arg(long)]
        expected: f64,
        #[arg(long)]
        actual: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Style {
    Standard,
    Uniform,
}

#[derive(Args)]
pub struct AugmentArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "standard")]
    pub style: Style,
    #[arg(long, default_value_t = 64)]
    pub min_area: u64,
    #[arg(long, default_value_t = 32)]
    pub quant_step: u8,
    /// Drop marks covering copies of this image.
    #[arg(long)]
    pub watermark: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd::run::run(args),
        Command::Replay { trajectory, scenario } => cmd::replay::replay(&trajectory, &scenario),
        Command::Skills { action } => match action {
            SkillsCmd::List(s) => cmd::skills::list(&s),
            SkillsCmd::Show { name, store } => cmd::skills::show(&name, &store),
            SkillsCmd::Lint { path } => cmd::skills::lint(&path),
        },
        Command::Metrics { which, json } => match which {
            MetricsCmd::Runs { trajectories } => cmd::metrics::runs(&trajectories, json),
            MetricsCmd::Trade { ledger } => cmd::metrics::trade(&ledger, json),
            MetricsCmd::Efficiency { expected, actual } => cmd::metrics::efficiency(expected, actual, json),
        },
        Command::Augment(args) => cmd::augment::augment(&args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
