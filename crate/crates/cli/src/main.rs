use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ruleflex::commands::{self, Format, GenerateArgs};
use ruleflex::{review, run_server, serve, CliError};
use ruleflex_core::workspace::{EntryKind, Workspace};

#[derive(Parser)]
#[command(name = "ruleflex", version, about = "Generate, compare, review and deploy rule sets")]
struct Cli {
    /// Workspace directory (created if missing).
    #[arg(long, short = 'w', global = true, env = "RULEFLEX_WORKSPACE", default_value = "ruleflex-workspace")]
    workspace: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prompt a model for rule sets and store the runs.
    Generate {
        #[arg(long)]
        domain: Option<String>,
        #[arg(long)]
        objective: Option<String>,
        /// instruction, imitation, cot or few-shot
        #[arg(long, default_value = "few-shot")]
        strategy: String,
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        max_tokens: Option<u32>,
        #[arg(long)]
        endpoint: Option<String>,
        /// Serve recorded responses instead of calling the provider.
        #[arg(long)]
        replay: bool,
        /// Replay fixture directory (default: <workspace>/fixtures).
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
    /// Parse a DSL file, a code/response file, or a stored run into rule sets.
    Parse { target: String },
    /// Rule-set counts and condition means per run.
    Metrics {
        #[arg(required = true)]
        ids: Vec<String>,
    },
    /// Classified condition-level diff of rule sets; ids may be repeated and may name runs.
    Compare {
        #[arg(long, required = true)]
        candidate: Vec<String>,
        #[arg(long, required = true)]
        reference: Vec<String>,
        #[arg(long, value_enum, default_value_t = FormatArg::Table)]
        format: FormatArg,
    },
    /// Spread of the metrics over repeated runs.
    Consistency {
        #[arg(required = true)]
        ids: Vec<String>,
    },
    /// Evaluate one record (a JSON file) against a rule set.
    Eval {
        #[arg(long)]
        ruleset: String,
        #[arg(long)]
        record: PathBuf,
    },
    /// Write descriptor.json and tests.json for a reviewed rule set.
    GenApi {
        #[arg(long)]
        ruleset: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Serve POST /evaluate for a reviewed rule set.
    Serve {
        #[arg(long)]
        ruleset: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
    /// Serve the review API (and the UI files, if given).
    Review {
        #[arg(long, default_value_t = 8081)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        /// Answer POST /api/generate from replay fixtures in this directory.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Print a stored entry.
    Show { id: String },
    /// List stored entries of one kind.
    List {
        #[arg(value_enum)]
        kind: KindArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Rulesets,
    Runs,
    Comparisons,
    Reviews,
}

async fn run(cli: Cli) -> Result<String, CliError> {
    let ws = Workspace::open(&cli.workspace)?;
    match cli.command {
        Command::Generate { domain, objective, strategy, model, runs, temperature, max_tokens, endpoint, replay, fixtures } => {
            let args = GenerateArgs { domain, objective, strategy, model, runs, temperature, max_tokens, endpoint, replay, fixtures };
            let runs = commands::generate(&ws, &args).await?;
            let summaries: Vec<_> = runs.iter().map(|r| commands::run_summary(&r.id, &r.run)).collect();
            let out = commands::to_json(&summaries)?;
            if runs.iter().all(|r| r.run.error.is_some()) {
                return Err(CliError::Domain(format!("every run failed\n{out}")));
            }
            Ok(out)
        }
        Command::Parse { target } => commands::parse(&ws, &target),
        Command::Metrics { ids } => commands::metrics(&ws, &ids),
        Command::Compare { candidate, reference, format } => {
            let format = match format {
                FormatArg::Table => Format::Table,
                FormatArg::Json => Format::Json,
            };
            commands::compare(&ws, &candidate, &reference, format)
        }
        Command::Consistency { ids } => commands::consistency_report(&ws, &ids),
        Command::Eval { ruleset, record } => commands::eval(&ws, &ruleset, &record),
        Command::GenApi { ruleset, out, epsilon } => commands::gen_api(&ws, &ruleset, &out, epsilon),
        Command::Serve { ruleset, port, host } => {
            let rs = ws.load_ruleset(&ruleset)?;
            let app = serve::router(rs, &ws.registry()?).map_err(|e| CliError::Domain(e.to_string()))?;
            run_server(app, SocketAddr::new(host, port)).await?;
            Ok(String::new())
        }
        Command::Review { port, host, ui_dir, replay } => {
            let app = review::router(review::ReviewState::new(ws, replay, ui_dir));
            run_server(app, SocketAddr::new(host, port)).await?;
            Ok(String::new())
        }
        Command::Show { id } => commands::show(&ws, &id),
        Command::List { kind } => {
            let kind = match kind {
                KindArg::Rulesets => EntryKind::Ruleset,
                KindArg::Runs => EntryKind::Run,
                KindArg::Comparisons => EntryKind::Comparison,
                KindArg::Reviews => EntryKind::Review,
            };
            commands::list(&ws, kind)
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli).await {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
