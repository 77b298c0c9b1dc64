use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use eakroute::config::ScenarioConfig;
use eakroute::scenario::{run_scenario, Command, Overrides, ScenarioError};

#[derive(Parser)]
#[command(name = "eakroute", version, about = "Key-aware multipath routing simulator for sensor networks")]
struct Cli {
    /// Scenario config (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format of the report printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the network graph only.
    Generate,
    /// Run the EAK fixpoint.
    Eka,
    /// Establish every forward and backward group key.
    Keys,
    /// Construct routes and simulate delivery.
    Routes {
        /// Single destination node.
        #[arg(long)]
        dest: Option<u32>,
    },
    /// Monte Carlo check of the transmission-count formulas.
    Mc {
        /// Trials per grid cell.
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Derivation closure over the configured compromised sets.
    Adversary,
    /// Everything above.
    All {
        /// Single destination node.
        #[arg(long)]
        dest: Option<u32>,
        /// Trials per Monte Carlo grid cell.
        #[arg(long)]
        trials: Option<u64>,
    },
}

fn run(cli: Cli) -> Result<(), ScenarioError> {
    let mut cfg = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    let mut ov = Overrides {
        seed: cli.seed,
        output_dir: cli.out.clone(),
        ..Overrides::default()
    };
    let cmd = match cli.command {
        Cmd::Generate => Command::Generate,
        Cmd::Eka => Command::Eka,
        Cmd::Keys => Command::Keys,
        Cmd::Routes { dest } => {
            ov.destination = dest;
            Command::Routes
        }
        Cmd::Mc { trials } => {
            ov.trials = trials;
            Command::Mc
        }
        Cmd::Adversary => Command::Adversary,
        Cmd::All { dest, trials } => {
            ov.destination = dest;
            ov.trials = trials;
            Command::All
        }
    };
    ov.apply(&mut cfg);
    let bundle = run_scenario(&cfg, cmd)?;
    bundle.write_to(&cfg.output_dir)?;
    let text = match cli.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&bundle.summary).expect("summary serialises");
            s.push('\n');
            s
        }
        Format::Csv => {
            let name = if cmd == Command::Mc { "mc.csv" } else { "metrics.csv" };
            match bundle.files.get(name) {
                Some(csv) => csv.clone(),
                None => format!("metric,value\ncommand,{}\n", cmd.name()),
            }
        }
    };
    // A closed pipe (e.g. `| head`) is not an error worth reporting.
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
