use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use edyn_cli::acceptance;
use edyn_cli::config::Engine;
use edyn_cli::{exit, resolve_out_dir, run_scenario, scenarios, CliError, ScenarioConfig};

/// Entropic dynamics scenario runner.
#[derive(Parser)]
#[command(name = "edyn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config (a path, or the name of a bundled scenario).
    Run {
        config: String,
        /// Subset of engines to run, overriding the config.
        #[arg(long, value_delimiter = ',', value_parser = parse_engine)]
        engines: Option<Vec<Engine>>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory [default: $EDYN_OUT_DIR, then output.dir, then edyn-out].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the bundled scenarios.
    ListScenarios,
    /// Run the acceptance suite and print the pass/fail table.
    Verify {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_engine(s: &str) -> Result<Engine, String> {
    Engine::parse(s).ok_or_else(|| format!("unknown engine `{s}` (expected ensemble, fields or wave)"))
}

fn load(config: &str) -> Result<ScenarioConfig, CliError> {
    let path = PathBuf::from(config);
    if !path.exists() {
        if let Some(cfg) = scenarios::bundled(config) {
            return cfg;
        }
    }
    ScenarioConfig::load(&path)
}

fn run(config: &str, engines: Option<Vec<Engine>>, seed: Option<u64>, out: Option<PathBuf>) -> Result<u8, CliError> {
    let mut cfg = load(config)?;
    if let Some(e) = engines {
        cfg.engines = e;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    // overrides are validated like the file itself
    cfg.setup()?;
    let output = run_scenario(&cfg)?;
    let dir = resolve_out_dir(out, cfg.output.dir.as_deref());
    for path in output.write(&dir)? {
        eprintln!("wrote {}", path.display());
    }
    for c in &output.report.checks {
        let rel = match c.relation {
            edyn_cli::report::Relation::AtMost => "<=",
            edyn_cli::report::Relation::AtLeast => ">=",
        };
        println!(
            "{:<26} {:>12.4e} {rel} {:<10.1e} {}",
            c.name,
            c.value,
            c.limit,
            if c.passed { "pass" } else { "FAIL" }
        );
    }
    Ok(if output.report.passed { exit::PASS } else { exit::THRESHOLD })
}

fn verify(out: Option<PathBuf>) -> Result<u8, CliError> {
    let mut outcomes = Vec::new();
    for (id, _) in acceptance::CRITERIA {
        let o = acceptance::criterion(id);
        println!("{}", o.line());
        outcomes.push(o);
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("{passed}/{} criteria pass", outcomes.len());
    let dir = resolve_out_dir(out, None);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join("verify.json");
    let mut json = serde_json::to_string_pretty(&outcomes).expect("outcomes serialise");
    json.push('\n');
    std::fs::write(&path, json).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    eprintln!("wrote {}", path.display());
    Ok(if passed == outcomes.len() { exit::PASS } else { exit::THRESHOLD })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, engines, seed, out } => run(&config, engines, seed, out),
        Command::ListScenarios => {
            for b in scenarios::BUNDLED {
                let description = ScenarioConfig::from_json(b.json).map(|c| c.description).unwrap_or_default();
                println!("{:<18} {description}", b.name);
            }
            Ok(exit::PASS)
        }
        Command::Verify { out } => verify(out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("edyn: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
