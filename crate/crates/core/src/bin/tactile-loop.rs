use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tactile_loop::check::run_checks;
use tactile_loop::{coupling_score, export_trace, run_session, Error, SessionConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(name = "tactile-loop", version, about = "Closed tactile loop simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Session config document (JSON). Built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set physics.k_hand=80`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a session offline and write its trace.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for the CSV streams and meta.json.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Run the quantitative self-checks; exit 0 only if all pass.
    Check {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run a live session streamed over WebSocket at /ws.
    Serve {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_name = "ADDR:PORT", default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Directory of static UI assets served over HTTP.
        #[arg(long, value_name = "DIR")]
        assets: Option<PathBuf>,
    },
}

fn load(args: &ConfigArgs) -> Result<SessionConfig, Error> {
    let base = match &args.config {
        Some(path) => SessionConfig::load(path)?,
        None => SessionConfig::default(),
    };
    let cfg = base.with_overrides(&args.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn usage_error(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_USAGE)
}

fn runtime_error(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_RUNTIME)
}

fn simulate(cfg: &SessionConfig, out: &Path) -> ExitCode {
    let trace = match run_session(cfg) {
        Ok(t) => t,
        Err(e) => return usage_error(e),
    };
    let written = match export_trace(&trace, out) {
        Ok(p) => p,
        Err(e) => return runtime_error(e),
    };
    for p in &written {
        println!("wrote {}", p.display());
    }
    println!("triggers: {}", trace.trigger_count());
    match coupling_score(&trace) {
        Some(s) => println!("coupling_score: {s:.4}"),
        None => println!("coupling_score: undefined (no trigger)"),
    }
    ExitCode::SUCCESS
}

fn check(cfg: &SessionConfig) -> ExitCode {
    let outcomes = match run_checks(cfg) {
        Ok(o) => o,
        Err(e) => return usage_error(e),
    };
    for o in &outcomes {
        println!("{o}");
    }
    if outcomes.iter().all(|o| o.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_RUNTIME)
    }
}

fn serve(cfg: SessionConfig, bind: SocketAddr, assets: Option<PathBuf>) -> ExitCode {
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => return runtime_error(e),
    };
    match rt.block_on(tactile_loop::live::serve(cfg, bind, assets)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => runtime_error(format!("{bind}: {e}")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let (args, run): (&ConfigArgs, Box<dyn FnOnce(SessionConfig) -> ExitCode>) = match &cli.command {
        Command::Simulate { config, out } => {
            let out = out.clone();
            (config, Box::new(move |cfg| simulate(&cfg, &out)))
        }
        Command::Check { config } => (config, Box::new(|cfg| check(&cfg))),
        Command::Serve { config, bind, assets } => {
            let (bind, assets) = (*bind, assets.clone());
            (config, Box::new(move |cfg| serve(cfg, bind, assets)))
        }
    };
    match load(args) {
        Ok(cfg) => run(cfg),
        Err(e) => usage_error(e),
    }
}
