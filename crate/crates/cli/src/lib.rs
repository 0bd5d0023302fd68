//! The `m` operator CLI. Kept as a library so tests can mount the HTTP and
//! WebSocket server in-process.

mod commands;
pub mod exit;
mod logs;
pub mod server;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "m", version, about = "Run, script and inspect the M robot platform")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulator backend.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Scripted stories.
    #[command(subcommand)]
    Story(StoryCommand),
    /// Daily coaching sessions.
    #[command(subcommand)]
    Coach(CoachCommand),
    /// Session logs.
    #[command(subcommand)]
    Log(LogCommand),
    /// Interface registries.
    #[command(subcommand)]
    Registry(RegistryCommand),
}

#[derive(Debug, Subcommand)]
pub enum SimCommand {
    /// Start the platform with the simulated robot and serve /health and /twin.
    Run(SimRun),
}

#[derive(Debug, Args)]
pub struct SimRun {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Run headless on a virtual clock and exit when the scenario is done.
    #[arg(long)]
    pub virtual_time: bool,
    /// Stop after this many seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Overrides the configured port; 0 picks a free one.
    #[arg(long)]
    pub port: Option<u16>,
}

#[derive(Debug, Args)]
pub struct Hosting {
    /// Platform config; built-in defaults when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub virtual_time: bool,
    /// Accepted for clarity; these commands always host their own platform.
    #[arg(long)]
    pub standalone: bool,
}

#[derive(Debug, Subcommand)]
pub enum StoryCommand {
    /// Narrate a story script and print its state trace.
    Play {
        script: PathBuf,
        #[command(flatten)]
        hosting: Hosting,
    },
}

#[derive(Debug, Subcommand)]
pub enum CoachCommand {
    /// Hold one day's session against scripted user turns.
    Run {
        /// `mock` or `http:<url>`.
        #[arg(long, default_value = "mock")]
        generator: String,
        #[arg(long)]
        day: u8,
        /// JSON array of user turns; a bundled script when absent.
        #[arg(long)]
        turns: Option<PathBuf>,
        #[command(flatten)]
        hosting: Hosting,
    },
}

#[derive(Debug, Subcommand)]
pub enum LogCommand {
    /// Republish a recorded session.
    Replay {
        session_id: String,
        /// Rate multiplier, or `max` for no pacing.
        #[arg(long, default_value = "1")]
        speed: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare two sessions, or one session with its own replay.
    Verify {
        session_id: String,
        other: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum RegistryCommand {
    /// Print a backend's registry as canonical JSON.
    Export {
        #[arg(long, default_value = "sim")]
        mode: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two registries, each a backend name or an exported file.
    Diff { a: String, b: String },
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let r = match cli.command {
        Command::Sim(SimCommand::Run(a)) => commands::sim_run(&a),
        Command::Story(StoryCommand::Play { script, hosting }) => commands::story_play(&script, &hosting),
        Command::Coach(CoachCommand::Run {
            generator,
            day,
            turns,
            hosting,
        }) => commands::coach_run(&generator, day, turns.as_deref(), &hosting),
        Command::Log(LogCommand::Replay {
            session_id,
            speed,
            config,
        }) => logs::replay(&session_id, &speed, config.as_deref()),
        Command::Log(LogCommand::Verify {
            session_id,
            other,
            config,
        }) => logs::verify(&session_id, other.as_deref(), config.as_deref()),
        Command::Registry(RegistryCommand::Export { mode, out }) => logs::registry_export(&mode, out.as_deref()),
        Command::Registry(RegistryCommand::Diff { a, b }) => logs::registry_diff(&a, &b),
    };
    match r {
        Ok(code) => code,
        Err(e) => {
            eprintln!("m: {e:#}");
            exit::code_of(&e)
        }
    }
}
