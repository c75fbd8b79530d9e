use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use qshield_cli::config::ConfigFile;
use qshield_cli::{run, Command, CommandFlags};

#[derive(Debug, Parser)]
#[command(name = "qshield", version, about = "Experiments on randomized-encoding defenses for quantum classifiers")]
struct Cli {
    /// TOML file with one section per subcommand; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root under which run directories are created.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Replace an existing run directory.
    #[arg(long, global = true)]
    force: bool,
    /// Exit with status 4 when any acceptance check fails.
    #[arg(long, global = true)]
    check: bool,
    #[command(subcommand)]
    command: CommandFlags,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file = match cli.config.as_deref().map(ConfigFile::load).transpose() {
        Ok(f) => f,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let report = Command::resolve(file.as_ref(), &cli.command).and_then(|cmd| run(&cmd, &cli.out, cli.force));
    match report {
        Ok(r) => {
            println!("{}", r.dir.display());
            for c in &r.outcome.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if cli.check && !r.outcome.all_passed() {
                return ExitCode::from(4);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
