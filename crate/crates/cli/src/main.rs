use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gaussmetric_cli::run::error_json;
use gaussmetric_cli::{run, Failure, RunConfig, Task};

#[derive(Parser)]
#[command(name = "gaussmetric", version, about = "QFI and channel metrics for dissipative Gaussian channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// QFI matrix and SLDs for an explicit probe.
    Qfi(Flags),
    /// SLDs and the output moments for an explicit probe.
    Sld(Flags),
    /// Channel metric from sampled probes.
    Metric(Flags),
    /// Compare the closed forms with the Fock-space oracle.
    OracleCheck(Flags),
}

#[derive(Args)]
struct Flags {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sample cache for `metric`.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "GAUSSMETRIC_THREADS")]
    threads: Option<usize>,
}

fn load(flags: &Flags) -> Result<RunConfig, String> {
    let mut cfg = match &flags.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            RunConfig::parse(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    if flags.out.is_some() {
        cfg.out = flags.out.clone();
    }
    if flags.cache.is_some() {
        cfg.cache = flags.cache.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, flags) = match cli.command {
        Command::Qfi(f) => (Task::Qfi, f),
        Command::Sld(f) => (Task::Sld, f),
        Command::Metric(f) => (Task::Metric, f),
        Command::OracleCheck(f) => (Task::OracleCheck, f),
    };
    if let Some(n) = flags.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let cfg = match load(&flags) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(task, &cfg) {
        Ok(outcome) => {
            let mut text = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
            text.push('\n');
            let written = match &cfg.out {
                Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
                None => {
                    print!("{text}");
                    Ok(())
                }
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(4)
            }
        }
        Err(f) => {
            let code = f.exit_code();
            match f {
                Failure::Config(m) => eprintln!("error: {m}"),
                Failure::Numeric { error, partial } => {
                    let diag = serde_json::json!({ "error": error_json(&error), "partial": partial });
                    eprintln!("{}", serde_json::to_string_pretty(&diag).expect("serializes"));
                }
            }
            ExitCode::from(code)
        }
    }
}
