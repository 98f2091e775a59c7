use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adaptive_langevin::acceptance;
use adaptive_langevin::config::{ExperimentConfig, PotentialSpec};
use adaptive_langevin::potential::PRESETS;
use adaptive_langevin::report;

/// Spectral and Monte Carlo experiments for the adaptive Langevin generator.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    /// Run the acceptance suite and print one line per criterion.
    #[arg(long, global = true)]
    check: bool,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Potential preset (overrides `potential` in the config).
    #[arg(long, global = true)]
    preset: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the pipelines described by a config file (defaults if omitted).
    Run { config: Option<PathBuf> },
}

fn load(cli: &Cli) -> Result<ExperimentConfig, String> {
    let mut cfg = match &cli.command {
        Some(Command::Run { config: Some(path) }) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            ExperimentConfig::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        _ => ExperimentConfig::default(),
    };
    if let Some(p) = &cli.preset {
        if !PRESETS.contains(&p.as_str()) {
            return Err(format!("field `potential`: unknown preset `{p}` (known: {})", PRESETS.join(", ")));
        }
        cfg.potential = PotentialSpec::Preset(p.clone());
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.command.is_none() {
        if !cli.check {
            eprintln!("nothing to do: use `run [CONFIG]` or `--check`");
            return ExitCode::from(2);
        }
        let results = acceptance::run_all();
        for r in &results {
            println!("{}", r.line());
        }
        if let Some(dir) = &cli.out {
            let written = report::ensure_writable(dir).map_err(|e| e.to_string()).and_then(|_| {
                let body = serde_json::to_string_pretty(&results).map_err(|e| e.to_string())?;
                std::fs::write(dir.join("acceptance.json"), body + "\n").map_err(|e| e.to_string())
            });
            if let Err(e) = written {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        }
        return if results.iter().all(|r| r.passed) { ExitCode::SUCCESS } else { ExitCode::FAILURE };
    }
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    match report::run(&cfg, cli.check) {
        Ok(summary) => {
            for p in &summary.pipelines {
                let state = if p.ok { "ok" } else { "FAILED" };
                match &p.error {
                    Some(e) => println!("{:<10} {state}: {e}", p.pipeline.name()),
                    None => println!(
                        "{:<10} {state} ({} checks, {} failed)",
                        p.pipeline.name(),
                        p.checks.len(),
                        p.checks.iter().filter(|c| !c.passed).count()
                    ),
                }
            }
            for r in &summary.spectra {
                println!("h={:<8} lambda_num={:.6e} lambda_ek={:.6e} ratio={:.4}", r.h, r.lambda_num, r.lambda_ek, r.ratio);
            }
            for r in &summary.acceptance {
                println!("{}", r.line());
            }
            println!("summary: {}", cfg.out.join("summary.json").display());
            if summary.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
