use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use semidfl::config::RunConfig;
use semidfl::report::{self, Format};
use semidfl::topology::{Role, Topology, PRESETS};
use semidfl::orchestrator;

#[derive(Parser)]
#[command(name = "semidfl", version, about = "Semi-supervised decentralized federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (SEMIDFL_OUT takes precedence).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    /// Maximum worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run and write per-round metrics.
    Run { config: PathBuf },
    /// Execute the sweep grid and write one summary row per setting and method.
    Sweep { config: PathBuf },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// List built-in topologies.
    Presets,
}

fn load(path: &Path, seed: Option<u64>) -> Result<RunConfig, String> {
    let mut cfg = RunConfig::from_file(path).map_err(|e| e.to_string())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> PathBuf {
    std::env::var_os("SEMIDFL_OUT").map(PathBuf::from).unwrap_or_else(|| cli.out.clone())
}

fn execute(cli: &Cli) -> Result<(), String> {
    match &cli.command {
        Command::Validate { config } => {
            let cfg = load(config, cli.seed)?;
            if !cli.quiet {
                println!("{}: ok (method {}, {} rounds)", config.display(), cfg.method, cfg.rounds);
            }
        }
        Command::Presets => {
            for name in PRESETS {
                let t = Topology::preset(name).expect("built-in preset");
                println!(
                    "{name}: {} nodes, {} edges, L={} U={} M={}",
                    t.node_count(),
                    t.edges().len(),
                    t.count_role(Role::Labeled),
                    t.count_role(Role::Unlabeled),
                    t.count_role(Role::Mixed)
                );
            }
        }
        Command::Run { config } => {
            let cfg = load(config, cli.seed)?;
            let out = orchestrator::run(&cfg, cli.jobs).map_err(|e| e.to_string())?;
            if !cli.quiet {
                for w in &out.warnings {
                    eprintln!("warning: {w}");
                }
            }
            let path = report::write_metrics(&out_dir(cli), &out.rounds, cli.format).map_err(|e| e.to_string())?;
            if !cli.quiet {
                let last = out.final_round();
                println!(
                    "{} seed {}: round {} accuracy {:.4} ± {:.4}",
                    out.method, out.seed, last.round, last.mean_acc, last.std_acc
                );
                println!("wrote {}", path.display());
            }
        }
        Command::Sweep { config } => {
            let cfg = load(config, cli.seed)?;
            let matrix = orchestrator::run_matrix(&cfg, cli.jobs).map_err(|e| e.to_string())?;
            let path = report::write_summary(&out_dir(cli), &matrix, cli.format).map_err(|e| e.to_string())?;
            if !cli.quiet {
                for row in &matrix.rows {
                    println!(
                        "alpha={} r={} {}: {:.4} ± {:.4} over {} runs",
                        row.alpha, row.r, row.method, row.mean_acc, row.std_acc, row.runs
                    );
                }
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
