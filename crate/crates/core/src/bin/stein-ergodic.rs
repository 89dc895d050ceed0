use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stein_ergodic::config::{load_config, Mode};
use stein_ergodic::run::{run, RunOptions};

#[derive(Parser)]
#[command(
    name = "stein-ergodic",
    version,
    about = "Diverse ergodic coverage trajectories from scenario files"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Batch Stein optimization of an ensemble of paths.
    Optimize(Common),
    /// Receding-horizon control among moving obstacles.
    Mpc(Common),
    /// Wall time per Stein step over particle count, path length and dimension.
    Bench(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file.
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    threads: Option<usize>,
    /// Write every planned path of every cycle.
    #[arg(long)]
    dump_plans: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match cli.command {
        Command::Optimize(a) => (Mode::Optimize, a),
        Command::Mpc(a) => (Mode::Mpc, a),
        Command::Bench(a) => (Mode::Bench, a),
    };
    if let Some(n) = args.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::FAILURE;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = load_config(&args.config).and_then(|mut cfg| {
        cfg.mode = mode;
        if let Some(dir) = args.out {
            cfg.output.dir = dir;
        }
        let opts = RunOptions {
            seed: args.seed,
            out_dir: None,
            dump_plans: args.dump_plans,
        };
        run(&cfg, &opts).map(|log| (cfg, log))
    });
    match result {
        Ok((cfg, log)) => {
            match mode {
                Mode::Optimize => {
                    if let (Some(first), Some(last)) =
                        (log.iterations.first(), log.iterations.last())
                    {
                        println!(
                            "{} iterations, mean ergodic loss {:.6} -> {:.6}, best particle {}",
                            last.iteration,
                            first.mean_erg_loss,
                            last.mean_erg_loss,
                            log.best.unwrap_or(0)
                        );
                    }
                }
                Mode::Mpc => {
                    if let Some(c) = log.cycles.last() {
                        println!(
                            "{} cycles, executed ergodic loss {:.6}, min clearance {:.4}",
                            log.cycles.len(),
                            c.executed_erg_loss,
                            log.cycles
                                .iter()
                                .map(|c| c.min_clearance)
                                .fold(f64::INFINITY, f64::min)
                        );
                    }
                }
                Mode::Bench => {
                    for s in &log.timing {
                        println!(
                            "{:>13}  N={:<4} T={:<4} v={}  {:.3} ms/step",
                            s.sweep, s.particles, s.steps, s.workspace_dim, s.wall_ms
                        );
                    }
                }
            }
            println!("outputs in {}", cfg.output.dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
