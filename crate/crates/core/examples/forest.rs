//! Eight coverage paths through a 100 m square with five trees.

use std::path::Path;

use stein_ergodic::config::load_config;
use stein_ergodic::costs::min_clearance;
use stein_ergodic::run::run_optimize;

fn main() -> stein_ergodic::Result<()> {
    let cfg = load_config(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/forest.cfg"))?;
    let sc = cfg.build()?;
    let log = run_optimize(&cfg)?;
    let last = log.iterations.last().expect("at least one record");
    println!(
        "{} iterations, mean loss {:.4} -> {:.4}",
        last.iteration, log.iterations[0].mean_erg_loss, last.mean_erg_loss
    );
    for (i, path) in log.final_paths.iter().enumerate() {
        let w = sc.map.project_path(path.view())?;
        println!(
            "particle {i}: ergodic loss {:.4}  tree clearance {:.2} m  ends at ({:.1}, {:.1}) m",
            last.ergodic_losses[i],
            min_clearance(w.view(), &sc.obstacles) * 100.0,
            path[[path.nrows() - 1, 0]],
            path[[path.nrows() - 1, 1]]
        );
    }
    Ok(())
}
