//! Six-state aircraft covering two Gaussian regions around a spherical obstacle.

use std::path::Path;

use stein_ergodic::config::load_config;
use stein_ergodic::costs::min_clearance;
use stein_ergodic::run::run_optimize;
use stein_ergodic::sim::peak_visitation;

fn main() -> stein_ergodic::Result<()> {
    let cfg = load_config(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/aircraft.cfg"))?;
    let sc = cfg.build()?;
    let log = run_optimize(&cfg)?;
    let last = log.iterations.last().expect("at least one record");
    println!(
        "{} iterations, mean loss {:.4} -> {:.4}",
        last.iteration, log.iterations[0].mean_erg_loss, last.mean_erg_loss
    );
    for (i, states) in log.final_paths.iter().enumerate() {
        let w = sc.map.project_path(states.view())?;
        let visits = peak_visitation(w.view(), &sc.measure)?;
        println!(
            "particle {i}: loss {:.4}  time near each region {:.2} / {:.2}  obstacle clearance {:.3}",
            last.ergodic_losses[i],
            visits[0],
            visits[1],
            min_clearance(w.view(), &sc.obstacles)
        );
    }
    Ok(())
}
