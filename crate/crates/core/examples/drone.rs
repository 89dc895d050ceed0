//! Four drone paths in a 3 m x 3 m x 1 m box under a speed limit.

use std::path::Path;

use stein_ergodic::config::load_config;
use stein_ergodic::costs::min_clearance;
use stein_ergodic::run::run_optimize;

fn main() -> stein_ergodic::Result<()> {
    let cfg = load_config(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/drone.cfg"))?;
    let sc = cfg.build()?;
    let log = run_optimize(&cfg)?;
    let last = log.iterations.last().expect("at least one record");
    println!(
        "{} iterations, mean loss {:.4} -> {:.4}",
        last.iteration, log.iterations[0].mean_erg_loss, last.mean_erg_loss
    );
    for (i, path) in log.final_paths.iter().enumerate() {
        let top_speed = (1..path.nrows())
            .map(|t| {
                (&path.row(t) - &path.row(t - 1))
                    .mapv(|d| d * d)
                    .sum()
                    .sqrt()
                    / cfg.dt
            })
            .fold(0.0, f64::max);
        let w = sc.map.project_path(path.view())?;
        println!(
            "particle {i}: loss {:.4}  top speed {top_speed:.2} m/s  clearance {:.3} (unit box)",
            last.ergodic_losses[i],
            min_clearance(w.view(), &sc.obstacles)
        );
    }
    Ok(())
}
