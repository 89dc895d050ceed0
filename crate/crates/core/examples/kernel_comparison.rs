//! Final path diversity under the rbf, time-sliced and constant-one kernels.

use std::path::Path;

use stein_ergodic::config::load_config;
use stein_ergodic::run::run_optimize;

fn main() -> stein_ergodic::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    for (label, file) in [
        ("rbf", "convergence.cfg"),
        ("markov", "kernels.cfg"),
        ("constant-one", "collapse.cfg"),
    ] {
        let cfg = load_config(&dir.join(file))?;
        let log = run_optimize(&cfg)?;
        let first = &log.iterations[0];
        let last = log.iterations.last().expect("at least one record");
        println!(
            "{label:>12}: loss {:.4} -> {:.4}  det(K) {:.4} -> {:.4}  bandwidth {:.3e}",
            first.mean_erg_loss,
            last.mean_erg_loss,
            first.det_k.unwrap_or(f64::NAN),
            last.det_k.unwrap_or(f64::NAN),
            last.bandwidth
        );
    }
    Ok(())
}
