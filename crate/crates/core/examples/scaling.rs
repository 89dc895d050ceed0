//! Wall time of one Stein step against particle count and path length.

use std::path::Path;

use stein_ergodic::config::load_config;
use stein_ergodic::run::{log_log_slope, time_stein_step};

fn main() -> stein_ergodic::Result<()> {
    let base = load_config(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/bench.cfg"))?;
    let sweep = |counts: &[usize],
                 set: &dyn Fn(&mut stein_ergodic::config::ScenarioConfig, usize)| {
        counts
            .iter()
            .map(|&c| {
                let mut cfg = base.clone();
                set(&mut cfg, c);
                time_stein_step(&cfg, 7)
            })
            .collect::<stein_ergodic::Result<Vec<f64>>>()
    };
    let ns = [8, 16, 32, 64, 128];
    let by_n = sweep(&ns, &|cfg, n| {
        cfg.particles = n;
        cfg.steps = 100;
    })?;
    let ts = [50, 100, 200, 400];
    let by_t = sweep(&ts, &|cfg, t| {
        cfg.particles = 16;
        cfg.steps = t;
    })?;
    for (n, ms) in ns.iter().zip(&by_n) {
        println!("N = {n:>3}, T = 100: {ms:.3} ms");
    }
    for (t, ms) in ts.iter().zip(&by_t) {
        println!("N =  16, T = {t:>3}: {ms:.3} ms");
    }
    let f = |v: &[usize]| v.iter().map(|x| *x as f64).collect::<Vec<_>>();
    println!(
        "log-log slope: {:.3} in N, {:.3} in T",
        log_log_slope(&f(&ns), &by_n)?,
        log_log_slope(&f(&ts), &by_t)?
    );
    Ok(())
}
