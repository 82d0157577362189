//! Single conditioned trajectories: locking onto the target at perfect
//! detection and wandering about the stationary state at eta = 0.8.
//!
//! cargo run --example trajectory -- [seed]

use std::f64::consts::PI;

use bloch_feedback::design::{alpha_eta1, lambda_eta1, optimize_purity, SearchConfig};
use bloch_feedback::sde::{simulate, SimConfig};
use bloch_feedback::steady_state::SystemParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let theta = PI / 6.0;

    let p = SystemParams::new(1.0, 1.0, alpha_eta1(theta, 1.0), lambda_eta1(theta, 1.0))?;
    let mut cfg = SimConfig::new(p, 10.0, seed);
    cfg.record_every = 500;
    let tr = simulate(&cfg)?;
    println!("eta = 1, target ({:.4}, {:.4})", theta.sin(), theta.cos());
    for (t, b) in tr.times.iter().zip(&tr.states) {
        println!("  t {t:>5.1}  x {:+.4}  z {:+.4}  r^2 {:.4}", b.x, b.z, b.norm_squared());
    }
    println!("  max |r^2 - 1| along the path: {:.3e}", tr.max_purity_deviation());

    let d = optimize_purity(theta, 1.0, 0.8, &SearchConfig::default())?;
    let mut cfg = SimConfig::new(d.params(), 120.0, seed);
    cfg.record_every = 100;
    let tr = simulate(&cfg)?;
    let avg = tr.time_average(20.0, 120.0, 10);
    println!("eta = 0.8, stationary ({:.4}, {:.4}), r^2 {:.4}", d.steady_state.x, d.steady_state.z, d.r_squared);
    println!(
        "  time average over [20, 120]: ({:.4} ± {:.4}, {:.4} ± {:.4}), r^2 variance {:.3e}",
        avg.mean.x, avg.stderr[0], avg.mean.z, avg.stderr[2], avg.r_squared_variance
    );
    Ok(())
}
