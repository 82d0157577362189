//! The average over conditioned trajectories obeys the deterministic Bloch
//! equations: compare an ensemble mean with the exact affine solution.
//!
//! cargo run --example ensemble_equivalence -- [n_trajectories]

use bloch_feedback::sde::{ensemble, SimConfig};
use bloch_feedback::steady_state::{drift_model, SystemParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5000);
    let p = SystemParams::new(1.0, 0.7, 0.3, -0.6)?;
    let mut cfg = SimConfig::new(p, 6.0, 1);
    cfg.n_trajectories = n;
    cfg.record_every = 500;
    let stats = ensemble(&cfg)?;
    let rep = stats.compare_deterministic(&drift_model(&p)?, &cfg.initial_state, 4.0);
    println!("{:>5} {:>9} {:>9} {:>9} {:>9} {:>8}", "t", "<x>", "x(t)", "<z>", "z(t)", "se_z");
    for j in 0..stats.times.len() {
        let (m, d) = (stats.mean_bloch[j], rep.deterministic[j]);
        println!(
            "{:>5.2} {:>+9.4} {:>+9.4} {:>+9.4} {:>+9.4} {:>8.1e}",
            stats.times[j], m.x, d.x, m.z, d.z, stats.stderr_bloch[j][2]
        );
    }
    println!("max deviation {:.2} standard errors: {}", rep.max_z_score, if rep.pass { "consistent" } else { "inconsistent" });
    Ok(())
}
