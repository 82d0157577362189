//! Feedback designed for an equatorial state: x performs a driftless walk and
//! every trajectory ends at x = +1 or x = -1, with odds set by x(0).
//!
//! cargo run --example equator_bimodality -- [n_trajectories]

use bloch_feedback::sde::{equator_diagnostic, SimConfig};
use bloch_feedback::steady_state::SystemParams;
use bloch_feedback::BlochVector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(4000);
    let p = SystemParams::new(1.0, 1.0, 0.0, -0.5)?;
    for x0 in [0.0, 0.5, 0.9] {
        let mut cfg = SimConfig::new(p, 20.0, 5);
        cfg.n_trajectories = n;
        cfg.record_every = 2000;
        cfg.initial_state = BlochVector::new(x0, 0.0, -(1.0 - x0 * x0).sqrt());
        let rep = equator_diagnostic(&cfg, 4.0)?;
        println!(
            "x0 {x0:.1}: at +1 {:.4}, at -1 {:.4} (expected {:.4}), unsettled {:.4}",
            rep.fraction_plus,
            rep.fraction_minus,
            (1.0 - x0) / 2.0,
            rep.fraction_unsettled
        );
        for j in 0..rep.times.len() {
            println!("    t {:>4.0}  E[x] {:+.4}  E[x^2] {:.4}", rep.times[j], rep.mean_x[j], rep.mean_x_squared[j]);
        }
    }
    Ok(())
}
