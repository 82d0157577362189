//! Gains chosen by maximizing purity versus minimizing the conditioned noise.
//!
//! cargo run --example optimizer_agreement

use bloch_feedback::design::{optimizer_agreement, theta_grid, SearchConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = theta_grid(36);
    for eta in [0.4, 0.8] {
        let rep = optimizer_agreement(eta, 1.0, &grid, &SearchConfig::default())?;
        println!("eta {eta}: max |lambda_noise - lambda_purity| = {:.3e} at theta {:.4}", rep.max_abs_delta, rep.theta_at_max);
        for r in rep.rows.iter().step_by(3) {
            println!("  theta {:+.4}  purity {:+.6}  noise {:+.6}", r.theta, r.lambda_purity, r.lambda_noise);
        }
    }
    Ok(())
}
