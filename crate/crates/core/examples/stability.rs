//! Closed-loop eigenvalues along the perfect-detection designs and at one
//! imperfect-detection design.
//!
//! cargo run --example stability

use std::f64::consts::PI;

use bloch_feedback::design::{alpha_eta1, lambda_eta1, optimize_purity, SearchConfig};
use bloch_feedback::steady_state::{stability_eigenvalues, SystemParams};

fn main() {
    println!("eta = 1: eigenvalues -gamma/2, -gamma/2, -gamma cos^2(theta)");
    for k in 0..=12 {
        let theta = -PI + k as f64 * PI / 6.0;
        let p = SystemParams::new(1.0, 1.0, alpha_eta1(theta, 1.0), lambda_eta1(theta, 1.0)).unwrap();
        let rep = stability_eigenvalues(&p).unwrap();
        let eig: Vec<String> = rep.eigenvalues.iter().map(|e| format!("{:+.4}{:+.4}i", e.re, e.im)).collect();
        println!("  theta {theta:+.4}  {}  {}", eig.join("  "), rep.classification);
    }

    let d = optimize_purity(PI / 6.0, 1.0, 0.8, &SearchConfig::default()).unwrap();
    let rep = stability_eigenvalues(&d.params()).unwrap();
    println!(
        "eta = 0.8, theta = pi/6: lambda {:.4}, alpha {:.4}, slowest rate {:.4}, {}",
        d.lambda_opt,
        d.alpha_opt,
        -rep.max_real_part(),
        rep.classification
    );
}
