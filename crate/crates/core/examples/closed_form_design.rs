//! Perfect-detection designs: the closed-form gain and driving that make a
//! pure state `|theta>` a fixed point, next to the numerical optimizer.
//!
//! cargo run --example closed_form_design

use std::f64::consts::PI;

use bloch_feedback::design::{alpha_eta1, lambda_eta1, optimize_purity, SearchConfig};
use bloch_feedback::steady_state::{feedback_ss, SystemParams};

fn main() {
    let gamma = 1.0;
    let cfg = SearchConfig::default();
    println!("{:>8} {:>10} {:>10} {:>10} {:>10} {:>9}", "theta", "lambda", "alpha", "lambda*", "alpha*", "r^2");
    for k in -5..=6 {
        let theta = k as f64 * PI / 6.0;
        if theta.cos().abs() < 1e-9 {
            println!("{theta:>8.4}   equator: fixed point exists but is not attracting");
            continue;
        }
        let (lambda, alpha) = (lambda_eta1(theta, gamma), alpha_eta1(theta, gamma));
        let ss = feedback_ss(&SystemParams::new(gamma, 1.0, alpha, lambda).unwrap()).unwrap();
        let opt = optimize_purity(theta, gamma, 1.0, &cfg).unwrap();
        println!(
            "{theta:>8.4} {lambda:>10.6} {alpha:>10.6} {:>10.6} {:>10.6} {:>9.6}",
            opt.lambda_opt,
            opt.alpha_opt,
            ss.norm_squared()
        );
    }
}
