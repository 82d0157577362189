//! Optimal stationary purity around the Bloch circle for several detector
//! efficiencies. Pass a directory to also write one CSV per efficiency.
//!
//! cargo run --example purity_locus -- [out_dir]

use std::f64::consts::PI;

use bloch_feedback::design::{build_locus, theta_grid, Objective, SearchConfig};
use bloch_feedback::output::locus_csv;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1);
    let grid = theta_grid(180);
    let cfg = SearchConfig::default();
    let probes = [0.0, PI / 6.0, PI / 3.0, 2.0 * PI / 3.0, 5.0 * PI / 6.0, PI];
    print!("{:>5}", "eta");
    for p in probes {
        print!(" {:>8.3}", p);
    }
    println!("   (r at theta)");
    for eta in [1.0, 0.8, 0.6, 0.4, 0.2, 0.0] {
        let table = build_locus(eta, 1.0, &grid, Objective::Purity, &cfg)?;
        print!("{eta:>5.1}");
        for p in probes {
            let row = table.rows.iter().min_by(|a, b| (a.theta - p).abs().total_cmp(&(b.theta - p).abs())).unwrap();
            match row.error {
                Some(_) => print!(" {:>8}", "-"),
                None => print!(" {:>8.4}", row.r_squared.sqrt()),
            }
        }
        println!();
        if let Some(dir) = &out {
            std::fs::create_dir_all(dir)?;
            std::fs::write(format!("{dir}/locus_eta_{eta}.csv"), locus_csv(&table))?;
        }
    }
    Ok(())
}
