//! Fit a dataset that did not come from the synthetic generator: any CSV
//! with `psi,y,sigma` columns works, and the truth-dependent outputs are
//! simply absent.
//!
//! Run with: cargo run --example external_data

use profile_gpr::bench::{run_method, MethodSpec, RunOptions};
use profile_gpr::inference::ChainConfig;
use profile_gpr::profiles::Dataset;

fn main() {
    // Stand-in for an instrument export: a pedestal-shaped profile with
    // reported error bars, no ground truth, unsorted rows.
    let mut csv = String::from("psi,y,sigma\n");
    let shape = |x: f64| 0.4 + 0.8 / (1.0 + ((x - 0.92) / 0.03).exp());
    for i in (0..60).rev() {
        let psi = i as f64 / 59.0 * 1.05;
        let wiggle = 0.03 * ((i * 37 % 11) as f64 - 5.0) / 5.0;
        csv.push_str(&format!("{psi},{},{}\n", shape(psi) + wiggle, 0.04));
    }

    let data = Dataset::from_csv_str(&csv, "instrument export").unwrap();
    println!("ingested {} rows (sorted by psi on load)", data.len());
    assert!(data.truth.is_none());

    let opts = RunOptions {
        chain: ChainConfig { n_burn: 600, n_samples: 300, thin: 2, seed: 5, ..Default::default() },
        ..Default::default()
    };
    let fit = run_method(MethodSpec::FbChangePointStudentT, &data, &opts).unwrap();

    println!("method {} finished; acceptance {:.3}", fit.method, fit.acceptance_rate.unwrap());
    println!("rmse is {:?} because the data carries no truth column", fit.rmse);

    // The predictive curve is still fully usable.
    let grid = &fit.grid;
    println!("\npsi     mean    std");
    for j in (0..grid.psi_star.len()).step_by(30) {
        println!("{:<7.3} {:<7.4} {:<7.4}", grid.psi_star[j], grid.mean[j], grid.std[j]);
    }

    let out = std::env::temp_dir().join("external_fit.json");
    fit.write_json(&out).unwrap();
    println!("\nwrote {}", out.display());
}
