//! Mean RMSE/GER/GDE per algorithm and NLOS ratio.
//!
//! Arguments are config lines, e.g.
//! `cargo run --release --example table -- n_trials=40 'nlos_ratios=[0.05]'`

use bootloc::harness::{run_comparison, RunOptions};
use bootloc::ScenarioConfig;

fn main() {
    let overrides: Vec<String> = std::env::args().skip(1).collect();
    let cfg = ScenarioConfig::from_toml_str(&overrides.join("\n")).unwrap_or_else(|e| {
        eprintln!("{e}");
        std::process::exit(2);
    });
    let outcomes = run_comparison(&cfg, RunOptions::default()).unwrap_or_else(|e| {
        eprintln!("{e}");
        std::process::exit(1);
    });
    for o in &outcomes {
        println!("nlos {}", o.nlos_ratio);
        for s in &o.summaries {
            println!(
                "  {:<18} rmse {:.4} (mean {:.4})  ger {:.4}  gde {:.4}  iters {:.0}  diverged {}",
                s.algorithm.name(),
                s.rmse,
                s.mean_rmse,
                s.mean_ger,
                s.mean_gde,
                s.mean_iterations,
                s.diverged
            );
        }
    }
}
