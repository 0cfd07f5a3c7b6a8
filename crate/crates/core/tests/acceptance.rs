//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};

fn main() {
    type Criterion = (&'static str, fn() -> common::Check);
    let checks: [Criterion; 8] = [
        ("cmd matches direct-summation oracle, symmetric, zero on self", common::check_cmd_oracle),
        ("aps matches all-pairs oracle, identical 1.0, orthogonal 0.0", common::check_aps_oracle),
        ("entity matcher matches quadratic oracle, longest match wins", common::check_matcher_oracle),
        ("mock generate: 100 valid per family, identity holds, reruns identical", common::check_e2e_mock),
        ("composed prompts byte-identical to golden files", common::check_goldens),
        ("default hyperparameters", common::check_default_hyperparameters),
        ("cost ledger exact and additive over splits", common::check_cost_ledger),
        ("entity topic sampling uniform (chi-square, alpha 0.001)", common::check_sampling_uniformity),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match result {
            Ok(detail) => println!("PASS  {name}  ({detail})"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}  ({why})");
            }
        }
    }
    println!("{} of {} criteria passed", 8 - failed, 8);
    if failed > 0 {
        std::process::exit(1);
    }
}
