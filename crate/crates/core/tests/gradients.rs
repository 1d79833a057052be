//! Finite-difference checks of the analytic backward passes.

mod common;

use common::gradcheck::{network_case, unit_case};
use memevo_core::genome::CellType;

#[test]
fn unit_gradients_match_finite_differences() {
    for cell in CellType::ALL {
        let mut worst: f64 = 0.0;
        for seed in 0..100 {
            worst = worst.max(unit_case(cell, seed).unwrap_or_else(|e| panic!("{e}")));
        }
        println!("{cell}: worst relative error {worst:.2e}");
    }
}

#[test]
fn network_gradients_match_finite_differences() {
    for seed in 0..60 {
        network_case(1000 + seed).unwrap_or_else(|e| panic!("{e}"));
    }
}
