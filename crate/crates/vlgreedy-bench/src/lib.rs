//! Shared fixtures for the criterion benches. The crate exists only so
//! `cargo bench` has a place to live; nothing here is part of the library API.

use vlgreedy_core::{ExponentField, ExponentRecipe, GridFunction, Piece};

/// The two-exponent field used throughout the experiments: p = 2 on the left
/// half of the interval, p = 4 on the right.
pub fn two_four(depth: u8) -> ExponentField {
    ExponentField::build(
        1,
        depth,
        &ExponentRecipe::Piecewise {
            pieces: vec![
                Piece {
                    lo: vec![0.0],
                    hi: vec![0.5],
                    p: 2.0,
                },
                Piece {
                    lo: vec![0.5],
                    hi: vec![1.0],
                    p: 4.0,
                },
            ],
        },
    )
    .expect("valid recipe")
}

/// A deterministic oscillating input: no RNG, so benches never drift.
pub fn sawtooth(dim: u8, depth: u8) -> GridFunction {
    let cells = vlgreedy_core::cell_count(dim, depth) as usize;
    let values = (0..cells)
        .map(|i| {
            let t = i as f64 / cells as f64;
            (8.0 * t).fract() * 2.0 - 1.0 + 0.25 * (if i % 3 == 0 { 1.0 } else { -0.5 })
        })
        .collect();
    GridFunction::new(dim, depth, values).expect("valid shape")
}
