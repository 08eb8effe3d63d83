//! Numerical laboratory for Lebesgue spaces with a variable exponent on the
//! unit cube, discretized at a fixed dyadic depth.
//!
//! Everything lives on `[0,1)^n` sliced into `2^(n*J)` congruent cells; grid
//! functions and exponent fields are piecewise constant on those cells, so all
//! integrals are exact finite sums and every claimed inequality can be checked
//! literally. On top of that base the crate provides:
//!
//! - [`exponent`]: exponent fields `p(x)` with values in `(1, ∞)`, built from
//!   recipes (constant, piecewise, smoothstep, samples), their conjugates,
//!   cube-harmonic means, level sets, and a log-smoothness diagnostic;
//! - [`grid`]: dyadic cubes, cube families, and the light/shade linearization
//!   of a family (which cells of a cube are not covered by finer cubes);
//! - [`norm`]: the modular, the Luxemburg norm via bracketed bisection, the
//!   dyadic maximal operator, a Hölder-inequality defect, and per-cube
//!   embedding reports;
//! - [`haar`]: the nonhomogeneous tensor-product Haar system, exact analysis /
//!   synthesis, the discrete square function, and norms of basis elements;
//! - [`greedy`]: weight-ordered greedy N-term approximation and a restricted
//!   best-subset oracle (exhaustive or greedy-start local search);
//! - [`democracy`]: norms of normalized wavelet sums over cube families, the
//!   extremal family constructions with their closed-form bounds, and the
//!   seeded estimator for the left/right democracy growth exponents;
//! - [`fit`]: log-log least squares for power-law exponents;
//! - [`battery`]: seeded generators plus the verification batteries that
//!   distill every invariant above into worst-margin checks;
//! - [`verify`]: the structured pass/fail record those batteries emit,
//!   consumed by the CLI verifier and the acceptance suite.

pub mod battery;
pub mod democracy;
pub mod error;
pub mod exponent;
pub mod fit;
pub mod greedy;
pub mod grid;
pub mod haar;
pub mod norm;
pub mod verify;

pub use battery::{verify_stage, verify_suite, BatteryParams, VERIFY_STAGES};
pub use democracy::{
    construct_gamma1, construct_gamma1_at, construct_gamma2, construct_gamma2_at,
    democracy_norm, estimate_democracy, gamma1_lower_bound, gamma2_upper_bound,
    linearized_norm, square_sum_norm, DemocracyRecord, EstimatorOptions, FamilyValue,
    NSummary, SkipNote, Strategy,
};
pub use error::{Error, Result};
pub use exponent::{
    conjugate, exponent_range, harmonic_mean_exponent, level_sets, log_holder_constant,
    ExponentField, ExponentRecipe, LevelSets, Piece,
};
pub use fit::{fit_exponent, PowerFit};
pub use greedy::{
    best_subset_residual, greedy_order, greedy_residual, lebesgue_profile, BasisIndex,
    GreedyOrdering, ProfileRow, SearchBudget,
};
pub use grid::{
    cell_count, enumerate_cubes, integrate, light_shade, minimal_cube_map, CubeFamily,
    DyadicCube, GridFunction, LightShade,
};
pub use haar::{
    analyze, basis_norm, equivalence_ratio, square_function, synthesize, HaarCoefficients,
};
pub use norm::{
    char_norm, dyadic_maximal, embedding_checks, holder_defect, luxemburg_norm, modular,
    EmbeddingReport, NormCache,
};
pub use verify::{all_pass, Check};
