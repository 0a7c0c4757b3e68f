//! Max-min power allocation by successive convex approximation, with a
//! grid-search oracle and baseline optimizers.

pub mod algorithm;
pub mod barrier;
pub mod exhaustive;
pub mod posynomial;
pub mod program;

pub use algorithm::{optimize_cnoma, optimize_coma, optimize_crsma, run_sca, ScaOptions, ScaStep, ScaTrace};
pub use barrier::{build_subproblem, solve_subproblem, ConvexSubproblem, SolverOptions, SolverStats};
pub use exhaustive::{exhaustive_search, exhaustive_search_with, optimize_baseline, optimize_scheme, Optimum};
pub use program::{linearize, linearize_cnoma, linearize_crsma, log_rate_hessian, LinearizationPoint, RateProgram};
