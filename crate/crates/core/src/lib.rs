//! Numerical solvers for weakly coupled systems of Hamilton-Jacobi equations
//!
//! The library works with the discounted system
//!
//! ```text
//! λ v_i + Σ_j b_ij(x) v_j + H_i(x, Dv_i) = 0   on the flat torus, i = 1..m,
//! ```
//!
//! where each Hamiltonian is of Bellman form,
//! `H_i(x,p) = max_ξ [ -g_i(x,ξ)·p - L_i(x,ξ) ]` over a finite control set,
//! and the coupling matrix `B(x)` is monotone (nonpositive off-diagonal
//! entries, nonnegative row sums).
//!
//! Everything is discretized with a first-order upwind scheme on a periodic
//! grid. The scheme is simultaneously a controlled Markov chain, which makes
//! the occupancy-measure duality exact at the discrete level:
//!
//! * [`solver::solve_discounted`] computes the unique discounted solution by
//!   Gauss-Seidel value iteration and policy iteration;
//! * [`measures::green_poisson`] computes the occupancy measure of the killed
//!   optimal chain, which represents the value as `v_k(z) = ⟨ν, L⟩`;
//! * [`measures::mather_limit`] follows the rescaled measures `λ ν^λ` to a
//!   Mather measure as the discount vanishes;
//! * [`ergodic::lambda_sweep`] and [`ergodic::solve_ergodic`] handle the
//!   vanishing-discount limit and the ergodic problem `Bv + H[v] = c` for
//!   constant coupling, via the block normal form of `B`.

pub mod error;
pub mod problem;
pub mod matrix;
pub mod hamiltonian;
pub mod scheme;
pub mod solver;
pub mod measures;
pub mod ergodic;

mod linalg;

pub use error::Error;
pub use problem::{
    builtin_problem, load_problem, serialize_problem, validate_problem, ControlSet,
    ProblemInstance, TorusGrid, ValidationReport,
};
pub use matrix::{BlockKind, CouplingMatrix, MonotoneWitness, NormalForm, Permutation};
pub use hamiltonian::{coercivity_margin, eval_hamiltonian, eval_hamiltonian_with_cost, HamiltonianEval};
pub use scheme::{build_operator, check_subsolution, check_supersolution, DiscreteOperator, SubsolutionReport};
pub use solver::{
    comparison_test, diagnostics, solve_discounted, solve_discounted_with, ComparisonOutcome,
    Diagnostics, IterationMethod, SolverOptions, ValueFunction,
};
pub use measures::{
    adjoint_residual, brute_force_oracle, green_poisson, green_poisson_batch, mather_limit,
    stationarity_residual, to_probability, DiscreteMeasure, MatherLimit, MeasureKind,
    OracleResult, ProbabilityMeasure,
};
pub use ergodic::{
    default_schedule, ergodic_constant_block, ergodic_constant_scalar, lambda_sweep,
    normalize_critical, solve_ergodic, BlockErgodic, ErgodicSolution, ScalarErgodic, SweepEntry,
    SweepRecord,
};

pub type Result<T> = std::result::Result<T, Error>;
