//! Discounted solves by Gauss-Seidel value iteration and policy iteration,
//! plus comparison and boundedness/Lipschitz diagnostics.

use crate::error::Error;
use crate::linalg::DenseSolver;
use crate::problem::ProblemInstance;
use crate::scheme::{self, DiscreteOperator};
use crate::Result;

/// Discrete value function with its minimizing policy attached.
#[derive(Clone, Debug)]
pub struct ValueFunction {
    pub lambda: f64,
    /// Values per state `x + np*i`.
    pub values: Vec<f64>,
    /// Minimizing control per state, consistent with `values`.
    pub policy: Vec<usize>,
    /// Sup-norm Bellman residual achieved on return.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IterationMethod {
    /// Greedy policy updates with exact frozen-policy linear solves.
    PolicyIteration,
    /// Gauss-Seidel value iteration with alternating sweep directions.
    GaussSeidel,
    /// Plain Bellman iteration; deterministic under state-range threading.
    Jacobi,
}

/// Name of the environment variable bounding worker threads in Jacobi mode.
pub const THREADS_ENV: &str = "HJCS_THREADS";

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    /// Sup-norm Bellman residual target.
    pub tol: f64,
    /// Cap on value-iteration sweeps.
    pub max_iter: usize,
    /// Cap on policy-iteration rounds.
    pub max_policy_iter: usize,
    pub method: IterationMethod,
    /// Largest state count for which frozen policies are solved densely;
    /// beyond it policy evaluation falls back to Gauss-Seidel sweeps.
    pub dense_limit: usize,
    /// Worker threads for Jacobi mode (from `HJCS_THREADS`, default 1).
    pub threads: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        let threads = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&t| t >= 1)
            .unwrap_or(1);
        SolverOptions {
            tol: 1e-10,
            max_iter: 1_000_000,
            max_policy_iter: 100,
            method: IterationMethod::PolicyIteration,
            dense_limit: 2048,
            threads,
        }
    }
}

/// Solves the discounted system for `λ > 0` with default options.
pub fn solve_discounted(p: &ProblemInstance, lambda: f64) -> Result<ValueFunction> {
    solve_discounted_with(p, lambda, &SolverOptions::default(), None)
}

/// Solves the discounted system with explicit options and an optional warm
/// start (zeros otherwise).
pub fn solve_discounted_with(
    p: &ProblemInstance,
    lambda: f64,
    opts: &SolverOptions,
    initial: Option<&[f64]>,
) -> Result<ValueFunction> {
    let op = scheme::build_operator(p, lambda)?;
    solve_with_operator(&op, opts, initial)
}

/// Core iteration on an assembled operator. Also used by the ergodic solver
/// with a zero discount, where the coupling provides the contraction.
pub(crate) fn solve_with_operator(
    op: &DiscreteOperator,
    opts: &SolverOptions,
    initial: Option<&[f64]>,
) -> Result<ValueFunction> {
    let s_total = op.num_states();
    for s in 0..s_total {
        for xi in 0..op.num_controls() {
            if !(op.diagonal(s, xi) > 0.0) {
                return Err(Error::Unsupported(
                    "degenerate diagonal: state with no outflow and no discount".into(),
                ));
            }
        }
    }
    let mut v = match initial {
        Some(v0) => {
            if v0.len() != s_total {
                return Err(Error::Shape {
                    table: "initial guess",
                    expected: s_total,
                    got: v0.len(),
                });
            }
            v0.to_vec()
        }
        None => vec![0.0; s_total],
    };

    match opts.method {
        IterationMethod::PolicyIteration => policy_iteration(op, opts, v),
        IterationMethod::GaussSeidel => {
            let (iterations, residual) = gauss_seidel(op, opts, &mut v, opts.tol)?;
            let (_, policy) = op.bellman_apply(&v);
            Ok(ValueFunction {
                lambda: op.lambda(),
                values: v,
                policy,
                residual,
                iterations,
            })
        }
        IterationMethod::Jacobi => jacobi(op, opts, v),
    }
}

fn gauss_seidel(
    op: &DiscreteOperator,
    opts: &SolverOptions,
    v: &mut [f64],
    tol: f64,
) -> Result<(usize, f64)> {
    let kappa = op.contraction_factor();
    // Update-based stopping inflated to a residual bound, then verified.
    let update_tol = tol * (1.0 - kappa).max(1e-12);
    let mut iterations = 0;
    let mut forward = true;
    loop {
        let update = op.gauss_seidel_sweep(v, forward);
        forward = !forward;
        iterations += 1;
        if update <= update_tol || iterations % 64 == 0 {
            let residual = op.bellman_residual(v);
            if residual <= tol {
                return Ok((iterations, residual));
            }
        }
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence {
                max_iter: opts.max_iter,
                kappa,
            });
        }
    }
}

fn jacobi(op: &DiscreteOperator, opts: &SolverOptions, mut v: Vec<f64>) -> Result<ValueFunction> {
    let s_total = op.num_states();
    let threads = opts.threads.max(1).min(s_total.max(1));
    let mut iterations = 0;
    loop {
        let mut out = vec![0.0; s_total];
        let mut policy = vec![0usize; s_total];
        if threads == 1 {
            op.bellman_apply_range(&v, 0..s_total, &mut out, &mut policy);
        } else {
            let chunk = s_total.div_ceil(threads);
            std::thread::scope(|scope| {
                let v_ref = &v;
                for ((start, out_chunk), pol_chunk) in (0..s_total)
                    .step_by(chunk)
                    .zip(out.chunks_mut(chunk))
                    .zip(policy.chunks_mut(chunk))
                {
                    scope.spawn(move || {
                        let end = (start + out_chunk.len()).min(s_total);
                        op.bellman_apply_range(v_ref, start..end, out_chunk, pol_chunk);
                    });
                }
            });
        }
        let residual = out
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = out;
        iterations += 1;
        if residual <= opts.tol {
            return Ok(ValueFunction {
                lambda: op.lambda(),
                values: v,
                policy,
                residual,
                iterations,
            });
        }
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence {
                max_iter: opts.max_iter,
                kappa: op.contraction_factor(),
            });
        }
    }
}

fn policy_iteration(
    op: &DiscreteOperator,
    opts: &SolverOptions,
    mut v: Vec<f64>,
) -> Result<ValueFunction> {
    let s_total = op.num_states();
    // A few warmup sweeps sharpen the initial policy.
    for pass in 0..4 {
        op.gauss_seidel_sweep(&mut v, pass % 2 == 0);
    }
    let (_, mut policy) = op.bellman_apply(&v);
    let mut iterations = 0;
    loop {
        iterations += 1;
        v = evaluate_policy(op, &policy, opts, &v)?;
        let (_, next_policy) = op.bellman_apply(&v);
        let stable = next_policy == policy;
        policy = next_policy;
        if stable {
            let residual = op.bellman_residual(&v);
            if residual <= opts.tol {
                return Ok(ValueFunction {
                    lambda: op.lambda(),
                    values: v,
                    policy,
                    residual,
                    iterations,
                });
            }
        }
        if iterations >= opts.max_policy_iter {
            // Greedy cycling without reaching the tolerance.
            let residual = op.bellman_residual(&v);
            if residual <= opts.tol {
                return Ok(ValueFunction {
                    lambda: op.lambda(),
                    values: v,
                    policy,
                    residual,
                    iterations,
                });
            }
            return Err(Error::NonConvergence {
                max_iter: opts.max_policy_iter,
                kappa: op.contraction_factor(),
            });
        }
        let _ = s_total;
    }
}

/// Exact (dense LU) or iterative evaluation of a frozen policy.
fn evaluate_policy(
    op: &DiscreteOperator,
    policy: &[usize],
    opts: &SolverOptions,
    warm: &[f64],
) -> Result<Vec<f64>> {
    let s_total = op.num_states();
    if s_total <= opts.dense_limit {
        let a = op.frozen_policy_matrix(policy);
        let b = op.frozen_policy_cost(policy);
        let solver = DenseSolver::new(a).ok_or(Error::SingularSystem)?;
        let x = solver.solve(&b).ok_or(Error::SingularSystem)?;
        Ok(x.iter().cloned().collect())
    } else {
        // Frozen-policy Gauss-Seidel to a residual well under the outer tol.
        let mut v = warm.to_vec();
        let inner_tol = (opts.tol * 0.1).max(1e-13);
        let mut forward = true;
        for _ in 0..opts.max_iter {
            let mut max_update = 0.0f64;
            let iter: Box<dyn Iterator<Item = usize>> = if forward {
                Box::new(0..s_total)
            } else {
                Box::new((0..s_total).rev())
            };
            for s in iter {
                let xi = policy[s];
                let numer = op.diagonal(s, xi) * v[s] - op.apply_row(s, xi, &v) + op.source(s, xi);
                let value = numer / op.diagonal(s, xi);
                max_update = max_update.max((value - v[s]).abs());
                v[s] = value;
            }
            forward = !forward;
            if max_update <= inner_tol {
                return Ok(v);
            }
        }
        Err(Error::NonConvergence {
            max_iter: opts.max_iter,
            kappa: op.contraction_factor(),
        })
    }
}

/// Sup bound and per-mode Lipschitz constants of a grid function.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub sup_bound: f64,
    /// Largest one-step difference quotient per mode.
    pub lipschitz: Vec<f64>,
}

pub fn diagnostics(p: &ProblemInstance, values: &[f64]) -> Diagnostics {
    let np = p.grid().num_points();
    let h = p.grid().spacing();
    let sup_bound = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut lipschitz = vec![0.0f64; p.modes()];
    for i in 0..p.modes() {
        for x in 0..np {
            for d in 0..p.grid().dim() {
                let xn = p.grid().neighbor(x, d, 1);
                let diff = (values[x + np * i] - values[xn + np * i]).abs() / h;
                lipschitz[i] = lipschitz[i].max(diff);
            }
        }
    }
    Diagnostics { sup_bound, lipschitz }
}

/// Outcome of the discrete comparison check between a subsolution and a
/// supersolution.
#[derive(Clone, Debug, PartialEq)]
pub enum ComparisonOutcome {
    /// `u <= w + tol` everywhere.
    Holds,
    /// Ordering fails at a state by the given gap.
    Fails { state: (usize, usize), gap: f64 },
    /// A precondition failed; the comparison statement does not apply.
    NotApplicable(String),
}

/// Discrete comparison: verifies the preconditions (the pair `(L, u)` passes
/// the subsolution test, `w` the supersolution test) and then checks the
/// componentwise ordering `u <= w + tol`.
pub fn comparison_test(
    p: &ProblemInstance,
    lambda: f64,
    u_sub: &[f64],
    w_super: &[f64],
    tol: f64,
) -> Result<ComparisonOutcome> {
    let phi = p.cost_table().to_vec();
    let sub = scheme::check_subsolution(p, lambda, &phi, u_sub, tol)?;
    if !sub.pass {
        return Ok(ComparisonOutcome::NotApplicable(format!(
            "u is not a subsolution: residual {:.3e} at (x={}, control={}, mode={})",
            sub.max_residual, sub.worst.0, sub.worst.1, sub.worst.2
        )));
    }
    let sup = scheme::check_supersolution(p, lambda, &phi, w_super, tol)?;
    if !sup.pass {
        return Ok(ComparisonOutcome::NotApplicable(format!(
            "w is not a supersolution: residual {:.3e} at (x={}, mode={})",
            sup.min_residual, sup.worst.0, sup.worst.1
        )));
    }
    let np = p.grid().num_points();
    for s in 0..p.num_states() {
        let gap = u_sub[s] - w_super[s];
        if gap > tol {
            return Ok(ComparisonOutcome::Fails {
                state: (s % np, s / np),
                gap,
            });
        }
    }
    Ok(ComparisonOutcome::Holds)
}
