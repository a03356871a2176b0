//! Vanishing-discount sweeps and the ergodic problem `Bv + H[v] = c`.
//!
//! For constant monotone coupling the problem is solved blockwise along the
//! normal form of `B`: diagonal entries go through the scalar path, strongly
//! connected blocks through the block path, and values of earlier blocks
//! enter later ones through shifted running costs. Diagonal entries `b > 0`
//! make the undiscounted equation directly well-posed (the constant is fixed
//! to 0 and absorbed into `v`); zero-row-sum blocks are handled by following
//! the discounted solutions `v^λ` as `λ` vanishes, reading the constant off
//! the limit of `λ v^λ` and refining the pair on a shifted cost until the
//! undiscounted residual certificate holds.

use crate::error::Error;
use crate::matrix::{BlockKind, CouplingMatrix, NormalForm};
use crate::measures::green_poisson_batch;
use crate::problem::ProblemInstance;
use crate::scheme::DiscreteOperator;
use crate::solver::{self, Diagnostics, SolverOptions, ValueFunction};
use crate::Result;

/// Discount below which the refinement continuation stops; at this point the
/// undiscounted residual of the final iterate is below `1e-6 (1 + ‖v‖)` by
/// the identity `residual = λ v^λ`.
const LAMBDA_REFINE: f64 = 9e-7;
/// Threshold on the extrapolated limit of `λ v^λ` for the consistency flag.
const E_FLAG_TOL: f64 = 1e-3;
/// Residual certificate factor for ergodic solutions.
const ERGODIC_RESIDUAL_FACTOR: f64 = 1e-6;

/// Default schedule `λ_j = 0.1 · 2^{-j}`, `j = 0..7`.
pub fn default_schedule() -> Vec<f64> {
    (0..8).map(|j| 0.1 * 0.5f64.powi(j)).collect()
}

fn check_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.len() < 4 {
        return Err(Error::Schedule(format!(
            "need at least 4 values, got {}",
            schedule.len()
        )));
    }
    for w in schedule.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Schedule("schedule must be strictly decreasing".into()));
        }
    }
    if schedule.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Schedule("schedule values must be positive".into()));
    }
    Ok(())
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Solver options whose residual target scales with the magnitude of the
/// iterates; near the vanishing-discount limit the values grow like `c/λ`
/// and an absolute target would chase rounding noise.
fn scaled_options(warm_sup: f64) -> SolverOptions {
    SolverOptions {
        tol: 1e-10 * (1.0 + warm_sup),
        ..SolverOptions::default()
    }
}

/// Residual of `(c, v)` against the undiscounted system with the given cost
/// table: `max_s | max_ξ [A^0_ξ v - L](s) - c_{i(s)} |`.
fn undiscounted_residual(
    p: &ProblemInstance,
    cost: &[f64],
    v: &[f64],
    c: &[f64],
) -> Result<f64> {
    let op = DiscreteOperator::assemble(p, 0.0, cost)?;
    let np = p.grid().num_points();
    let mut worst = 0.0f64;
    for s in 0..op.num_states() {
        let mut h = f64::NEG_INFINITY;
        for xi in 0..op.num_controls() {
            h = h.max(op.row_residual(s, xi, v));
        }
        worst = worst.max((h - c[s / np]).abs());
    }
    Ok(worst)
}

/// Linear extrapolation of `λ ↦ λ v^λ(anchor)` to `λ = 0` from two samples.
fn intercept(l1: f64, a1: f64, l2: f64, a2: f64) -> f64 {
    let slope = (a1 - a2) / (l1 - l2);
    a2 - slope * l2
}

struct Continuation {
    /// `(λ, v^λ)` for the last three solves, smallest last.
    tail: Vec<(f64, Vec<f64>)>,
}

impl Continuation {
    /// Extrapolated limit of `λ v^λ` at anchor (grid point 0, given mode),
    /// from the two smallest discounts, plus the spread against the pair one
    /// step coarser.
    fn intercepts(&self, p: &ProblemInstance) -> (Vec<f64>, f64) {
        let np = p.grid().num_points();
        let n = self.tail.len();
        assert!(n >= 2);
        let (l1, ref v1) = self.tail[n - 2];
        let (l2, ref v2) = self.tail[n - 1];
        let mut out = Vec::with_capacity(p.modes());
        let mut spread = 0.0f64;
        for i in 0..p.modes() {
            let s = np * i;
            let fine = intercept(l1, l1 * v1[s], l2, l2 * v2[s]);
            out.push(fine);
            if n >= 3 {
                let (l0, ref v0) = self.tail[n - 3];
                let coarse = intercept(l0, l0 * v0[s], l1, l1 * v1[s]);
                spread = spread.max((fine - coarse).abs());
            }
        }
        (out, spread)
    }
}

/// Continues the discounted solves from the schedule's smallest value down to
/// [`LAMBDA_REFINE`], halving the discount and warm-starting each solve.
fn continue_to_refinement(
    p: &ProblemInstance,
    start_lambda: f64,
    warm: &[f64],
    divergence_guard: Option<f64>,
) -> Result<Continuation> {
    let mut lambdas = Vec::new();
    let mut lam = start_lambda / 2.0;
    while lam > LAMBDA_REFINE {
        lambdas.push(lam);
        lam /= 2.0;
    }
    while lambdas.len() < 3 {
        lambdas.push(lam);
        lam /= 2.0;
    }
    let mut tail: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut warm_values = warm.to_vec();
    for &l in &lambdas {
        let v = solver::solve_discounted_with(
            p,
            l,
            &scaled_options(sup_norm(&warm_values)),
            Some(&warm_values),
        )?;
        if let Some(bound) = divergence_guard {
            let sup = sup_norm(&v.values);
            if sup > bound {
                return Err(Error::DivergentSweep(format!(
                    "sup bound {sup:.3e} at λ = {l:.3e}"
                )));
            }
        }
        warm_values = v.values.clone();
        tail.push((l, v.values));
        if tail.len() > 3 {
            tail.remove(0);
        }
    }
    Ok(Continuation { tail })
}

// ---------------------------------------------------------------------------
// Discount sweeps
// ---------------------------------------------------------------------------

/// Per-discount record of a sweep.
#[derive(Clone, Debug)]
pub struct SweepEntry {
    pub lambda: f64,
    pub sup_bound: f64,
    pub lipschitz_max: f64,
    /// `|v_k(z) - ⟨ν, L⟩|` at the first anchor, when the adjoint solve ran.
    pub duality_gap: Option<f64>,
    /// `λ v^λ` at each requested anchor.
    pub scaled_anchor_values: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// Solver failure at this discount; the sweep continues.
    pub error: Option<String>,
}

/// Consistency flag for the solvability of the undiscounted system: the
/// extrapolated limits of `λ v^λ` must vanish.
#[derive(Clone, Debug)]
pub struct EConsistency {
    pub pass: bool,
    /// Extrapolated limit per anchor.
    pub intercepts: Vec<f64>,
    /// Per-anchor constant to add to that mode's cost to restore consistency.
    pub suggested_shift: Vec<f64>,
}

/// Full record of a vanishing-discount sweep.
#[derive(Clone, Debug)]
pub struct SweepRecord {
    pub anchors: Vec<(usize, usize)>,
    pub entries: Vec<SweepEntry>,
    /// `‖v^{λ_j} - v^{λ_{j+1}}‖_∞` between consecutive successful solves.
    pub consecutive_distances: Vec<f64>,
    /// Whether the distances are nonincreasing after the first step.
    pub cauchy_nonincreasing: bool,
    pub e_flag: EConsistency,
    /// Refined limit candidate from the continuation past the schedule.
    pub final_values: Vec<f64>,
    pub final_lambda: f64,
    /// Residual of `final_values` against the undiscounted system.
    pub final_residual_p0: f64,
}

/// Solves the discounted problem along the schedule with warm starts,
/// recording bounds, Lipschitz constants, duality gaps and the scaled anchor
/// values, then continues past the schedule to produce a limit candidate.
pub fn lambda_sweep(
    p: &ProblemInstance,
    schedule: &[f64],
    anchors: &[(usize, usize)],
) -> Result<SweepRecord> {
    check_schedule(schedule)?;
    if anchors.is_empty() {
        return Err(Error::InvalidParam("need at least one anchor".into()));
    }
    let np = p.grid().num_points();
    for &(z, k) in anchors {
        if z >= np || k >= p.modes() {
            return Err(Error::IndexOutOfRange(format!("anchor (z={z}, k={k})")));
        }
    }

    let mut entries: Vec<SweepEntry> = Vec::with_capacity(schedule.len());
    let mut distances = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    let mut last_good: Option<(f64, Vec<f64>)> = None;
    let mut prev_good: Option<(f64, Vec<f64>)> = None;

    for &lambda in schedule {
        let solved = solver::solve_discounted_with(
            p,
            lambda,
            &scaled_options(warm.as_deref().map(sup_norm).unwrap_or(0.0)),
            warm.as_deref(),
        );
        match solved {
            Ok(v) => {
                let diag: Diagnostics = solver::diagnostics(p, &v.values);
                let gap = measure_gap(p, &v, anchors[0]);
                let scaled = anchors
                    .iter()
                    .map(|&(z, k)| lambda * v.values[p.state_index(z, k)])
                    .collect();
                if let Some((_, ref prev)) = last_good {
                    let d = v
                        .values
                        .iter()
                        .zip(prev)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    distances.push(d);
                }
                entries.push(SweepEntry {
                    lambda,
                    sup_bound: diag.sup_bound,
                    lipschitz_max: diag.lipschitz.iter().cloned().fold(0.0, f64::max),
                    duality_gap: gap,
                    scaled_anchor_values: scaled,
                    residual: v.residual,
                    iterations: v.iterations,
                    error: None,
                });
                warm = Some(v.values.clone());
                prev_good = last_good.take();
                last_good = Some((lambda, v.values));
            }
            Err(e) => {
                entries.push(SweepEntry {
                    lambda,
                    sup_bound: f64::NAN,
                    lipschitz_max: f64::NAN,
                    duality_gap: None,
                    scaled_anchor_values: vec![f64::NAN; anchors.len()],
                    residual: f64::NAN,
                    iterations: 0,
                    error: Some(e.to_string()),
                });
            }
        }
    }

    let (last_lambda, last_values) = last_good
        .as_ref()
        .ok_or_else(|| Error::DivergentSweep("no discount in the schedule solved".into()))?;

    // Consistency flag from the two smallest successful discounts.
    let mut intercepts = Vec::with_capacity(anchors.len());
    if let Some((pl, pv)) = prev_good.as_ref() {
        for &(z, k) in anchors {
            let s = p.state_index(z, k);
            intercepts.push(intercept(
                *pl,
                *pl * pv[s],
                *last_lambda,
                *last_lambda * last_values[s],
            ));
        }
    } else {
        intercepts = anchors
            .iter()
            .map(|&(z, k)| last_lambda * last_values[p.state_index(z, k)])
            .collect();
    }
    let pass = intercepts.iter().all(|i| i.abs() <= E_FLAG_TOL);
    let e_flag = EConsistency {
        pass,
        suggested_shift: intercepts.iter().map(|i| -i).collect(),
        intercepts,
    };

    // Refinement continuation for the limit candidate.
    let cont = continue_to_refinement(p, *last_lambda, last_values, None)?;
    let (final_lambda, final_values) = cont.tail.last().cloned().expect("continuation solves");
    let final_residual_p0 =
        undiscounted_residual(p, p.cost_table(), &final_values, &vec![0.0; p.modes()])?;

    let cauchy_nonincreasing = distances
        .windows(2)
        .skip(1)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-15);

    Ok(SweepRecord {
        anchors: anchors.to_vec(),
        entries,
        consecutive_distances: distances,
        cauchy_nonincreasing,
        e_flag,
        final_values,
        final_lambda,
        final_residual_p0,
    })
}

fn measure_gap(p: &ProblemInstance, v: &ValueFunction, anchor: (usize, usize)) -> Option<f64> {
    let nu = green_poisson_batch(p, v, &[anchor]).ok()?.pop()?;
    let pairing = nu.pair_cost(p, p.cost_table());
    Some((v.values[p.state_index(anchor.0, anchor.1)] - pairing).abs())
}

// ---------------------------------------------------------------------------
// Scalar and block ergodic solves
// ---------------------------------------------------------------------------

/// Ergodic pair for a single-mode block.
#[derive(Clone, Debug)]
pub struct ScalarErgodic {
    /// Returned constant: 0 by convention when `b > 0`, refined limit of
    /// `-λ v^λ` when `b = 0`.
    pub c: f64,
    /// Schedule-based extrapolation estimate, before refinement.
    pub c_extrapolated: f64,
    /// Disagreement between extrapolation pairs at the refinement end.
    pub extrapolation_spread: f64,
    pub v: Vec<f64>,
    /// Residual of `(c, v)` against `b v + H[v] = c` on the grid.
    pub residual: f64,
}

/// Solves the scalar ergodic block `b v + H[v] = c`, `b >= 0` constant.
///
/// For `b > 0` the equation is directly well-posed: the constant is reported
/// as 0 and `v` is the unique fixed point, solved as a discounted problem
/// with discount `b` and no coupling. For `b = 0` the constant is estimated
/// by linear extrapolation of `λ v^λ(x_0)` over the schedule, the cost is
/// shifted by the estimate, and the pair is refined by continuing the
/// discount toward zero on the shifted problem.
pub fn ergodic_constant_scalar(p: &ProblemInstance, schedule: &[f64]) -> Result<ScalarErgodic> {
    if p.modes() != 1 {
        return Err(Error::Unsupported(
            "scalar ergodic path requires a single mode".into(),
        ));
    }
    let b = p
        .constant_coupling()
        .ok_or_else(|| Error::Unsupported("ergodic solves require constant coupling".into()))?;
    let b = b.entry(0, 0);
    if b < 0.0 {
        return Err(Error::NonMonotone { witness_x: Some(0) });
    }

    if b > 0.0 {
        // b v + H[v] = 0 is the discounted problem with discount b and B = 0.
        let decoupled = p.with_constant_coupling(&CouplingMatrix::zeros(1))?;
        let v = solver::solve_discounted(&decoupled, b)?;
        let residual = undiscounted_residual(p, p.cost_table(), &v.values, &[0.0])?;
        return Ok(ScalarErgodic {
            c: 0.0,
            c_extrapolated: 0.0,
            extrapolation_spread: 0.0,
            v: v.values,
            residual,
        });
    }

    let block = solve_zero_row_sum_block(p, schedule)?;
    Ok(ScalarErgodic {
        c: block.c[0],
        c_extrapolated: block.c_extrapolated[0],
        extrapolation_spread: block.extrapolation_spread,
        v: block.v,
        residual: block.residual,
    })
}

/// Ergodic pair for an irreducible block.
#[derive(Clone, Debug)]
pub struct BlockErgodic {
    pub c: Vec<f64>,
    pub c_extrapolated: Vec<f64>,
    pub extrapolation_spread: f64,
    pub v: Vec<f64>,
    pub residual: f64,
}

/// Solves the ergodic problem on an irreducible block (size at least 2).
///
/// Blocks with a positive row sum are directly well-posed at zero discount
/// (`c = 0`); zero-row-sum blocks go through the vanishing-discount
/// extrapolation and refinement, one constant per component.
pub fn ergodic_constant_block(p: &ProblemInstance, schedule: &[f64]) -> Result<BlockErgodic> {
    let b = p
        .constant_coupling()
        .ok_or_else(|| Error::Unsupported("ergodic solves require constant coupling".into()))?;
    if p.modes() < 2 {
        return Err(Error::Unsupported(
            "1x1 blocks are routed to the scalar path".into(),
        ));
    }
    if b.check_monotone().is_err() {
        return Err(Error::NonMonotone { witness_x: None });
    }
    let nf = b.normal_form()?;
    if nf.num_blocks() != 1 || nf.blocks[0].kind != BlockKind::Irreducible {
        return Err(Error::Unsupported("block coupling must be irreducible".into()));
    }

    let rho = b.row_sums();
    if rho.iter().any(|&r| r > 0.0) {
        // Killed somewhere: the undiscounted block is well-posed with c = 0.
        let op = DiscreteOperator::assemble(p, 0.0, p.cost_table())?;
        let v = solver::solve_with_operator(&op, &SolverOptions::default(), None)?;
        let c = vec![0.0; p.modes()];
        let residual = undiscounted_residual(p, p.cost_table(), &v.values, &c)?;
        return Ok(BlockErgodic {
            c_extrapolated: c.clone(),
            c,
            extrapolation_spread: 0.0,
            v: v.values,
            residual,
        });
    }

    solve_zero_row_sum_block(p, schedule)
}

/// Shared vanishing-discount path for zero-row-sum blocks (scalar or
/// irreducible): sweep, extrapolate per component, shift, refine, normalize.
fn solve_zero_row_sum_block(p: &ProblemInstance, schedule: &[f64]) -> Result<BlockErgodic> {
    check_schedule(schedule)?;
    let np = p.grid().num_points();
    let m = p.modes();

    // Schedule sweep with warm starts.
    let mut warm: Option<Vec<f64>> = None;
    let mut tail: Vec<(f64, Vec<f64>)> = Vec::new();
    for &lambda in schedule {
        let v = solver::solve_discounted_with(
            p,
            lambda,
            &scaled_options(warm.as_deref().map(sup_norm).unwrap_or(0.0)),
            warm.as_deref(),
        )?;
        warm = Some(v.values.clone());
        tail.push((lambda, v.values));
        if tail.len() > 3 {
            tail.remove(0);
        }
    }
    let sched_cont = Continuation { tail };
    let (sched_intercepts, _) = sched_cont.intercepts(p);
    let c_extrapolated: Vec<f64> = sched_intercepts.iter().map(|i| -i).collect();

    // Shift the cost by the estimate and refine on the shifted problem, where
    // the iterates stay bounded. Shifting the cost by a per-mode constant a
    // changes v^λ by a/λ exactly, which gives the warm start.
    let shifted_cost: Vec<f64> = {
        let mut t = p.cost_table().to_vec();
        let k = p.num_controls();
        for i in 0..m {
            for idx in (i * np * k)..((i + 1) * np * k) {
                t[idx] += c_extrapolated[i];
            }
        }
        t
    };
    let shifted = p.with_cost_table(shifted_cost)?;
    let (last_lambda, last_values) = {
        let (l, v) = sched_cont.tail.last().expect("schedule is nonempty");
        let adjusted: Vec<f64> = (0..np * m)
            .map(|s| v[s] + c_extrapolated[s / np] / l)
            .collect();
        (*l, adjusted)
    };
    let cont = continue_to_refinement(&shifted, last_lambda, &last_values, Some(1e9))?;
    let (delta_intercepts, spread) = cont.intercepts(&shifted);
    let c: Vec<f64> = c_extrapolated
        .iter()
        .zip(&delta_intercepts)
        .map(|(ce, di)| ce - di)
        .collect();
    if spread > 1e-3 * (1.0 + sup_norm(&c)) {
        return Err(Error::ExtrapolationUnstable(format!(
            "intercept spread {spread:.3e} at the refinement end"
        )));
    }

    // Normalize by the minimum over the block's states.
    let (_, final_values) = cont.tail.last().expect("continuation solves");
    let min = final_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let v: Vec<f64> = final_values.iter().map(|x| x - min).collect();
    let residual = undiscounted_residual(p, p.cost_table(), &v, &c)?;
    Ok(BlockErgodic {
        c,
        c_extrapolated,
        extrapolation_spread: spread,
        v,
        residual,
    })
}

// ---------------------------------------------------------------------------
// Full ergodic solve along the normal form
// ---------------------------------------------------------------------------

/// Solution of the ergodic problem with provenance per mode.
#[derive(Clone, Debug)]
pub struct ErgodicSolution {
    /// Ergodic constant per original mode.
    pub constants: Vec<f64>,
    /// Value function per state, original mode order.
    pub values: Vec<f64>,
    /// Schedule-based constant estimates, original mode order.
    pub constants_extrapolated: Vec<f64>,
    /// Index of the normal-form block that produced each mode's constant.
    pub block_provenance: Vec<usize>,
    /// Residual of `B v + H[v] - c` on the grid.
    pub residual: f64,
    pub normal_form: NormalForm,
}

/// Solves `B v + H[v] = c` for constant monotone coupling by walking the
/// normal form: conjugate by the permutation, solve the leading diagonal
/// entries componentwise, then each irreducible block with earlier blocks'
/// values folded into the cost (`L - Σ_j b_ij v_j` over earlier columns `j`,
/// equivalently a shift of the Hamiltonian), and map everything back.
pub fn solve_ergodic(p: &ProblemInstance, schedule: &[f64]) -> Result<ErgodicSolution> {
    check_schedule(schedule)?;
    let b = p
        .constant_coupling()
        .ok_or_else(|| Error::Unsupported("ergodic solves require constant coupling".into()))?;
    let nf = b.normal_form()?;
    let order = nf.permutation.order().to_vec();

    // Problem with modes in permuted order and the conjugated coupling.
    let q = p.mode_subproblem(&order, &nf.conjugated)?;
    let np = q.grid().num_points();
    let k = q.num_controls();
    let m = q.modes();

    let mut v_perm = vec![0.0; np * m];
    let mut c_perm = vec![0.0; m];
    let mut c_extrap_perm = vec![0.0; m];
    let mut provenance_perm = vec![0usize; m];

    for (blk_index, blk) in nf.blocks.iter().enumerate() {
        // Shifted cost for the block's modes: earlier blocks' values enter
        // through the coupling columns to their left.
        let block_modes: Vec<usize> = blk.range().collect();
        let mut cost = vec![0.0; np * k * blk.size];
        for (t, &i) in block_modes.iter().enumerate() {
            for xi in 0..k {
                for x in 0..np {
                    let mut shift = 0.0;
                    for j in 0..blk.start {
                        shift += nf.conjugated.entry(i, j) * v_perm[x + np * j];
                    }
                    cost[x + np * (xi + k * t)] = q.running_cost(i, xi, x) - shift;
                }
            }
        }

        match blk.kind {
            BlockKind::Diagonal => {
                // Independent scalar equations, one per block component.
                for (t, &i) in block_modes.iter().enumerate() {
                    let sub = q.mode_subproblem(
                        &[i],
                        &CouplingMatrix::from_rows(1, vec![blk.matrix.entry(t, t)]),
                    )?;
                    let sub = sub.with_cost_table(cost[t * np * k..(t + 1) * np * k].to_vec())?;
                    let scalar = ergodic_constant_scalar(&sub, schedule)?;
                    c_perm[i] = scalar.c;
                    c_extrap_perm[i] = scalar.c_extrapolated;
                    provenance_perm[i] = blk_index;
                    for x in 0..np {
                        v_perm[x + np * i] = scalar.v[x];
                    }
                }
            }
            BlockKind::Irreducible => {
                let sub = q.mode_subproblem(&block_modes, &blk.matrix)?;
                let sub = sub.with_cost_table(cost)?;
                let block_solution = ergodic_constant_block(&sub, schedule)?;
                for (t, &i) in block_modes.iter().enumerate() {
                    c_perm[i] = block_solution.c[t];
                    c_extrap_perm[i] = block_solution.c_extrapolated[t];
                    provenance_perm[i] = blk_index;
                    for x in 0..np {
                        v_perm[x + np * i] = block_solution.v[x + np * t];
                    }
                }
            }
        }
    }

    // Map back to the original mode order.
    let mut values = vec![0.0; np * m];
    let mut constants = vec![0.0; m];
    let mut constants_extrapolated = vec![0.0; m];
    let mut block_provenance = vec![0usize; m];
    for (new, &old) in order.iter().enumerate() {
        constants[old] = c_perm[new];
        constants_extrapolated[old] = c_extrap_perm[new];
        block_provenance[old] = provenance_perm[new];
        for x in 0..np {
            values[x + np * old] = v_perm[x + np * new];
        }
    }

    let residual = undiscounted_residual(p, p.cost_table(), &values, &constants)?;
    let allowed = ERGODIC_RESIDUAL_FACTOR * (1.0 + sup_norm(&values));
    if residual > allowed {
        return Err(Error::Unsupported(format!(
            "ergodic residual {residual:.3e} exceeds certificate {allowed:.3e}"
        )));
    }
    Ok(ErgodicSolution {
        constants,
        values,
        constants_extrapolated,
        block_provenance,
        residual,
        normal_form: nf,
    })
}

/// Shifts the running cost by the computed ergodic constants so that the
/// undiscounted system becomes solvable on the grid (the scaled values
/// `λ v^λ` vanish along sweeps). Returns the shifted instance and the
/// constants that were added per mode.
pub fn normalize_critical(
    p: &ProblemInstance,
    schedule: &[f64],
) -> Result<(ProblemInstance, Vec<f64>)> {
    let solution = solve_ergodic(p, schedule)?;
    let np = p.grid().num_points();
    let k = p.num_controls();
    let mut cost = p.cost_table().to_vec();
    for i in 0..p.modes() {
        for idx in (i * np * k)..((i + 1) * np * k) {
            cost[idx] += solution.constants[i];
        }
    }
    Ok((p.with_cost_table(cost)?, solution.constants))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{builtin_problem, load_problem};

    fn builtin(name: &str, params: serde_json::Value) -> ProblemInstance {
        builtin_problem(name, params.as_object().unwrap()).unwrap()
    }

    #[test]
    fn eikonal_critical_value_is_minus_min_cost() {
        // 1d weak KAM: |Dv| = f + c is solvable exactly when min(f + c) = 0,
        // so c = -min f = -1 for f = 2 + sin(2 pi x).
        let p = builtin("eikonal1d", serde_json::json!({"N": 100}));
        let out = ergodic_constant_scalar(&p, &default_schedule()).unwrap();
        assert!(
            (out.c - (-1.0)).abs() <= 0.05,
            "c = {}, expected about -1",
            out.c
        );
        assert!((out.c_extrapolated - out.c).abs() < 0.01);
        let allowed = 1e-6 * (1.0 + out.v.iter().fold(0.0f64, |a, x| a.max(x.abs())));
        assert!(out.residual <= allowed, "residual {} > {allowed}", out.residual);
    }

    #[test]
    fn zero_cost_has_zero_constant() {
        let p = builtin("eikonal1d", serde_json::json!({"N": 40}));
        let p = p.with_cost_table(vec![0.0; p.cost_table().len()]).unwrap();
        let out = ergodic_constant_scalar(&p, &default_schedule()).unwrap();
        assert!(out.c.abs() < 1e-9, "c = {}", out.c);
        assert!(out.v.iter().all(|x| x.abs() < 1e-6));
    }

    #[test]
    fn positive_diagonal_reports_zero_constant() {
        let p = builtin(
            "decoupled_diag",
            serde_json::json!({"m": 1, "b": [2.0], "N": 30}),
        );
        let out = ergodic_constant_scalar(&p, &default_schedule()).unwrap();
        assert_eq!(out.c, 0.0);
        // v solves 2v + H[v] = 0; spot-check the residual certificate.
        assert!(out.residual <= 1e-6 * (1.0 + out.v.iter().fold(0.0f64, |a, x| a.max(x.abs()))));
    }

    #[test]
    fn block_path_rejects_scalar_blocks() {
        let p = builtin("decoupled_diag", serde_json::json!({"m": 1, "b": [1.0], "N": 10}));
        assert!(matches!(
            ergodic_constant_block(&p, &default_schedule()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn symmetric_switch_block_has_vanishing_constants() {
        let p = builtin(
            "switch2",
            serde_json::json!({"N": 100, "equal_costs": true, "normalize": true}),
        );
        let out = ergodic_constant_block(&p, &default_schedule()).unwrap();
        for (i, c) in out.c.iter().enumerate() {
            assert!(c.abs() <= 0.05, "c[{i}] = {c}");
        }
    }

    #[test]
    fn cost_shifts_move_the_constants_oppositely() {
        let p = builtin(
            "switch2",
            serde_json::json!({"N": 60, "equal_costs": true, "normalize": true}),
        );
        let base = ergodic_constant_block(&p, &default_schedule()).unwrap();
        let shifted_cost: Vec<f64> = p.cost_table().iter().map(|v| v + 1.0).collect();
        let shifted = p.with_cost_table(shifted_cost).unwrap();
        let moved = ergodic_constant_block(&shifted, &default_schedule()).unwrap();
        for i in 0..2 {
            assert!(
                ((moved.c[i] - base.c[i]) - (-1.0)).abs() < 1e-6,
                "shift by +1 must move c by -1, got {} -> {}",
                base.c[i],
                moved.c[i]
            );
        }
    }

    #[test]
    fn triangular_constant_cost_chain_solves_by_hand() {
        // B = [[1, -1], [0, 0]] with constant costs (l1, l2) and no drift:
        // block {2} first gives c2 = -l2 with v2 normalized to 0, then
        // block {1} (b = 1 > 0) gives c1 = 0 and v1 = l1 + v2.
        let (l1, l2) = (2.5, 0.75);
        let n = 5;
        let doc = serde_json::json!({
            "grid": {"dim": 1, "N": n},
            "controls": {"K": 1},
            "modes": 2,
            "g": vec![0.0; n * 2],
            "L": ([vec![l1; n], vec![l2; n]].concat()),
            "B": ([vec![1.0; n], vec![0.0; n], vec![-1.0; n], vec![0.0; n]].concat()),
        });
        let p = load_problem(&doc.to_string()).unwrap();
        let out = solve_ergodic(&p, &default_schedule()).unwrap();
        assert!((out.constants[0] - 0.0).abs() < 1e-8, "c = {:?}", out.constants);
        assert!((out.constants[1] - (-l2)).abs() < 1e-8);
        let np = n;
        for x in 0..np {
            assert!((out.values[x] - l1).abs() < 1e-7, "v1 = {}", out.values[x]);
            assert!(out.values[x + np].abs() < 1e-7);
        }
        assert_eq!(out.block_provenance, vec![1, 0]);
    }

    #[test]
    fn single_mode_ergodic_solve_recovers_the_critical_value() {
        let p = builtin("eikonal1d", serde_json::json!({"N": 100}));
        let out = solve_ergodic(&p, &default_schedule()).unwrap();
        assert_eq!(out.constants.len(), 1);
        assert!((out.constants[0] - (-1.0)).abs() <= 0.05);
        assert_eq!(out.block_provenance, vec![0]);
    }

    #[test]
    fn decoupled_positive_diagonal_gives_zero_vector() {
        let p = builtin(
            "decoupled_diag",
            serde_json::json!({"m": 3, "b": [1.0, 0.5, 2.0], "N": 20}),
        );
        let out = solve_ergodic(&p, &default_schedule()).unwrap();
        assert_eq!(out.constants, vec![0.0, 0.0, 0.0]);
        assert_eq!(out.normal_form.num_blocks(), 1);
    }

    #[test]
    fn interleaved_blocks_match_standalone_solves() {
        // Modes {0, 2} and {1, 3} form two independent irreducible pairs; the
        // assembled constants must match solving each pair on its own.
        let n = 40;
        let profile =
            |x: f64, phase: f64| 2.0 + (2.0 * std::f64::consts::PI * (x + phase)).sin();
        let mut g = vec![0.0; n * 2 * 4];
        let mut cost = vec![0.0; n * 2 * 4];
        for i in 0..4 {
            let phase = if i % 2 == 0 { 0.0 } else { 0.3 };
            for xi in 0..2 {
                for x in 0..n {
                    let sign = if xi == 0 { -1.0 } else { 1.0 };
                    g[x + n * (xi + 2 * i)] = sign;
                    let f = profile(x as f64 / n as f64, phase);
                    cost[x + n * (xi + 2 * i)] = f;
                }
            }
        }
        // Normalize each mode's cost to make the sweeps consistent.
        for i in 0..4 {
            let lo = cost[(i * 2 * n)..((i + 1) * 2 * n)]
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            for v in cost[(i * 2 * n)..((i + 1) * 2 * n)].iter_mut() {
                *v -= lo;
            }
        }
        let mut b = vec![0.0; n * 4 * 4];
        let pairs = [(0usize, 2usize, 1.0), (1, 3, 2.0)];
        for &(i, j, w) in &pairs {
            for x in 0..n {
                b[x + n * (i + 4 * i)] = w;
                b[x + n * (i + 4 * j)] = -w;
                b[x + n * (j + 4 * j)] = w;
                b[x + n * (j + 4 * i)] = -w;
            }
        }
        let doc = serde_json::json!({
            "grid": {"dim": 1, "N": n},
            "controls": {"K": 2},
            "modes": 4,
            "g": g, "L": cost, "B": b,
        });
        let p = load_problem(&doc.to_string()).unwrap();
        let full = solve_ergodic(&p, &default_schedule()).unwrap();

        for &(i, j, w) in &pairs {
            let sub = p
                .mode_subproblem(
                    &[i, j],
                    &CouplingMatrix::from_rows(2, vec![w, -w, -w, w]),
                )
                .unwrap();
            let alone = ergodic_constant_block(&sub, &default_schedule()).unwrap();
            assert!(
                (full.constants[i] - alone.c[0]).abs() < 1e-6,
                "mode {i}: {} vs {}",
                full.constants[i],
                alone.c[0]
            );
            assert!((full.constants[j] - alone.c[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn sweep_on_normalized_eikonal_is_cauchy_and_consistent() {
        let p = builtin("eikonal1d", serde_json::json!({"N": 100}));
        let (normalized, shifts) = normalize_critical(&p, &default_schedule()).unwrap();
        assert!((shifts[0] - (-1.0)).abs() < 0.05);
        let record = lambda_sweep(&normalized, &default_schedule(), &[(0, 0)]).unwrap();
        assert!(record.e_flag.pass, "intercepts {:?}", record.e_flag.intercepts);
        assert!(record.cauchy_nonincreasing, "{:?}", record.consecutive_distances);
        let last = *record.consecutive_distances.last().unwrap();
        assert!(last <= 1e-3, "final consecutive distance {last}");
        let sup = record.final_values.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        assert!(record.final_residual_p0 <= 1e-6 * (1.0 + sup));
        // Bounded sup and Lipschitz constants along the sweep.
        for e in &record.entries {
            assert!(e.sup_bound <= 50.0);
            assert!(e.lipschitz_max <= 50.0);
            if let Some(gap) = e.duality_gap {
                assert!(gap <= 1e-8);
            }
        }
    }

    #[test]
    fn sweep_flags_unnormalized_costs_and_suggests_the_shift() {
        let p = builtin("eikonal1d", serde_json::json!({"N": 80}));
        let record = lambda_sweep(&p, &default_schedule(), &[(0, 0)]).unwrap();
        assert!(!record.e_flag.pass);
        // min f = 1, so lambda v -> 1 and the suggested shift is about -1.
        assert!(
            (record.e_flag.suggested_shift[0] - (-1.0)).abs() <= 0.05,
            "shift {:?}",
            record.e_flag.suggested_shift
        );
    }

    #[test]
    fn zero_cost_sweep_is_identically_zero() {
        let p = builtin("eikonal1d", serde_json::json!({"N": 30}));
        let p = p.with_cost_table(vec![0.0; p.cost_table().len()]).unwrap();
        let record = lambda_sweep(&p, &default_schedule(), &[(0, 0)]).unwrap();
        for e in &record.entries {
            assert!(e.sup_bound < 1e-12);
        }
        for d in &record.consecutive_distances {
            assert!(*d < 1e-12);
        }
    }

    #[test]
    fn schedules_must_decrease() {
        let p = builtin("eikonal1d", serde_json::json!({"N": 10}));
        assert!(matches!(
            lambda_sweep(&p, &[0.1, 0.1, 0.05, 0.02], &[(0, 0)]),
            Err(Error::Schedule(_))
        ));
        assert!(matches!(
            lambda_sweep(&p, &[0.1, 0.05], &[(0, 0)]),
            Err(Error::Schedule(_))
        ));
    }
}
