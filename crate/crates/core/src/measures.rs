//! Discrete Green-Poisson and Mather measures.
//!
//! With the policy `π` frozen, the upwind operator is an invertible M-matrix
//! `A_π`, and the occupancy measure of the killed chain started at `(z,k)`
//! solves the adjoint system `A_π^T ν = e_(z,k)`. Two identities then hold
//! exactly (up to linear-solver rounding):
//!
//! * normalization: `⟨ν, B^λ 1⟩ = 1`, because `A_π 1 = B^λ 1` state by state;
//! * duality: `v^λ_k(z) = ⟨ν, L⟩`, both sides being `e^T A_π^{-1} L_π`.
//!
//! Every other stationary policy produces a feasible occupancy with a larger
//! cost pairing, which is the minimizing property of the measure. Rescaling
//! by `λ + ρ_i(x)` turns `ν` into a probability measure, and the iterates
//! `λ ν^λ` converge to a Mather measure as the discount vanishes.

use crate::error::Error;
use crate::linalg::DenseSolver;
use crate::problem::ProblemInstance;
use crate::scheme::DiscreteOperator;
use crate::solver::{self, SolverOptions, ValueFunction};
use crate::Result;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest state count for which adjoint systems are solved densely.
const DENSE_MEASURE_LIMIT: usize = 4096;
/// Weights below this magnitude may be clipped to zero; anything more
/// negative is a solver failure.
const NEGATIVE_WEIGHT_TOL: f64 = 1e-12;

/// One weighted point of a measure on grid x controls x modes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasureAtom {
    pub x: usize,
    pub control: usize,
    pub mode: usize,
    pub weight: f64,
}

/// Nonnegative weights on (grid point, control, mode) normalized against
/// `B^λ 1`; the discrete Green-Poisson object for one anchor state.
#[derive(Clone, Debug)]
pub struct DiscreteMeasure {
    pub lambda: f64,
    /// Anchor state (grid point, mode) whose value the measure represents.
    pub anchor: (usize, usize),
    pub atoms: Vec<MeasureAtom>,
}

impl DiscreteMeasure {
    /// Pairing `⟨ν, φ⟩` with a cost-table-shaped function.
    pub fn pair_cost(&self, p: &ProblemInstance, table: &[f64]) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.weight * table[p.cost_index(a.mode, a.control, a.x)])
            .sum()
    }

    /// Pairing `⟨ν, ψ⟩` with a grid-function per mode (no control dependence).
    pub fn pair_states(&self, p: &ProblemInstance, psi: &[f64]) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.weight * psi[p.state_index(a.x, a.mode)])
            .sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn mass_per_mode(&self, modes: usize) -> Vec<f64> {
        let mut out = vec![0.0; modes];
        for a in &self.atoms {
            out[a.mode] += a.weight;
        }
        out
    }

    /// `⟨ν, B^λ 1⟩ = Σ ν_i(x,ξ) (λ + ρ_i(x))`; equals 1 by construction.
    pub fn normalization(&self, p: &ProblemInstance) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.weight * (self.lambda + p.row_sum(a.x, a.mode)))
            .sum()
    }
}

/// Probability-normalized companion of a [`DiscreteMeasure`], related by
/// `μ_i = (λ + ρ_i) ν_i`.
#[derive(Clone, Debug)]
pub struct ProbabilityMeasure {
    pub atoms: Vec<MeasureAtom>,
}

impl ProbabilityMeasure {
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn pair_cost(&self, p: &ProblemInstance, table: &[f64]) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.weight * table[p.cost_index(a.mode, a.control, a.x)])
            .sum()
    }
}

fn clip_weight(w: f64) -> Result<f64> {
    if w < -NEGATIVE_WEIGHT_TOL {
        Err(Error::Unsupported(format!(
            "negative occupancy weight {w:.3e} from the adjoint solve"
        )))
    } else {
        Ok(w.max(0.0))
    }
}

/// Occupancy measures for several anchors sharing one adjoint factorization
/// of the frozen optimal policy.
pub fn green_poisson_batch(
    p: &ProblemInstance,
    v: &ValueFunction,
    anchors: &[(usize, usize)],
) -> Result<Vec<DiscreteMeasure>> {
    let lambda = v.lambda;
    if !(lambda > 0.0) {
        return Err(Error::InvalidDiscount {
            requirement: "λ > 0",
            value: lambda,
        });
    }
    let s_total = p.num_states();
    if s_total > DENSE_MEASURE_LIMIT {
        return Err(Error::Unsupported(format!(
            "adjoint solve limited to {DENSE_MEASURE_LIMIT} states, instance has {s_total}"
        )));
    }
    if v.values.len() != s_total {
        return Err(Error::Shape {
            table: "value function",
            expected: s_total,
            got: v.values.len(),
        });
    }
    let np = p.grid().num_points();
    for &(z, k) in anchors {
        if z >= np || k >= p.modes() {
            return Err(Error::IndexOutOfRange(format!("anchor (z={z}, k={k})")));
        }
    }
    let op = DiscreteOperator::assemble(p, lambda, p.cost_table())?;
    let a_t = op.frozen_policy_matrix(&v.policy).transpose();
    let solver = DenseSolver::new(a_t).ok_or(Error::SingularSystem)?;

    let mut out = Vec::with_capacity(anchors.len());
    for &(z, k) in anchors {
        let mut e = DVector::zeros(s_total);
        e[p.state_index(z, k)] = 1.0;
        let nu = solver.solve(&e).ok_or(Error::SingularSystem)?;
        let mut atoms = Vec::new();
        for s in 0..s_total {
            let w = clip_weight(nu[s])?;
            if w > 0.0 {
                let (x, i) = p.state_parts(s);
                atoms.push(MeasureAtom {
                    x,
                    control: v.policy[s],
                    mode: i,
                    weight: w,
                });
            }
        }
        out.push(DiscreteMeasure {
            lambda,
            anchor: (z, k),
            atoms,
        });
    }
    Ok(out)
}

/// Discrete Green-Poisson measure at one anchor; solves the discounted
/// problem internally to obtain the optimal policy.
pub fn green_poisson(
    p: &ProblemInstance,
    lambda: f64,
    z: usize,
    k: usize,
) -> Result<DiscreteMeasure> {
    let v = solver::solve_discounted(p, lambda)?;
    Ok(green_poisson_batch(p, &v, &[(z, k)])?.pop().expect("one anchor"))
}

/// Adjoint characterization residual: for each test vector `ψ` computes
/// `Σ_i ⟨ν_i, (B^λ ψ)_i - g_i·D_h ψ_i⟩ - ψ_k(z)` with the same upwind stencil
/// as the operator at the measure's support controls, and returns the largest
/// magnitude.
pub fn adjoint_residual(
    p: &ProblemInstance,
    lambda: f64,
    nu: &DiscreteMeasure,
    psi_set: &[Vec<f64>],
) -> Result<f64> {
    if psi_set.is_empty() {
        return Err(Error::InvalidParam("need at least one test vector".into()));
    }
    let op = DiscreteOperator::assemble(p, lambda, p.cost_table())?;
    let s_total = p.num_states();
    let mut worst = 0.0f64;
    for psi in psi_set {
        if psi.len() != s_total {
            return Err(Error::Shape {
                table: "psi",
                expected: s_total,
                got: psi.len(),
            });
        }
        let mut acc = 0.0;
        for a in &nu.atoms {
            let s = p.state_index(a.x, a.mode);
            acc += a.weight * op.apply_row(s, a.control, psi);
        }
        let r = acc - psi[p.state_index(nu.anchor.0, nu.anchor.1)];
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// Residual of the undiscounted adjoint condition
/// `Σ_i ⟨μ_i, (B ψ)_i - g_i·D_h ψ_i⟩ = 0`, the defining property of a Mather
/// measure; no anchor term and no discount.
pub fn stationarity_residual(
    p: &ProblemInstance,
    mu: &ProbabilityMeasure,
    psi_set: &[Vec<f64>],
) -> Result<f64> {
    if psi_set.is_empty() {
        return Err(Error::InvalidParam("need at least one test vector".into()));
    }
    let op = DiscreteOperator::assemble(p, 0.0, p.cost_table())?;
    let s_total = p.num_states();
    let mut worst = 0.0f64;
    for psi in psi_set {
        if psi.len() != s_total {
            return Err(Error::Shape {
                table: "psi",
                expected: s_total,
                got: psi.len(),
            });
        }
        let mut acc = 0.0;
        for a in &mu.atoms {
            let s = p.state_index(a.x, a.mode);
            acc += a.weight * op.apply_row(s, a.control, psi);
        }
        worst = worst.max(acc.abs());
    }
    Ok(worst)
}

/// Rescales an occupancy measure to its probability companion,
/// `μ_i(x,ξ) = (λ + ρ_i(x)) ν_i(x,ξ)`.
pub fn to_probability(p: &ProblemInstance, nu: &DiscreteMeasure) -> ProbabilityMeasure {
    let atoms = nu
        .atoms
        .iter()
        .map(|a| MeasureAtom {
            weight: a.weight * (nu.lambda + p.row_sum(a.x, a.mode)),
            ..*a
        })
        .collect();
    ProbabilityMeasure { atoms }
}

/// Default test-vector suite: the constant 1, basis indicators on small
/// instances, and seeded pseudo-random vectors.
pub fn default_test_vectors(p: &ProblemInstance, seed: u64, random_count: usize) -> Vec<Vec<f64>> {
    let s_total = p.num_states();
    let mut out = vec![vec![1.0; s_total]];
    if s_total <= 32 {
        for s in 0..s_total {
            let mut e = vec![0.0; s_total];
            e[s] = 1.0;
            out.push(e);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_count {
        out.push((0..s_total).map(|_| rng.random_range(-1.0..1.0)).collect());
    }
    out
}

/// Whether a vanishing-discount limit carries full probability mass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasureKind {
    /// All row sums vanish: the limit is a probability measure.
    Probability,
    /// Some positive row sums: mass may escape; the limit is only a
    /// nonnegative (sub-probability) measure.
    SubProbability,
}

/// Result of following `λ ν^λ` along a decreasing discount schedule.
#[derive(Clone, Debug)]
pub struct MatherLimit {
    pub schedule: Vec<f64>,
    /// Final iterate `λ_last ν^{λ_last}` as the Mather-measure estimate.
    pub measure: ProbabilityMeasure,
    pub kind: MeasureKind,
    pub mass: f64,
    /// Total-variation distances between consecutive iterates.
    pub tv_distances: Vec<f64>,
    /// `⟨λ_j ν^{λ_j}, L⟩` per schedule entry (equals `λ_j v^{λ_j}_k(z)`).
    pub cost_pairings: Vec<f64>,
    /// Stationarity residual of the final iterate over the test suite.
    pub stationarity_residual: f64,
}

fn check_schedule(schedule: &[f64], min_len: usize) -> Result<()> {
    if schedule.len() < min_len {
        return Err(Error::Schedule(format!(
            "need at least {min_len} values, got {}",
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

fn tv_distance(a: &[MeasureAtom], b: &[MeasureAtom]) -> f64 {
    use std::collections::BTreeMap;
    let mut diff: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    for atom in a {
        *diff.entry((atom.x, atom.control, atom.mode)).or_insert(0.0) += atom.weight;
    }
    for atom in b {
        *diff.entry((atom.x, atom.control, atom.mode)).or_insert(0.0) -= atom.weight;
    }
    0.5 * diff.values().map(|w| w.abs()).sum::<f64>()
}

/// Follows the rescaled Green-Poisson measures `λ_j ν^{z,k,λ_j}` down the
/// schedule and returns the final iterate together with its convergence
/// diagnostics. Warm starts make the sweep cost a few solves.
pub fn mather_limit(
    p: &ProblemInstance,
    schedule: &[f64],
    z: usize,
    k: usize,
) -> Result<MatherLimit> {
    check_schedule(schedule, 4)?;
    let opts = SolverOptions::default();
    let mut warm: Option<Vec<f64>> = None;
    let mut iterates: Vec<ProbabilityMeasure> = Vec::with_capacity(schedule.len());
    let mut cost_pairings = Vec::with_capacity(schedule.len());
    for &lambda in schedule {
        let v = solver::solve_discounted_with(p, lambda, &opts, warm.as_deref())?;
        let nu = green_poisson_batch(p, &v, &[(z, k)])?.pop().expect("one anchor");
        let scaled = ProbabilityMeasure {
            atoms: nu
                .atoms
                .iter()
                .map(|a| MeasureAtom {
                    weight: lambda * a.weight,
                    ..*a
                })
                .collect(),
        };
        cost_pairings.push(scaled.pair_cost(p, p.cost_table()));
        iterates.push(scaled);
        warm = Some(v.values);
    }
    let tv_distances = iterates
        .windows(2)
        .map(|w| tv_distance(&w[0].atoms, &w[1].atoms))
        .collect();
    let measure = iterates.pop().expect("nonempty schedule");
    let np = p.grid().num_points();
    let rho_positive = (0..p.modes())
        .any(|i| (0..np).any(|x| p.row_sum(x, i) > 0.0));
    let kind = if rho_positive {
        MeasureKind::SubProbability
    } else {
        MeasureKind::Probability
    };
    let psi_set = default_test_vectors(p, 42, 100);
    let stationarity = stationarity_residual(p, &measure, &psi_set)?;
    Ok(MatherLimit {
        schedule: schedule.to_vec(),
        mass: measure.total_mass(),
        kind,
        tv_distances,
        cost_pairings,
        stationarity_residual: stationarity,
        measure,
    })
}

/// Exhaustive policy-enumeration oracle for tiny instances.
#[derive(Clone, Debug)]
pub struct OracleResult {
    /// Componentwise minimum over all stationary policies.
    pub values: Vec<f64>,
    pub anchor_value: f64,
    pub measure: DiscreteMeasure,
    pub policies_enumerated: usize,
    /// `min_σ ⟨ν_σ, L_σ⟩` over every policy's occupancy at the anchor; the
    /// minimizing property makes it equal to `anchor_value`.
    pub min_pairing_over_policies: f64,
}

/// Enumerates all stationary policies, solves each frozen-policy system
/// exactly, and returns the componentwise minimum together with the occupancy
/// measure of the optimal policy at `(z,k)`. Requires at most 12 states and
/// at most 10^6 policies.
pub fn brute_force_oracle(
    p: &ProblemInstance,
    lambda: f64,
    z: usize,
    k: usize,
) -> Result<OracleResult> {
    let s_total = p.num_states();
    if s_total > 12 {
        return Err(Error::OracleTooLarge(format!("{s_total} states > 12")));
    }
    let kk = p.num_controls();
    let policies = (kk as f64).powi(s_total as i32);
    if policies > 1e6 {
        return Err(Error::OracleTooLarge(format!(
            "{kk}^{s_total} policies exceed 10^6"
        )));
    }
    if z >= p.grid().num_points() || k >= p.modes() {
        return Err(Error::IndexOutOfRange(format!("anchor (z={z}, k={k})")));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidDiscount {
            requirement: "λ > 0",
            value: lambda,
        });
    }
    let op = DiscreteOperator::assemble(p, lambda, p.cost_table())?;
    let anchor_state = p.state_index(z, k);

    let mut best = vec![f64::INFINITY; s_total];
    let mut min_pairing = f64::INFINITY;
    let mut policy = vec![0usize; s_total];
    let mut count = 0usize;
    loop {
        count += 1;
        let a = op.frozen_policy_matrix(&policy);
        let b = op.frozen_policy_cost(&policy);
        let solver = DenseSolver::new(a).ok_or(Error::SingularSystem)?;
        let v = solver.solve(&b).ok_or(Error::SingularSystem)?;
        for s in 0..s_total {
            best[s] = best[s].min(v[s]);
        }
        // The policy's own occupancy pairing equals its value at the anchor.
        min_pairing = min_pairing.min(v[anchor_state]);

        // Odometer step over policies.
        let mut digit = 0;
        loop {
            if digit == s_total {
                break;
            }
            policy[digit] += 1;
            if policy[digit] < kk {
                break;
            }
            policy[digit] = 0;
            digit += 1;
        }
        if digit == s_total {
            break;
        }
    }

    // The minimum must itself be the Bellman fixed point.
    let residual = op.bellman_residual(&best);
    if residual > 1e-8 {
        return Err(Error::Unsupported(format!(
            "policy-enumeration minimum is not a fixed point (residual {residual:.3e})"
        )));
    }
    let (_, opt_policy) = op.bellman_apply(&best);
    let vf = ValueFunction {
        lambda,
        values: best.clone(),
        policy: opt_policy,
        residual,
        iterations: count,
    };
    let measure = green_poisson_batch(p, &vf, &[(z, k)])?.pop().expect("one anchor");
    Ok(OracleResult {
        anchor_value: best[anchor_state],
        values: best,
        measure,
        policies_enumerated: count,
        min_pairing_over_policies: min_pairing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{builtin_problem, load_problem, ProblemInstance};

    fn builtin(name: &str, params: serde_json::Value) -> ProblemInstance {
        builtin_problem(name, params.as_object().unwrap()).unwrap()
    }

    /// Seeded random tiny instance for oracle comparisons.
    fn random_tiny(seed: u64, n: usize, m: usize, k: usize) -> ProblemInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let np = n;
        let mut g = vec![0.0; np * k * m];
        let mut cost = vec![0.0; np * k * m];
        for v in g.iter_mut() {
            *v = rng.random_range(-2.0..2.0);
        }
        for v in cost.iter_mut() {
            *v = rng.random_range(-1.0..4.0);
        }
        let mut b = vec![0.0; np * m * m];
        if m > 1 {
            // Constant monotone coupling with zero row sums.
            let off = rng.random_range(0.25..1.5);
            for x in 0..np {
                for i in 0..m {
                    b[x + np * (i + m * i)] = off * (m - 1) as f64;
                    for j in 0..m {
                        if j != i {
                            b[x + np * (i + m * j)] = -off;
                        }
                    }
                }
            }
        }
        let doc = serde_json::json!({
            "grid": {"dim": 1, "N": n},
            "controls": {"K": k},
            "modes": m,
            "g": g, "L": cost, "B": b,
        });
        load_problem(&doc.to_string()).unwrap()
    }

    #[test]
    fn constcost_measure_masses_and_duality() {
        let p = builtin("constcost", serde_json::json!({}));
        let nu = green_poisson(&p, 1.0, 0, 0).unwrap();
        let masses = nu.mass_per_mode(2);
        assert!((masses[0] - 2.0 / 3.0).abs() < 1e-12, "{masses:?}");
        assert!((masses[1] - 1.0 / 3.0).abs() < 1e-12);
        let pairing = nu.pair_cost(&p, p.cost_table());
        assert!((pairing - 2.0).abs() < 1e-12);
        assert!((nu.normalization(&p) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn single_state_chain_has_mass_one_over_lambda() {
        let p = builtin(
            "constcost",
            serde_json::json!({"m": 1, "ell": [1.5], "N": 1}),
        );
        let lambda = 0.25;
        let nu = green_poisson(&p, lambda, 0, 0).unwrap();
        assert!((nu.total_mass() - 1.0 / lambda).abs() < 1e-12);
        let v = solver::solve_discounted(&p, lambda).unwrap();
        assert!((v.values[0] - 1.5 / lambda).abs() < 1e-10);
        assert!((nu.pair_cost(&p, p.cost_table()) - 1.5 / lambda).abs() < 1e-10);
    }

    #[test]
    fn adjoint_identity_on_constants_basis_and_random_vectors() {
        let p = builtin("switch2", serde_json::json!({"N": 12}));
        let lambda = 0.5;
        let v = solver::solve_discounted(&p, lambda).unwrap();
        let nu = green_poisson_batch(&p, &v, &[(3, 1)]).unwrap().pop().unwrap();
        // psi = 1 reproduces the normalization.
        let ones = vec![vec![1.0; p.num_states()]];
        let r = adjoint_residual(&p, lambda, &nu, &ones).unwrap();
        assert!(r < 1e-12, "normalization residual {r}");
        let psi = default_test_vectors(&p, 42, 100);
        let r = adjoint_residual(&p, lambda, &nu, &psi).unwrap();
        assert!(r < 1e-8, "adjoint residual {r}");
    }

    #[test]
    fn probability_rescaling_and_inverse() {
        let p = builtin(
            "decoupled_diag",
            serde_json::json!({"m": 1, "b": [2.0], "N": 10}),
        );
        let lambda = 1.0;
        let nu = green_poisson(&p, lambda, 0, 0).unwrap();
        let mu = to_probability(&p, &nu);
        assert!((mu.total_mass() - 1.0).abs() < 1e-12);
        // rho = 2 everywhere, so mu = 3 nu atom by atom.
        for (a, b) in nu.atoms.iter().zip(&mu.atoms) {
            assert!((b.weight - 3.0 * a.weight).abs() < 1e-14);
            let back = b.weight / (lambda + p.row_sum(b.x, b.mode));
            assert!((back - a.weight).abs() < 1e-14);
        }
    }

    #[test]
    fn tiny_instance_matches_the_enumeration_oracle() {
        for seed in [1, 2, 3] {
            let p = random_tiny(seed, 3, 1, 2);
            let lambda = 1.0;
            let oracle = brute_force_oracle(&p, lambda, 1, 0).unwrap();
            assert_eq!(oracle.policies_enumerated, 8);
            let v = solver::solve_discounted(&p, lambda).unwrap();
            for s in 0..p.num_states() {
                assert!(
                    (v.values[s] - oracle.values[s]).abs() < 1e-9,
                    "seed {seed}: solver and oracle disagree at state {s}"
                );
            }
            let nu = green_poisson_batch(&p, &v, &[(1, 0)]).unwrap().pop().unwrap();
            let gap = (nu.pair_cost(&p, p.cost_table()) - oracle.anchor_value).abs();
            assert!(gap < 1e-9);
            // Minimizing property against every other policy's occupancy.
            assert!(oracle.min_pairing_over_policies >= oracle.anchor_value - 1e-9);
        }
    }

    #[test]
    fn single_control_oracle_is_one_linear_solve() {
        let p = random_tiny(9, 4, 1, 1);
        let oracle = brute_force_oracle(&p, 0.7, 0, 0).unwrap();
        assert_eq!(oracle.policies_enumerated, 1);
        let v = solver::solve_discounted(&p, 0.7).unwrap();
        for s in 0..p.num_states() {
            assert!((v.values[s] - oracle.values[s]).abs() < 1e-10);
        }
    }

    #[test]
    fn two_mode_oracle_duality_is_exact() {
        let p = random_tiny(5, 2, 2, 2);
        let oracle = brute_force_oracle(&p, 1.0, 0, 1).unwrap();
        assert_eq!(oracle.policies_enumerated, 16);
        let pairing = oracle.measure.pair_cost(&p, p.cost_table());
        assert!((pairing - oracle.anchor_value).abs() < 1e-10);
    }

    #[test]
    fn oracle_rejects_oversized_instances() {
        let p = builtin("eikonal1d", serde_json::json!({"N": 50}));
        assert!(matches!(
            brute_force_oracle(&p, 1.0, 0, 0),
            Err(Error::OracleTooLarge(_))
        ));
    }

    #[test]
    fn mather_iterates_have_unit_mass_when_row_sums_vanish() {
        let p = builtin(
            "eikonal1d",
            serde_json::json!({"N": 40, "normalize": true}),
        );
        let schedule = [0.1, 0.05, 0.025, 0.0125, 0.00625];
        let limit = mather_limit(&p, &schedule, 0, 0).unwrap();
        assert_eq!(limit.kind, MeasureKind::Probability);
        assert!((limit.mass - 1.0).abs() < 1e-10, "mass {}", limit.mass);
        // lambda v is small for the normalized cost, and shrinking.
        let first = limit.cost_pairings.first().unwrap().abs();
        let last = limit.cost_pairings.last().unwrap().abs();
        assert!(last < first);
        assert!(limit.stationarity_residual <= 10.0 * schedule.last().unwrap());
    }

    #[test]
    fn zero_cost_mather_pairing_is_trivially_zero() {
        let p = builtin("constcost", serde_json::json!({"ell": [0.0, 0.0]}));
        let schedule = [0.2, 0.1, 0.05, 0.025];
        let limit = mather_limit(&p, &schedule, 0, 1).unwrap();
        for c in &limit.cost_pairings {
            assert!(c.abs() < 1e-12);
        }
    }

    #[test]
    fn schedules_are_validated() {
        let p = builtin("constcost", serde_json::json!({}));
        assert!(matches!(
            mather_limit(&p, &[0.1, 0.05, 0.025], 0, 0),
            Err(Error::Schedule(_))
        ));
        assert!(matches!(
            mather_limit(&p, &[0.1, 0.2, 0.05, 0.025], 0, 0),
            Err(Error::Schedule(_))
        ));
    }
}
