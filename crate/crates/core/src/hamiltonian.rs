//! Bellman-form Hamiltonians `H_i(x,p) = max_ξ [-g_i(x,ξ)·p - L_i(x,ξ)]`
//! over the finite control set, and the convex-hull coercivity certificate.

use crate::error::Error;
use crate::problem::ProblemInstance;
use crate::Result;

/// Value of the finite max together with the control attaining it; ties are
/// broken by the lowest control index, so evaluation is deterministic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianEval {
    pub value: f64,
    pub argmax_control: usize,
}

fn check_point(p: &ProblemInstance, mode: usize, x: usize, momentum: &[f64]) -> Result<()> {
    if mode >= p.modes() {
        return Err(Error::IndexOutOfRange(format!("mode {mode}")));
    }
    if x >= p.grid().num_points() {
        return Err(Error::IndexOutOfRange(format!("grid point {x}")));
    }
    if momentum.len() != p.grid().dim() {
        return Err(Error::IndexOutOfRange(format!(
            "momentum has {} components, expected {}",
            momentum.len(),
            p.grid().dim()
        )));
    }
    if momentum.iter().any(|m| !m.is_finite()) {
        return Err(Error::InvalidParam("momentum must be finite".into()));
    }
    Ok(())
}

/// Evaluates `H_i(x, p)` with the instance's own running cost.
pub fn eval_hamiltonian(
    p: &ProblemInstance,
    mode: usize,
    x: usize,
    momentum: &[f64],
) -> Result<HamiltonianEval> {
    eval_with(p, p.cost_table(), mode, x, momentum)
}

/// Evaluates the modified Hamiltonian `H_{φ,i}(x,p)` where the table `φ`
/// replaces the running cost; `φ` must share the cost table's shape.
pub fn eval_hamiltonian_with_cost(
    p: &ProblemInstance,
    phi: &[f64],
    mode: usize,
    x: usize,
    momentum: &[f64],
) -> Result<HamiltonianEval> {
    if phi.len() != p.cost_table().len() {
        return Err(Error::Shape {
            table: "phi",
            expected: p.cost_table().len(),
            got: phi.len(),
        });
    }
    eval_with(p, phi, mode, x, momentum)
}

fn eval_with(
    p: &ProblemInstance,
    cost: &[f64],
    mode: usize,
    x: usize,
    momentum: &[f64],
) -> Result<HamiltonianEval> {
    check_point(p, mode, x, momentum)?;
    let dim = p.grid().dim();
    let mut best = f64::NEG_INFINITY;
    let mut best_control = 0;
    for xi in 0..p.num_controls() {
        let mut advect = 0.0;
        for d in 0..dim {
            advect -= p.drift_component(mode, xi, x, d) * momentum[d];
        }
        let value = advect - cost[p.cost_index(mode, xi, x)];
        if value > best {
            best = value;
            best_control = xi;
        }
    }
    Ok(HamiltonianEval {
        value: best,
        argmax_control: best_control,
    })
}

/// Unit directions used to sample the support function of the control
/// vectogram: the two signs in 1D, `count` equispaced angles in 2D.
pub fn unit_directions(dim: usize, count: usize) -> Vec<[f64; 2]> {
    match dim {
        1 => vec![[1.0, 0.0], [-1.0, 0.0]],
        _ => (0..count)
            .map(|j| {
                let phi = 2.0 * std::f64::consts::PI * j as f64 / count as f64;
                [phi.cos(), phi.sin()]
            })
            .collect(),
    }
}

pub fn default_directions(dim: usize) -> Vec<[f64; 2]> {
    unit_directions(dim, 64)
}

/// Sampled coercivity margin at one (grid point, mode):
/// `min_θ max_ξ g_i(x,ξ)·θ` over the supplied unit directions.
///
/// A positive return certifies, up to direction sampling, that the convex
/// hull of the vectogram contains a ball of that radius around the origin;
/// a nonpositive return exhibits a direction in which coercivity fails. The
/// certificate is exact in 1D with both signs sampled.
pub fn coercivity_margin(
    p: &ProblemInstance,
    mode: usize,
    x: usize,
    directions: &[[f64; 2]],
) -> Result<f64> {
    let dim = p.grid().dim();
    let needed = if dim == 1 { 2 } else { 16 };
    if directions.len() < needed {
        return Err(Error::InvalidParam(format!(
            "need at least {needed} directions in dimension {dim}, got {}",
            directions.len()
        )));
    }
    if mode >= p.modes() || x >= p.grid().num_points() {
        return Err(Error::IndexOutOfRange(format!("(x={x}, mode={mode})")));
    }
    let mut margin = f64::INFINITY;
    for theta in directions {
        let mut support = f64::NEG_INFINITY;
        for xi in 0..p.num_controls() {
            let mut dot = 0.0;
            for d in 0..dim {
                dot += p.drift_component(mode, xi, x, d) * theta[d];
            }
            support = support.max(dot);
        }
        margin = margin.min(support);
    }
    Ok(margin)
}
