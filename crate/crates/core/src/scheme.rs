//! Monotone upwind discretization of the discounted system.
//!
//! For every state `s = (x, i)` and control `ξ` the row
//!
//! ```text
//! A_ξ v (s) = d(s,ξ) v(s) - Σ_{s'} w(s,ξ,s') v(s')
//! ```
//!
//! discretizes `λ v_i + (B v)_i - g_i·Dv_i` with one-sided differences taken
//! from the direction information flows, so all neighbor weights `w` are
//! nonnegative and the scheme is monotone. The diagonal is
//! `d = λ + b_ii(x) + Σ_d |g_d|/h` and the row sum of weights is exactly
//! `d - λ - ρ_i(x)`, which makes the Bellman operator
//!
//! ```text
//! (T v)(s) = min_ξ [ (Σ w(s,ξ,s') v(s') + L_i(x,ξ)) / d(s,ξ) ]
//! ```
//!
//! a sup-norm contraction for positive discounts. The weights `w/d` are the
//! transition probabilities of a killed controlled Markov chain, which is
//! what makes the occupancy-measure duality exact on the grid.

use crate::error::Error;
use crate::problem::ProblemInstance;
use crate::Result;
use nalgebra::{DMatrix, DVector};

/// Assembled upwind operator for a fixed discount.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    lambda: f64,
    dim: usize,
    npoints: usize,
    modes: usize,
    num_controls: usize,
    /// d(s,ξ), laid out `ξ + K*s`.
    diag: Vec<f64>,
    /// Upwind weight toward `x - h e_d` / `x + h e_d`, laid out `d + dim*(ξ + K*s)`.
    weight_minus: Vec<f64>,
    weight_plus: Vec<f64>,
    /// Source term per `ξ + K*s`.
    cost: Vec<f64>,
    /// Copy of the coupling table, `x + np*(i + m*j)`.
    coupling: Vec<f64>,
    /// Wrapped neighbor indices per `d + dim*x`.
    nbr_minus: Vec<usize>,
    nbr_plus: Vec<usize>,
}

impl DiscreteOperator {
    /// Internal assembly; `lambda >= 0` is allowed so residual checks can run
    /// on the undiscounted operator.
    pub(crate) fn assemble(
        p: &ProblemInstance,
        lambda: f64,
        cost_table: &[f64],
    ) -> Result<DiscreteOperator> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidDiscount {
                requirement: "λ >= 0",
                value: lambda,
            });
        }
        let np = p.grid().num_points();
        for x in 0..np {
            if p.coupling_at(x).check_monotone().is_err() {
                return Err(Error::NonMonotone { witness_x: Some(x) });
            }
        }
        if cost_table.len() != p.cost_table().len() {
            return Err(Error::Shape {
                table: "cost",
                expected: p.cost_table().len(),
                got: cost_table.len(),
            });
        }

        let dim = p.grid().dim();
        let m = p.modes();
        let k = p.num_controls();
        let h = p.grid().spacing();
        let s_total = np * m;

        let mut nbr_minus = vec![0usize; np * dim];
        let mut nbr_plus = vec![0usize; np * dim];
        for x in 0..np {
            for d in 0..dim {
                nbr_minus[d + dim * x] = p.grid().neighbor(x, d, -1);
                nbr_plus[d + dim * x] = p.grid().neighbor(x, d, 1);
            }
        }

        let mut diag = vec![0.0; s_total * k];
        let mut weight_minus = vec![0.0; s_total * k * dim];
        let mut weight_plus = vec![0.0; s_total * k * dim];
        let mut cost = vec![0.0; s_total * k];
        for i in 0..m {
            for x in 0..np {
                let s = x + np * i;
                let b_ii = p.coupling_entry(x, i, i);
                for xi in 0..k {
                    let sc = xi + k * s;
                    let mut speed = 0.0;
                    for d in 0..dim {
                        let g = p.drift_component(i, xi, x, d);
                        // -g dv: one-sided difference from upstream.
                        weight_minus[d + dim * sc] = (-g).max(0.0) / h;
                        weight_plus[d + dim * sc] = g.max(0.0) / h;
                        speed += g.abs() / h;
                    }
                    diag[sc] = lambda + b_ii + speed;
                    cost[sc] = cost_table[p.cost_index(i, xi, x)];
                }
            }
        }

        Ok(DiscreteOperator {
            lambda,
            dim,
            npoints: np,
            modes: m,
            num_controls: k,
            diag,
            weight_minus,
            weight_plus,
            cost,
            coupling: p.coupling_table().to_vec(),
            nbr_minus,
            nbr_plus,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn num_states(&self) -> usize {
        self.npoints * self.modes
    }

    pub fn num_controls(&self) -> usize {
        self.num_controls
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn num_points(&self) -> usize {
        self.npoints
    }

    #[inline]
    fn coupling_entry(&self, x: usize, i: usize, j: usize) -> f64 {
        self.coupling[x + self.npoints * (i + self.modes * j)]
    }

    #[inline]
    pub fn diagonal(&self, s: usize, control: usize) -> f64 {
        self.diag[control + self.num_controls * s]
    }

    pub fn source(&self, s: usize, control: usize) -> f64 {
        self.cost[control + self.num_controls * s]
    }

    /// Off-state mass `Σ_{s'} w(s,ξ,s') v(s')`.
    #[inline]
    fn neighbor_mass(&self, s: usize, control: usize, v: &[f64]) -> f64 {
        let (x, i) = (s % self.npoints, s / self.npoints);
        let sc = control + self.num_controls * s;
        let mut acc = 0.0;
        for d in 0..self.dim {
            let wm = self.weight_minus[d + self.dim * sc];
            let wp = self.weight_plus[d + self.dim * sc];
            acc += wm * v[self.nbr_minus[d + self.dim * x] + self.npoints * i];
            acc += wp * v[self.nbr_plus[d + self.dim * x] + self.npoints * i];
        }
        for j in 0..self.modes {
            if j != i {
                acc += (-self.coupling_entry(x, i, j)) * v[x + self.npoints * j];
            }
        }
        acc
    }

    /// Matrix part of one row: `A_ξ v (s) = d(s,ξ) v(s) - Σ w v(s')`.
    pub fn apply_row(&self, s: usize, control: usize, v: &[f64]) -> f64 {
        self.diagonal(s, control) * v[s] - self.neighbor_mass(s, control, v)
    }

    /// Residual of one row against its source, `A_ξ v (s) - L(s,ξ)`.
    pub fn row_residual(&self, s: usize, control: usize, v: &[f64]) -> f64 {
        self.apply_row(s, control, v) - self.source(s, control)
    }

    /// One Bellman application, returning `T v` and the minimizing controls.
    pub fn bellman_apply(&self, v: &[f64]) -> (Vec<f64>, Vec<usize>) {
        let s_total = self.num_states();
        let mut out = vec![0.0; s_total];
        let mut policy = vec![0usize; s_total];
        self.bellman_apply_range(v, 0..s_total, &mut out, &mut policy);
        (out, policy)
    }

    /// Bellman application restricted to a state range, writing into slices of
    /// the same length; used for deterministic Jacobi parallelism.
    pub fn bellman_apply_range(
        &self,
        v: &[f64],
        range: std::ops::Range<usize>,
        out: &mut [f64],
        policy: &mut [usize],
    ) {
        debug_assert_eq!(out.len(), range.len());
        for (slot, s) in range.clone().enumerate() {
            let (value, control) = self.best_update(s, v);
            out[slot] = value;
            policy[slot] = control;
        }
    }

    #[inline]
    fn best_update(&self, s: usize, v: &[f64]) -> (f64, usize) {
        let mut best = f64::INFINITY;
        let mut best_control = 0;
        for xi in 0..self.num_controls {
            let d = self.diagonal(s, xi);
            debug_assert!(d > 0.0, "degenerate diagonal in Bellman update");
            let value = (self.neighbor_mass(s, xi, v) + self.source(s, xi)) / d;
            if value < best {
                best = value;
                best_control = xi;
            }
        }
        (best, best_control)
    }

    /// In-place Gauss-Seidel sweep; returns the largest update.
    pub fn gauss_seidel_sweep(&self, v: &mut [f64], forward: bool) -> f64 {
        let s_total = self.num_states();
        let mut max_update = 0.0f64;
        let mut step = |s: usize, v: &mut [f64]| {
            let (value, _) = self.best_update(s, v);
            max_update = max_update.max((value - v[s]).abs());
            v[s] = value;
        };
        if forward {
            for s in 0..s_total {
                step(s, v);
            }
        } else {
            for s in (0..s_total).rev() {
                step(s, v);
            }
        }
        max_update
    }

    /// Sup-norm Bellman residual `max_s |(T v)(s) - v(s)|`.
    pub fn bellman_residual(&self, v: &[f64]) -> f64 {
        let (tv, _) = self.bellman_apply(v);
        tv.iter()
            .zip(v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Upper bound on the contraction factor, `max_{s,ξ} (Σ w)/d`; strictly
    /// below 1 whenever the discount is positive.
    pub fn contraction_factor(&self) -> f64 {
        let ones = vec![1.0; self.num_states()];
        let mut kappa = 0.0f64;
        for s in 0..self.num_states() {
            for xi in 0..self.num_controls {
                kappa = kappa.max(self.neighbor_mass(s, xi, &ones) / self.diagonal(s, xi));
            }
        }
        kappa
    }

    /// Dense matrix of the operator with the policy frozen.
    pub fn frozen_policy_matrix(&self, policy: &[usize]) -> DMatrix<f64> {
        let s_total = self.num_states();
        assert_eq!(policy.len(), s_total);
        let mut a = DMatrix::zeros(s_total, s_total);
        for s in 0..s_total {
            let xi = policy[s];
            let (x, i) = (s % self.npoints, s / self.npoints);
            let sc = xi + self.num_controls * s;
            a[(s, s)] += self.diagonal(s, xi);
            for d in 0..self.dim {
                let sm = self.nbr_minus[d + self.dim * x] + self.npoints * i;
                let sp = self.nbr_plus[d + self.dim * x] + self.npoints * i;
                a[(s, sm)] -= self.weight_minus[d + self.dim * sc];
                a[(s, sp)] -= self.weight_plus[d + self.dim * sc];
            }
            for j in 0..self.modes {
                if j != i {
                    a[(s, x + self.npoints * j)] -= -self.coupling_entry(x, i, j);
                }
            }
        }
        a
    }

    /// Source vector with the policy frozen.
    pub fn frozen_policy_cost(&self, policy: &[usize]) -> DVector<f64> {
        DVector::from_iterator(
            self.num_states(),
            (0..self.num_states()).map(|s| self.source(s, policy[s])),
        )
    }
}

/// Builds the upwind operator of the discounted system; requires a positive
/// discount and pointwise monotone coupling.
pub fn build_operator(p: &ProblemInstance, lambda: f64) -> Result<DiscreteOperator> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidDiscount {
            requirement: "λ > 0",
            value: lambda,
        });
    }
    DiscreteOperator::assemble(p, lambda, p.cost_table())
}

/// Outcome of the grid subsolution test for the pair `(φ, u)`.
#[derive(Clone, Debug)]
pub struct SubsolutionReport {
    pub max_residual: f64,
    /// Worst triple (grid point, control, mode).
    pub worst: (usize, usize, usize),
    pub pass: bool,
    pub tol: f64,
}

/// Grid counterpart of membership in the subsolution cone: for every
/// `(x, ξ, i)` the residual `(B^λ u)_i(x) - [g_i·D_h u_i]_ξ - φ_i(x,ξ)` must
/// stay below `tol`. The upwind direction is fixed by the sign of `g`, so the
/// residual is affine in `(φ, u)` and nonnegative combinations of passing
/// pairs pass.
pub fn check_subsolution(
    p: &ProblemInstance,
    lambda: f64,
    phi: &[f64],
    u: &[f64],
    tol: f64,
) -> Result<SubsolutionReport> {
    let op = DiscreteOperator::assemble(p, lambda, phi)?;
    if u.len() != op.num_states() {
        return Err(Error::Shape {
            table: "u",
            expected: op.num_states(),
            got: u.len(),
        });
    }
    let mut max_residual = f64::NEG_INFINITY;
    let mut worst = (0, 0, 0);
    for s in 0..op.num_states() {
        for xi in 0..op.num_controls() {
            let r = op.row_residual(s, xi, u);
            if r > max_residual {
                max_residual = r;
                let (x, i) = (s % op.num_points(), s / op.num_points());
                worst = (x, xi, i);
            }
        }
    }
    Ok(SubsolutionReport {
        max_residual,
        worst,
        pass: max_residual <= tol,
        tol,
    })
}

/// Outcome of the mirrored supersolution test.
#[derive(Clone, Debug)]
pub struct SupersolutionReport {
    pub min_residual: f64,
    /// Worst state (grid point, mode).
    pub worst: (usize, usize),
    pub pass: bool,
    pub tol: f64,
}

/// Mirrored test: `w` is a grid supersolution when at every state some control
/// achieves a nonnegative residual, i.e. `min_s max_ξ [A_ξ w - φ] >= -tol`.
/// Equivalently `w >= T w` up to `tol` for the min-form Bellman operator.
pub fn check_supersolution(
    p: &ProblemInstance,
    lambda: f64,
    phi: &[f64],
    w: &[f64],
    tol: f64,
) -> Result<SupersolutionReport> {
    let op = DiscreteOperator::assemble(p, lambda, phi)?;
    if w.len() != op.num_states() {
        return Err(Error::Shape {
            table: "w",
            expected: op.num_states(),
            got: w.len(),
        });
    }
    let mut min_residual = f64::INFINITY;
    let mut worst = (0, 0);
    for s in 0..op.num_states() {
        let mut best = f64::NEG_INFINITY;
        for xi in 0..op.num_controls() {
            best = best.max(op.row_residual(s, xi, w));
        }
        if best < min_residual {
            min_residual = best;
            worst = (s % op.num_points(), s / op.num_points());
        }
    }
    Ok(SupersolutionReport {
        min_residual,
        worst,
        pass: min_residual >= -tol,
        tol,
    })
}
