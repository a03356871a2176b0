//! Problem data: periodic grid, finite control set, drift/cost/coupling tables,
//! the document format used to exchange instances, and builtin benchmarks.

use crate::error::Error;
use crate::hamiltonian;
use crate::matrix::{CouplingMatrix, MonotoneWitness};
use crate::Result;
use serde::{Deserialize, Serialize};

/// Uniform periodic grid on the flat torus with period 1 per axis.
///
/// Indices wrap modulo `n` on every axis, and the spacing is exactly `1/n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim == 0 || dim > 2 {
            return Err(Error::InvalidParam(format!(
                "grid dimension must be 1 or 2, got {dim}"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidParam("points per axis must be positive".into()));
        }
        Ok(TorusGrid { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    /// Mesh size `h = 1/n`.
    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Total number of grid points, `n^dim`.
    pub fn num_points(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Per-axis integer coordinates of a flat index (axis 0 varies fastest).
    pub fn coords(&self, idx: usize) -> [usize; 2] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx % self.n, idx / self.n],
        }
    }

    /// Physical position in `[0,1)^dim`.
    pub fn position(&self, idx: usize) -> [f64; 2] {
        let c = self.coords(idx);
        let h = self.spacing();
        [c[0] as f64 * h, c[1] as f64 * h]
    }

    /// Neighbor of `idx` along `axis`, `step` grid cells away, wrapping around.
    pub fn neighbor(&self, idx: usize, axis: usize, step: isize) -> usize {
        debug_assert!(axis < self.dim);
        let n = self.n as isize;
        let wrap = |c: usize| -> usize { (((c as isize + step) % n + n) % n) as usize };
        match self.dim {
            1 => wrap(idx),
            _ => {
                let (x0, x1) = (idx % self.n, idx / self.n);
                if axis == 0 {
                    wrap(x0) + self.n * x1
                } else {
                    x0 + self.n * wrap(x1)
                }
            }
        }
    }
}

/// Finite ordered control set. Indices are stable and used for tie-breaking.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSet {
    labels: Vec<f64>,
}

impl ControlSet {
    pub fn new(labels: Vec<f64>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidParam("control set must be nonempty".into()));
        }
        Ok(ControlSet { labels })
    }

    /// `count` anonymous controls labeled by their index.
    pub fn indexed(count: usize) -> Result<Self> {
        Self::new((0..count).map(|j| j as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, j: usize) -> f64 {
        self.labels[j]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }
}

/// A fully tabulated instance of the weakly coupled system.
///
/// Tables are dense over grid x controls x modes and immutable after
/// construction; solvers only read them.
///
/// Flat layouts (axis 0 of the grid varies fastest in `x`):
/// * cost `L_i(x,ξ)`: index `x + np*(ξ + K*i)`;
/// * drift `g_i(x,ξ)` component `d`: index `x + np*(ξ + K*(i + m*d))`;
/// * coupling `b_ij(x)`: index `x + np*(i + m*j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance {
    grid: TorusGrid,
    controls: ControlSet,
    modes: usize,
    drift: Vec<f64>,
    cost: Vec<f64>,
    coupling: Vec<f64>,
}

impl ProblemInstance {
    pub fn new(
        grid: TorusGrid,
        controls: ControlSet,
        modes: usize,
        drift: Vec<f64>,
        cost: Vec<f64>,
        coupling: Vec<f64>,
    ) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidParam("mode count must be at least 1".into()));
        }
        let np = grid.num_points();
        let k = controls.len();
        let m = modes;
        let expect = |table: &'static str, len: usize, expected: usize| -> Result<()> {
            if len != expected {
                Err(Error::Shape {
                    table,
                    expected,
                    got: len,
                })
            } else {
                Ok(())
            }
        };
        expect("L", cost.len(), np * k * m)?;
        expect("g", drift.len(), np * k * m * grid.dim())?;
        expect("B", coupling.len(), np * m * m)?;

        let p = ProblemInstance {
            grid,
            controls,
            modes,
            drift,
            cost,
            coupling,
        };
        p.check_finite()?;
        Ok(p)
    }

    fn check_finite(&self) -> Result<()> {
        let np = self.grid.num_points();
        let k = self.controls.len();
        for i in 0..self.modes {
            for xi in 0..k {
                for x in 0..np {
                    if !self.running_cost(i, xi, x).is_finite() {
                        return Err(Error::NonFinite {
                            table: "cost",
                            x,
                            control: xi,
                            mode: i,
                        });
                    }
                    for d in 0..self.grid.dim() {
                        if !self.drift_component(i, xi, x, d).is_finite() {
                            return Err(Error::NonFinite {
                                table: "drift",
                                x,
                                control: xi,
                                mode: i,
                            });
                        }
                    }
                }
            }
        }
        for x in 0..np {
            for i in 0..self.modes {
                for j in 0..self.modes {
                    if !self.coupling_entry(x, i, j).is_finite() {
                        return Err(Error::NonFinite {
                            table: "coupling",
                            x,
                            control: j,
                            mode: i,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn controls(&self) -> &ControlSet {
        &self.controls
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn num_controls(&self) -> usize {
        self.controls.len()
    }

    /// Number of discrete states, grid points x modes.
    pub fn num_states(&self) -> usize {
        self.grid.num_points() * self.modes
    }

    /// Flat state index of (grid point, mode).
    pub fn state_index(&self, x: usize, mode: usize) -> usize {
        x + self.grid.num_points() * mode
    }

    /// Inverse of [`state_index`](Self::state_index).
    pub fn state_parts(&self, s: usize) -> (usize, usize) {
        let np = self.grid.num_points();
        (s % np, s / np)
    }

    #[inline]
    pub fn cost_index(&self, mode: usize, control: usize, x: usize) -> usize {
        x + self.grid.num_points() * (control + self.controls.len() * mode)
    }

    #[inline]
    pub fn running_cost(&self, mode: usize, control: usize, x: usize) -> f64 {
        self.cost[self.cost_index(mode, control, x)]
    }

    #[inline]
    pub fn drift_component(&self, mode: usize, control: usize, x: usize, d: usize) -> f64 {
        let np = self.grid.num_points();
        let k = self.controls.len();
        self.drift[x + np * (control + k * (mode + self.modes * d))]
    }

    #[inline]
    pub fn coupling_entry(&self, x: usize, i: usize, j: usize) -> f64 {
        let np = self.grid.num_points();
        self.coupling[x + np * (i + self.modes * j)]
    }

    /// Row sum `ρ_i(x) = Σ_j b_ij(x)`.
    pub fn row_sum(&self, x: usize, i: usize) -> f64 {
        (0..self.modes).map(|j| self.coupling_entry(x, i, j)).sum()
    }

    /// Coupling matrix at one grid point.
    pub fn coupling_at(&self, x: usize) -> CouplingMatrix {
        let mut entries = vec![0.0; self.modes * self.modes];
        for i in 0..self.modes {
            for j in 0..self.modes {
                entries[i * self.modes + j] = self.coupling_entry(x, i, j);
            }
        }
        CouplingMatrix::from_rows(self.modes, entries)
    }

    /// The coupling matrix if it is the same at every grid point (bitwise).
    pub fn constant_coupling(&self) -> Option<CouplingMatrix> {
        let b0 = self.coupling_at(0);
        for x in 1..self.grid.num_points() {
            for i in 0..self.modes {
                for j in 0..self.modes {
                    if self.coupling_entry(x, i, j) != b0.entry(i, j) {
                        return None;
                    }
                }
            }
        }
        Some(b0)
    }

    pub fn cost_table(&self) -> &[f64] {
        &self.cost
    }

    pub fn drift_table(&self) -> &[f64] {
        &self.drift
    }

    pub fn coupling_table(&self) -> &[f64] {
        &self.coupling
    }

    /// Same instance with the cost table replaced.
    pub fn with_cost_table(&self, cost: Vec<f64>) -> Result<Self> {
        ProblemInstance::new(
            self.grid,
            self.controls.clone(),
            self.modes,
            self.drift.clone(),
            cost,
            self.coupling.clone(),
        )
    }

    /// Same instance with every coupling matrix replaced by a constant one.
    pub fn with_constant_coupling(&self, b: &CouplingMatrix) -> Result<Self> {
        if b.order() != self.modes {
            return Err(Error::InvalidParam(format!(
                "coupling order {} does not match mode count {}",
                b.order(),
                self.modes
            )));
        }
        let np = self.grid.num_points();
        let mut coupling = vec![0.0; np * self.modes * self.modes];
        for j in 0..self.modes {
            for i in 0..self.modes {
                let v = b.entry(i, j);
                for x in 0..np {
                    coupling[x + np * (i + self.modes * j)] = v;
                }
            }
        }
        ProblemInstance::new(
            self.grid,
            self.controls.clone(),
            self.modes,
            self.drift.clone(),
            self.cost.clone(),
            coupling,
        )
    }

    /// Restriction to a subset of modes, with the coupling replaced by `b`.
    ///
    /// Used by the ergodic solver to carve diagonal blocks out of the normal
    /// form; `selected` lists original mode indices in their new order.
    pub fn mode_subproblem(&self, selected: &[usize], b: &CouplingMatrix) -> Result<Self> {
        if b.order() != selected.len() {
            return Err(Error::InvalidParam(
                "block coupling order does not match selected mode count".into(),
            ));
        }
        for &i in selected {
            if i >= self.modes {
                return Err(Error::IndexOutOfRange(format!("mode {i}")));
            }
        }
        let np = self.grid.num_points();
        let k = self.controls.len();
        let m_new = selected.len();
        let mut drift = vec![0.0; np * k * m_new * self.grid.dim()];
        let mut cost = vec![0.0; np * k * m_new];
        for (inew, &iold) in selected.iter().enumerate() {
            for xi in 0..k {
                for x in 0..np {
                    cost[x + np * (xi + k * inew)] = self.running_cost(iold, xi, x);
                    for d in 0..self.grid.dim() {
                        drift[x + np * (xi + k * (inew + m_new * d))] =
                            self.drift_component(iold, xi, x, d);
                    }
                }
            }
        }
        let sub = ProblemInstance::new(
            self.grid,
            self.controls.clone(),
            m_new,
            drift,
            cost,
            vec![0.0; np * m_new * m_new],
        )?;
        sub.with_constant_coupling(b)
    }
}

// ---------------------------------------------------------------------------
// Document format
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct GridDoc {
    dim: usize,
    #[serde(rename = "N")]
    n: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ControlsDoc {
    #[serde(rename = "K")]
    k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProblemDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<serde_json::Map<String, serde_json::Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<GridDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    controls: Option<ControlsDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    modes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    g: Option<Vec<f64>>,
    #[serde(default, rename = "L", skip_serializing_if = "Option::is_none")]
    cost: Option<Vec<f64>>,
    #[serde(default, rename = "B", skip_serializing_if = "Option::is_none")]
    coupling: Option<Vec<f64>>,
    /// Extra top-level keys are treated as builtin parameters.
    #[serde(flatten)]
    extra: serde_json::Map<String, serde_json::Value>,
}

/// Parses a problem document (JSON). The document either references a builtin
/// (`{"builtin": "eikonal1d", "N": 200, "K": 2}`, parameters inline or under
/// `"params"`) or tabulates the instance with `grid`, `controls`, `modes`,
/// `g`, `L`, `B`.
pub fn load_problem(source: &str) -> Result<ProblemInstance> {
    let doc: ProblemDoc =
        serde_json::from_str(source).map_err(|e| Error::Parse(e.to_string()))?;
    if let Some(name) = &doc.builtin {
        let mut params = doc.params.clone().unwrap_or_default();
        for (key, value) in &doc.extra {
            params.entry(key.clone()).or_insert_with(|| value.clone());
        }
        return builtin_problem(name, &params);
    }
    let grid = doc
        .grid
        .ok_or_else(|| Error::Parse("missing `grid` (or `builtin`)".into()))?;
    let controls = doc
        .controls
        .ok_or_else(|| Error::Parse("missing `controls`".into()))?;
    let modes = doc.modes.ok_or_else(|| Error::Parse("missing `modes`".into()))?;
    let g = doc.g.ok_or_else(|| Error::Parse("missing `g`".into()))?;
    let cost = doc.cost.ok_or_else(|| Error::Parse("missing `L`".into()))?;
    let coupling = doc.coupling.ok_or_else(|| Error::Parse("missing `B`".into()))?;

    let grid = TorusGrid::new(grid.dim, grid.n)?;
    let control_set = match controls.labels {
        Some(labels) => {
            if labels.len() != controls.k {
                return Err(Error::Parse("control labels do not match K".into()));
            }
            ControlSet::new(labels)?
        }
        None => ControlSet::indexed(controls.k)?,
    };
    ProblemInstance::new(grid, control_set, modes, g, cost, coupling)
}

/// Serializes an instance to the tabulated document form. Round-trips
/// bit-identically through [`load_problem`].
pub fn serialize_problem(p: &ProblemInstance) -> String {
    let doc = ProblemDoc {
        builtin: None,
        params: None,
        grid: Some(GridDoc {
            dim: p.grid.dim(),
            n: p.grid.points_per_axis(),
        }),
        controls: Some(ControlsDoc {
            k: p.controls.len(),
            labels: Some(p.controls.labels().to_vec()),
        }),
        modes: Some(p.modes),
        g: Some(p.drift.clone()),
        cost: Some(p.cost.clone()),
        coupling: Some(p.coupling.clone()),
        extra: serde_json::Map::new(),
    };
    serde_json::to_string(&doc).expect("problem serialization cannot fail")
}

// ---------------------------------------------------------------------------
// Builtin benchmark problems
// ---------------------------------------------------------------------------

fn param_usize(
    params: &serde_json::Map<String, serde_json::Value>,
    key: &str,
    default: usize,
) -> Result<usize> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_u64()
            .map(|u| u as usize)
            .ok_or_else(|| Error::InvalidParam(format!("`{key}` must be a nonnegative integer"))),
    }
}

fn param_bool(
    params: &serde_json::Map<String, serde_json::Value>,
    key: &str,
    default: bool,
) -> Result<bool> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_bool()
            .ok_or_else(|| Error::InvalidParam(format!("`{key}` must be a boolean"))),
    }
}

fn param_f64_vec(
    params: &serde_json::Map<String, serde_json::Value>,
    key: &str,
) -> Result<Option<Vec<f64>>> {
    match params.get(key) {
        None => Ok(None),
        Some(v) => {
            let arr = v
                .as_array()
                .ok_or_else(|| Error::InvalidParam(format!("`{key}` must be an array")))?;
            let mut out = Vec::with_capacity(arr.len());
            for e in arr {
                out.push(
                    e.as_f64()
                        .ok_or_else(|| Error::InvalidParam(format!("`{key}` must hold numbers")))?,
                );
            }
            Ok(Some(out))
        }
    }
}

/// Controls evenly spaced in `[-1, 1]`; a single control degenerates to `+1`.
fn speed_controls(k: usize) -> Result<ControlSet> {
    if k == 0 {
        return Err(Error::InvalidParam("K must be at least 1".into()));
    }
    if k == 1 {
        return ControlSet::new(vec![1.0]);
    }
    let labels = (0..k)
        .map(|j| -1.0 + 2.0 * j as f64 / (k - 1) as f64)
        .collect();
    ControlSet::new(labels)
}

/// `f(x) = 2 + sin(2πx)`, the default spatial cost profile.
fn default_profile(x: f64) -> f64 {
    2.0 + (2.0 * std::f64::consts::PI * x).sin()
}

fn subtract_min_per_mode(cost: &mut [f64], np: usize, k: usize, modes: usize) {
    for i in 0..modes {
        let block = &mut cost[i * np * k..(i + 1) * np * k];
        let min = block.iter().cloned().fold(f64::INFINITY, f64::min);
        for v in block.iter_mut() {
            *v -= min;
        }
    }
}

/// One-dimensional problem instance with drift `g(x,ξ) = ξ` and spatial costs
/// `profiles[i](x)`; coupling supplied by the caller.
fn speed_instance(
    n: usize,
    k: usize,
    profiles: &[&dyn Fn(f64) -> f64],
    coupling: &CouplingMatrix,
    normalize: bool,
) -> Result<ProblemInstance> {
    let grid = TorusGrid::new(1, n)?;
    let controls = speed_controls(k)?;
    let m = profiles.len();
    let np = grid.num_points();
    let mut drift = vec![0.0; np * k * m];
    let mut cost = vec![0.0; np * k * m];
    for (i, f) in profiles.iter().enumerate() {
        for xi in 0..k {
            for x in 0..np {
                drift[x + np * (xi + k * i)] = controls.label(xi);
                cost[x + np * (xi + k * i)] = f(grid.position(x)[0]);
            }
        }
    }
    if normalize {
        subtract_min_per_mode(&mut cost, np, k, m);
    }
    let p = ProblemInstance::new(grid, controls, m, drift, cost, vec![0.0; np * m * m])?;
    p.with_constant_coupling(coupling)
}

/// Instantiates a named builtin problem.
///
/// Available names: `eikonal1d`, `switch2`, `constcost`, `decoupled_diag`.
pub fn builtin_problem(
    name: &str,
    params: &serde_json::Map<String, serde_json::Value>,
) -> Result<ProblemInstance> {
    match name {
        "eikonal1d" => {
            let n = param_usize(params, "N", 200)?;
            let k = param_usize(params, "K", 2)?;
            let normalize = param_bool(params, "normalize", false)?;
            speed_instance(
                n,
                k,
                &[&default_profile],
                &CouplingMatrix::zeros(1),
                normalize,
            )
        }
        "switch2" => {
            let n = param_usize(params, "N", 200)?;
            let k = param_usize(params, "K", 2)?;
            let equal = param_bool(params, "equal_costs", false)?;
            let normalize = param_bool(params, "normalize", false)?;
            let b = CouplingMatrix::from_rows(2, vec![1.0, -1.0, -1.0, 1.0]);
            let second = |x: f64| 2.0 + (2.0 * std::f64::consts::PI * x).cos();
            let profiles: [&dyn Fn(f64) -> f64; 2] = if equal {
                [&default_profile, &default_profile]
            } else {
                [&default_profile, &second]
            };
            speed_instance(n, k, &profiles, &b, normalize)
        }
        "constcost" => {
            let n = param_usize(params, "N", 8)?;
            let k = param_usize(params, "K", 1)?;
            let m = param_usize(params, "m", 2)?;
            if m == 0 {
                return Err(Error::InvalidParam("m must be at least 1".into()));
            }
            let ell = match param_f64_vec(params, "ell")? {
                Some(v) => v,
                None => (0..m).map(|i| if i == 0 { 3.0 } else { (i - 1) as f64 }).collect(),
            };
            if ell.len() != m {
                return Err(Error::InvalidParam("`ell` must have one entry per mode".into()));
            }
            let b = match param_f64_vec(params, "B")? {
                Some(entries) => {
                    if entries.len() != m * m {
                        return Err(Error::InvalidParam("`B` must be m*m entries".into()));
                    }
                    CouplingMatrix::from_rows(m, entries)
                }
                None => default_coupling(m)?,
            };
            let grid = TorusGrid::new(1, n)?;
            let controls = ControlSet::indexed(k)?;
            let np = grid.num_points();
            let mut cost = vec![0.0; np * k * m];
            for (i, &c) in ell.iter().enumerate() {
                for xi in 0..k {
                    for x in 0..np {
                        cost[x + np * (xi + k * i)] = c;
                    }
                }
            }
            let p = ProblemInstance::new(
                grid,
                controls,
                m,
                vec![0.0; np * k * m],
                cost,
                vec![0.0; np * m * m],
            )?;
            p.with_constant_coupling(&b)
        }
        "decoupled_diag" => {
            let m = param_usize(params, "m", 2)?;
            let n = param_usize(params, "N", 50)?;
            let k = param_usize(params, "K", 2)?;
            let normalize = param_bool(params, "normalize", false)?;
            let b = match param_f64_vec(params, "b")? {
                Some(v) => v,
                None => vec![1.0; m],
            };
            if b.len() != m {
                return Err(Error::InvalidParam("`b` must have one entry per mode".into()));
            }
            if b.iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidParam("diagonal entries must be nonnegative".into()));
            }
            let phases: Vec<f64> = (0..m).map(|i| i as f64 / m as f64).collect();
            let profiles: Vec<Box<dyn Fn(f64) -> f64>> = phases
                .iter()
                .map(|&phi| {
                    Box::new(move |x: f64| default_profile(x + phi)) as Box<dyn Fn(f64) -> f64>
                })
                .collect();
            let refs: Vec<&dyn Fn(f64) -> f64> = profiles.iter().map(|b| b.as_ref()).collect();
            speed_instance(n, k, &refs, &CouplingMatrix::diagonal(&b), normalize)
        }
        other => Err(Error::UnknownBuiltin(other.to_string())),
    }
}

/// Zero-row-sum monotone coupling used by constant-cost defaults: the symmetric
/// exchange matrix for m=2 and a cyclic one for larger m.
fn default_coupling(m: usize) -> Result<CouplingMatrix> {
    if m == 1 {
        return Ok(CouplingMatrix::zeros(1));
    }
    let mut entries = vec![0.0; m * m];
    if m == 2 {
        entries = vec![1.0, -1.0, -1.0, 1.0];
    } else {
        for i in 0..m {
            entries[i * m + i] = 1.0;
            entries[i * m + (i + 1) % m] = -1.0;
        }
    }
    Ok(CouplingMatrix::from_rows(m, entries))
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Monotonicity failure at a specific grid point.
#[derive(Clone, Debug)]
pub struct MonotoneFailure {
    pub x: usize,
    pub witness: MonotoneWitness,
}

/// Result of [`validate_problem`]: monotonicity is fatal for solver entry
/// points, a nonpositive coercivity margin is only a warning.
#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub monotone: bool,
    pub monotone_failure: Option<MonotoneFailure>,
    pub coercive: bool,
    /// Sampled support-function margin per (grid point, mode), `x + np*i`.
    pub coercivity_margins: Vec<f64>,
    pub min_margin: f64,
    pub worst_margin_at: (usize, usize),
    pub directions_used: usize,
    pub warnings: Vec<String>,
}

/// Checks monotonicity of the coupling at every grid point and estimates the
/// coercivity margin of every Hamiltonian by direction sampling.
pub fn validate_problem(p: &ProblemInstance) -> ValidationReport {
    let np = p.grid().num_points();
    let mut monotone = true;
    let mut monotone_failure = None;
    for x in 0..np {
        if let Err(witness) = p.coupling_at(x).check_monotone() {
            monotone = false;
            monotone_failure = Some(MonotoneFailure { x, witness });
            break;
        }
    }

    let directions = hamiltonian::default_directions(p.grid().dim());
    let mut margins = vec![0.0; np * p.modes()];
    let mut min_margin = f64::INFINITY;
    let mut worst = (0, 0);
    for i in 0..p.modes() {
        for x in 0..np {
            let margin = hamiltonian::coercivity_margin(p, i, x, &directions)
                .expect("default directions are valid");
            margins[x + np * i] = margin;
            if margin < min_margin {
                min_margin = margin;
                worst = (x, i);
            }
        }
    }
    let coercive = min_margin > 0.0;

    let mut warnings = Vec::new();
    if !coercive {
        warnings.push(format!(
            "coercivity fails: sampled margin {min_margin:.6e} at grid point {}, mode {}",
            worst.0,
            worst.1 + 1,
        ));
    }
    if !monotone {
        if let Some(f) = &monotone_failure {
            warnings.push(format!(
                "coupling matrix not monotone at grid point {}: (Bu)_{} = {:.6e} < 0",
                f.x,
                f.witness.argmax + 1,
                f.witness.image_value,
            ));
        }
    }

    ValidationReport {
        monotone,
        monotone_failure,
        coercive,
        coercivity_margins: margins,
        min_margin,
        worst_margin_at: worst,
        directions_used: directions.len(),
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(entries: &[(&str, serde_json::Value)]) -> serde_json::Map<String, serde_json::Value> {
        entries
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    #[test]
    fn grid_wraps_modulo_n() {
        let g = TorusGrid::new(1, 7).unwrap();
        for j in 0..7 {
            assert_eq!(g.neighbor(j, 0, 7), j);
            assert_eq!(g.neighbor(j, 0, -7), j);
        }
        assert_eq!(g.neighbor(6, 0, 1), 0);
        assert_eq!(g.neighbor(0, 0, -1), 6);

        let g2 = TorusGrid::new(2, 4).unwrap();
        for idx in 0..16 {
            for axis in 0..2 {
                assert_eq!(g2.neighbor(idx, axis, 4), idx);
            }
        }
        assert_eq!(g2.neighbor(3, 0, 1), 0);
        assert_eq!(g2.neighbor(12, 1, 1), 0);
    }

    #[test]
    fn builtin_reference_round_trip() {
        let src = r#"{"builtin":"eikonal1d","N":200,"K":2}"#;
        let p = load_problem(src).unwrap();
        assert_eq!(p.modes(), 1);
        assert_eq!(p.grid().points_per_axis(), 200);
        assert_eq!(p.num_controls(), 2);
        assert_eq!(p.controls().label(0), -1.0);
        assert_eq!(p.controls().label(1), 1.0);
        // B = 0 for the single mode.
        assert_eq!(p.coupling_entry(17, 0, 0), 0.0);
        // L(x, xi) = 2 + sin(2 pi x) regardless of control.
        let x = 25;
        let expected = 2.0 + (2.0 * std::f64::consts::PI * (x as f64 / 200.0)).sin();
        assert_eq!(p.running_cost(0, 0, x), expected);
        assert_eq!(p.running_cost(0, 1, x), expected);
    }

    #[test]
    fn builtin_params_nested_form() {
        let src = r#"{"builtin":"eikonal1d","params":{"N":50,"K":3}}"#;
        let p = load_problem(src).unwrap();
        assert_eq!(p.grid().points_per_axis(), 50);
        assert_eq!(p.num_controls(), 3);
        assert_eq!(p.controls().label(1), 0.0);
    }

    #[test]
    fn nan_cost_is_rejected() {
        let mut doc = serde_json::json!({
            "grid": {"dim": 1, "N": 2},
            "controls": {"K": 1},
            "modes": 1,
            "g": [0.0, 0.0],
            "L": [1.0, 1.0],
            "B": [0.0, 0.0],
        });
        doc["L"][1] = serde_json::json!(f64::NAN);
        // NaN does not survive JSON, so exercise the constructor directly.
        let grid = TorusGrid::new(1, 2).unwrap();
        let err = ProblemInstance::new(
            grid,
            ControlSet::indexed(1).unwrap(),
            1,
            vec![0.0, 0.0],
            vec![1.0, f64::NAN],
            vec![0.0, 0.0],
        )
        .unwrap_err();
        match err {
            Error::NonFinite { table, x, .. } => {
                assert_eq!(table, "cost");
                assert_eq!(x, 1);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn tabulated_two_mode_instance_is_monotone() {
        let n = 3;
        let k = 2;
        let m = 2;
        let np = n;
        let mut b = vec![0.0; np * m * m];
        for x in 0..np {
            b[x + np * (0 + m * 0)] = 1.0;
            b[x + np * (0 + m * 1)] = -1.0;
            b[x + np * (1 + m * 0)] = -1.0;
            b[x + np * (1 + m * 1)] = 1.0;
        }
        let doc = serde_json::json!({
            "grid": {"dim": 1, "N": n},
            "controls": {"K": k},
            "modes": m,
            "g": vec![0.25; np * k * m],
            "L": vec![1.0; np * k * m],
            "B": b,
        });
        let p = load_problem(&doc.to_string()).unwrap();
        assert_eq!(p.modes(), 2);
        let report = validate_problem(&p);
        assert!(report.monotone);
        assert_eq!(p.coupling_entry(1, 0, 1), -1.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let doc = serde_json::json!({
            "grid": {"dim": 1, "N": 4},
            "controls": {"K": 2},
            "modes": 1,
            "g": vec![0.0; 7],
            "L": vec![0.0; 8],
            "B": vec![0.0; 4],
        });
        let err = load_problem(&doc.to_string()).unwrap_err();
        match err {
            Error::Shape { table, expected, got } => {
                assert_eq!(table, "g");
                assert_eq!(expected, 8);
                assert_eq!(got, 7);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn serialize_round_trip_is_bit_identical() {
        let p = builtin_problem("switch2", &params(&[("N", serde_json::json!(17))])).unwrap();
        let q = load_problem(&serialize_problem(&p)).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn every_builtin_is_monotone() {
        for (name, ps) in [
            ("eikonal1d", params(&[])),
            ("switch2", params(&[])),
            ("constcost", params(&[])),
            ("decoupled_diag", params(&[])),
        ] {
            let p = builtin_problem(name, &ps).unwrap();
            let report = validate_problem(&p);
            assert!(report.monotone, "builtin {name} must be monotone");
        }
    }

    #[test]
    fn eikonal_is_coercive_with_unit_margin() {
        let p = builtin_problem("eikonal1d", &params(&[("N", serde_json::json!(20))])).unwrap();
        let report = validate_problem(&p);
        assert!(report.coercive);
        assert!((report.min_margin - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singleton_control_is_flagged_noncoercive() {
        let p = builtin_problem(
            "eikonal1d",
            &params(&[("N", serde_json::json!(10)), ("K", serde_json::json!(1))]),
        )
        .unwrap();
        let report = validate_problem(&p);
        assert!(report.monotone);
        assert!(!report.coercive);
        assert!((report.min_margin - (-1.0)).abs() < 1e-12);
        assert!(!report.warnings.is_empty());
    }

    #[test]
    fn off_diagonal_positive_coupling_yields_witness() {
        let p = builtin_problem("constcost", &params(&[])).unwrap();
        let bad = CouplingMatrix::from_rows(2, vec![0.0, 1.0, 0.0, 0.0]);
        let p = p.with_constant_coupling(&bad).unwrap();
        let report = validate_problem(&p);
        assert!(!report.monotone);
        let failure = report.monotone_failure.expect("witness required");
        let w = &failure.witness;
        // Witness must violate the definitional property: max coordinate is
        // nonnegative and the image there is negative.
        let max = w.u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(w.u[w.argmax] == max && max >= 0.0);
        assert!(w.image_value < 0.0);
    }

    #[test]
    fn unknown_builtin_is_an_error() {
        assert!(matches!(
            builtin_problem("nope", &params(&[])),
            Err(Error::UnknownBuiltin(_))
        ));
    }

    #[test]
    fn constcost_defaults_match_two_mode_exchange() {
        let p = builtin_problem("constcost", &params(&[])).unwrap();
        assert_eq!(p.modes(), 2);
        assert_eq!(p.running_cost(0, 0, 0), 3.0);
        assert_eq!(p.running_cost(1, 0, 0), 0.0);
        let b = p.constant_coupling().unwrap();
        assert_eq!(b.entry(0, 1), -1.0);
        assert_eq!(b.row_sums(), vec![0.0, 0.0]);
    }
}
