//! Monotone coupling matrices and their block normal form.
//!
//! A real m x m matrix `B` is monotone when `u_k = max_i u_i >= 0` implies
//! `(Bu)_k >= 0`; equivalently all off-diagonal entries are nonpositive and
//! all row sums are nonnegative. Monotone matrices admit a permutation
//! conjugation `P B P^T` that is block lower triangular with a leading
//! diagonal block followed by irreducible blocks; the ergodic solver walks
//! those blocks in order.

use crate::error::Error;
use crate::Result;

/// Dense m x m coupling matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingMatrix {
    m: usize,
    entries: Vec<f64>,
}

/// A vector violating the definitional monotonicity property: `u[argmax]`
/// attains the maximum, is nonnegative, and `(Bu)[argmax] = image_value < 0`.
#[derive(Clone, Debug)]
pub struct MonotoneWitness {
    pub u: Vec<f64>,
    pub argmax: usize,
    pub image_value: f64,
}

impl CouplingMatrix {
    pub fn from_rows(m: usize, entries: Vec<f64>) -> Self {
        assert_eq!(entries.len(), m * m, "matrix entries must be m*m");
        CouplingMatrix { m, entries }
    }

    pub fn zeros(m: usize) -> Self {
        CouplingMatrix {
            m,
            entries: vec![0.0; m * m],
        }
    }

    pub fn identity(m: usize) -> Self {
        Self::diagonal(&vec![1.0; m])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let m = d.len();
        let mut entries = vec![0.0; m * m];
        for (i, &v) in d.iter().enumerate() {
            entries[i * m + i] = v;
        }
        CouplingMatrix { m, entries }
    }

    pub fn order(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.m);
        (0..self.m)
            .map(|i| (0..self.m).map(|j| self.entry(i, j) * u[j]).sum())
            .collect()
    }

    /// Row sums `ρ_i = Σ_j b_ij`; all nonnegative for a monotone matrix.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.m)
            .map(|i| (0..self.m).map(|j| self.entry(i, j)).sum())
            .collect()
    }

    /// The shifted matrix `λI + B`; requires `λ >= 0` so monotonicity is
    /// preserved.
    pub fn shifted(&self, lambda: f64) -> Result<CouplingMatrix> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidDiscount {
                requirement: "λ >= 0",
                value: lambda,
            });
        }
        let mut out = self.clone();
        for i in 0..self.m {
            out.entries[i * self.m + i] += lambda;
        }
        Ok(out)
    }

    pub fn is_monotone(&self) -> bool {
        self.check_monotone().is_ok()
    }

    /// Sign test for monotonicity. On failure returns a violating vector,
    /// built as `e_i - t e_j` for a positive off-diagonal entry (with
    /// `t = 1 + |b_ii| / |b_ij|`) or the all-ones vector for a negative row
    /// sum.
    pub fn check_monotone(&self) -> std::result::Result<(), MonotoneWitness> {
        for i in 0..self.m {
            for j in 0..self.m {
                if i != j && self.entry(i, j) > 0.0 {
                    let t = 1.0 + self.entry(i, i).abs() / self.entry(i, j);
                    let mut u = vec![0.0; self.m];
                    u[i] = 1.0;
                    u[j] = -t;
                    let image_value = self.apply(&u)[i];
                    return Err(MonotoneWitness {
                        u,
                        argmax: i,
                        image_value,
                    });
                }
            }
            let row_sum: f64 = (0..self.m).map(|j| self.entry(i, j)).sum();
            if row_sum < 0.0 {
                let u = vec![1.0; self.m];
                return Err(MonotoneWitness {
                    u,
                    argmax: i,
                    image_value: row_sum,
                });
            }
        }
        Ok(())
    }

    /// Block normal form of a constant monotone matrix.
    pub fn normal_form(&self) -> Result<NormalForm> {
        normal_form(self)
    }
}

/// Permutation of `{0..m-1}` stored as `order[new] = old`, together with the
/// matrix `P` with `P[i][j] = 1` iff `j = order[i]`, so `(Pu)_i = u_order[i]`
/// and `(P B P^T)_{ij} = b_{order[i], order[j]}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    pub fn identity(m: usize) -> Self {
        Permutation {
            order: (0..m).collect(),
        }
    }

    pub fn from_order(order: Vec<usize>) -> Result<Self> {
        let m = order.len();
        let mut seen = vec![false; m];
        for &o in &order {
            if o >= m || seen[o] {
                return Err(Error::InvalidParam("not a permutation".into()));
            }
            seen[o] = true;
        }
        Ok(Permutation { order })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Original index placed at `new` position.
    pub fn old_index(&self, new: usize) -> usize {
        self.order[new]
    }

    /// New position of an original index.
    pub fn new_index(&self, old: usize) -> usize {
        self.order.iter().position(|&o| o == old).expect("bijection")
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Dense matrix form of `P`, row-major.
    pub fn matrix(&self) -> Vec<f64> {
        let m = self.order.len();
        let mut p = vec![0.0; m * m];
        for (i, &o) in self.order.iter().enumerate() {
            p[i * m + o] = 1.0;
        }
        p
    }

    /// `(Pu)_i = u_order[i]`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.order.iter().map(|&o| u[o]).collect()
    }

    /// `(P^T v)_old = v_new`, the inverse action.
    pub fn apply_inverse(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (new, &old) in self.order.iter().enumerate() {
            out[old] = v[new];
        }
        out
    }

    /// Conjugation `P B P^T`.
    pub fn conjugate(&self, b: &CouplingMatrix) -> CouplingMatrix {
        let m = self.order.len();
        assert_eq!(b.order(), m);
        let mut entries = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                entries[i * m + j] = b.entry(self.order[i], self.order[j]);
            }
        }
        CouplingMatrix::from_rows(m, entries)
    }
}

/// Classification of a diagonal block of the normal form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    /// Part of the leading diagonal block, or a 1x1 block; solved by the
    /// scalar ergodic path.
    Diagonal,
    /// Strongly connected block of size >= 2.
    Irreducible,
}

/// One diagonal block of `P B P^T`, occupying permuted indices
/// `start..start+size`.
#[derive(Clone, Debug)]
pub struct Block {
    pub start: usize,
    pub size: usize,
    pub kind: BlockKind,
    pub matrix: CouplingMatrix,
}

impl Block {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.size
    }
}

/// Frobenius-type normal form: `P B P^T` is block lower triangular, the
/// leading block (when present) is diagonal as a matrix, and every other
/// block is irreducible.
#[derive(Clone, Debug)]
pub struct NormalForm {
    pub permutation: Permutation,
    pub blocks: Vec<Block>,
    pub conjugated: CouplingMatrix,
}

impl NormalForm {
    /// Size of the gathered leading diagonal block (0 when none exists).
    pub fn leading_diagonal_size(&self) -> usize {
        match self.blocks.first() {
            Some(b) if b.kind == BlockKind::Diagonal && b.start == 0 => {
                // The gathered block is the maximal initial run of
                // diagonal-kind singleton columns with no coupling among them.
                let mut size = 0;
                for blk in &self.blocks {
                    if blk.kind == BlockKind::Diagonal && blk.start == size && self.block_is_isolated(blk) {
                        size += blk.size;
                    } else {
                        break;
                    }
                }
                size
            }
            _ => 0,
        }
    }

    fn block_is_isolated(&self, blk: &Block) -> bool {
        // No entries to the left of the block within its rows.
        for i in blk.range() {
            for j in 0..blk.start {
                if self.conjugated.entry(i, j) != 0.0 {
                    return false;
                }
            }
        }
        true
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }
}

/// Tarjan's strongly connected components of the digraph with an edge
/// `i -> j` whenever `i != j` and `b_ij != 0`. Components are emitted with
/// successors first, which is the block order needed for lower triangularity.
fn strongly_connected_components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    struct State<'a> {
        adj: &'a [Vec<usize>],
        index: usize,
        idx: Vec<Option<usize>>,
        low: Vec<usize>,
        stack: Vec<usize>,
        on_stack: Vec<bool>,
        comps: Vec<Vec<usize>>,
    }

    fn connect(v: usize, st: &mut State) {
        st.idx[v] = Some(st.index);
        st.low[v] = st.index;
        st.index += 1;
        st.stack.push(v);
        st.on_stack[v] = true;
        for &w in &st.adj[v] {
            if st.idx[w].is_none() {
                connect(w, st);
                st.low[v] = st.low[v].min(st.low[w]);
            } else if st.on_stack[w] {
                st.low[v] = st.low[v].min(st.idx[w].unwrap());
            }
        }
        if st.low[v] == st.idx[v].unwrap() {
            let mut comp = Vec::new();
            loop {
                let w = st.stack.pop().expect("tarjan stack underflow");
                st.on_stack[w] = false;
                comp.push(w);
                if w == v {
                    break;
                }
            }
            comp.sort_unstable();
            st.comps.push(comp);
        }
    }

    let n = adj.len();
    let mut st = State {
        adj,
        index: 0,
        idx: vec![None; n],
        low: vec![0; n],
        stack: Vec::new(),
        on_stack: vec![false; n],
        comps: Vec::new(),
    };
    for v in 0..n {
        if st.idx[v].is_none() {
            connect(v, &mut st);
        }
    }
    st.comps
}

/// Computes the block normal form of a constant monotone matrix.
///
/// Components are ordered so that an edge from block r to block s forces
/// s <= r (dependencies first); ties are broken by the lowest original index.
/// Rows with no off-diagonal nonzero entries are gathered into the leading
/// diagonal block.
pub fn normal_form(b: &CouplingMatrix) -> Result<NormalForm> {
    if b.check_monotone().is_err() {
        return Err(Error::NonMonotone { witness_x: None });
    }
    let m = b.order();
    let mut adj = vec![Vec::new(); m];
    for i in 0..m {
        for j in 0..m {
            if i != j && b.entry(i, j) != 0.0 {
                adj[i].push(j);
            }
        }
    }
    let comps = strongly_connected_components(&adj);
    let ncomp = comps.len();
    let mut comp_of = vec![0usize; m];
    for (c, comp) in comps.iter().enumerate() {
        for &v in comp {
            comp_of[v] = c;
        }
    }

    // Condensation: out_edges[c] = set of components c depends on.
    let mut out_edges = vec![Vec::new(); ncomp];
    let mut in_edges = vec![Vec::new(); ncomp];
    for i in 0..m {
        for &j in &adj[i] {
            let (ci, cj) = (comp_of[i], comp_of[j]);
            if ci != cj && !out_edges[ci].contains(&cj) {
                out_edges[ci].push(cj);
                in_edges[cj].push(ci);
            }
        }
    }

    // Dependencies-first order (Kahn on remaining out-degree), lowest original
    // index winning ties.
    let min_index: Vec<usize> = comps.iter().map(|c| c[0]).collect();
    let mut remaining: Vec<usize> = out_edges.iter().map(|e| e.len()).collect();
    let mut placed = vec![false; ncomp];
    let mut ordered_comps: Vec<usize> = Vec::with_capacity(ncomp);

    // Leading diagonal block: singleton components with no dependencies at all.
    let mut leading: Vec<usize> = (0..ncomp)
        .filter(|&c| comps[c].len() == 1 && out_edges[c].is_empty())
        .collect();
    leading.sort_by_key(|&c| min_index[c]);
    for &c in &leading {
        placed[c] = true;
        ordered_comps.push(c);
        for &u in &in_edges[c] {
            remaining[u] -= 1;
        }
    }

    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..ncomp)
        .filter(|&c| !placed[c] && remaining[c] == 0)
        .map(|c| Reverse((min_index[c], c)))
        .collect();
    while let Some(Reverse((_, c))) = heap.pop() {
        if placed[c] {
            continue;
        }
        placed[c] = true;
        ordered_comps.push(c);
        for &u in &in_edges[c] {
            remaining[u] -= 1;
            if !placed[u] && remaining[u] == 0 {
                heap.push(Reverse((min_index[u], u)));
            }
        }
    }
    debug_assert_eq!(ordered_comps.len(), ncomp);

    let mut order = Vec::with_capacity(m);
    for &c in &ordered_comps {
        order.extend_from_slice(&comps[c]);
    }
    let permutation = Permutation::from_order(order)?;
    let conjugated = permutation.conjugate(b);

    // Assemble blocks: the gathered leading singletons form one diagonal
    // block, every remaining component becomes its own block.
    let n_leading = leading.len();
    let mut blocks = Vec::new();
    let mut cursor = 0;
    if n_leading > 0 {
        let size = n_leading;
        blocks.push(Block {
            start: 0,
            size,
            kind: BlockKind::Diagonal,
            matrix: extract_block(&conjugated, 0, size),
        });
        cursor = size;
    }
    for &c in ordered_comps.iter().skip(n_leading) {
        let size = comps[c].len();
        blocks.push(Block {
            start: cursor,
            size,
            kind: if size == 1 {
                BlockKind::Diagonal
            } else {
                BlockKind::Irreducible
            },
            matrix: extract_block(&conjugated, cursor, size),
        });
        cursor += size;
    }

    let nf = NormalForm {
        permutation,
        blocks,
        conjugated,
    };
    verify_normal_form(b, &nf)?;
    Ok(nf)
}

fn extract_block(a: &CouplingMatrix, start: usize, size: usize) -> CouplingMatrix {
    let mut entries = vec![0.0; size * size];
    for i in 0..size {
        for j in 0..size {
            entries[i * size + j] = a.entry(start + i, start + j);
        }
    }
    CouplingMatrix::from_rows(size, entries)
}

fn verify_normal_form(original: &CouplingMatrix, nf: &NormalForm) -> Result<()> {
    let a = &nf.conjugated;
    let m = a.order();
    let fail = |msg: String| Err(Error::Unsupported(format!("normal form invariant: {msg}")));

    // Conjugation identity.
    for i in 0..m {
        for j in 0..m {
            let expect = original.entry(nf.permutation.old_index(i), nf.permutation.old_index(j));
            if a.entry(i, j) != expect {
                return fail("conjugated entries disagree with the permutation".into());
            }
        }
    }
    // Above-block entries vanish and the conjugate stays monotone.
    for blk in &nf.blocks {
        for i in blk.range() {
            for j in blk.start + blk.size..m {
                if a.entry(i, j) != 0.0 {
                    return fail(format!("nonzero entry above the block diagonal at ({i},{j})"));
                }
            }
        }
    }
    if !a.is_monotone() {
        return fail("conjugated matrix lost monotonicity".into());
    }
    // Leading block diagonal as a matrix; irreducible blocks strongly connected.
    if nf.leading_diagonal_size() > 0 {
        let blk = &nf.blocks[0];
        for i in 0..blk.size {
            for j in 0..blk.size {
                if i != j && blk.matrix.entry(i, j) != 0.0 {
                    return fail("leading block is not diagonal".into());
                }
            }
        }
    }
    for blk in &nf.blocks {
        if blk.kind == BlockKind::Irreducible {
            let mut adj = vec![Vec::new(); blk.size];
            for i in 0..blk.size {
                for j in 0..blk.size {
                    if i != j && blk.matrix.entry(i, j) != 0.0 {
                        adj[i].push(j);
                    }
                }
            }
            if strongly_connected_components(&adj).len() != 1 {
                return fail("irreducible block is not strongly connected".into());
            }
        }
    }
    Ok(())
}
