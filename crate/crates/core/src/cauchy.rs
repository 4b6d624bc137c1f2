//! Cauchy-like matrices `A[i][j] = u_i v_j / (d_i - w_j)` held by their
//! generators, and the structured rank-revealing Schur-complement (SRRSC)
//! compressor that factors them as `A P ~ A(:, T) [I Z]` in linear storage.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PsdcError, Result};
use crate::secular::{QhatGenerators, SecularSolution};

/// Flops charged for evaluating one entry from generators.
pub const ENTRY_FLOPS: u64 = 4;

/// How node differences are formed.
#[derive(Debug, Clone)]
pub enum Nodes {
    /// Plain subtraction of stored node values.
    Naive { d: Vec<f64>, w: Vec<f64> },
    /// Row nodes are secular poles, column nodes are secular roots; every
    /// difference is assembled from the gap vectors of `sol` (working
    /// orientation), so nothing is lost to cancellation.
    Gap { sol: Arc<SecularSolution>, rows: Vec<usize>, cols: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffMode {
    Naive,
    Gap,
}

#[derive(Debug, Clone)]
pub struct CauchyLike {
    u: Vec<f64>,
    v: Vec<f64>,
    nodes: Nodes,
}

impl CauchyLike {
    pub fn naive(u: Vec<f64>, v: Vec<f64>, d: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if u.len() != d.len() || v.len() != w.len() {
            return Err(PsdcError::DimensionMismatch(format!(
                "u/d lengths {}/{}, v/w lengths {}/{}",
                u.len(),
                d.len(),
                v.len(),
                w.len()
            )));
        }
        Ok(Self { u, v, nodes: Nodes::Naive { d, w } })
    }

    /// Eigenvector matrix of a rank-one update, in original indexing.
    pub fn from_qhat(g: &QhatGenerators) -> Self {
        let k = g.k();
        let sol = g.solution();
        let idx: Vec<usize> = if sol.is_negated() { (0..k).rev().collect() } else { (0..k).collect() };
        let u = idx.iter().map(|&a| g.u[a]).collect();
        let v = idx.iter().map(|&b| g.v[b]).collect();
        Self { u, v, nodes: Nodes::Gap { sol: Arc::new(sol.clone()), rows: idx.clone(), cols: idx } }
    }

    /// Interlaced test generators: `d_i = i (b-a)/n`, `w_j = d_j + (b-a)/(2n)` with
    /// `a = 1`, `b = 9`, `u`, `v` uniform on `[0, 1)` from a seeded stream.
    pub fn interlaced(n: usize, seed: u64) -> Self {
        let (a, b) = (1.0, 9.0);
        let h = (b - a) / n as f64;
        let d: Vec<f64> = (1..=n).map(|i| i as f64 * h).collect();
        let w: Vec<f64> = d.iter().map(|x| x + h / 2.0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        Self { u, v, nodes: Nodes::Naive { d, w } }
    }

    pub fn nrows(&self) -> usize {
        self.u.len()
    }
    pub fn ncols(&self) -> usize {
        self.v.len()
    }
    pub fn u(&self) -> &[f64] {
        &self.u
    }
    pub fn v(&self) -> &[f64] {
        &self.v
    }
    pub fn nodes(&self) -> &Nodes {
        &self.nodes
    }

    pub fn diff_mode(&self) -> DiffMode {
        match self.nodes {
            Nodes::Naive { .. } => DiffMode::Naive,
            Nodes::Gap { .. } => DiffMode::Gap,
        }
    }

    /// `d_i - w_j`.
    #[inline]
    pub fn rc_diff(&self, i: usize, j: usize) -> f64 {
        match &self.nodes {
            Nodes::Naive { d, w } => d[i] - w[j],
            Nodes::Gap { sol, rows, cols } => sol.working_diff(rows[i], cols[j]),
        }
    }

    /// `d_a - d_b`.
    #[inline]
    pub fn rr_diff(&self, a: usize, b: usize) -> f64 {
        match &self.nodes {
            Nodes::Naive { d, .. } => d[a] - d[b],
            Nodes::Gap { sol, rows, .. } => sol.poles()[rows[a]] - sol.poles()[rows[b]],
        }
    }

    /// `w_a - w_b`.
    #[inline]
    pub fn cc_diff(&self, a: usize, b: usize) -> f64 {
        match &self.nodes {
            Nodes::Naive { w, .. } => w[a] - w[b],
            Nodes::Gap { sol, cols, .. } => sol.root_diff(cols[a], cols[b]),
        }
    }

    /// Approximate row node, for ordering only.
    fn row_node(&self, i: usize) -> f64 {
        match &self.nodes {
            Nodes::Naive { d, .. } => d[i],
            Nodes::Gap { sol, rows, .. } => sol.poles()[rows[i]],
        }
    }

    /// Approximate column node, for ordering only.
    fn col_node(&self, j: usize) -> f64 {
        match &self.nodes {
            Nodes::Naive { w, .. } => w[j],
            Nodes::Gap { sol, cols, .. } => sol.roots()[cols[j]],
        }
    }

    #[inline]
    pub fn entry_unchecked(&self, i: usize, j: usize) -> f64 {
        self.u[i] * self.v[j] / self.rc_diff(i, j)
    }

    pub fn entry(&self, i: usize, j: usize) -> Result<f64> {
        if i >= self.nrows() {
            return Err(PsdcError::IndexOutOfRange { index: i, bound: self.nrows() });
        }
        if j >= self.ncols() {
            return Err(PsdcError::IndexOutOfRange { index: j, bound: self.ncols() });
        }
        let den = self.rc_diff(i, j);
        if den == 0.0 {
            return Err(PsdcError::Pole { row: i, col: j });
        }
        Ok(self.u[i] * self.v[j] / den)
    }

    /// The Cauchy-like submatrix on the given rows and columns.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let u = rows.iter().map(|&i| self.u[i]).collect();
        let v = cols.iter().map(|&j| self.v[j]).collect();
        let nodes = match &self.nodes {
            Nodes::Naive { d, w } => {
                Nodes::Naive { d: rows.iter().map(|&i| d[i]).collect(), w: cols.iter().map(|&j| w[j]).collect() }
            }
            Nodes::Gap { sol, rows: r, cols: c } => Nodes::Gap {
                sol: Arc::clone(sol),
                rows: rows.iter().map(|&i| r[i]).collect(),
                cols: cols.iter().map(|&j| c[j]).collect(),
            },
        };
        Self { u, v, nodes }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.nrows(), self.ncols(), |i, j| self.entry_unchecked(i, j))
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0_f64;
        for j in 0..self.ncols() {
            for i in 0..self.nrows() {
                m = m.max(self.entry_unchecked(i, j).abs());
            }
        }
        m
    }
}

/// Generators of the k-th Schur complement and of `Z^{(k)}`.
#[derive(Debug, Clone)]
pub struct SchurState {
    k: usize,
    row_perm: Vec<usize>,
    col_perm: Vec<usize>,
    // Positions >= k hold u^{(k)} / v^{(k)}; earlier positions are frozen.
    u: Vec<f64>,
    v: Vec<f64>,
    y: Vec<f64>,
    flops: u64,
}

impl SchurState {
    pub fn new(c: &CauchyLike) -> Self {
        let (m, n) = (c.nrows(), c.ncols());
        Self {
            k: 0,
            row_perm: (0..m).collect(),
            col_perm: (0..n).collect(),
            u: c.u.clone(),
            v: c.v.clone(),
            y: Vec::with_capacity(m.min(n)),
            flops: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }
    /// `u^{(k)}` over the trailing rows.
    pub fn uk(&self) -> &[f64] {
        &self.u[self.k..]
    }
    /// `v^{(k)}` over the trailing columns.
    pub fn vk(&self) -> &[f64] {
        &self.v[self.k..]
    }
    /// `y^{(k)}`, one entry per eliminated column.
    pub fn yk(&self) -> &[f64] {
        &self.y
    }
    pub fn row_perm(&self) -> &[usize] {
        &self.row_perm
    }
    pub fn col_perm(&self) -> &[usize] {
        &self.col_perm
    }
    pub fn flops(&self) -> u64 {
        self.flops
    }

    /// Entry `(a, b)` of the current Schur complement (positions relative to `k`).
    pub fn schur_entry(&self, c: &CauchyLike, a: usize, b: usize) -> f64 {
        let (pa, pb) = (self.k + a, self.k + b);
        self.u[pa] * self.v[pb] / c.rc_diff(self.row_perm[pa], self.col_perm[pb])
    }

    /// Moves the given trailing positions to the leading slot.
    pub fn apply_pivot(&mut self, row_pos: usize, col_pos: usize) {
        let k = self.k;
        self.row_perm.swap(k, row_pos);
        self.u.swap(k, row_pos);
        self.col_perm.swap(k, col_pos);
        self.v.swap(k, col_pos);
    }

    #[inline]
    fn magnitude(&self, c: &CauchyLike, r: usize, col: usize) -> f64 {
        (self.u[r] * self.v[col] / c.rc_diff(self.row_perm[r], self.col_perm[col])).abs()
    }

    /// Chooses a large entry of the current Schur complement, swaps it to the
    /// leading position and returns its original (row, column) indices.
    ///
    /// Candidates: the best entry in each of the eight rows with largest
    /// `|u^{(k)}|` and each of the eight columns with largest `|v^{(k)}|`, and
    /// for every row the columns whose nodes bracket its own. The winner is
    /// then refined by rook-style row/column rescans until it is maximal in
    /// both. O((m + n) log n) per call.
    pub fn pivot_select(&mut self, c: &CauchyLike) -> (usize, usize) {
        let (m, n, k) = (self.u.len(), self.v.len(), self.k);
        debug_assert!(k < m && k < n);
        let top_rows = top_by_magnitude(&self.u, k);
        let top_cols = top_by_magnitude(&self.v, k);
        let mut best = (k, k, self.magnitude(c, k, k));
        let mut evals = 1u64;
        let consider = |s: &Self, r: usize, col: usize, best: &mut (usize, usize, f64)| {
            let mag = s.magnitude(c, r, col);
            if mag > best.2 || (best.2.is_nan() && !mag.is_nan()) {
                *best = (r, col, mag);
            }
        };
        for &r in top_rows.iter().flatten() {
            for col in k..n {
                consider(self, r, col, &mut best);
            }
            evals += (n - k) as u64;
        }
        for &col in top_cols.iter().flatten() {
            for r in k..m {
                consider(self, r, col, &mut best);
            }
            evals += (m - k) as u64;
        }
        let mut by_node: Vec<(f64, usize)> = (k..n).map(|col| (c.col_node(self.col_perm[col]), col)).collect();
        by_node.sort_by(|a, b| a.0.total_cmp(&b.0));
        for r in k..m {
            let x = c.row_node(self.row_perm[r]);
            let at = by_node.partition_point(|e| e.0 < x);
            for &(_, col) in &by_node[at.saturating_sub(2)..(at + 2).min(by_node.len())] {
                consider(self, r, col, &mut best);
                evals += 1;
            }
        }
        drop(by_node);
        for _ in 0..m.max(n) {
            let before = (best.0, best.1);
            let (r0, c0, _) = best;
            for col in k..n {
                consider(self, r0, col, &mut best);
            }
            for r in k..m {
                consider(self, r, c0, &mut best);
            }
            evals += (m + n - 2 * k) as u64;
            if (best.0, best.1) == before {
                break;
            }
        }
        self.flops += evals * ENTRY_FLOPS;
        let (r, col, _) = best;
        self.apply_pivot(r, col);
        (self.row_perm[k], self.col_perm[k])
    }

    /// Eliminates the leading (already pivoted) row and column.
    pub fn schur_step(&mut self, c: &CauchyLike) -> Result<()> {
        let (m, n, k) = (self.u.len(), self.v.len(), self.k);
        if k >= m.min(n) {
            return Err(PsdcError::InvalidInput(format!("Schur step {k} exceeds min({m}, {n})")));
        }
        let pr = self.row_perm[k];
        let pc = self.col_perm[k];
        let pivot_den = c.rc_diff(pr, pc);
        if pivot_den == 0.0 || self.v[k] == 0.0 {
            return Err(PsdcError::Pole { row: pr, col: pc });
        }
        for i in 0..k {
            let ci = self.col_perm[i];
            let den = c.cc_diff(pc, ci);
            if den == 0.0 {
                return Err(PsdcError::Pole { row: pr, col: ci });
            }
            self.y[i] *= c.rc_diff(pr, ci) / den;
        }
        self.y.push(pivot_den / self.v[k]);
        for l in k + 1..m {
            let rl = self.row_perm[l];
            let den = c.rc_diff(rl, pc);
            if den == 0.0 {
                return Err(PsdcError::Pole { row: rl, col: pc });
            }
            self.u[l] *= c.rr_diff(rl, pr) / den;
        }
        for l in k + 1..n {
            let cl = self.col_perm[l];
            let den = -c.rc_diff(pr, cl);
            if den == 0.0 {
                return Err(PsdcError::Pole { row: pr, col: cl });
            }
            self.v[l] *= c.cc_diff(cl, pc) / den;
        }
        self.flops += 5 * (k as u64 + (m - k) as u64 + (n - k) as u64);
        self.k += 1;
        Ok(())
    }

    /// `Z^{(k)}[i][j]` from the displacement generators.
    pub fn z_entry(&self, c: &CauchyLike, i: usize, j: usize) -> f64 {
        let cj = self.col_perm[self.k + j];
        self.y[i] * self.v[self.k + j] / c.cc_diff(self.col_perm[i], cj)
    }
}

fn top_by_magnitude(x: &[f64], start: usize) -> [Option<usize>; 8] {
    let mut top: [Option<(usize, f64)>; 8] = [None; 8];
    for (i, &val) in x.iter().enumerate().skip(start) {
        let mag = val.abs();
        let mut cand = Some((i, mag));
        for slot in top.iter_mut() {
            match (*slot, cand) {
                (None, _) => {
                    *slot = cand;
                    break;
                }
                (Some((_, sm)), Some((_, cm))) if cm > sm => std::mem::swap(slot, &mut cand),
                _ => {}
            }
        }
    }
    top.map(|s| s.map(|(i, _)| i))
}

/// `A P ~ A(:, cols) [I Z]` with `Z` given by its displacement generators.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactor {
    pub m: usize,
    pub n: usize,
    /// Selected columns, in pivot order.
    pub cols: Vec<usize>,
    /// Remaining columns, in the order matching the columns of `Z`.
    pub rest: Vec<usize>,
    pub y: Vec<f64>,
    pub v_rest: Vec<f64>,
    /// The rank cap was reached before the tolerance.
    pub truncated: bool,
    pub flops: u64,
}

impl LowRankFactor {
    pub fn rank(&self) -> usize {
        self.cols.len()
    }

    pub fn z_entry(&self, c: &CauchyLike, i: usize, j: usize) -> f64 {
        self.y[i] * self.v_rest[j] / c.cc_diff(self.cols[i], self.rest[j])
    }

    pub fn z_dense(&self, c: &CauchyLike) -> DMatrix<f64> {
        DMatrix::from_fn(self.rank(), self.rest.len(), |i, j| self.z_entry(c, i, j))
    }

    /// Dense approximation of `A` in original column order.
    pub fn reconstruct(&self, c: &CauchyLike) -> DMatrix<f64> {
        let eye = DMatrix::<f64>::identity(self.m, self.m);
        apply_factor(&eye, self, c).expect("factor and generators share dimensions")
    }
}

/// Default rank cap: `min(m, n, floor(0.4 min(m, n)) + 64)`.
pub fn default_max_rank(m: usize, n: usize) -> usize {
    let mn = m.min(n);
    mn.min(2 * mn / 5 + 64)
}

/// Pivoted Schur-complement compression. Stops when the pivot magnitude is
/// at most `tol` times the first pivot, or after `max_rank` steps.
pub fn srrsc_compress(c: &CauchyLike, tol: f64, max_rank: usize) -> Result<LowRankFactor> {
    if !(tol >= 0.0) {
        return Err(PsdcError::InvalidInput(format!("compression tolerance must be >= 0, got {tol}")));
    }
    let (m, n) = (c.nrows(), c.ncols());
    let full = m.min(n);
    let mut s = SchurState::new(c);
    let mut first = None;
    let mut truncated = false;
    while s.k < full {
        let k = s.k;
        s.pivot_select(c);
        let mag = s.magnitude(c, k, k);
        if !mag.is_finite() {
            return Err(PsdcError::Pole { row: s.row_perm[k], col: s.col_perm[k] });
        }
        let anchor = *first.get_or_insert(mag);
        if mag == 0.0 || mag <= tol * anchor {
            break;
        }
        if k >= max_rank {
            truncated = true;
            break;
        }
        s.schur_step(c)?;
    }
    let k = s.k;
    let flops = s.flops;
    let SchurState { mut col_perm, v, y, .. } = s;
    let rest = col_perm.split_off(k);
    Ok(LowRankFactor { m, n, cols: col_perm, rest, y, v_rest: v[k..].to_vec(), truncated, flops })
}

pub fn apply_factor(a_panel: &DMatrix<f64>, f: &LowRankFactor, c: &CauchyLike) -> Result<DMatrix<f64>> {
    apply_factor_counted(a_panel, f, c).map(|(x, _)| x)
}

/// `a_panel * A` through the factored form; also returns the flop count.
pub fn apply_factor_counted(a_panel: &DMatrix<f64>, f: &LowRankFactor, c: &CauchyLike) -> Result<(DMatrix<f64>, u64)> {
    if a_panel.ncols() != f.m || c.nrows() != f.m || c.ncols() != f.n {
        return Err(PsdcError::DimensionMismatch(format!(
            "panel is {}x{}, factor is {}x{}, generators {}x{}",
            a_panel.nrows(),
            a_panel.ncols(),
            f.m,
            f.n,
            c.nrows(),
            c.ncols()
        )));
    }
    let p = a_panel.nrows();
    let k = f.rank();
    let rest = f.rest.len();
    let selected = DMatrix::from_fn(f.m, k, |i, j| c.entry_unchecked(i, f.cols[j]));
    let x = a_panel * selected;
    let y = &x * f.z_dense(c);
    let mut out = DMatrix::zeros(p, f.n);
    for (j, &col) in f.cols.iter().enumerate() {
        out.set_column(col, &x.column(j));
    }
    for (j, &col) in f.rest.iter().enumerate() {
        out.set_column(col, &y.column(j));
    }
    let (p, m, k, r) = (p as u64, f.m as u64, k as u64, rest as u64);
    let flops = 2 * p * m * k + 2 * p * k * r + ENTRY_FLOPS * (m * k + k * r);
    Ok((out, flops))
}
