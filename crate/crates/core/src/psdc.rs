//! Divide-and-conquer tridiagonal eigensolver whose large eigenvector
//! updates go through the structured distributed multiply.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cauchy::CauchyLike;
use crate::error::{PsdcError, Result};
use crate::gridsim::{DistMatrix, Grid, GridStats, Schedule};
use crate::matrices::{dense_eig_oracle_with_limit, EigenDecomposition, TridiagonalMatrix};
use crate::psmma::{psmma_multiply, PsmmaVariant, VariantKind, RANK_SUM};
use crate::secular::{deflate, qhat_generators, solve_secular, DeflationOutcome, QhatGenerators, RankOneProblem, SecularSolution};

/// Compression threshold used by the eigensolver; tighter than the plain
/// multiply default so the product stays orthogonal to working accuracy.
pub const PSDC_TOL: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdcConfig {
    /// Leaves of at most this order are solved densely.
    pub base_size: usize,
    /// Merges keeping at least this many roots use the structured multiply.
    pub k_threshold: usize,
    pub variant: PsmmaVariant,
    pub grid: Grid,
    pub schedule: Schedule,
    /// Deflation tolerance override; `None` uses the problem default.
    pub deflation_tol: Option<f64>,
}

impl PsdcConfig {
    /// Defaults for order `n`: leaves of 64, threshold `max(512, n/4)`,
    /// block-cyclic with redistribution, `nb = 64`, 1×1 grid.
    pub fn for_size(n: usize) -> Self {
        Self {
            base_size: 64,
            k_threshold: 512.max(n / 4),
            variant: PsmmaVariant { kind: VariantKind::WRedist, nb: 64, tol: PSDC_TOL, max_rank: None },
            grid: Grid { p: 1, q: 1 },
            schedule: Schedule::Concurrent,
            deflation_tol: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_size == 0 {
            return Err(PsdcError::InvalidInput("base_size must be >= 1".into()));
        }
        if self.k_threshold < self.base_size {
            return Err(PsdcError::InvalidInput(format!(
                "k_threshold {} is below base_size {}",
                self.k_threshold, self.base_size
            )));
        }
        if self.variant.nb == 0 {
            return Err(PsdcError::InvalidInput("block size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergePath {
    GuDense,
    PsmmaStructured,
}

#[derive(Debug, Clone)]
pub struct MergeRecord {
    /// Order of the merged problem.
    pub n: usize,
    /// Order of the leading child.
    pub split: usize,
    pub b: f64,
    pub deflation: DeflationOutcome,
    pub secular: Option<SecularSolution>,
    pub path: MergePath,
    /// Recursion depth, 0 at the root.
    pub depth: usize,
    /// Flops of the eigenvector update.
    pub flops: u64,
    /// Sum of compressed block ranks (structured path only).
    pub rank_sum: u64,
}

impl MergeRecord {
    pub fn kept(&self) -> usize {
        self.deflation.kept
    }
}

#[derive(Debug, Clone)]
pub struct PsdcOutput {
    pub eig: EigenDecomposition,
    pub merges: Vec<MergeRecord>,
    pub stats: GridStats,
}

impl PsdcOutput {
    pub fn psmma_merges(&self) -> usize {
        self.merges.iter().filter(|m| m.path == MergePath::PsmmaStructured).count()
    }
}

/// `T = T1 ⊕ T2 + b v vᵀ` with `v = e_k + e_{k+1}` and `k = floor(n/2)`.
pub fn split(t: &TridiagonalMatrix) -> Result<(TridiagonalMatrix, TridiagonalMatrix, usize, f64)> {
    let n = t.n();
    if n < 2 {
        return Err(PsdcError::InvalidInput(format!("cannot split order {n}")));
    }
    let k = n / 2;
    let b = t.offdiag()[k - 1];
    let mut d1 = t.diag()[..k].to_vec();
    let mut d2 = t.diag()[k..].to_vec();
    d1[k - 1] -= b;
    d2[0] -= b;
    let t1 = TridiagonalMatrix::new(d1, t.offdiag()[..k - 1].to_vec())?;
    let t2 = TridiagonalMatrix::new(d2, t.offdiag()[k..].to_vec())?;
    Ok((t1, t2, k, b))
}

/// Last row of `q1` followed by the first row of `q2`.
pub fn form_u(q1: &DMatrix<f64>, q2: &DMatrix<f64>) -> Vec<f64> {
    let mut u = Vec::with_capacity(q1.ncols() + q2.ncols());
    if q1.nrows() > 0 {
        u.extend(q1.row(q1.nrows() - 1).iter());
    }
    if q2.nrows() > 0 {
        u.extend(q2.row(0).iter());
    }
    u
}

fn block_diag(q1: &DMatrix<f64>, q2: &DMatrix<f64>) -> DMatrix<f64> {
    let (n1, n2) = (q1.nrows(), q2.nrows());
    let mut q = DMatrix::zeros(n1 + n2, n1 + n2);
    q.view_mut((0, 0), (n1, n1)).copy_from(q1);
    q.view_mut((n1, n1), (n2, n2)).copy_from(q2);
    q
}

/// `(top, bottom)` support of every column of `diag(Q1, Q2) G P`.
fn column_support(n1: usize, n: usize, defl: &DeflationOutcome) -> Vec<(bool, bool)> {
    let mut sup: Vec<(bool, bool)> = (0..n).map(|i| (i < n1, i >= n1)).collect();
    for r in &defl.rotations {
        let m = (sup[r.i].0 || sup[r.j].0, sup[r.i].1 || sup[r.j].1);
        sup[r.i] = m;
        sup[r.j] = m;
    }
    defl.perm.iter().map(|&k| sup[k]).collect()
}

/// Dense update with columns regrouped by support: the leading rows only
/// meet columns touching the top block and the trailing rows only those
/// touching the bottom block, giving two smaller products.
pub fn update_eigvecs_gu(
    q1: &DMatrix<f64>,
    q2: &DMatrix<f64>,
    defl: &DeflationOutcome,
    qhat: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, u64)> {
    let (n1, n2) = (q1.nrows(), q2.nrows());
    let n = n1 + n2;
    let kept = defl.kept;
    if qhat.nrows() != kept || qhat.ncols() != kept || defl.perm.len() != n {
        return Err(PsdcError::DimensionMismatch(format!(
            "Qhat is {}x{} for {kept} kept of {n}",
            qhat.nrows(),
            qhat.ncols()
        )));
    }
    let w = defl.transform_columns(&block_diag(q1, q2));
    let sup = column_support(n1, n, defl);
    let top: Vec<usize> = (0..kept).filter(|&c| sup[c].0).collect();
    let bot: Vec<usize> = (0..kept).filter(|&c| sup[c].1).collect();
    let mut out = DMatrix::zeros(n, n);
    let mut flops = 0u64;
    if kept > 0 {
        let a_top = w.view((0, 0), (n1, n)).select_columns(top.iter());
        let a_bot = w.view((n1, 0), (n2, n)).select_columns(bot.iter());
        let h_top = qhat.select_rows(top.iter());
        let h_bot = qhat.select_rows(bot.iter());
        out.view_mut((0, 0), (n1, kept)).copy_from(&(a_top * h_top));
        out.view_mut((n1, 0), (n2, kept)).copy_from(&(a_bot * h_bot));
        flops = 2 * (n1 * top.len() * kept + n2 * bot.len() * kept) as u64;
    }
    out.columns_mut(kept, n - kept).copy_from(&w.columns(kept, n - kept));
    Ok((out, flops))
}

/// Structured update: the kept columns of `diag(Q1, Q2) G P`, in ascending
/// pole order, are distributed and multiplied by the Cauchy-like `Qhat`.
pub fn update_eigvecs_psmma(
    q1: &DMatrix<f64>,
    q2: &DMatrix<f64>,
    defl: &DeflationOutcome,
    qg: &QhatGenerators,
    cfg: &PsdcConfig,
) -> Result<(DMatrix<f64>, GridStats)> {
    let n = q1.nrows() + q2.nrows();
    let kept = defl.kept;
    if qg.k() != kept {
        return Err(PsdcError::DimensionMismatch(format!("{} generators for {kept} kept", qg.k())));
    }
    let w = defl.transform_columns(&block_diag(q1, q2));
    let a = w.columns(0, kept).into_owned();
    let layout = cfg.variant.layout_for(n, kept, cfg.grid)?;
    let dm = DistMatrix::from_global(&a, layout)?;
    let b = CauchyLike::from_qhat(qg);
    let (c, stats) = psmma_multiply(&dm, &b, &cfg.variant, cfg.schedule)?;
    let mut out = DMatrix::zeros(n, n);
    out.columns_mut(0, kept).copy_from(&c.gather());
    out.columns_mut(kept, n - kept).copy_from(&w.columns(kept, n - kept));
    Ok((out, stats))
}

struct Node {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    merges: Vec<MergeRecord>,
    stats: GridStats,
}

pub fn psdc_solve(t: &TridiagonalMatrix, cfg: &PsdcConfig) -> Result<PsdcOutput> {
    cfg.validate()?;
    let node = solve_node(t, cfg, 0)?;
    let mut eig = EigenDecomposition { values: node.values, vectors: node.vectors };
    eig.sort_ascending();
    Ok(PsdcOutput { eig, merges: node.merges, stats: node.stats })
}

fn solve_node(t: &TridiagonalMatrix, cfg: &PsdcConfig, depth: usize) -> Result<Node> {
    let n = t.n();
    if n <= cfg.base_size {
        let e = dense_eig_oracle_with_limit(t, usize::MAX)?;
        let mut stats = GridStats::new(cfg.grid);
        stats.ranks[0].flops += 9 * (n * n * n) as u64;
        return Ok(Node { values: e.values, vectors: e.vectors, merges: Vec::new(), stats });
    }
    let (t1, t2, k, b) = split(t)?;
    let (left, right) = rayon::join(|| solve_node(&t1, cfg, depth + 1), || solve_node(&t2, cfg, depth + 1));
    let (left, right) = (left?, right?);

    let mut d = left.values;
    d.extend_from_slice(&right.values);
    let u = form_u(&left.vectors, &right.vectors);
    let prob = RankOneProblem::new(d, u, b)?;
    let tol = cfg.deflation_tol.unwrap_or_else(|| prob.default_tol());
    let defl = deflate(&prob, tol);
    let kept = defl.kept;

    let mut stats = left.stats;
    stats.merge(&right.stats)?;
    let mut merges = left.merges;
    merges.extend(right.merges);

    let (secular, qg) = if kept > 0 {
        let sol = solve_secular(&defl.dbar, &defl.zbar, defl.rho)?;
        let qg = qhat_generators(&sol, &defl.zbar)?;
        (Some(sol), Some(qg))
    } else {
        (None, None)
    };
    let path = if kept >= cfg.k_threshold { MergePath::PsmmaStructured } else { MergePath::GuDense };
    let (vectors, flops, rank_sum) = match (&qg, path) {
        (Some(qg), MergePath::PsmmaStructured) => {
            let (v, st) = update_eigvecs_psmma(&left.vectors, &right.vectors, &defl, qg, cfg)?;
            stats.merge(&st)?;
            (v, st.flops(), st.counter(RANK_SUM))
        }
        _ => {
            let qhat = qg.as_ref().map(|g| g.to_dense()).unwrap_or_else(|| DMatrix::zeros(0, 0));
            let (v, fl) = update_eigvecs_gu(&left.vectors, &right.vectors, &defl, &qhat)?;
            stats.ranks[0].flops += fl;
            (v, fl, 0)
        }
    };
    let mut values = secular.as_ref().map(|s| s.eigenvalues()).unwrap_or_default();
    values.extend_from_slice(&defl.deflated_values);
    merges.push(MergeRecord { n, split: k, b, deflation: defl, secular, path, depth, flops, rank_sum });
    Ok(Node { values, vectors, merges, stats })
}
