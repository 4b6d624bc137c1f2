//! Structured distributed multiply `C = A B` with `A` block-cyclic and `B`
//! Cauchy-like, rebuilt on every rank from replicated generators, plus a
//! SUMMA-style dense baseline used for counter comparisons.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cauchy::{apply_factor_counted, default_max_rank, srrsc_compress, CauchyLike, ENTRY_FLOPS};
use crate::error::{PsdcError, Result};
use crate::gridsim::{
    redistribute, run_grid, shift_tile, BlockCyclicLayout, DistMatrix, GridStats, Payload, PayloadKind, Schedule,
};

/// Counter names recorded in [`GridStats::counters`].
pub const COMPRESSED_BLOCKS: &str = "compressed_blocks";
pub const DENSE_BLOCKS: &str = "dense_blocks";
pub const TRUNCATED_BLOCKS: &str = "truncated_blocks";
pub const RANK_SUM: &str = "rank_sum";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariantKind {
    /// Block-cyclic `A`, compressed off-diagonal windows.
    #[serde(rename = "bcdd")]
    Bcdd,
    /// One tile per process, compressed off-diagonal windows.
    #[serde(rename = "bdd")]
    Bdd,
    /// Block-cyclic `A` moved to one-tile form for the multiply and back.
    #[serde(rename = "wredist")]
    WRedist,
    /// No compression.
    #[serde(rename = "nlowrank")]
    NLowrank,
}

impl VariantKind {
    pub const ALL: [VariantKind; 4] = [VariantKind::Bcdd, VariantKind::Bdd, VariantKind::WRedist, VariantKind::NLowrank];

    pub fn name(&self) -> &'static str {
        match self {
            VariantKind::Bcdd => "bcdd",
            VariantKind::Bdd => "bdd",
            VariantKind::WRedist => "wredist",
            VariantKind::NLowrank => "nlowrank",
        }
    }
}

impl std::str::FromStr for VariantKind {
    type Err = PsdcError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bcdd" => Ok(VariantKind::Bcdd),
            "bdd" => Ok(VariantKind::Bdd),
            "wredist" => Ok(VariantKind::WRedist),
            "nlowrank" => Ok(VariantKind::NLowrank),
            _ => Err(PsdcError::Parse(format!("unknown variant `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsmmaVariant {
    pub kind: VariantKind,
    /// Block size of the block-cyclic layouts.
    pub nb: usize,
    /// Relative pivot threshold of the compressor.
    pub tol: f64,
    /// Rank cap; `None` uses [`default_max_rank`].
    pub max_rank: Option<usize>,
}

impl PsmmaVariant {
    pub fn new(kind: VariantKind, nb: usize) -> Self {
        Self { kind, nb, tol: 1e-12, max_rank: None }
    }

    /// Layout `A` (m×k) must have before the multiply.
    pub fn layout_for(&self, m: usize, k: usize, grid: crate::gridsim::Grid) -> Result<BlockCyclicLayout> {
        match self.kind {
            VariantKind::Bdd => BlockCyclicLayout::bdd(m, k, grid),
            _ => BlockCyclicLayout::bcdd(m, k, self.nb, grid),
        }
    }
}

/// Columns of `B` owned by this process column, and rows of `B` matching
/// the columns of `A` resident at the current shift step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexWindow {
    pub cindex: Vec<usize>,
    pub rindex: Vec<usize>,
}

impl IndexWindow {
    /// Window of process column `j` at shift step `l`.
    pub fn at(a_layout: &BlockCyclicLayout, c_layout: &BlockCyclicLayout, j: usize, l: usize) -> Self {
        let q = a_layout.grid.q;
        Self { cindex: c_layout.cols_of(j), rindex: a_layout.cols_of((j + l) % q) }
    }
}

/// Compress iff the row and column index sets are disjoint.
pub fn lowrank_decision(win: &IndexWindow) -> bool {
    let (mut a, mut b) = (win.rindex.iter().peekable(), win.cindex.iter().peekable());
    while let (Some(&&x), Some(&&y)) = (a.peek(), b.peek()) {
        match x.cmp(&y) {
            std::cmp::Ordering::Less => {
                a.next();
            }
            std::cmp::Ordering::Greater => {
                b.next();
            }
            std::cmp::Ordering::Equal => return false,
        }
    }
    true
}

fn wants_compression(kind: VariantKind, win: &IndexWindow) -> bool {
    match kind {
        VariantKind::NLowrank => false,
        VariantKind::Bcdd => {
            if lowrank_decision(win) {
                return true;
            }
            let (r, c) = (win.rindex.len(), win.cindex.len());
            let (lo, hi) = (r.min(c), r.max(c));
            lo > 0 && hi >= 4 * lo
        }
        VariantKind::Bdd | VariantKind::WRedist => lowrank_decision(win),
    }
}

/// `C = A B` by cyclic shifts of `A` along process rows. `C` has the row
/// layout of `A` and the same block-cyclic column layout for `B`'s columns.
pub fn psmma_multiply(
    a: &DistMatrix,
    b: &CauchyLike,
    variant: &PsmmaVariant,
    schedule: Schedule,
) -> Result<(DistMatrix, GridStats)> {
    let al = a.layout;
    if al.n != b.nrows() {
        return Err(PsdcError::DimensionMismatch(format!(
            "A is {}x{}, B is {}x{}",
            al.m,
            al.n,
            b.nrows(),
            b.ncols()
        )));
    }
    if !(variant.tol >= 0.0) {
        return Err(PsdcError::InvalidInput(format!("tolerance {} must be >= 0", variant.tol)));
    }
    if a.shift != 0 {
        return Err(PsdcError::InvalidInput("A must not be mid-shift".into()));
    }
    match variant.kind {
        VariantKind::WRedist => {
            let bdd = BlockCyclicLayout::bdd(al.m, al.n, al.grid)?;
            let (a_bdd, mut stats) = redistribute(a, bdd, schedule)?;
            let (c_bdd, st) = shifted_multiply(&a_bdd, b, variant, schedule)?;
            stats.merge(&st)?;
            let target = BlockCyclicLayout { n: b.ncols(), ..al };
            let (c, st) = redistribute(&c_bdd, target, schedule)?;
            stats.merge(&st)?;
            Ok((c, stats))
        }
        VariantKind::Bdd => {
            let bdd = BlockCyclicLayout::bdd(al.m, al.n, al.grid)?;
            if !al.same_ownership(&bdd) {
                return Err(PsdcError::InvalidInput(format!(
                    "BDD variant needs one tile per process, got blocks {}x{}",
                    al.mb, al.nb
                )));
            }
            shifted_multiply(a, b, variant, schedule)
        }
        VariantKind::Bcdd | VariantKind::NLowrank => shifted_multiply(a, b, variant, schedule),
    }
}

fn shifted_multiply(
    a: &DistMatrix,
    b: &CauchyLike,
    variant: &PsmmaVariant,
    schedule: Schedule,
) -> Result<(DistMatrix, GridStats)> {
    let al = a.layout;
    let g = al.grid;
    let cl = BlockCyclicLayout { n: b.ncols(), ..al };
    let (local, stats) = run_grid(g, schedule, |comm| {
        let j = comm.coords().1;
        let mut tile = a.local[comm.rank()].clone();
        let rows = tile.nrows();
        let win0 = IndexWindow::at(&al, &cl, j, 0);
        let mut c = DMatrix::<f64>::zeros(rows, win0.cindex.len());
        for l in 0..g.q {
            let win = IndexWindow::at(&al, &cl, j, l);
            debug_assert_eq!(win.rindex.len(), tile.ncols());
            if !win.rindex.is_empty() && !win.cindex.is_empty() && rows > 0 {
                let sub = b.submatrix(&win.rindex, &win.cindex);
                let (kr, kc) = (win.rindex.len() as u64, win.cindex.len() as u64);
                let mut done = false;
                if wants_compression(variant.kind, &win) {
                    let cap = variant.max_rank.unwrap_or_else(|| default_max_rank(sub.nrows(), sub.ncols()));
                    let f = srrsc_compress(&sub, variant.tol, cap)?;
                    comm.add_flops(f.flops);
                    if f.truncated {
                        comm.bump(TRUNCATED_BLOCKS, 1);
                    } else {
                        let (prod, fl) = apply_factor_counted(&tile, &f, &sub)?;
                        c += prod;
                        comm.add_flops(fl + rows as u64 * kc);
                        comm.bump(COMPRESSED_BLOCKS, 1);
                        comm.bump(RANK_SUM, f.rank() as u64);
                        done = true;
                    }
                }
                if !done {
                    c.gemm(1.0, &tile, &sub.to_dense(), 1.0);
                    comm.add_flops(2 * rows as u64 * kr * kc + ENTRY_FLOPS * kr * kc);
                    comm.bump(DENSE_BLOCKS, 1);
                }
            }
            if l + 1 < g.q {
                tile = shift_tile(comm, tile, PayloadKind::A)?;
            }
        }
        Ok(c)
    })?;
    Ok((DistMatrix { layout: cl, local, shift: 0 }, stats))
}

const PANEL_A_TAG: u64 = 10;
const PANEL_B_TAG: u64 = 11;

/// SUMMA-style dense product: for every block of the inner dimension the
/// owning process column broadcasts its `A` panel along process rows and the
/// owning process row broadcasts its `B` panel along process columns.
pub fn baseline_dense_multiply(a: &DistMatrix, b: &DistMatrix, schedule: Schedule) -> Result<(DistMatrix, GridStats)> {
    let (al, bl) = (a.layout, b.layout);
    if al.n != bl.m || al.grid != bl.grid {
        return Err(PsdcError::DimensionMismatch(format!(
            "A is {}x{} on {}, B is {}x{} on {}",
            al.m, al.n, al.grid, bl.m, bl.n, bl.grid
        )));
    }
    if al.nb != bl.mb || al.src_col != bl.src_row {
        return Err(PsdcError::InvalidInput("inner blockings of A and B differ".into()));
    }
    if a.shift != 0 || b.shift != 0 {
        return Err(PsdcError::InvalidInput("operands must not be mid-shift".into()));
    }
    let g = al.grid;
    let cl = BlockCyclicLayout { m: al.m, n: bl.n, mb: al.mb, nb: bl.nb, grid: g, src_row: al.src_row, src_col: bl.src_col };
    let kb = al.nb;
    let panels = al.n.div_ceil(kb);
    let (local, stats) = run_grid(g, schedule, |comm| {
        let (r, c) = comm.coords();
        let my_a = &a.local[comm.rank()];
        let my_b = &b.local[comm.rank()];
        let mut out = DMatrix::<f64>::zeros(cl.local_rows(r), cl.local_cols(c));
        for k in 0..panels {
            let g0 = k * kb;
            let w = kb.min(al.n - g0);
            let a_owner = al.col_owner(g0);
            let b_owner = bl.row_owner(g0);
            let a_off = (k / g.q) * kb;
            let b_off = (k / g.p) * kb;
            let a_panel = if c == a_owner {
                let p = my_a.columns(a_off, w).into_owned();
                for cc in (0..g.q).filter(|&cc| cc != c) {
                    comm.send(g.rank(r, cc), PANEL_A_TAG, PayloadKind::A, Payload::from_matrix(&p))?;
                }
                p
            } else {
                comm.recv(g.rank(r, a_owner), PANEL_A_TAG)?.into_matrix()
            };
            let b_panel = if r == b_owner {
                let p = my_b.rows(b_off, w).into_owned();
                for rr in (0..g.p).filter(|&rr| rr != r) {
                    comm.send(g.rank(rr, c), PANEL_B_TAG, PayloadKind::B, Payload::from_matrix(&p))?;
                }
                p
            } else {
                comm.recv(g.rank(b_owner, c), PANEL_B_TAG)?.into_matrix()
            };
            out.gemm(1.0, &a_panel, &b_panel, 1.0);
            comm.add_flops(2 * (out.nrows() * w * out.ncols()) as u64);
        }
        Ok(out)
    })?;
    Ok((DistMatrix { layout: cl, local, shift: 0 }, stats))
}
