//! Deterministic virtual p×q process grid: block-cyclic layout algebra,
//! counted point-to-point messaging, cyclic shifts and redistribution.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::{Condvar, Mutex};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PsdcError, Result};

pub const BYTES_PER_ENTRY: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub p: usize,
    pub q: usize,
}

impl Grid {
    pub fn new(p: usize, q: usize) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(PsdcError::InvalidInput(format!("grid {p}x{q} has no processes")));
        }
        Ok(Self { p, q })
    }
    pub fn size(&self) -> usize {
        self.p * self.q
    }
    /// Row-major rank of process (r, c).
    pub fn rank(&self, r: usize, c: usize) -> usize {
        r * self.q + c
    }
    pub fn coords(&self, rank: usize) -> (usize, usize) {
        (rank / self.q, rank % self.q)
    }
}

impl std::str::FromStr for Grid {
    type Err = PsdcError;
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| PsdcError::Parse(format!("grid `{s}` is not of the form PxQ")))?;
        let p = a.trim().parse().map_err(|_| PsdcError::Parse(format!("bad grid rows in `{s}`")))?;
        let q = b.trim().parse().map_err(|_| PsdcError::Parse(format!("bad grid columns in `{s}`")))?;
        Grid::new(p, q)
    }
}

impl std::fmt::Display for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.p, self.q)
    }
}

/// Number of indices owned by process `iproc` when `n` indices are dealt in
/// blocks of `nb` over `nprocs` processes starting at `isrc`.
pub fn numroc(n: usize, nb: usize, iproc: usize, isrc: usize, nprocs: usize) -> usize {
    let mydist = (nprocs + iproc - isrc % nprocs) % nprocs;
    let nblocks = n / nb;
    let mut count = (nblocks / nprocs) * nb;
    let extra = nblocks % nprocs;
    if mydist < extra {
        count += nb;
    } else if mydist == extra {
        count += n % nb;
    }
    count
}

/// Two-dimensional block-cyclic distribution of an m×n matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCyclicLayout {
    pub m: usize,
    pub n: usize,
    pub mb: usize,
    pub nb: usize,
    pub grid: Grid,
    pub src_row: usize,
    pub src_col: usize,
}

impl BlockCyclicLayout {
    pub fn new(m: usize, n: usize, mb: usize, nb: usize, grid: Grid) -> Result<Self> {
        if mb == 0 || nb == 0 {
            return Err(PsdcError::InvalidInput("block size must be positive".into()));
        }
        Ok(Self { m, n, mb, nb, grid, src_row: 0, src_col: 0 })
    }

    /// Square blocks of side `nb`.
    pub fn bcdd(m: usize, n: usize, nb: usize, grid: Grid) -> Result<Self> {
        Self::new(m, n, nb, nb, grid)
    }

    /// One contiguous tile per process: `mb = ceil(m/p)`, `nb = ceil(n/q)`.
    pub fn bdd(m: usize, n: usize, grid: Grid) -> Result<Self> {
        Self::new(m, n, m.div_ceil(grid.p).max(1), n.div_ceil(grid.q).max(1), grid)
    }

    pub fn with_source(mut self, src_row: usize, src_col: usize) -> Self {
        self.src_row = src_row % self.grid.p;
        self.src_col = src_col % self.grid.q;
        self
    }

    pub fn row_owner(&self, gi: usize) -> usize {
        (gi / self.mb + self.src_row) % self.grid.p
    }
    pub fn col_owner(&self, gj: usize) -> usize {
        (gj / self.nb + self.src_col) % self.grid.q
    }

    pub fn local_rows(&self, prow: usize) -> usize {
        numroc(self.m, self.mb, prow, self.src_row, self.grid.p)
    }
    pub fn local_cols(&self, pcol: usize) -> usize {
        numroc(self.n, self.nb, pcol, self.src_col, self.grid.q)
    }

    fn g2l(g: usize, b: usize, nprocs: usize) -> usize {
        (g / (b * nprocs)) * b + g % b
    }

    fn l2g(l: usize, b: usize, iproc: usize, isrc: usize, nprocs: usize) -> usize {
        let mydist = (nprocs + iproc - isrc) % nprocs;
        (l / b) * b * nprocs + mydist * b + l % b
    }

    pub fn owner_and_local(&self, gi: usize, gj: usize) -> Result<(usize, usize, usize)> {
        if gi >= self.m {
            return Err(PsdcError::IndexOutOfRange { index: gi, bound: self.m });
        }
        if gj >= self.n {
            return Err(PsdcError::IndexOutOfRange { index: gj, bound: self.n });
        }
        let rank = self.grid.rank(self.row_owner(gi), self.col_owner(gj));
        Ok((rank, Self::g2l(gi, self.mb, self.grid.p), Self::g2l(gj, self.nb, self.grid.q)))
    }

    pub fn local_to_global(&self, rank: usize, li: usize, lj: usize) -> Result<(usize, usize)> {
        if rank >= self.grid.size() {
            return Err(PsdcError::IndexOutOfRange { index: rank, bound: self.grid.size() });
        }
        let (r, c) = self.grid.coords(rank);
        if li >= self.local_rows(r) {
            return Err(PsdcError::IndexOutOfRange { index: li, bound: self.local_rows(r) });
        }
        if lj >= self.local_cols(c) {
            return Err(PsdcError::IndexOutOfRange { index: lj, bound: self.local_cols(c) });
        }
        Ok((self.global_row(r, li), self.global_col(c, lj)))
    }

    pub fn global_row(&self, prow: usize, li: usize) -> usize {
        Self::l2g(li, self.mb, prow, self.src_row, self.grid.p)
    }
    pub fn global_col(&self, pcol: usize, lj: usize) -> usize {
        Self::l2g(lj, self.nb, pcol, self.src_col, self.grid.q)
    }

    /// Global row indices owned by process row `prow`, ascending.
    pub fn rows_of(&self, prow: usize) -> Vec<usize> {
        (0..self.local_rows(prow)).map(|l| self.global_row(prow, l)).collect()
    }
    /// Global column indices owned by process column `pcol`, ascending.
    pub fn cols_of(&self, pcol: usize) -> Vec<usize> {
        (0..self.local_cols(pcol)).map(|l| self.global_col(pcol, l)).collect()
    }

    /// Same ownership of every entry.
    pub fn same_ownership(&self, other: &Self) -> bool {
        self.m == other.m
            && self.n == other.n
            && self.grid == other.grid
            && (0..self.m).all(|i| self.row_owner(i) == other.row_owner(i))
            && (0..self.n).all(|j| self.col_owner(j) == other.col_owner(j))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    A,
    B,
    C,
    Other,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankStats {
    pub messages_sent: u64,
    pub bytes_sent: u64,
    pub messages_received: u64,
    pub bytes_received: u64,
    pub flops: u64,
}

impl RankStats {
    fn add(&mut self, o: &RankStats) {
        self.messages_sent += o.messages_sent;
        self.bytes_sent += o.bytes_sent;
        self.messages_received += o.messages_received;
        self.bytes_received += o.bytes_received;
        self.flops += o.flops;
    }
}

/// Communication and work counters of one or more grid runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridStats {
    pub grid: Grid,
    pub ranks: Vec<RankStats>,
    pub bytes_by_kind: BTreeMap<PayloadKind, u64>,
    /// Named event counters (compressed blocks, fallbacks, rank sums...).
    pub counters: BTreeMap<String, u64>,
}

impl GridStats {
    pub fn new(grid: Grid) -> Self {
        Self { grid, ranks: vec![RankStats::default(); grid.size()], bytes_by_kind: BTreeMap::new(), counters: BTreeMap::new() }
    }

    pub fn total(&self) -> RankStats {
        let mut t = RankStats::default();
        for r in &self.ranks {
            t.add(r);
        }
        t
    }
    pub fn messages(&self) -> u64 {
        self.total().messages_sent
    }
    pub fn bytes(&self) -> u64 {
        self.total().bytes_sent
    }
    pub fn flops(&self) -> u64 {
        self.total().flops
    }
    pub fn bytes_of(&self, kind: PayloadKind) -> u64 {
        self.bytes_by_kind.get(&kind).copied().unwrap_or(0)
    }
    pub fn counter(&self, name: &str) -> u64 {
        self.counters.get(name).copied().unwrap_or(0)
    }
    pub fn bump(&mut self, name: &str, by: u64) {
        *self.counters.entry(name.to_string()).or_insert(0) += by;
    }

    /// Accumulates another run on the same grid.
    pub fn merge(&mut self, o: &GridStats) -> Result<()> {
        if o.grid != self.grid {
            return Err(PsdcError::DimensionMismatch(format!("merging stats of grid {} into {}", o.grid, self.grid)));
        }
        for (a, b) in self.ranks.iter_mut().zip(&o.ranks) {
            a.add(b);
        }
        for (k, v) in &o.bytes_by_kind {
            *self.bytes_by_kind.entry(*k).or_insert(0) += v;
        }
        for (k, v) in &o.counters {
            *self.counters.entry(k.clone()).or_insert(0) += v;
        }
        Ok(())
    }
}

/// A message body. Shape fields are headers and are not counted.
#[derive(Debug, Clone, PartialEq)]
pub struct Payload {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Payload {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self { rows: m.nrows(), cols: m.ncols(), data: m.as_slice().to_vec() }
    }
    pub fn from_vec(data: Vec<f64>) -> Self {
        Self { rows: data.len(), cols: 1, data }
    }
    pub fn into_matrix(self) -> DMatrix<f64> {
        DMatrix::from_vec(self.rows, self.cols, self.data)
    }
}

#[derive(Debug)]
struct Message {
    tag: u64,
    body: Payload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// One rank runs at a time; control passes round-robin at blocking receives.
    Sequential,
    /// Every rank on its own thread.
    Concurrent,
}

struct State {
    channels: BTreeMap<(usize, usize), VecDeque<Message>>,
    waiting: BTreeMap<usize, usize>,
    finished: BTreeSet<usize>,
    deadlock: Option<Vec<usize>>,
    baton: usize,
    stats: GridStats,
}

struct Shared {
    grid: Grid,
    schedule: Schedule,
    state: Mutex<State>,
    cv: Condvar,
}

impl Shared {
    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn runnable(&self, st: &State, r: usize) -> bool {
        if st.finished.contains(&r) {
            return false;
        }
        match st.waiting.get(&r) {
            None => true,
            Some(&src) => st.channels.get(&(src, r)).is_some_and(|c| !c.is_empty()),
        }
    }

    /// Hands the baton to the next runnable rank after `from`.
    fn pass_baton(&self, st: &mut State, from: usize) {
        let n = self.grid.size();
        for step in 1..=n {
            let r = (from + step) % n;
            if self.runnable(st, r) {
                st.baton = r;
                return;
            }
        }
        self.check_deadlock(st);
    }

    fn check_deadlock(&self, st: &mut State) {
        let n = self.grid.size();
        if st.deadlock.is_some() || st.finished.len() == n {
            return;
        }
        if (0..n).all(|r| !self.runnable(st, r)) {
            st.deadlock = Some(st.waiting.keys().copied().collect());
        }
    }
}

/// Per-rank handle to the messaging API.
pub struct Comm<'a> {
    rank: usize,
    shared: &'a Shared,
    flops: u64,
}

impl Comm<'_> {
    pub fn rank(&self) -> usize {
        self.rank
    }
    pub fn grid(&self) -> Grid {
        self.shared.grid
    }
    pub fn coords(&self) -> (usize, usize) {
        self.shared.grid.coords(self.rank)
    }

    pub fn add_flops(&mut self, f: u64) {
        self.flops += f;
    }

    /// Adds to a named counter of the run.
    pub fn bump(&self, name: &str, by: u64) {
        self.shared.lock().stats.bump(name, by);
    }

    /// Non-blocking send; counts 8 bytes per entry.
    pub fn send(&self, dest: usize, tag: u64, kind: PayloadKind, body: Payload) -> Result<()> {
        if dest >= self.shared.grid.size() {
            return Err(PsdcError::IndexOutOfRange { index: dest, bound: self.shared.grid.size() });
        }
        let bytes = body.data.len() as u64 * BYTES_PER_ENTRY;
        let mut st = self.shared.lock();
        let rs = &mut st.stats.ranks[self.rank];
        rs.messages_sent += 1;
        rs.bytes_sent += bytes;
        *st.stats.bytes_by_kind.entry(kind).or_insert(0) += bytes;
        st.channels.entry((self.rank, dest)).or_default().push_back(Message { tag, body });
        drop(st);
        self.shared.cv.notify_all();
        Ok(())
    }

    /// Blocking receive of the next message on channel `src -> self`.
    pub fn recv(&self, src: usize, tag: u64) -> Result<Payload> {
        if src >= self.shared.grid.size() {
            return Err(PsdcError::IndexOutOfRange { index: src, bound: self.shared.grid.size() });
        }
        let sh = self.shared;
        let mut st = sh.lock();
        loop {
            if let Some(d) = &st.deadlock {
                return Err(PsdcError::Deadlock { blocked: d.clone() });
            }
            let ready = st.channels.get(&(src, self.rank)).is_some_and(|c| !c.is_empty());
            let my_turn = sh.schedule == Schedule::Concurrent || st.baton == self.rank;
            if ready && my_turn {
                st.waiting.remove(&self.rank);
                let msg = st.channels.get_mut(&(src, self.rank)).and_then(|c| c.pop_front()).expect("checked non-empty");
                if msg.tag != tag {
                    return Err(PsdcError::Protocol(format!(
                        "rank {} expected tag {tag} from {src}, got {}",
                        self.rank, msg.tag
                    )));
                }
                let rs = &mut st.stats.ranks[self.rank];
                rs.messages_received += 1;
                rs.bytes_received += msg.body.data.len() as u64 * BYTES_PER_ENTRY;
                return Ok(msg.body);
            }
            st.waiting.insert(self.rank, src);
            match sh.schedule {
                Schedule::Sequential => {
                    if st.baton == self.rank {
                        sh.pass_baton(&mut st, self.rank);
                        sh.cv.notify_all();
                    }
                }
                Schedule::Concurrent => {
                    sh.check_deadlock(&mut st);
                    if st.deadlock.is_some() {
                        sh.cv.notify_all();
                        continue;
                    }
                }
            }
            st = sh.cv.wait(st).unwrap_or_else(|e| e.into_inner());
        }
    }

    fn wait_for_turn(&self) {
        if self.shared.schedule != Schedule::Sequential {
            return;
        }
        let mut st = self.shared.lock();
        while st.baton != self.rank && st.deadlock.is_none() {
            st = self.shared.cv.wait(st).unwrap_or_else(|e| e.into_inner());
        }
    }

    fn finish(&self) {
        let sh = self.shared;
        let mut st = sh.lock();
        st.stats.ranks[self.rank].flops += self.flops;
        st.finished.insert(self.rank);
        st.waiting.remove(&self.rank);
        match sh.schedule {
            Schedule::Sequential => sh.pass_baton(&mut st, self.rank),
            Schedule::Concurrent => sh.check_deadlock(&mut st),
        }
        drop(st);
        sh.cv.notify_all();
    }
}

/// Runs `program` once per rank and returns the per-rank results in rank
/// order together with the counters. Observable results do not depend on
/// the schedule.
pub fn run_grid<T, F>(grid: Grid, schedule: Schedule, program: F) -> Result<(Vec<T>, GridStats)>
where
    T: Send,
    F: Fn(&mut Comm) -> Result<T> + Sync,
{
    let shared = Shared {
        grid,
        schedule,
        state: Mutex::new(State {
            channels: BTreeMap::new(),
            waiting: BTreeMap::new(),
            finished: BTreeSet::new(),
            deadlock: None,
            baton: 0,
            stats: GridStats::new(grid),
        }),
        cv: Condvar::new(),
    };
    let results: Vec<Result<T>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..grid.size())
            .map(|rank| {
                let shared = &shared;
                let program = &program;
                s.spawn(move || {
                    let mut comm = Comm { rank, shared, flops: 0 };
                    comm.wait_for_turn();
                    let out = program(&mut comm);
                    comm.finish();
                    out
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(PsdcError::Protocol("rank panicked".into()))))
            .collect()
    });
    let st = shared.state.into_inner().unwrap_or_else(|e| e.into_inner());
    if let Some(blocked) = st.deadlock {
        return Err(PsdcError::Deadlock { blocked });
    }
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        out.push(r?);
    }
    let undelivered: usize = st.channels.values().map(|c| c.len()).sum();
    if undelivered > 0 {
        return Err(PsdcError::Protocol(format!("{undelivered} messages never received")));
    }
    Ok((out, st.stats))
}

/// A matrix stored as one compacted local array per rank.
///
/// After `shift` left shifts, process column `c` holds the columns the
/// layout assigns to `(c + shift) mod q`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistMatrix {
    pub layout: BlockCyclicLayout,
    pub local: Vec<DMatrix<f64>>,
    pub shift: usize,
}

impl DistMatrix {
    pub fn from_global(a: &DMatrix<f64>, layout: BlockCyclicLayout) -> Result<Self> {
        if a.nrows() != layout.m || a.ncols() != layout.n {
            return Err(PsdcError::DimensionMismatch(format!(
                "matrix is {}x{}, layout is {}x{}",
                a.nrows(),
                a.ncols(),
                layout.m,
                layout.n
            )));
        }
        let g = layout.grid;
        let local = (0..g.size())
            .map(|rank| {
                let (r, c) = g.coords(rank);
                let rows = layout.rows_of(r);
                let cols = layout.cols_of(c);
                DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
            })
            .collect();
        Ok(Self { layout, local, shift: 0 })
    }

    pub fn zeros(layout: BlockCyclicLayout) -> Self {
        let g = layout.grid;
        let local = (0..g.size())
            .map(|rank| {
                let (r, c) = g.coords(rank);
                DMatrix::zeros(layout.local_rows(r), layout.local_cols(c))
            })
            .collect();
        Self { layout, local, shift: 0 }
    }

    /// Process column whose layout columns are held by process column `c`.
    pub fn held_col(&self, c: usize) -> usize {
        (c + self.shift) % self.layout.grid.q
    }

    pub fn gather(&self) -> DMatrix<f64> {
        let l = &self.layout;
        let g = l.grid;
        let mut out = DMatrix::zeros(l.m, l.n);
        for rank in 0..g.size() {
            let (r, c) = g.coords(rank);
            let rows = l.rows_of(r);
            let cols = l.cols_of(self.held_col(c));
            let t = &self.local[rank];
            for (j, &gj) in cols.iter().enumerate() {
                for (i, &gi) in rows.iter().enumerate() {
                    out[(gi, gj)] = t[(i, j)];
                }
            }
        }
        out
    }

    pub fn entries(&self) -> usize {
        self.local.iter().map(|t| t.len()).sum()
    }
}

/// Tag used by cyclic shifts.
pub const SHIFT_TAG: u64 = 1;

/// One cyclic shift inside a rank program: sends `tile` one process column
/// to the left and returns the tile arriving from the right.
pub fn shift_tile(comm: &Comm, tile: DMatrix<f64>, kind: PayloadKind) -> Result<DMatrix<f64>> {
    let g = comm.grid();
    if g.q == 1 {
        return Ok(tile);
    }
    let (r, c) = comm.coords();
    let left = g.rank(r, (c + g.q - 1) % g.q);
    let right = g.rank(r, (c + 1) % g.q);
    comm.send(left, SHIFT_TAG, kind, Payload::from_matrix(&tile))?;
    Ok(comm.recv(right, SHIFT_TAG)?.into_matrix())
}

pub fn shift_left(dm: &DistMatrix, steps: usize, schedule: Schedule) -> Result<(DistMatrix, GridStats)> {
    let g = dm.layout.grid;
    let (local, stats) = run_grid(g, schedule, |comm| {
        let mut tile = dm.local[comm.rank()].clone();
        for _ in 0..steps {
            tile = shift_tile(comm, tile, PayloadKind::A)?;
        }
        Ok(tile)
    })?;
    Ok((DistMatrix { layout: dm.layout, local, shift: (dm.shift + steps) % g.q }, stats))
}

const REDIST_TAG: u64 = 2;

/// Layout-to-layout copy; entries already on their target rank are not sent.
pub fn redistribute(dm: &DistMatrix, target: BlockCyclicLayout, schedule: Schedule) -> Result<(DistMatrix, GridStats)> {
    let src = dm.layout;
    if src.m != target.m || src.n != target.n || src.grid != target.grid {
        return Err(PsdcError::DimensionMismatch(format!(
            "redistribute {}x{} on {} to {}x{} on {}",
            src.m, src.n, src.grid, target.m, target.n, target.grid
        )));
    }
    let g = src.grid;
    // Rank holding each global row/column index before the move.
    let src_row_owner: Vec<usize> = (0..src.m).map(|i| src.row_owner(i)).collect();
    let src_col_holder: Vec<usize> = {
        let mut h = vec![0; src.n];
        for c in 0..g.q {
            for gj in src.cols_of(dm.held_col(c)) {
                h[gj] = c;
            }
        }
        h
    };
    let src_local_row: Vec<usize> = (0..src.m).map(|i| BlockCyclicLayout::g2l(i, src.mb, g.p)).collect();
    let src_local_col: Vec<usize> = (0..src.n).map(|j| BlockCyclicLayout::g2l(j, src.nb, g.q)).collect();

    let (local, stats) = run_grid(g, schedule, |comm| {
        let me = comm.rank();
        let (mr, mc) = g.coords(me);
        let my_src = &dm.local[me];
        // Send to every other rank the entries it will own, in its local
        // column-major order.
        for dest in 0..g.size() {
            let (dr, dc) = g.coords(dest);
            let rows = target.rows_of(dr);
            let cols = target.cols_of(dc);
            let mut buf = Vec::new();
            for &gj in cols.iter().filter(|&&gj| src_col_holder[gj] == mc) {
                for &gi in rows.iter().filter(|&&gi| src_row_owner[gi] == mr) {
                    buf.push(my_src[(src_local_row[gi], src_local_col[gj])]);
                }
            }
            if dest != me && !buf.is_empty() {
                comm.send(dest, REDIST_TAG, PayloadKind::Other, Payload::from_vec(buf))?;
            }
        }
        let rows = target.rows_of(mr);
        let cols = target.cols_of(mc);
        let mut out = DMatrix::zeros(rows.len(), cols.len());
        for s in 0..g.size() {
            let (sr, sc) = g.coords(s);
            let count = cols.iter().filter(|&&gj| src_col_holder[gj] == sc).count()
                * rows.iter().filter(|&&gi| src_row_owner[gi] == sr).count();
            if count == 0 {
                continue;
            }
            let data = if s == me { None } else { Some(comm.recv(s, REDIST_TAG)?.data) };
            let mut k = 0;
            for (j, &gj) in cols.iter().enumerate() {
                if src_col_holder[gj] != sc {
                    continue;
                }
                for (i, &gi) in rows.iter().enumerate() {
                    if src_row_owner[gi] != sr {
                        continue;
                    }
                    out[(i, j)] = match &data {
                        Some(d) => d[k],
                        None => my_src[(src_local_row[gi], src_local_col[gj])],
                    };
                    k += 1;
                }
            }
        }
        Ok(out)
    })?;
    Ok((DistMatrix { layout: target, local, shift: 0 }, stats))
}
