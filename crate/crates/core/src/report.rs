//! Experiment runner and the JSON / flattened-CSV run report.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::cauchy::{default_max_rank, srrsc_compress, CauchyLike};
use crate::error::{PsdcError, Result};
use crate::gridsim::{BlockCyclicLayout, DistMatrix, Grid, GridStats, PayloadKind, Schedule};
use crate::matrices::{
    dense_eig_oracle, make_clement, make_hermite, make_sht, make_toeplitz_type, orthogonality, residual_with_norm,
    tridiagonal_eigenvalues, EigenDecomposition, TridiagonalMatrix,
};
use crate::psdc::{psdc_solve, MergePath, PsdcConfig, PSDC_TOL};
use crate::psmma::{
    baseline_dense_multiply, psmma_multiply, PsmmaVariant, VariantKind, COMPRESSED_BLOCKS, DENSE_BLOCKS, RANK_SUM,
    TRUNCATED_BLOCKS,
};

/// Bumped whenever a report field is added, removed or renamed.
pub const SCHEMA_VERSION: u32 = 1;

/// Largest order accepted by the rank table's SVD oracle.
pub const RANK_TABLE_LIMIT: usize = 16384;

/// Eigenvalues are echoed in the report up to this order.
pub const ECHO_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    Clement,
    Hermite,
    Toeplitz,
    Sht,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Psdc,
    DenseOracle,
    PsmmaOnly,
    RankTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantChoice {
    One(VariantKind),
    All,
}

impl VariantChoice {
    pub fn kinds(&self) -> Vec<VariantKind> {
        match self {
            VariantChoice::One(k) => vec![*k],
            VariantChoice::All => VariantKind::ALL.to_vec(),
        }
    }
}

impl std::str::FromStr for VariantChoice {
    type Err = PsdcError;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            Ok(VariantChoice::All)
        } else {
            s.parse().map(VariantChoice::One)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub matrix: MatrixKind,
    pub n: usize,
    /// Order parameter of the spherical-harmonic family.
    pub m: usize,
    pub path: Option<PathBuf>,
    pub solver: SolverKind,
    pub variant: VariantChoice,
    pub grid: Grid,
    pub nb: usize,
    /// Compression tolerance; `None` picks the solver default.
    pub tol: Option<f64>,
    pub k_threshold: Option<usize>,
    pub base_size: Option<usize>,
    pub seed: u64,
    pub schedule: Schedule,
    /// Block sizes of the rank table.
    pub nb_list: Vec<usize>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            matrix: MatrixKind::Toeplitz,
            n: 256,
            m: 0,
            path: None,
            solver: SolverKind::Psdc,
            variant: VariantChoice::One(VariantKind::WRedist),
            grid: Grid { p: 1, q: 1 },
            nb: 64,
            tol: None,
            k_threshold: None,
            base_size: None,
            seed: 0,
            schedule: Schedule::Concurrent,
            nb_list: vec![64, 128, 256],
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(PsdcError::InvalidInput(format!("{field}: {why}")));
        if self.matrix == MatrixKind::File {
            if self.path.is_none() && matches!(self.solver, SolverKind::Psdc | SolverKind::DenseOracle) {
                return bad("path", "file matrices need --path".into());
            }
        } else if self.n == 0 {
            return bad("n", "must be >= 1".into());
        }
        if self.nb == 0 {
            return bad("nb", "must be >= 1".into());
        }
        if let Some(t) = self.tol {
            if !(t >= 0.0 && t.is_finite()) {
                return bad("tol", format!("{t} is not a finite nonnegative number"));
            }
        }
        if self.solver == SolverKind::RankTable {
            if self.n > RANK_TABLE_LIMIT {
                return Err(PsdcError::SizeGuard { n: self.n, limit: RANK_TABLE_LIMIT });
            }
            if self.nb_list.is_empty() || self.nb_list.contains(&0) {
                return bad("nb_list", "needs positive block sizes".into());
            }
        }
        if self.solver == SolverKind::Psdc {
            self.psdc_config(self.n)?.validate()?;
        }
        Ok(())
    }

    pub fn matrix(&self) -> Result<TridiagonalMatrix> {
        match self.matrix {
            MatrixKind::Clement => make_clement(self.n),
            MatrixKind::Hermite => make_hermite(self.n),
            MatrixKind::Toeplitz => make_toeplitz_type(self.n),
            MatrixKind::Sht => make_sht(self.n, self.m),
            MatrixKind::File => {
                let p = self.path.as_ref().ok_or_else(|| PsdcError::InvalidInput("path: missing".into()))?;
                TridiagonalMatrix::read_file(p)
            }
        }
    }

    pub fn psdc_config(&self, n: usize) -> Result<PsdcConfig> {
        let mut cfg = PsdcConfig::for_size(n);
        cfg.grid = self.grid;
        cfg.schedule = self.schedule;
        cfg.variant.nb = self.nb;
        cfg.variant.tol = self.tol.unwrap_or(PSDC_TOL);
        cfg.variant.kind = match self.variant {
            VariantChoice::One(k) => k,
            VariantChoice::All => {
                return Err(PsdcError::InvalidInput("variant: `all` is only valid with psmma-only".into()));
            }
        };
        if let Some(k) = self.k_threshold {
            cfg.k_threshold = k;
        }
        if let Some(b) = self.base_size {
            cfg.base_size = b;
        } else {
            cfg.base_size = cfg.base_size.min(cfg.k_threshold.max(1));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenMetrics {
    pub n: usize,
    pub orthogonality: f64,
    pub residual: f64,
    pub two_norm: f64,
    /// Largest deviation from the values-only reference, over `||T||_2`.
    pub eigenvalue_error: f64,
    /// Present for small orders only.
    pub eigenvalues: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeSummary {
    pub depth: usize,
    pub n: usize,
    pub kept: usize,
    pub path: MergePath,
    pub flops: u64,
    pub rank_sum: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRow {
    pub variant: String,
    pub rel_error: f64,
    pub messages: u64,
    pub bytes: u64,
    pub b_bytes: u64,
    pub flops: u64,
    pub compressed_blocks: u64,
    pub dense_blocks: u64,
    pub truncated_blocks: u64,
    pub rank_sum: u64,
}

impl VariantRow {
    fn from_stats(variant: &str, rel_error: f64, st: &GridStats) -> Self {
        Self {
            variant: variant.to_string(),
            rel_error,
            messages: st.messages(),
            bytes: st.bytes(),
            b_bytes: st.bytes_of(PayloadKind::B),
            flops: st.flops(),
            compressed_blocks: st.counter(COMPRESSED_BLOCKS),
            dense_blocks: st.counter(DENSE_BLOCKS),
            truncated_blocks: st.counter(TRUNCATED_BLOCKS),
            rank_sum: st.counter(RANK_SUM),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub nb: usize,
    /// One-based block label `B(i,1)`.
    pub block: String,
    pub rows: usize,
    pub cols: usize,
    pub srrsc_rank: usize,
    pub svd_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopTotals {
    pub gu_dense: u64,
    pub psmma_structured: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: ExperimentSpec,
    pub metrics: Option<EigenMetrics>,
    pub merges: Vec<MergeSummary>,
    pub flops: FlopTotals,
    pub variants: Vec<VariantRow>,
    pub baseline: Option<VariantRow>,
    pub ranks: Vec<RankRow>,
    pub stats: Option<GridStats>,
    pub elapsed_s: f64,
}

impl RunReport {
    fn empty(config: ExperimentSpec) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config,
            metrics: None,
            merges: Vec::new(),
            flops: FlopTotals { gu_dense: 0, psmma_structured: 0 },
            variants: Vec::new(),
            baseline: None,
            ranks: Vec::new(),
            stats: None,
            elapsed_s: 0.0,
        }
    }

    /// The report with wall time and the schedule echo cleared; equal for
    /// every schedule of the same run.
    pub fn schedule_free(&self) -> Self {
        let mut r = self.clone();
        r.elapsed_s = 0.0;
        r.config.schedule = Schedule::Sequential;
        r
    }

    pub fn to_json(&self) -> Result<String> {
        let v = self.checked_value()?;
        serde_json::to_string_pretty(&v).map_err(|e| PsdcError::Parse(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| PsdcError::Parse(e.to_string()))
    }

    /// One `path,value` line per scalar; values are JSON literals.
    pub fn to_csv(&self) -> Result<String> {
        let v = self.checked_value()?;
        let mut out = String::from("path,value\n");
        flatten("", &v, &mut out);
        Ok(out)
    }

    pub fn from_csv(s: &str) -> Result<Self> {
        let mut lines = s.lines();
        if lines.next() != Some("path,value") {
            return Err(PsdcError::Parse("missing `path,value` header".into()));
        }
        let mut root = Value::Null;
        for (no, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let (path, lit) = line
                .split_once(',')
                .ok_or_else(|| PsdcError::Parse(format!("line {}: no comma", no + 2)))?;
            let val: Value =
                serde_json::from_str(lit).map_err(|e| PsdcError::Parse(format!("line {}: {e}", no + 2)))?;
            insert_path(&mut root, path, val)?;
        }
        serde_json::from_value(root).map_err(|e| PsdcError::Parse(e.to_string()))
    }

    fn checked_value(&self) -> Result<Value> {
        let v = serde_json::to_value(self).map_err(|e| PsdcError::Parse(e.to_string()))?;
        // Non-finite floats serialize as null, which a required field rejects.
        serde_json::from_value::<RunReport>(v.clone())
            .map_err(|e| PsdcError::NoConvergence(format!("non-finite report field: {e}")))?;
        Ok(v)
    }
}

fn flatten(path: &str, v: &Value, out: &mut String) {
    match v {
        Value::Object(o) if !o.is_empty() => {
            for (k, x) in o {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                flatten(&p, x, out);
            }
        }
        Value::Array(a) if !a.is_empty() => {
            for (i, x) in a.iter().enumerate() {
                flatten(&format!("{path}[{i}]"), x, out);
            }
        }
        _ => {
            out.push_str(path);
            out.push(',');
            out.push_str(&v.to_string());
            out.push('\n');
        }
    }
}

enum Seg<'a> {
    Key(&'a str),
    Idx(usize),
}

fn parse_path(path: &str) -> Result<Vec<Seg<'_>>> {
    let mut segs = Vec::new();
    for part in path.split('.') {
        let (key, mut rest) = match part.find('[') {
            Some(i) => (&part[..i], &part[i..]),
            None => (part, ""),
        };
        if !key.is_empty() {
            segs.push(Seg::Key(key));
        }
        while let Some(r) = rest.strip_prefix('[') {
            let end = r.find(']').ok_or_else(|| PsdcError::Parse(format!("unclosed index in `{path}`")))?;
            let idx = r[..end].parse().map_err(|_| PsdcError::Parse(format!("bad index in `{path}`")))?;
            segs.push(Seg::Idx(idx));
            rest = &r[end + 1..];
        }
    }
    Ok(segs)
}

fn insert_path(root: &mut Value, path: &str, val: Value) -> Result<()> {
    let mut cur = root;
    for seg in parse_path(path)? {
        cur = match seg {
            Seg::Key(k) => {
                if cur.is_null() {
                    *cur = Value::Object(Map::new());
                }
                cur.as_object_mut()
                    .ok_or_else(|| PsdcError::Parse(format!("`{path}` mixes object and array")))?
                    .entry(k.to_string())
                    .or_insert(Value::Null)
            }
            Seg::Idx(i) => {
                if cur.is_null() {
                    *cur = Value::Array(Vec::new());
                }
                let a = cur.as_array_mut().ok_or_else(|| PsdcError::Parse(format!("`{path}` mixes array and object")))?;
                if a.len() <= i {
                    a.resize(i + 1, Value::Null);
                }
                &mut a[i]
            }
        };
    }
    *cur = val;
    Ok(())
}

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| PsdcError::Io(format!("`{}` has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let res = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    res.map_err(PsdcError::from)
}

fn eigen_metrics(t: &TridiagonalMatrix, e: &EigenDecomposition) -> Result<EigenMetrics> {
    let reference = tridiagonal_eigenvalues(t)?;
    let norm = reference.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let scale = if norm > 0.0 { norm } else { 1.0 };
    let err = reference.iter().zip(&e.values).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())) / scale;
    Ok(EigenMetrics {
        n: t.n(),
        orthogonality: orthogonality(&e.vectors)?,
        residual: residual_with_norm(t, e, norm)?,
        two_norm: norm,
        eigenvalue_error: err,
        eigenvalues: (t.n() <= ECHO_LIMIT).then(|| e.values.clone()),
    })
}

/// Uniform `[-0.5, 0.5)` dense matrix from a seeded stream.
pub fn random_dense(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..m * n).map(|_| rng.random::<f64>() - 0.5).collect();
    DMatrix::from_vec(m, n, data)
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunReport> {
    spec.validate()?;
    let start = Instant::now();
    let mut report = RunReport::empty(spec.clone());
    match spec.solver {
        SolverKind::DenseOracle => {
            let t = spec.matrix()?;
            let e = dense_eig_oracle(&t)?;
            report.metrics = Some(eigen_metrics(&t, &e)?);
        }
        SolverKind::Psdc => {
            let t = spec.matrix()?;
            let cfg = spec.psdc_config(t.n())?;
            let out = psdc_solve(&t, &cfg)?;
            report.metrics = Some(eigen_metrics(&t, &out.eig)?);
            for m in &out.merges {
                match m.path {
                    MergePath::GuDense => report.flops.gu_dense += m.flops,
                    MergePath::PsmmaStructured => report.flops.psmma_structured += m.flops,
                }
                report.merges.push(MergeSummary {
                    depth: m.depth,
                    n: m.n,
                    kept: m.kept(),
                    path: m.path,
                    flops: m.flops,
                    rank_sum: m.rank_sum,
                });
            }
            report.stats = Some(out.stats);
        }
        SolverKind::PsmmaOnly => {
            let (rows, base) = psmma_comparison(spec)?;
            report.variants = rows;
            report.baseline = Some(base);
        }
        SolverKind::RankTable => {
            report.ranks = rank_table(spec.n, spec.grid, &spec.nb_list, spec.tol.unwrap_or(1e-12), spec.seed)?;
        }
    }
    report.elapsed_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Random `A` times interlaced Cauchy-like `B`: one row per variant and the
/// dense baseline.
pub fn psmma_comparison(spec: &ExperimentSpec) -> Result<(Vec<VariantRow>, VariantRow)> {
    let n = spec.n;
    let a = random_dense(n, n, spec.seed);
    let b = CauchyLike::interlaced(n, spec.seed.wrapping_add(1));
    let bd = b.to_dense();
    let exact = &a * &bd;
    let exact_norm = exact.norm().max(f64::MIN_POSITIVE);
    let mut rows = Vec::new();
    for kind in spec.variant.kinds() {
        let v = PsmmaVariant { kind, nb: spec.nb, tol: spec.tol.unwrap_or(1e-12), max_rank: None };
        let dm = DistMatrix::from_global(&a, v.layout_for(n, n, spec.grid)?)?;
        let (c, st) = psmma_multiply(&dm, &b, &v, spec.schedule)?;
        let err = (c.gather() - &exact).norm() / exact_norm;
        rows.push(VariantRow::from_stats(kind.name(), err, &st));
    }
    let layout = BlockCyclicLayout::bcdd(n, n, spec.nb, spec.grid)?;
    let (c, st) = baseline_dense_multiply(
        &DistMatrix::from_global(&a, layout)?,
        &DistMatrix::from_global(&bd, layout)?,
        spec.schedule,
    )?;
    let err = (c.gather() - &exact).norm() / exact_norm;
    Ok((rows, VariantRow::from_stats("baseline", err, &st)))
}

/// Number of singular values above `tol` times the largest.
pub fn svd_eps_rank(a: &DMatrix<f64>, tol: f64) -> Result<usize> {
    if a.is_empty() {
        return Ok(0);
    }
    let m = faer::Mat::<f64>::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    let s = m.singular_values().map_err(|e| PsdcError::NoConvergence(format!("SVD: {e:?}")))?;
    let top = s.iter().fold(0.0_f64, |x, &y| x.max(y));
    if top == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&x| x > tol * top).count())
}

/// Ranks of the blocks `B(i,1)`, `i = 2..=p`, of the interlaced Cauchy-like
/// matrix: rows owned by process row `i-1` and columns owned by process
/// column 0 under a block-cyclic layout with block size `nb`.
pub fn rank_table(n: usize, grid: Grid, nb_list: &[usize], tol: f64, seed: u64) -> Result<Vec<RankRow>> {
    if n > RANK_TABLE_LIMIT {
        return Err(PsdcError::SizeGuard { n, limit: RANK_TABLE_LIMIT });
    }
    let b = CauchyLike::interlaced(n, seed);
    let mut rows = Vec::new();
    for &nb in nb_list {
        let layout = BlockCyclicLayout::bcdd(n, n, nb, grid)?;
        let cols = layout.cols_of(0);
        for i in 1..grid.p {
            let sub = b.submatrix(&layout.rows_of(i), &cols);
            let f = srrsc_compress(&sub, tol, default_max_rank(sub.nrows(), sub.ncols()).max(sub.nrows().min(sub.ncols())))?;
            let svd = svd_eps_rank(&sub.to_dense(), tol)?;
            rows.push(RankRow {
                nb,
                block: format!("B({},1)", i + 1),
                rows: sub.nrows(),
                cols: sub.ncols(),
                srrsc_rank: f.rank(),
                svd_rank: svd,
            });
        }
    }
    Ok(rows)
}
