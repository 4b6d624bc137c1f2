//! Symmetric tridiagonal matrices, the test-matrix families, a dense
//! implicit-QL eigensolver used both as the recursion base case and as a
//! test oracle, and the accuracy metrics reported by the experiments.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PsdcError, Result};

/// Default order limit for [`dense_eig_oracle`].
pub const ORACLE_LIMIT: usize = 4096;

/// Symmetric tridiagonal matrix stored as its diagonal and first off-diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TridiagonalMatrix {
    diag: Vec<f64>,
    offdiag: Vec<f64>,
}

impl TridiagonalMatrix {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(PsdcError::InvalidInput("matrix order must be positive".into()));
        }
        if offdiag.len() + 1 != diag.len() {
            return Err(PsdcError::DimensionMismatch(format!(
                "off-diagonal has length {}, expected {}",
                offdiag.len(),
                diag.len() - 1
            )));
        }
        if let Some(i) = diag.iter().chain(offdiag.iter()).position(|x| !x.is_finite()) {
            return Err(PsdcError::InvalidInput(format!("non-finite entry at storage position {i}")));
        }
        Ok(Self { diag, offdiag })
    }

    /// Diagonal matrix with the given entries.
    pub fn diagonal(diag: Vec<f64>) -> Result<Self> {
        let off = vec![0.0; diag.len().saturating_sub(1)];
        Self::new(diag, off)
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn offdiag(&self) -> &[f64] {
        &self.offdiag
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = self.diag[i];
        }
        for (i, &b) in self.offdiag.iter().enumerate() {
            a[(i, i + 1)] = b;
            a[(i + 1, i)] = b;
        }
        a
    }

    /// `T * X` for a dense `X` with `n` rows.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n();
        assert_eq!(x.nrows(), n);
        let mut y = DMatrix::zeros(n, x.ncols());
        for j in 0..x.ncols() {
            let xc = x.column(j);
            let mut yc = y.column_mut(j);
            for i in 0..n {
                let mut s = self.diag[i] * xc[i];
                if i > 0 {
                    s += self.offdiag[i - 1] * xc[i - 1];
                }
                if i + 1 < n {
                    s += self.offdiag[i] * xc[i + 1];
                }
                yc[i] = s;
            }
        }
        y
    }

    /// Text form: order, diagonal line, off-diagonal line, 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.n());
        let line = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "{}", line(&self.diag));
        let _ = writeln!(s, "{}", line(&self.offdiag));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let n: usize = lines
            .next()
            .ok_or_else(|| PsdcError::Parse("missing order line".into()))?
            .trim()
            .parse()
            .map_err(|e| PsdcError::Parse(format!("bad order: {e}")))?;
        let parse_line = |line: Option<&str>, expect: usize, what: &str| -> Result<Vec<f64>> {
            let v: Vec<f64> = match line {
                Some(l) => l
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| PsdcError::Parse(format!("bad {what} entry {t:?}: {e}"))))
                    .collect::<Result<_>>()?,
                None => Vec::new(),
            };
            if v.len() != expect {
                return Err(PsdcError::Parse(format!("{what} has {} entries, expected {expect}", v.len())));
            }
            Ok(v)
        };
        if n == 0 {
            return Err(PsdcError::Parse("order must be positive".into()));
        }
        let diag = parse_line(lines.next(), n, "diagonal")?;
        let offdiag = parse_line(lines.next(), n - 1, "off-diagonal")?;
        Self::new(diag, offdiag)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Clement-type matrix: zero diagonal, off-diagonal `sqrt(i (n+1-i))` for
/// `i = 1..=n`. The result has order `n + 1`.
pub fn make_clement(n: usize) -> Result<TridiagonalMatrix> {
    if n == 0 {
        return Err(PsdcError::InvalidInput("Clement parameter n must be >= 1".into()));
    }
    let off = (1..=n).map(|i| ((i * (n + 1 - i)) as f64).sqrt()).collect();
    TridiagonalMatrix::new(vec![0.0; n + 1], off)
}

/// Hermite-type matrix of order `n`: zero diagonal, off-diagonal `sqrt(i)`.
pub fn make_hermite(n: usize) -> Result<TridiagonalMatrix> {
    if n < 2 {
        return Err(PsdcError::InvalidInput("Hermite order must be >= 2".into()));
    }
    let off = (1..n).map(|i| (i as f64).sqrt()).collect();
    TridiagonalMatrix::new(vec![0.0; n], off)
}

/// Toeplitz-type matrix of order `n`: tridiag(1, 2, 1).
pub fn make_toeplitz_type(n: usize) -> Result<TridiagonalMatrix> {
    if n < 2 {
        return Err(PsdcError::InvalidInput("Toeplitz order must be >= 2".into()));
    }
    TridiagonalMatrix::new(vec![2.0; n], vec![1.0; n - 1])
}

/// Off-diagonal coefficient of the spherical-harmonic-transform matrix.
pub fn sht_c(l: usize, m: usize) -> f64 {
    let (l, m) = (l as f64, m as f64);
    let xi = l - m;
    let num = (xi + 1.0) * (xi + 2.0) * (l + m + 1.0) * (l + m + 2.0);
    let den = (2.0 * l + 1.0) * (2.0 * l + 3.0) * (2.0 * l + 3.0) * (2.0 * l + 5.0);
    (num / den).sqrt()
}

/// Diagonal coefficient of the spherical-harmonic-transform matrix.
pub fn sht_d(l: usize, m: usize) -> f64 {
    let (l, m) = (l as f64, m as f64);
    (2.0 * l * (l + 1.0) - 2.0 * m * m - 1.0) / ((2.0 * l - 1.0) * (2.0 * l + 3.0))
}

/// SHT matrix of order `n`: `A[j][j] = d(m+2j)`, `A[j][j+1] = c(m+2j)`, j from 0.
pub fn make_sht(n: usize, m: usize) -> Result<TridiagonalMatrix> {
    if n < 2 {
        return Err(PsdcError::InvalidInput("SHT order must be >= 2".into()));
    }
    let diag = (0..n).map(|j| sht_d(m + 2 * j, m)).collect();
    let off = (0..n - 1).map(|j| sht_c(m + 2 * j, m)).collect();
    TridiagonalMatrix::new(diag, off)
}

/// Eigenvalues (ascending) and eigenvectors (columns of `vectors`).
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Sorts eigenpairs ascending by value (stable in the incoming order).
    pub fn sort_ascending(&mut self) {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        if idx.iter().enumerate().all(|(k, &i)| k == i) {
            return;
        }
        self.values = idx.iter().map(|&i| self.values[i]).collect();
        self.vectors = self.vectors.select_columns(idx.iter());
    }
}

/// Orthogonality and scaled residual of a computed decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub orthogonality: f64,
    pub residual: f64,
}

pub fn dense_eig_oracle(t: &TridiagonalMatrix) -> Result<EigenDecomposition> {
    dense_eig_oracle_with_limit(t, ORACLE_LIMIT)
}

/// Full eigendecomposition by implicit QL with Wilkinson-type shifts.
pub fn dense_eig_oracle_with_limit(t: &TridiagonalMatrix, limit: usize) -> Result<EigenDecomposition> {
    let n = t.n();
    if n > limit {
        return Err(PsdcError::SizeGuard { n, limit });
    }
    let mut d = t.diag().to_vec();
    let mut e = t.offdiag().to_vec();
    e.push(0.0);
    let mut z = DMatrix::<f64>::identity(n, n);
    implicit_ql(&mut d, &mut e, Some(&mut z))?;
    let mut out = EigenDecomposition { values: d, vectors: z };
    out.sort_ascending();
    Ok(out)
}

/// Eigenvalues only, ascending; O(n^2) and without a size guard.
pub fn tridiagonal_eigenvalues(t: &TridiagonalMatrix) -> Result<Vec<f64>> {
    let mut d = t.diag().to_vec();
    let mut e = t.offdiag().to_vec();
    e.push(0.0);
    implicit_ql(&mut d, &mut e, None)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Spectral norm of `T`, i.e. the largest |eigenvalue|.
pub fn two_norm(t: &TridiagonalMatrix) -> Result<f64> {
    Ok(tridiagonal_eigenvalues(t)?.iter().fold(0.0_f64, |m, x| m.max(x.abs())))
}

// `e[i]` couples `d[i]` and `d[i+1]`; `e[n-1]` must be zero on entry.
fn implicit_ql(d: &mut [f64], e: &mut [f64], mut z: Option<&mut DMatrix<f64>>) -> Result<()> {
    let n = d.len();
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1 = 0.0_f64;
    for l in 0..n {
        let mut iter = 0;
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(PsdcError::NoConvergence(format!("implicit QL stalled at index {l}")));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(z) = z.as_deref_mut() {
                        let (mut ci, mut cj) = z.columns_range_pair_mut(i, i + 1);
                        for k in 0..n {
                            let hk = cj[k];
                            cj[k] = s * ci[k] + c * hk;
                            ci[k] = c * ci[k] - s * hk;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// `max |I - Q Q^T|`.
pub fn orthogonality(q: &DMatrix<f64>) -> Result<f64> {
    if q.nrows() != q.ncols() {
        return Err(PsdcError::DimensionMismatch(format!("{}x{} is not square", q.nrows(), q.ncols())));
    }
    let g = q * q.transpose();
    let mut worst = 0.0_f64;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((target - g[(i, j)]).abs());
        }
    }
    Ok(worst)
}

/// `max_j ||(T - Q diag(values) Q^T)(:, j)||_2 / ||T||_2`; zero when `T = 0`.
pub fn residual(t: &TridiagonalMatrix, e: &EigenDecomposition) -> Result<f64> {
    residual_with_norm(t, e, two_norm(t)?)
}

pub fn residual_with_norm(t: &TridiagonalMatrix, e: &EigenDecomposition, t_norm: f64) -> Result<f64> {
    let n = t.n();
    if e.values.len() != n || e.vectors.nrows() != n || e.vectors.ncols() != n {
        return Err(PsdcError::DimensionMismatch(format!(
            "matrix order {n}, decomposition has {} values and {}x{} vectors",
            e.values.len(),
            e.vectors.nrows(),
            e.vectors.ncols()
        )));
    }
    let mut ql = e.vectors.clone();
    for (j, &lam) in e.values.iter().enumerate() {
        ql.column_mut(j).scale_mut(lam);
    }
    let mut r = ql * e.vectors.transpose();
    r.neg_mut();
    for i in 0..n {
        r[(i, i)] += t.diag()[i];
    }
    for (i, &b) in t.offdiag().iter().enumerate() {
        r[(i, i + 1)] += b;
        r[(i + 1, i)] += b;
    }
    let worst = r.column_iter().map(|c| c.norm()).fold(0.0_f64, f64::max);
    if t_norm == 0.0 {
        return Ok(if worst == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(worst / t_norm)
}

pub fn accuracy(t: &TridiagonalMatrix, e: &EigenDecomposition) -> Result<AccuracyReport> {
    Ok(AccuracyReport { orthogonality: orthogonality(&e.vectors)?, residual: residual(t, e)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn clement_small() {
        let t = make_clement(3).unwrap();
        assert_eq!(t.n(), 4);
        assert!(close(t.offdiag(), &[3f64.sqrt(), 2.0, 3f64.sqrt()], 1e-15));
        assert!(t.diag().iter().all(|&x| x == 0.0));
        let t1 = make_clement(1).unwrap();
        assert_eq!(t1.offdiag(), &[1.0]);
        assert_eq!(t1.diag(), &[0.0, 0.0]);
        assert!(make_clement(0).is_err());
        let e = dense_eig_oracle(&t).unwrap();
        assert!(close(&e.values, &[-3.0, -1.0, 1.0, 3.0], 1e-13));
    }

    #[test]
    fn hermite_and_toeplitz() {
        let h = make_hermite(3).unwrap();
        assert!(close(h.offdiag(), &[1.0, 2f64.sqrt()], 0.0));
        assert!(make_hermite(1).is_err());
        let e = dense_eig_oracle(&make_hermite(2).unwrap()).unwrap();
        assert!(close(&e.values, &[-1.0, 1.0], 1e-15));
        let e4 = dense_eig_oracle(&make_hermite(4).unwrap()).unwrap();
        for i in 0..4 {
            assert!((e4.values[i] + e4.values[3 - i]).abs() < 1e-12);
        }

        let t = make_toeplitz_type(3).unwrap();
        assert_eq!(t.diag(), &[2.0, 2.0, 2.0]);
        assert_eq!(t.offdiag(), &[1.0, 1.0]);
        assert!(make_toeplitz_type(1).is_err());
        let e = dense_eig_oracle(&make_toeplitz_type(2).unwrap()).unwrap();
        assert!(close(&e.values, &[1.0, 3.0], 1e-14));
        let e5 = dense_eig_oracle(&make_toeplitz_type(5).unwrap()).unwrap();
        let mut expect: Vec<f64> =
            (1..=5).map(|k| 2.0 + 2.0 * (k as f64 * std::f64::consts::PI / 6.0).cos()).collect();
        expect.sort_by(f64::total_cmp);
        assert!(close(&e5.values, &expect, 1e-13));
    }

    #[test]
    fn sht_entries() {
        let t = make_sht(2, 2).unwrap();
        let d2 = (2.0 * 2.0 * 3.0 - 8.0 - 1.0) / (3.0 * 7.0);
        let d4 = (2.0 * 4.0 * 5.0 - 8.0 - 1.0) / (7.0 * 11.0);
        assert!((t.diag()[0] - d2).abs() < 1e-16);
        assert!((t.diag()[1] - d4).abs() < 1e-16);
        for m in [0usize, 1, 5, 100] {
            for l in m + 1..m + 400 {
                assert!(sht_d(l, m).abs() < 1.0);
                assert!(sht_c(l, m).is_finite());
            }
        }
    }

    #[test]
    fn oracle_trivial_cases() {
        let t = TridiagonalMatrix::diagonal(vec![1.0, 2.0, 3.0]).unwrap();
        let e = dense_eig_oracle(&t).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(e.vectors, DMatrix::identity(3, 3));

        let t = TridiagonalMatrix::new(vec![2.0, 2.0], vec![1.0]).unwrap();
        let e = dense_eig_oracle(&t).unwrap();
        assert!(close(&e.values, &[1.0, 3.0], 1e-15));

        let t = TridiagonalMatrix::diagonal(vec![0.0; 5]).unwrap();
        assert!(dense_eig_oracle_with_limit(&t, 4).is_err());
    }

    #[test]
    fn metrics_trivial() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert_eq!(orthogonality(&i3).unwrap(), 0.0);
        assert_eq!(orthogonality(&(DMatrix::<f64>::identity(2, 2) * 2.0)).unwrap(), 3.0);
        assert!(orthogonality(&DMatrix::<f64>::zeros(2, 3)).is_err());

        let z = TridiagonalMatrix::diagonal(vec![0.0; 3]).unwrap();
        let e = EigenDecomposition { values: vec![0.0; 3], vectors: i3 };
        assert_eq!(residual(&z, &e).unwrap(), 0.0);

        let t = make_toeplitz_type(6).unwrap();
        let e = dense_eig_oracle(&t).unwrap();
        assert!(residual(&t, &e).unwrap() <= 1e-13);
        let wrong = EigenDecomposition { values: vec![0.0; 2], vectors: DMatrix::identity(2, 2) };
        assert!(residual(&t, &wrong).is_err());
    }

    #[test]
    fn text_round_trip_and_errors() {
        let t = make_sht(7, 3).unwrap();
        let back = TridiagonalMatrix::from_text(&t.to_text()).unwrap();
        assert_eq!(t, back);
        assert!(TridiagonalMatrix::from_text("3\n1 2 3\n1\n").is_err());
        assert!(TridiagonalMatrix::from_text("").is_err());
        assert!(TridiagonalMatrix::new(vec![1.0, f64::NAN], vec![0.0]).is_err());
        assert!(TridiagonalMatrix::new(vec![1.0, 2.0], vec![]).is_err());
        let one = TridiagonalMatrix::from_text("1\n5\n\n").unwrap();
        assert_eq!(one.diag(), &[5.0]);
    }
}
