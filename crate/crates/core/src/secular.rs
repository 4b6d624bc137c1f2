//! Diagonal-plus-rank-one eigenproblems `M = D + rho z z^T`.
//!
//! Deflation removes eigenpairs that are known exactly, the secular solver
//! finds the remaining roots together with their distances to the
//! neighbouring poles, and [`QhatGenerators`] represents the eigenvector
//! matrix of `M` by five vectors instead of `K^2` numbers.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{PsdcError, Result};

const MAX_SECULAR_ITERATIONS: usize = 100;
const PARALLEL_ROOTS: usize = 256;

/// `D + rho z z^T` with `z` normalized to unit length (`rho` carries `||z||^2`).
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneProblem {
    d: Vec<f64>,
    z: Vec<f64>,
    rho: f64,
}

impl RankOneProblem {
    pub fn new(d: Vec<f64>, z: Vec<f64>, rho: f64) -> Result<Self> {
        if d.len() != z.len() {
            return Err(PsdcError::DimensionMismatch(format!("d has {} entries, z has {}", d.len(), z.len())));
        }
        if !rho.is_finite() || d.iter().chain(&z).any(|x| !x.is_finite()) {
            return Err(PsdcError::InvalidInput("non-finite rank-one data".into()));
        }
        let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(Self { d, z, rho: 0.0 });
        }
        let z = z.iter().map(|x| x / norm).collect();
        Ok(Self { d, z, rho: rho * norm * norm })
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }
    pub fn d(&self) -> &[f64] {
        &self.d
    }
    pub fn z(&self) -> &[f64] {
        &self.z
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `8 eps max(max|d|, |rho|)`.
    pub fn default_tol(&self) -> f64 {
        let dmax = self.d.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        8.0 * f64::EPSILON * dmax.max(self.rho.abs())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| self.rho * self.z[i] * self.z[j] + if i == j { self.d[i] } else { 0.0 })
    }
}

/// Plane rotation acting on coordinates `i` and `j`:
/// `(x_i, x_j) <- (s x_i - c x_j, c x_i + s x_j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GivensRotation {
    pub i: usize,
    pub j: usize,
    pub c: f64,
    pub s: f64,
}

impl GivensRotation {
    pub fn apply_to_vector(&self, x: &mut [f64]) {
        let (xi, xj) = (x[self.i], x[self.j]);
        x[self.i] = self.s * xi - self.c * xj;
        x[self.j] = self.c * xi + self.s * xj;
    }

    /// Right-multiplies by the transpose, so that eigenvectors of the rotated
    /// problem map back to eigenvectors of the original one.
    pub fn apply_to_columns(&self, q: &mut DMatrix<f64>) {
        let (c, s) = (self.c, self.s);
        let (lo, hi, swapped) = if self.i < self.j { (self.i, self.j, false) } else { (self.j, self.i, true) };
        let (mut a, mut b) = q.columns_range_pair_mut(lo, hi);
        let (ci, cj) = if swapped { (&mut b, &mut a) } else { (&mut a, &mut b) };
        for r in 0..ci.len() {
            let (x, y) = (ci[r], cj[r]);
            ci[r] = s * x - c * y;
            cj[r] = c * x + s * y;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeflationOutcome {
    /// Size of the non-deflated problem.
    pub kept: usize,
    /// Slot `k` of the reduced problem holds original coordinate `perm[k]`
    /// (after the rotations); deflated coordinates occupy slots `kept..`.
    pub perm: Vec<usize>,
    pub rotations: Vec<GivensRotation>,
    pub dbar: Vec<f64>,
    pub zbar: Vec<f64>,
    pub deflated_values: Vec<f64>,
    pub rho: f64,
    pub tol: f64,
}

impl DeflationOutcome {
    /// Applies the rotations and then the permutation to the columns of `q`.
    pub fn transform_columns(&self, q: &DMatrix<f64>) -> DMatrix<f64> {
        let mut w = q.clone();
        for r in &self.rotations {
            r.apply_to_columns(&mut w);
        }
        w.select_columns(self.perm.iter())
    }
}

/// Deflates negligible weights and (numerically) coincident poles.
pub fn deflate(p: &RankOneProblem, tol: f64) -> DeflationOutcome {
    let n = p.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| p.d[a].total_cmp(&p.d[b]));
    let mut d = p.d.clone();
    let mut z = p.z.clone();
    let mut deflated = vec![false; n];
    let mut rotations = Vec::new();

    for &k in &order {
        if p.rho == 0.0 || (p.rho * z[k]).abs() <= tol {
            deflated[k] = true;
        }
    }
    let mut prev: Option<usize> = None;
    for &k in &order {
        if deflated[k] {
            continue;
        }
        if let Some(pj) = prev {
            let tau = z[pj].hypot(z[k]);
            let c = z[pj] / tau;
            let s = z[k] / tau;
            let t = d[k] - d[pj];
            if (t * c * s).abs() <= tol {
                let rot = GivensRotation { i: pj, j: k, c, s };
                rot.apply_to_vector(&mut z);
                z[pj] = 0.0;
                let (di, dk) = (d[pj], d[k]);
                d[pj] = s * s * di + c * c * dk;
                d[k] = c * c * di + s * s * dk;
                deflated[pj] = true;
                rotations.push(rot);
            }
        }
        prev = Some(k);
    }

    let mut perm: Vec<usize> = order.iter().copied().filter(|&k| !deflated[k]).collect();
    let kept = perm.len();
    let mut tail: Vec<usize> = order.iter().copied().filter(|&k| deflated[k]).collect();
    tail.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    perm.extend(tail);
    DeflationOutcome {
        kept,
        dbar: perm[..kept].iter().map(|&k| d[k]).collect(),
        zbar: perm[..kept].iter().map(|&k| z[k]).collect(),
        deflated_values: perm[kept..].iter().map(|&k| d[k]).collect(),
        perm,
        rotations,
        rho: p.rho,
        tol,
    }
}

/// Roots of the secular equation with their gaps to the neighbouring poles.
///
/// All vectors are stored in the working orientation, in which `rho > 0`.
/// For a negative weight the problem is negated and reversed first; the
/// public accessors taking original indices undo that.
#[derive(Debug, Clone, PartialEq)]
pub struct SecularSolution {
    d: Vec<f64>,
    z: Vec<f64>,
    rho: f64,
    lam: Vec<f64>,
    gamma: Vec<f64>,
    mu: Vec<f64>,
    negated: bool,
}

impl SecularSolution {
    /// Builds a solution from precomputed gaps (working orientation, `rho > 0`).
    pub fn from_gaps(d: Vec<f64>, z: Vec<f64>, rho: f64, gamma: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        let k = d.len();
        if z.len() != k || gamma.len() != k || mu.len() != k {
            return Err(PsdcError::DimensionMismatch("generator lengths differ".into()));
        }
        let lam = d.iter().zip(&gamma).map(|(d, g)| d + g).collect();
        Ok(Self { d, z, rho, lam, gamma, mu, negated: false })
    }

    pub fn k(&self) -> usize {
        self.d.len()
    }
    pub fn is_negated(&self) -> bool {
        self.negated
    }
    /// Working-orientation poles (ascending).
    pub fn poles(&self) -> &[f64] {
        &self.d
    }
    /// Working-orientation unit weight vector.
    pub fn weights(&self) -> &[f64] {
        &self.z
    }
    /// Working-orientation weight (positive).
    pub fn rho(&self) -> f64 {
        self.rho
    }
    /// Working-orientation roots (ascending).
    pub fn roots(&self) -> &[f64] {
        &self.lam
    }
    /// `lam[i] - d[i]`, working orientation.
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }
    /// `d[i+1] - lam[i]`, working orientation; the last entry is measured
    /// from `d[K-1] + rho`.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Eigenvalues of the original problem, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.negated {
            self.lam.iter().rev().map(|x| -x).collect()
        } else {
            self.lam.clone()
        }
    }

    /// Working-orientation `d[i] - lam[j]` from the gap representation.
    #[inline]
    pub fn working_diff(&self, i: usize, j: usize) -> f64 {
        if i <= j {
            (self.d[i] - self.d[j]) - self.gamma[j]
        } else {
            (self.d[i] - self.d[j + 1]) + self.mu[j]
        }
    }

    /// Working-orientation `lam[a] - lam[b]` assembled from nonnegative parts.
    #[inline]
    pub fn root_diff(&self, a: usize, b: usize) -> f64 {
        match a.cmp(&b) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Greater => self.gamma[a] + (self.d[a] - self.d[b + 1]) + self.mu[b],
            std::cmp::Ordering::Less => -(self.gamma[b] + (self.d[b] - self.d[a + 1]) + self.mu[a]),
        }
    }

    /// `d_i - lambda_j` in original indexing, without cancellation.
    pub fn stable_diff(&self, i: usize, j: usize) -> Result<f64> {
        let k = self.k();
        for idx in [i, j] {
            if idx >= k {
                return Err(PsdcError::IndexOutOfRange { index: idx, bound: k });
            }
        }
        if self.negated {
            Ok(-self.working_diff(k - 1 - i, k - 1 - j))
        } else {
            Ok(self.working_diff(i, j))
        }
    }

    /// Value of `1 + rho sum z_k^2 / (d_k - lam)` at root `i` (working
    /// orientation) together with the magnitude scale `1 + rho sum |terms|`.
    pub fn secular_value(&self, i: usize) -> (f64, f64) {
        let mut sum = 0.0;
        let mut abs = 0.0;
        for k in 0..self.k() {
            let t = self.z[k] * self.z[k] / self.working_diff(k, i);
            sum += t;
            abs += t.abs();
        }
        (1.0 + self.rho * sum, 1.0 + self.rho * abs)
    }
}

/// Solves the secular equation for every root. `dbar` must be strictly
/// ascending and `zbar` free of zeros (deflate first).
pub fn solve_secular(dbar: &[f64], zbar: &[f64], rho: f64) -> Result<SecularSolution> {
    let k = dbar.len();
    if zbar.len() != k {
        return Err(PsdcError::DimensionMismatch(format!("{k} poles but {} weights", zbar.len())));
    }
    if rho == 0.0 || !rho.is_finite() {
        return Err(PsdcError::InvalidInput(format!("secular weight must be finite and nonzero, got {rho}")));
    }
    if let Some(i) = (1..k).find(|&i| !(dbar[i] > dbar[i - 1])) {
        return Err(PsdcError::NotAscending(i));
    }
    if let Some(i) = zbar.iter().position(|&x| x == 0.0 || !x.is_finite()) {
        return Err(PsdcError::ZeroWeight(i));
    }
    let negated = rho < 0.0;
    let (d, z_raw, rho) = if negated {
        (dbar.iter().rev().map(|x| -x).collect::<Vec<_>>(), zbar.iter().rev().copied().collect::<Vec<_>>(), -rho)
    } else {
        (dbar.to_vec(), zbar.to_vec(), rho)
    };
    let norm2: f64 = z_raw.iter().map(|x| x * x).sum();
    let norm = norm2.sqrt();
    let z: Vec<f64> = z_raw.iter().map(|x| x / norm).collect();
    let rho = rho * norm2;
    let z2: Vec<f64> = z.iter().map(|x| x * x).collect();

    let solve = |i: usize| solve_root(&d, &z2, rho, i);
    let roots: Vec<(f64, f64, f64)> = if k >= PARALLEL_ROOTS {
        (0..k).into_par_iter().map(solve).collect::<Result<_>>()?
    } else {
        (0..k).map(solve).collect::<Result<_>>()?
    };
    let mut lam = Vec::with_capacity(k);
    let mut gamma = Vec::with_capacity(k);
    let mut mu = Vec::with_capacity(k);
    for (l, g, m) in roots {
        lam.push(l);
        gamma.push(g);
        mu.push(m);
    }
    Ok(SecularSolution { d, z, rho, lam, gamma, mu, negated })
}

// Returns (lambda, gamma, mu) for root `i`; rho > 0, unit z.
fn solve_root(d: &[f64], z2: &[f64], rho: f64, i: usize) -> Result<(f64, f64, f64)> {
    let k = d.len();
    let rhoinv = 1.0 / rho;
    let last = i + 1 == k;
    if k == 1 {
        return Ok((d[0] + rho * z2[0], rho * z2[0], 0.0));
    }

    // Origin pole and bracket in shifted coordinates tau = lambda - d[origin].
    let width = if last { rho } else { d[i + 1] - d[i] };
    let origin;
    let (mut lo, mut hi);
    let mut tau;
    {
        let mid = width / 2.0;
        let w_mid = rhoinv + (0..k).map(|j| z2[j] / ((d[j] - d[i]) - mid)).sum::<f64>();
        if last || w_mid >= 0.0 {
            origin = i;
            if w_mid >= 0.0 {
                lo = 0.0;
                hi = mid;
            } else {
                lo = mid;
                hi = width;
            }
            tau = mid;
        } else {
            origin = i + 1;
            lo = -mid;
            hi = 0.0;
            tau = -mid;
        }
    }
    let delta: Vec<f64> = d.iter().map(|&dj| dj - d[origin]).collect();
    // Poles used by the rational model.
    let (pa, pb) = if last { (k - 2, k - 1) } else { (i, i + 1) };

    let eps = f64::EPSILON;
    let mut converged = false;
    for _ in 0..MAX_SECULAR_ITERATIONS {
        let (mut psi, mut dpsi, mut phi, mut dphi, mut abs_sum) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for j in 0..k {
            let den = delta[j] - tau;
            let t = z2[j] / den;
            if j <= pa {
                psi += t;
                dpsi += t / den;
            } else {
                phi += t;
                dphi += t / den;
            }
            abs_sum += t.abs();
        }
        let w = rhoinv + psi + phi;
        let err = eps * (8.0 * (abs_sum + rhoinv) + tau.abs() * (dpsi + dphi));
        if w.abs() <= err {
            converged = true;
            break;
        }
        if w < 0.0 {
            lo = tau;
        } else {
            hi = tau;
        }
        if hi - lo <= 2.0 * eps * lo.abs().max(hi.abs()) {
            converged = true;
            break;
        }

        let da = delta[pa] - tau;
        let db = delta[pb] - tau;
        let s = dpsi * da * da;
        let big_s = dphi * db * db;
        let c = w - dpsi * da - dphi * db;
        let a = c * (da + db) + s + big_s;
        let b = da * db * w;
        let mut candidates = [f64::NAN; 2];
        if c == 0.0 {
            if a != 0.0 {
                candidates[0] = b / a;
            }
        } else {
            let disc = a * a - 4.0 * b * c;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                let q = if a >= 0.0 { a + sq } else { a - sq };
                candidates = [q / (2.0 * c), if q != 0.0 { 2.0 * b / q } else { f64::NAN }];
            }
        }
        let next = candidates
            .iter()
            .map(|eta| tau + eta)
            .filter(|t| t.is_finite() && *t > lo && *t < hi)
            .min_by(|x, y| (x - tau).abs().total_cmp(&(y - tau).abs()));
        let next = next.unwrap_or(0.5 * (lo + hi));
        if next == tau {
            converged = true;
            break;
        }
        tau = next;
    }
    if !converged {
        return Err(PsdcError::NoConvergence(format!("secular root {i} of {k}")));
    }
    let lam = d[origin] + tau;
    let (gamma, mu) = if last {
        (tau, rho - tau)
    } else if origin == i {
        (tau, width - tau)
    } else {
        (width + tau, -tau)
    };
    Ok((lam, gamma, mu))
}

/// Five-vector representation of the eigenvector matrix of `M`:
/// `Qhat[a][b] = u[a] v[b] / (d[a] - lam[b])` in working orientation, the
/// difference evaluated from the gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct QhatGenerators {
    sol: SecularSolution,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Builds the generators. The weight vector is recomputed from the computed
/// roots (Lowner's formula) so the columns are numerically orthogonal; the
/// signs are taken from `zbar`.
pub fn qhat_generators(sol: &SecularSolution, zbar: &[f64]) -> Result<QhatGenerators> {
    let k = sol.k();
    if zbar.len() != k {
        return Err(PsdcError::DimensionMismatch(format!("{k} roots but {} weights", zbar.len())));
    }
    let working_sign = |a: usize| -> f64 {
        let idx = if sol.negated { k - 1 - a } else { a };
        zbar[idx].signum()
    };
    let d = &sol.d;
    let compute_u = |a: usize| -> f64 {
        let mut w = sol.gamma[a] / sol.rho;
        for j in 0..k {
            if j != a {
                w *= -sol.working_diff(a, j) / (d[j] - d[a]);
            }
        }
        working_sign(a) * w.abs().sqrt()
    };
    let u: Vec<f64> = if k >= PARALLEL_ROOTS {
        (0..k).into_par_iter().map(compute_u).collect()
    } else {
        (0..k).map(compute_u).collect()
    };
    let compute_v = |b: usize| -> f64 {
        let s: f64 = (0..k)
            .map(|a| {
                let t = u[a] / sol.working_diff(a, b);
                t * t
            })
            .sum();
        1.0 / s.sqrt()
    };
    let v: Vec<f64> = if k >= PARALLEL_ROOTS {
        (0..k).into_par_iter().map(compute_v).collect()
    } else {
        (0..k).map(compute_v).collect()
    };
    Ok(QhatGenerators { sol: sol.clone(), u, v })
}

impl QhatGenerators {
    pub fn k(&self) -> usize {
        self.u.len()
    }

    pub fn solution(&self) -> &SecularSolution {
        &self.sol
    }

    /// Entry in working orientation.
    #[inline]
    pub fn working_entry(&self, a: usize, b: usize) -> f64 {
        self.u[a] * self.v[b] / self.sol.working_diff(a, b)
    }

    /// Entry `(i, j)` of the eigenvector matrix in original indexing.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if self.sol.negated {
            let k = self.k();
            self.working_entry(k - 1 - i, k - 1 - j)
        } else {
            self.working_entry(i, j)
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let k = self.k();
        DMatrix::from_fn(k, k, |i, j| self.entry(i, j))
    }
}
