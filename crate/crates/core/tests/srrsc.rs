use nalgebra::DMatrix;
use psdc_core::cauchy::{srrsc_compress, CauchyLike, SchurState};
use psdc_core::matrices::make_toeplitz_type;
use psdc_core::secular::{deflate, qhat_generators, solve_secular, RankOneProblem};

fn off_diagonal(n: usize, seed: u64) -> CauchyLike {
    let full = CauchyLike::interlaced(n, seed);
    let rows: Vec<usize> = (n / 2..n).collect();
    let cols: Vec<usize> = (0..n / 2).collect();
    full.submatrix(&rows, &cols)
}

/// Cauchy-like eigenvector matrix of a rank-one update of a Toeplitz spectrum.
fn merge_generators(n: usize) -> CauchyLike {
    let t = make_toeplitz_type(n).unwrap();
    let d: Vec<f64> = t.diag().iter().enumerate().map(|(i, x)| x + (i as f64 * 0.37).sin()).collect();
    let z: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * (i as f64).cos()).collect();
    let p = RankOneProblem::new(d, z, 0.8).unwrap();
    let out = deflate(&p, p.default_tol());
    let sol = solve_secular(&out.dbar, &out.zbar, out.rho).unwrap();
    let g = qhat_generators(&sol, &out.zbar).unwrap();
    let full = CauchyLike::from_qhat(&g);
    let k = full.nrows();
    let rows: Vec<usize> = (k / 2..k).collect();
    let cols: Vec<usize> = (0..k / 2).collect();
    full.submatrix(&rows, &cols)
}

fn instances() -> Vec<(&'static str, CauchyLike)> {
    vec![("interlaced-128", off_diagonal(128, 1)), ("interlaced-256", off_diagonal(256, 2)), ("merge-200", merge_generators(200))]
}

#[test]
fn reconstruction_error_non_increasing_in_rank() {
    for (name, c) in instances() {
        let a = c.to_dense();
        let top = c.nrows().min(c.ncols());
        let mut prev = f64::INFINITY;
        for k in 1..=top.min(48) {
            let f = srrsc_compress(&c, 0.0, k).unwrap();
            let err = (&a - f.reconstruct(&c)).norm();
            assert!(err <= prev * (1.0 + 1e-8) + 1e-13 * a.norm(), "{name}: rank {k} error {err:.3e} after {prev:.3e}");
            prev = err;
        }
    }
}

#[test]
fn pivot_quality_against_full_scan() {
    let mut worst = 1.0_f64;
    for (name, c) in instances() {
        let mut s = SchurState::new(&c);
        for _ in 0..30 {
            let k = s.k();
            let (m, n) = (c.nrows() - k, c.ncols() - k);
            let mut full = 0.0_f64;
            for j in 0..n {
                for i in 0..m {
                    full = full.max(s.schur_entry(&c, i, j).abs());
                }
            }
            if full < 1e-14 * c.max_abs() {
                break;
            }
            s.pivot_select(&c);
            let got = s.schur_entry(&c, 0, 0).abs();
            worst = worst.min(got / full);
            assert!(got >= 0.5 * full, "{name} step {k}: pivot {got:.3e} vs scan max {full:.3e}");
            s.schur_step(&c).unwrap();
        }
    }
    println!("worst pivot ratio {worst:.3}");
}

#[test]
fn compressed_block_times_dense_panel() {
    let c = off_diagonal(256, 9);
    let f = srrsc_compress(&c, 1e-13, 128).unwrap();
    assert!(!f.truncated);
    let a = DMatrix::from_fn(64, c.nrows(), |i, j| ((i * 31 + j * 17) % 23) as f64 / 23.0 - 0.5);
    let exact = &a * c.to_dense();
    let got = psdc_core::cauchy::apply_factor(&a, &f, &c).unwrap();
    assert!((&got - &exact).norm() / exact.norm() <= 1e-9);
}
