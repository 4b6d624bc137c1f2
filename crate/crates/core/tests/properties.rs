use proptest::prelude::*;
use psdc_core::gridsim::{BlockCyclicLayout, Grid};
use psdc_core::matrices::TridiagonalMatrix;
use psdc_core::secular::solve_secular;

proptest! {
    #[test]
    fn block_cyclic_maps_are_inverse(
        m in 1usize..60, n in 1usize..60, mb in 1usize..9, nb in 1usize..9,
        p in 1usize..4, q in 1usize..4, sr in 0usize..4, sc in 0usize..4,
    ) {
        let g = Grid::new(p, q).unwrap();
        let l = BlockCyclicLayout::new(m, n, mb, nb, g).unwrap().with_source(sr, sc);
        let total: usize = (0..p).map(|r| l.local_rows(r)).sum::<usize>() * (0..q).map(|c| l.local_cols(c)).sum::<usize>();
        prop_assert_eq!(total, m * n);
        for gi in 0..m {
            for gj in 0..n {
                let (rank, li, lj) = l.owner_and_local(gi, gj).unwrap();
                prop_assert_eq!(l.local_to_global(rank, li, lj).unwrap(), (gi, gj));
            }
        }
    }

    #[test]
    fn text_format_round_trips(diag in prop::collection::vec(-1e3f64..1e3, 1..20), seed in any::<u64>()) {
        let off: Vec<f64> = (1..diag.len()).map(|i| ((seed.wrapping_mul(i as u64 + 7) % 1000) as f64 - 500.0) / 7.0).collect();
        let t = TridiagonalMatrix::new(diag, off).unwrap();
        prop_assert_eq!(TridiagonalMatrix::from_text(&t.to_text()).unwrap(), t);
    }

    #[test]
    fn secular_roots_interlace(
        gaps in prop::collection::vec(1e-3f64..2.0, 1..40),
        z in prop::collection::vec(0.05f64..1.0, 40),
        rho in prop_oneof![0.01f64..4.0, -4.0f64..-0.01],
    ) {
        let mut d = Vec::with_capacity(gaps.len());
        let mut acc = -1.0;
        for g in &gaps {
            acc += g;
            d.push(acc);
        }
        let k = d.len();
        let z = &z[..k];
        let sol = solve_secular(&d, z, rho).unwrap();
        let lam = sol.eigenvalues();
        let zn: f64 = z.iter().map(|x| x * x).sum();
        for i in 0..k {
            if rho > 0.0 {
                // The outer bound is attained when k = 1.
                let ok = if i + 1 < k { lam[i] < d[i + 1] } else { lam[i] <= d[i] + rho * zn + 1e-12 };
                prop_assert!(d[i] < lam[i] && ok);
            } else {
                let ok = if i > 0 { d[i - 1] < lam[i] } else { d[0] + rho * zn - 1e-12 <= lam[i] };
                prop_assert!(ok && lam[i] < d[i]);
            }
        }
    }
}
