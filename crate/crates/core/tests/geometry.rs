use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use sleepgeom::geometry::{affinity, diffusion_map, euclidean_sq, local_covariances, local_md_sq, transition, DiagonalPolicy, DimSelect};
use sleepgeom::tfa::{BandSet, FeatureExtractor, StftParams};

fn cloud(rows: std::ops::Range<usize>, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    rows.prop_flat_map(move |n| prop::collection::vec(-5.0f64..5.0, n * cols).prop_map(move |v| DMatrix::from_row_slice(n, cols, &v)))
}

fn distinct(u: &DMatrix<f64>) -> bool {
    let d = euclidean_sq(u);
    (0..u.nrows()).all(|i| (0..i).all(|j| d[(i, j)] > 1e-6))
}

proptest! {
    #[test]
    fn walk_is_stochastic_with_spectrum_in_unit_interval(u in cloud(4..40, 3), q in 0.05f64..1.0, one in prop::bool::ANY) {
        prop_assume!(distinct(&u));
        let diag = if one { DiagonalPolicy::One } else { DiagonalPolicy::Zero };
        let w = affinity(&euclidean_sq(&u), q, diag).unwrap();
        let a = transition(&w).unwrap();
        for r in a.a.row_iter() {
            prop_assert!((r.sum() - 1.0).abs() < 1e-12);
            prop_assert!(r.iter().all(|x| *x >= 0.0));
        }
        // conjugate symmetric form shares the spectrum of A
        let deg: Vec<f64> = w.w.row_iter().map(|r| r.sum()).collect();
        let s = DMatrix::from_fn(u.nrows(), u.nrows(), |i, j| w.w[(i, j)] / (deg[i] * deg[j]).sqrt());
        let ev = SymmetricEigen::new(s).eigenvalues;
        let top = ev.iter().cloned().fold(f64::MIN, f64::max);
        prop_assert!((top - 1.0).abs() < 1e-10, "top eigenvalue {}", top);
        prop_assert!(ev.iter().all(|l| *l >= -1.0 - 1e-10 && *l <= 1.0 + 1e-10));
        // the constant vector is the matching right eigenvector
        let ones = nalgebra::DVector::from_element(u.nrows(), 1.0);
        prop_assert!((&a.a * &ones - &ones).amax() < 1e-12);
    }

    #[test]
    fn local_md_is_a_symmetric_nonnegative_form(u in cloud(30..60, 5), d in 1usize..=5) {
        prop_assume!(distinct(&u));
        let cov = local_covariances(&u, 0.3).unwrap();
        let m = local_md_sq(&u, &cov, d).unwrap();
        for i in 0..m.nrows() {
            prop_assert_eq!(m[(i, i)], 0.0);
            for j in 0..m.ncols() {
                prop_assert!(m[(i, j)] >= 0.0);
                prop_assert_eq!(m[(i, j)], m[(j, i)]);
            }
        }
    }

    #[test]
    fn diffusion_map_commutes_with_relabeling(u in cloud(8..30, 2), perm_seed in any::<u64>()) {
        prop_assume!(distinct(&u));
        let n = u.nrows();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = perm_seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let up = DMatrix::from_fn(n, 2, |i, j| u[(perm[i], j)]);
        let d = 3.min(n - 2);
        let embed = |x: &DMatrix<f64>| {
            let w = affinity(&euclidean_sq(x), 0.5, DiagonalPolicy::Zero).unwrap();
            diffusion_map(&transition(&w).unwrap(), 1.0, DimSelect::Fixed { d }).unwrap()
        };
        let (e, ep) = (embed(&u), embed(&up));
        // skip near-degenerate spectra where the basis is not unique
        let gaps = e.eigenvalues.windows(2).all(|w| (w[0] - w[1]).abs() > 1e-6);
        prop_assume!(gaps);
        for c in 0..d {
            prop_assert!((e.eigenvalues[c] - ep.eigenvalues[c]).abs() < 1e-9);
            let col: Vec<f64> = (0..n).map(|i| e.coords[(perm[i], c)]).collect();
            let same = (0..n).map(|i| (col[i] - ep.coords[(i, c)]).abs()).fold(0.0, f64::max);
            let flip = (0..n).map(|i| (col[i] + ep.coords[(i, c)]).abs()).fold(0.0, f64::max);
            let scale = col.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            prop_assert!(same.min(flip) <= 1e-6 * scale.max(1e-12), "column {} differs by {}", c, same.min(flip));
        }
    }
}

fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(f)
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let u = DMatrix::from_fn(120, 10, |i, j| ((i * 31 + j * 17) % 23) as f64 + (i as f64 * 0.37 + j as f64).sin());
    let run = || {
        let cov = local_covariances(&u, 0.1).unwrap();
        let m = local_md_sq(&u, &cov, 7).unwrap();
        let w = affinity(&m, 0.05, DiagonalPolicy::Zero).unwrap();
        diffusion_map(&transition(&w).unwrap(), 1.0, DimSelect::Fixed { d: 10 }).unwrap().coords
    };
    let (a, b) = (with_threads(1, run), with_threads(4, run));
    assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));

    let x: Vec<f64> = (0..9000).map(|m| (m as f64 * 0.3).sin() + (m as f64 * 0.021).cos()).collect();
    let ex = FeatureExtractor::new(StftParams::new(0.01, 101, 256), BandSet::default()).unwrap();
    let epochs = [0..3000, 3000..6000, 6000..9000];
    let f = || ex.extract(&x, &epochs, &[0, 1, 2]).unwrap();
    assert_eq!(with_threads(1, f), with_threads(4, f));
}
