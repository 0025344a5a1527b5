use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sleepgeom::tfa::{stft, stft_pair, synchrosqueeze, BandSet, FeatureExtractor, StftParams, Window};

fn small_params() -> impl Strategy<Value = StftParams> {
    (5usize..40, 1usize..4, prop::bool::ANY).prop_map(|(half, mult, full)| {
        let h = 2 * half + 1;
        let p = StftParams::new(0.01, h, mult * h + 3);
        if full {
            p.full_spectrum()
        } else {
            p
        }
    })
}

proptest! {
    #[test]
    fn stft_is_linear(
        x in prop::collection::vec(-10.0f64..10.0, 64..200),
        seed in any::<u64>(),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        p in small_params(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let y: Vec<f64> = x.iter().map(|_| normal.sample(&mut rng)).collect();
        let z: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let n = x.len();
        for w in [Window::Gaussian, Window::GaussianDerivative] {
            let (gx, gy, gz) = (stft(&x, &p, w, 0..n).unwrap(), stft(&y, &p, w, 0..n).unwrap(), stft(&z, &p, w, 0..n).unwrap());
            let scale = gz.values.iter().map(|c| c.norm()).fold(1.0, f64::max);
            for ((vx, vy), vz) in gx.values.iter().zip(&gy.values).zip(&gz.values) {
                prop_assert!((vx * a + vy * b - vz).norm() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn synchrosqueezing_never_creates_mass(
        x in prop::collection::vec(-10.0f64..10.0, 64..200),
        p in small_params(),
    ) {
        let (vh, vdh) = stft_pair(&x, &p, 0..x.len()).unwrap();
        let s = synchrosqueeze(&vh, &vdh).unwrap();
        prop_assert!(s.values.iter().all(|v| *v >= 0.0));
        prop_assert!(s.total() <= vh.energy() * (1.0 + 1e-12));
    }
}

#[test]
fn interior_tone_conserves_mass_on_full_spectrum() {
    let p = StftParams::new(0.01, 101, 400).full_spectrum();
    let x: Vec<f64> = (0..600).map(|m| (2.0 * PI * 12.0 * m as f64 * 0.01).cos()).collect();
    let (vh, vdh) = stft_pair(&x, &p, 200..400).unwrap();
    let s = synchrosqueeze(&vh, &vdh).unwrap();
    assert!((s.total() - vh.energy()).abs() <= 1e-9 * vh.energy());
}

#[test]
fn band_features_are_robust_to_10db_noise() {
    let fs = 100.0;
    let params = StftParams::new(1.0 / fs, 1001, 4004);
    let n = 5000;
    let clean: Vec<f64> = (0..n)
        .map(|m| {
            let t = m as f64 / fs;
            (2.0 * PI * 2.0 * t).cos() + (2.0 * PI * 10.0 * t).cos()
        })
        .collect();
    let power = clean.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let normal = Normal::new(0.0, (power / 10.0).sqrt()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let noisy: Vec<f64> = clean.iter().map(|v| v + normal.sample(&mut rng)).collect();

    let ex = FeatureExtractor::new(params, BandSet::default()).unwrap();
    let a = ex.extract(&clean, &[1000..4000], &[0]).unwrap().remove(0).u;
    let b = ex.extract(&noisy, &[1000..4000], &[0]).unwrap().remove(0).u;
    let shift = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(shift < 0.1, "l-infinity shift {shift}: {a:?} vs {b:?}");
}
