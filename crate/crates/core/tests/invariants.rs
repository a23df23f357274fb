use optiloop::engine::{invert_matrix, LoopConfig};
use optiloop::hardware::{encode_weight_bank, CalibrationSet, NoiseConfig};
use optiloop::linalg::{accuracy_percent, dense_invert, matadd, matmul};
use optiloop::{Matrix, Sign, StreamKey};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn matrix(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(lo..hi, n * n).prop_map(move |v| Matrix::new(n, n, v).unwrap())
}

/// `I + 0.1·B` with `|b| < 1` keeps `ρ(I − A) < 1` and `I − A` encodable.
fn near_identity() -> impl Strategy<Value = Matrix> {
    matrix(4, 0.0, 1.0)
        .prop_map(|b| matadd(&Matrix::identity(4), &b.scale(-0.2), Sign::Plus).unwrap())
}

proptest! {
    #[test]
    fn frobenius_is_homogeneous(m in matrix(4, -5.0, 5.0), c in -3.0f64..3.0) {
        let lhs = m.scale(c).frobenius_norm();
        prop_assert!((lhs - c.abs() * m.frobenius_norm()).abs() <= 1e-12 * (1.0 + lhs));
    }

    #[test]
    fn accuracy_of_exact_is_100(m in matrix(4, -5.0, 5.0)) {
        prop_assume!(m.frobenius_norm() > 0.0);
        prop_assert_eq!(accuracy_percent(&m, &m).unwrap(), 100.0);
    }

    #[test]
    fn dense_inverse_residual(b in matrix(6, -1.0, 1.0)) {
        let a = matadd(&Matrix::identity(6).scale(4.0), &b, Sign::Plus).unwrap();
        let r = matmul(&a, &dense_invert(&a).unwrap()).unwrap();
        prop_assert!(matadd(&r, &Matrix::identity(6), Sign::Minus).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn ideal_loop_matches_dense(a in near_identity()) {
        let inv = invert_matrix(&a, &LoopConfig::ideal(1e-13), StreamKey::root(0)).unwrap();
        let dense = dense_invert(&a).unwrap();
        prop_assert!(accuracy_percent(&inv.inverse, &dense).unwrap() > 99.9999);
    }

    #[test]
    fn noisy_runs_repeat(a in near_identity(), seed in any::<u64>()) {
        let cfg = LoopConfig {
            noise: NoiseConfig { sigma_weight: 1e-3, sigma_ase: 1e-3, ..Default::default() },
            calibration: Some(CalibrationSet::default()),
            ..LoopConfig::ideal(1e-3)
        };
        cfg.validate().unwrap();
        let key = StreamKey::root(seed);
        let first = invert_matrix(&a, &cfg, key);
        let second = invert_matrix(&a, &cfg, key);
        match (first, second) {
            (Ok(x), Ok(y)) => prop_assert_eq!(x.inverse, y.inverse),
            (Err(x), Err(y)) => prop_assert_eq!(x.to_string(), y.to_string()),
            _ => prop_assert!(false, "outcomes differ"),
        }
    }
}

#[test]
fn quantization_error_within_bound() {
    let cals = CalibrationSet::default();
    let bound = cals.quantization_bound();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let m = Matrix::from_fn(4, 4, |_, _| rng.gen_range(0.0..1.0));
        let bank = encode_weight_bank(&m, Some(&cals), &NoiseConfig::default(), StreamKey::root(0))
            .unwrap();
        let err = matadd(bank.realized(), &m, Sign::Minus).unwrap().max_abs();
        worst = worst.max(err);
    }
    assert!(worst <= bound, "{worst} > {bound}");
    assert!(worst >= bound / 2.0, "{worst} far below {bound}");
}
