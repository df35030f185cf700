use adep::nn::{bce_loss, mae_loss, nll_loss, Layer, Matrix, Mode, BATCH_NORM_EPS};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn column_moments(m: &Matrix, c: usize) -> (f64, f64) {
    let n = m.rows() as f64;
    let mean = (0..m.rows()).map(|r| m.get(r, c)).sum::<f64>() / n;
    let var = (0..m.rows())
        .map(|r| (m.get(r, c) - mean).powi(2))
        .sum::<f64>()
        / n;
    (mean, var)
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-1.0f64..1.0, rows * cols)
        .prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Output moments follow gamma and beta. The variance is exactly
    /// `gamma^2 * s / (s + eps)` for input variance `s`, so it is within
    /// 1e-6 of `gamma^2` once `s` is large against eps.
    #[test]
    fn batch_norm_moments(
        (rows, x) in (2usize..40).prop_flat_map(|r| (Just(r), matrix(r, 4))),
        scale in 10.0f64..1000.0,
        gamma in prop::collection::vec(0.5f64..2.0, 4),
        beta in prop::collection::vec(-3.0f64..3.0, 4),
    ) {
        let _ = rows;
        let x = x.map(|v| v * scale);
        let mut layer = Layer::batch_norm(4);
        {
            let mut params = layer.params();
            params[0].value.copy_from_slice(&gamma);
            params[1].value.copy_from_slice(&beta);
        }
        let y = layer.forward(&x, Mode::Train, &mut rng(0)).unwrap();
        for c in 0..4 {
            let (_, s) = column_moments(&x, c);
            let (mean, var) = column_moments(&y, c);
            prop_assert!((mean - beta[c]).abs() < 1e-9, "mean {mean} vs beta {}", beta[c]);
            let exact = gamma[c] * gamma[c] * s / (s + BATCH_NORM_EPS);
            prop_assert!((var - exact).abs() < 1e-9 * exact.max(1.0));
            if s > 100.0 * BATCH_NORM_EPS / 1e-6 {
                prop_assert!((var - gamma[c] * gamma[c]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn log_softmax_rows_normalize(x in matrix(5, 7), shift in -500.0f64..500.0, spread in 1.0f64..60.0) {
        let x = x.map(|v| v * spread + shift);
        let mut layer = Layer::log_softmax();
        let y = layer.forward(&x, Mode::Train, &mut rng(0)).unwrap();
        for r in 0..y.rows() {
            let total: f64 = y.row(r).iter().map(|v| v.exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(y.row(r).iter().all(|v| *v <= 0.0));
        }
    }

    #[test]
    fn losses_are_non_negative(
        logits in matrix(6, 4),
        labels in prop::collection::vec(0usize..4, 6),
        target in matrix(6, 4),
        p in prop::collection::vec(0.0f64..=1.0, 6),
        bits in prop::collection::vec(any::<bool>(), 6),
    ) {
        let lp = Layer::log_softmax().forward(&logits.map(|v| 20.0 * v), Mode::Train, &mut rng(0)).unwrap();
        prop_assert!(nll_loss(&lp, &labels).unwrap().value >= 0.0);
        prop_assert!(mae_loss(&logits, &target).unwrap().value >= 0.0);
        prop_assert_eq!(mae_loss(&target, &target).unwrap().value, 0.0);
        let probs = Matrix::from_vec(6, 1, p).unwrap();
        let y: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        prop_assert!(bce_loss(&probs, &y).unwrap().value >= 0.0);
    }
}

/// Dropped fraction passes a chi-square test at p = 0.001 over 20,000
/// entries; survivors are scaled so the expected output equals the input.
#[test]
fn dropout_rate_and_scaling() {
    for (seed, rate) in [(1, 0.1), (2, 0.2), (3, 0.3), (4, 0.5), (5, 0.7)] {
        let mut layer = Layer::dropout(rate).unwrap();
        let x = Matrix::filled(200, 100, 1.0);
        let y = layer.forward(&x, Mode::Train, &mut rng(seed)).unwrap();
        let n = y.data().len() as f64;
        let dropped = y.data().iter().filter(|v| **v == 0.0).count() as f64;
        let kept = n - dropped;
        let chi2 = (dropped - n * rate).powi(2) / (n * rate)
            + (kept - n * (1.0 - rate)).powi(2) / (n * (1.0 - rate));
        assert!(chi2 < 10.83, "rate {rate}: chi-square {chi2}");
        let scale = 1.0 / (1.0 - rate);
        assert!(y
            .data()
            .iter()
            .all(|v| *v == 0.0 || (*v - scale).abs() < 1e-15));
        let mean = y.data().iter().sum::<f64>() / n;
        assert!((mean - 1.0).abs() < 0.05, "rate {rate}: mean {mean}");
        let eval = layer.forward(&x, Mode::Eval, &mut rng(seed)).unwrap();
        assert_eq!(eval, x);
    }
}

#[test]
fn batch_norm_rejects_single_rows_in_training() {
    let mut layer = Layer::batch_norm(3);
    assert!(layer
        .forward(&Matrix::zeros(1, 3), Mode::Train, &mut rng(0))
        .is_err());
    assert!(layer
        .forward(&Matrix::zeros(1, 3), Mode::Eval, &mut rng(0))
        .is_ok());
}
