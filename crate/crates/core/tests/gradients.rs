//! Finite-difference checks for every layer kind and for the composite
//! objective on a miniature model.

use adep::model::{
    check_adep_gradients, AdepArch, AdepModel, AdversarialMode, LossCoefficients, Subnet,
};
use adep::nn::{check_sequential, GradCheckOptions, Layer, LossTarget, Matrix, Sequential};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.5..1.5))
}

fn binary(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| if rng.gen_bool(0.4) { 1.0 } else { 0.0 })
}

fn opts() -> GradCheckOptions {
    GradCheckOptions::default()
}

#[test]
fn each_layer_kind_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let input = random(5, 4, &mut rng);
    let dense_target = random(5, 3, &mut rng).map(|v| v.abs() * 0.3);
    let cases: Vec<(&str, Vec<Layer>, LossTarget)> = vec![
        (
            "linear",
            vec![Layer::linear(4, 3, &mut rng)],
            LossTarget::Mae(dense_target.clone()),
        ),
        (
            "batchnorm",
            vec![Layer::linear(4, 3, &mut rng), Layer::batch_norm(3)],
            LossTarget::Mae(dense_target.clone()),
        ),
        (
            "relu",
            vec![Layer::linear(4, 3, &mut rng), Layer::relu()],
            LossTarget::Mae(dense_target.clone().map(|v| v + 2.0)),
        ),
        (
            "dropout",
            vec![Layer::linear(4, 3, &mut rng), Layer::dropout(0.5).unwrap()],
            LossTarget::Mae(dense_target.clone()),
        ),
        (
            "sigmoid",
            vec![Layer::linear(4, 1, &mut rng), Layer::sigmoid()],
            LossTarget::Bce(vec![1.0, 0.0, 0.0, 1.0, 1.0]),
        ),
        (
            "logsoftmax",
            vec![Layer::linear(4, 3, &mut rng), Layer::log_softmax()],
            LossTarget::Nll(vec![0, 2, 1, 1, 0]),
        ),
    ];
    for (name, layers, loss) in cases {
        let mut net = Sequential::new(name, layers).unwrap();
        let report = check_sequential(&mut net, loss, &input, &opts()).unwrap();
        assert!(
            report.passed,
            "{name}: max rel error {} at {}",
            report.max_rel_error, report.worst_tensor
        );
        assert!(report.tensors.iter().any(|t| t.name == "input"));
    }
}

#[test]
fn mlp_with_nll_passes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let input = random(4, 6, &mut rng);
    let mut net = Sequential::new(
        "mlp",
        vec![
            Layer::linear(6, 5, &mut rng),
            Layer::relu(),
            Layer::linear(5, 3, &mut rng),
            Layer::log_softmax(),
        ],
    )
    .unwrap();
    let report =
        check_sequential(&mut net, LossTarget::Nll(vec![0, 1, 2, 1]), &input, &opts()).unwrap();
    assert!(report.passed, "{}", report.max_rel_error);
}

#[test]
fn mae_autoencoder_stack_passes() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let input = binary(6, 5, &mut rng);
    let mut net = Sequential::new(
        "ae",
        vec![
            Layer::linear(5, 3, &mut rng),
            Layer::sigmoid(),
            Layer::linear(3, 5, &mut rng),
            Layer::sigmoid(),
        ],
    )
    .unwrap();
    let report =
        check_sequential(&mut net, LossTarget::Mae(input.clone()), &input, &opts()).unwrap();
    assert!(report.passed, "{}", report.max_rel_error);
}

#[test]
fn corrupted_backward_is_caught() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let input = random(4, 6, &mut rng);
    let mut net = Sequential::new(
        "mlp",
        vec![
            Layer::linear(6, 5, &mut rng),
            Layer::relu(),
            Layer::linear(5, 3, &mut rng),
            Layer::log_softmax(),
        ],
    )
    .unwrap();
    net.inject_sign_flip(Some(2));
    let report =
        check_sequential(&mut net, LossTarget::Nll(vec![0, 1, 2, 1]), &input, &opts()).unwrap();
    assert!(report.max_rel_error > 0.1, "{}", report.max_rel_error);
    assert!(!report.passed);
}

fn mini_setup(seed: u64) -> (AdepModel, Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = AdepArch::mini(12, 3).unwrap();
    let model = AdepModel::new(arch, seed).unwrap();
    let x = binary(6, 12, &mut rng);
    let labels = vec![0, 1, 2, 0, 1, 2];
    (model, x, labels)
}

#[test]
fn mini_adep_joint_objective_passes() {
    let (mut model, x, labels) = mini_setup(1);
    let report = check_adep_gradients(
        &mut model,
        &x,
        &labels,
        &LossCoefficients::default(),
        AdversarialMode::Joint,
        1,
        &opts(),
    )
    .unwrap();
    assert!(
        report.passed,
        "{} at {}",
        report.max_rel_error, report.worst_tensor
    );
    assert_eq!(report.tensors.len(), model.params().len());
}

#[test]
fn mini_adep_alternating_objectives_pass() {
    let (mut model, x, labels) = mini_setup(2);
    let report = check_adep_gradients(
        &mut model,
        &x,
        &labels,
        &LossCoefficients::default(),
        AdversarialMode::Alternating,
        2,
        &opts(),
    )
    .unwrap();
    assert!(
        report.passed,
        "{} at {}",
        report.max_rel_error, report.worst_tensor
    );
    assert_eq!(report.tensors.len(), model.params().len());
}

#[test]
fn sign_flip_in_any_mini_layer_fails_the_check() {
    for subnet in Subnet::ALL {
        let layers = mini_setup(1).0.subnet(subnet).layers().len();
        for index in 0..layers {
            let (mut model, x, labels) = mini_setup(1);
            model.subnet_mut(subnet).inject_sign_flip(Some(index));
            let report = check_adep_gradients(
                &mut model,
                &x,
                &labels,
                &LossCoefficients::default(),
                AdversarialMode::Joint,
                1,
                &opts(),
            )
            .unwrap();
            assert!(
                report.max_rel_error > 0.1,
                "{}[{index}] flip went unnoticed: {}",
                subnet.name(),
                report.max_rel_error
            );
        }
    }
}
