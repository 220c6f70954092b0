//! Backpropagated gradients against central finite differences of the loss,
//! for every parameter of a small model containing every layer type.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use softremish::layers::softmax_xent;
use softremish::{ActivationKind, LayerSpec, Model, Tensor};

const H: f64 = 1e-5;
/// |analytic - numeric| <= TOL * max(FLOOR, |analytic|, |numeric|)
const TOL: f64 = 1e-5;
const FLOOR: f64 = 1e-3;

fn small_model(act: ActivationKind, seed: u64) -> Model<f64> {
    let specs = [
        LayerSpec::Conv2d { filters: 3, kernel: (3, 3), activation: act },
        LayerSpec::MaxPool2d { window: (2, 2) },
        LayerSpec::Conv2d { filters: 4, kernel: (2, 2), activation: act },
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 6, activation: act },
        LayerSpec::SoftmaxOutput { classes: 4 },
    ];
    Model::new(&specs, &[9, 9, 2], seed).unwrap()
}

fn inputs(seed: u64) -> (Tensor<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..3 * 9 * 9 * 2).map(|_| rng.gen_range(-1.5..1.5)).collect();
    (Tensor::from_vec(&[3, 9, 9, 2], x).unwrap(), vec![0, 3, 1])
}

fn loss(model: &Model<f64>, x: &Tensor<f64>, y: &[usize]) -> f64 {
    softmax_xent(&model.forward(x).unwrap(), y).unwrap().0
}

fn close(a: f64, n: f64) -> bool {
    (a - n).abs() <= TOL * FLOOR.max(a.abs()).max(n.abs())
}

#[allow(clippy::needless_range_loop)]
fn check_parameters(act: ActivationKind) {
    let (x, y) = inputs(11);
    let mut model = small_model(act, 5);
    let logits = model.forward_train(&x).unwrap();
    let (_, g) = softmax_xent(&logits, &y).unwrap();
    model.backward(&g).unwrap();
    let analytic: Vec<Vec<f64>> = model.layers().iter().flat_map(|l| l.grads()).map(|t| t.data().to_vec()).collect();

    let mut checked = 0;
    let mut tensor_index = 0;
    for li in 0..model.layers().len() {
        let count = model.layers()[li].params().len();
        for pi in 0..count {
            let len = model.layers()[li].params()[pi].len();
            for e in 0..len {
                let orig = model.layers()[li].params()[pi].data()[e];
                model.layers_mut()[li].params_mut()[pi].data_mut()[e] = orig + H;
                let up = loss(&model, &x, &y);
                model.layers_mut()[li].params_mut()[pi].data_mut()[e] = orig - H;
                let down = loss(&model, &x, &y);
                model.layers_mut()[li].params_mut()[pi].data_mut()[e] = orig;
                let numeric = (up - down) / (2.0 * H);
                let a = analytic[tensor_index][e];
                assert!(close(a, numeric), "{act}: layer {li} param {pi} elem {e}: {a} vs {numeric}");
                checked += 1;
            }
            tensor_index += 1;
        }
    }
    assert_eq!(checked, model.param_count());
}

fn check_input(act: ActivationKind) {
    let (mut x, y) = inputs(23);
    let mut model = small_model(act, 8);
    let logits = model.forward_train(&x).unwrap();
    let (_, g) = softmax_xent(&logits, &y).unwrap();
    let dx = model.backward_to_input(&g).unwrap();
    assert_eq!(dx.shape(), x.shape());
    for e in 0..x.len() {
        let orig = x.data()[e];
        x.data_mut()[e] = orig + H;
        let up = loss(&model, &x, &y);
        x.data_mut()[e] = orig - H;
        let down = loss(&model, &x, &y);
        x.data_mut()[e] = orig;
        let numeric = (up - down) / (2.0 * H);
        assert!(close(dx.data()[e], numeric), "{act}: input {e}: {} vs {numeric}", dx.data()[e]);
    }
}

#[test]
fn parameter_gradients_tanh() {
    check_parameters(ActivationKind::Tanh);
}

#[test]
fn parameter_gradients_softplus() {
    check_parameters(ActivationKind::Softplus);
}

#[test]
fn parameter_gradients_mish() {
    check_parameters(ActivationKind::Mish);
}

#[test]
fn parameter_gradients_softremish() {
    check_parameters(ActivationKind::SoftReMish { alpha: 2.0 });
    check_parameters(ActivationKind::SoftReMish { alpha: 0.5 });
}

#[test]
fn parameter_gradients_relu() {
    // Random real-valued inputs keep every pre-activation away from the kink
    // by far more than H.
    check_parameters(ActivationKind::ReLU);
}

#[test]
fn input_gradients() {
    for act in [
        ActivationKind::ReLU,
        ActivationKind::Tanh,
        ActivationKind::Softplus,
        ActivationKind::Mish,
        ActivationKind::SoftReMish { alpha: 2.0 },
    ] {
        check_input(act);
    }
}
