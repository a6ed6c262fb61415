mod common;

use advrect::nn::{LayerParams, Model};
use advrect::Tensor;
use proptest::prelude::*;

use common::{central_diff, random_case, rel_err, worst_gradient_error, FD_STEP};

fn with_param(model: &Model, layer: usize, index: usize, value: f64) -> Model {
    let mut params = model.params().to_vec();
    let p: &mut LayerParams = params[layer].as_mut().unwrap();
    let nw = p.weight.len();
    if index < nw {
        p.weight[index] = value;
    } else {
        p.bias[index - nw] = value;
    }
    Model::with_params(model.input_shape().to_vec(), model.layers().to_vec(), params).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn input_gradients_match_central_differences(seed in any::<u64>()) {
        let (model, x) = random_case(seed);
        let err = worst_gradient_error(&model, &x);
        prop_assert!(err <= 1e-5, "relative error {err}");
    }

    #[test]
    fn parameter_gradients_match_central_differences(seed in any::<u64>(), label in 0usize..2) {
        let (model, x) = random_case(seed);
        let g = model.loss_full_grad(&x, label).unwrap();
        let grads = g.param_grads.unwrap();
        for (i, slot) in model.params().iter().enumerate() {
            let Some(p) = slot else { continue };
            let flat: Vec<f64> = p.weight.iter().chain(&p.bias).copied().collect();
            let num = central_diff(&flat, FD_STEP, |v| {
                let changed = v.iter().zip(&flat).position(|(a, b)| a != b);
                let m = match changed {
                    Some(j) => with_param(&model, i, j, v[j]),
                    None => model.clone(),
                };
                m.loss_input_grad(&x, label).unwrap().loss
            });
            let gp = grads[i].as_ref().unwrap();
            let analytic: Vec<f64> = gp.weight.iter().chain(&gp.bias).copied().collect();
            let err = rel_err(&analytic, &num);
            prop_assert!(err <= 1e-5, "layer {i}: relative error {err}");
        }
    }

    #[test]
    fn vjp_is_a_weighted_sum_of_jacobian_rows(seed in any::<u64>(), w in prop::collection::vec(-2.0f64..2.0, 5)) {
        let (model, x) = random_case(seed);
        let k = model.num_classes();
        let jac = model.logit_jacobian(&x).unwrap();
        let (logits, g) = model.logit_vjp(&x, &w[..k]).unwrap();
        prop_assert_eq!(logits.data(), jac.logits.data());
        let mut expected = Tensor::zeros(x.shape().to_vec());
        for (row, wk) in jac.rows.iter().zip(&w) {
            expected = expected.add_scaled(row, *wk);
        }
        for (a, b) in g.data().iter().zip(expected.data()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}
