use crate::embedder::Params;
use crate::error::{Error, Result};

/// Momentum buffers plus the number of completed steps.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub velocity: Params,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &Params) -> Self {
        Self {
            velocity: params.zeros_like(),
            step: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdHyper {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Apply weight decay to bias vectors as well as weights.
    pub decay_biases: bool,
}

/// One Nesterov update of a single tensor:
/// `g = grad + wd*p; v = mu*v - lr*g; p = p + mu*v - lr*g`.
pub fn nesterov_update(
    param: &mut [f64],
    grad: &[f64],
    velocity: &mut [f64],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    for ((p, g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        let g = g + weight_decay * *p;
        *v = momentum * *v - lr * g;
        *p += momentum * *v - lr * g;
    }
}

pub fn nesterov_step(
    params: &mut Params,
    grads: &Params,
    state: &mut OptimizerState,
    hyper: SgdHyper,
) -> Result<()> {
    let shapes = params.shapes();
    if grads.shapes() != shapes || state.velocity.shapes() != shapes {
        return Err(Error::Invalid("parameter, gradient and velocity shapes differ".into()));
    }
    let bias = params.bias_mask();
    let grads = grads.tensors();
    let velocity = state.velocity.tensors_mut();
    for (((p, g), v), is_bias) in params.tensors_mut().into_iter().zip(grads).zip(velocity).zip(bias) {
        let wd = if is_bias && !hyper.decay_biases { 0.0 } else { hyper.weight_decay };
        nesterov_update(p, g, v, hyper.lr, hyper.momentum, wd);
    }
    state.step += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::{init_model, ModelConfig};
    use crate::source::Source;

    #[test]
    fn plain_sgd_without_momentum() {
        let mut p = vec![1.0, -2.0];
        let mut v = vec![0.0, 0.0];
        nesterov_update(&mut p, &[0.5, 0.25], &mut v, 0.1, 0.0, 0.0);
        assert_eq!(p, vec![1.0 - 0.1 * 0.5, -2.0 - 0.1 * 0.25]);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![1.0, -2.0];
        let mut v = vec![0.0, 0.0];
        nesterov_update(&mut p, &[0.0, 0.0], &mut v, 0.1, 0.9, 0.0);
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn quadratic_two_steps() {
        // f(x) = x^2, grad 2x, lr 0.1, mu 0.9.
        // step 1: g = 2, v = -0.2, x = 1 + 0.9*(-0.2) - 0.2 = 0.62
        // step 2: g = 1.24, v = 0.9*(-0.2) - 0.124 = -0.304,
        //         x = 0.62 + 0.9*(-0.304) - 0.124 = 0.2224
        let mut x = [1.0];
        let mut v = [0.0];
        let mut trajectory = Vec::new();
        for _ in 0..2 {
            let g = [2.0 * x[0]];
            nesterov_update(&mut x, &g, &mut v, 0.1, 0.9, 0.0);
            trajectory.push((x[0], v[0]));
        }
        let expected = [(0.62, -0.2), (0.2224, -0.304)];
        for ((x, v), (ex, ev)) in trajectory.iter().zip(expected) {
            assert!((x - ex).abs() < 1e-12 && (v - ev).abs() < 1e-12, "{trajectory:?}");
        }
    }

    #[test]
    fn weight_decay_shrinks_every_parameter() {
        let mut model = init_model(ModelConfig {
            input_width: 3,
            hidden_widths: vec![4],
            video_width: 2,
            text_width: 3,
            sources: vec![Source::Title],
            dropout: 0.0,
            seed: 5,
        })
        .unwrap();
        for b in model.params.tensors_mut() {
            b.iter_mut().for_each(|x| {
                if *x == 0.0 {
                    *x = 0.3;
                }
            });
        }
        let before = model.params.clone();
        let grads = model.params.zeros_like();
        let mut state = OptimizerState::new(&model.params);
        let hyper = SgdHyper { lr: 0.1, momentum: 0.9, weight_decay: 1e-2, decay_biases: true };
        nesterov_step(&mut model.params, &grads, &mut state, hyper).unwrap();
        for (a, b) in model.params.tensors().iter().zip(before.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!(x.abs() < y.abs(), "{x} vs {y}");
            }
        }
        assert_eq!(state.step, 1);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let cfg = |w| ModelConfig {
            input_width: w,
            hidden_widths: vec![],
            video_width: 2,
            text_width: 2,
            sources: vec![Source::Title],
            dropout: 0.0,
            seed: 0,
        };
        let mut a = init_model(cfg(3)).unwrap();
        let b = init_model(cfg(4)).unwrap();
        let mut state = OptimizerState::new(&a.params);
        let hyper = SgdHyper { lr: 0.1, momentum: 0.0, weight_decay: 0.0, decay_biases: true };
        assert!(nesterov_step(&mut a.params, &b.params, &mut state, hyper).is_err());
    }
}
