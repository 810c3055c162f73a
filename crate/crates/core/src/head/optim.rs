use super::HeadParams;
use crate::error::{Error, Result};

/// SGD momentum buffers.
#[derive(Debug, Clone)]
pub struct OptState {
    pub velocity: HeadParams,
    pub lr: f64,
    pub momentum: f64,
}

impl OptState {
    pub fn new(params: &HeadParams, lr: f64) -> Self {
        Self {
            velocity: params.zeros_like(),
            lr,
            momentum: 0.9,
        }
    }
}

/// Classic momentum: `v <- mu * v + g`, `theta <- theta - lr * v`.
/// Layers with `trainable[i] == false` are left untouched, velocity included.
pub fn sgd_step(
    params: &mut HeadParams,
    grads: &HeadParams,
    state: &mut OptState,
    trainable: &[bool],
) -> Result<()> {
    if grads.layers.len() != params.layers.len()
        || state.velocity.layers.len() != params.layers.len()
    {
        return Err(Error::InvalidHead(
            "gradient shape does not match parameters".into(),
        ));
    }
    let (lr, mu) = (state.lr, state.momentum);
    for (i, ((layer, grad), vel)) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.velocity.layers)
        .enumerate()
    {
        if !trainable.get(i).copied().unwrap_or(true) {
            continue;
        }
        if grad.weight.dim() != layer.weight.dim() || grad.bias.len() != layer.bias.len() {
            return Err(Error::InvalidHead(format!(
                "layer {i} gradient shape mismatch"
            )));
        }
        vel.weight
            .zip_mut_with(&grad.weight, |v, &g| *v = mu * *v + g);
        vel.bias.zip_mut_with(&grad.bias, |v, &g| *v = mu * *v + g);
        layer.weight.zip_mut_with(&vel.weight, |w, &v| *w -= lr * v);
        layer.bias.zip_mut_with(&vel.bias, |b, &v| *b -= lr * v);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::head::{HeadSpec, Layer};
    use ndarray::array;

    fn one_layer(w: f64, b: f64) -> HeadParams {
        HeadParams {
            layers: vec![Layer {
                weight: array![[w]],
                bias: array![b],
            }],
        }
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut params = one_layer(0.4, -0.2);
        let mut state = OptState::new(&params, 0.1);
        sgd_step(&mut params, &one_layer(0.0, 0.0), &mut state, &[true]).unwrap();
        assert_eq!(params, one_layer(0.4, -0.2));
    }

    #[test]
    fn two_steps_accumulate_momentum() {
        let mut params = one_layer(0.0, 0.0);
        let mut state = OptState::new(&params, 1.0);
        let g = one_layer(1.5, -2.0);
        sgd_step(&mut params, &g, &mut state, &[true]).unwrap();
        sgd_step(&mut params, &g, &mut state, &[true]).unwrap();
        assert_eq!(params.layers[0].weight[[0, 0]], -2.9 * 1.5);
        assert_eq!(params.layers[0].bias[0], -2.9 * -2.0);
    }

    #[test]
    fn zero_lr_and_frozen_layers_do_not_move() {
        let spec = HeadSpec::new(2, vec![3], 2);
        let mut rng = crate::rng::substream(0, "o");
        let mut params = HeadParams::init(&spec, &mut rng);
        let before = params.clone();
        let grads = HeadParams::init(&spec, &mut rng);
        let mut state = OptState::new(&params, 0.0);
        sgd_step(&mut params, &grads, &mut state, &[true, true]).unwrap();
        assert_eq!(params, before);
        let mut state = OptState::new(&params, 0.5);
        sgd_step(&mut params, &grads, &mut state, &[false, true]).unwrap();
        assert_eq!(params.layers[0], before.layers[0]);
        assert_ne!(params.layers[1], before.layers[1]);
    }
}
