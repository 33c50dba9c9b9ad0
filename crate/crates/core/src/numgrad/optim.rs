use thiserror::Error;

use super::params::ParamSet;
use super::tensor::Tensor;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
}

/// SGD with (heavy-ball) momentum: v <- mu*v - lr*g; p <- p + v.
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Tensor>,
}

impl SgdMomentum {
    pub fn new(params: &ParamSet, lr: f64, momentum: f64) -> Self {
        let velocity = params
            .iter()
            .map(|p| Tensor::zeros(p.value.rows, p.value.cols))
            .collect();
        SgdMomentum {
            lr,
            momentum,
            velocity,
        }
    }

    pub fn step(
        &mut self,
        params: &mut ParamSet,
        grads: &[Option<Tensor>],
    ) -> Result<(), OptimError> {
        assert_eq!(grads.len(), params.len(), "gradient count mismatch");
        for i in 0..params.len() {
            let grad = match &grads[i] {
                Some(gr) => gr,
                None => continue,
            };
            let name = params.iter().nth(i).unwrap().name.clone();
            if !grad.is_finite() {
                return Err(OptimError::NonFiniteGradient(name));
            }
            let v = &mut self.velocity[i];
            assert!(v.same_shape(grad), "velocity shape mismatch for {name}");
            for (vk, gk) in v.data.iter_mut().zip(&grad.data) {
                *vk = self.momentum * *vk - self.lr * gk;
            }
            let p = params.get_mut(super::params::ParamId(i));
            for (pk, vk) in p.data.iter_mut().zip(&v.data) {
                *pk += vk;
            }
        }
        Ok(())
    }
}

/// Momentum update applied to a raw tensor (used by gradient-descent
/// inference, where the iterate is not a model parameter).
pub struct TensorMomentum {
    pub lr: f64,
    pub momentum: f64,
    velocity: Tensor,
}

impl TensorMomentum {
    pub fn new(rows: usize, cols: usize, lr: f64, momentum: f64) -> Self {
        TensorMomentum {
            lr,
            momentum,
            velocity: Tensor::zeros(rows, cols),
        }
    }

    pub fn step(&mut self, value: &mut Tensor, grad: &Tensor) {
        assert!(value.same_shape(grad), "tensor momentum shape mismatch");
        for ((vk, gk), pk) in self
            .velocity
            .data
            .iter_mut()
            .zip(&grad.data)
            .zip(&mut value.data)
        {
            *vk = self.momentum * *vk - self.lr * gk;
            *pk += *vk;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let mut params = ParamSet::new();
        let id = params.add("p", Tensor::row(&[1.0, 2.0]));
        let mut opt = SgdMomentum::new(&params, 0.5, 0.0);
        let grads = vec![Some(Tensor::row(&[1.0, -2.0]))];
        opt.step(&mut params, &grads).unwrap();
        assert_eq!(params.get(id).data, vec![0.5, 3.0]);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut params = ParamSet::new();
        let id = params.add("p", Tensor::row(&[1.0, 2.0]));
        let mut opt = SgdMomentum::new(&params, 0.0, 0.9);
        let grads = vec![Some(Tensor::row(&[3.0, -4.0]))];
        opt.step(&mut params, &grads).unwrap();
        opt.step(&mut params, &grads).unwrap();
        assert_eq!(params.get(id).data, vec![1.0, 2.0]);
    }

    #[test]
    fn two_steps_constant_gradient() {
        // v1 = -lr*g; v2 = -0.9*lr*g - lr*g; total displacement = -lr*g*(1+1.9)
        let mut params = ParamSet::new();
        let id = params.add("p", Tensor::row(&[0.0]));
        let mut opt = SgdMomentum::new(&params, 0.1, 0.9);
        let grads = vec![Some(Tensor::row(&[2.0]))];
        opt.step(&mut params, &grads).unwrap();
        opt.step(&mut params, &grads).unwrap();
        // direct simulation of the recursion
        let (mut v, mut p) = (0.0, 0.0);
        for _ in 0..2 {
            v = 0.9 * v - 0.1 * 2.0;
            p += v;
        }
        assert!((params.get(id).data[0] - p).abs() < 1e-15);
        assert!((p - (-0.1 * 2.0 * (1.0 + 1.9))).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut params = ParamSet::new();
        params.add("p", Tensor::row(&[0.0]));
        let mut opt = SgdMomentum::new(&params, 0.1, 0.9);
        let grads = vec![Some(Tensor::row(&[f64::NAN]))];
        assert!(opt.step(&mut params, &grads).is_err());
    }
}
