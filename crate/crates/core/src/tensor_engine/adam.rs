use super::{ParamStore, Scalar, Tensor};
use crate::error::{Error, Result};

/// Adam hyperparameters. Kept in `f32` so they round-trip through checkpoints exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    /// Decoupled decay: after the Adam step, `p *= 1 - lr * weight_decay`.
    pub weight_decay: f32,
    /// Multiplier applied to `lr` by [`AdamState::decay_lr`].
    pub lr_decay: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            lr_decay: 0.95,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    pub config: AdamConfig,
    pub step: u32,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        let zeros = || params.values().iter().map(|p| Tensor::zeros(p.dims())).collect();
        AdamState {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn lr(&self) -> f32 {
        self.config.lr
    }

    /// Epoch-level learning-rate decay.
    pub fn decay_lr(&mut self) {
        self.config.lr *= self.config.lr_decay;
    }

    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Tensor<T>]) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::invalid(
                "adam_step",
                format!(
                    "{} params, {} grads, {} moment slots",
                    params.len(),
                    grads.len(),
                    self.m.len()
                ),
            ));
        }
        for ((p, g), m) in params.values().iter().zip(grads).zip(&self.m) {
            p.expect_dims("adam_step", g.dims())?;
            p.expect_dims("adam_step", m.dims())?;
        }

        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let one = T::one();
        let (b1, b2) = (T::from_f64(c.beta1 as f64), T::from_f64(c.beta2 as f64));
        let lr = T::from_f64(c.lr as f64);
        let eps = T::from_f64(c.eps as f64);
        let bc1 = one - b1.powi(t);
        let bc2 = one - b2.powi(t);
        let decay = one - lr * T::from_f64(c.weight_decay as f64);

        for (((p, g), m), v) in params
            .values_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
                *pv *= decay;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(value: f32) -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.register("w", Tensor::full([1, 1, 2, 2], value));
        s
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = store(0.5);
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        adam.step(&mut p, &[Tensor::full([1, 1, 2, 2], 1.0)]).unwrap();
        for &v in p.values()[0].data() {
            assert!((v - (0.5 - 1e-3)).abs() < 1e-7, "{v}");
        }
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn zero_gradient_without_decay_is_noop() {
        let mut p = store(0.5);
        let before = p.clone();
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        for _ in 0..3 {
            adam.step(&mut p, &[Tensor::zeros([1, 1, 2, 2])]).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(adam.step, 3);
    }

    #[test]
    fn decay_only_step_scales_parameters() {
        let mut p = store(2.0);
        let config = AdamConfig {
            weight_decay: 0.1,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(config, &p);
        adam.step(&mut p, &[Tensor::zeros([1, 1, 2, 2])]).unwrap();
        let want = 2.0f32 * (1.0 - 1e-4);
        for &v in p.values()[0].data() {
            assert!((v - want).abs() < 1e-7);
        }
    }

    #[test]
    fn mismatched_gradient_shape_is_error() {
        let mut p = store(0.0);
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        assert!(adam.step(&mut p, &[Tensor::zeros([1, 1, 3, 2])]).is_err());
        assert!(adam.step(&mut p, &[]).is_err());
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn lr_decay_compounds() {
        let p = store(0.0);
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        adam.decay_lr();
        adam.decay_lr();
        assert!((adam.lr() - 1e-3 * 0.95 * 0.95).abs() < 1e-9);
    }
}
