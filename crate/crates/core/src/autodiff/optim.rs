use super::{ParamStore, Real, Tensor};
use crate::error::{Error, Result};

/// SGD with classical momentum. Weight decay is folded into the gradient
/// before the momentum update:
///
/// ```text
/// v <- momentum * v + (grad + weight_decay * param)
/// param <- param - lr * v
/// ```
#[derive(Clone, Debug)]
pub struct SgdState<T> {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Tensor<T>>,
}

impl<T: Real> SgdState<T> {
    pub fn new(
        store: &ParamStore<T>,
        learning_rate: f64,
        momentum: f64,
        weight_decay: f64,
    ) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {momentum}"
            )));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight decay must be nonnegative, got {weight_decay}"
            )));
        }
        let velocity = if momentum > 0.0 {
            store
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.value.shape().to_vec()))
                .collect()
        } else {
            Vec::new()
        };
        Ok(SgdState {
            learning_rate,
            momentum,
            weight_decay,
            velocity,
        })
    }

    pub fn velocity(&self) -> &[Tensor<T>] {
        &self.velocity
    }

    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        if let Some(p) = store.params().iter().find(|p| p.grad.is_none()) {
            return Err(Error::MissingGrad(p.name.clone()));
        }
        let lr = T::lit(self.learning_rate);
        let mu = T::lit(self.momentum);
        let wd = T::lit(self.weight_decay);
        for (i, p) in store.params_mut().iter_mut().enumerate() {
            let grad = p.grad.as_ref().expect("checked above");
            let values = p.value.data_mut();
            if self.momentum > 0.0 {
                let v = self.velocity[i].data_mut();
                for ((w, vel), &g) in values.iter_mut().zip(v.iter_mut()).zip(grad.data()) {
                    *vel = mu * *vel + (g + wd * *w);
                    *w -= lr * *vel;
                }
            } else {
                for (w, &g) in values.iter_mut().zip(grad.data()) {
                    *w -= lr * (g + wd * *w);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64, grad: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::scalar(value));
        s.param_mut(id).grad = Some(Tensor::scalar(grad));
        s
    }

    fn value(s: &ParamStore<f64>) -> f64 {
        s.params()[0].value.item()
    }

    #[test]
    fn plain_step() {
        let mut s = single(1.0, 1.0);
        SgdState::new(&s, 0.1, 0.0, 0.0)
            .unwrap()
            .step(&mut s)
            .unwrap();
        assert!((value(&s) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn momentum_recurrence() {
        let mut s = single(0.0, 1.0);
        let mut opt = SgdState::new(&s, 0.1, 0.9, 0.0).unwrap();
        opt.step(&mut s).unwrap();
        assert!((value(&s) + 0.1).abs() < 1e-12);
        opt.step(&mut s).unwrap();
        assert!((opt.velocity()[0].item() - 1.9).abs() < 1e-12);
        assert!((value(&s) + 0.29).abs() < 1e-12);
    }

    #[test]
    fn decay_only() {
        let mut s = single(2.0, 0.0);
        SgdState::new(&s, 0.1, 0.0, 0.5)
            .unwrap()
            .step(&mut s)
            .unwrap();
        assert!((value(&s) - 1.9).abs() < 1e-12);
    }

    #[test]
    fn velocity_exists_iff_momentum() {
        let s = single(0.0, 0.0);
        assert!(SgdState::new(&s, 0.1, 0.0, 0.0)
            .unwrap()
            .velocity()
            .is_empty());
        let opt = SgdState::new(&s, 0.1, 0.5, 0.0).unwrap();
        assert_eq!(opt.velocity().len(), 1);
        assert_eq!(opt.velocity()[0].shape(), s.params()[0].value.shape());
    }

    #[test]
    fn missing_grad_rejected() {
        let mut s = ParamStore::<f32>::new();
        s.add("w", Tensor::scalar(1.0));
        let mut opt = SgdState::new(&s, 0.1, 0.9, 0.0).unwrap();
        assert!(matches!(opt.step(&mut s), Err(Error::MissingGrad(_))));
    }
}
