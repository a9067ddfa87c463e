use crate::error::{Error, Result};
use crate::nn::{ParamStore, SlotId};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moments for every storage slot; tied parameters share a slot and so one entry.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub t: u64,
    /// Indexed by slot; `None` for slots freed by tying.
    pub m: Vec<Option<Tensor<T>>>,
    pub v: Vec<Option<Tensor<T>>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(store: &ParamStore<T>, config: AdamConfig) -> Self {
        let mut m = Vec::new();
        for s in store.slots() {
            if m.len() <= s.0 {
                m.resize(s.0 + 1, None);
            }
            m[s.0] = Some(Tensor::zeros(store.slot_value(s).shape()));
        }
        Self { config, t: 0, v: m.clone(), m }
    }

    pub fn entries(&self) -> usize {
        self.m.iter().flatten().count()
    }

    pub fn moments(&self, slot: SlotId) -> Option<(&Tensor<T>, &Tensor<T>)> {
        Some((self.m.get(slot.0)?.as_ref()?, self.v.get(slot.0)?.as_ref()?))
    }

    pub(crate) fn moments_mut(&mut self, slot: SlotId) -> Option<(&mut Tensor<T>, &mut Tensor<T>)> {
        Some((self.m.get_mut(slot.0)?.as_mut()?, self.v.get_mut(slot.0)?.as_mut()?))
    }

    /// One bias-corrected update of every slot in `grads`. Nothing changes if any
    /// gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[(SlotId, Tensor<T>)], lr: f64) -> Result<()> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::invalid("adam", format!("learning rate {lr}")));
        }
        for (slot, g) in grads {
            if self.moments(*slot).is_none() {
                return Err(Error::Params(format!("no optimizer state for `{}`", store.slot_name(*slot))));
            }
            if g.shape() != store.slot_value(*slot).shape() {
                return Err(Error::shape("adam", format!("gradient for `{}`", store.slot_name(*slot))));
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient { name: store.slot_name(*slot).to_string() });
            }
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powf(self.t as f64);
        let c2 = 1.0 - beta2.powf(self.t as f64);
        let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
        let (ob1, ob2) = (T::from_f64(1.0 - beta1), T::from_f64(1.0 - beta2));
        let (c1, c2) = (T::from_f64(c1), T::from_f64(c2));
        let (lr, eps) = (T::from_f64(lr), T::from_f64(eps));
        for (slot, g) in grads {
            let (m, v) = self.moments_mut(*slot).expect("checked above");
            let p = store.slot_value_mut(*slot);
            for (((p, m), v), &g) in p.data_mut().iter_mut().zip(m.data_mut()).zip(v.data_mut()).zip(g.data()) {
                *m = b1 * *m + ob1 * g;
                *v = b2 * *v + ob2 * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Init;

    fn scalar_store(value: f64) -> (ParamStore<f64>, SlotId) {
        let mut store = ParamStore::new(0);
        let h = store.register("p", &[1], Init::Zeros).unwrap();
        store.value_mut(h).data_mut()[0] = value;
        let s = store.slot_of(h);
        (store, s)
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (mut store, s) = scalar_store(1.0);
        let mut adam = AdamState::new(&store, AdamConfig::default());
        adam.step(&mut store, &[(s, Tensor::from_f64(&[1], &[1.0]).unwrap())], 0.01).unwrap();
        let expected = 1.0 - 0.01 * 1.0 / (1.0 + 1e-8);
        assert!((store.slot_value(s).data()[0] - expected).abs() < 1e-15);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn zero_gradient_and_zero_lr_change_nothing() {
        let (mut store, s) = scalar_store(0.5);
        let mut adam = AdamState::new(&store, AdamConfig::default());
        adam.step(&mut store, &[(s, Tensor::zeros(&[1]))], 0.01).unwrap();
        adam.step(&mut store, &[(s, Tensor::from_f64(&[1], &[3.0]).unwrap())], 0.0).unwrap();
        assert_eq!(store.slot_value(s).data()[0], 0.5);
    }

    #[test]
    fn nan_gradient_names_parameter_and_aborts() {
        let (mut store, s) = scalar_store(0.5);
        let mut adam = AdamState::new(&store, AdamConfig::default());
        let err = adam.step(&mut store, &[(s, Tensor::from_f64(&[1], &[f64::NAN]).unwrap())], 0.01).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { ref name } if name == "p"));
        assert_eq!(adam.t, 0);
        assert_eq!(store.slot_value(s).data()[0], 0.5);
    }

    #[test]
    fn tied_parameters_share_one_entry() {
        let mut store = ParamStore::<f32>::new(0);
        store.register("a", &[2], Init::Ones).unwrap();
        store.register("b", &[2], Init::Ones).unwrap();
        store.tie("a", "b").unwrap();
        assert_eq!(AdamState::new(&store, AdamConfig::default()).entries(), 1);
    }
}
