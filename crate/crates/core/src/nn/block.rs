use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, Conv2d, ParamHandle, ParamStore, Session};
use crate::tensor::ops::{self, BatchNormOptions};
use crate::tensor::{Real, Var};

/// Residual unit whose two bias-free 3×3 convolutions alias one weight, with two
/// independent batch norms and dropout between the convolutions:
///
/// `f(x) = bn2(conv(dropout(relu(bn1(conv(x))))))`, output `relu(x + f(x))`.
#[derive(Clone, Debug)]
pub struct SharedResidualBlock {
    pub first: Conv2d,
    pub second: Conv2d,
    pub bn1: BatchNorm2d,
    pub bn2: BatchNorm2d,
    pub dropout_rate: f64,
    pub channels: usize,
    /// Dropout stream id, unique per block in a network.
    pub layer_id: u64,
}

impl SharedResidualBlock {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        dropout_rate: f64,
        layer_id: u64,
        bn: BatchNormOptions,
    ) -> Result<Self> {
        let block = Self::untied(store, name, channels, dropout_rate, layer_id, bn)?;
        store.tie(&format!("{name}.conv1.weight"), &format!("{name}.conv2.weight"))?;
        Ok(block)
    }

    /// Same layout with two independent convolutions (a standard residual block).
    pub fn untied<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        dropout_rate: f64,
        layer_id: u64,
        bn: BatchNormOptions,
    ) -> Result<Self> {
        Ok(Self {
            first: Conv2d::without_bias(store, &format!("{name}.conv1"), channels, channels, 3, 1)?,
            second: Conv2d::without_bias(store, &format!("{name}.conv2"), channels, channels, 3, 1)?,
            bn1: BatchNorm2d::new(store, &format!("{name}.bn1"), channels, bn)?,
            bn2: BatchNorm2d::new(store, &format!("{name}.bn2"), channels, bn)?,
            dropout_rate,
            channels,
            layer_id,
        })
    }

    pub fn forward<'t, T: Real>(&self, s: &mut Session<'t, '_, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let shape = x.shape();
        if shape.len() != 4 || shape[1] != self.channels {
            return Err(Error::shape(
                "shared_residual_block",
                format!("block has {} channels, input {:?}", self.channels, shape),
            ));
        }
        let h = self.first.forward(s, x)?;
        let h = self.bn1.forward(s, h)?;
        let h = ops::relu(h)?;
        let h = ops::dropout(h, self.dropout_rate, s.mask_source(self.layer_id))?;
        let h = self.second.forward(s, h)?;
        let f = self.bn2.forward(s, h)?;
        ops::relu(ops::add(x, f)?)
    }

    pub fn handles(&self) -> Vec<ParamHandle> {
        [self.first.handles(), self.second.handles(), self.bn1.handles(), self.bn2.handles()].concat()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::DropoutPlan;
    use crate::tensor::{Mode, Tape, Tensor};

    fn block(store: &mut ParamStore<f64>, c: usize) -> SharedResidualBlock {
        SharedResidualBlock::new(store, "blk", c, 0.25, 0, BatchNormOptions::default()).unwrap()
    }

    #[test]
    fn parameter_count_matches_closed_form() {
        for c in [1usize, 2, 4, 10, 16] {
            let mut store = ParamStore::<f64>::new(0);
            let b = block(&mut store, c);
            assert_eq!(store.count_of(&b.handles()), 9 * c * c + 4 * c);
            let mut untied = ParamStore::<f64>::new(0);
            let u = SharedResidualBlock::untied(&mut untied, "u", c, 0.25, 0, BatchNormOptions::default()).unwrap();
            assert_eq!(untied.count_of(&u.handles()), 18 * c * c + 4 * c);
        }
        let mut store = ParamStore::<f64>::new(0);
        block(&mut store, 10);
        assert_eq!(store.count(), 940);
    }

    #[test]
    fn zero_conv_passes_non_negative_input_through() {
        let mut store = ParamStore::<f64>::new(0);
        let b = block(&mut store, 2);
        store.value_mut(b.first.weight).data_mut().iter_mut().for_each(|v| *v = 0.0);
        let x = Tensor::from_fn(&[2, 2, 4, 4], |i| (i % 7) as f64 * 0.3);
        for mode in [Mode::Train, Mode::Eval] {
            let tape = Tape::new();
            let mut s = Session::new(&tape, &mut store, mode, DropoutPlan::Keyed { seed: 1, step: 0 });
            let y = b.forward(&mut s, tape.constant(x.clone())).unwrap();
            assert_eq!(*y.value(), x);
        }
    }

    #[test]
    fn channel_mismatch_rejected() {
        let mut store = ParamStore::<f64>::new(0);
        let b = block(&mut store, 2);
        let tape = Tape::new();
        let mut s = Session::new(&tape, &mut store, Mode::Eval, DropoutPlan::Off);
        assert!(b.forward(&mut s, tape.constant(Tensor::zeros(&[1, 3, 4, 4]))).is_err());
    }

    #[test]
    fn eval_forward_is_bitwise_deterministic() {
        let mut store = ParamStore::<f32>::new(5);
        let b = SharedResidualBlock::new(&mut store, "b", 3, 0.25, 0, BatchNormOptions::default()).unwrap();
        let x = Tensor::from_fn(&[1, 3, 6, 6], |i| (i as f32 * 0.77).sin());
        let run = |store: &mut ParamStore<f32>| {
            let tape = Tape::new();
            let mut s = Session::new(&tape, store, Mode::Eval, DropoutPlan::Off);
            let y = b.forward(&mut s, tape.constant(x.clone())).unwrap().value();
            (*y).clone()
        };
        let (a, c) = (run(&mut store), run(&mut store));
        assert!(a.data().iter().zip(c.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn tied_conv_binds_a_single_leaf() {
        let mut store = ParamStore::<f64>::new(0);
        let b = block(&mut store, 2);
        let tape = Tape::new();
        let mut s = Session::new(&tape, &mut store, Mode::Train, DropoutPlan::Off);
        b.forward(&mut s, tape.constant(Tensor::ones(&[2, 2, 3, 3]))).unwrap();
        // conv weight, bn1 gamma/beta, bn2 gamma/beta
        assert_eq!(s.bindings().len(), 5);
    }
}
