//! Central-difference gradient verification in 64-bit precision.

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Step used by the gradient suite.
pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    /// `max |analytic − fd| / max(|analytic|, |fd|, 1e-12)` over every input element.
    pub max_rel_error: f64,
    /// `(input index, element index)` of the worst element.
    pub worst: (usize, usize),
    /// Analytic and finite-difference values at `worst`.
    pub worst_values: (f64, f64),
    pub elements: usize,
}

/// Compare the tape gradient of `f` against central differences for every element of `inputs`.
///
/// `f` must be deterministic: a program that drew from a stateful RNG, or that returns a
/// different loss on a repeated evaluation, is rejected.
pub fn grad_check<F>(inputs: &[Tensor<f64>], h: f64, f: F) -> Result<GradReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<_> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let loss = f(&tape, &vars)?;
        if tape.is_stochastic() {
            return Err(Error::Autograd("grad_check: program uses a stateful random source".into()));
        }
        scalar(loss)
    };

    let tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&tape, &vars)?;
    if tape.is_stochastic() {
        return Err(Error::Autograd("grad_check: program uses a stateful random source".into()));
    }
    let base = scalar(loss)?;
    if eval(inputs)?.to_bits() != base.to_bits() {
        return Err(Error::Autograd("grad_check: repeated evaluation changed the loss".into()));
    }
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .map(|&v| grads.wrt(v).expect("inputs are trainable leaves"))
        .collect();

    let mut report = GradReport { max_rel_error: 0.0, worst: (0, 0), worst_values: (0.0, 0.0), elements: 0 };
    let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, a) in analytic.iter().enumerate() {
        for j in 0..a.len() {
            let orig = probe[i].data()[j];
            probe[i].data_mut()[j] = orig + h;
            let plus = eval(&probe)?;
            probe[i].data_mut()[j] = orig - h;
            let minus = eval(&probe)?;
            probe[i].data_mut()[j] = orig;
            let fd = (plus - minus) / (2.0 * h);
            let an = a.data()[j];
            let err = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-12);
            report.elements += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (i, j);
                report.worst_values = (an, fd);
            }
        }
    }
    Ok(report)
}

fn scalar(loss: Var<'_, f64>) -> Result<f64> {
    let v = loss.value();
    if v.len() != 1 {
        return Err(Error::Autograd(format!("grad_check: loss has shape {:?}", v.shape())));
    }
    Ok(v.data()[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ops::{dropout, weighted_sum, MaskSource};
    use rand::SeedableRng;

    #[test]
    fn affine_map_is_exact() {
        let x = Tensor::from_f64(&[3], &[0.125, -0.25, 0.0625]).unwrap();
        let w = Tensor::from_f64(&[3], &[1.5, -0.5, 4.0]).unwrap();
        let report = grad_check(&[x], DEFAULT_STEP, |_, v| weighted_sum(v[0], &w)).unwrap();
        assert!(report.max_rel_error <= 1e-10, "{report:?}");
        assert_eq!(report.elements, 3);
    }

    #[test]
    fn stochastic_program_is_rejected() {
        let x = Tensor::ones(&[4]);
        let err = grad_check(&[x], DEFAULT_STEP, |_, v| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
            crate::tensor::ops::sum(dropout(v[0], 0.5, MaskSource::Random(&mut rng))?)
        });
        assert!(matches!(err, Err(Error::Autograd(_))));
    }

    #[test]
    fn program_with_hidden_state_is_rejected() {
        let calls = std::cell::Cell::new(0.0);
        let x = Tensor::ones(&[2]);
        let err = grad_check(&[x], DEFAULT_STEP, |tape, v| {
            calls.set(calls.get() + 1.0);
            let w = Tensor::full(&[2], calls.get());
            let _ = tape;
            weighted_sum(v[0], &w)
        });
        assert!(matches!(err, Err(Error::Autograd(_))));
    }
}
