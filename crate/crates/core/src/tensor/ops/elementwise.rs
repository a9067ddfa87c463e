use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor, Var};

/// Elementwise sum of two identically shaped tensors. No broadcasting.
pub fn add<'t, T: Real>(a: Var<'t, T>, b: Var<'t, T>) -> Result<Var<'t, T>> {
    let (av, bv) = (a.value(), b.value());
    if av.shape() != bv.shape() {
        return Err(Error::shape("add", format!("{:?} vs {:?}", av.shape(), bv.shape())));
    }
    let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x + y).collect();
    let out = Tensor::new(av.shape(), data)?;
    out.ensure_finite("add")?;
    Ok(a.tape().push_op(out, &[a, b], Box::new(|g, _| vec![Some(g.clone()), Some(g.clone())])))
}

/// Sum of many equal-shape tensors, left to right.
pub fn add_all<'t, T: Real>(terms: &[Var<'t, T>]) -> Result<Var<'t, T>> {
    let (first, rest) = terms
        .split_first()
        .ok_or_else(|| Error::invalid("add_all", "no terms"))?;
    rest.iter().try_fold(*first, |acc, &t| add(acc, t))
}

/// Elementwise product of two identically shaped tensors.
pub fn mul<'t, T: Real>(a: Var<'t, T>, b: Var<'t, T>) -> Result<Var<'t, T>> {
    let (av, bv) = (a.value(), b.value());
    if av.shape() != bv.shape() {
        return Err(Error::shape("mul", format!("{:?} vs {:?}", av.shape(), bv.shape())));
    }
    let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x * y).collect();
    let out = Tensor::new(av.shape(), data)?;
    out.ensure_finite("mul")?;
    Ok(a.tape().push_op(
        out,
        &[a, b],
        Box::new(move |g, needs| {
            let ga = needs[0].then(|| {
                Tensor::from_fn(g.shape(), |i| g.data()[i] * bv.data()[i])
            });
            let gb = needs[1].then(|| {
                Tensor::from_fn(g.shape(), |i| g.data()[i] * av.data()[i])
            });
            vec![ga, gb]
        }),
    ))
}

pub fn relu<'t, T: Real>(x: Var<'t, T>) -> Result<Var<'t, T>> {
    let xv = x.value();
    xv.ensure_finite("relu")?;
    let out = xv.map(|v| if v > T::ZERO { v } else { T::ZERO });
    Ok(x.tape().push_op(
        out,
        &[x],
        Box::new(move |g, _| {
            // Subgradient 0 at the kink.
            let d = Tensor::from_fn(g.shape(), |i| {
                if xv.data()[i] > T::ZERO {
                    g.data()[i]
                } else {
                    T::ZERO
                }
            });
            vec![Some(d)]
        }),
    ))
}

/// Sum of all elements, as a one-element tensor.
pub fn sum<'t, T: Real>(x: Var<'t, T>) -> Result<Var<'t, T>> {
    let xv = x.value();
    let total: T = xv.data().iter().copied().sum();
    let out = Tensor::scalar(total);
    out.ensure_finite("sum")?;
    let shape = xv.shape().to_vec();
    Ok(x.tape().push_op(
        out,
        &[x],
        Box::new(move |g, _| vec![Some(Tensor::full(&shape, g.data()[0]))]),
    ))
}

/// `sum(x * weights)` for a constant weight tensor. Gives test losses with O(1) gradients.
pub fn weighted_sum<'t, T: Real>(x: Var<'t, T>, weights: &Tensor<T>) -> Result<Var<'t, T>> {
    let w = x.tape().constant(weights.clone());
    sum(mul(x, w)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    #[test]
    fn relu_clamps_negatives() {
        let tape = Tape::<f64>::new();
        let x = tape.param(Tensor::from_f64(&[3], &[-2.0, 0.0, 3.0]).unwrap());
        let y = relu(x).unwrap();
        assert_eq!(y.value().data(), &[0.0, 0.0, 3.0]);
        let g = tape.backward(sum(y).unwrap()).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn add_zeros_is_identity() {
        let tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::from_f64(&[2, 2], &[1.0, -1.0, 2.5, 0.0]).unwrap());
        let z = tape.constant(Tensor::zeros(&[2, 2]));
        assert_eq!(add(x, z).unwrap().value().data(), x.value().data());
    }

    #[test]
    fn add_rejects_mismatched_shapes() {
        let tape = Tape::<f32>::new();
        let a = tape.constant(Tensor::zeros(&[1, 10, 48, 48]));
        let b = tape.constant(Tensor::zeros(&[1, 20, 48, 48]));
        assert!(matches!(add(a, b), Err(Error::Shape { op: "add", .. })));
    }

    #[test]
    fn sum_gradient_is_ones() {
        let tape = Tape::<f64>::new();
        let x = tape.param(Tensor::from_fn(&[2, 3, 4], |i| i as f64));
        let g = tape.backward(sum(x).unwrap()).unwrap();
        assert!(g.wrt(x).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn sum_of_squares_gradient() {
        let tape = Tape::<f64>::new();
        let x = tape.param(Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap());
        let loss = sum(mul(x, x).unwrap()).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_twice_is_rejected() {
        let tape = Tape::<f64>::new();
        let x = tape.param(Tensor::scalar(3.0));
        let loss = sum(x).unwrap();
        tape.backward(loss).unwrap();
        assert!(matches!(tape.backward(loss), Err(Error::Autograd(_))));
    }

    #[test]
    fn non_scalar_and_detached_losses_are_rejected() {
        let tape = Tape::<f64>::new();
        let x = tape.param(Tensor::zeros(&[2]));
        assert!(tape.backward(x).is_err());
        let tape2 = Tape::<f64>::new();
        let c = tape2.constant(Tensor::scalar(1.0));
        assert!(tape2.backward(sum(c).unwrap()).is_err());
        let other = Tape::<f64>::new();
        let y = other.param(Tensor::scalar(1.0));
        assert!(tape.backward(y).is_err());
    }

    #[test]
    fn unreachable_leaf_gets_zero_gradient() {
        let tape = Tape::<f64>::new();
        let x = tape.param(Tensor::scalar(2.0));
        let unused = tape.param(Tensor::zeros(&[3]));
        let g = tape.backward(sum(x).unwrap()).unwrap();
        assert_eq!(g.wrt(unused).unwrap().data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn fan_out_gradients_add_up() {
        // x consumed by three ops: grad = sum of single-use grads.
        let tape = Tape::<f64>::new();
        let x = tape.param(Tensor::from_f64(&[2], &[0.5, -1.5]).unwrap());
        let w1 = Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap();
        let w2 = Tensor::from_f64(&[2], &[-3.0, 0.25]).unwrap();
        let a = weighted_sum(x, &w1).unwrap();
        let b = weighted_sum(x, &w2).unwrap();
        let c = sum(mul(x, x).unwrap()).unwrap();
        let loss = add_all(&[a, b, c]).unwrap();
        let g = tape.backward(loss).unwrap().wrt(x).unwrap();
        assert_eq!(g.data(), &[1.0 - 3.0 + 1.0, 2.0 + 0.25 - 3.0]);
    }

    #[test]
    fn non_finite_values_are_errors() {
        let tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::from_f64(&[2], &[f64::NAN, 1.0]).unwrap());
        assert!(matches!(relu(x), Err(Error::NonFinite { .. })));
        let big = tape.constant(Tensor::full(&[1], f32::MAX));
        assert!(matches!(add(big, big), Err(Error::NonFinite { .. })));
    }
}
