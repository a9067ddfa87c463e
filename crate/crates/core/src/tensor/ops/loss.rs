use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor, Var};

/// Class probabilities over axis 1 of an `[n, k, h, w]` logit tensor.
pub fn softmax_channels<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, k, h, w] = logits.dims4("softmax")?;
    let plane = h * w;
    let mut out = vec![T::ZERO; logits.len()];
    let d = logits.data();
    for i in 0..n {
        for p in 0..plane {
            let at = |c: usize| (i * k + c) * plane + p;
            let m = (0..k).map(|c| d[at(c)]).fold(d[at(0)], T::max);
            let z: T = (0..k).map(|c| (d[at(c)] - m).exp()).sum();
            for c in 0..k {
                out[at(c)] = (d[at(c)] - m).exp() / z;
            }
        }
    }
    Tensor::new(logits.shape(), out)
}

/// Mean per-pixel cross-entropy of softmax(logits) against integer labels.
///
/// `labels` and `mask` are laid out `[n, h, w]`. Masked-out pixels contribute neither to the
/// loss nor to the gradient.
pub fn softmax_cross_entropy<'t, T: Real>(
    logits: Var<'t, T>,
    labels: &[u8],
    mask: Option<&[bool]>,
) -> Result<Var<'t, T>> {
    let lv = logits.value();
    let [n, k, h, w] = lv.dims4("softmax_cross_entropy")?;
    let plane = h * w;
    if labels.len() != n * plane {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("{} labels for {n}x{h}x{w} logits", labels.len()),
        ));
    }
    if let Some(m) = mask {
        if m.len() != labels.len() {
            return Err(Error::shape("softmax_cross_entropy", format!("mask has {} entries", m.len())));
        }
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= k) {
        return Err(Error::invalid("softmax_cross_entropy", format!("label {bad} with {k} classes")));
    }
    lv.ensure_finite("softmax_cross_entropy")?;
    let counted = mask.map_or(labels.len(), |m| m.iter().filter(|&&v| v).count());
    if counted == 0 {
        return Err(Error::invalid("softmax_cross_entropy", "mask selects no pixels"));
    }

    let probs = softmax_channels(&lv)?;
    let d = lv.data();
    let mut total = T::ZERO;
    for i in 0..n {
        for p in 0..plane {
            let px = i * plane + p;
            if mask.is_some_and(|m| !m[px]) {
                continue;
            }
            let at = |c: usize| (i * k + c) * plane + p;
            let mx = (0..k).map(|c| d[at(c)]).fold(d[at(0)], T::max);
            let lse = mx + (0..k).map(|c| (d[at(c)] - mx).exp()).sum::<T>().ln();
            total += lse - d[at(labels[px] as usize)];
        }
    }
    let denom = T::from_f64(counted as f64);
    let out = Tensor::scalar(total / denom);
    out.ensure_finite("softmax_cross_entropy")?;

    let labels = labels.to_vec();
    let mask = mask.map(<[bool]>::to_vec);
    Ok(logits.tape().push_op(
        out,
        &[logits],
        Box::new(move |g, _| {
            let scale = g.data()[0] / denom;
            let mut grad = vec![T::ZERO; probs.len()];
            for i in 0..n {
                for p in 0..plane {
                    let px = i * plane + p;
                    if mask.as_ref().is_some_and(|m| !m[px]) {
                        continue;
                    }
                    for c in 0..k {
                        let at = (i * k + c) * plane + p;
                        let target = if c == labels[px] as usize { T::ONE } else { T::ZERO };
                        grad[at] = (probs.data()[at] - target) * scale;
                    }
                }
            }
            vec![Some(Tensor::new(probs.shape(), grad).expect("grad shape"))]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    #[test]
    fn equal_logits_give_ln2() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::full(&[1, 2, 3, 3], 0.7));
        let loss = softmax_cross_entropy(x, &[1, 0, 1, 0, 0, 1, 1, 1, 0], None).unwrap();
        assert!((loss.value().data()[0] - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logits_give_near_zero() {
        let tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::from_f64(&[1, 2, 1, 2], &[50.0, -50.0, -50.0, 50.0]).unwrap());
        let loss = softmax_cross_entropy(x, &[0, 1], None).unwrap();
        assert!(loss.value().data()[0].abs() < 1e-6);
    }

    #[test]
    fn mask_restricts_scored_pixels() {
        let tape = Tape::<f64>::new();
        let x = tape.param(Tensor::from_f64(&[1, 2, 1, 2], &[3.0, 0.0, 0.0, 0.0]).unwrap());
        let loss = softmax_cross_entropy(x, &[1, 0], Some(&[false, true])).unwrap();
        assert!((loss.value().data()[0] - std::f64::consts::LN_2).abs() < 1e-12);
        let g = tape.backward(loss).unwrap().wrt(x).unwrap();
        assert_eq!(g.data()[0], 0.0);
        assert_eq!(g.data()[2], 0.0);
    }

    #[test]
    fn empty_mask_is_rejected() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros(&[1, 2, 1, 2]));
        assert!(softmax_cross_entropy(x, &[0, 1], Some(&[false, false])).is_err());
    }

    #[test]
    fn softmax_sums_to_one() {
        let x = Tensor::<f32>::from_fn(&[2, 3, 2, 2], |i| (i as f32 * 1.7).sin() * 20.0);
        let p = softmax_channels(&x).unwrap();
        for i in 0..2 {
            for px in 0..4 {
                let s: f32 = (0..3).map(|c| p.data()[(i * 3 + c) * 4 + px]).sum();
                assert!((s - 1.0).abs() < 1e-5);
            }
        }
    }
}
