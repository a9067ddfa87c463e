use crate::error::{Error, Result};
use crate::tensor::{Mode, Real, Tensor, Var};

/// Per-channel running statistics carried between batches.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Real> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        Self { mean: vec![T::ZERO; channels], var: vec![T::ONE; channels] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchNormOptions {
    /// Weight kept on the old running value: `r ← m·r + (1−m)·batch`.
    pub momentum: f64,
    pub eps: f64,
}

impl Default for BatchNormOptions {
    fn default() -> Self {
        Self { momentum: 0.9, eps: 1e-5 }
    }
}

/// Batch normalization over the batch and spatial axes of an `[n, c, h, w]` tensor.
///
/// Train mode normalizes with the biased batch variance and folds the unbiased variance
/// into `running`. Eval mode reads `running` and leaves it untouched.
pub fn batch_norm<'t, T: Real>(
    x: Var<'t, T>,
    gamma: Var<'t, T>,
    beta: Var<'t, T>,
    running: &mut RunningStats<T>,
    mode: Mode,
    opts: BatchNormOptions,
) -> Result<Var<'t, T>> {
    let (xv, gv, bv) = (x.value(), gamma.value(), beta.value());
    let [n, c, h, w] = xv.dims4("batch_norm")?;
    if gv.shape() != [c] || bv.shape() != [c] || running.mean.len() != c || running.var.len() != c {
        return Err(Error::shape(
            "batch_norm",
            format!("input has {c} channels, gamma {:?}, beta {:?}", gv.shape(), bv.shape()),
        ));
    }
    xv.ensure_finite("batch_norm")?;
    let plane = h * w;
    let count = n * plane;
    if mode == Mode::Train && count < 2 {
        return Err(Error::invalid(
            "batch_norm",
            "train mode needs at least two values per channel",
        ));
    }
    let eps = T::from_f64(opts.eps);
    let m = T::from_f64(count as f64);

    let mut mean = vec![T::ZERO; c];
    let mut inv_std = vec![T::ZERO; c];
    for ch in 0..c {
        let values = (0..n).flat_map(|i| {
            let start = (i * c + ch) * plane;
            xv.data()[start..start + plane].iter().copied()
        });
        match mode {
            Mode::Train => {
                let rough = values.clone().sum::<T>() / m;
                // second pass removes the rounding of the first
                let mu = rough + values.clone().map(|v| v - rough).sum::<T>() / m;
                let var = values.map(|v| (v - mu) * (v - mu)).sum::<T>() / m;
                mean[ch] = mu;
                inv_std[ch] = T::ONE / (var + eps).sqrt();
                let mom = T::from_f64(opts.momentum);
                let unbiased = var * m / (m - T::ONE);
                running.mean[ch] = mom * running.mean[ch] + (T::ONE - mom) * mu;
                running.var[ch] = mom * running.var[ch] + (T::ONE - mom) * unbiased;
            }
            Mode::Eval => {
                mean[ch] = running.mean[ch];
                inv_std[ch] = T::ONE / (running.var[ch] + eps).sqrt();
            }
        }
    }

    let mut xhat = vec![T::ZERO; xv.len()];
    let mut out = vec![T::ZERO; xv.len()];
    for i in 0..n {
        for ch in 0..c {
            let start = (i * c + ch) * plane;
            for j in start..start + plane {
                let z = (xv.data()[j] - mean[ch]) * inv_std[ch];
                xhat[j] = z;
                out[j] = gv.data()[ch] * z + bv.data()[ch];
            }
        }
    }
    let out = Tensor::new(xv.shape(), out)?;
    out.ensure_finite("batch_norm")?;
    let shape = xv.shape().to_vec();

    Ok(x.tape().push_op(
        out,
        &[x, gamma, beta],
        Box::new(move |g, needs| {
            let gd = g.data();
            let mut sum_g = vec![T::ZERO; c];
            let mut sum_gx = vec![T::ZERO; c];
            for i in 0..n {
                for ch in 0..c {
                    let start = (i * c + ch) * plane;
                    for j in start..start + plane {
                        sum_g[ch] += gd[j];
                        sum_gx[ch] += gd[j] * xhat[j];
                    }
                }
            }
            let dx = needs[0].then(|| {
                let mut dx = vec![T::ZERO; gd.len()];
                for i in 0..n {
                    for ch in 0..c {
                        let start = (i * c + ch) * plane;
                        let scale = gv.data()[ch] * inv_std[ch];
                        for j in start..start + plane {
                            dx[j] = match mode {
                                Mode::Train => {
                                    scale * (gd[j] - sum_g[ch] / m - xhat[j] * sum_gx[ch] / m)
                                }
                                Mode::Eval => scale * gd[j],
                            };
                        }
                    }
                }
                Tensor::new(&shape, dx).expect("dx shape")
            });
            let dgamma = needs[1].then(|| Tensor::new(&[c], sum_gx.clone()).expect("dgamma shape"));
            let dbeta = needs[2].then(|| Tensor::new(&[c], sum_g.clone()).expect("dbeta shape"));
            vec![dx, dgamma, dbeta]
        }),
    ))
}
