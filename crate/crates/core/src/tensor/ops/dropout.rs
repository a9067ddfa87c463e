use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor, Var};

/// Counter-based mask address: the same key always yields the same mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DropoutKey {
    pub seed: u64,
    pub layer: u64,
    pub step: u64,
}

/// Where a dropout layer gets its mask from.
pub enum MaskSource<'a> {
    /// Identity.
    Eval,
    Keyed(DropoutKey),
    /// Explicit keep-mask, one flag per element.
    Fixed(&'a [bool]),
    /// Stateful generator. Marks the tape as stochastic.
    Random(&'a mut dyn RngCore),
}

/// Keep-mask for `len` elements; each element survives with probability `1 − rate`.
pub fn keyed_mask(key: DropoutKey, len: usize, rate: f64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(key.seed);
    rng.set_stream(key.layer);
    // 2^40 words per step; one f64 draw consumes two words.
    rng.set_word_pos(u128::from(key.step) << 40);
    draw_mask(&mut rng, len, rate)
}

fn draw_mask(rng: &mut dyn RngCore, len: usize, rate: f64) -> Vec<bool> {
    (0..len).map(|_| rng.random::<f64>() >= rate).collect()
}

/// Inverted dropout: survivors are scaled by `1 / (1 − rate)`.
pub fn dropout<'t, T: Real>(x: Var<'t, T>, rate: f64, source: MaskSource<'_>) -> Result<Var<'t, T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid("dropout", format!("rate {rate} outside [0, 1)")));
    }
    let xv = x.value();
    let mask = match source {
        MaskSource::Eval => return Ok(x),
        _ if rate == 0.0 => return Ok(x),
        MaskSource::Keyed(key) => keyed_mask(key, xv.len(), rate),
        MaskSource::Fixed(m) => {
            if m.len() != xv.len() {
                return Err(Error::shape("dropout", format!("mask has {} entries, input {}", m.len(), xv.len())));
            }
            m.to_vec()
        }
        MaskSource::Random(rng) => {
            x.tape().mark_stochastic();
            draw_mask(rng, xv.len(), rate)
        }
    };
    let keep = T::from_f64(1.0 / (1.0 - rate));
    let scale: Vec<T> = mask.iter().map(|&k| if k { keep } else { T::ZERO }).collect();
    let out = Tensor::from_fn(xv.shape(), |i| xv.data()[i] * scale[i]);
    out.ensure_finite("dropout")?;
    Ok(x.tape().push_op(
        out,
        &[x],
        Box::new(move |g, _| vec![Some(Tensor::from_fn(g.shape(), |i| g.data()[i] * scale[i]))]),
    ))
}
