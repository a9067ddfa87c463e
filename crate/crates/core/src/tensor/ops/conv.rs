//! 2-D convolution and stride-2 transposed convolution, both lowered to im2col + GEMM.
//!
//! The transposed convolution is computed as the input-gradient of the matching stride-2
//! convolution and shares `col2im` with it, so the adjoint identity holds to the bit.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{matmul, Real, Tensor, Var};

/// Geometry of one convolution, seen from its input side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    fn new(channels: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Result<Self> {
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(Error::shape("conv2d", format!("input {h}x{w} smaller than kernel {k}")));
        }
        Ok(Self {
            channels,
            h,
            w,
            k,
            stride,
            pad,
            out_h: (h + 2 * pad - k) / stride + 1,
            out_w: (w + 2 * pad - k) / stride + 1,
        })
    }

    fn col_rows(&self) -> usize {
        self.channels * self.k * self.k
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    fn in_len(&self) -> usize {
        self.channels * self.h * self.w
    }
}

/// Unfold one image (`channels×h×w`) into a `(channels·k·k) × (out_h·out_w)` matrix.
pub(crate) fn im2col<T: Real>(input: &[T], g: &ConvGeom, col: &mut [T]) {
    let cols = g.col_cols();
    for c in 0..g.channels {
        let plane = &input[c * g.h * g.w..(c + 1) * g.h * g.w];
        for kh in 0..g.k {
            for kw in 0..g.k {
                let row = (c * g.k + kh) * g.k + kw;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oh in 0..g.out_h {
                    let ih = (oh * g.stride + kh) as isize - g.pad as isize;
                    let line = &mut dst[oh * g.out_w..(oh + 1) * g.out_w];
                    if ih < 0 || ih >= g.h as isize {
                        line.iter_mut().for_each(|v| *v = T::ZERO);
                        continue;
                    }
                    let src = &plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    for (ow, v) in line.iter_mut().enumerate() {
                        let iw = (ow * g.stride + kw) as isize - g.pad as isize;
                        *v = if iw < 0 || iw >= g.w as isize { T::ZERO } else { src[iw as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back into an image buffer (overwrites `out`).
pub(crate) fn col2im<T: Real>(col: &[T], g: &ConvGeom, out: &mut [T]) {
    out.iter_mut().for_each(|v| *v = T::ZERO);
    let cols = g.col_cols();
    for c in 0..g.channels {
        let plane = &mut out[c * g.h * g.w..(c + 1) * g.h * g.w];
        for kh in 0..g.k {
            for kw in 0..g.k {
                let row = (c * g.k + kh) * g.k + kw;
                let src = &col[row * cols..(row + 1) * cols];
                for oh in 0..g.out_h {
                    let ih = (oh * g.stride + kh) as isize - g.pad as isize;
                    if ih < 0 || ih >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    for ow in 0..g.out_w {
                        let iw = (ow * g.stride + kw) as isize - g.pad as isize;
                        if iw >= 0 && iw < g.w as isize {
                            dst[iw as usize] += src[oh * g.out_w + ow];
                        }
                    }
                }
            }
        }
    }
}

fn check_conv_args<T: Real>(
    op: &'static str,
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    out_axis: usize,
) -> Result<([usize; 4], [usize; 4])> {
    let xd = x.dims4(op)?;
    let wd = w.dims4(op)?;
    if wd[2] != wd[3] {
        return Err(Error::shape(op, format!("kernel must be square, got {}x{}", wd[2], wd[3])));
    }
    if b.shape() != [wd[out_axis]] {
        return Err(Error::shape(op, format!("bias shape {:?} does not match weight {:?}", b.shape(), wd)));
    }
    x.ensure_finite(op)?;
    Ok((xd, wd))
}

/// Forward-only convolution. `weight` is `[cout, cin, k, k]`.
pub fn conv2d_forward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let ([n, cin, h, w], [cout, wcin, k, _]) = check_conv_args("conv2d", x, weight, bias, 0)?;
    if wcin != cin {
        return Err(Error::shape(
            "conv2d",
            format!("input has {cin} channels but weight expects {wcin}"),
        ));
    }
    if !matches!(stride, 1 | 2) {
        return Err(Error::invalid("conv2d", format!("stride {stride} not in {{1, 2}}")));
    }
    if !matches!((k, padding), (3, 1) | (1, 0)) {
        return Err(Error::invalid(
            "conv2d",
            format!("kernel {k} with padding {padding}; expected 3/1 or 1/0"),
        ));
    }
    let g = ConvGeom::new(cin, h, w, k, stride, padding)?;
    let out_item = cout * g.col_cols();
    let mut out = vec![T::ZERO; n * out_item];
    out.par_chunks_mut(out_item)
        .zip(x.data().par_chunks(g.in_len()))
        .for_each(|(dst, src)| {
            let mut col = vec![T::ZERO; g.col_rows() * g.col_cols()];
            im2col(src, &g, &mut col);
            matmul(cout, g.col_rows(), g.col_cols(), weight.data(), false, &col, false, dst, false);
            for (co, chunk) in dst.chunks_mut(g.col_cols()).enumerate() {
                let bv = bias.data()[co];
                chunk.iter_mut().for_each(|v| *v += bv);
            }
        });
    let out = Tensor::new(&[n, cout, g.out_h, g.out_w], out)?;
    out.ensure_finite("conv2d")?;
    Ok(out)
}

/// Gradient of a convolution with respect to its input: `col2im(Wᵀ · grad)` per image.
fn conv2d_input_grad<T: Real>(grad: &[T], weight: &Tensor<T>, g: &ConvGeom, n: usize, cout: usize) -> Vec<T> {
    let mut dx = vec![T::ZERO; n * g.in_len()];
    dx.par_chunks_mut(g.in_len())
        .zip(grad.par_chunks(cout * g.col_cols()))
        .for_each(|(dst, gi)| {
            let mut col = vec![T::ZERO; g.col_rows() * g.col_cols()];
            matmul(g.col_rows(), cout, g.col_cols(), weight.data(), true, gi, false, &mut col, false);
            col2im(&col, g, dst);
        });
    dx
}

/// Gradient of a convolution with respect to its `[cout, cin·k·k]` weight matrix.
fn conv2d_weight_grad<T: Real>(grad: &[T], input: &[T], g: &ConvGeom, n: usize, cout: usize) -> Vec<T> {
    let mut dw = vec![T::ZERO; cout * g.col_rows()];
    let mut col = vec![T::ZERO; g.col_rows() * g.col_cols()];
    for i in 0..n {
        im2col(&input[i * g.in_len()..(i + 1) * g.in_len()], g, &mut col);
        let gi = &grad[i * cout * g.col_cols()..(i + 1) * cout * g.col_cols()];
        matmul(cout, g.col_cols(), g.col_rows(), gi, false, &col, true, &mut dw, true);
    }
    dw
}

fn channel_sums<T: Real>(grad: &[T], n: usize, channels: usize, plane: usize) -> Vec<T> {
    let mut db = vec![T::ZERO; channels];
    for i in 0..n {
        for (c, acc) in db.iter_mut().enumerate() {
            let start = (i * channels + c) * plane;
            *acc += grad[start..start + plane].iter().copied().sum::<T>();
        }
    }
    db
}

/// Convolution recorded on the tape.
pub fn conv2d<'t, T: Real>(
    x: Var<'t, T>,
    weight: Var<'t, T>,
    bias: Var<'t, T>,
    stride: usize,
    padding: usize,
) -> Result<Var<'t, T>> {
    let (xv, wv, bv) = (x.value(), weight.value(), bias.value());
    let out = conv2d_forward(&xv, &wv, &bv, stride, padding)?;
    let [n, cin, h, w] = xv.dims4("conv2d")?;
    let [cout, _, k, _] = wv.dims4("conv2d")?;
    let g = ConvGeom::new(cin, h, w, k, stride, padding)?;
    Ok(x.tape().push_op(
        out,
        &[x, weight, bias],
        Box::new(move |grad, needs| {
            let gd = grad.data();
            let dx = needs[0].then(|| {
                Tensor::new(xv.shape(), conv2d_input_grad(gd, &wv, &g, n, cout)).expect("dx shape")
            });
            let dw = needs[1].then(|| {
                Tensor::new(wv.shape(), conv2d_weight_grad(gd, xv.data(), &g, n, cout)).expect("dw shape")
            });
            let db = needs[2].then(|| {
                Tensor::new(&[cout], channel_sums(gd, n, cout, g.col_cols())).expect("db shape")
            });
            vec![dx, dw, db]
        }),
    ))
}

pub const TRANSPOSED_STRIDE: usize = 2;
pub const TRANSPOSED_PADDING: usize = 1;
pub const TRANSPOSED_OUTPUT_PADDING: usize = 1;

/// Geometry of the stride-2 convolution whose input-gradient a transposed conv computes.
fn transposed_geom(cout: usize, h: usize, w: usize) -> Result<ConvGeom> {
    // (h-1)·2 − 2·1 + 3 + 1 = 2h
    let oh = (h - 1) * TRANSPOSED_STRIDE + 3 + TRANSPOSED_OUTPUT_PADDING - 2 * TRANSPOSED_PADDING;
    let ow = (w - 1) * TRANSPOSED_STRIDE + 3 + TRANSPOSED_OUTPUT_PADDING - 2 * TRANSPOSED_PADDING;
    let g = ConvGeom::new(cout, oh, ow, 3, TRANSPOSED_STRIDE, TRANSPOSED_PADDING)?;
    debug_assert_eq!((g.out_h, g.out_w), (h, w));
    Ok(g)
}

/// Forward-only transposed convolution, stride 2, padding 1, output padding 1.
/// `weight` is `[cin, cout, 3, 3]`; the output is `[n, cout, 2h, 2w]`.
pub fn conv_transpose2d_forward<T: Real>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let ([n, cin, h, w], [wcin, cout, k, _]) = check_conv_args("conv_transpose2d", x, weight, bias, 1)?;
    if wcin != cin {
        return Err(Error::shape(
            "conv_transpose2d",
            format!("input has {cin} channels but weight expects {wcin}"),
        ));
    }
    if k != 3 {
        return Err(Error::invalid("conv_transpose2d", format!("kernel {k}, expected 3")));
    }
    let g = transposed_geom(cout, h, w)?;
    let mut out = conv2d_input_grad(x.data(), weight, &g, n, cin);
    let plane = g.h * g.w;
    for img in out.chunks_mut(cout * plane) {
        for (c, chunk) in img.chunks_mut(plane).enumerate() {
            let bv = bias.data()[c];
            chunk.iter_mut().for_each(|v| *v += bv);
        }
    }
    let out = Tensor::new(&[n, cout, g.h, g.w], out)?;
    out.ensure_finite("conv_transpose2d")?;
    Ok(out)
}

/// Transposed convolution recorded on the tape.
pub fn conv_transpose2d<'t, T: Real>(
    x: Var<'t, T>,
    weight: Var<'t, T>,
    bias: Var<'t, T>,
) -> Result<Var<'t, T>> {
    let (xv, wv, bv) = (x.value(), weight.value(), bias.value());
    let out = conv_transpose2d_forward(&xv, &wv, &bv)?;
    let [n, cin, h, w] = xv.dims4("conv_transpose2d")?;
    let cout = wv.shape()[1];
    let g = transposed_geom(cout, h, w)?;
    Ok(x.tape().push_op(
        out,
        &[x, weight, bias],
        Box::new(move |grad, needs| {
            let gd = grad.data();
            // Input gradient: the forward stride-2 convolution of the output gradient.
            let dx = needs[0].then(|| {
                let mut dx = vec![T::ZERO; n * cin * h * w];
                let wd = wv.data();
                dx.par_chunks_mut(cin * h * w)
                    .zip(gd.par_chunks(g.in_len()))
                    .for_each(|(dst, gi)| {
                        let mut col = vec![T::ZERO; g.col_rows() * g.col_cols()];
                        im2col(gi, &g, &mut col);
                        matmul(cin, g.col_rows(), g.col_cols(), wd, false, &col, false, dst, false);
                    });
                Tensor::new(xv.shape(), dx).expect("dx shape")
            });
            let dw = needs[1].then(|| {
                let mut dw = vec![T::ZERO; cin * g.col_rows()];
                let mut col = vec![T::ZERO; g.col_rows() * g.col_cols()];
                for i in 0..n {
                    im2col(&gd[i * g.in_len()..(i + 1) * g.in_len()], &g, &mut col);
                    let xi = &xv.data()[i * cin * h * w..(i + 1) * cin * h * w];
                    matmul(cin, g.col_cols(), g.col_rows(), xi, false, &col, true, &mut dw, true);
                }
                Tensor::new(wv.shape(), dw).expect("dw shape")
            });
            let db = needs[2].then(|| {
                Tensor::new(&[cout], channel_sums(gd, n, cout, g.h * g.w)).expect("db shape")
            });
            vec![dx, dw, db]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ops::weighted_sum;
    use crate::tensor::Tape;

    fn t(shape: &[usize], f: impl Fn(usize) -> f64) -> Tensor<f64> {
        Tensor::from_fn(shape, f)
    }

    #[test]
    fn zero_kernel_gives_zero_output() {
        let x = t(&[1, 1, 4, 4], |i| i as f64);
        let out = conv2d_forward(&x, &Tensor::zeros(&[1, 1, 3, 3]), &Tensor::zeros(&[1]), 1, 1).unwrap();
        assert_eq!(out.shape(), &[1, 1, 4, 4]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let x = t(&[1, 1, 4, 4], |i| (i as f64).sqrt() - 1.0);
        let w = t(&[1, 1, 3, 3], |i| if i == 4 { 1.0 } else { 0.0 });
        let out = conv2d_forward(&x, &w, &Tensor::zeros(&[1]), 1, 1).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn stride_two_halves_extent() {
        let x = t(&[1, 1, 4, 4], |i| i as f64);
        let out = conv2d_forward(&x, &Tensor::ones(&[1, 1, 3, 3]), &Tensor::zeros(&[1]), 2, 1).unwrap();
        assert_eq!(out.shape(), &[1, 1, 2, 2]);
        // top-left window covers x[0..2, 0..2] = 0 + 1 + 4 + 5
        assert_eq!(out.data()[0], 10.0);
    }

    #[test]
    fn pointwise_head_kernel_is_accepted() {
        let x = t(&[2, 3, 2, 2], |i| i as f64);
        let w = t(&[2, 3, 1, 1], |i| i as f64 - 2.0);
        let out = conv2d_forward(&x, &w, &Tensor::zeros(&[2]), 1, 0).unwrap();
        assert_eq!(out.shape(), &[2, 2, 2, 2]);
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let x = Tensor::<f64>::zeros(&[1, 2, 4, 4]);
        let w = Tensor::<f64>::zeros(&[1, 3, 3, 3]);
        assert!(matches!(
            conv2d_forward(&x, &w, &Tensor::zeros(&[1]), 1, 1),
            Err(Error::Shape { .. })
        ));
        let wt = Tensor::<f64>::zeros(&[3, 1, 3, 3]);
        assert!(conv_transpose2d_forward(&x, &wt, &Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn unsupported_geometry_is_rejected() {
        let x = Tensor::<f64>::zeros(&[1, 1, 4, 4]);
        let w = Tensor::<f64>::zeros(&[1, 1, 3, 3]);
        let b = Tensor::<f64>::zeros(&[1]);
        assert!(conv2d_forward(&x, &w, &b, 3, 1).is_err());
        assert!(conv2d_forward(&x, &w, &b, 1, 0).is_err());
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut x = Tensor::<f64>::zeros(&[1, 1, 4, 4]);
        x.data_mut()[5] = f64::INFINITY;
        let err = conv2d_forward(&x, &Tensor::zeros(&[1, 1, 3, 3]), &Tensor::zeros(&[1]), 1, 1);
        assert!(matches!(err, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn transposed_doubles_spatial_extent() {
        let x = t(&[1, 1, 3, 3], |i| i as f64);
        let out = conv_transpose2d_forward(&x, &Tensor::zeros(&[1, 4, 3, 3]), &Tensor::zeros(&[4])).unwrap();
        assert_eq!(out.shape(), &[1, 4, 6, 6]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transposed_equals_conv_input_gradient() {
        let x = t(&[1, 2, 2, 2], |i| ((i * 7 + 3) % 11) as f64 / 5.0 - 1.0);
        let w = t(&[2, 3, 3, 3], |i| ((i * 5 + 1) % 13) as f64 / 6.0 - 1.0);
        let up = conv_transpose2d_forward(&x, &w, &Tensor::zeros(&[3])).unwrap();

        let tape = Tape::new();
        let probe = tape.param(Tensor::zeros(&[1, 3, 4, 4]));
        let wv = tape.constant(w.clone());
        let bv = tape.constant(Tensor::zeros(&[2]));
        let y = conv2d(probe, wv, bv, 2, 1).unwrap();
        let loss = weighted_sum(y, &x).unwrap();
        let grad = tape.backward(loss).unwrap().wrt(probe).unwrap();
        assert_eq!(grad, up);
    }
}
