//! 2-D cross-correlation via im2col + GEMM, with zero padding.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(input: [usize; 4], weight: [usize; 4], stride: usize, pad: usize) -> Result<Self> {
        let [out_channels, in_channels, kh, kw] = weight;
        if kh == 0 || kw == 0 {
            return Err(Error::invalid("conv2d", "kernel size must be positive"));
        }
        if kh != kw {
            return Err(Error::invalid("conv2d", format!("square kernels only, got {kh}x{kw}")));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d", "stride must be positive"));
        }
        if input[1] != in_channels {
            return Err(Error::shape("conv2d", &input, &weight));
        }
        let (ph, pw) = (input[2] + 2 * pad, input[3] + 2 * pad);
        if ph < kh || pw < kw {
            return Err(Error::invalid(
                "conv2d",
                format!("padded input {ph}x{pw} smaller than kernel {kh}x{kw}"),
            ));
        }
        Ok(ConvGeometry {
            in_channels,
            out_channels,
            kernel: kh,
            stride,
            pad,
            in_h: input[2],
            in_w: input[3],
            out_h: (ph - kh) / stride + 1,
            out_w: (pw - kw) / stride + 1,
        })
    }

    fn col_rows(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }

    /// 1x1, stride 1, no padding: the input item already is the column matrix.
    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }
}

fn im2col<T: Scalar>(g: &ConvGeometry, item: &[T], cols: &mut [T]) {
    let k = g.kernel;
    let plane = g.out_plane();
    for c in 0..g.in_channels {
        let src = &item[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((c * k + ky) * k + kx) * plane..][..plane];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let dst = &mut row[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.in_h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src_row = &src[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.in_w as isize {
                            T::zero()
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Scalar>(g: &ConvGeometry, cols: &[T], item: &mut [T]) {
    let k = g.kernel;
    let plane = g.out_plane();
    for c in 0..g.in_channels {
        let dst = &mut item[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((c * k + ky) * k + kx) * plane..][..plane];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let dst_row = &mut dst[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, &v) in row[oy * g.out_w..(oy + 1) * g.out_w].iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.in_w as isize {
                            dst_row[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// `bias` is `None` or a tensor holding `out_channels` values.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(input.dims(), weight.dims(), stride, pad)?;
    if let Some(b) = bias {
        if b.len() != g.out_channels {
            return Err(Error::shape("conv2d bias", &b.dims(), &weight.dims()));
        }
    }
    let n = input.batch();
    let plane = g.out_plane();
    let mut out = Tensor::zeros([n, g.out_channels, g.out_h, g.out_w]);
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); g.col_rows() * plane]
    };
    for b in 0..n {
        let item = input.item(b);
        let cols_ref: &[T] = if g.is_pointwise() {
            item
        } else {
            im2col(&g, item, &mut cols);
            &cols
        };
        let out_item = out.item_mut(b);
        if let Some(bias) = bias {
            for (o, chunk) in out_item.chunks_mut(plane).enumerate() {
                chunk.fill(bias.data()[o]);
            }
        }
        T::gemm(
            g.out_channels,
            g.col_rows(),
            plane,
            T::one(),
            weight.data(),
            false,
            cols_ref,
            false,
            T::one(),
            out_item,
        );
    }
    Ok(out)
}

pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<ConvGrads<T>> {
    let g = ConvGeometry::new(input.dims(), weight.dims(), stride, pad)?;
    let n = input.batch();
    let plane = g.out_plane();
    grad_out.expect_dims("conv2d backward", [n, g.out_channels, g.out_h, g.out_w])?;

    let mut d_input = Tensor::zeros(input.dims());
    let mut d_weight = Tensor::zeros(weight.dims());
    let mut d_bias = vec![T::zero(); g.out_channels];
    let rows = g.col_rows();
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); rows * plane]
    };
    let mut d_cols = vec![T::zero(); rows * plane];

    for b in 0..n {
        let go = grad_out.item(b);
        for (o, chunk) in go.chunks(plane).enumerate() {
            let mut s = T::zero();
            for &v in chunk {
                s += v;
            }
            d_bias[o] += s;
        }

        let item = input.item(b);
        let cols_ref: &[T] = if g.is_pointwise() {
            item
        } else {
            im2col(&g, item, &mut cols);
            &cols
        };
        // dW += dOut (out x P) * cols^T (P x rows)
        T::gemm(
            g.out_channels,
            plane,
            rows,
            T::one(),
            go,
            false,
            cols_ref,
            true,
            T::one(),
            d_weight.data_mut(),
        );
        // dCols = W^T (rows x out) * dOut (out x P)
        if g.is_pointwise() {
            T::gemm(
                rows,
                g.out_channels,
                plane,
                T::one(),
                weight.data(),
                true,
                go,
                false,
                T::zero(),
                d_input.item_mut(b),
            );
        } else {
            T::gemm(
                rows,
                g.out_channels,
                plane,
                T::one(),
                weight.data(),
                true,
                go,
                false,
                T::zero(),
                &mut d_cols,
            );
            col2im_add(&g, &d_cols, d_input.item_mut(b));
        }
    }
    Ok(ConvGrads {
        input: d_input,
        weight: d_weight,
        bias: d_bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop cross-correlation.
    fn naive_conv(input: &Tensor<f64>, weight: &Tensor<f64>, bias: &[f64], stride: usize, pad: usize) -> Tensor<f64> {
        let [n, c, h, w] = input.dims();
        let [o, _, k, _] = weight.dims();
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (w + 2 * pad - k) / stride + 1;
        let mut out = Tensor::zeros([n, o, oh, ow]);
        for b in 0..n {
            for (oc, &bo) in bias.iter().enumerate().take(o) {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut s = bo;
                        for ic in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (y * stride + ky) as isize - pad as isize;
                                    let ix = (x * stride + kx) as isize - pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        s += input.at(b, ic, iy as usize, ix as usize) * weight.at(oc, ic, ky, kx);
                                    }
                                }
                            }
                        }
                        out.set(b, oc, y, x, s);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_naive_loops() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for &(k, stride, pad) in &[(3, 1, 1), (1, 1, 0), (3, 2, 1), (3, 1, 0), (1, 2, 0)] {
            let x = Tensor::<f64>::random_uniform([2, 3, 7, 6], -1.0, 1.0, &mut rng);
            let w = Tensor::<f64>::random_uniform([4, 3, k, k], -1.0, 1.0, &mut rng);
            let bias = Tensor::<f64>::random_uniform([1, 4, 1, 1], -1.0, 1.0, &mut rng);
            let got = conv2d_forward(&x, &w, Some(&bias), stride, pad).unwrap();
            let want = naive_conv(&x, &w, bias.data(), stride, pad);
            assert!(got.max_abs_diff(&want).unwrap() < 1e-12, "k={k} s={stride} p={pad}");
        }
    }

    #[test]
    fn rejects_channel_mismatch_and_zero_kernel() {
        let x = Tensor::<f32>::zeros([1, 2, 4, 4]);
        assert!(matches!(
            conv2d_forward(&x, &Tensor::zeros([1, 3, 3, 3]), None, 1, 1),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(conv2d_forward(&x, &Tensor::zeros([1, 2, 0, 0]), None, 1, 0).is_err());
    }
}
