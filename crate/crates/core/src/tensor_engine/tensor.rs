use rand::Rng;

use super::Scalar;
use crate::error::{Error, Result};

/// Dense rank-4 array laid out as (batch, channels, height, width), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    dims: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: [usize; 4], value: T) -> Self {
        Tensor {
            dims,
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::invalid(
                "tensor",
                format!("dims {dims:?} need {len} values, got {}", data.len()),
            ));
        }
        Ok(Tensor { dims, data })
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            dims: [1, 1, 1, 1],
            data: vec![value],
        }
    }

    /// Uniform values in `[lo, hi)`.
    pub fn random_uniform<R: Rng + ?Sized>(dims: [usize; 4], lo: f64, hi: f64, rng: &mut R) -> Self {
        let len = dims.iter().product();
        let data = (0..len).map(|_| T::from_f64(rng.random_range(lo..hi))).collect();
        Tensor { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.dims[2]
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.dims[3]
    }

    /// Elements in one (height, width) plane.
    #[inline]
    pub fn plane_len(&self) -> usize {
        self.dims[2] * self.dims[3]
    }

    /// Elements in one batch item.
    #[inline]
    pub fn item_len(&self) -> usize {
        self.dims[1] * self.dims[2] * self.dims[3]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.dims[1] + c) * self.dims[2] + y) * self.dims[3] + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.index(n, c, y, x);
        self.data[i] = v;
    }

    pub fn item(&self, n: usize) -> &[T] {
        let len = self.item_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [T] {
        let len = self.item_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let len = self.plane_len();
        let start = (n * self.dims[1] + c) * len;
        &self.data[start..start + len]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let len = self.plane_len();
        let start = (n * self.dims[1] + c) * len;
        &mut self.data[start..start + len]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_dims(op, other.dims)?;
        Ok(Tensor {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn expect_dims(&self, op: &'static str, dims: [usize; 4]) -> Result<()> {
        if self.dims != dims {
            return Err(Error::shape(op, &self.dims, &dims));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute elementwise difference; `None` on dim mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> Option<f64> {
        if self.dims != other.dims {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| (a.as_f64() - b.as_f64()).abs())
                .fold(0.0, f64::max),
        )
    }

    pub fn sum_sq_f64(&self) -> f64 {
        self.data.iter().map(|&v| v.as_f64() * v.as_f64()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|&v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// Channels `[start, start + len)` of every batch item.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Self> {
        let [n, c, h, w] = self.dims;
        if start + len > c {
            return Err(Error::invalid(
                "slice_channels",
                format!("range {start}..{} exceeds {c} channels", start + len),
            ));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * len * plane);
        for b in 0..n {
            let base = (b * c + start) * plane;
            data.extend_from_slice(&self.data[base..base + len * plane]);
        }
        Ok(Tensor {
            dims: [n, len, h, w],
            data,
        })
    }

    /// Stacks single-item tensors along the batch axis.
    pub fn stack(items: &[Tensor<T>]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("stack", "no tensors to stack"))?;
        let [_, c, h, w] = first.dims;
        let mut data = Vec::with_capacity(items.iter().map(|t| t.len()).sum());
        let mut n = 0;
        for t in items {
            if t.dims[1..] != first.dims[1..] {
                return Err(Error::shape("stack", &first.dims, &t.dims));
            }
            n += t.dims[0];
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor {
            dims: [n, c, h, w],
            data,
        })
    }

    /// Batch item `n` as its own tensor.
    pub fn select(&self, n: usize) -> Self {
        let [_, c, h, w] = self.dims;
        Tensor {
            dims: [1, c, h, w],
            data: self.item(n).to_vec(),
        }
    }
}

/// Concatenates along the channel axis. All parts must share batch, height and width.
pub fn concat_channels<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::invalid("concat_channels", "no parts"))?;
    let [n, _, h, w] = first.dims;
    for (index, p) in parts.iter().enumerate() {
        if p.dims[0] != n || p.dims[2] != h || p.dims[3] != w {
            return Err(Error::ConcatMismatch {
                op: "concat_channels",
                index,
                expected: vec![n, h, w],
                got: vec![p.dims[0], p.dims[2], p.dims[3]],
            });
        }
    }
    let c: usize = parts.iter().map(|p| p.dims[1]).sum();
    let mut data = Vec::with_capacity(n * c * h * w);
    for b in 0..n {
        for p in parts {
            data.extend_from_slice(p.item(b));
        }
    }
    Ok(Tensor {
        dims: [n, c, h, w],
        data,
    })
}

/// Inverse of [`concat_channels`]: splits into parts with the given channel counts.
pub fn split_channels<T: Scalar>(t: &Tensor<T>, sizes: &[usize]) -> Result<Vec<Tensor<T>>> {
    let total: usize = sizes.iter().sum();
    if total != t.channels() {
        return Err(Error::invalid(
            "split_channels",
            format!("sizes sum to {total}, tensor has {} channels", t.channels()),
        ));
    }
    let mut start = 0;
    sizes
        .iter()
        .map(|&len| {
            let part = t.slice_channels(start, len);
            start += len;
            part
        })
        .collect()
}
