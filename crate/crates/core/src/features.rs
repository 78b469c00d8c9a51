//! Network input/output packing: Haar subbands (12 channels) and the optional
//! dark-channel plane (13th channel).
//!
//! Channel order is LL-R,G,B; LH-R,G,B; HL-R,G,B; HH-R,G,B; then the dark
//! channel when present.

use crate::error::{Error, Result};
use crate::tensor_engine::{concat_channels, Scalar, Tensor};
use crate::wavelet::{dwt2_haar, idwt2_haar, WaveletPack};

pub const COLOR_CHANNELS: usize = 3;
pub const SUBBAND_CHANNELS: usize = 4 * COLOR_CHANNELS;
pub const JOINT_CHANNELS: usize = SUBBAND_CHANNELS + 1;

#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePack<T = f32> {
    /// (batch, 12, H/2, W/2)
    pub subbands: Tensor<T>,
    /// (batch, 1, H/2, W/2)
    pub dark: Option<Tensor<T>>,
    /// Image size before even-padding.
    pub original: Option<(usize, usize)>,
}

impl<T: Scalar> FeaturePack<T> {
    pub fn channels(&self) -> usize {
        SUBBAND_CHANNELS + usize::from(self.dark.is_some())
    }

    /// The network-facing tensor: subbands, then the dark channel if present.
    pub fn to_tensor(&self) -> Tensor<T> {
        match &self.dark {
            Some(d) => concat_channels(&[&self.subbands, d]).expect("pack parts share spatial dims"),
            None => self.subbands.clone(),
        }
    }

    /// Re-wraps a 12- or 13-channel network tensor.
    pub fn from_tensor(t: &Tensor<T>, original: Option<(usize, usize)>) -> Result<Self> {
        match t.channels() {
            SUBBAND_CHANNELS => Ok(FeaturePack {
                subbands: t.clone(),
                dark: None,
                original,
            }),
            JOINT_CHANNELS => Ok(FeaturePack {
                subbands: t.slice_channels(0, SUBBAND_CHANNELS)?,
                dark: Some(t.slice_channels(SUBBAND_CHANNELS, 1)?),
                original,
            }),
            c => Err(Error::invalid(
                "feature pack",
                format!("expected {SUBBAND_CHANNELS} or {JOINT_CHANNELS} channels, got {c}"),
            )),
        }
    }
}

fn validate_image<T: Scalar>(op: &'static str, image: &Tensor<T>) -> Result<()> {
    if image.channels() != COLOR_CHANNELS {
        return Err(Error::invalid(
            op,
            format!("expected a 3-channel image, got {} channels", image.channels()),
        ));
    }
    if image.height() < 2 || image.width() < 2 {
        return Err(Error::invalid(
            op,
            format!("image {}x{} smaller than 2x2", image.height(), image.width()),
        ));
    }
    if let Some(v) = image.data().iter().find(|v| !(**v >= T::zero() && **v <= T::one())) {
        return Err(Error::invalid(op, format!("pixel value {v:?} outside [0, 1]")));
    }
    Ok(())
}

/// Per-pixel minimum over the color channels, and over a `(2r+1)^2` window
/// (clipped at the borders) when `radius > 0`.
pub fn dark_channel<T: Scalar>(image: &Tensor<T>, radius: usize) -> Result<Tensor<T>> {
    if image.channels() != COLOR_CHANNELS {
        return Err(Error::invalid(
            "dark_channel",
            format!("expected 3 channels, got {}", image.channels()),
        ));
    }
    let [n, _, h, w] = image.dims();
    let mut out = Tensor::zeros([n, 1, h, w]);
    for b in 0..n {
        let (r, g, bl) = (image.plane(b, 0), image.plane(b, 1), image.plane(b, 2));
        let dst = out.plane_mut(b, 0);
        for i in 0..h * w {
            dst[i] = r[i].min(g[i]).min(bl[i]);
        }
        if radius > 0 {
            let pixel_min = dst.to_vec();
            // separable min filter: rows, then columns
            let mut rows = vec![T::zero(); h * w];
            for y in 0..h {
                for x in 0..w {
                    let (lo, hi) = (x.saturating_sub(radius), (x + radius).min(w - 1));
                    rows[y * w + x] = pixel_min[y * w + lo..=y * w + hi]
                        .iter()
                        .copied()
                        .fold(T::infinity(), T::min);
                }
            }
            for y in 0..h {
                let (lo, hi) = (y.saturating_sub(radius), (y + radius).min(h - 1));
                for x in 0..w {
                    dst[y * w + x] = (lo..=hi).map(|yy| rows[yy * w + x]).fold(T::infinity(), T::min);
                }
            }
        }
    }
    Ok(out)
}

/// Reflect-pads the bottom row / right column so both sizes are even.
pub fn reflect_pad_even<T: Scalar>(image: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = image.dims();
    let (ph, pw) = (h + h % 2, w + w % 2);
    if (ph, pw) == (h, w) {
        return image.clone();
    }
    let reflect = |i: usize, len: usize| if i < len { i } else { 2 * len - 2 - i };
    let mut out = Tensor::zeros([n, c, ph, pw]);
    for b in 0..n {
        for ch in 0..c {
            let src = image.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for y in 0..ph {
                let sy = reflect(y, h);
                for x in 0..pw {
                    dst[y * pw + x] = src[sy * w + reflect(x, w)];
                }
            }
        }
    }
    out
}

/// Top-left `height x width` crop.
pub fn crop<T: Scalar>(image: &Tensor<T>, height: usize, width: usize) -> Tensor<T> {
    let [n, c, h, w] = image.dims();
    if (h, w) == (height, width) {
        return image.clone();
    }
    let mut out = Tensor::zeros([n, c, height, width]);
    for b in 0..n {
        for ch in 0..c {
            let src = image.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for y in 0..height {
                dst[y * width..(y + 1) * width].copy_from_slice(&src[y * w..y * w + width]);
            }
        }
    }
    out
}

/// 2x2 mean pooling; sizes must be even.
pub fn avg_pool2<T: Scalar>(image: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = image.dims();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::OddDimensions { height: h, width: w });
    }
    let quarter = T::from_f64(0.25);
    let (hh, ww) = (h / 2, w / 2);
    let mut out = Tensor::zeros([n, c, hh, ww]);
    for b in 0..n {
        for ch in 0..c {
            let src = image.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for y in 0..hh {
                for x in 0..ww {
                    let i = 2 * y * w + 2 * x;
                    dst[y * ww + x] = (src[i] + src[i + 1] + src[i + w] + src[i + w + 1]) * quarter;
                }
            }
        }
    }
    Ok(out)
}

fn subband_tensor<T: Scalar>(p: &WaveletPack<T>) -> Tensor<T> {
    concat_channels(&[&p.ll, &p.lh, &p.hl, &p.hh]).expect("subbands share dims")
}

pub fn pack_srr<T: Scalar>(image: &Tensor<T>) -> Result<FeaturePack<T>> {
    validate_image("pack_srr", image)?;
    let padded = reflect_pad_even(image);
    let wp = dwt2_haar(&padded)?;
    Ok(FeaturePack {
        subbands: subband_tensor(&wp),
        dark: None,
        original: Some((image.height(), image.width())),
    })
}

/// As [`pack_srr`], plus the dark channel of the 2x2-mean-pooled image so it
/// aligns with the half-resolution subbands.
pub fn pack_djrhr<T: Scalar>(image: &Tensor<T>) -> Result<FeaturePack<T>> {
    validate_image("pack_djrhr", image)?;
    let padded = reflect_pad_even(image);
    let wp = dwt2_haar(&padded)?;
    let dark = dark_channel(&avg_pool2(&padded)?, 0)?;
    Ok(FeaturePack {
        subbands: subband_tensor(&wp),
        dark: Some(dark),
        original: Some((image.height(), image.width())),
    })
}

/// Inverse transform of the 12 subband channels. The dark channel, if any,
/// is ignored. Output is cropped to the original size and clamped to [0, 1].
pub fn unpack_to_image<T: Scalar>(pack: &FeaturePack<T>) -> Result<Tensor<T>> {
    let (h, w) = pack
        .original
        .ok_or_else(|| Error::invalid("unpack_to_image", "pack has no recorded original size"))?;
    let s = &pack.subbands;
    if s.channels() != SUBBAND_CHANNELS {
        return Err(Error::invalid(
            "unpack_to_image",
            format!("expected {SUBBAND_CHANNELS} subband channels, got {}", s.channels()),
        ));
    }
    let (hs, ws) = (s.height() * 2, s.width() * 2);
    if hs < h || ws < w || hs > h + 1 || ws > w + 1 {
        return Err(Error::invalid(
            "unpack_to_image",
            format!("subbands {hs}x{ws} cannot hold original {h}x{w}"),
        ));
    }
    let part = |i: usize| s.slice_channels(i * COLOR_CHANNELS, COLOR_CHANNELS);
    let wp = WaveletPack {
        ll: part(0)?,
        lh: part(1)?,
        hl: part(2)?,
        hh: part(3)?,
        source: (hs, ws),
    };
    let full = idwt2_haar(&wp)?;
    Ok(crop(&full, h, w).map(|v| v.max(T::zero()).min(T::one())))
}
