//! Single-level orthonormal 2-D Haar transform.
//!
//! For each disjoint 2x2 block `[[a, b], [c, d]]` (`a, b` on the top row):
//!
//! ```text
//! LL = (a + b + c + d) / 2      HL = (a - b + c - d) / 2
//! LH = (a + b - c - d) / 2      HH = (a - b - c + d) / 2
//! ```
//!
//! HL responds to variation along a row (vertical structures such as falling
//! rain), LH to variation down a column.

use crate::error::{Error, Result};
use crate::tensor_engine::{Scalar, Tensor};

/// The four half-resolution subbands of an image batch.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletPack<T = f32> {
    pub ll: Tensor<T>,
    pub lh: Tensor<T>,
    pub hl: Tensor<T>,
    pub hh: Tensor<T>,
    /// (height, width) of the analysed image.
    pub source: (usize, usize),
}

impl<T: Scalar> WaveletPack<T> {
    pub fn subbands(&self) -> [&Tensor<T>; 4] {
        [&self.ll, &self.lh, &self.hl, &self.hh]
    }

    pub fn energy(&self) -> f64 {
        self.subbands().iter().map(|s| s.sum_sq_f64()).sum()
    }

    /// Energy of LH, HL and HH.
    pub fn detail_energy(&self) -> f64 {
        self.lh.sum_sq_f64() + self.hl.sum_sq_f64() + self.hh.sum_sq_f64()
    }
}

pub fn dwt2_haar<T: Scalar>(image: &Tensor<T>) -> Result<WaveletPack<T>> {
    let [n, c, h, w] = image.dims();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::OddDimensions { height: h, width: w });
    }
    let half = T::from_f64(0.5);
    let sub = [n, c, h / 2, w / 2];
    let mut ll = Tensor::zeros(sub);
    let mut lh = Tensor::zeros(sub);
    let mut hl = Tensor::zeros(sub);
    let mut hh = Tensor::zeros(sub);
    let (hw, ww) = (h / 2, w / 2);
    for b in 0..n {
        for ch in 0..c {
            let src = image.plane(b, ch);
            let start = (b * c + ch) * hw * ww;
            for y in 0..hw {
                let top = &src[2 * y * w..(2 * y + 1) * w];
                let bot = &src[(2 * y + 1) * w..(2 * y + 2) * w];
                for x in 0..ww {
                    let (a, bb) = (top[2 * x], top[2 * x + 1]);
                    let (cc, d) = (bot[2 * x], bot[2 * x + 1]);
                    let i = start + y * ww + x;
                    ll.data_mut()[i] = (a + bb + cc + d) * half;
                    hl.data_mut()[i] = (a - bb + cc - d) * half;
                    lh.data_mut()[i] = (a + bb - cc - d) * half;
                    hh.data_mut()[i] = (a - bb - cc + d) * half;
                }
            }
        }
    }
    Ok(WaveletPack {
        ll,
        lh,
        hl,
        hh,
        source: (h, w),
    })
}

pub fn idwt2_haar<T: Scalar>(pack: &WaveletPack<T>) -> Result<Tensor<T>> {
    let dims = pack.ll.dims();
    for s in [&pack.lh, &pack.hl, &pack.hh] {
        s.expect_dims("idwt2_haar", dims)?;
    }
    let [n, c, hw, ww] = dims;
    let (h, w) = (hw * 2, ww * 2);
    if pack.source != (h, w) {
        return Err(Error::invalid(
            "idwt2_haar",
            format!("subbands {hw}x{ww} do not match recorded source {:?}", pack.source),
        ));
    }
    let half = T::from_f64(0.5);
    let mut out = Tensor::zeros([n, c, h, w]);
    for b in 0..n {
        for ch in 0..c {
            let (ll, lh) = (pack.ll.plane(b, ch), pack.lh.plane(b, ch));
            let (hl, hh) = (pack.hl.plane(b, ch), pack.hh.plane(b, ch));
            let dst = out.plane_mut(b, ch);
            for y in 0..hw {
                for x in 0..ww {
                    let i = y * ww + x;
                    let (s, v, u, d) = (ll[i], hl[i], lh[i], hh[i]);
                    dst[2 * y * w + 2 * x] = (s + v + u + d) * half;
                    dst[2 * y * w + 2 * x + 1] = (s - v + u - d) * half;
                    dst[(2 * y + 1) * w + 2 * x] = (s + v - u - d) * half;
                    dst[(2 * y + 1) * w + 2 * x + 1] = (s - v - u + d) * half;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_block_matches_formulas() {
        let x = Tensor::<f32>::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = dwt2_haar(&x).unwrap();
        assert_eq!(p.ll.data(), &[5.0]);
        assert_eq!(p.hl.data(), &[-1.0]);
        assert_eq!(p.lh.data(), &[-2.0]);
        assert_eq!(p.hh.data(), &[0.0]);
    }

    #[test]
    fn constant_image_has_only_ll() {
        let x = Tensor::<f32>::full([1, 3, 6, 4], 0.3);
        let p = dwt2_haar(&x).unwrap();
        assert!(p.ll.data().iter().all(|&v| (v - 0.6).abs() < 1e-7));
        assert_eq!(p.detail_energy(), 0.0);
    }

    #[test]
    fn vertical_stripes_land_in_hl_only() {
        // columns alternate 0/1, constant down each column
        let (h, w) = (8, 8);
        let data = (0..h * w).map(|i| (i % w % 2) as f32).collect();
        let x = Tensor::from_vec([1, 1, h, w], data).unwrap();
        let p = dwt2_haar(&x).unwrap();
        assert_eq!(p.lh.sum_sq_f64(), 0.0);
        assert_eq!(p.hh.sum_sq_f64(), 0.0);
        assert!(p.hl.sum_sq_f64() > 0.0);
    }

    #[test]
    fn horizontal_stripes_land_in_lh_only() {
        let (h, w) = (6, 4);
        let data = (0..h * w).map(|i| (i / w % 2) as f32).collect();
        let x = Tensor::from_vec([1, 1, h, w], data).unwrap();
        let p = dwt2_haar(&x).unwrap();
        assert_eq!(p.hl.sum_sq_f64(), 0.0);
        assert_eq!(p.hh.sum_sq_f64(), 0.0);
        assert!(p.lh.sum_sq_f64() > 0.0);
    }

    #[test]
    fn odd_sizes_are_rejected() {
        let err = dwt2_haar(&Tensor::<f32>::zeros([1, 3, 5, 4])).unwrap_err();
        assert!(matches!(err, Error::OddDimensions { height: 5, width: 4 }));
        assert!(err.to_string().contains("pad"));
    }

    #[test]
    fn inconsistent_pack_is_rejected() {
        let mut p = dwt2_haar(&Tensor::<f32>::zeros([1, 1, 4, 4])).unwrap();
        p.hh = Tensor::zeros([1, 1, 2, 3]);
        assert!(idwt2_haar(&p).is_err());
    }

    #[test]
    fn ll_only_pack_reconstructs_constant() {
        let dims = [1, 2, 3, 3];
        let p = WaveletPack {
            ll: Tensor::<f32>::full(dims, 2.0 * 0.4),
            lh: Tensor::zeros(dims),
            hl: Tensor::zeros(dims),
            hh: Tensor::zeros(dims),
            source: (6, 6),
        };
        let x = idwt2_haar(&p).unwrap();
        assert!(x.data().iter().all(|&v| (v - 0.4).abs() < 1e-7));
    }

    #[test]
    fn pack_side_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dims = [2, 3, 4, 5];
        let p = WaveletPack {
            ll: Tensor::<f32>::random_uniform(dims, 0.0, 2.0, &mut rng),
            lh: Tensor::random_uniform(dims, -1.0, 1.0, &mut rng),
            hl: Tensor::random_uniform(dims, -1.0, 1.0, &mut rng),
            hh: Tensor::random_uniform(dims, -1.0, 1.0, &mut rng),
            source: (8, 10),
        };
        let back = dwt2_haar(&idwt2_haar(&p).unwrap()).unwrap();
        for (a, b) in p.subbands().iter().zip(back.subbands()) {
            assert!(a.max_abs_diff(b).unwrap() <= 1e-6);
        }
    }

    proptest! {
        #[test]
        fn reconstruction_and_energy(h in 1usize..12, w in 1usize..12, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Tensor::<f32>::random_uniform([1, 3, 2 * h, 2 * w], 0.0, 1.0, &mut rng);
            let p = dwt2_haar(&x).unwrap();
            let back = idwt2_haar(&p).unwrap();
            prop_assert!(back.max_abs_diff(&x).unwrap() <= 1e-6);
            let (e_img, e_pack) = (x.sum_sq_f64(), p.energy());
            prop_assert!(((e_img - e_pack) / e_img).abs() <= 1e-5);
        }

        #[test]
        fn transform_is_linear(alpha in -2.0f64..2.0, beta in -2.0f64..2.0, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Tensor::<f64>::random_uniform([1, 2, 4, 6], 0.0, 1.0, &mut rng);
            let y = Tensor::<f64>::random_uniform([1, 2, 4, 6], 0.0, 1.0, &mut rng);
            let mix = x.zip_map(&y, "mix", |a, b| alpha * a + beta * b).unwrap();
            let (px, py, pm) = (dwt2_haar(&x).unwrap(), dwt2_haar(&y).unwrap(), dwt2_haar(&mix).unwrap());
            for ((a, b), m) in px.subbands().iter().zip(py.subbands()).zip(pm.subbands()) {
                let want = a.zip_map(b, "mix", |u, v| alpha * u + beta * v).unwrap();
                prop_assert!(m.max_abs_diff(&want).unwrap() < 1e-12);
            }
        }
    }
}
