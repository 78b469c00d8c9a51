use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_engine::Tensor;

/// Parameters of one procedural rain-streak type.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RainParams {
    /// Degrees from vertical, in [-20, 20].
    pub angle_deg: f32,
    /// Streak length in pixels.
    pub length: u32,
    /// Expected streak seeds per 1000 pixels, per layer.
    pub density: f32,
    /// Peak streak brightness, in (0, 1].
    pub intensity: f32,
    pub layers: u32,
    pub seed: u64,
}

pub const DEFAULT_LAYERS: u32 = 2;
pub const PRESET_ANGLES: [f32; 4] = [-15.0, -5.0, 5.0, 15.0];
pub const PRESET_LENGTHS: [u32; 3] = [8, 14, 20];
pub const PRESET_DENSITY: f32 = 2.5;
pub const PRESET_INTENSITY: f32 = 0.6;

impl RainParams {
    /// The twelve built-in streak types: 4 angles x 3 lengths.
    pub fn presets() -> Vec<RainParams> {
        PRESET_ANGLES
            .iter()
            .flat_map(|&angle_deg| {
                PRESET_LENGTHS.iter().map(move |&length| RainParams {
                    angle_deg,
                    length,
                    density: PRESET_DENSITY,
                    intensity: PRESET_INTENSITY,
                    layers: DEFAULT_LAYERS,
                    seed: 0,
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::invalid("rain params", reason));
        if !(-20.0..=20.0).contains(&self.angle_deg) {
            return bad(format!("angle {} outside [-20, 20]", self.angle_deg));
        }
        if self.length < 1 {
            return bad("length must be at least 1".into());
        }
        if !(self.density >= 0.0 && self.density.is_finite()) {
            return bad(format!("density {} must be >= 0", self.density));
        }
        if !(self.intensity > 0.0 && self.intensity <= 1.0) {
            return bad(format!("intensity {} outside (0, 1]", self.intensity));
        }
        Ok(())
    }
}

/// One (1, 1, H, W) streak map in [0, 1].
///
/// Seeded uniform noise is thresholded at `density / 1000` to place streak
/// seeds, each with a random brightness in [0.6, 1]. A box blur of
/// `length` taps along the streak direction spreads each seed into a line,
/// rescaled by `length` so an isolated streak keeps its seed brightness,
/// then everything is scaled by `intensity` and clipped.
pub fn generate_rain_layer(height: usize, width: usize, params: &RainParams, layer_index: u32) -> Result<Tensor<f32>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(layer_index as u64 + 1);

    let threshold = params.density as f64 / 1000.0;
    let mut seeds = vec![0.0f32; height * width];
    for s in seeds.iter_mut() {
        let u: f64 = rng.random();
        let brightness: f32 = rng.random_range(0.6..1.0);
        if u < threshold {
            *s = brightness;
        }
    }

    let mut out = Tensor::zeros([1, 1, height, width]);
    if threshold == 0.0 {
        return Ok(out);
    }
    let theta = (params.angle_deg as f64).to_radians();
    let (sx, sy) = (theta.sin(), theta.cos());
    let len = params.length as i64;
    let first = -(len - 1) / 2;
    let offsets: Vec<(i64, i64)> = (first..first + len)
        .map(|k| ((k as f64 * sx).round() as i64, (k as f64 * sy).round() as i64))
        .collect();

    let dst = out.data_mut();
    for y in 0..height as i64 {
        for x in 0..width as i64 {
            let mut acc = 0.0f32;
            for &(dx, dy) in &offsets {
                let (px, py) = (x - dx, y - dy);
                if px >= 0 && py >= 0 && (px as usize) < width && (py as usize) < height {
                    acc += seeds[py as usize * width + px as usize];
                }
            }
            // box-blur mean times tap count is the tap sum
            dst[y as usize * width + x as usize] = (acc * params.intensity).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// All `params.layers` streak maps for an image.
pub fn rain_layers(height: usize, width: usize, params: &RainParams) -> Result<Vec<Tensor<f32>>> {
    (0..params.layers)
        .map(|i| generate_rain_layer(height, width, params, i))
        .collect()
}

/// `clamp(B + sum(layers), 0, 1)`, streaks added equally to every channel.
pub fn apply_rain(background: &Tensor<f32>, layers: &[Tensor<f32>]) -> Result<Tensor<f32>> {
    let [n, c, h, w] = background.dims();
    for l in layers {
        l.expect_dims("apply_rain", [n, 1, h, w])?;
    }
    let mut out = background.clone();
    for b in 0..n {
        for ch in 0..c {
            let dst = out.plane_mut(b, ch);
            for l in layers {
                for (d, &r) in dst.iter_mut().zip(l.plane(b, 0)) {
                    *d += r;
                }
            }
            for d in dst.iter_mut() {
                *d = d.clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::dwt2_haar;

    fn params(angle_deg: f32, length: u32, density: f32) -> RainParams {
        RainParams {
            angle_deg,
            length,
            density,
            intensity: 0.8,
            layers: 2,
            seed: 42,
        }
    }

    #[test]
    fn twelve_presets() {
        let p = RainParams::presets();
        assert_eq!(p.len(), 12);
        assert!(p.iter().all(|r| r.validate().is_ok()));
    }

    #[test]
    fn zero_density_is_empty() {
        let l = generate_rain_layer(32, 32, &params(5.0, 10, 0.0), 0).unwrap();
        assert!(l.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layers_are_deterministic_and_distinct() {
        let p = params(-10.0, 12, 5.0);
        let a = generate_rain_layer(40, 30, &p, 0).unwrap();
        let b = generate_rain_layer(40, 30, &p, 0).unwrap();
        let c = generate_rain_layer(40, 30, &p, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(a.data().iter().any(|&v| v > 0.0));
    }

    #[test]
    fn vertical_streaks_avoid_lh() {
        let l = generate_rain_layer(64, 64, &params(0.0, 16, 3.0), 0).unwrap();
        // vertical runs: every lit pixel has a lit vertical neighbour
        let lit = |y: usize, x: usize| l.at(0, 0, y, x) > 0.0;
        for y in 0..64 {
            for x in 0..64 {
                if lit(y, x) {
                    let up = y > 0 && lit(y - 1, x);
                    let down = y < 63 && lit(y + 1, x);
                    assert!(up || down, "isolated pixel at {y},{x}");
                }
            }
        }
        let wp = dwt2_haar(&l).unwrap();
        let outside_lh = wp.hl.sum_sq_f64() + wp.hh.sum_sq_f64();
        assert!(outside_lh / wp.detail_energy() > 0.8);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(params(25.0, 4, 1.0).validate().is_err());
        assert!(params(0.0, 0, 1.0).validate().is_err());
        assert!(params(0.0, 4, -1.0).validate().is_err());
        let mut p = params(0.0, 4, 1.0);
        p.intensity = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn apply_rain_composition() {
        let b = Tensor::full([1, 3, 8, 8], 0.25f32);
        assert_eq!(apply_rain(&b, &[]).unwrap(), b);

        let mut layer = Tensor::zeros([1, 1, 8, 8]);
        layer.set(0, 0, 3, 4, 0.5);
        let o = apply_rain(&b, std::slice::from_ref(&layer)).unwrap();
        for c in 0..3 {
            let diff: Vec<f32> = o.plane(0, c).iter().zip(b.plane(0, c)).map(|(x, y)| x - y).collect();
            assert_eq!(diff, layer.plane(0, 0));
        }

        let white = Tensor::full([1, 3, 8, 8], 1.0f32);
        assert_eq!(apply_rain(&white, &[layer]).unwrap(), white);

        assert!(apply_rain(&b, &[Tensor::zeros([1, 1, 8, 7])]).is_err());
    }

    #[test]
    fn rain_never_darkens() {
        let p = params(8.0, 10, 6.0);
        let b = Tensor::random_uniform([1, 3, 24, 24], 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(1));
        let o = apply_rain(&b, &rain_layers(24, 24, &p).unwrap()).unwrap();
        assert!(o.data().iter().zip(b.data()).all(|(x, y)| x >= y));
    }
}
