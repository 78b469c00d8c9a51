use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_engine::Tensor;

/// Depth range produced by the procedural generators, arbitrary units.
pub const DEPTH_NEAR: f32 = 0.5;
pub const DEPTH_FAR: f32 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DepthMode {
    /// Linear from `DEPTH_NEAR` (top row) to `DEPTH_FAR` (bottom row).
    Ramp,
    /// Seeded value noise, four octaves, mapped into `[DEPTH_NEAR, DEPTH_FAR]`.
    Fractal,
    Constant {
        value: f32,
    },
}

pub fn generate_depth(height: usize, width: usize, mode: DepthMode, seed: u64) -> Tensor<f32> {
    let mut out = Tensor::zeros([1, 1, height, width]);
    match mode {
        DepthMode::Constant { value } => out.data_mut().fill(value),
        DepthMode::Ramp => {
            let span = (height.max(2) - 1) as f32;
            for y in 0..height {
                let d = DEPTH_NEAR + (DEPTH_FAR - DEPTH_NEAR) * y as f32 / span;
                out.plane_mut(0, 0)[y * width..(y + 1) * width].fill(d);
            }
        }
        DepthMode::Fractal => {
            let noise = value_noise(height, width, 4, 4, seed);
            for (d, n) in out.data_mut().iter_mut().zip(noise) {
                *d = DEPTH_NEAR + (DEPTH_FAR - DEPTH_NEAR) * n;
            }
        }
    }
    out
}

/// Sum of bilinearly interpolated random lattices, normalized to [0, 1].
/// Octave `o` uses a lattice of `base_cells * 2^o` cells with weight `2^-o`.
pub(crate) fn value_noise(height: usize, width: usize, base_cells: usize, octaves: u32, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![0.0f32; height * width];
    let mut total_weight = 0.0f32;
    for o in 0..octaves {
        let cells = base_cells << o;
        let weight = 0.5f32.powi(o as i32);
        let lattice: Vec<f32> = (0..(cells + 1) * (cells + 1)).map(|_| rng.random::<f32>()).collect();
        for y in 0..height {
            let fy = y as f32 / height.max(1) as f32 * cells as f32;
            let (y0, ty) = (fy.floor() as usize, fy.fract());
            for x in 0..width {
                let fx = x as f32 / width.max(1) as f32 * cells as f32;
                let (x0, tx) = (fx.floor() as usize, fx.fract());
                let at = |yy: usize, xx: usize| lattice[yy * (cells + 1) + xx];
                let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
                let bot = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
                acc[y * width + x] += weight * (top * (1.0 - ty) + bot * ty);
            }
        }
        total_weight += weight;
    }
    for v in acc.iter_mut() {
        *v = (*v / total_weight).clamp(0.0, 1.0);
    }
    acc
}

/// Atmospheric scattering: `O = t * I + (1 - t) * A` with `t = exp(-beta * depth)`.
pub fn apply_haze(image: &Tensor<f32>, airlight: f32, beta: f32, depth: &Tensor<f32>) -> Result<Tensor<f32>> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::invalid("apply_haze", format!("beta {beta} must be >= 0")));
    }
    let [n, c, h, w] = image.dims();
    depth.expect_dims("apply_haze depth", [1, 1, h, w])?;
    let transmission: Vec<f32> = depth.data().iter().map(|&d| (-beta * d).exp()).collect();
    let mut out = image.clone();
    for b in 0..n {
        for ch in 0..c {
            for (v, &t) in out.plane_mut(b, ch).iter_mut().zip(&transmission) {
                *v = t * *v + (1.0 - t) * airlight;
            }
        }
    }
    Ok(out)
}
