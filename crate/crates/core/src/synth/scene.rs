use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::haze::value_noise;
use crate::tensor_engine::Tensor;

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> [f32; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let sector = h6.floor() as u32 % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn random_color(rng: &mut ChaCha8Rng) -> [f32; 3] {
    hsv_to_rgb(rng.random(), rng.random_range(0.55..1.0), rng.random_range(0.25..0.95))
}

enum Shape {
    Rect { y0: f32, x0: f32, y1: f32, x1: f32 },
    Disc { cy: f32, cx: f32, r2: f32 },
}

impl Shape {
    fn contains(&self, y: f32, x: f32) -> bool {
        match *self {
            Shape::Rect { y0, x0, y1, x1 } => y >= y0 && y < y1 && x >= x0 && x < x1,
            Shape::Disc { cy, cx, r2 } => (y - cy).powi(2) + (x - cx).powi(2) < r2,
        }
    }
}

/// A clean (1, 3, H, W) image: saturated colored shapes over a textured,
/// two-tone background, with some near-black regions, so that most
/// neighbourhoods contain a channel close to zero.
pub fn generate_scene(height: usize, width: usize, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hf, wf) = (height as f32, width as f32);
    let base = [random_color(&mut rng), random_color(&mut rng)];
    let shapes: Vec<(Shape, [f32; 3])> = (0..rng.random_range(6..14))
        .map(|_| {
            let shape = if rng.random_bool(0.5) {
                let (y0, x0) = (rng.random_range(-0.1..0.9) * hf, rng.random_range(-0.1..0.9) * wf);
                Shape::Rect {
                    y0,
                    x0,
                    y1: y0 + rng.random_range(0.1..0.5) * hf,
                    x1: x0 + rng.random_range(0.1..0.5) * wf,
                }
            } else {
                let r = rng.random_range(0.05..0.25) * hf.min(wf);
                Shape::Disc {
                    cy: rng.random::<f32>() * hf,
                    cx: rng.random::<f32>() * wf,
                    r2: r * r,
                }
            };
            let color = if rng.random_bool(0.2) {
                let v = rng.random_range(0.0..0.12);
                [v, v, v]
            } else {
                random_color(&mut rng)
            };
            (shape, color)
        })
        .collect();
    let texture = value_noise(height, width, 8, 3, rng.random());
    let mix = value_noise(height, width, 2, 2, rng.random());

    let mut out = Tensor::zeros([1, 3, height, width]);
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let (yc, xc) = (y as f32 + 0.5, x as f32 + 0.5);
            let mut color = if mix[i] < 0.5 { base[0] } else { base[1] };
            for (shape, c) in &shapes {
                if shape.contains(yc, xc) {
                    color = *c;
                }
            }
            let shade = 0.75 + 0.5 * (texture[i] - 0.5);
            for (c, &v) in color.iter().enumerate() {
                out.set(0, c, y, x, (v * shade).clamp(0.0, 1.0));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::dark_channel;

    #[test]
    fn hsv_primaries() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [1.0, 0.0, 0.0]);
        assert_eq!(hsv_to_rgb(1.0 / 3.0, 1.0, 1.0), [0.0, 1.0, 0.0]);
        assert_eq!(hsv_to_rgb(0.5, 0.0, 0.4), [0.4, 0.4, 0.4]);
    }

    #[test]
    fn scenes_are_deterministic_in_range_and_mostly_dark_channel_low() {
        let a = generate_scene(48, 40, 11);
        assert_eq!(a, generate_scene(48, 40, 11));
        assert_ne!(a, generate_scene(48, 40, 12));
        assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let dark = dark_channel(&a, 3).unwrap();
        let mean = dark.data().iter().sum::<f32>() / dark.len() as f32;
        assert!(mean < 0.25, "mean dark channel {mean}");
    }
}
