//! Full-reference quality metrics: PSNR and SSIM on [0, 1] RGB images.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::tensor_engine::Tensor;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Peak signal-to-noise ratio in dB over all pixels and channels.
/// Identical inputs give `f64::INFINITY`.
pub fn psnr(a: &Tensor<f32>, b: &Tensor<f32>, peak: f64) -> Result<f64> {
    a.expect_dims("psnr", b.dims())?;
    if a.is_empty() {
        return Err(Error::invalid("psnr", "empty images"));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = g.iter().sum();
    let g1: Vec<f64> = g.iter().map(|v| v / s).collect();
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for &gy in &g1 {
        for &gx in &g1 {
            w.push(gy * gx);
        }
    }
    w
}

/// Mean structural similarity: per channel, 11x11 Gaussian window
/// (sigma 1.5) over every fully contained window position, K1 = 0.01,
/// K2 = 0.03, dynamic range 1.
pub fn ssim(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<f64> {
    a.expect_dims("ssim", b.dims())?;
    let [n, c, h, w] = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(
            "ssim",
            format!("image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        ));
    }
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let win = gaussian_window();
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut total = 0.0;
    let mut count = 0usize;
    let mut pa = vec![0.0; SSIM_WINDOW * SSIM_WINDOW];
    let mut pb = vec![0.0; SSIM_WINDOW * SSIM_WINDOW];
    for bi in 0..n {
        for ch in 0..c {
            let (xa, xb) = (a.plane(bi, ch), b.plane(bi, ch));
            for y in 0..oh {
                for x in 0..ow {
                    for wy in 0..SSIM_WINDOW {
                        let row = (y + wy) * w + x;
                        for wx in 0..SSIM_WINDOW {
                            pa[wy * SSIM_WINDOW + wx] = xa[row + wx] as f64;
                            pb[wy * SSIM_WINDOW + wx] = xb[row + wx] as f64;
                        }
                    }
                    let (mut mu_a, mut mu_b) = (0.0, 0.0);
                    for ((&g, &u), &v) in win.iter().zip(&pa).zip(&pb) {
                        mu_a += g * u;
                        mu_b += g * v;
                    }
                    let (mut var_a, mut var_b, mut cov) = (0.0, 0.0, 0.0);
                    for ((&g, &u), &v) in win.iter().zip(&pa).zip(&pb) {
                        let (du, dv) = (u - mu_a, v - mu_b);
                        var_a += g * du * du;
                        var_b += g * dv * dv;
                        cov += g * du * dv;
                    }
                    let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
                    let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
                    total += num / den;
                    count += 1;
                }
            }
        }
    }
    Ok(total / count as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricConfig {
    pub peak: f64,
    pub ssim_window: usize,
    pub ssim_sigma: f64,
    pub ssim_k1: f64,
    pub ssim_k2: f64,
    pub color_space: &'static str,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            peak: 1.0,
            ssim_window: SSIM_WINDOW,
            ssim_sigma: SSIM_SIGMA,
            ssim_k1: SSIM_K1,
            ssim_k2: SSIM_K2,
            color_space: "rgb",
        }
    }
}

/// Infinite PSNR is written as the string `"inf"`.
fn serialize_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalRecord {
    pub id: String,
    #[serde(serialize_with = "serialize_db")]
    pub psnr_db: f64,
    pub ssim: f64,
    /// Always null; kept for column compatibility with PSNR/SSIM/NIQE tables.
    pub niqe: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub count: usize,
    #[serde(serialize_with = "serialize_db")]
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub niqe: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
    pub config: MetricConfig,
}

#[derive(Serialize)]
struct AggregateLine<'a> {
    aggregate: Aggregate,
    config: &'a MetricConfig,
}

impl EvalReport {
    pub fn new(config: MetricConfig) -> Self {
        EvalReport {
            records: Vec::new(),
            config,
        }
    }

    pub fn add(
        &mut self,
        id: impl Into<String>,
        restored: &Tensor<f32>,
        reference: &Tensor<f32>,
    ) -> Result<&EvalRecord> {
        let record = EvalRecord {
            id: id.into(),
            psnr_db: psnr(restored, reference, self.config.peak)?,
            ssim: ssim(restored, reference)?,
            niqe: None,
        };
        self.records.push(record);
        Ok(self.records.last().unwrap())
    }

    pub fn aggregate(&self) -> Aggregate {
        let n = self.records.len();
        let mean = |f: fn(&EvalRecord) -> f64| {
            if n == 0 {
                f64::NAN
            } else {
                self.records.iter().map(f).sum::<f64>() / n as f64
            }
        };
        Aggregate {
            count: n,
            mean_psnr_db: mean(|r| r.psnr_db),
            mean_ssim: mean(|r| r.ssim),
            niqe: None,
        }
    }

    /// One JSON object per record, then one aggregate line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&AggregateLine {
            aggregate: self.aggregate(),
            config: &self.config,
        })?);
        out.push('\n');
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(dims: [usize; 4], seed: u64) -> Tensor<f32> {
        Tensor::random_uniform(dims, 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Structured test pattern: smooth gradient plus a bright square.
    fn structured() -> Tensor<f32> {
        let mut t = Tensor::zeros([1, 3, 24, 24]);
        for c in 0..3 {
            for y in 0..24 {
                for x in 0..24 {
                    let mut v = 0.1 + 0.6 * (x as f32 / 23.0) * (1.0 - 0.3 * c as f32);
                    if (6..14).contains(&y) && (8..18).contains(&x) {
                        v = 0.95;
                    }
                    t.set(0, c, y, x, v);
                }
            }
        }
        t
    }

    #[test]
    fn identical_images() {
        let a = random([1, 3, 16, 16], 1);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn uniform_offset_psnr_closed_form() {
        let a = random([1, 3, 16, 16], 2).map(|v| v * 0.5);
        let b = a.map(|v| v + 10.0 / 255.0);
        let got = psnr(&a, &b, 1.0).unwrap();
        let want = 20.0 * (255.0f64 / 10.0).log10();
        assert!((got - want).abs() < 1e-4, "{got} vs {want}");
        assert!((got - 28.13).abs() < 0.01);
    }

    #[test]
    fn psnr_matches_loop_oracle() {
        let a = random([1, 3, 9, 7], 3);
        let b = random([1, 3, 9, 7], 4);
        let mut mse = 0.0f64;
        for c in 0..3 {
            for y in 0..9 {
                for x in 0..7 {
                    let d = a.at(0, c, y, x) as f64 - b.at(0, c, y, x) as f64;
                    mse += d * d;
                }
            }
        }
        mse /= (3 * 9 * 7) as f64;
        let want = 10.0 * (1.0 / mse).log10();
        assert!((psnr(&a, &b, 1.0).unwrap() - want).abs() < 1e-6);
    }

    #[test]
    fn flat_images_reduce_to_luminance_term() {
        let (p, q) = (0.3f32, 0.7f32);
        let a = Tensor::full([1, 3, 12, 12], p);
        let b = Tensor::full([1, 3, 12, 12], q);
        let (p, q) = (p as f64, q as f64);
        let c1 = 0.01f64.powi(2);
        let want = (2.0 * p * q + c1) / (p * p + q * q + c1);
        assert!((ssim(&a, &b).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn inverted_structured_image_scores_low() {
        let a = structured();
        let b = a.map(|v| 1.0 - v);
        assert!(ssim(&a, &b).unwrap() < 0.5);
    }

    #[test]
    fn errors() {
        let a = random([1, 3, 10, 20], 5);
        assert!(ssim(&a, &a).is_err());
        assert!(psnr(&a, &random([1, 3, 20, 10], 5), 1.0).is_err());
    }

    #[test]
    fn psnr_decreases_with_noise_amplitude() {
        let a = random([1, 3, 16, 16], 6).map(|v| 0.25 + 0.5 * v);
        let noise = random([1, 3, 16, 16], 7);
        let mut last = f64::INFINITY;
        for amp in [0.01f32, 0.02, 0.05, 0.1, 0.2] {
            let b = a.zip_map(&noise, "noise", |x, n| x + amp * (n - 0.5)).unwrap();
            let p = psnr(&a, &b, 1.0).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn report_lines_and_aggregate() {
        let mut report = EvalReport::new(MetricConfig::default());
        let a = random([1, 3, 12, 12], 8);
        let b = random([1, 3, 12, 12], 9);
        report.add("same", &a, &a).unwrap();
        report.add("diff", &a, &b).unwrap();
        let agg = report.aggregate();
        assert_eq!(agg.count, 2);
        assert_eq!(agg.mean_psnr_db, f64::INFINITY);
        let mean_ssim = (report.records[0].ssim + report.records[1].ssim) / 2.0;
        assert_eq!(agg.mean_ssim, mean_ssim);
        let text = report.to_jsonl().unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with(r#"{"id":"same","psnr_db":"inf","ssim":1.0,"niqe":null}"#));
        assert!(lines[2].starts_with(r#"{"aggregate":{"count":2,"mean_psnr_db":"inf""#));
    }

    proptest! {
        #[test]
        fn metrics_are_symmetric(seed in any::<u64>()) {
            let a = random([1, 3, 13, 14], seed);
            let b = random([1, 3, 13, 14], seed ^ 0x5555);
            prop_assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
            prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-9);
            prop_assert!(ssim(&a, &b).unwrap() < 1.0);
        }
    }
}
