//! Full-reference quality metrics on `[0, 1]` images.

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::image::Image;

const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// Peak signal-to-noise ratio in dB with peak 1. Identical images give
/// `+inf`.
pub fn psnr(reference: &Image, test: &Image) -> Result<f64> {
    psnr_with_peak(reference, test, 1.0)
}

pub fn psnr_with_peak(reference: &Image, test: &Image, peak: f64) -> Result<f64> {
    reference.ensure_same_dims(test)?;
    if peak.is_nan() || peak <= 0.0 {
        return Err(Error::invalid(format!("peak must be positive, got {peak}")));
    }
    let mse = mse(reference, test);
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn mse(a: &Image, b: &Image) -> f64 {
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    sum / a.len() as f64
}

/// `"inf"` for infinite values, otherwise fixed four decimals.
pub fn format_db(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

/// SSIM averaging window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SsimWindow {
    /// 11x11 Gaussian with sigma 1.5.
    #[default]
    Gaussian11,
    Uniform8,
}

impl SsimWindow {
    fn weights(self) -> Vec<f64> {
        match self {
            Self::Gaussian11 => {
                let raw: Vec<f64> = (0..11)
                    .map(|i| {
                        let d = i as f64 - 5.0;
                        (-d * d / (2.0 * 1.5 * 1.5)).exp()
                    })
                    .collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / s).collect()
            }
            Self::Uniform8 => vec![1.0 / 8.0; 8],
        }
    }

    pub fn size(self) -> usize {
        match self {
            Self::Gaussian11 => 11,
            Self::Uniform8 => 8,
        }
    }
}

/// Mean structural similarity over all windows that fit inside the image,
/// with the standard Gaussian window and peak 1.
pub fn ssim(reference: &Image, test: &Image) -> Result<f64> {
    ssim_with(reference, test, SsimWindow::Gaussian11)
}

pub fn ssim_with(reference: &Image, test: &Image, window: SsimWindow) -> Result<f64> {
    reference.ensure_same_dims(test)?;
    let (h, w) = reference.dims();
    let n = window.size();
    if h < n || w < n {
        return Err(Error::invalid(format!(
            "image {h}x{w} is smaller than the {n}x{n} SSIM window"
        )));
    }
    let k = window.weights();
    let x = reference.data();
    let y = test.data();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mu_x = filter_valid(x, h, w, &k);
    let mu_y = filter_valid(y, h, w, &k);
    let e_xx = filter_valid(&xx, h, w, &k);
    let e_yy = filter_valid(&yy, h, w, &k);
    let e_xy = filter_valid(&xy, h, w, &k);
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let mut total = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = e_xx[i] - mx * mx;
        let vy = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        let num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
        let den = (mx * mx + my * my + c1) * (vx + vy + c2);
        total += num / den;
    }
    Ok(total / mu_x.len() as f64)
}

/// Separable correlation keeping only fully covered positions.
fn filter_valid(data: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        let line = &data[r * w..(r + 1) * w];
        for c in 0..ow {
            rows[r * ow + c] = line[c..c + n].iter().zip(k).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..n).map(|t| rows[(r + t) * ow + c] * k[t]).sum();
        }
    }
    out
}

fn serialize_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(&format_db(*v))
    }
}

/// PSNR and SSIM of one test image against a reference.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub reference: String,
    pub test: String,
    #[serde(serialize_with = "serialize_db")]
    pub psnr_db: f64,
    pub ssim: f64,
}

impl MetricReport {
    pub fn compute(
        reference_id: &str,
        reference: &Image,
        test_id: &str,
        test: &Image,
    ) -> Result<Self> {
        Ok(Self {
            reference: reference_id.to_string(),
            test: test_id.to_string(),
            psnr_db: psnr(reference, test)?,
            ssim: ssim(reference, test)?,
        })
    }
}
