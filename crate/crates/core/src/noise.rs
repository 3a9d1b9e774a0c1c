//! Synthetic directionally correlated Gaussian noise.
//!
//! An i.i.d. field `x ~ N(0, sigma_0^2)` is averaged along a lattice
//! direction `(p, q)` with an odd-length box kernel, rescaled to a target
//! standard deviation and added to a clean image. Along the direction the
//! resulting correlation at lag `t` is `(ell - |t|) / ell`; orthogonally it is
//! zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::StreamKey;

/// Parameters of the structured noise model.
///
/// `p` is the row step and `q` the column step of the correlation direction,
/// so `(0, 1)` is horizontal banding and `(1, 0)` vertical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub p: i64,
    pub q: i64,
    pub ell: usize,
    pub sigma_n: f64,
    #[serde(default = "default_sigma0")]
    pub sigma_0: f64,
    pub seed: u64,
}

fn default_sigma0() -> f64 {
    1.0
}

impl NoiseConfig {
    /// Horizontal banding, the setting of most experiments.
    pub fn horizontal(ell: usize, sigma_n: f64, seed: u64) -> Self {
        Self {
            p: 0,
            q: 1,
            ell,
            sigma_n,
            sigma_0: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_direction(self.p, self.q)?;
        validate_ell(self.ell)?;
        if !(self.sigma_n >= 0.0 && self.sigma_n.is_finite()) {
            return Err(Error::invalid(format!(
                "sigma_n must be finite and non-negative, got {}",
                self.sigma_n
            )));
        }
        if !(self.sigma_0 > 0.0 && self.sigma_0.is_finite()) {
            return Err(Error::invalid(format!(
                "sigma_0 must be positive, got {}",
                self.sigma_0
            )));
        }
        Ok(())
    }

    /// Half-length of the averaging kernel.
    pub fn radius(&self) -> usize {
        (self.ell - 1) / 2
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Directions live in the half plane `q > 0`, plus `(1, 0)` for the vertical
/// axis, and must be the smallest lattice vector along their angle.
fn validate_direction(p: i64, q: i64) -> Result<()> {
    let canonical = q > 0 || (q == 0 && p == 1);
    if !canonical {
        return Err(Error::invalid(format!(
            "direction ({p},{q}) must have q > 0, or be (1,0)"
        )));
    }
    if gcd(p.unsigned_abs(), q as u64) != 1 {
        return Err(Error::invalid(format!(
            "direction ({p},{q}) is not a primitive lattice vector"
        )));
    }
    Ok(())
}

fn validate_ell(ell: usize) -> Result<()> {
    if ell == 0 || ell.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "kernel length must be odd and positive, got {ell}"
        )));
    }
    Ok(())
}

/// Zero-mean noise field with the same layout as an [`Image`].
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseField {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl NoiseField {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(Error::invalid("noise field shape does not match buffer"));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        let mean = self.mean();
        let ss: f64 = self.values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / self.values.len() as f64).sqrt()
    }

    /// Residual `noisy - clean` of two images.
    pub fn residual(noisy: &Image, clean: &Image) -> Result<Self> {
        let diff = noisy.zip_map(clean, |a, b| a - b)?;
        Ok(Self {
            height: diff.height(),
            width: diff.width(),
            values: diff.into_data(),
        })
    }
}

/// I.i.d. `N(0, sigma_0^2)` field; pixel `k` (row-major) uses draw `k` of the
/// seed's noise stream.
pub fn gen_iid_gaussian(h: usize, w: usize, sigma_0: f64, seed: u64) -> NoiseField {
    assert!(h > 0 && w > 0, "noise field dimensions must be positive");
    let key = StreamKey::root(seed).child(NOISE_TAG);
    let values = (0..(h * w) as u64)
        .map(|k| sigma_0 * key.normal_at(k))
        .collect();
    NoiseField {
        height: h,
        width: w,
        values,
    }
}

const NOISE_TAG: u64 = 0x6E_6F69_7365;

/// Mirror with edge duplication (`... b a | a b c ...`); `i` must lie in `-n..2n`.
#[inline]
fn symmetric_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let k = if i < 0 {
        -i - 1
    } else if i >= n {
        2 * n - 1 - i
    } else {
        i
    };
    debug_assert!((0..n).contains(&k));
    k as usize
}

/// Average `ell` samples spaced by `(p, q)` centered on every pixel, with
/// symmetric (edge-duplicating) padding at the boundary.
pub fn directional_average(x: &NoiseField, p: i64, q: i64, ell: usize) -> Result<NoiseField> {
    validate_ell(ell)?;
    validate_direction(p, q)?;
    let r = ((ell - 1) / 2) as i64;
    let (row_reach, col_reach) = ((r * p.abs()) as usize, (r * q) as usize);
    if row_reach >= x.height || col_reach >= x.width {
        return Err(Error::invalid(format!(
            "field {}x{} too small for kernel reach ({row_reach},{col_reach})",
            x.height, x.width
        )));
    }
    if ell == 1 {
        return Ok(x.clone());
    }
    let inv = 1.0 / ell as f64;
    let mut values = Vec::with_capacity(x.values.len());
    for i in 0..x.height as i64 {
        for j in 0..x.width as i64 {
            let mut acc = 0.0;
            for k in -r..=r {
                let si = symmetric_index((i + k * p) as isize, x.height);
                let sj = symmetric_index((j + k * q) as isize, x.width);
                acc += x.get(si, sj);
            }
            values.push(acc * inv);
        }
    }
    Ok(NoiseField {
        height: x.height,
        width: x.width,
        values,
    })
}

/// Rescale so the empirical (population) standard deviation equals `sigma_n`.
pub fn scale_to_level(y: &NoiseField, sigma_n: f64) -> Result<NoiseField> {
    let std = y.std();
    if std == 0.0 || !std.is_finite() {
        return Err(Error::DegenerateInput(
            "cannot rescale a constant noise field".into(),
        ));
    }
    let factor = sigma_n / std;
    Ok(NoiseField {
        height: y.height,
        width: y.width,
        values: y.values.iter().map(|v| v * factor).collect(),
    })
}

/// The full structured noise field for a `h x w` image.
pub fn structured_noise(h: usize, w: usize, cfg: &NoiseConfig) -> Result<NoiseField> {
    cfg.validate()?;
    let x = gen_iid_gaussian(h, w, cfg.sigma_0, cfg.seed);
    let y = directional_average(&x, cfg.p, cfg.q, cfg.ell)?;
    scale_to_level(&y, cfg.sigma_n)
}

/// Add structured noise to `clean` and clip to `[0, 1]`.
pub fn corrupt(clean: &Image, cfg: &NoiseConfig) -> Result<Image> {
    let noise = structured_noise(clean.height(), clean.width(), cfg)?;
    let data = clean
        .data()
        .iter()
        .zip(&noise.values)
        .map(|(c, n)| (c + n).clamp(0.0, 1.0))
        .collect();
    Image::new(clean.height(), clean.width(), data)
}

/// Sample correlation estimates of a noise field along a direction and its
/// orthogonal `(-q, p)`.
#[derive(Clone, Debug, Serialize)]
pub struct NoiseStatistics {
    pub mean: f64,
    pub variance: f64,
    /// `along[t - 1]` is the correlation at lag `t` along `(p, q)`.
    pub along: Vec<f64>,
    /// `orthogonal[t - 1]` is the correlation at lag `t` along `(-q, p)`.
    pub orthogonal: Vec<f64>,
}

/// Estimate correlations for lags `1..=max_lag`, using only pixels at least
/// `border` away from the edge.
pub fn estimate_statistics(
    field: &NoiseField,
    p: i64,
    q: i64,
    max_lag: usize,
    border: usize,
) -> Result<NoiseStatistics> {
    if max_lag == 0 {
        return Err(Error::invalid("max_lag must be at least 1"));
    }
    if 2 * border >= field.height || 2 * border >= field.width {
        return Err(Error::invalid("border leaves no interior pixels"));
    }
    let (h, w) = (
        (field.height - 2 * border) as i64,
        (field.width - 2 * border) as i64,
    );
    let reach = max_lag as i64 * p.abs().max(q.abs());
    if reach >= h || reach >= w {
        return Err(Error::invalid(format!(
            "lag {max_lag} exceeds interior extent {h}x{w}"
        )));
    }

    let at = |i: i64, j: i64| field.get((i + border as i64) as usize, (j + border as i64) as usize);
    let n = (h * w) as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for i in 0..h {
        for j in 0..w {
            let v = at(i, j);
            sum += v;
            sum_sq += v * v;
        }
    }
    let mean = sum / n;
    let variance = (sum_sq - n * mean * mean) / (n - 1.0);

    let correlation = |di: i64, dj: i64| -> f64 {
        let (i0, i1) = (0.max(-di), h.min(h - di));
        let (j0, j1) = (0.max(-dj), w.min(w - dj));
        let mut s = [0.0f64; 5];
        let mut count = 0.0;
        for i in i0..i1 {
            for j in j0..j1 {
                let a = at(i, j);
                let b = at(i + di, j + dj);
                s[0] += a;
                s[1] += b;
                s[2] += a * a;
                s[3] += b * b;
                s[4] += a * b;
                count += 1.0;
            }
        }
        let (ma, mb) = (s[0] / count, s[1] / count);
        let cov = s[4] / count - ma * mb;
        let va = s[2] / count - ma * ma;
        let vb = s[3] / count - mb * mb;
        cov / (va * vb).sqrt()
    };

    let along = (1..=max_lag as i64)
        .map(|t| correlation(t * p, t * q))
        .collect();
    let orthogonal = (1..=max_lag as i64)
        .map(|t| correlation(-t * q, t * p))
        .collect();
    Ok(NoiseStatistics {
        mean,
        variance,
        along,
        orthogonal,
    })
}

/// Closed-form correlation at lag `t` for kernel length `ell`.
pub fn theoretical_correlation(ell: usize, t: usize) -> f64 {
    if t < ell {
        (ell - t) as f64 / ell as f64
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iid_field_is_reproducible() {
        let a = gen_iid_gaussian(16, 16, 1.0, 42);
        let b = gen_iid_gaussian(16, 16, 1.0, 42);
        let c = gen_iid_gaussian(16, 16, 1.0, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn iid_moments_at_one_million_samples() {
        let f = gen_iid_gaussian(1000, 1000, 1.0, 7);
        assert!(f.mean().abs() < 0.004, "mean {}", f.mean());
        assert!((f.std() - 1.0).abs() < 0.003, "std {}", f.std());
    }

    #[test]
    fn unit_kernel_is_identity() {
        let x = gen_iid_gaussian(8, 9, 1.0, 1);
        assert_eq!(directional_average(&x, 0, 1, 1).unwrap(), x);
    }

    #[test]
    fn even_kernel_and_bad_directions_are_rejected() {
        let x = gen_iid_gaussian(8, 8, 1.0, 1);
        assert!(directional_average(&x, 0, 1, 4).is_err());
        assert!(directional_average(&x, 0, 2, 3).is_err());
        assert!(directional_average(&x, 1, -1, 3).is_err());
        assert!(directional_average(&x, -1, 0, 3).is_err());
        assert!(directional_average(&x, 1, 0, 3).is_ok());
        // reach 4 * 2 = 8 does not fit an 8-pixel field
        assert!(directional_average(&x, 1, 2, 9).is_err());
    }

    #[test]
    fn symmetric_padding_duplicates_edges() {
        let x = NoiseField::new(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let y = directional_average(&x, 0, 1, 3).unwrap();
        // left edge sees [1, 1, 2], right edge [2, 3, 3]
        assert!((y.values()[0] - 4.0 / 3.0).abs() < 1e-15);
        assert!((y.values()[2] - 8.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn scaling_hits_target_exactly() {
        let y = NoiseField::new(1, 4, vec![-0.5, 0.5, -0.5, 0.5]).unwrap();
        assert_eq!(y.std(), 0.5);
        let s = scale_to_level(&y, 0.1).unwrap();
        for (a, b) in s.values().iter().zip(y.values()) {
            assert!((a - 0.2 * b).abs() < 1e-15);
        }
        let x = gen_iid_gaussian(64, 64, 1.0, 5);
        let s = scale_to_level(&x, 0.37).unwrap();
        assert!((s.std() - 0.37).abs() < 1e-14);
    }

    #[test]
    fn constant_field_cannot_be_scaled() {
        let y = NoiseField::new(2, 2, vec![0.3; 4]).unwrap();
        assert!(matches!(
            scale_to_level(&y, 0.1),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn correlation_is_scale_invariant() {
        let x = gen_iid_gaussian(200, 200, 1.0, 9);
        let y = directional_average(&x, 0, 1, 3).unwrap();
        let s = scale_to_level(&y, 0.05).unwrap();
        let a = estimate_statistics(&y, 0, 1, 3, 1).unwrap();
        let b = estimate_statistics(&s, 0, 1, 3, 1).unwrap();
        for (u, v) in a.along.iter().zip(&b.along) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn clipping_and_zero_noise() {
        let clean = Image::filled(8, 8, 0.98);
        let cfg = NoiseConfig {
            sigma_n: 0.0,
            ..NoiseConfig::horizontal(1, 0.0, 3)
        };
        assert_eq!(corrupt(&clean, &cfg).unwrap(), clean);

        let cfg = NoiseConfig::horizontal(3, 0.2, 3);
        let noisy = corrupt(&clean, &cfg).unwrap();
        let noise = structured_noise(8, 8, &cfg).unwrap();
        for (k, (&n, &raw)) in noisy.data().iter().zip(noise.values()).enumerate() {
            assert!((0.0..=1.0).contains(&n));
            // clipping never moves a pixel further from the clean value
            assert!((n - clean.data()[k]).abs() <= raw.abs() + 1e-15);
        }
        assert!(noisy.data().contains(&1.0));
    }

    #[test]
    fn noisy_images_are_deterministic() {
        let clean = Image::filled(20, 20, 0.5);
        let cfg = NoiseConfig {
            p: -1,
            q: 2,
            ell: 5,
            sigma_n: 0.1,
            sigma_0: 1.0,
            seed: 17,
        };
        assert_eq!(
            corrupt(&clean, &cfg).unwrap(),
            corrupt(&clean, &cfg).unwrap()
        );
    }

    #[test]
    fn ell5_statistics_match_closed_form() {
        let x = gen_iid_gaussian(1010, 1010, 1.0, 21);
        let y = directional_average(&x, 0, 1, 5).unwrap();
        let stats = estimate_statistics(&y, 0, 1, 5, 2).unwrap();
        assert!((stats.along[1] - 0.6).abs() < 0.02, "{:?}", stats.along);
        assert!(stats.along[4].abs() < 0.02);
        assert!((stats.variance - 0.2).abs() < 0.2 * 0.02);
    }

    #[test]
    fn iid_field_is_uncorrelated() {
        let x = gen_iid_gaussian(1000, 1000, 1.0, 4);
        let stats = estimate_statistics(&x, 0, 1, 3, 0).unwrap();
        assert!(stats
            .along
            .iter()
            .chain(&stats.orthogonal)
            .all(|r| r.abs() < 0.01));
    }

    #[test]
    fn lag_beyond_extent_is_rejected() {
        let x = gen_iid_gaussian(10, 10, 1.0, 4);
        assert!(estimate_statistics(&x, 0, 1, 10, 0).is_err());
        assert!(estimate_statistics(&x, 0, 1, 0, 0).is_err());
    }
}
