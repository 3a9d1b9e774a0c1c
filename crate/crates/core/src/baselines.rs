//! Sub-image samplers of earlier zero-shot methods and a reference
//! ZS-N2N style denoiser built on the same network.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cnn::{loss_and_grad, Adam, DenoiserParams, LossInputs, Real, Workspace};
use crate::error::{Error, Result};
use crate::image::{reflect_pad, Image};
use crate::trainer::{Precision, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    /// Checkerboard phases, each squeezed to the left: halves the width.
    CheckerboardSqueeze,
    /// Means of the two diagonals of every 2x2 cell: halves both dims.
    DiagonalMeans2x2,
}

impl BaselineKind {
    pub const ALL: [Self; 2] = [Self::CheckerboardSqueeze, Self::DiagonalMeans2x2];

    pub fn name(self) -> &'static str {
        match self {
            Self::CheckerboardSqueeze => "checkerboard",
            Self::DiagonalMeans2x2 => "diag2x2",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown baseline '{s}' (checkerboard|diag2x2)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselinePair {
    pub x1: Image,
    pub x2: Image,
}

/// Split `noisy` into two sub-images. Both samplers need even dimensions
/// (see [`pad_to_even`]).
pub fn baseline_sample(noisy: &Image, kind: BaselineKind) -> Result<BaselinePair> {
    let (h, w) = noisy.dims();
    let odd_rows = kind == BaselineKind::DiagonalMeans2x2 && h % 2 == 1;
    if h == 0 || w % 2 == 1 || odd_rows {
        return Err(Error::invalid(format!(
            "{kind} sampling needs even dimensions, got {h}x{w}"
        )));
    }
    match kind {
        BaselineKind::CheckerboardSqueeze => {
            let half = w / 2;
            let mut a = Vec::with_capacity(h * half);
            let mut b = Vec::with_capacity(h * half);
            for r in 0..h {
                for c in 0..w {
                    if (r + c) % 2 == 0 {
                        a.push(noisy.get(r, c));
                    } else {
                        b.push(noisy.get(r, c));
                    }
                }
            }
            Ok(BaselinePair {
                x1: Image::from_raw(h, half, a),
                x2: Image::from_raw(h, half, b),
            })
        }
        BaselineKind::DiagonalMeans2x2 => {
            let (oh, ow) = (h / 2, w / 2);
            let x1 = Image::from_fn(oh, ow, |r, c| {
                0.5 * (noisy.get(2 * r, 2 * c) + noisy.get(2 * r + 1, 2 * c + 1))
            });
            let x2 = Image::from_fn(oh, ow, |r, c| {
                0.5 * (noisy.get(2 * r, 2 * c + 1) + noisy.get(2 * r + 1, 2 * c))
            });
            Ok(BaselinePair { x1, x2 })
        }
    }
}

/// Reflect-pad the bottom row and/or right column so both dims are even.
pub fn pad_to_even(img: &Image) -> Result<Image> {
    let (h, w) = img.dims();
    if h % 2 == 0 && w % 2 == 0 {
        return Ok(img.clone());
    }
    Ok(reflect_pad(img, h + h % 2, w + w % 2, 0)?.buffer().clone())
}

/// Zero-shot Noise2Noise with fixed 2x2 diagonal-mean pairs: one network,
/// the symmetric loss on `(D1(I), D2(I))` plus `lambda` times the
/// consistency loss against `(D1(f(I)), D2(f(I)))`. Epochs, steps, optimizer
/// and precision come from `cfg`, the network is initialized from its seed.
pub fn zsn2n_denoise(noisy: &Image, cfg: &TrainConfig) -> Result<Image> {
    match cfg.precision {
        Precision::F32 => zsn2n::<f32>(noisy, cfg),
        Precision::F64 => zsn2n::<f64>(noisy, cfg),
    }
}

fn zsn2n<T: Real>(noisy: &Image, cfg: &TrainConfig) -> Result<Image> {
    cfg.validate()?;
    if noisy.height() < 2 || noisy.width() < 2 {
        return Err(Error::invalid("ZS-N2N needs an image of at least 2x2"));
    }
    let even = pad_to_even(noisy)?;
    let pair = baseline_sample(&even, BaselineKind::DiagonalMeans2x2)?;
    let mut params = DenoiserParams::<T>::init(cfg.network_seed(0));
    let mut adam = Adam::new(cfg.adam);
    let mut grads = DenoiserParams::<T>::zeros();
    let mut ws_full = Workspace::new();
    let mut ws_pair = Workspace::new();
    for epoch in 0..cfg.epochs {
        let targets = if cfg.lambda > 0.0 {
            let denoised = params.forward_with(&mut ws_full, &even);
            Some(baseline_sample(&denoised, BaselineKind::DiagonalMeans2x2)?)
        } else {
            None
        };
        let (y1, y2) = match &targets {
            Some(t) => (&t.x1, &t.x2),
            None => (&pair.x1, &pair.x2),
        };
        for step in 0..cfg.steps_per_epoch {
            let inputs = LossInputs {
                x1: &pair.x1,
                x2: &pair.x2,
                y1,
                y2,
            };
            loss_and_grad(&params, &mut ws_pair, inputs, cfg.lambda, &mut grads)
                .and_then(|_| adam.step(&mut params, &grads))
                .map_err(|e| Error::Training(format!("zsn2n epoch {epoch}, step {step}: {e}")))?;
        }
    }
    Ok(params.forward_with(&mut ws_full, noisy).clip(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_examples() {
        let img = Image::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let d = baseline_sample(&img, BaselineKind::DiagonalMeans2x2).unwrap();
        assert_eq!(d.x1.data(), &[2.5]);
        assert_eq!(d.x2.data(), &[2.5]);
        let cb = baseline_sample(&img, BaselineKind::CheckerboardSqueeze).unwrap();
        assert_eq!(cb.x1.data(), &[1.0, 4.0]);
        assert_eq!(cb.x2.data(), &[2.0, 3.0]);
        assert_eq!(cb.x1.dims(), (2, 1));
    }

    #[test]
    fn odd_dims_are_rejected_then_padded() {
        let img = Image::from_fn(5, 7, |r, c| (r * 7 + c) as f64);
        assert!(baseline_sample(&img, BaselineKind::DiagonalMeans2x2).is_err());
        assert!(baseline_sample(&img, BaselineKind::CheckerboardSqueeze).is_err());
        let even = pad_to_even(&img).unwrap();
        assert_eq!(even.dims(), (6, 8));
        // reflection without duplication: the added column mirrors column 5
        assert_eq!(even.get(0, 7), img.get(0, 5));
        assert_eq!(even.get(5, 0), img.get(3, 0));
        assert_eq!(
            baseline_sample(&even, BaselineKind::DiagonalMeans2x2)
                .unwrap()
                .x1
                .dims(),
            (3, 4)
        );
    }

    #[test]
    fn checkerboard_allows_odd_height() {
        let img = Image::from_fn(3, 4, |r, c| (r * 4 + c) as f64);
        let cb = baseline_sample(&img, BaselineKind::CheckerboardSqueeze).unwrap();
        assert_eq!(cb.x1.data(), &[0.0, 2.0, 5.0, 7.0, 8.0, 10.0]);
    }

    #[test]
    fn names_round_trip() {
        for k in BaselineKind::ALL {
            assert_eq!(k.name().parse::<BaselineKind>().unwrap(), k);
        }
    }
}
