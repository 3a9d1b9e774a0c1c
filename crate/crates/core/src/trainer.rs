//! Training and inference of the nine per-position denoisers.
//!
//! Every epoch draws a fresh sampling round. From it come the training pairs
//! of each position and the de-structured image `Î`. Each network denoises
//! `Î` and resamples its own output with the same draws to get consistency
//! targets, then takes its optimizer steps. `Î` depends only on the noisy
//! image and each `f_p(Î)` only on network `p`, so the nine loops are
//! independent and run in parallel with identical results for any thread
//! count.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cnn::checkpoint::{self, CheckpointHeader};
use crate::cnn::{
    loss_and_grad, Adam, AdamConfig, DenoiserParams, LossInputs, LossValue, Real, Workspace,
};
use crate::error::{Error, Result};
use crate::image::{Image, SamplingPosition};
use crate::rng::StreamKey;
use crate::sampling::{Sampler, SamplingOptions};

const TRAIN_TAG: u64 = 0x74_7261_696E;
const INFER_TAG: u64 = 0x69_6E66_6572;
const NET_TAG: u64 = 0x6E_6574;

/// Arithmetic used for training and inference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::F32 => "f32",
            Self::F64 => "f64",
        })
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" | "32" => Ok(Self::F32),
            "f64" | "64" => Ok(Self::F64),
            other => Err(Error::invalid(format!(
                "unknown precision '{other}' (f32|f64)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Optimizer steps per epoch. Step 0 uses the pairs that built `Î`, later
    /// steps draw fresh pairs and reuse that epoch's `f(Î)`.
    pub steps_per_epoch: usize,
    pub k_inference: usize,
    pub lambda: f64,
    pub adam: AdamConfig,
    pub sampling: SamplingOptions,
    pub use_repeated_inference: bool,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            steps_per_epoch: 1,
            k_inference: 8,
            lambda: 1.0,
            adam: AdamConfig::default(),
            sampling: SamplingOptions::default(),
            use_repeated_inference: true,
            seed: 0,
            precision: Precision::F32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.steps_per_epoch == 0 {
            return Err(Error::invalid("steps_per_epoch must be >= 1"));
        }
        if self.k_inference == 0 {
            return Err(Error::invalid("k must be >= 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        self.adam.validate()
    }

    /// Inference repeats, forced to 1 when repeated inference is off.
    pub fn effective_k(&self) -> usize {
        if self.use_repeated_inference {
            self.k_inference
        } else {
            1
        }
    }

    /// Number of networks: one per position, or a single one for
    /// pixel-wise sampling.
    pub fn network_count(&self) -> usize {
        if self.sampling.block_wise {
            9
        } else {
            1
        }
    }

    /// Position served by network `index`.
    pub fn position_of(&self, index: usize) -> SamplingPosition {
        if self.sampling.block_wise {
            SamplingPosition::from_index(index)
        } else {
            SamplingPosition::C
        }
    }

    /// Seed of the initial parameters of network `index`.
    pub fn network_seed(&self, index: usize) -> u64 {
        StreamKey::root(self.seed)
            .child(NET_TAG)
            .child(index as u64)
            .value()
    }

    fn round_key(&self, epoch: usize, step: usize) -> StreamKey {
        StreamKey::root(self.seed)
            .child(TRAIN_TAG)
            .child(epoch as u64)
            .child(step as u64)
    }

    fn inference_key(&self, round: usize) -> StreamKey {
        StreamKey::root(self.seed)
            .child(INFER_TAG)
            .child(round as u64)
    }
}

/// The full method and its single-switch variants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    Full,
    /// Stride-1 windows over every pixel instead of 3x3 blocks.
    PixelWise,
    NoCenter,
    NoRa,
    NoRepeatInfer,
}

impl Ablation {
    pub const ALL: [Self; 5] = [
        Self::Full,
        Self::PixelWise,
        Self::NoCenter,
        Self::NoRa,
        Self::NoRepeatInfer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::PixelWise => "pixel-wise",
            Self::NoCenter => "no-center",
            Self::NoRa => "no-ra",
            Self::NoRepeatInfer => "no-repeat-infer",
        }
    }

    /// Flip this variant's switch in `cfg`.
    pub fn apply(self, cfg: &mut TrainConfig) {
        match self {
            Self::Full => {}
            Self::PixelWise => cfg.sampling.block_wise = false,
            Self::NoCenter => cfg.sampling.include_center = false,
            Self::NoRa => cfg.sampling.random_assignment = false,
            Self::NoRepeatInfer => cfg.use_repeated_inference = false,
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown variant '{s}' (full|pixel-wise|no-center|no-ra|no-repeat-infer)"
                ))
            })
    }
}

/// Loss of one epoch averaged over networks and steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub symmetric: f64,
    pub consistency: f64,
    pub total: f64,
}

/// One trained network with its per-epoch losses.
#[derive(Clone, Debug)]
pub struct TrainedNetwork<T> {
    pub position: SamplingPosition,
    pub params: DenoiserParams<T>,
    pub losses: Vec<LossValue>,
    pub steps: u64,
}

/// Train network `index` of `cfg` on `noisy`.
pub fn train_network<T: Real>(
    noisy: &Image,
    cfg: &TrainConfig,
    index: usize,
) -> Result<TrainedNetwork<T>> {
    cfg.validate()?;
    if index >= cfg.network_count() {
        return Err(Error::invalid(format!(
            "network index {index} out of range for {} networks",
            cfg.network_count()
        )));
    }
    let sampler = Sampler::new(noisy, cfg.sampling)?;
    let pos = cfg.position_of(index);
    let mut params = DenoiserParams::<T>::init(cfg.network_seed(index));
    let mut adam = Adam::new(cfg.adam);
    let mut grads = DenoiserParams::<T>::zeros();
    let mut ws_full = Workspace::new();
    let mut ws_pair = Workspace::new();
    let mut losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let target_sampler = if cfg.lambda > 0.0 {
            let hat = sampler.destructure(cfg.round_key(epoch, 0));
            let denoised = params.forward_with(&mut ws_full, &hat);
            Some(Sampler::new(&denoised, cfg.sampling)?)
        } else {
            None
        };
        let mut acc = LossValue::default();
        for step in 0..cfg.steps_per_epoch {
            let key = cfg.round_key(epoch, step).child(pos.index() as u64);
            let pair = sampler.sample(pos, key);
            let targets = target_sampler.as_ref().map(|s| s.sample(pos, key));
            let (y1, y2) = match &targets {
                Some(t) => (&t.x1, &t.x2),
                None => (&pair.x1, &pair.x2),
            };
            let inputs = LossInputs {
                x1: &pair.x1,
                x2: &pair.x2,
                y1,
                y2,
            };
            let loss = loss_and_grad(&params, &mut ws_pair, inputs, cfg.lambda, &mut grads)
                .and_then(|l| adam.step(&mut params, &grads).map(|_| l))
                .map_err(|e| {
                    Error::Training(format!("position {pos}, epoch {epoch}, step {step}: {e}"))
                })?;
            acc.symmetric += loss.symmetric;
            acc.consistency += loss.consistency;
            acc.total += loss.total;
        }
        let n = cfg.steps_per_epoch as f64;
        losses.push(LossValue {
            symmetric: acc.symmetric / n,
            consistency: acc.consistency / n,
            total: acc.total / n,
        });
    }
    Ok(TrainedNetwork {
        position: pos,
        params,
        losses,
        steps: adam.step_count(),
    })
}

/// Train all networks, in parallel on the current rayon pool.
pub fn train<T: Real>(noisy: &Image, cfg: &TrainConfig) -> Result<Vec<TrainedNetwork<T>>> {
    cfg.validate()?;
    Sampler::new(noisy, cfg.sampling)?;
    (0..cfg.network_count())
        .into_par_iter()
        .map(|i| train_network(noisy, cfg, i))
        .collect()
}

/// Per-epoch losses averaged across networks.
pub fn loss_trace<T>(nets: &[TrainedNetwork<T>]) -> Vec<EpochLoss> {
    let epochs = nets.first().map_or(0, |n| n.losses.len());
    let n = nets.len() as f64;
    (0..epochs)
        .map(|epoch| {
            let mut e = EpochLoss {
                epoch,
                symmetric: 0.0,
                consistency: 0.0,
                total: 0.0,
            };
            for net in nets {
                let l = net.losses[epoch];
                e.symmetric += l.symmetric / n;
                e.consistency += l.consistency / n;
                e.total += l.total / n;
            }
            e
        })
        .collect()
}

/// Denoise with trained networks: `k` resampling rounds, both halves of each
/// pair through the position's network, the `2k` outputs averaged per
/// position, reassembled, cropped and clipped to `[0, 1]`.
pub fn infer<T: Real>(
    noisy: &Image,
    nets: &[DenoiserParams<T>],
    cfg: &TrainConfig,
) -> Result<Image> {
    cfg.validate()?;
    if nets.len() != cfg.network_count() {
        return Err(Error::invalid(format!(
            "expected {} networks, got {}",
            cfg.network_count(),
            nets.len()
        )));
    }
    let sampler = Sampler::new(noisy, cfg.sampling)?;
    let k = cfg.effective_k();
    let (oh, ow) = sampler.output_dims();
    let parts: Vec<(SamplingPosition, Image)> = nets
        .par_iter()
        .enumerate()
        .map(|(i, net)| {
            let pos = cfg.position_of(i);
            let mut ws = Workspace::new();
            let mut acc = vec![0.0f64; oh * ow];
            for round in 0..k {
                let pair = sampler.sample(pos, cfg.inference_key(round).child(pos.index() as u64));
                for half in [&pair.x1, &pair.x2] {
                    let out = net.forward_with(&mut ws, half);
                    for (a, v) in acc.iter_mut().zip(out.data()) {
                        *a += v;
                    }
                }
            }
            let scale = 1.0 / (2 * k) as f64;
            (
                pos,
                Image::from_raw(oh, ow, acc.into_iter().map(|v| v * scale).collect()),
            )
        })
        .collect();
    let full = if cfg.sampling.block_wise {
        sampler.reassemble(&parts)
    } else {
        sampler.crop_full(&parts[0].1)
    };
    Ok(full.clip(0.0, 1.0))
}

/// Trained parameters in the precision they were trained in.
#[derive(Clone, Debug)]
pub enum Networks {
    F32(Vec<DenoiserParams<f32>>),
    F64(Vec<DenoiserParams<f64>>),
}

impl Networks {
    pub fn len(&self) -> usize {
        match self {
            Self::F32(v) => v.len(),
            Self::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Write one checkpoint per network as `net_<position>.ckpt`.
    pub fn save_checkpoints(&self, dir: &Path, cfg: &TrainConfig, steps: u64) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for i in 0..self.len() {
            let pos = cfg.position_of(i);
            let path = dir.join(format!("net_{}.ckpt", pos.name()));
            let seed = cfg.network_seed(i);
            match self {
                Self::F32(v) => checkpoint::save(
                    &path,
                    &v[i],
                    &CheckpointHeader::new::<f32>(seed, steps, Some(pos.name().into())),
                )?,
                Self::F64(v) => checkpoint::save(
                    &path,
                    &v[i],
                    &CheckpointHeader::new::<f64>(seed, steps, Some(pos.name().into())),
                )?,
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DenoiseResult {
    pub output: Image,
    pub networks: Networks,
    pub loss_trace: Vec<EpochLoss>,
    /// Optimizer steps taken by each network.
    pub steps: u64,
}

/// Train on `noisy` and denoise it.
pub fn denoise(noisy: &Image, cfg: &TrainConfig) -> Result<DenoiseResult> {
    match cfg.precision {
        Precision::F32 => {
            let (output, nets, trace, steps) = run::<f32>(noisy, cfg)?;
            Ok(DenoiseResult {
                output,
                networks: Networks::F32(nets),
                loss_trace: trace,
                steps,
            })
        }
        Precision::F64 => {
            let (output, nets, trace, steps) = run::<f64>(noisy, cfg)?;
            Ok(DenoiseResult {
                output,
                networks: Networks::F64(nets),
                loss_trace: trace,
                steps,
            })
        }
    }
}

type RunOutput<T> = (Image, Vec<DenoiserParams<T>>, Vec<EpochLoss>, u64);

fn run<T: Real>(noisy: &Image, cfg: &TrainConfig) -> Result<RunOutput<T>> {
    let trained = train::<T>(noisy, cfg)?;
    let trace = loss_trace(&trained);
    let steps = trained.first().map_or(0, |n| n.steps);
    let params: Vec<_> = trained.into_iter().map(|n| n.params).collect();
    let output = infer(noisy, &params, cfg)?;
    Ok((output, params, trace, steps))
}
