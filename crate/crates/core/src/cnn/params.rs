use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::real::Real;
use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// Feature channels of both hidden layers.
pub const CHANNELS: usize = 72;

const SLOPE_INIT: f64 = 0.25;
const INIT_TAG: u64 = 0x696E_6974;

/// Parameter groups in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    Conv1Weight,
    Conv1Bias,
    Prelu1Slope,
    Conv2Weight,
    Conv2Bias,
    Prelu2Slope,
    Conv3Weight,
    Conv3Bias,
}

impl ParamGroup {
    pub const ALL: [Self; 8] = [
        Self::Conv1Weight,
        Self::Conv1Bias,
        Self::Prelu1Slope,
        Self::Conv2Weight,
        Self::Conv2Bias,
        Self::Prelu2Slope,
        Self::Conv3Weight,
        Self::Conv3Bias,
    ];

    /// Tensor shape, kernels as `[out, in, kh, kw]`.
    pub fn shape(self) -> Vec<usize> {
        match self {
            Self::Conv1Weight => vec![CHANNELS, 1, 3, 3],
            Self::Conv2Weight => vec![CHANNELS, CHANNELS, 3, 3],
            Self::Conv3Weight => vec![1, CHANNELS, 1, 1],
            Self::Conv3Bias => vec![1],
            Self::Conv1Bias | Self::Prelu1Slope | Self::Conv2Bias | Self::Prelu2Slope => {
                vec![CHANNELS]
            }
        }
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(self) -> usize {
        self.shape().iter().product()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Conv1Weight => "conv1.weight",
            Self::Conv1Bias => "conv1.bias",
            Self::Prelu1Slope => "prelu1.slope",
            Self::Conv2Weight => "conv2.weight",
            Self::Conv2Bias => "conv2.bias",
            Self::Prelu2Slope => "prelu2.slope",
            Self::Conv3Weight => "conv3.weight",
            Self::Conv3Bias => "conv3.bias",
        }
    }

    /// Fan-in of the kernel groups.
    fn fan_in(self) -> Option<usize> {
        match self {
            Self::Conv1Weight => Some(9),
            Self::Conv2Weight => Some(9 * CHANNELS),
            Self::Conv3Weight => Some(CHANNELS),
            _ => None,
        }
    }

    pub fn range(self) -> Range<usize> {
        let start: usize = Self::ALL
            .iter()
            .take_while(|g| **g != self)
            .map(|g| g.len())
            .sum();
        start..start + self.len()
    }
}

/// Total number of scalars in one network.
pub fn param_count() -> usize {
    ParamGroup::ALL.iter().map(|g| g.len()).sum()
}

/// All trainable values of the three-layer denoiser, stored flat in
/// [`ParamGroup`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserParams<T> {
    values: Vec<T>,
}

impl<T: Real> DenoiserParams<T> {
    /// Kernels uniform in `+-sqrt(6 / fan_in)`, zero biases, slopes 0.25.
    pub fn init(seed: u64) -> Self {
        let key = StreamKey::root(seed).child(INIT_TAG);
        let mut values = Vec::with_capacity(param_count());
        let mut draw = 0u64;
        for g in ParamGroup::ALL {
            match g.fan_in() {
                Some(fan_in) => {
                    let bound = (6.0 / fan_in as f64).sqrt();
                    for _ in 0..g.len() {
                        let u = key.uniform_at(draw);
                        draw += 1;
                        values.push(T::from_f64(bound * (2.0 * u - 1.0)));
                    }
                }
                None if matches!(g, ParamGroup::Prelu1Slope | ParamGroup::Prelu2Slope) => {
                    values.extend(std::iter::repeat_n(T::from_f64(SLOPE_INIT), g.len()))
                }
                None => values.extend(std::iter::repeat_n(T::zero(), g.len())),
            }
        }
        Self { values }
    }

    pub fn zeros() -> Self {
        Self {
            values: vec![T::zero(); param_count()],
        }
    }

    pub fn from_values(values: Vec<T>) -> Result<Self> {
        if values.len() != param_count() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                param_count(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite parameter value"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn group(&self, g: ParamGroup) -> &[T] {
        &self.values[g.range()]
    }

    pub fn group_mut(&mut self, g: ParamGroup) -> &mut [T] {
        &mut self.values[g.range()]
    }

    pub fn cast<U: Real>(&self) -> DenoiserParams<U> {
        DenoiserParams {
            values: self
                .values
                .iter()
                .map(|v| U::from_f64(v.as_f64()))
                .collect(),
        }
    }

    /// Network whose output equals its input: one channel carries the signal
    /// through both hidden layers with unit slopes.
    pub fn identity() -> Self {
        let mut p = Self::zeros();
        p.group_mut(ParamGroup::Conv1Weight)[4] = T::one();
        // conv2[out 0][in 0][1][1]
        p.group_mut(ParamGroup::Conv2Weight)[4] = T::one();
        p.group_mut(ParamGroup::Conv3Weight)[0] = T::one();
        p.group_mut(ParamGroup::Prelu1Slope).fill(T::one());
        p.group_mut(ParamGroup::Prelu2Slope).fill(T::one());
        p
    }
}
