//! Construction of pseudo-independent sub-image pairs from one noisy image.
//!
//! For every target pixel a candidate set is built from the pixel itself and
//! directional estimates from its 3x3 window. The three order statistics
//! around the median are kept, two of them are drawn at random and their
//! order is flipped with probability 1/2. In block-wise mode the target
//! pixels of one sampling position are the same relative location in every
//! non-overlapping 3x3 patch, giving a `(H~/3) x (W~/3)` sub-image per
//! position.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, PaddedImage, SamplingPosition};
use crate::rng::{Stream, StreamKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InterpolationScheme {
    /// Target pixel plus its four axis neighbours.
    ZeroOrder4N,
    /// Target pixel plus all eight neighbours.
    ZeroOrder8N,
    /// Target pixel plus the means of the four symmetric neighbour pairs.
    FirstOrder,
}

impl InterpolationScheme {
    pub const ALL: [Self; 3] = [Self::ZeroOrder4N, Self::ZeroOrder8N, Self::FirstOrder];

    /// Candidate count including the target pixel.
    pub fn candidate_count(self) -> usize {
        match self {
            Self::ZeroOrder4N | Self::FirstOrder => 5,
            Self::ZeroOrder8N => 9,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::ZeroOrder4N => "0-4n",
            Self::ZeroOrder8N => "0-8n",
            Self::FirstOrder => "1st",
        }
    }
}

impl fmt::Display for InterpolationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InterpolationScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "0-4n" | "zero-order-4n" => Ok(Self::ZeroOrder4N),
            "0-8n" | "zero-order-8n" => Ok(Self::ZeroOrder8N),
            "1st" | "first-order" => Ok(Self::FirstOrder),
            _ => Err(Error::invalid(format!(
                "unknown interpolation scheme '{s}' (expected 0-4n, 0-8n or 1st)"
            ))),
        }
    }
}

const AXIS: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
const DIAGONAL: [(isize, isize); 4] = [(-1, -1), (-1, 1), (1, -1), (1, 1)];
/// Half-offsets of the 0, 45, 90 and 135 degree directions.
const DIRECTIONS: [(isize, isize); 4] = [(0, 1), (-1, 1), (1, 0), (-1, -1)];

/// Up to nine candidate estimates for one target pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateSet {
    values: [f64; 9],
    len: usize,
}

impl CandidateSet {
    fn new() -> Self {
        Self {
            values: [0.0; 9],
            len: 0,
        }
    }

    #[inline]
    fn push(&mut self, v: f64) {
        self.values[self.len] = v;
        self.len += 1;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values[..self.len]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Candidate estimates at `(i, j)` of the padded target region. The target
/// pixel comes first when `include_center` is set.
pub fn interpolate_candidates(
    padded: &PaddedImage,
    i: isize,
    j: isize,
    scheme: InterpolationScheme,
    include_center: bool,
) -> Result<CandidateSet> {
    if !padded.contains(i - 1, j - 1) || !padded.contains(i + 1, j + 1) {
        return Err(Error::invalid(format!(
            "3x3 window around ({i},{j}) leaves the padded image"
        )));
    }
    Ok(candidates_unchecked(padded, i, j, scheme, include_center))
}

#[inline]
fn candidates_unchecked(
    padded: &PaddedImage,
    i: isize,
    j: isize,
    scheme: InterpolationScheme,
    include_center: bool,
) -> CandidateSet {
    let mut set = CandidateSet::new();
    if include_center {
        set.push(padded.at(i, j));
    }
    match scheme {
        InterpolationScheme::ZeroOrder4N => {
            for (di, dj) in AXIS {
                set.push(padded.at(i + di, j + dj));
            }
        }
        InterpolationScheme::ZeroOrder8N => {
            for (di, dj) in AXIS.into_iter().chain(DIAGONAL) {
                set.push(padded.at(i + di, j + dj));
            }
        }
        InterpolationScheme::FirstOrder => {
            for (di, dj) in DIRECTIONS {
                set.push(0.5 * (padded.at(i + di, j + dj) + padded.at(i - di, j - dj)));
            }
        }
    }
    set
}

/// Keep the three order statistics centered on the median: with `c = ceil(n/2)`
/// the 1-based ranks `c - 1, c, c + 1` of the ascending sort.
pub fn median_filter3(values: &[f64]) -> Result<[f64; 3]> {
    let n = values.len();
    if !(3..=9).contains(&n) {
        return Err(Error::invalid(format!(
            "median filtration needs 3 to 9 candidates, got {n}"
        )));
    }
    let mut sorted = [0.0f64; 9];
    sorted[..n].copy_from_slice(values);
    Ok(median3_sorted(&mut sorted[..n]))
}

#[inline]
fn median3_sorted(buf: &mut [f64]) -> [f64; 3] {
    buf.sort_unstable_by(f64::total_cmp);
    let c = buf.len().div_ceil(2);
    [buf[c - 2], buf[c - 1], buf[c]]
}

/// Pair of the three filtered values selected by a uniform draw `u`.
#[inline]
fn pair_from_uniform(s_f: &[f64; 3], u: f64) -> (f64, f64) {
    match (u * 3.0) as usize {
        0 => (s_f[0], s_f[1]),
        1 => (s_f[0], s_f[2]),
        _ => (s_f[1], s_f[2]),
    }
}

/// Draw two distinct elements of the ascending filtered subset uniformly;
/// the result is ordered `m1 <= m2`.
pub fn random_pair(s_f: &[f64; 3], rng: &mut Stream) -> (f64, f64) {
    pair_from_uniform(s_f, rng.uniform())
}

/// Randomized assignment: keep `(m1, m2)` with probability 1/2, otherwise swap.
pub fn assign(m1: f64, m2: f64, rng: &mut Stream) -> (f64, f64) {
    if rng.uniform() < 0.5 {
        (m1, m2)
    } else {
        (m2, m1)
    }
}

/// Switches of the sampling procedure, defaults reproduce the full method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingOptions {
    pub scheme: InterpolationScheme,
    /// Non-overlapping 3x3 patches; `false` slides the window with stride 1.
    pub block_wise: bool,
    pub include_center: bool,
    pub random_assignment: bool,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self {
            scheme: InterpolationScheme::FirstOrder,
            block_wise: true,
            include_center: true,
            random_assignment: true,
        }
    }
}

impl SamplingOptions {
    pub fn with_scheme(scheme: InterpolationScheme) -> Self {
        Self {
            scheme,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubImagePair {
    pub x1: Image,
    pub x2: Image,
    pub position: SamplingPosition,
}

impl SubImagePair {
    pub fn average(&self) -> Image {
        self.x1
            .zip_map(&self.x2, |a, b| 0.5 * (a + b))
            .expect("pair halves share a shape")
    }
}

/// Draws consumed per target pixel: one for the pair choice, one for the order.
const DRAWS_PER_TARGET: u64 = 2;

/// Sampler bound to one noisy image.
#[derive(Clone, Debug)]
pub struct Sampler {
    padded: PaddedImage,
    opts: SamplingOptions,
}

impl Sampler {
    pub fn new(noisy: &Image, opts: SamplingOptions) -> Result<Self> {
        if noisy.height() < 3 || noisy.width() < 3 {
            return Err(Error::invalid(format!(
                "image must be at least 3x3, got {}x{}",
                noisy.height(),
                noisy.width()
            )));
        }
        Ok(Self {
            padded: PaddedImage::for_sampling(noisy),
            opts,
        })
    }

    pub fn options(&self) -> &SamplingOptions {
        &self.opts
    }

    pub fn padded(&self) -> &PaddedImage {
        &self.padded
    }

    /// Shape of each half of a pair.
    pub fn output_dims(&self) -> (usize, usize) {
        let (h, w) = (self.padded.padded_height(), self.padded.padded_width());
        if self.opts.block_wise {
            (h / 3, w / 3)
        } else {
            (h, w)
        }
    }

    /// Padded coordinates of output pixel `(r, c)` at `pos`.
    #[inline]
    pub fn target_of(&self, pos: SamplingPosition, r: usize, c: usize) -> (usize, usize) {
        if self.opts.block_wise {
            (3 * r + pos.row_offset(), 3 * c + pos.col_offset())
        } else {
            (r, c)
        }
    }

    /// Sample one pair at `pos`. Target `k` (row-major in the output) reads
    /// draws `2k` and `2k + 1` of `key`, whatever the ablation flags.
    pub fn sample(&self, pos: SamplingPosition, key: StreamKey) -> SubImagePair {
        self.sample_with(pos, |k| {
            (
                key.uniform_at(DRAWS_PER_TARGET * k),
                key.uniform_at(DRAWS_PER_TARGET * k + 1),
            )
        })
    }

    /// Sample with explicit `(pair, order)` uniforms per target index.
    pub fn sample_with(
        &self,
        pos: SamplingPosition,
        mut draws: impl FnMut(u64) -> (f64, f64),
    ) -> SubImagePair {
        let (oh, ow) = self.output_dims();
        let mut x1 = Vec::with_capacity(oh * ow);
        let mut x2 = Vec::with_capacity(oh * ow);
        let mut k = 0u64;
        for r in 0..oh {
            for c in 0..ow {
                let (i, j) = self.target_of(pos, r, c);
                let mut cands = candidates_unchecked(
                    &self.padded,
                    i as isize,
                    j as isize,
                    self.opts.scheme,
                    self.opts.include_center,
                );
                let n = cands.len;
                let s_f = median3_sorted(&mut cands.values[..n]);
                let (u_pair, u_order) = draws(k);
                let (m1, m2) = pair_from_uniform(&s_f, u_pair);
                let (a, b) = if !self.opts.random_assignment || u_order < 0.5 {
                    (m1, m2)
                } else {
                    (m2, m1)
                };
                x1.push(a);
                x2.push(b);
                k += 1;
            }
        }
        SubImagePair {
            x1: Image::from_raw(oh, ow, x1),
            x2: Image::from_raw(oh, ow, x2),
            position: pos,
        }
    }

    /// Pairs for every position; position `p` uses `round.child(p.index())`.
    pub fn sample_all(&self, round: StreamKey) -> Vec<SubImagePair> {
        SamplingPosition::ALL
            .iter()
            .map(|&pos| self.sample(pos, round.child(pos.index() as u64)))
            .collect()
    }

    /// Average each pair and put the results back at their sampling positions.
    pub fn destructure(&self, round: StreamKey) -> Image {
        if self.opts.block_wise {
            let parts: Vec<_> = self
                .sample_all(round)
                .into_iter()
                .map(|pair| (pair.position, pair.average()))
                .collect();
            self.reassemble(&parts)
        } else {
            let pair = self.sample(
                SamplingPosition::C,
                round.child(SamplingPosition::C.index() as u64),
            );
            self.crop_full(&pair.average())
        }
    }

    /// Write per-position sub-images back to their padded coordinates and crop
    /// to the original size. Block-wise mode only.
    pub fn reassemble(&self, parts: &[(SamplingPosition, Image)]) -> Image {
        assert!(self.opts.block_wise, "reassembly needs block-wise sampling");
        let (ph, pw) = (self.padded.padded_height(), self.padded.padded_width());
        let mut full = vec![0.0; ph * pw];
        for (pos, sub) in parts {
            assert_eq!(sub.dims(), self.output_dims(), "sub-image shape mismatch");
            for r in 0..sub.height() {
                for c in 0..sub.width() {
                    let (i, j) = self.target_of(*pos, r, c);
                    full[i * pw + j] = sub.get(r, c);
                }
            }
        }
        let (h, w) = self.padded.original_dims();
        Image::from_raw(ph, pw, full)
            .crop(0, 0, h, w)
            .expect("original fits in padded")
    }

    /// Crop a full padded-size image to the original support.
    pub fn crop_full(&self, img: &Image) -> Image {
        let (h, w) = self.padded.original_dims();
        img.crop(0, 0, h, w).expect("original fits in padded")
    }
}

pub fn sample_position(
    noisy: &Image,
    pos: SamplingPosition,
    opts: SamplingOptions,
    key: StreamKey,
) -> Result<SubImagePair> {
    Ok(Sampler::new(noisy, opts)?.sample(pos, key))
}

pub fn sample_all(noisy: &Image, opts: SamplingOptions, seed: u64) -> Result<Vec<SubImagePair>> {
    Ok(Sampler::new(noisy, opts)?.sample_all(StreamKey::root(seed)))
}

pub fn destructure(noisy: &Image, opts: SamplingOptions, seed: u64) -> Result<Image> {
    Ok(Sampler::new(noisy, opts)?.destructure(StreamKey::root(seed)))
}
