//! Grayscale image carrier, reflective padding and 3x3 patch geometry.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major grayscale image with `f64` intensities.
///
/// Values are normalized so that 0 is black and 1 is white, although
/// intermediate results (noise fields, network outputs) may leave that range.
#[derive(Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Image {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Image")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish_non_exhaustive()
    }
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "buffer of {} values does not match {height}x{width}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at index {pos}")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be positive");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-wise combination of two images of equal size.
    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        self.ensure_same_dims(other)?;
        Ok(Image {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn clip(&self, lo: f64, hi: f64) -> Image {
        self.map(|v| v.clamp(lo, hi))
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Image> {
        if height == 0 || width == 0 || top + height > self.height || left + width > self.width {
            return Err(Error::invalid(format!(
                "crop {height}x{width}@({top},{left}) outside {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width);
        for r in top..top + height {
            let start = r * self.width + left;
            data.extend_from_slice(&self.data[start..start + width]);
        }
        Ok(Image {
            height,
            width,
            data,
        })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn flip_horizontal(&self) -> Image {
        Image::from_fn(self.height, self.width, |r, c| {
            self.get(r, self.width - 1 - c)
        })
    }

    pub fn flip_vertical(&self) -> Image {
        Image::from_fn(self.height, self.width, |r, c| {
            self.get(self.height - 1 - r, c)
        })
    }

    /// Rotation by 90 degrees clockwise.
    pub fn rotate90(&self) -> Image {
        Image::from_fn(self.width, self.height, |r, c| {
            self.get(self.height - 1 - c, r)
        })
    }

    pub(crate) fn ensure_same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::invalid(format!(
                "dimension mismatch: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }

    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<f64>) -> Image {
        debug_assert_eq!(data.len(), height * width);
        Image {
            height,
            width,
            data,
        }
    }
}

/// Mirror index `i` into `0..n` without repeating the edge sample
/// (`... c b | a b c ...`).
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut k = i.rem_euclid(period);
    if k >= n as isize {
        k = period - k;
    }
    k as usize
}

/// Round a dimension up to the next multiple of three.
#[inline]
pub fn padded_dim(n: usize) -> usize {
    n.div_ceil(3) * 3
}

/// An image extended to a target size by reflection (bottom/right) plus a
/// border on every side.
///
/// Coordinates passed to [`PaddedImage::at`] are relative to the top-left of
/// the target region, so the border occupies negative indices.
#[derive(Clone, Debug)]
pub struct PaddedImage {
    buffer: Image,
    orig_height: usize,
    orig_width: usize,
    padded_height: usize,
    padded_width: usize,
    border: usize,
}

impl PaddedImage {
    /// Pad to multiples of three, then add a one pixel border for the
    /// interpolation windows. The border repeats the edge pixel
    /// (`a a b c ...`): mirroring without repetition would make both
    /// diagonal estimates of a corner pixel equal to the same interior value.
    pub fn for_sampling(img: &Image) -> Self {
        let core = reflect_pad(img, padded_dim(img.height()), padded_dim(img.width()), 0)
            .expect("padded dims never underflow");
        let (ph, pw) = (core.padded_height, core.padded_width);
        let src = core.buffer;
        let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
        let buffer = Image::from_fn(ph + 2, pw + 2, |r, c| {
            src.get(clamp(r as isize - 1, ph), clamp(c as isize - 1, pw))
        });
        PaddedImage {
            buffer,
            border: 1,
            ..core
        }
    }

    #[inline]
    pub fn padded_height(&self) -> usize {
        self.padded_height
    }

    #[inline]
    pub fn padded_width(&self) -> usize {
        self.padded_width
    }

    #[inline]
    pub fn border(&self) -> usize {
        self.border
    }

    #[inline]
    pub fn original_dims(&self) -> (usize, usize) {
        (self.orig_height, self.orig_width)
    }

    /// Whole buffer including the border.
    pub fn buffer(&self) -> &Image {
        &self.buffer
    }

    /// Value at `(i, j)` of the target region; `-border..padded + border` is valid.
    #[inline]
    pub fn at(&self, i: isize, j: isize) -> f64 {
        let b = self.border as isize;
        self.buffer.get((i + b) as usize, (j + b) as usize)
    }

    #[inline]
    pub fn contains(&self, i: isize, j: isize) -> bool {
        let b = self.border as isize;
        i >= -b
            && j >= -b
            && i < self.padded_height as isize + b
            && j < self.padded_width as isize + b
    }

    /// The target region without border.
    pub fn target_region(&self) -> Image {
        self.buffer
            .crop(
                self.border,
                self.border,
                self.padded_height,
                self.padded_width,
            )
            .expect("target region lies inside the buffer")
    }

    /// Recover the original image bit-exactly.
    pub fn crop_original(&self) -> Image {
        self.buffer
            .crop(self.border, self.border, self.orig_height, self.orig_width)
            .expect("original region lies inside the buffer")
    }
}

/// Reflect-pad `img` to `target_h x target_w` by appending rows/columns at the
/// bottom/right, then surround the result with `extra_border` reflected pixels.
pub fn reflect_pad(
    img: &Image,
    target_h: usize,
    target_w: usize,
    extra_border: usize,
) -> Result<PaddedImage> {
    if target_h < img.height() || target_w < img.width() {
        return Err(Error::invalid(format!(
            "target {target_h}x{target_w} smaller than source {}x{}",
            img.height(),
            img.width()
        )));
    }
    let b = extra_border as isize;
    let out_h = target_h + 2 * extra_border;
    let out_w = target_w + 2 * extra_border;
    let col_map: Vec<usize> = (0..out_w as isize)
        .map(|c| reflect_index(reflect_index(c - b, target_w) as isize, img.width()))
        .collect();
    let mut data = Vec::with_capacity(out_h * out_w);
    for r in 0..out_h as isize {
        let src_r = reflect_index(reflect_index(r - b, target_h) as isize, img.height());
        data.extend(col_map.iter().map(|&c| img.get(src_r, c)));
    }
    Ok(PaddedImage {
        buffer: Image::from_raw(out_h, out_w, data),
        orig_height: img.height(),
        orig_width: img.width(),
        padded_height: target_h,
        padded_width: target_w,
        border: extra_border,
    })
}

/// One of the nine relative locations inside a 3x3 patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SamplingPosition {
    row_offset: u8,
    col_offset: u8,
}

impl SamplingPosition {
    pub const TL: Self = Self::at(0, 0);
    pub const T: Self = Self::at(0, 1);
    pub const TR: Self = Self::at(0, 2);
    pub const L: Self = Self::at(1, 0);
    pub const C: Self = Self::at(1, 1);
    pub const R: Self = Self::at(1, 2);
    pub const BL: Self = Self::at(2, 0);
    pub const B: Self = Self::at(2, 1);
    pub const BR: Self = Self::at(2, 2);

    pub const ALL: [Self; 9] = [
        Self::TL,
        Self::T,
        Self::TR,
        Self::L,
        Self::C,
        Self::R,
        Self::BL,
        Self::B,
        Self::BR,
    ];

    const NAMES: [&'static str; 9] = ["tl", "t", "tr", "l", "c", "r", "bl", "b", "br"];

    const fn at(row_offset: u8, col_offset: u8) -> Self {
        Self {
            row_offset,
            col_offset,
        }
    }

    pub fn new(row_offset: usize, col_offset: usize) -> Result<Self> {
        if row_offset > 2 || col_offset > 2 {
            return Err(Error::invalid(format!(
                "sampling offsets must be in 0..3, got ({row_offset},{col_offset})"
            )));
        }
        Ok(Self::at(row_offset as u8, col_offset as u8))
    }

    pub fn from_index(index: usize) -> Self {
        Self::ALL[index]
    }

    #[inline]
    pub fn row_offset(self) -> usize {
        self.row_offset as usize
    }

    #[inline]
    pub fn col_offset(self) -> usize {
        self.col_offset as usize
    }

    /// Row-major index in `0..9`.
    #[inline]
    pub fn index(self) -> usize {
        self.row_offset() * 3 + self.col_offset()
    }

    pub fn name(self) -> &'static str {
        Self::NAMES[self.index()]
    }
}

impl fmt::Display for SamplingPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplingPosition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Self::NAMES
            .iter()
            .position(|n| *n == lower)
            .map(Self::from_index)
            .ok_or_else(|| Error::invalid(format!("unknown sampling position '{s}'")))
    }
}

/// Partition of a padded image into non-overlapping 3x3 patches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub rows: usize,
    pub cols: usize,
}

impl PatchGrid {
    pub fn count(&self) -> usize {
        self.rows * self.cols
    }

    /// Top-left pixel of every patch, row-major.
    pub fn origins(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cols = self.cols;
        (0..self.count()).map(move |k| (3 * (k / cols), 3 * (k % cols)))
    }
}

pub fn patch_grid(p: &PaddedImage) -> Result<PatchGrid> {
    patch_grid_for(p.padded_height(), p.padded_width())
}

pub fn patch_grid_for(height: usize, width: usize) -> Result<PatchGrid> {
    if height == 0 || width == 0 || !height.is_multiple_of(3) || !width.is_multiple_of(3) {
        return Err(Error::invalid(format!(
            "padded dims {height}x{width} are not positive multiples of 3"
        )));
    }
    Ok(PatchGrid {
        rows: height / 3,
        cols: width / 3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, |r, c| (r * w + c) as f64)
    }

    #[test]
    fn padded_dims_follow_ceiling_rule() {
        let p = PaddedImage::for_sampling(&ramp(4, 4));
        assert_eq!((p.padded_height(), p.padded_width()), (6, 6));
        assert_eq!(padded_dim(3), 3);
        assert_eq!(padded_dim(128), 129);
    }

    #[test]
    fn pad_to_same_size_is_identity() {
        let img = ramp(3, 3);
        let p = reflect_pad(&img, 3, 3, 0).unwrap();
        assert_eq!(p.buffer(), &img);
    }

    #[test]
    fn border_reflects_without_duplicating_edge() {
        let row = Image::new(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let p = reflect_pad(&row, 1, 3, 1).unwrap();
        let mid: Vec<f64> = (-1..4).map(|j| p.at(0, j)).collect();
        assert_eq!(mid, vec![2.0, 1.0, 2.0, 3.0, 2.0]);
    }

    #[test]
    fn target_padding_goes_bottom_right() {
        let img = ramp(4, 4);
        let p = reflect_pad(&img, 6, 6, 0).unwrap();
        assert_eq!(p.at(0, 0), 0.0);
        // column 4 mirrors column 2, column 5 mirrors column 1
        assert_eq!(p.at(0, 4), img.get(0, 2));
        assert_eq!(p.at(0, 5), img.get(0, 1));
        assert_eq!(p.at(5, 0), img.get(1, 0));
    }

    #[test]
    fn target_smaller_than_source_is_rejected() {
        assert!(reflect_pad(&ramp(4, 4), 3, 6, 0).is_err());
    }

    #[test]
    fn patch_grid_examples() {
        let g = patch_grid_for(6, 6).unwrap();
        assert_eq!(g.count(), 4);
        let origins: Vec<_> = g.origins().collect();
        assert_eq!(origins, vec![(0, 0), (0, 3), (3, 0), (3, 3)]);
        assert_eq!(
            patch_grid_for(3, 3).unwrap().origins().collect::<Vec<_>>(),
            vec![(0, 0)]
        );
        assert_eq!(patch_grid_for(9, 12).unwrap().count(), 12);
        assert!(patch_grid_for(7, 9).is_err());
    }

    #[test]
    fn sampling_positions_are_distinct_and_named() {
        let mut seen = std::collections::HashSet::new();
        for (k, pos) in SamplingPosition::ALL.iter().enumerate() {
            assert_eq!(pos.index(), k);
            assert!(seen.insert((pos.row_offset(), pos.col_offset())));
            assert_eq!(pos.name().parse::<SamplingPosition>().unwrap(), *pos);
        }
        assert!("xx".parse::<SamplingPosition>().is_err());
    }

    #[test]
    fn non_finite_values_are_rejected() {
        assert!(Image::new(1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn padding_is_bounded_and_cropping_recovers(h in 1usize..20, w in 1usize..20, border in 0usize..3) {
            let img = ramp(h, w);
            let p = reflect_pad(&img, padded_dim(h), padded_dim(w), border).unwrap();
            prop_assert_eq!(p.padded_height() % 3, 0);
            prop_assert_eq!(p.padded_width() % 3, 0);
            prop_assert!(p.padded_height() - h <= 2 && p.padded_width() - w <= 2);
            prop_assert_eq!(p.crop_original(), img);
        }

        #[test]
        fn patches_partition_the_padded_image(rows in 1usize..8, cols in 1usize..8) {
            let g = patch_grid_for(3 * rows, 3 * cols).unwrap();
            let mut visits = vec![0u32; 9 * rows * cols];
            for (r0, c0) in g.origins() {
                for r in r0..r0 + 3 {
                    for c in c0..c0 + 3 {
                        visits[r * 3 * cols + c] += 1;
                    }
                }
            }
            prop_assert!(visits.iter().all(|&v| v == 1));
        }
    }
}
