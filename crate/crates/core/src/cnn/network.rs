//! Forward and backward passes of the three-layer denoiser
//! `conv3x3 -> PReLU -> conv3x3 -> PReLU -> conv1x1`.
//!
//! Feature maps are stored channel-major on planes with a one-pixel zero
//! ring, `(h + 2) x (w + 2)` values per channel. On such a plane a 3x3 tap
//! `(dy, dx)` is a constant flat offset `dy * (w + 2) + dx`, so every tap of
//! a convolution is one strided GEMM over the flat range that spans the
//! interior. That range also contains the left/right ring columns of the
//! inner rows; those outputs are garbage and get zeroed after each layer.

use super::params::{DenoiserParams, ParamGroup, CHANNELS};
use super::real::{gemm, Layout, Real};
use crate::error::{Error, Result};
use crate::image::Image;

const C: usize = CHANNELS;
/// Stride between output channels in the conv2 kernel tensor.
const W2_OUT_STRIDE: usize = 9 * CHANNELS;

#[derive(Clone, Copy, Debug)]
struct Geometry {
    h: usize,
    w: usize,
    pw: usize,
    plane: usize,
    /// Flat index of interior pixel (0, 0).
    start: usize,
    /// Length of the flat range from interior (0, 0) to (h-1, w-1).
    span: usize,
}

impl Geometry {
    fn new(h: usize, w: usize) -> Self {
        let pw = w + 2;
        Self {
            h,
            w,
            pw,
            plane: (h + 2) * pw,
            start: pw + 1,
            span: (h - 1) * pw + w,
        }
    }

    /// Flat offset of tap `t` (row-major over the 3x3 kernel).
    #[inline]
    fn tap_offset(&self, t: usize) -> isize {
        let (dy, dx) = ((t / 3) as isize - 1, (t % 3) as isize - 1);
        dy * self.pw as isize + dx
    }

    #[inline]
    fn shifted(&self, t: usize) -> usize {
        (self.start as isize + self.tap_offset(t)) as usize
    }

    /// True for flat indices inside the span that sit on the zero ring.
    #[inline]
    fn is_ring_column(&self, idx: usize) -> bool {
        let col = idx % self.pw;
        col == 0 || col == self.pw - 1
    }

    fn interior_index(&self, r: usize, c: usize) -> usize {
        (r + 1) * self.pw + c + 1
    }
}

/// Reusable buffers for one input size. Holds the activations of the last
/// forward pass so a backward pass can follow.
#[derive(Clone, Debug, Default)]
pub struct Workspace<T> {
    dims: (usize, usize),
    input: Vec<T>,
    z1: Vec<T>,
    a1: Vec<T>,
    z2: Vec<T>,
    a2: Vec<T>,
    out: Vec<T>,
    d1: Vec<T>,
    d2: Vec<T>,
    dout: Vec<T>,
    dinput: Vec<T>,
}

impl<T: Real> Workspace<T> {
    pub fn new() -> Self {
        Self::default()
    }

    fn prepare(&mut self, h: usize, w: usize) -> Geometry {
        let g = Geometry::new(h, w);
        if self.dims != (h, w) {
            self.dims = (h, w);
            self.input = vec![T::zero(); g.plane];
            self.z1 = vec![T::zero(); C * g.plane];
            self.a1 = vec![T::zero(); C * g.plane];
            self.z2 = vec![T::zero(); C * g.plane];
            self.a2 = vec![T::zero(); C * g.plane];
            self.out = vec![T::zero(); g.plane];
            self.d1 = vec![T::zero(); C * g.plane];
            self.d2 = vec![T::zero(); C * g.plane];
            self.dout = vec![T::zero(); g.plane];
            self.dinput = vec![T::zero(); g.plane];
        }
        g
    }

    /// Output of the last forward pass, row-major `h x w`.
    pub fn output(&self) -> Vec<T> {
        let g = Geometry::new(self.dims.0, self.dims.1);
        let mut out = Vec::with_capacity(g.h * g.w);
        for r in 0..g.h {
            let s = g.interior_index(r, 0);
            out.extend_from_slice(&self.out[s..s + g.w]);
        }
        out
    }

    /// Which pre-activations of the last forward pass were positive, both
    /// hidden layers. Two passes with equal patterns ran on the same linear
    /// piece of the PReLUs.
    pub fn activation_pattern(&self) -> Vec<bool> {
        self.z1
            .iter()
            .chain(&self.z2)
            .map(|&z| z > T::zero())
            .collect()
    }

    /// Gradient with respect to the input of the last backward pass.
    pub fn input_gradient(&self) -> Vec<T> {
        let g = Geometry::new(self.dims.0, self.dims.1);
        let mut out = Vec::with_capacity(g.h * g.w);
        for r in 0..g.h {
            let s = g.interior_index(r, 0);
            out.extend_from_slice(&self.dinput[s..s + g.w]);
        }
        out
    }
}

fn zero_ring_columns<T: Real>(buf: &mut [T], g: &Geometry, channels: usize) {
    for ch in 0..channels {
        let base = ch * g.plane;
        for r in 1..g.h {
            // right ring of row r-1 and left ring of row r are adjacent
            let right = base + r * g.pw + g.pw - 1;
            buf[right] = T::zero();
            buf[right + 1] = T::zero();
        }
    }
}

fn prelu_forward<T: Real>(z: &[T], a: &mut [T], slopes: &[T], g: &Geometry) {
    for (ch, &s) in slopes.iter().enumerate().take(C) {
        let base = ch * g.plane + g.start;
        for (av, &zv) in a[base..base + g.span]
            .iter_mut()
            .zip(&z[base..base + g.span])
        {
            *av = if zv > T::zero() { zv } else { s * zv };
        }
    }
}

/// Turn `d` (gradient w.r.t. PReLU output) into the gradient w.r.t. its input
/// and accumulate bias and slope gradients.
fn prelu_backward<T: Real>(
    d: &mut [T],
    z: &[T],
    slopes: &[T],
    g: &Geometry,
    dbias: &mut [T],
    dslope: &mut [T],
) {
    for (ch, &s) in slopes.iter().enumerate().take(C) {
        let base = ch * g.plane + g.start;
        let mut sum_bias = 0.0f64;
        let mut sum_slope = 0.0f64;
        for (idx, (dv, &zv)) in d[base..base + g.span]
            .iter_mut()
            .zip(&z[base..base + g.span])
            .enumerate()
        {
            if g.is_ring_column(g.start + idx) {
                *dv = T::zero();
                continue;
            }
            if zv <= T::zero() {
                sum_slope += (*dv * zv).as_f64();
                *dv = *dv * s;
            }
            sum_bias += dv.as_f64();
        }
        dbias[ch] = dbias[ch] + T::from_f64(sum_bias);
        dslope[ch] = dslope[ch] + T::from_f64(sum_slope);
    }
}

impl<T: Real> DenoiserParams<T> {
    /// Run the network on a row-major `h x w` buffer, keeping activations in
    /// `ws`. Returns the output as a row-major buffer.
    pub fn forward_buffer(&self, ws: &mut Workspace<T>, input: &[T], h: usize, w: usize) -> Vec<T> {
        assert_eq!(input.len(), h * w, "input buffer does not match {h}x{w}");
        assert!(h > 0 && w > 0, "empty input");
        let g = ws.prepare(h, w);
        for r in 0..h {
            let s = g.interior_index(r, 0);
            ws.input[s..s + w].copy_from_slice(&input[r * w..(r + 1) * w]);
        }

        let w1 = self.group(ParamGroup::Conv1Weight);
        let b1 = self.group(ParamGroup::Conv1Bias);
        for (ch, &b) in b1.iter().enumerate() {
            let base = ch * g.plane + g.start;
            ws.z1[base..base + g.span].fill(b);
        }
        // one GEMM per kernel row: the three dx taps are consecutive in memory
        for ky in 0..3 {
            gemm(
                C,
                3,
                g.span,
                w1,
                Layout::new(ky * 3, 9, 1),
                &ws.input,
                Layout::new(g.shifted(ky * 3), 1, 1),
                T::one(),
                &mut ws.z1,
                Layout::new(g.start, g.plane, 1),
            );
        }
        zero_ring_columns(&mut ws.z1, &g, C);
        prelu_forward(&ws.z1, &mut ws.a1, self.group(ParamGroup::Prelu1Slope), &g);

        let w2 = self.group(ParamGroup::Conv2Weight);
        let b2 = self.group(ParamGroup::Conv2Bias);
        for (ch, &b) in b2.iter().enumerate() {
            let base = ch * g.plane + g.start;
            ws.z2[base..base + g.span].fill(b);
        }
        for t in 0..9 {
            gemm(
                C,
                C,
                g.span,
                w2,
                Layout::new(t, W2_OUT_STRIDE, 9),
                &ws.a1,
                Layout::new(g.shifted(t), g.plane, 1),
                T::one(),
                &mut ws.z2,
                Layout::new(g.start, g.plane, 1),
            );
        }
        zero_ring_columns(&mut ws.z2, &g, C);
        prelu_forward(&ws.z2, &mut ws.a2, self.group(ParamGroup::Prelu2Slope), &g);

        let b3 = self.group(ParamGroup::Conv3Bias)[0];
        ws.out[g.start..g.start + g.span].fill(b3);
        gemm(
            1,
            C,
            g.span,
            self.group(ParamGroup::Conv3Weight),
            Layout::new(0, C, 1),
            &ws.a2,
            Layout::new(g.start, g.plane, 1),
            T::one(),
            &mut ws.out,
            Layout::new(g.start, g.span, 1),
        );
        ws.output()
    }

    /// Backpropagate `grad_out` (row-major `h x w`) through the activations of
    /// the last forward pass in `ws`, accumulating into `grads`. When
    /// `want_input` is set the input gradient is left in the workspace.
    pub fn backward_buffer(
        &self,
        ws: &mut Workspace<T>,
        grad_out: &[T],
        grads: &mut DenoiserParams<T>,
        want_input: bool,
    ) {
        let (h, w) = ws.dims;
        assert_eq!(
            grad_out.len(),
            h * w,
            "gradient does not match last forward"
        );
        let g = Geometry::new(h, w);
        for r in 0..h {
            let s = g.interior_index(r, 0);
            ws.dout[s..s + w].copy_from_slice(&grad_out[r * w..(r + 1) * w]);
        }

        // conv3 (1x1)
        let gsum: f64 = grad_out.iter().map(|v| v.as_f64()).sum();
        {
            let db3 = grads.group_mut(ParamGroup::Conv3Bias);
            db3[0] = db3[0] + T::from_f64(gsum);
        }
        let mut dw3 = vec![T::zero(); C];
        gemm(
            C,
            g.span,
            1,
            &ws.a2,
            Layout::new(g.start, g.plane, 1),
            &ws.dout,
            Layout::new(g.start, 1, 1),
            T::zero(),
            &mut dw3,
            Layout::new(0, 1, 1),
        );
        for (acc, v) in grads
            .group_mut(ParamGroup::Conv3Weight)
            .iter_mut()
            .zip(&dw3)
        {
            *acc = *acc + *v;
        }
        let w3 = self.group(ParamGroup::Conv3Weight);
        for (ch, &wc) in w3.iter().enumerate() {
            let base = ch * g.plane + g.start;
            for (d, &o) in ws.d2[base..base + g.span]
                .iter_mut()
                .zip(&ws.dout[g.start..g.start + g.span])
            {
                *d = wc * o;
            }
        }

        // PReLU 2 and conv2
        {
            let mut db2 = vec![T::zero(); C];
            let mut ds2 = vec![T::zero(); C];
            prelu_backward(
                &mut ws.d2,
                &ws.z2,
                self.group(ParamGroup::Prelu2Slope),
                &g,
                &mut db2,
                &mut ds2,
            );
            add_into(grads.group_mut(ParamGroup::Conv2Bias), &db2);
            add_into(grads.group_mut(ParamGroup::Prelu2Slope), &ds2);
        }
        {
            let dw2 = grads.group_mut(ParamGroup::Conv2Weight);
            for t in 0..9 {
                gemm(
                    C,
                    g.span,
                    C,
                    &ws.d2,
                    Layout::new(g.start, g.plane, 1),
                    &ws.a1,
                    Layout::new(g.shifted(t), 1, g.plane),
                    T::one(),
                    dw2,
                    Layout::new(t, W2_OUT_STRIDE, 9),
                );
            }
        }
        ws.d1.fill(T::zero());
        let w2 = self.group(ParamGroup::Conv2Weight);
        for t in 0..9 {
            gemm(
                C,
                C,
                g.span,
                w2,
                Layout::new(t, 9, W2_OUT_STRIDE),
                &ws.d2,
                Layout::new(g.start, g.plane, 1),
                T::one(),
                &mut ws.d1,
                Layout::new(g.shifted(t), g.plane, 1),
            );
        }

        // PReLU 1 and conv1
        {
            let mut db1 = vec![T::zero(); C];
            let mut ds1 = vec![T::zero(); C];
            prelu_backward(
                &mut ws.d1,
                &ws.z1,
                self.group(ParamGroup::Prelu1Slope),
                &g,
                &mut db1,
                &mut ds1,
            );
            add_into(grads.group_mut(ParamGroup::Conv1Bias), &db1);
            add_into(grads.group_mut(ParamGroup::Prelu1Slope), &ds1);
        }
        {
            let dw1 = grads.group_mut(ParamGroup::Conv1Weight);
            for ky in 0..3 {
                gemm(
                    C,
                    g.span,
                    3,
                    &ws.d1,
                    Layout::new(g.start, g.plane, 1),
                    &ws.input,
                    Layout::new(g.shifted(ky * 3), 1, 1),
                    T::one(),
                    dw1,
                    Layout::new(ky * 3, 9, 1),
                );
            }
        }
        if want_input {
            ws.dinput.fill(T::zero());
            let w1 = self.group(ParamGroup::Conv1Weight);
            for t in 0..9 {
                gemm(
                    1,
                    C,
                    g.span,
                    w1,
                    Layout::new(t, 0, 9),
                    &ws.d1,
                    Layout::new(g.start, g.plane, 1),
                    T::one(),
                    &mut ws.dinput,
                    Layout::new(g.shifted(t), g.span, 1),
                );
            }
        }
    }

    /// Denoise one image.
    pub fn forward(&self, input: &Image) -> Image {
        let mut ws = Workspace::new();
        self.forward_with(&mut ws, input)
    }

    pub fn forward_with(&self, ws: &mut Workspace<T>, input: &Image) -> Image {
        let buf: Vec<T> = input.data().iter().map(|&v| T::from_f64(v)).collect();
        let out = self.forward_buffer(ws, &buf, input.height(), input.width());
        Image::from_raw(
            input.height(),
            input.width(),
            out.into_iter().map(|v| v.as_f64()).collect(),
        )
    }
}

fn add_into<T: Real>(acc: &mut [T], v: &[T]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a = *a + *b;
    }
}

/// Images entering [`loss_and_grad`].
#[derive(Clone, Copy, Debug)]
pub struct LossInputs<'a> {
    pub x1: &'a Image,
    pub x2: &'a Image,
    /// Consistency targets, treated as constants.
    pub y1: &'a Image,
    pub y2: &'a Image,
}

/// Value of the training objective split into its two terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossValue {
    pub symmetric: f64,
    pub consistency: f64,
    pub total: f64,
}

fn to_buffer<T: Real>(img: &Image) -> Vec<T> {
    img.data().iter().map(|&v| T::from_f64(v)).collect()
}

/// Symmetric Noise2Noise loss plus `lambda` times the consistency loss, all
/// squared norms taken as means over pixels:
///
/// ```text
/// L = 1/2 [mse(f(x1), x2) + mse(f(x2), x1)]
///   + lambda * 1/2 [mse(y1, f(x1)) + mse(y2, f(x2))]
/// ```
///
/// Gradients are accumulated into `grads` (which is zeroed first). With
/// `want_input` the last backward pass leaves d L / d x2 (through `f(x2)`
/// only) in `ws`.
pub fn loss_and_grad<T: Real>(
    params: &DenoiserParams<T>,
    ws: &mut Workspace<T>,
    inputs: LossInputs<'_>,
    lambda: f64,
    grads: &mut DenoiserParams<T>,
) -> Result<LossValue> {
    let LossInputs { x1, x2, y1, y2 } = inputs;
    for other in [x2, y1, y2] {
        x1.ensure_same_dims(other)?;
    }
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    grads.values_mut().fill(T::zero());
    let (h, w) = x1.dims();
    let m = (h * w) as f64;

    let mut value = LossValue::default();
    for (src, tgt, cons) in [(x1, x2, y1), (x2, x1, y2)] {
        let out = params.forward_buffer(ws, &to_buffer(src), h, w);
        let mut sym = 0.0;
        let mut con = 0.0;
        let grad: Vec<T> = out
            .iter()
            .zip(tgt.data().iter().zip(cons.data()))
            .map(|(&o, (&t, &y))| {
                let o = o.as_f64();
                sym += (o - t) * (o - t);
                con += (o - y) * (o - y);
                T::from_f64(((o - t) + lambda * (o - y)) / m)
            })
            .collect();
        value.symmetric += 0.5 * sym / m;
        value.consistency += 0.5 * con / m;
        params.backward_buffer(ws, &grad, grads, false);
    }
    value.total = value.symmetric + lambda * value.consistency;
    if !value.total.is_finite() {
        return Err(Error::Training(format!("non-finite loss {}", value.total)));
    }
    Ok(value)
}

/// Loss only, for finite-difference checks.
pub fn loss_value<T: Real>(params: &DenoiserParams<T>, inputs: LossInputs<'_>, lambda: f64) -> f64 {
    let mut ws = Workspace::new();
    let (h, w) = inputs.x1.dims();
    let m = (h * w) as f64;
    let mut total = 0.0;
    for (src, tgt, cons) in [
        (inputs.x1, inputs.x2, inputs.y1),
        (inputs.x2, inputs.x1, inputs.y2),
    ] {
        let out = params.forward_buffer(&mut ws, &to_buffer(src), h, w);
        for (&o, (&t, &y)) in out.iter().zip(tgt.data().iter().zip(cons.data())) {
            let o = o.as_f64();
            total += 0.5 * ((o - t) * (o - t) + lambda * (o - y) * (o - y)) / m;
        }
    }
    total
}
