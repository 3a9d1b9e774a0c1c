//! Central finite differences against the analytic gradients, in f64.

use serde::Serialize;

use super::network::{loss_and_grad, LossInputs, Workspace};
use super::params::{DenoiserParams, ParamGroup};
use crate::error::Result;
use crate::image::Image;
use crate::rng::StreamKey;

/// Worst relative error found in one parameter group.
#[derive(Clone, Debug, Serialize)]
pub struct GroupCheck {
    pub group: String,
    pub checked: usize,
    /// Probes whose two evaluations straddled a PReLU kink. Their central
    /// difference does not estimate the derivative, so they are left out.
    pub kinked: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub groups: Vec<GroupCheck>,
    /// Worst relative error of the input gradient, when checked.
    pub input_max_rel_error: Option<f64>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.max_rel_error)
            .chain(self.input_max_rel_error)
            .fold(0.0, f64::max)
    }
}

/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps exactly vanishing
/// gradients from dividing round-off by zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    const FLOOR: f64 = 1e-8;
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Training loss and the activation pattern of all four forward passes.
fn loss_and_pattern(
    params: &DenoiserParams<f64>,
    ws: &mut Workspace<f64>,
    inputs: LossInputs<'_>,
    lambda: f64,
) -> (f64, Vec<bool>) {
    let (h, w) = inputs.x1.dims();
    let m = (h * w) as f64;
    let mut total = 0.0;
    let mut pattern = Vec::new();
    for (src, tgt, cons) in [
        (inputs.x1, inputs.x2, inputs.y1),
        (inputs.x2, inputs.x1, inputs.y2),
    ] {
        let out = params.forward_buffer(ws, src.data(), h, w);
        pattern.extend(ws.activation_pattern());
        for (&o, (&t, &y)) in out.iter().zip(tgt.data().iter().zip(cons.data())) {
            total += 0.5 * ((o - t) * (o - t) + lambda * (o - y) * (o - y)) / m;
        }
    }
    (total, pattern)
}

/// Compare the analytic gradient of the training loss with central
/// differences of step `h`. Groups with at most `per_group` entries are
/// checked completely, larger ones at `per_group` entries chosen by `seed`.
/// Probes that cross a PReLU kink are counted in `kinked` and not compared.
pub fn check_loss_gradient(
    params: &DenoiserParams<f64>,
    inputs: LossInputs<'_>,
    lambda: f64,
    h: f64,
    per_group: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut ws = Workspace::new();
    let mut grads = DenoiserParams::zeros();
    loss_and_grad(params, &mut ws, inputs, lambda, &mut grads)?;
    let key = StreamKey::root(seed);
    let mut probe = params.clone();
    let mut groups = Vec::new();
    for (gi, g) in ParamGroup::ALL.into_iter().enumerate() {
        let range = g.range();
        let indices: Vec<usize> = if range.len() <= per_group {
            range.clone().collect()
        } else {
            let k = key.child(gi as u64);
            (0..per_group)
                .map(|i| range.start + (k.u64_at(i as u64) % range.len() as u64) as usize)
                .collect()
        };
        let mut worst = 0.0f64;
        let mut kinked = 0;
        for &idx in &indices {
            let orig = probe.values()[idx];
            probe.values_mut()[idx] = orig + h;
            let (plus, pattern_plus) = loss_and_pattern(&probe, &mut ws, inputs, lambda);
            probe.values_mut()[idx] = orig - h;
            let (minus, pattern_minus) = loss_and_pattern(&probe, &mut ws, inputs, lambda);
            probe.values_mut()[idx] = orig;
            if pattern_plus != pattern_minus {
                kinked += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(grads.values()[idx], numeric));
        }
        groups.push(GroupCheck {
            group: g.name().to_string(),
            checked: indices.len() - kinked,
            kinked,
            max_rel_error: worst,
        });
    }
    Ok(GradCheckReport {
        groups,
        input_max_rel_error: None,
    })
}

/// Check the input gradient of `sum(weights * f(x))` at every pixel that
/// does not move a pre-activation across a kink.
pub fn check_input_gradient(
    params: &DenoiserParams<f64>,
    x: &Image,
    weights: &Image,
    h: f64,
) -> Result<f64> {
    x.ensure_same_dims(weights)?;
    let (rows, cols) = x.dims();
    let mut ws = Workspace::new();
    params.forward_buffer(&mut ws, x.data(), rows, cols);
    let mut scratch = DenoiserParams::zeros();
    params.backward_buffer(&mut ws, weights.data(), &mut scratch, true);
    let analytic = ws.input_gradient();
    let objective = |buf: &[f64], ws: &mut Workspace<f64>| -> (f64, Vec<bool>) {
        let out = params.forward_buffer(ws, buf, rows, cols);
        let value = out.iter().zip(weights.data()).map(|(o, w)| o * w).sum();
        (value, ws.activation_pattern())
    };
    let mut buf = x.data().to_vec();
    let mut worst = 0.0f64;
    for i in 0..buf.len() {
        let orig = buf[i];
        buf[i] = orig + h;
        let (plus, pattern_plus) = objective(&buf, &mut ws);
        buf[i] = orig - h;
        let (minus, pattern_minus) = objective(&buf, &mut ws);
        buf[i] = orig;
        if pattern_plus == pattern_minus {
            worst = worst.max(relative_error(analytic[i], (plus - minus) / (2.0 * h)));
        }
    }
    Ok(worst)
}
