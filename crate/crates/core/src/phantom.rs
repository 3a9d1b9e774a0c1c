//! A procedural grayscale test scene, so benchmarks need no bundled files.

use crate::image::Image;

/// (center y, center x, radius y, radius x, intensity), unit coordinates.
const ELLIPSES: [(f64, f64, f64, f64, f64); 5] = [
    (0.30, 0.30, 0.17, 0.20, 0.80),
    (0.32, 0.72, 0.12, 0.12, 0.20),
    (0.72, 0.25, 0.10, 0.16, 0.65),
    (0.75, 0.70, 0.16, 0.12, 0.35),
    (0.30, 0.30, 0.07, 0.07, 0.45),
];

/// Edge softness in pixels, roughly the blur of a camera at this scale.
const EDGE_PX: f64 = 0.8;

/// Smooth background, soft-edged ellipses, a bar pattern and gentle texture,
/// all inside `[0.05, 0.95]`. Same size, same image.
pub fn phantom(height: usize, width: usize) -> Image {
    let (hf, wf) = (height as f64, width as f64);
    let scale = hf.min(wf);
    Image::from_fn(height, width, |r, c| {
        let y = (r as f64 + 0.5) / hf;
        let x = (c as f64 + 0.5) / wf;
        let mut v = 0.35 + 0.25 * x * (1.0 - 0.5 * y);
        for &(cy, cx, ry, rx, val) in &ELLIPSES {
            // signed distance to the boundary, approximately in pixels
            let d = (((y - cy) / ry).powi(2) + ((x - cx) / rx).powi(2)).sqrt();
            let dist_px = (d - 1.0) * ry.min(rx) * scale;
            let inside = smoothstep(-dist_px / EDGE_PX);
            v += inside * (val - v);
        }
        // bars with periods from 24 down to 12 pixels
        if (0.48..0.58).contains(&y) && (0.12..0.88).contains(&x) {
            let px = (x - 0.12) * wf;
            let period = 24.0 - 12.0 * (x - 0.12) / 0.76;
            let phase = (std::f64::consts::TAU * px / period).sin();
            v = 0.3 + 0.4 * smoothstep(phase * period / (2.0 * EDGE_PX));
        }
        // slow texture inside the lower right ellipse
        let d = ((y - 0.75) / 0.16).powi(2) + ((x - 0.70) / 0.12).powi(2);
        if d <= 1.0 {
            v += 0.06 * (12.0 * y).sin() * (9.0 * x).cos() * (1.0 - d);
        }
        v.clamp(0.05, 0.95)
    })
}

/// Logistic-shaped ramp from 0 to 1 around `t = 0`.
fn smoothstep(t: f64) -> f64 {
    1.0 / (1.0 + (-2.0 * t).exp())
}
