//! Draw sub-image pairs from a noisy image and measure how much of the
//! horizontal noise correlation survives, against the fixed-grid baselines.

use m2m::baselines::{baseline_sample, BaselineKind};
use m2m::noise::{corrupt, estimate_statistics, NoiseConfig, NoiseField};
use m2m::rng::StreamKey;
use m2m::sampling::{InterpolationScheme, Sampler, SamplingOptions};
use m2m::{Image, SamplingPosition};

fn lag1(img: &Image, mean: f64) -> m2m::Result<f64> {
    let f = NoiseField::new(
        img.height(),
        img.width(),
        img.data().iter().map(|v| v - mean).collect(),
    )?;
    Ok(estimate_statistics(&f, 0, 1, 1, 0)?.along[0])
}

fn main() -> m2m::Result<()> {
    let clean = Image::filled(240, 240, 0.5);
    let noisy = corrupt(&clean, &NoiseConfig::horizontal(3, 0.15, 1))?;
    println!("noisy image:   lag-1 rho {:.3}", lag1(&noisy, 0.5)?);

    for scheme in InterpolationScheme::ALL {
        let sampler = Sampler::new(&noisy, SamplingOptions::with_scheme(scheme))?;
        let pair = sampler.sample(SamplingPosition::C, StreamKey::root(3));
        println!(
            "m2m {:<4} c:   {}x{} pair, lag-1 rho {:.3}",
            scheme.name(),
            pair.x1.height(),
            pair.x1.width(),
            lag1(&pair.x1, 0.5)?
        );
    }
    for kind in BaselineKind::ALL {
        let pair = baseline_sample(&noisy, kind)?;
        println!("{:<13}  lag-1 rho {:.3}", kind.name(), lag1(&pair.x1, 0.5)?);
    }
    Ok(())
}
