//! Denoise a synthetic phantom corrupted by banding noise and report the
//! PSNR gain. Pass an epoch count as the first argument (default 30).

use m2m::metrics::{psnr, ssim};
use m2m::noise::{corrupt, NoiseConfig};
use m2m::phantom::phantom;
use m2m::trainer::{denoise, TrainConfig};

fn main() -> m2m::Result<()> {
    let epochs = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(30);
    let clean = phantom(96, 96);
    let noisy = corrupt(&clean, &NoiseConfig::horizontal(3, 0.1, 0))?;
    let mut cfg = TrainConfig {
        epochs,
        steps_per_epoch: 4,
        ..TrainConfig::default()
    };
    cfg.adam.learning_rate = 3e-3;

    let result = denoise(&noisy, &cfg)?;
    for l in result.loss_trace.iter().step_by((epochs / 5).max(1)) {
        println!(
            "epoch {:>4}: symmetric {:.5} consistency {:.5}",
            l.epoch, l.symmetric, l.consistency
        );
    }
    println!(
        "noisy    PSNR {:.2} dB  SSIM {:.3}",
        psnr(&clean, &noisy)?,
        ssim(&clean, &noisy)?
    );
    println!(
        "denoised PSNR {:.2} dB  SSIM {:.3}",
        psnr(&clean, &result.output)?,
        ssim(&clean, &result.output)?
    );
    Ok(())
}
