//! A small benchmark grid: M2M, its ablations, ZS-N2N and the noisy input on
//! the phantom, written as CSV to stdout.

use m2m::benchmark::{median_psnr, run_benchmark, write_csv, BenchmarkSpec, Method};
use m2m::phantom::phantom;
use m2m::sampling::InterpolationScheme;
use m2m::trainer::{Ablation, TrainConfig};

fn main() -> m2m::Result<()> {
    let mut train = TrainConfig {
        epochs: 30,
        steps_per_epoch: 4,
        ..TrainConfig::default()
    };
    train.adam.learning_rate = 3e-3;
    let mut methods = vec![Method::Noisy, Method::Zsn2n];
    methods.extend(Ablation::ALL.into_iter().map(|ablation| Method::M2m {
        scheme: InterpolationScheme::FirstOrder,
        ablation,
    }));
    let spec = BenchmarkSpec {
        ells: vec![1, 3],
        sigmas: vec![0.1],
        methods,
        seeds: vec![0],
        train,
        ..BenchmarkSpec::default()
    };
    let rows = run_benchmark(&[("phantom".to_string(), phantom(48, 48))], &spec)?;
    write_csv(&rows, std::io::stdout())?;
    for ell in &spec.ells {
        let m2m = median_psnr(&rows, "m2m-1st", *ell, 0.1).unwrap_or(f64::NAN);
        let zs = median_psnr(&rows, "zsn2n", *ell, 0.1).unwrap_or(f64::NAN);
        eprintln!("ell {ell}: m2m {m2m:.2} dB, zsn2n {zs:.2} dB");
    }
    Ok(())
}
