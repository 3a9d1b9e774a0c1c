//! Resolve a training configuration from a file plus overrides, execute it as
//! a recorded invocation and replay the manifest bit for bit.

use m2m::cli::{execute, replay, Invocation};
use m2m::config::{resolve_train_config, ConfigFile};
use m2m::io::BitDepth;

fn main() -> m2m::Result<()> {
    let dir = std::env::temp_dir().join("m2m-replay");
    std::fs::create_dir_all(&dir).map_err(|e| m2m::Error::io(&dir, e))?;

    let file =
        ConfigFile::parse("epochs = 3\nsteps_per_epoch = 2\nk = 2\nprecision = f64\nseed = 1\n")?;
    let train = resolve_train_config(Some(&file), &[("seed", "4".to_string())])?;
    println!(
        "resolved: epochs {} seed {} precision {:?}",
        train.epochs, train.seed, train.precision
    );

    let clean = dir.join("clean.pgm");
    let noisy = dir.join("noisy.pgm");
    let steps = [
        Invocation::Phantom {
            output: clean.clone(),
            size: 32,
            bit_depth: BitDepth::Eight,
        },
        Invocation::AddNoise {
            input: clean,
            output: noisy.clone(),
            noise: m2m::noise::NoiseConfig::horizontal(3, 0.1, 2),
            bit_depth: BitDepth::Eight,
        },
        Invocation::Denoise {
            input: noisy,
            output: dir.join("denoised.pgm"),
            train,
            checkpoint_dir: None,
            bit_depth: BitDepth::Eight,
        },
    ];
    for inv in &steps {
        let manifest = execute(inv, inv.name())?;
        println!("{} took {:.2} s", inv.name(), manifest.seconds);
    }
    let report = replay(&steps[2].manifest_path())?;
    println!("replay identical: {:?}", report.identical);
    Ok(())
}
