//! Round-trip images through 8- and 16-bit PGM and PNG and show the
//! quantization error each format introduces.

use m2m::io::{load_image, save_image_with, BitDepth};
use m2m::metrics::psnr;
use m2m::phantom::phantom;

fn main() -> m2m::Result<()> {
    let img = phantom(64, 64);
    let dir = std::env::temp_dir().join("m2m-image-io");
    std::fs::create_dir_all(&dir).map_err(|e| m2m::Error::io(&dir, e))?;
    for depth in [BitDepth::Eight, BitDepth::Sixteen] {
        for ext in ["pgm", "png"] {
            let path = dir.join(format!("phantom{}.{ext}", depth.max_level()));
            save_image_with(&img, &path, depth)?;
            let back = load_image(&path)?;
            println!(
                "{}: PSNR after round trip {:.1} dB",
                path.display(),
                psnr(&img, &back)?
            );
        }
    }
    Ok(())
}
