//! Verify the hand-written backward pass of the denoiser network against
//! central finite differences.

use m2m::cnn::gradcheck::check_loss_gradient;
use m2m::cnn::{DenoiserParams, LossInputs};
use m2m::rng::StreamKey;
use m2m::Image;

fn main() -> m2m::Result<()> {
    let key = StreamKey::root(11);
    let imgs: Vec<Image> = (0..4)
        .map(|j| {
            let k = key.child(j);
            Image::from_fn(8, 8, |r, c| k.uniform_at((r * 8 + c) as u64))
        })
        .collect();
    let inputs = LossInputs {
        x1: &imgs[0],
        x2: &imgs[1],
        y1: &imgs[2],
        y2: &imgs[3],
    };
    let params = DenoiserParams::<f64>::init(5);
    let report = check_loss_gradient(&params, inputs, 1.0, 1e-5, 64, 0)?;
    for g in &report.groups {
        println!(
            "{:<14} checked {:>3} (kinked {}), max relative error {:.2e}",
            g.group, g.checked, g.kinked, g.max_rel_error
        );
    }
    println!("worst: {:.2e}", report.max_rel_error());
    Ok(())
}
