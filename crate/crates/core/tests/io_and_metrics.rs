use m2m::image::{reflect_pad, PaddedImage};
use m2m::io::{decode_pgm, decode_png, encode_pgm, encode_png, quantize, BitDepth};
use m2m::metrics::{psnr, ssim};
use m2m::rng::StreamKey;
use m2m::Image;
use proptest::prelude::*;

fn random_image(h: usize, w: usize, seed: u64) -> Image {
    let k = StreamKey::root(seed);
    Image::from_fn(h, w, |r, c| k.uniform_at((r * w + c) as u64))
}

fn depth() -> impl Strategy<Value = BitDepth> {
    prop_oneof![Just(BitDepth::Eight), Just(BitDepth::Sixteen)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn encoded_images_decode_to_their_quantized_values(
        seed in 0u64..10_000, h in 1usize..12, w in 1usize..12, depth in depth(),
    ) {
        let img = random_image(h, w, seed);
        let max = depth.max_level() as f64;
        for decoded in [decode_pgm(&encode_pgm(&img, depth)).unwrap(), decode_png(&encode_png(&img, depth).unwrap()).unwrap()] {
            prop_assert_eq!(decoded.dims(), (h, w));
            for (a, b) in img.data().iter().zip(decoded.data()) {
                prop_assert_eq!(*b, quantize(*a, depth) as f64 / max);
                prop_assert!((a - b).abs() <= 0.5 / max + 1e-12);
            }
        }
    }

    #[test]
    fn psnr_is_symmetric_and_ssim_bounded(seed in 0u64..10_000, noise in 0.01f64..0.3) {
        let a = random_image(16, 16, seed);
        let k = StreamKey::root(seed + 1);
        let b = Image::from_fn(16, 16, |r, c| (a.get(r, c) + noise * (k.uniform_at((r * 16 + c) as u64) - 0.5)).clamp(0.0, 1.0));
        prop_assert!((psnr(&a, &b).unwrap() - psnr(&b, &a).unwrap()).abs() < 1e-12);
        let s = ssim(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert!((s - ssim(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn padding_keeps_the_original_and_crops_back(seed in 0u64..10_000, h in 3usize..14, w in 3usize..14) {
        let img = random_image(h, w, seed);
        let p = PaddedImage::for_sampling(&img);
        prop_assert_eq!(p.padded_height() % 3, 0);
        prop_assert_eq!(p.padded_width() % 3, 0);
        prop_assert_eq!(p.crop_original(), img.clone());
        let (lo, hi) = img.min_max();
        prop_assert!(p.buffer().data().iter().all(|v| *v >= lo && *v <= hi));
    }
}

#[test]
fn reflect_pad_mirrors_without_repeating_the_edge() {
    let row = Image::new(1, 3, vec![0.1, 0.2, 0.3]).unwrap();
    let padded = reflect_pad(&row, 1, 3, 1).unwrap();
    assert_eq!(padded.buffer().data()[..5], [0.2, 0.1, 0.2, 0.3, 0.2]);
}

#[test]
fn identical_images_have_infinite_psnr() {
    let a = random_image(8, 8, 3);
    assert!(psnr(&a, &a).unwrap().is_infinite());
    assert!(psnr(&a, &random_image(8, 9, 3)).is_err());
}
