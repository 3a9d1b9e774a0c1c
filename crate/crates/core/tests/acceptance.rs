//! Acceptance run. Prints one PASS/FAIL line per criterion.
//!
//! The process fails only on unexpected failures. A criterion listed in
//! `KNOWN_FAILURES` still prints FAIL with its measured values, together
//! with the reason it cannot pass.

use std::collections::HashSet;
use std::time::Instant;

use m2m::baselines::{baseline_sample, BaselineKind};
use m2m::benchmark::{median, run_benchmark, BenchmarkRow, BenchmarkSpec, Method};
use m2m::cnn::gradcheck::check_loss_gradient;
use m2m::cnn::{DenoiserParams, LossInputs, ParamGroup};
use m2m::metrics::{psnr, ssim};
use m2m::noise::{
    corrupt, estimate_statistics, structured_noise, theoretical_correlation, NoiseConfig,
    NoiseField,
};
use m2m::phantom::phantom;
use m2m::rng::StreamKey;
use m2m::sampling::{InterpolationScheme, Sampler, SamplingOptions};
use m2m::trainer::{Ablation, Precision, TrainConfig};
use m2m::{Image, SamplingPosition};

/// Criteria that cannot pass with a faithful implementation.
const KNOWN_FAILURES: &[(u32, &str)] = &[(
    5,
    "baseline neighbours are two source pixels apart, so their lag-1 correlation is (3-2)/3 = 1/3 < 0.5 for ell = 3",
)];

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Training budget of the desk-scale runs: 30 epochs of 4 steps at lr 3e-3.
fn desk_config() -> TrainConfig {
    let mut cfg = TrainConfig {
        epochs: 30,
        steps_per_epoch: 4,
        ..TrainConfig::default()
    };
    cfg.adam.learning_rate = 3e-3;
    cfg
}

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn report(id: u32, name: &str, start: Instant, outcome: Outcome, unexpected: &mut Vec<u32>) {
    let secs = start.elapsed().as_secs_f64();
    let status = if outcome.pass { "PASS" } else { "FAIL" };
    println!(
        "criterion {id:>2} {status}  {name}: {} ({secs:.1} s)",
        outcome.detail
    );
    if !outcome.pass {
        match KNOWN_FAILURES.iter().find(|(k, _)| *k == id) {
            Some((_, why)) => println!("             known: {why}"),
            None => unexpected.push(id),
        }
    }
}

fn noise_statistics() -> Outcome {
    let start = Instant::now();
    let mut worst_in = 0.0f64;
    let mut worst_out = 0.0f64;
    let mut worst_var = 0.0f64;
    let sigma = 0.1;
    for ell in [3usize, 5, 7] {
        let cfg = NoiseConfig::horizontal(ell, sigma, 100 + ell as u64);
        let field = structured_noise(1040, 1040, &cfg).expect("noise");
        let max_lag = ell + 2;
        let stats = estimate_statistics(&field, 0, 1, max_lag, ell).expect("stats");
        for t in 1..=max_lag {
            let along = stats.along[t - 1];
            if t < ell {
                worst_in = worst_in.max((along - theoretical_correlation(ell, t)).abs());
            } else {
                worst_out = worst_out.max(along.abs());
            }
            worst_out = worst_out.max(stats.orthogonal[t - 1].abs());
        }
        worst_var = worst_var.max((stats.variance / (sigma * sigma) - 1.0).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst_in <= 0.02 && worst_out < 0.02 && worst_var <= 0.02 && secs < 30.0,
        format!(
            "max |rho - (ell-t)/ell| {worst_in:.4}, max |rho| beyond support {worst_out:.4}, max var rel err {:.3}%",
            100.0 * worst_var
        ),
    )
}

/// Canonical unordered outcome of one pair: sorted bit patterns per pixel.
fn unordered(x1: &Image, x2: &Image) -> Vec<(u64, u64)> {
    x1.data()
        .iter()
        .zip(x2.data())
        .map(|(a, b)| {
            let (a, b) = (a.to_bits(), b.to_bits());
            (a.min(b), a.max(b))
        })
        .collect()
}

fn sampling_cardinality() -> Outcome {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;
    for (n, expected) in [(3usize, 3usize), (6, 81)] {
        let key = StreamKey::root(42 + n as u64);
        // generic values: no ties among candidates
        let img = Image::from_fn(n, n, |r, c| 0.1 + 0.8 * key.uniform_at((r * n + c) as u64));
        let sampler = Sampler::new(&img, SamplingOptions::default()).expect("sampler");
        let (oh, ow) = sampler.output_dims();
        let targets = (oh * ow) as u32;
        let mut min_count = usize::MAX;
        let mut max_count = 0;
        for pos in SamplingPosition::ALL {
            let mut outcomes = HashSet::new();
            for code in 0..3usize.pow(targets) {
                for order in [0.25, 0.75] {
                    let pair = sampler.sample_with(pos, |k| {
                        let choice = code / 3usize.pow(k as u32) % 3;
                        ((choice as f64 + 0.5) / 3.0, order)
                    });
                    outcomes.insert(unordered(&pair.x1, &pair.x2));
                }
            }
            // random draws never leave the enumerated set
            for r in 0..500u64 {
                let pair = sampler.sample(pos, key.child(r));
                pass &= outcomes.contains(&unordered(&pair.x1, &pair.x2));
            }
            min_count = min_count.min(outcomes.len());
            max_count = max_count.max(outcomes.len());
        }
        pass &= min_count == expected && max_count == expected;
        details.push(format!(
            "{n}x{n}: {min_count}..{max_count} outcomes per position (want {expected})"
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(pass && secs < 5.0, details.join(", "))
}

/// Per-location mean and standard error of `x1 - x2` over `rounds` resamples.
fn pair_difference_stats(noisy: &Image, opts: SamplingOptions, rounds: u64) -> Vec<(f64, f64)> {
    let sampler = Sampler::new(noisy, opts).expect("sampler");
    let (oh, ow) = sampler.output_dims();
    let n_loc = 9 * oh * ow;
    let mut sum = vec![0.0; n_loc];
    let mut sum_sq = vec![0.0; n_loc];
    let root = StreamKey::root(2024);
    for r in 0..rounds {
        for (p, pair) in sampler.sample_all(root.child(r)).iter().enumerate() {
            for (i, (a, b)) in pair.x1.data().iter().zip(pair.x2.data()).enumerate() {
                let d = a - b;
                sum[p * oh * ow + i] += d;
                sum_sq[p * oh * ow + i] += d * d;
            }
        }
    }
    let n = rounds as f64;
    sum.iter()
        .zip(&sum_sq)
        .map(|(&s, &s2)| {
            let mean = s / n;
            let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
            (mean, (var / n).sqrt())
        })
        .collect()
}

fn assignment_bias() -> Outcome {
    let clean = phantom(48, 48);
    let noisy = corrupt(&clean, &NoiseConfig::horizontal(3, 0.1, 7)).expect("noise");
    let with_ra = pair_difference_stats(&noisy, SamplingOptions::default(), 10_000);
    let within = with_ra
        .iter()
        .filter(|&&(m, se)| {
            if se > 0.0 {
                m.abs() < 3.0 * se
            } else {
                m == 0.0
            }
        })
        .count();
    let frac_ra = within as f64 / with_ra.len() as f64;

    let opts = SamplingOptions {
        random_assignment: false,
        ..SamplingOptions::default()
    };
    let no_ra = pair_difference_stats(&noisy, opts, 10_000);
    let live: Vec<_> = no_ra
        .iter()
        .filter(|&&(m, se)| se > 0.0 || m != 0.0)
        .collect();
    let negative = live.iter().filter(|&&&(m, _)| m < 0.0).count();
    let frac_neg = negative as f64 / live.len().max(1) as f64;
    Outcome::new(
        frac_ra >= 0.99 && frac_neg > 0.90,
        format!(
            "with RA {:.2}% of {} locations within 3 SE; without RA mean difference negative at {:.2}% of {} locations",
            100.0 * frac_ra,
            with_ra.len(),
            100.0 * frac_neg,
            live.len()
        ),
    )
}

fn perturbed_params(seed: u64) -> DenoiserParams<f64> {
    let mut p = DenoiserParams::<f64>::init(seed);
    let key = StreamKey::root(seed).child(99);
    let mut i = 0u64;
    for g in [
        ParamGroup::Conv1Bias,
        ParamGroup::Prelu1Slope,
        ParamGroup::Conv2Bias,
        ParamGroup::Prelu2Slope,
        ParamGroup::Conv3Bias,
    ] {
        for v in p.group_mut(g) {
            *v += 0.2 * (key.uniform_at(i) - 0.5);
            i += 1;
        }
    }
    p
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut kinked = 0;
    let mut every_group = true;
    for instance in 0..10u64 {
        let key = StreamKey::root(500 + instance);
        let imgs: Vec<Image> = (0..4)
            .map(|j| Image::from_fn(8, 8, |r, c| key.child(j).uniform_at((r * 8 + c) as u64)))
            .collect();
        let inputs = LossInputs {
            x1: &imgs[0],
            x2: &imgs[1],
            y1: &imgs[2],
            y2: &imgs[3],
        };
        let report =
            check_loss_gradient(&perturbed_params(instance), inputs, 1.0, 1e-5, 64, instance)
                .expect("gradient check");
        worst = worst.max(report.max_rel_error());
        checked += report.groups.iter().map(|g| g.checked).sum::<usize>();
        kinked += report.groups.iter().map(|g| g.kinked).sum::<usize>();
        every_group &= report.groups.iter().all(|g| g.checked > 0);
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst < 1e-4 && every_group && secs < 60.0,
        format!(
            "{checked} entries over 8 groups x 10 instances, max relative error {worst:.2e} ({kinked} probes straddled a PReLU kink and were not compared)"
        ),
    )
}

fn lag1_correlation(img: &Image, level: f64) -> f64 {
    let values = img.data().iter().map(|v| v - level).collect();
    let field = NoiseField::new(img.height(), img.width(), values).expect("field");
    estimate_statistics(&field, 0, 1, 1, 0)
        .expect("stats")
        .along[0]
}

fn destructuring() -> Outcome {
    let start = Instant::now();
    let level = 0.5;
    let clean = Image::filled(480, 480, level);
    let noisy = corrupt(&clean, &NoiseConfig::horizontal(3, 0.15, 11)).expect("noise");
    let sampler = Sampler::new(&noisy, SamplingOptions::default()).expect("sampler");
    let m2m_max = sampler
        .sample_all(StreamKey::root(3))
        .iter()
        .flat_map(|p| {
            [
                lag1_correlation(&p.x1, level),
                lag1_correlation(&p.x2, level),
            ]
        })
        .fold(f64::MIN, f64::max);
    let mut baseline_min = f64::MAX;
    let mut parts = Vec::new();
    for kind in BaselineKind::ALL {
        let pair = baseline_sample(&noisy, kind).expect("baseline");
        let rho = lag1_correlation(&pair.x1, level).min(lag1_correlation(&pair.x2, level));
        baseline_min = baseline_min.min(rho);
        parts.push(format!("{kind} {rho:.3}"));
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        m2m_max < 0.2 && baseline_min >= 0.5 && secs < 30.0,
        format!(
            "M2M max lag-1 rho {m2m_max:.3} (want < 0.2); {} (want >= 0.5)",
            parts.join(", ")
        ),
    )
}

fn metric_correctness() -> Outcome {
    let a = Image::filled(32, 32, 0.3);
    let b = Image::filled(32, 32, 0.4);
    let p = psnr(&a, &b).expect("psnr");
    let mut ok = (p - 20.0).abs() <= 1e-6;
    let mut worst_self = 0.0f64;
    let mut worst_transform = 0.0f64;
    for i in 0..20u64 {
        let key = StreamKey::root(900 + i);
        let (h, w) = (24 + (i as usize % 5) * 3, 30 + (i as usize % 4) * 5);
        let x = Image::from_fn(h, w, |r, c| key.uniform_at((r * w + c) as u64));
        let y = Image::from_fn(h, w, |r, c| {
            (x.get(r, c) + 0.1 * key.child(1).normal_at((r * w + c) as u64)).clamp(0.0, 1.0)
        });
        worst_self = worst_self.max((ssim(&x, &x).expect("ssim") - 1.0).abs());
        let (p0, s0) = (psnr(&x, &y).expect("psnr"), ssim(&x, &y).expect("ssim"));
        let transforms: [fn(&Image) -> Image; 3] = [
            Image::flip_horizontal,
            Image::flip_vertical,
            Image::rotate90,
        ];
        for t in transforms {
            let (tx, ty) = (t(&x), t(&y));
            worst_transform = worst_transform
                .max((psnr(&tx, &ty).expect("psnr") - p0).abs())
                .max((ssim(&tx, &ty).expect("ssim") - s0).abs());
        }
    }
    ok &= worst_self <= 1e-12 && worst_transform <= 1e-9;
    Outcome::new(
        ok,
        format!(
            "psnr {p:.7} dB, max |ssim(x,x) - 1| {worst_self:.1e}, max transform change {worst_transform:.1e}"
        ),
    )
}

fn medians(rows: &[BenchmarkRow], method: &str, ell: usize, sigma: f64) -> f64 {
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == method && r.ell == ell && (r.sigma - sigma).abs() < 1e-12)
        .map(|r| r.psnr_db)
        .collect();
    median(&vals).expect("rows present")
}

fn psnr_of(rows: &[BenchmarkRow], method: &str, ell: usize, sigma: f64, seed: u64) -> f64 {
    rows.iter()
        .find(|r| {
            r.method == method && r.ell == ell && (r.sigma - sigma).abs() < 1e-12 && r.seed == seed
        })
        .expect("row present")
        .psnr_db
}

fn desk_rows(
    ells: Vec<usize>,
    sigmas: Vec<f64>,
    methods: Vec<Method>,
    train: TrainConfig,
) -> Vec<BenchmarkRow> {
    let spec = BenchmarkSpec {
        ells,
        sigmas,
        methods,
        seeds: SEEDS.to_vec(),
        direction: (0, 1),
        train,
    };
    run_benchmark(&[("phantom128".to_string(), phantom(128, 128))], &spec).expect("benchmark")
}

fn ranking(rows: &[BenchmarkRow], secs: f64) -> Outcome {
    let m2m = Method::M2M.to_string();
    let mut pass = secs < 900.0;
    let mut parts = Vec::new();
    for ell in [3, 5] {
        for sigma in [0.10, 0.15] {
            let mm = medians(rows, &m2m, ell, sigma);
            let mz = medians(rows, "zsn2n", ell, sigma);
            let min_gain = SEEDS
                .iter()
                .map(|&s| {
                    psnr_of(rows, &m2m, ell, sigma, s) - psnr_of(rows, "noisy", ell, sigma, s)
                })
                .fold(f64::MAX, f64::min);
            pass &= mm - mz >= 2.0 && min_gain > 4.0;
            parts.push(format!(
                "ell {ell} sigma {sigma:.2}: M2M {mm:.2} vs ZS-N2N {mz:.2} dB, min gain over noisy {min_gain:.2}"
            ));
        }
    }
    Outcome::new(pass, parts.join("; "))
}

fn iid_sanity(rows: &[BenchmarkRow]) -> Outcome {
    let m2m = Method::M2M.to_string();
    let min_gain = SEEDS
        .iter()
        .map(|&s| psnr_of(rows, &m2m, 1, 0.1, s) - psnr_of(rows, "noisy", 1, 0.1, s))
        .fold(f64::MAX, f64::min);
    let mm = medians(rows, &m2m, 1, 0.1);
    let mz = medians(rows, "zsn2n", 1, 0.1);
    Outcome::new(
        min_gain >= 3.0 && (mm - mz).abs() <= 2.0,
        format!("min gain over noisy {min_gain:.2} dB; median M2M {mm:.2} vs ZS-N2N {mz:.2} dB (|diff| {:.2})", (mm - mz).abs()),
    )
}

fn ablations(full_rows: &[BenchmarkRow], rows: &[BenchmarkRow]) -> Outcome {
    let full = medians(full_rows, &Method::M2M.to_string(), 3, 0.1);
    let mut pass = true;
    let mut parts = vec![format!("full {full:.2}")];
    for a in [
        Ablation::PixelWise,
        Ablation::NoCenter,
        Ablation::NoRa,
        Ablation::NoRepeatInfer,
    ] {
        let med = medians(rows, &format!("m2m-{a}"), 3, 0.1);
        pass &= med < full;
        parts.push(format!("{a} {med:.2}"));
    }
    Outcome::new(pass, format!("median PSNR (dB): {}", parts.join(", ")))
}

fn determinism() -> Outcome {
    let clean = phantom(128, 128);
    let noisy = corrupt(&clean, &NoiseConfig::horizontal(3, 0.1, 0)).expect("noise");
    let train = TrainConfig {
        precision: Precision::F64,
        ..desk_config()
    };
    let run = |jobs: usize| -> Vec<Vec<u64>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("pool");
        pool.install(|| {
            [Method::M2M, Method::Zsn2n]
                .iter()
                .map(|m| {
                    let out = m.run(&noisy, &train).expect("run");
                    out.data().iter().map(|v| v.to_bits()).collect()
                })
                .collect()
        })
    };
    let one = run(1);
    let four = run(4);
    let same = one == four;
    Outcome::new(
        same,
        format!(
            "f64 M2M and ZS-N2N outputs with 1 and 4 threads are {}",
            if same { "bit-identical" } else { "different" }
        ),
    )
}

/// Criteria to run: all, or the comma-separated ids in `M2M_ACCEPTANCE_ONLY`.
fn selected(id: u32) -> bool {
    match std::env::var("M2M_ACCEPTANCE_ONLY") {
        Ok(list) if !list.trim().is_empty() => list.split(',').any(|s| s.trim().parse() == Ok(id)),
        _ => true,
    }
}

type Check = (u32, &'static str, fn() -> Outcome);

fn main() {
    let mut unexpected = Vec::new();
    let quick: [Check; 5] = [
        (1, "noise statistics", noise_statistics),
        (2, "sampling cardinality", sampling_cardinality),
        (3, "assignment unbiasedness", assignment_bias),
        (4, "gradient correctness", gradient_correctness),
        (5, "de-structuring", destructuring),
    ];
    for (id, name, run) in quick {
        if selected(id) {
            let t = Instant::now();
            report(id, name, t, run(), &mut unexpected);
        }
    }

    let with_refs = vec![Method::M2M, Method::Zsn2n, Method::Noisy];
    let mut rows6 = None;
    if selected(6) {
        let t = Instant::now();
        let rows = desk_rows(
            vec![3, 5],
            vec![0.10, 0.15],
            with_refs.clone(),
            desk_config(),
        );
        let secs = t.elapsed().as_secs_f64();
        report(
            6,
            "desk-scale ranking",
            t,
            ranking(&rows, secs),
            &mut unexpected,
        );
        rows6 = Some(rows);
    }
    if selected(7) {
        let t = Instant::now();
        let rows = desk_rows(vec![1], vec![0.10], with_refs, desk_config());
        report(7, "i.i.d. sanity", t, iid_sanity(&rows), &mut unexpected);
    }
    if selected(8) {
        let t = Instant::now();
        // the full method's runs are shared with criterion 6
        let full = rows6
            .unwrap_or_else(|| desk_rows(vec![3], vec![0.10], vec![Method::M2M], desk_config()));
        let variants = [
            Ablation::PixelWise,
            Ablation::NoCenter,
            Ablation::NoRa,
            Ablation::NoRepeatInfer,
        ]
        .map(|ablation| Method::M2m {
            scheme: InterpolationScheme::FirstOrder,
            ablation,
        })
        .to_vec();
        let rows = desk_rows(vec![3], vec![0.10], variants, desk_config());
        report(
            8,
            "ablation directionality",
            t,
            ablations(&full, &rows),
            &mut unexpected,
        );
    }
    if selected(9) {
        let t = Instant::now();
        report(
            9,
            "metric correctness",
            t,
            metric_correctness(),
            &mut unexpected,
        );
    }
    if selected(10) {
        let t = Instant::now();
        report(10, "determinism", t, determinism(), &mut unexpected);
    }

    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
