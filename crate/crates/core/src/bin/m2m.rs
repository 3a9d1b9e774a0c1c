use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use m2m::benchmark::{BenchmarkSpec, Method};
use m2m::cli::{evaluate, execute, replay, Invocation};
use m2m::config::{resolve_noise_config, resolve_train_config, ConfigFile};
use m2m::io::BitDepth;
use m2m::sampling::{InterpolationScheme, SamplingOptions};
use m2m::trainer::Ablation;
use m2m::{Error, SamplingPosition};

#[derive(Parser)]
#[command(
    name = "m2m",
    version,
    about = "Zero-shot denoising of structured noise"
)]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "M2M_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the built-in synthetic test image.
    Phantom {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 8)]
        bits: u32,
    },
    /// Corrupt a clean image with directionally correlated noise.
    AddNoise(AddNoiseArgs),
    /// Write the sub-image pairs of one or all sampling positions.
    Sample(SampleArgs),
    /// Train on a noisy image and denoise it.
    Denoise(DenoiseArgs),
    /// Denoise with one ablation switch flipped.
    Ablate {
        #[arg(long)]
        variant: Ablation,
        #[command(flatten)]
        denoise: DenoiseArgs,
    },
    /// Print PSNR and SSIM of a test image against a reference.
    Evaluate {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Grid benchmark over noise settings, methods and seeds.
    Benchmark(BenchmarkArgs),
    /// Re-run the command recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Args)]
struct AddNoiseArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    p: Option<String>,
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    ell: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    sigma0: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long, default_value_t = 8)]
    bits: u32,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "1st")]
    scheme: InterpolationScheme,
    /// tl, t, tr, l, c, r, bl, b, br or all.
    #[arg(long, default_value = "all")]
    position: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    pixel_wise: bool,
    #[arg(long)]
    no_center: bool,
    #[arg(long)]
    no_ra: bool,
    #[arg(long, default_value_t = 8)]
    bits: u32,
}

/// Training flags. Values stay strings so the config layer reports bad
/// numbers with their key.
#[derive(Args, Clone)]
struct TrainArgs {
    /// Flat key = value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    steps_per_epoch: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// f32 (fast) or f64 (bit-reproducible reference).
    #[arg(long)]
    precision: Option<String>,
    #[arg(long)]
    pixel_wise: bool,
    #[arg(long)]
    no_center: bool,
    #[arg(long)]
    no_ra: bool,
    #[arg(long)]
    no_repeat_infer: bool,
}

impl TrainArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let values = [
            ("scheme", &self.scheme),
            ("epochs", &self.epochs),
            ("steps_per_epoch", &self.steps_per_epoch),
            ("k", &self.k),
            ("lambda", &self.lambda),
            ("lr", &self.lr),
            ("seed", &self.seed),
            ("precision", &self.precision),
        ];
        for (key, v) in values {
            if let Some(v) = v {
                out.push((key, v.clone()));
            }
        }
        let switches = [
            ("pixel_wise", self.pixel_wise),
            ("no_center", self.no_center),
            ("no_ra", self.no_ra),
            ("no_repeat_infer", self.no_repeat_infer),
        ];
        for (key, on) in switches {
            if on {
                out.push((key, "true".to_string()));
            }
        }
        out
    }

    fn resolve(&self, extra: &[(&'static str, String)]) -> m2m::Result<m2m::trainer::TrainConfig> {
        let file = self.config.as_deref().map(ConfigFile::load).transpose()?;
        let mut flags = self.overrides();
        flags.extend_from_slice(extra);
        resolve_train_config(file.as_ref(), &flags)
    }
}

#[derive(Args, Clone)]
struct DenoiseArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    bits: u32,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Directory of clean .pgm/.png images; the built-in phantom if omitted.
    #[arg(long)]
    clean_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,7")]
    ell_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.10,0.15")]
    sigma_list: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "m2m-1st,zsn2n")]
    methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    train: TrainArgs,
}

fn bit_depth(bits: u32) -> m2m::Result<BitDepth> {
    BitDepth::from_bits(bits)
}

fn run(cli: Cli) -> m2m::Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::InvalidArgument("--jobs must be >= 1".into()));
        }
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    let (inv, invoked_as) = match cli.command {
        Command::Phantom { output, size, bits } => (
            Invocation::Phantom {
                output,
                size,
                bit_depth: bit_depth(bits)?,
            },
            "phantom",
        ),
        Command::AddNoise(a) => {
            let file = a.config.as_deref().map(ConfigFile::load).transpose()?;
            let mut flags = Vec::new();
            for (key, v) in [
                ("p", &a.p),
                ("q", &a.q),
                ("ell", &a.ell),
                ("sigma", &a.sigma),
                ("sigma0", &a.sigma0),
                ("seed", &a.seed),
            ] {
                if let Some(v) = v {
                    flags.push((key, v.clone()));
                }
            }
            let noise = resolve_noise_config(file.as_ref(), &flags)?;
            (
                Invocation::AddNoise {
                    input: a.input,
                    output: a.output,
                    noise,
                    bit_depth: bit_depth(a.bits)?,
                },
                "add-noise",
            )
        }
        Command::Sample(a) => {
            let positions = if a.position == "all" {
                SamplingPosition::ALL.to_vec()
            } else {
                vec![a.position.parse::<SamplingPosition>()?]
            };
            let sampling = SamplingOptions {
                scheme: a.scheme,
                block_wise: !a.pixel_wise,
                include_center: !a.no_center,
                random_assignment: !a.no_ra,
            };
            if a.pixel_wise && a.position != "c" {
                return Err(Error::InvalidArgument(
                    "--pixel-wise samples full-size pairs at position c only".into(),
                ));
            }
            (
                Invocation::Sample {
                    input: a.input,
                    out_dir: a.out_dir,
                    sampling,
                    positions,
                    seed: a.seed,
                    bit_depth: bit_depth(a.bits)?,
                },
                "sample",
            )
        }
        Command::Denoise(a) => (denoise_invocation(&a, &[])?, "denoise"),
        Command::Ablate { variant, denoise } => {
            let key = match variant {
                Ablation::Full => None,
                Ablation::PixelWise => Some("pixel_wise"),
                Ablation::NoCenter => Some("no_center"),
                Ablation::NoRa => Some("no_ra"),
                Ablation::NoRepeatInfer => Some("no_repeat_infer"),
            };
            let extra: Vec<_> = key.map(|k| (k, "true".to_string())).into_iter().collect();
            (denoise_invocation(&denoise, &extra)?, "ablate")
        }
        Command::Evaluate { reference, test } => {
            let report = evaluate(&reference, &test)?;
            println!(
                "{}",
                serde_json::to_string(&report).expect("metric report serializes")
            );
            return Ok(());
        }
        Command::Benchmark(a) => {
            let spec = BenchmarkSpec {
                ells: a.ell_list,
                sigmas: a.sigma_list,
                methods: a.methods,
                seeds: a.seeds,
                direction: (0, 1),
                train: a.train.resolve(&[])?,
            };
            (
                Invocation::Benchmark {
                    clean_dir: a.clean_dir,
                    spec,
                    out: a.out,
                },
                "benchmark",
            )
        }
        Command::Replay { manifest } => {
            let report = replay(&manifest)?;
            let status = match report.identical {
                Some(true) => "identical",
                Some(false) => "differs",
                None => "no-previous-output",
            };
            println!("replayed {} ({status})", report.manifest.invocation.name());
            return Ok(());
        }
    };
    let manifest = execute(&inv, invoked_as)?;
    for out in &manifest.outputs {
        println!("wrote {}", out.display());
    }
    println!("wrote {}", inv.manifest_path().display());
    Ok(())
}

fn denoise_invocation(
    a: &DenoiseArgs,
    extra: &[(&'static str, String)],
) -> m2m::Result<Invocation> {
    if !a.input.is_file() {
        return Err(Error::Io {
            path: a.input.clone(),
            reason: "input file not found".into(),
        });
    }
    Ok(Invocation::Denoise {
        input: a.input.clone(),
        output: a.output.clone(),
        train: a.train.resolve(extra)?,
        checkpoint_dir: a.checkpoint_dir.clone(),
        bit_depth: bit_depth(a.bits)?,
    })
}

/// One-line JSON error on stderr.
fn report(kind: &str, message: &str) {
    let line = serde_json::json!({ "error": kind, "message": message.replace('\n', " ") });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("usage error");
            report("usage", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = match &e {
                Error::InvalidArgument(_) => ("invalid-argument", 2),
                Error::Io { .. } => ("io", 2),
                Error::DegenerateInput(_) => ("degenerate-input", 1),
                Error::Training(_) => ("training", 1),
            };
            report(kind, &e.to_string());
            ExitCode::from(code)
        }
    }
}
