//! Command execution behind the `m2m` binary.
//!
//! Every artifact-producing command is an [`Invocation`] holding its fully
//! resolved configuration. Executing it writes the artifacts and returns a
//! [`RunManifest`] that embeds the invocation, so a manifest can be replayed.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::benchmark::{run_benchmark, write_csv_file, BenchmarkRow, BenchmarkSpec};
use crate::error::{Error, Result};
use crate::image::{Image, SamplingPosition};
use crate::io::{load_image, save_image_with, BitDepth};
use crate::metrics::MetricReport;
use crate::noise::{corrupt, NoiseConfig};
use crate::phantom::phantom;
use crate::rng::StreamKey;
use crate::sampling::{Sampler, SamplingOptions};
use crate::trainer::{denoise, EpochLoss, TrainConfig};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Name under which built-in phantom images appear in reports.
pub const PHANTOM_NAME: &str = "phantom128";

/// A fully resolved, replayable command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Invocation {
    Phantom {
        output: PathBuf,
        size: usize,
        bit_depth: BitDepth,
    },
    AddNoise {
        input: PathBuf,
        output: PathBuf,
        noise: NoiseConfig,
        bit_depth: BitDepth,
    },
    Sample {
        input: PathBuf,
        out_dir: PathBuf,
        sampling: SamplingOptions,
        positions: Vec<SamplingPosition>,
        seed: u64,
        bit_depth: BitDepth,
    },
    Denoise {
        input: PathBuf,
        output: PathBuf,
        train: TrainConfig,
        checkpoint_dir: Option<PathBuf>,
        bit_depth: BitDepth,
    },
    Benchmark {
        /// Directory of clean images; the built-in phantom when absent.
        clean_dir: Option<PathBuf>,
        spec: BenchmarkSpec,
        out: PathBuf,
    },
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Phantom { .. } => "phantom",
            Self::AddNoise { .. } => "add-noise",
            Self::Sample { .. } => "sample",
            Self::Denoise { .. } => "denoise",
            Self::Benchmark { .. } => "benchmark",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Self::Phantom { .. } => 0,
            Self::AddNoise { noise, .. } => noise.seed,
            Self::Sample { seed, .. } => *seed,
            Self::Denoise { train, .. } => train.seed,
            Self::Benchmark { spec, .. } => spec.seeds.first().copied().unwrap_or(0),
        }
    }

    /// Where the manifest of this invocation is written.
    pub fn manifest_path(&self) -> PathBuf {
        match self {
            Self::Sample { out_dir, .. } => out_dir.join("manifest.json"),
            Self::Phantom { output, .. }
            | Self::AddNoise { output, .. }
            | Self::Denoise { output, .. }
            | Self::Benchmark { out: output, .. } => sidecar_path(output),
        }
    }
}

/// `path` with `.json` appended, e.g. `out.pgm` -> `out.pgm.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// Command as typed, e.g. `ablate` for an aliased `denoise`.
    pub invoked_as: String,
    pub seed: u64,
    pub invocation: Invocation,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_trace: Option<Vec<EpochLoss>>,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::io(path, format!("invalid manifest: {e}")))
    }
}

/// Run `inv`, write its artifacts and its manifest. Returns the manifest.
pub fn execute(inv: &Invocation, invoked_as: &str) -> Result<RunManifest> {
    let start = Instant::now();
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    let mut notes = Vec::new();
    let mut loss_trace = None;
    match inv {
        Invocation::Phantom {
            output,
            size,
            bit_depth,
        } => {
            if *size < 3 {
                return Err(Error::invalid(format!(
                    "phantom size must be >= 3, got {size}"
                )));
            }
            save_image_with(&phantom(*size, *size), output, *bit_depth)?;
            outputs.push(output.clone());
        }
        Invocation::AddNoise {
            input,
            output,
            noise,
            bit_depth,
        } => {
            let clean = load_image(input)?;
            inputs.push(input.clone());
            let noisy = corrupt(&clean, noise)?;
            save_image_with(&noisy, output, *bit_depth)?;
            outputs.push(output.clone());
            if noise.ell == 1 {
                notes.push("ell=1: the noise is i.i.d. Gaussian".into());
            }
        }
        Invocation::Sample {
            input,
            out_dir,
            sampling,
            positions,
            seed,
            bit_depth,
        } => {
            let noisy = load_image(input)?;
            inputs.push(input.clone());
            let sampler = Sampler::new(&noisy, *sampling)?;
            let round = StreamKey::root(*seed);
            std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
            for &pos in positions {
                let pair = sampler.sample(pos, round.child(pos.index() as u64));
                for (half, img) in [("x1", &pair.x1), ("x2", &pair.x2)] {
                    let path = out_dir.join(format!("{half}_{}.pgm", pos.name()));
                    save_image_with(img, &path, *bit_depth)?;
                    outputs.push(path);
                }
            }
            let hat = sampler.destructure(round);
            let path = out_dir.join("destructured.pgm");
            save_image_with(&hat, &path, *bit_depth)?;
            outputs.push(path);
            let (oh, ow) = sampler.output_dims();
            notes.push(format!(
                "input {}x{}, padded {}x{}, sub-images {oh}x{ow}; position p reads round key child(p.index)",
                noisy.height(),
                noisy.width(),
                sampler.padded().padded_height(),
                sampler.padded().padded_width()
            ));
        }
        Invocation::Denoise {
            input,
            output,
            train,
            checkpoint_dir,
            bit_depth,
        } => {
            let noisy = load_image(input)?;
            inputs.push(input.clone());
            let result = denoise(&noisy, train)?;
            save_image_with(&result.output, output, *bit_depth)?;
            outputs.push(output.clone());
            if let Some(dir) = checkpoint_dir {
                result.networks.save_checkpoints(dir, train, result.steps)?;
                outputs.push(dir.clone());
            }
            loss_trace = Some(result.loss_trace);
        }
        Invocation::Benchmark {
            clean_dir,
            spec,
            out,
        } => {
            let images = match clean_dir {
                Some(dir) => {
                    inputs.push(dir.clone());
                    load_dir(dir)?
                }
                None => vec![(PHANTOM_NAME.to_string(), phantom(128, 128))],
            };
            let rows: Vec<BenchmarkRow> = run_benchmark(&images, spec)?;
            write_csv_file(&rows, out)?;
            outputs.push(out.clone());
            notes.extend(spec.notes());
            notes.push("the seconds column is wall time and varies between runs".into());
        }
    }
    let manifest = RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        invoked_as: invoked_as.to_string(),
        seed: inv.seed(),
        invocation: inv.clone(),
        inputs,
        outputs,
        seconds: start.elapsed().as_secs_f64(),
        notes,
        loss_trace,
    };
    manifest.save(&inv.manifest_path())?;
    Ok(manifest)
}

/// All `.pgm`/`.png` files of `dir`, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<(String, Image)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("png"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::io(dir, "no .pgm or .png images found"));
    }
    paths
        .into_iter()
        .map(|p| {
            let name = p
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("image")
                .to_string();
            load_image(&p).map(|img| (name, img))
        })
        .collect()
}

/// Compare two images for `evaluate`.
pub fn evaluate(reference: &Path, test: &Path) -> Result<MetricReport> {
    let r = load_image(reference)?;
    let t = load_image(test)?;
    MetricReport::compute(
        &reference.display().to_string(),
        &r,
        &test.display().to_string(),
        &t,
    )
}

/// Outcome of replaying a manifest.
#[derive(Clone, Debug, Serialize)]
pub struct ReplayReport {
    pub manifest: RunManifest,
    /// Whether the previous output files were reproduced byte for byte;
    /// `None` when none existed.
    pub identical: Option<bool>,
}

/// Re-execute the invocation of a manifest and report whether every
/// previously present output file came out byte-identical.
pub fn replay(manifest_path: &Path) -> Result<ReplayReport> {
    let old = RunManifest::load(manifest_path)?;
    let files: Vec<PathBuf> = old
        .outputs
        .iter()
        .filter(|p| p.is_file())
        .cloned()
        .collect();
    let before: Vec<Vec<u8>> = files
        .iter()
        .map(|p| std::fs::read(p).map_err(|e| Error::io(p, e)))
        .collect::<Result<_>>()?;
    let manifest = execute(&old.invocation, "replay")?;
    let identical = if files.is_empty() {
        None
    } else {
        let mut same = true;
        for (p, b) in files.iter().zip(&before) {
            same &= std::fs::read(p).map_err(|e| Error::io(p, e))? == *b;
        }
        Some(same)
    };
    Ok(ReplayReport {
        manifest,
        identical,
    })
}
