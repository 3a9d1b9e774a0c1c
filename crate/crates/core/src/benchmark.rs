//! Grid benchmark over noise settings, methods and seeds with CSV output.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::zsn2n_denoise;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::{format_db, psnr, ssim};
use crate::noise::{corrupt, NoiseConfig};
use crate::sampling::InterpolationScheme;
use crate::trainer::{denoise, Ablation, TrainConfig};

/// A denoiser under test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    M2m {
        scheme: InterpolationScheme,
        ablation: Ablation,
    },
    Zsn2n,
    /// The noisy input itself, as a reference row.
    Noisy,
}

impl Method {
    pub const M2M: Self = Self::M2m {
        scheme: InterpolationScheme::FirstOrder,
        ablation: Ablation::Full,
    };

    /// Run on `noisy` with the shared training settings.
    pub fn run(self, noisy: &Image, train: &TrainConfig) -> Result<Image> {
        match self {
            Self::M2m { scheme, ablation } => {
                let mut cfg = *train;
                cfg.sampling.scheme = scheme;
                ablation.apply(&mut cfg);
                Ok(denoise(noisy, &cfg)?.output)
            }
            Self::Zsn2n => zsn2n_denoise(noisy, train),
            Self::Noisy => Ok(noisy.clone()),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::M2m { scheme, ablation } => match ablation {
                Ablation::Full => write!(f, "m2m-{scheme}"),
                other => write!(f, "m2m-{other}"),
            },
            Self::Zsn2n => f.write_str("zsn2n"),
            Self::Noisy => f.write_str("noisy"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// `m2m`, `m2m-<scheme>`, `m2m-<variant>` (first-order), `zsn2n`, `noisy`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m2m" => return Ok(Self::M2M),
            "zsn2n" => return Ok(Self::Zsn2n),
            "noisy" => return Ok(Self::Noisy),
            _ => {}
        }
        let rest = s
            .strip_prefix("m2m-")
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))?;
        if let Ok(scheme) = rest.parse::<InterpolationScheme>() {
            return Ok(Self::M2m {
                scheme,
                ablation: Ablation::Full,
            });
        }
        let ablation = rest
            .parse::<Ablation>()
            .map_err(|_| Error::invalid(format!("unknown method '{s}'")))?;
        Ok(Self::M2m {
            scheme: InterpolationScheme::FirstOrder,
            ablation,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub ells: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Correlation direction of the synthesized noise.
    pub direction: (i64, i64),
    /// Shared by every trained method; its seed is replaced per row.
    pub train: TrainConfig,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            ells: vec![1, 3, 5, 7],
            sigmas: vec![0.05, 0.10, 0.15],
            methods: vec![Method::M2M, Method::Zsn2n],
            seeds: vec![0],
            direction: (0, 1),
            train: TrainConfig::default(),
        }
    }
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ells.is_empty()
            || self.sigmas.is_empty()
            || self.methods.is_empty()
            || self.seeds.is_empty()
        {
            return Err(Error::invalid("benchmark grid has an empty axis"));
        }
        self.train.validate()
    }

    /// Noise of one cell. All methods of a cell see the same noisy image.
    pub fn noise_config(&self, ell: usize, sigma: f64, seed: u64) -> NoiseConfig {
        NoiseConfig {
            p: self.direction.0,
            q: self.direction.1,
            ell,
            sigma_n: sigma,
            sigma_0: 1.0,
            seed,
        }
    }

    /// Notes written next to the report.
    pub fn notes(&self) -> Vec<String> {
        let mut notes = Vec::new();
        if self.ells.contains(&1) {
            notes.push("ell=1: the averaging kernel has length one, so the noise degenerates to i.i.d. Gaussian noise".to_string());
        }
        notes
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub image: String,
    pub ell: usize,
    pub sigma: f64,
    pub method: String,
    pub seed: u64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub seconds: f64,
}

/// Run every (image, ell, sigma, seed) cell with every method. Cells run in
/// parallel; rows come back in grid order.
pub fn run_benchmark(
    images: &[(String, Image)],
    spec: &BenchmarkSpec,
) -> Result<Vec<BenchmarkRow>> {
    if images.is_empty() {
        return Err(Error::invalid("benchmark needs at least one clean image"));
    }
    spec.validate()?;
    let mut cells = Vec::new();
    for (ii, _) in images.iter().enumerate() {
        for &ell in &spec.ells {
            for &sigma in &spec.sigmas {
                for &seed in &spec.seeds {
                    cells.push((ii, ell, sigma, seed));
                }
            }
        }
    }
    let per_cell: Vec<Vec<BenchmarkRow>> = cells
        .par_iter()
        .map(|&(ii, ell, sigma, seed)| {
            let (name, clean) = &images[ii];
            let noisy = corrupt(clean, &spec.noise_config(ell, sigma, seed))?;
            let train = TrainConfig { seed, ..spec.train };
            spec.methods
                .iter()
                .map(|&method| {
                    let start = Instant::now();
                    let out = method.run(&noisy, &train)?;
                    let seconds = start.elapsed().as_secs_f64();
                    Ok(BenchmarkRow {
                        image: name.clone(),
                        ell,
                        sigma,
                        method: method.to_string(),
                        seed,
                        psnr_db: psnr(clean, &out)?,
                        ssim: ssim(clean, &out)?,
                        seconds,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_cell.into_iter().flatten().collect())
}

pub const CSV_HEADER: [&str; 8] = [
    "image", "ell", "sigma", "method", "seed", "psnr_db", "ssim", "seconds",
];

pub fn write_csv<W: std::io::Write>(rows: &[BenchmarkRow], out: W) -> Result<()> {
    let to_err = |e: csv::Error| Error::invalid(format!("CSV write failed: {e}"));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER).map_err(to_err)?;
    for r in rows {
        w.write_record([
            r.image.clone(),
            r.ell.to_string(),
            format!("{:.2}", r.sigma),
            r.method.clone(),
            r.seed.to_string(),
            format_db(r.psnr_db),
            format!("{:.6}", r.ssim),
            format!("{:.3}", r.seconds),
        ])
        .map_err(to_err)?;
    }
    w.flush()
        .map_err(|e| Error::invalid(format!("CSV write failed: {e}")))
}

pub fn write_csv_file(rows: &[BenchmarkRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(rows, std::io::BufWriter::new(file))
}

/// Median PSNR of `method` over the rows of one (ell, sigma) cell.
pub fn median_psnr(rows: &[BenchmarkRow], method: &str, ell: usize, sigma: f64) -> Option<f64> {
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == method && r.ell == ell && (r.sigma - sigma).abs() < 1e-12)
        .map(|r| r.psnr_db)
        .collect();
    median(&vals)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}
