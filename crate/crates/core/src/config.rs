//! Flat `key = value` configuration with strict keys.
//!
//! Values resolve as command-line flags over file entries over defaults.
//! Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::noise::NoiseConfig;
use crate::sampling::InterpolationScheme;
use crate::trainer::{Precision, TrainConfig};

/// Keys understood by [`resolve_train_config`].
pub const TRAIN_KEYS: &[&str] = &[
    "epochs",
    "steps_per_epoch",
    "k",
    "lambda",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "scheme",
    "pixel_wise",
    "no_center",
    "no_ra",
    "no_repeat_infer",
    "seed",
    "precision",
];

/// Keys understood by [`resolve_noise_config`].
pub const NOISE_KEYS: &[&str] = &["p", "q", "ell", "sigma", "sigma0", "seed"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("config line {}: expected key = value", n + 1))
            })?;
            let key = key.trim().replace('-', "_");
            if !is_known(&key) {
                return Err(Error::invalid(format!(
                    "config line {}: unknown key '{key}'",
                    n + 1
                )));
            }
            if entries
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::invalid(format!(
                    "config line {}: duplicate key '{key}'",
                    n + 1
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn is_known(key: &str) -> bool {
    TRAIN_KEYS.contains(&key) || NOISE_KEYS.contains(&key)
}

/// Layered lookup: flags first, then the file.
struct Layers<'a> {
    file: Option<&'a ConfigFile>,
    flags: BTreeMap<String, &'a str>,
}

impl<'a> Layers<'a> {
    fn new(
        file: Option<&'a ConfigFile>,
        flags: &'a [(&'a str, String)],
        allowed: &[&str],
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (k, v) in flags {
            let key = k.replace('-', "_");
            if !allowed.contains(&key.as_str()) {
                return Err(Error::invalid(format!("unknown option '{k}'")));
            }
            map.insert(key, v.as_str());
        }
        Ok(Self { file, flags: map })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.flags
            .get(key)
            .copied()
            .or_else(|| self.file.and_then(|f| f.get(key)))
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::invalid(format!("invalid value '{v}' for key '{key}'"))),
        }
    }

    fn flag(&self, key: &str) -> Result<Option<bool>> {
        match self.raw(key) {
            None => Ok(None),
            Some("true" | "1" | "yes" | "on") => Ok(Some(true)),
            Some("false" | "0" | "no" | "off") => Ok(Some(false)),
            Some(v) => Err(Error::invalid(format!(
                "invalid boolean '{v}' for key '{key}'"
            ))),
        }
    }
}

/// Resolve a training configuration from defaults, an optional file and
/// `(key, value)` flag overrides.
pub fn resolve_train_config(
    file: Option<&ConfigFile>,
    flags: &[(&str, String)],
) -> Result<TrainConfig> {
    let l = Layers::new(file, flags, TRAIN_KEYS)?;
    let mut cfg = TrainConfig::default();
    if let Some(v) = l.parse("epochs")? {
        cfg.epochs = v;
    }
    if let Some(v) = l.parse("steps_per_epoch")? {
        cfg.steps_per_epoch = v;
    }
    let k: Option<usize> = l.parse("k")?;
    if let Some(v) = k {
        cfg.k_inference = v;
    }
    if let Some(v) = l.parse("lambda")? {
        cfg.lambda = v;
    }
    if let Some(v) = l.parse("lr")? {
        cfg.adam.learning_rate = v;
    }
    if let Some(v) = l.parse("beta1")? {
        cfg.adam.beta1 = v;
    }
    if let Some(v) = l.parse("beta2")? {
        cfg.adam.beta2 = v;
    }
    if let Some(v) = l.parse("eps")? {
        cfg.adam.epsilon = v;
    }
    if let Some(v) = l.raw("scheme") {
        cfg.sampling.scheme = v
            .parse::<InterpolationScheme>()
            .map_err(|_| Error::invalid(format!("invalid value '{v}' for key 'scheme'")))?;
    }
    if let Some(v) = l.flag("pixel_wise")? {
        cfg.sampling.block_wise = !v;
    }
    if let Some(v) = l.flag("no_center")? {
        cfg.sampling.include_center = !v;
    }
    if let Some(v) = l.flag("no_ra")? {
        cfg.sampling.random_assignment = !v;
    }
    if let Some(v) = l.flag("no_repeat_infer")? {
        cfg.use_repeated_inference = !v;
        if v && k.is_some_and(|k| k > 1) {
            return Err(Error::invalid("no_repeat_infer conflicts with k > 1"));
        }
    }
    if let Some(v) = l.parse("seed")? {
        cfg.seed = v;
    }
    if let Some(v) = l.raw("precision") {
        cfg.precision = v.parse::<Precision>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Resolve a noise configuration; the default is horizontal banding with
/// `ell = 3`, `sigma = 0.1`.
pub fn resolve_noise_config(
    file: Option<&ConfigFile>,
    flags: &[(&str, String)],
) -> Result<NoiseConfig> {
    let l = Layers::new(file, flags, NOISE_KEYS)?;
    let mut cfg = NoiseConfig::horizontal(3, 0.1, 0);
    if let Some(v) = l.parse("p")? {
        cfg.p = v;
    }
    if let Some(v) = l.parse("q")? {
        cfg.q = v;
    }
    if let Some(v) = l.parse("ell")? {
        cfg.ell = v;
    }
    if let Some(v) = l.parse("sigma")? {
        cfg.sigma_n = v;
    }
    if let Some(v) = l.parse("sigma0")? {
        cfg.sigma_0 = v;
    }
    if let Some(v) = l.parse("seed")? {
        cfg.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}
