//! Flag, config-file and default precedence.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use dpweights::calibration::default_delta;
use dpweights::config::ConfigFile;
use dpweights::TrainingConfig;

use crate::args::TrainingArgs;
use crate::failure::{CliResult, Failure};

pub struct Resolver {
    file: ConfigFile,
}

impl Resolver {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let file = match path {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        Ok(Self { file })
    }

    /// The flag if given, else the first config key present, else `None`.
    pub fn pick<T>(&self, flag: Option<T>, keys: &[&str]) -> CliResult<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        for key in keys {
            if let Some(raw) = self.file.get(&[key]) {
                return raw
                    .parse()
                    .map(Some)
                    .map_err(|e| Failure::data(format!("config key `{key}`: `{raw}`: {e}")));
            }
        }
        Ok(None)
    }

    pub fn require<T>(&self, flag: Option<T>, keys: &[&str]) -> CliResult<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.pick(flag, keys)?.ok_or_else(|| {
            Failure::usage(format!(
                "missing --{} (flag or config key `{}`)",
                keys[0].replace('_', "-"),
                keys[0]
            ))
        })
    }

    pub fn or<T>(&self, flag: Option<T>, keys: &[&str], default: T) -> CliResult<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.pick(flag, keys)?.unwrap_or(default))
    }

    pub fn training(&self, a: &TrainingArgs) -> CliResult<TrainingConfig> {
        let cfg = TrainingConfig::new(
            self.require(a.epochs, &["epochs"])?,
            self.require(a.lr, &["lr", "learning_rate"])?,
            self.require(a.clip, &["clip", "clipping_norm"])?,
            self.require(a.dataset_size, &["dataset_size"])?,
            self.require(a.batch_size, &["batch_size"])?,
        )?;
        Ok(cfg)
    }

    /// Explicit delta, or `1/N^2`; the flag says which.
    pub fn delta(&self, flag: Option<f64>, cfg: &TrainingConfig) -> CliResult<(f64, bool)> {
        match self.pick(flag, &["delta"])? {
            Some(d) => Ok((d, false)),
            None => Ok((default_delta(cfg.dataset_size())?, true)),
        }
    }
}
