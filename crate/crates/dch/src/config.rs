//! Run configuration as `key = value` lines.
//!
//! Keys are the long CLI flag names without the leading dashes (`batch-size`,
//! `top-k`, ...); underscores are accepted in place of dashes. `#` starts a
//! comment. The CLI applies the file first and its own flags afterwards, so a
//! flag always wins.

use std::path::{Path, PathBuf};

use dch_core::retrieval::{Method, QueryParams};
use dch_core::{Hyperparams, Objective, RatingScale};
use thiserror::Error;

use crate::io::RatingsFormat;

/// A rejected configuration entry.
#[derive(Debug, Error, PartialEq)]
#[error("{}{key}: {reason}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    /// Line in the config file, if the entry came from one.
    pub line: Option<usize>,
    /// Key involved.
    pub key: String,
    /// What was wrong.
    pub reason: String,
}

/// Training objective selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    /// Balanced binary-relaxed objective.
    Dch,
    /// Plain matrix factorization.
    Mf,
}

/// Everything one CLI run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Training hyperparameters.
    pub hyper: Hyperparams,
    /// Input path (ratings, factors or codes, depending on the subcommand).
    pub input: Option<PathBuf>,
    /// Output path or directory.
    pub output: Option<PathBuf>,
    /// Directory of a trained model.
    pub model: Option<PathBuf>,
    /// Ratings file layout.
    pub format: RatingsFormat,
    /// Rating scale of the input.
    pub scale: RatingScale,
    /// Share of ratings used for training; the rest is held out for
    /// `evaluate`. `None` lets each subcommand pick its default.
    pub train_fraction: Option<f64>,
    /// Objective for `train`.
    pub objective: ObjectiveKind,
    /// Run the threaded runtime instead of the deterministic simulation.
    pub threaded: bool,
    /// Retrieval method for `recommend`.
    pub method: Method,
    /// Retrieval knobs.
    pub query: QueryParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            hyper: Hyperparams {
                learning_rate: 0.05,
                ..Hyperparams::default()
            },
            input: None,
            output: None,
            model: None,
            format: RatingsFormat::Tsv,
            scale: RatingScale::FIVE_STARS,
            train_fraction: None,
            objective: ObjectiveKind::Dch,
            threaded: false,
            method: Method::Rank,
            query: QueryParams::default(),
        }
    }
}

/// Every accepted key.
pub const KEYS: [&str; 22] = [
    "input",
    "output",
    "model",
    "format",
    "scale",
    "train-fraction",
    "objective",
    "schedule",
    "k",
    "lambda",
    "alpha",
    "gamma",
    "batch-size",
    "workers",
    "servers",
    "staleness",
    "epochs",
    "seed",
    "method",
    "top-k",
    "radius",
    "subcodes",
];

fn num<T: std::str::FromStr>(value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse {value:?}"))
}

fn parse_scale(value: &str) -> Result<RatingScale, String> {
    if value == "binary" {
        return Ok(RatingScale::Binary);
    }
    let (min, max) = value
        .split_once('-')
        .ok_or_else(|| format!("expected `binary` or `MIN-MAX`, found {value:?}"))?;
    let (min, max): (f64, f64) = (num(min)?, num(max)?);
    if !(min < max) {
        return Err(format!("empty scale {value:?}"));
    }
    Ok(RatingScale::Stars { min, max })
}

impl RunConfig {
    /// Sets one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        let h = &mut self.hyper;
        let r: Result<(), String> = match key.as_str() {
            "input" => {
                self.input = Some(value.into());
                Ok(())
            }
            "output" => {
                self.output = Some(value.into());
                Ok(())
            }
            "model" => {
                self.model = Some(value.into());
                Ok(())
            }
            "format" => match value {
                "tsv" => {
                    self.format = RatingsFormat::Tsv;
                    Ok(())
                }
                "netflix" | "netflix-prize" => {
                    self.format = RatingsFormat::NetflixPrize;
                    Ok(())
                }
                _ => Err(format!("unknown format {value:?}")),
            },
            "scale" => parse_scale(value).map(|s| self.scale = s),
            "train-fraction" => num(value).map(|v| self.train_fraction = Some(v)),
            "objective" => match value {
                "dch" => {
                    self.objective = ObjectiveKind::Dch;
                    Ok(())
                }
                "mf" => {
                    self.objective = ObjectiveKind::Mf;
                    Ok(())
                }
                _ => Err(format!("unknown objective {value:?}")),
            },
            "schedule" => match value {
                "deterministic" => {
                    self.threaded = false;
                    Ok(())
                }
                "threaded" => {
                    self.threaded = true;
                    Ok(())
                }
                _ => Err(format!("unknown schedule {value:?}")),
            },
            "k" => num(value).map(|v| h.code_bits = v),
            "lambda" => num(value).map(|v| h.lambda = v),
            "alpha" => num(value).map(|v| h.learning_rate = v),
            "gamma" => num(value).map(|v| h.gamma = v),
            "batch-size" => num(value).map(|v| h.batch_size = v),
            "workers" => num(value).map(|v| h.workers = v),
            "servers" => num(value).map(|v| h.servers = v),
            "staleness" => num(value).map(|v| h.sync_period = v),
            "epochs" => num(value).map(|v| h.epochs = v),
            "seed" => num(value).map(|v| h.seed = v),
            "method" => value
                .parse::<Method>()
                .map(|m| self.method = m)
                .map_err(|e| e.to_string()),
            "top-k" => num(value).map(|v| self.query.top_k = v),
            "radius" => num(value).map(|v| self.query.radius = v),
            "subcodes" => num(value).map(|v| self.query.subcodes = v),
            _ => Err("unknown key".to_string()),
        };
        r.map_err(|reason| ConfigError {
            line: None,
            key,
            reason,
        })
    }

    /// Applies every `key = value` line of `text`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError {
                    line: Some(n + 1),
                    key: line.to_string(),
                    reason: "expected key = value".into(),
                });
            };
            self.set(key, value).map_err(|e| ConfigError {
                line: Some(n + 1),
                ..e
            })?;
        }
        Ok(())
    }

    /// Reads and applies a config file.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            key: path.display().to_string(),
            reason: e.to_string(),
        })?;
        self.apply_text(&text)
    }

    /// Objective with the configured `lambda`.
    pub fn objective(&self) -> Objective {
        let lambda = self.hyper.lambda;
        match self.objective {
            ObjectiveKind::Dch => Objective::Dch { lambda },
            ObjectiveKind::Mf => Objective::MatrixFactorization { lambda },
        }
    }
}
