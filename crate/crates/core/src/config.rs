//! Run configuration: a TOML file merged with command-line overrides.
//!
//! ```toml
//! input = "data.csv"
//! outcome = "y"          # column name, or a 0-based index
//! output = "report.json"
//! split_fraction = 0.8   # optional train/holdout split
//! seed = 7
//! workers = 0            # 0 = all available threads
//!
//! [harvest]
//! alpha = 0.05
//! subset_size = 15
//! n_subsets = 4000       # or target_coverage = 100
//! adjustment = "none"    # none | bonferroni | bh
//! rounds = 1
//!
//! [harvest.learner]
//! kind = "ols"           # ols | logistic
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::OutcomeColumn;
use crate::harvest::HarvestConfig;
use crate::learners::{LearnerKind, LearnerSpec};
use crate::ranktest::Adjustment;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{field}: {message}")]
    Field { field: &'static str, message: String },
}

fn field_error(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field,
        message: message.into(),
    }
}

/// Contents of a config file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub input: Option<PathBuf>,
    pub outcome: Option<OutcomeColumn>,
    pub output: Option<PathBuf>,
    pub split_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    /// Used by the reproduction study only.
    pub replications: Option<usize>,
    #[serde(default)]
    pub harvest: HarvestSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarvestSection {
    pub alpha: Option<f64>,
    pub subset_size: Option<usize>,
    pub n_subsets: Option<usize>,
    pub target_coverage: Option<f64>,
    pub adjustment: Option<Adjustment>,
    pub rounds: Option<usize>,
    pub learner: Option<LearnerSpec>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

/// Values given on the command line; they take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub outcome: Option<OutcomeColumn>,
    pub output: Option<PathBuf>,
    pub split_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub replications: Option<usize>,
    pub alpha: Option<f64>,
    pub subset_size: Option<usize>,
    pub n_subsets: Option<usize>,
    pub target_coverage: Option<f64>,
    pub adjustment: Option<Adjustment>,
    pub rounds: Option<usize>,
    pub learner: Option<LearnerKind>,
}

/// File values with overrides applied on top.
#[derive(Debug, Clone, PartialEq)]
pub struct Merged {
    pub file: ConfigFile,
}

impl Merged {
    pub fn new(mut file: ConfigFile, o: &Overrides) -> Self {
        fn set<T: Clone>(slot: &mut Option<T>, value: &Option<T>) {
            if value.is_some() {
                *slot = value.clone();
            }
        }
        set(&mut file.input, &o.input);
        set(&mut file.outcome, &o.outcome);
        set(&mut file.output, &o.output);
        set(&mut file.split_fraction, &o.split_fraction);
        set(&mut file.seed, &o.seed);
        set(&mut file.workers, &o.workers);
        set(&mut file.replications, &o.replications);
        let h = &mut file.harvest;
        set(&mut h.alpha, &o.alpha);
        set(&mut h.subset_size, &o.subset_size);
        set(&mut h.adjustment, &o.adjustment);
        set(&mut h.rounds, &o.rounds);
        // A count on one side replaces a coverage target on the other.
        if o.n_subsets.is_some() {
            h.n_subsets = o.n_subsets;
            h.target_coverage = None;
        }
        if o.target_coverage.is_some() {
            h.target_coverage = o.target_coverage;
            h.n_subsets = None;
        }
        if let Some(kind) = o.learner {
            let spec = h.learner.get_or_insert_with(LearnerSpec::default);
            spec.kind = kind;
        }
        Self { file }
    }

    /// Harvest settings on top of `base`; validation errors name the field.
    pub fn harvest_config(&self, base: HarvestConfig) -> Result<HarvestConfig, ConfigError> {
        let h = &self.file.harvest;
        let mut cfg = base;
        if let Some(a) = h.alpha {
            cfg.alpha = a;
        }
        if let Some(k) = h.subset_size {
            cfg.subset_size = k;
        }
        match (h.n_subsets, h.target_coverage) {
            (Some(_), Some(_)) => {
                return Err(field_error(
                    "harvest.n_subsets",
                    "set only one of n_subsets and target_coverage",
                ))
            }
            (Some(n), None) => {
                cfg.n_subsets = Some(n);
                cfg.target_coverage = None;
            }
            (None, Some(c)) => {
                cfg.target_coverage = Some(c);
                cfg.n_subsets = None;
            }
            (None, None) => {}
        }
        if let Some(adj) = h.adjustment {
            cfg.adjustment = adj;
        }
        if let Some(r) = h.rounds {
            cfg.rounds = r;
        }
        if let Some(l) = h.learner {
            cfg.learner = l;
        }
        if let Some(s) = self.file.seed {
            cfg.seed = s;
        }
        validate_harvest(&cfg)?;
        Ok(cfg)
    }
}

fn validate_harvest(cfg: &HarvestConfig) -> Result<(), ConfigError> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(field_error(
            "alpha",
            format!("must be greater than 0 and less than 1, got {}", cfg.alpha),
        ));
    }
    if cfg.subset_size < 2 {
        return Err(field_error("k", format!("must be at least 2, got {}", cfg.subset_size)));
    }
    if let Some(n) = cfg.n_subsets {
        if n < 2 {
            return Err(field_error("n_subsets", format!("must be at least 2, got {n}")));
        }
    }
    if let Some(c) = cfg.target_coverage {
        if !(c > 0.0 && c.is_finite()) {
            return Err(field_error("coverage", format!("must be positive, got {c}")));
        }
    }
    if cfg.rounds == 0 {
        return Err(field_error("rounds", "must be at least 1"));
    }
    cfg.learner
        .validate()
        .map_err(|m| field_error("harvest.learner", m))?;
    cfg.validate().map_err(|e| field_error("harvest", e.to_string()))
}

pub const DEFAULT_SCREEN_OUTPUT: &str = "harvest-report.json";

/// Everything a screening run needs, after merging and validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenConfig {
    pub input: PathBuf,
    pub outcome: OutcomeColumn,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_fraction: Option<f64>,
    pub harvest: HarvestConfig,
    /// Excluded from reports so output does not depend on where it is written.
    #[serde(skip)]
    pub output: PathBuf,
    /// Excluded from reports; results do not depend on it.
    #[serde(skip)]
    pub workers: usize,
}

impl ScreenConfig {
    pub fn resolve(merged: &Merged) -> Result<Self, ConfigError> {
        let f = &merged.file;
        let input = f
            .input
            .clone()
            .ok_or_else(|| field_error("input", "no input CSV given"))?;
        let outcome = f
            .outcome
            .clone()
            .ok_or_else(|| field_error("outcome", "no outcome column given"))?;
        if let Some(fr) = f.split_fraction {
            if !(fr > 0.0 && fr < 1.0) {
                return Err(field_error(
                    "split_fraction",
                    format!("must lie strictly between 0 and 1, got {fr}"),
                ));
            }
        }
        let output = f
            .output
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_SCREEN_OUTPUT));
        check_output_dir(&output)?;
        Ok(Self {
            input,
            outcome,
            split_fraction: f.split_fraction,
            harvest: merged.harvest_config(HarvestConfig::default())?,
            output,
            workers: f.workers.unwrap_or(0),
        })
    }
}

/// The directory an output file is written to must already exist.
pub fn check_output_dir(output: &Path) -> Result<(), ConfigError> {
    match output.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(field_error(
            "output",
            format!("directory {} does not exist", dir.display()),
        )),
        _ => Ok(()),
    }
}
