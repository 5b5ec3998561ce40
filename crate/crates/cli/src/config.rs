//! Flat `key = value` experiment configuration with defaults and
//! command-line overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use tnid_core::data::ResizeFilter;
use tnid_core::grad::{ForwardPath, LossConfig, LrSchedule, Optimizer};
use tnid_core::{DegreeSet, Execution, InitScheme, ModelKind};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub data_dir: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub filter: ResizeFilter,
    pub side: usize,
    pub kind: ModelKind,
    pub bond: usize,
    pub classes: usize,
    pub degrees: String,
    pub init: String,
    pub init_sigma: f64,
    pub optimizer: String,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub train_limit: usize,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub execution: Execution,
    pub j_max: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: "mnist".into(),
            data_dir: None,
            cache_dir: PathBuf::from("data/cache"),
            filter: ResizeFilter::Box,
            side: 8,
            kind: ModelKind::Tr,
            bond: 20,
            classes: 10,
            degrees: "full".into(),
            init: "identity".into(),
            init_sigma: 1e-2,
            optimizer: "adam".into(),
            learning_rate: 1e-3,
            lr_schedule: LrSchedule::Constant,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 128,
            epochs: 30,
            train_limit: 0,
            seeds: vec![0],
            out: PathBuf::from("runs"),
            execution: Execution::Parallel,
            j_max: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Config(format!("{key} = {value:?}: {e}")))
}

impl ExperimentConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "dataset" => {
                if value != "mnist" && value != "fashion" {
                    return Err(CliError::Config(format!("dataset must be mnist or fashion, got {value:?}")));
                }
                self.dataset = value.into()
            }
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "cache_dir" => self.cache_dir = PathBuf::from(value),
            "filter" => self.filter = parse(key, value)?,
            "side" => self.side = parse(key, value)?,
            "kind" => self.kind = parse(key, value)?,
            "bond" => self.bond = parse(key, value)?,
            "classes" => self.classes = parse(key, value)?,
            "degrees" => self.degrees = value.into(),
            "init" => {
                if value != "identity" && value != "gaussian" {
                    return Err(CliError::Config(format!("init must be identity or gaussian, got {value:?}")));
                }
                self.init = value.into()
            }
            "init_sigma" => self.init_sigma = parse(key, value)?,
            "optimizer" => {
                if value != "adam" && value != "sgd" {
                    return Err(CliError::Config(format!("optimizer must be adam or sgd, got {value:?}")));
                }
                self.optimizer = value.into()
            }
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "lr_schedule" => self.lr_schedule = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "train_limit" => self.train_limit = parse(key, value)?,
            "seeds" => {
                self.seeds = value
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_, _>>()?
            }
            "out" => self.out = PathBuf::from(value),
            "execution" => {
                self.execution = match value {
                    "parallel" => Execution::Parallel,
                    "sequential" => Execution::Sequential,
                    _ => {
                        return Err(CliError::Config(format!(
                            "execution must be parallel or sequential, got {value:?}"
                        )))
                    }
                }
            }
            "j_max" => self.j_max = Some(parse(key, value)?),
            _ => return Err(CliError::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Parses the body of a config file on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    /// Number of input features after resampling.
    pub fn features(&self) -> usize {
        self.side * self.side
    }

    pub fn degree_set(&self) -> Result<DegreeSet, CliError> {
        DegreeSet::parse(&self.degrees, self.features()).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn init_scheme(&self) -> InitScheme {
        match self.init.as_str() {
            "gaussian" => InitScheme::Gaussian { sigma: self.init_sigma },
            _ => InitScheme::IdentityPlusNoise { sigma: self.init_sigma },
        }
    }

    pub fn loss_config(&self, seed: u64) -> LossConfig {
        LossConfig {
            optimizer: match self.optimizer.as_str() {
                "sgd" => Optimizer::Sgd,
                _ => Optimizer::Adam {
                    beta1: self.beta1,
                    beta2: self.beta2,
                    epsilon: self.epsilon,
                },
            },
            learning_rate: self.learning_rate,
            schedule: self.lr_schedule,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
            path: ForwardPath::Auto,
        }
    }

    pub fn source_dir(&self) -> PathBuf {
        self.data_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("data").join(&self.dataset))
    }

    /// Cache directory, honoring `TNID_CACHE_DIR`.
    pub fn effective_cache_dir(&self) -> PathBuf {
        std::env::var_os("TNID_CACHE_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| self.cache_dir.clone())
    }

    /// Every setting that influences training results, as strings.
    pub fn hyperparameters(&self) -> BTreeMap<String, String> {
        let mut h = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            h.insert(k.to_string(), v);
        };
        put("filter", self.filter.to_string());
        put("side", self.side.to_string());
        put("classes", self.classes.to_string());
        put("init", self.init.clone());
        put("init_sigma", self.init_sigma.to_string());
        put("optimizer", self.optimizer.clone());
        put("learning_rate", self.learning_rate.to_string());
        put("lr_schedule", self.lr_schedule.to_string());
        put("beta1", self.beta1.to_string());
        put("beta2", self.beta2.to_string());
        put("epsilon", self.epsilon.to_string());
        put("batch_size", self.batch_size.to_string());
        put("epochs", self.epochs.to_string());
        put("train_limit", self.train_limit.to_string());
        h
    }

    /// The fully resolved configuration.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        let mut r = self.hyperparameters();
        r.insert("dataset".into(), self.dataset.clone());
        r.insert("data_dir".into(), self.source_dir().display().to_string());
        r.insert("cache_dir".into(), self.effective_cache_dir().display().to_string());
        r.insert("kind".into(), self.kind.tag().into());
        r.insert("bond".into(), self.bond.to_string());
        r.insert("degrees".into(), self.degrees.clone());
        r.insert(
            "seeds".into(),
            self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
        );
        r.insert("out".into(), self.out.display().to_string());
        r.insert(
            "execution".into(),
            match self.execution {
                Execution::Parallel => "parallel",
                Execution::Sequential => "sequential",
            }
            .into(),
        );
        if let Some(j) = self.j_max {
            r.insert("j_max".into(), j.to_string());
        }
        r
    }

    /// Renders the resolved configuration in config-file syntax.
    pub fn to_text(&self) -> String {
        self.resolved()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
