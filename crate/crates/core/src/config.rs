//! `key = value` run configuration covering training, model and spotting
//! knobs. Unknown keys are rejected; `#` starts a comment.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::model::ModelConfig;
use crate::spotting::SpotConfig;
use crate::training::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub spot: SpotConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            model: ModelConfig {
                init_seed: train.seed,
                ..ModelConfig::default()
            },
            train,
            spot: SpotConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        text.parse()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train.validate().map_err(ConfigError::Invalid)?;
        self.spot.validate().map_err(ConfigError::Invalid)?;
        self.model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Sets both the training seed and the model initialization seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self.model.init_seed = seed;
        self
    }
}

fn parse_num<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::Parse {
        line,
        reason: format!("{key}: cannot parse {v:?}"),
    })
}

impl FromStr for PipelineConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut cfg = PipelineConfig::default();
        let mut layers: Option<usize> = None;
        let mut hidden: Option<usize> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| ConfigError::Parse {
                line,
                reason: "expected `key = value`".into(),
            })?;
            let (key, v) = (key.trim(), value.trim());
            match key {
                "lr" => cfg.train.lr = parse_num(line, key, v)?,
                "epochs" => cfg.train.epochs = parse_num(line, key, v)?,
                "alpha" => cfg.train.alpha = parse_num(line, key, v)?,
                "gamma" => cfg.train.gamma = parse_num(line, key, v)?,
                "window_seconds" => cfg.train.window_seconds = parse_num(line, key, v)?,
                "window_stride_fraction" => cfg.train.window_stride_fraction = parse_num(line, key, v)?,
                "boundary_radius_seconds" => cfg.train.boundary_radius_seconds = parse_num(line, key, v)?,
                "seed" => {
                    let seed = parse_num(line, key, v)?;
                    cfg.train.seed = seed;
                    cfg.model.init_seed = seed;
                }
                "gcn_layers" => layers = Some(parse_num(line, key, v)?),
                "gcn_hidden" => hidden = Some(parse_num(line, key, v)?),
                "thr_ap" => cfg.spot.thr_ap = parse_num(line, key, v)?,
                "k_dis_seconds_macro" => cfg.spot.k_dis_seconds_macro = parse_num(line, key, v)?,
                "k_dis_seconds_micro" => cfg.spot.k_dis_seconds_micro = parse_num(line, key, v)?,
                "nms_iou" => cfg.spot.nms_iou = parse_num(line, key, v)?,
                other => {
                    return Err(ConfigError::Parse {
                        line,
                        reason: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        if layers.is_some() || hidden.is_some() {
            let layers = layers.unwrap_or(cfg.model.gcn_hidden.len());
            let hidden = hidden.unwrap_or(cfg.model.gcn_hidden[0]);
            cfg.model.gcn_hidden = vec![hidden; layers];
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.train;
        let s = &self.spot;
        writeln!(f, "lr = {}", t.lr)?;
        writeln!(f, "epochs = {}", t.epochs)?;
        writeln!(f, "alpha = {}", t.alpha)?;
        writeln!(f, "gamma = {}", t.gamma)?;
        writeln!(f, "window_seconds = {}", t.window_seconds)?;
        writeln!(f, "window_stride_fraction = {}", t.window_stride_fraction)?;
        writeln!(f, "boundary_radius_seconds = {}", t.boundary_radius_seconds)?;
        writeln!(f, "seed = {}", t.seed)?;
        writeln!(f, "gcn_layers = {}", self.model.gcn_hidden.len())?;
        writeln!(f, "gcn_hidden = {}", self.model.gcn_hidden[0])?;
        writeln!(f, "thr_ap = {}", s.thr_ap)?;
        writeln!(f, "k_dis_seconds_macro = {}", s.k_dis_seconds_macro)?;
        writeln!(f, "k_dis_seconds_micro = {}", s.k_dis_seconds_micro)?;
        writeln!(f, "nms_iou = {}", s.nms_iou)
    }
}
