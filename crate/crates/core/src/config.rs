//! Run configuration: flat `key = value` text with `#` comments.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{fov_strategy, normalize_strategy};
use crate::error::{Error, Result};
use crate::ladder::LadderConfig;
use crate::train::{build_schedule, LrSchedule, Staged};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "f32" => Ok(Self::F32),
            "f64" => Ok(Self::F64),
            _ => Err(format!("precision `{s}` is not f32 or f64")),
        }
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::F32 => "f32",
            Self::F64 => "f64",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub levels: usize,
    pub pairs: usize,
    pub base_channels: usize,
    pub dropout: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stages `epoch:rate,...`.
    pub lr_schedule: String,
    pub seed: u64,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub fov_mode: String,
    pub normalize_mode: String,
    pub plateau_mode: bool,
    /// Patches sampled from the training images.
    pub patches: usize,
    pub precision: Precision,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            levels: 5,
            pairs: 2,
            base_channels: 10,
            dropout: 0.25,
            batch_size: 32,
            epochs: 250,
            lr_schedule: "0:0.01,20:0.001,150:0.0001".into(),
            seed: 0,
            data_dir: "data".into(),
            out_dir: "run".into(),
            fov_mode: "auto".into(),
            normalize_mode: "standardize".into(),
            plateau_mode: false,
            patches: 190_000,
            precision: Precision::F32,
        }
    }
}

pub const KEYS: [&str; 15] = [
    "levels",
    "pairs",
    "base_channels",
    "dropout",
    "batch_size",
    "epochs",
    "lr_schedule",
    "seed",
    "data_dir",
    "out_dir",
    "fov_mode",
    "normalize_mode",
    "plateau_mode",
    "patches",
    "precision",
];

fn parse<V: FromStr>(key: &str, value: &str) -> std::result::Result<V, String> {
    value.parse().map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

fn parse_switch(value: &str) -> std::result::Result<bool, String> {
    match value {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(format!("plateau_mode `{value}` is not on/off")),
    }
}

impl RunConfig {
    /// Set one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "levels" => self.levels = parse(key, value)?,
            "pairs" => self.pairs = parse(key, value)?,
            "base_channels" => self.base_channels = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "lr_schedule" => {
                Staged::parse_stages(value).map_err(|e| e.to_string())?;
                self.lr_schedule = value.to_string();
            }
            "seed" => self.seed = parse(key, value)?,
            "data_dir" => self.data_dir = value.into(),
            "out_dir" => self.out_dir = value.into(),
            "fov_mode" => {
                fov_strategy(value).map_err(|e| e.to_string())?;
                self.fov_mode = value.to_string();
            }
            "normalize_mode" => {
                normalize_strategy(value).map_err(|e| e.to_string())?;
                self.normalize_mode = value.to_string();
            }
            "plateau_mode" => self.plateau_mode = parse_switch(value)?,
            "patches" => self.patches = parse(key, value)?,
            "precision" => self.precision = parse(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Defaults overridden by every `key = value` line of `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |detail: String| Error::Config { line: i + 1, detail };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Every key, fully resolved, in the same text form `parse` reads.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key} = {}", self.value(key));
        }
        s
    }

    fn value(&self, key: &str) -> String {
        match key {
            "levels" => self.levels.to_string(),
            "pairs" => self.pairs.to_string(),
            "base_channels" => self.base_channels.to_string(),
            "dropout" => self.dropout.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "epochs" => self.epochs.to_string(),
            "lr_schedule" => self.lr_schedule.clone(),
            "seed" => self.seed.to_string(),
            "data_dir" => self.data_dir.display().to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            "fov_mode" => self.fov_mode.clone(),
            "normalize_mode" => self.normalize_mode.clone(),
            "plateau_mode" => if self.plateau_mode { "on" } else { "off" }.to_string(),
            "patches" => self.patches.to_string(),
            "precision" => self.precision.to_string(),
            _ => unreachable!("key list is fixed"),
        }
    }

    pub fn ladder(&self) -> LadderConfig {
        LadderConfig {
            dropout_rate: self.dropout,
            ..LadderConfig::small(self.levels, self.pairs, self.base_channels)
        }
    }

    pub fn schedule(&self) -> Result<Box<dyn LrSchedule>> {
        let name = if self.plateau_mode { "plateau" } else { "staged" };
        build_schedule(name, Staged::parse_stages(&self.lr_schedule)?, self.epochs)
    }
}
