//! `key = value` settings shared by every command.
//!
//! Blank lines and `#` comments are ignored; unknown keys are errors. Values
//! left unset fall back to per-command defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use drsan::data::SceneConfig;
use drsan::train::InitScheme;
use drsan::TransformMode;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub mode: Option<TransformMode>,
    pub context: Option<bool>,
    pub context_flatten: Option<bool>,
    pub iters: Option<usize>,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub lr: Option<f64>,
    pub decay: Option<f64>,
    pub decay_every: Option<usize>,
    pub log_every: Option<usize>,
    pub clip_norm: Option<f64>,
    pub checkpoint_every: Option<usize>,
    pub sigma: Option<f64>,
    pub channel_mult: Option<f64>,
    pub images: Option<usize>,
    pub canvas_height: Option<usize>,
    pub canvas_width: Option<usize>,
    pub count_min: Option<usize>,
    pub count_max: Option<usize>,
    pub radius_min: Option<f64>,
    pub radius_max: Option<f64>,
    pub perspective: Option<f64>,
    pub rotation_min: Option<f64>,
    pub rotation_max: Option<f64>,
    pub noise: Option<f64>,
    pub test_images: Option<usize>,
    pub ablation_seeds: Option<Vec<u64>>,
    pub eval_steps: Option<Vec<usize>>,
    pub noise_tolerance: Option<f64>,
    pub init: Option<InitScheme>,
}

pub const KEYS: &[&str] = &[
    "seed",
    "n",
    "mode",
    "context",
    "context_flatten",
    "iters",
    "out",
    "data",
    "checkpoint",
    "lr",
    "decay",
    "decay_every",
    "log_every",
    "clip_norm",
    "checkpoint_every",
    "sigma",
    "channel_mult",
    "images",
    "canvas_height",
    "canvas_width",
    "count_min",
    "count_max",
    "radius_min",
    "radius_max",
    "perspective",
    "rotation_min",
    "rotation_max",
    "noise",
    "test_images",
    "ablation_seeds",
    "eval_steps",
    "noise_tolerance",
    "init",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("invalid value {value:?} for {key}"))
}

fn parse_switch(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(format!("invalid value {value:?} for {key}: expected on or off")),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, String> {
    value
        .split(',')
        .map(|v| parse(key, v.trim()))
        .collect()
}

impl Settings {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "seed" => self.seed = Some(parse(key, value)?),
            "n" => self.n = Some(parse(key, value)?),
            "mode" => {
                self.mode = Some(value.parse().map_err(|_| {
                    format!("invalid value {value:?} for mode: expected t, ts, tsr or raw")
                })?)
            }
            "context" => self.context = Some(parse_switch(key, value)?),
            "context_flatten" => self.context_flatten = Some(parse_switch(key, value)?),
            "iters" => self.iters = Some(parse(key, value)?),
            "out" => self.out = Some(PathBuf::from(value)),
            "data" => self.data = Some(PathBuf::from(value)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "lr" => self.lr = Some(parse(key, value)?),
            "decay" => self.decay = Some(parse(key, value)?),
            "decay_every" => self.decay_every = Some(parse(key, value)?),
            "log_every" => self.log_every = Some(parse(key, value)?),
            "clip_norm" => {
                self.clip_norm = if value == "off" { None } else { Some(parse(key, value)?) }
            }
            "checkpoint_every" => {
                self.checkpoint_every = if value == "off" { None } else { Some(parse(key, value)?) }
            }
            "sigma" => self.sigma = Some(parse(key, value)?),
            "channel_mult" => self.channel_mult = Some(parse(key, value)?),
            "images" => self.images = Some(parse(key, value)?),
            "canvas_height" => self.canvas_height = Some(parse(key, value)?),
            "canvas_width" => self.canvas_width = Some(parse(key, value)?),
            "count_min" => self.count_min = Some(parse(key, value)?),
            "count_max" => self.count_max = Some(parse(key, value)?),
            "radius_min" => self.radius_min = Some(parse(key, value)?),
            "radius_max" => self.radius_max = Some(parse(key, value)?),
            "perspective" => self.perspective = Some(parse(key, value)?),
            "rotation_min" => self.rotation_min = Some(parse(key, value)?),
            "rotation_max" => self.rotation_max = Some(parse(key, value)?),
            "noise" => self.noise = Some(parse(key, value)?),
            "test_images" => self.test_images = Some(parse(key, value)?),
            "ablation_seeds" => self.ablation_seeds = Some(parse_list(key, value)?),
            "eval_steps" => self.eval_steps = Some(parse_list(key, value)?),
            "noise_tolerance" => self.noise_tolerance = Some(parse(key, value)?),
            "init" => {
                self.init = Some(match value {
                    "narrow" => InitScheme::default(),
                    "scaled" => InitScheme::scaled(),
                    _ => return Err(format!("invalid value {value:?} for init: expected narrow or scaled")),
                })
            }
            _ => return Err(format!("unknown key {key:?}; known keys: {}", KEYS.join(", "))),
        }
        Ok(())
    }

    pub fn parse_text(text: &str, source: &str) -> CliResult<Self> {
        let mut settings = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |detail: String| CliError::Config {
                origin: source.to_string(),
                line: i + 1,
                detail,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found {line:?}")))?;
            settings.set(key.trim(), value.trim()).map_err(err)?;
        }
        Ok(settings)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| drsan::Error::io(path, e))?;
        Self::parse_text(&text, &path.display().to_string())
    }

    /// Applies the generator keys on top of `base`.
    pub fn scene(&self, base: SceneConfig) -> SceneConfig {
        SceneConfig {
            height: self.canvas_height.unwrap_or(base.height),
            width: self.canvas_width.unwrap_or(base.width),
            count_range: (
                self.count_min.unwrap_or(base.count_range.0),
                self.count_max.unwrap_or(base.count_range.1),
            ),
            radius_range: (
                self.radius_min.unwrap_or(base.radius_range.0),
                self.radius_max.unwrap_or(base.radius_range.1),
            ),
            perspective: self.perspective.unwrap_or(base.perspective),
            rotation_deg: (
                self.rotation_min.unwrap_or(base.rotation_deg.0),
                self.rotation_max.unwrap_or(base.rotation_deg.1),
            ),
            noise: self.noise.unwrap_or(base.noise),
            seed: self.seed.unwrap_or(base.seed),
        }
    }
}
