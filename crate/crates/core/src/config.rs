//! Run configuration as `key = value` text.
//!
//! Every tunable of the pipeline has a key; unknown keys are rejected. The
//! GA and MLP seeds are derived from `seed` per stage, so they have no keys
//! of their own.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gasel::GaConfig;
use crate::integrate::TrainSchedule;
use crate::seeds;
use crate::visual::OvaConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segmenter {
    Grid,
    Slic,
}

impl FromStr for Segmenter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(Segmenter::Grid),
            "slic" => Ok(Segmenter::Slic),
            other => Err(Error::config(format!("unknown segmenter {other:?} (grid|slic)"))),
        }
    }
}

impl Segmenter {
    pub fn as_str(&self) -> &'static str {
        match self {
            Segmenter::Grid => "grid",
            Segmenter::Slic => "slic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub image_side: usize,
    pub segmenter: Segmenter,
    pub superpixels: usize,
    pub blocks: usize,
    pub compactness: f64,
    pub slic_iters: usize,
    pub split_ratio: f64,
    pub ga_enabled: bool,
    pub ga: GaConfig,
    pub ga_val_fraction: f64,
    /// Cap on labelled superpixels sampled for GA fitness evaluation.
    pub ga_max_rows: usize,
    pub context_enabled: bool,
    pub ova: OvaConfig,
    pub mlp: TrainSchedule,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            image_side: 256,
            segmenter: Segmenter::Slic,
            superpixels: 256,
            blocks: 4,
            compactness: 10.0,
            slic_iters: 10,
            split_ratio: 0.8,
            ga_enabled: true,
            ga: GaConfig::default(),
            ga_val_fraction: 0.25,
            ga_max_rows: 2000,
            context_enabled: true,
            ova: OvaConfig::default(),
            mlp: TrainSchedule::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(format!("{key}: expected true/false, got {value:?}"))),
    }
}

impl RunConfig {
    /// Set one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "image_side" => self.image_side = parse(key, v)?,
            "segmenter" => self.segmenter = v.parse()?,
            "superpixels" => self.superpixels = parse(key, v)?,
            "blocks" => self.blocks = parse(key, v)?,
            "compactness" => self.compactness = parse(key, v)?,
            "slic_iters" => self.slic_iters = parse(key, v)?,
            "split_ratio" => self.split_ratio = parse(key, v)?,
            "ga.enabled" => self.ga_enabled = parse_bool(key, v)?,
            "ga.population" => self.ga.population = parse(key, v)?,
            "ga.generations" => self.ga.generations = parse(key, v)?,
            "ga.p_crossover" => self.ga.p_crossover = parse(key, v)?,
            "ga.p_mutation" => self.ga.p_mutation = parse(key, v)?,
            "ga.alpha" => self.ga.alpha = parse(key, v)?,
            "ga.beta" => self.ga.beta = parse(key, v)?,
            "ga.elitism" => self.ga.elitism = parse(key, v)?,
            "ga.val_fraction" => self.ga_val_fraction = parse(key, v)?,
            "ga.max_rows" => self.ga_max_rows = parse(key, v)?,
            "context.enabled" => self.context_enabled = parse_bool(key, v)?,
            "ova.step" => self.ova.step = parse(key, v)?,
            "ova.max_iters" => self.ova.max_iters = parse(key, v)?,
            "ova.grad_tol" => self.ova.grad_tol = parse(key, v)?,
            "ova.l2" => self.ova.l2 = parse(key, v)?,
            "mlp.hidden" => self.mlp.hidden = parse(key, v)?,
            "mlp.lr0" => self.mlp.lr0 = parse(key, v)?,
            "mlp.decay" => self.mlp.decay = parse(key, v)?,
            "mlp.decay_every" => self.mlp.decay_every = parse(key, v)?,
            "mlp.batch" => self.mlp.batch = parse(key, v)?,
            "mlp.epochs" => self.mlp.epochs = parse(key, v)?,
            other => return Err(Error::config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Apply a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override {kv:?} is not key=value")))?;
        self.set(k, v)
    }

    /// Parse config text on top of the defaults and validate.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("config line {}: expected key = value", lineno + 1)))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_side < 16 {
            return Err(Error::config("image_side must be >= 16"));
        }
        if self.superpixels < 4 || self.superpixels > self.image_side * self.image_side {
            return Err(Error::config("superpixels must be in [4, image_side^2]"));
        }
        if self.blocks < 1 {
            return Err(Error::config("blocks must be >= 1"));
        }
        if !(self.compactness > 0.0) || self.slic_iters < 1 {
            return Err(Error::config("compactness must be positive and slic_iters >= 1"));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::config("split_ratio must be in (0, 1)"));
        }
        if !(self.ga_val_fraction > 0.0 && self.ga_val_fraction < 1.0) {
            return Err(Error::config("ga.val_fraction must be in (0, 1)"));
        }
        if self.ga_max_rows < 4 {
            return Err(Error::config("ga.max_rows must be >= 4"));
        }
        self.ga.validate()?;
        self.ova.validate()?;
        self.mlp.validate()
    }

    pub fn ga_config(&self) -> GaConfig {
        GaConfig {
            seed: seeds::derive(self.seed, seeds::STAGE_GA),
            ..self.ga.clone()
        }
    }

    pub fn mlp_schedule(&self) -> TrainSchedule {
        TrainSchedule {
            seed: seeds::derive(self.seed, seeds::STAGE_MLP),
            ..self.mlp.clone()
        }
    }

    /// All keys in a fixed order; parses back to the same configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("image_side", self.image_side.to_string());
        kv("segmenter", self.segmenter.as_str().to_string());
        kv("superpixels", self.superpixels.to_string());
        kv("blocks", self.blocks.to_string());
        kv("compactness", format!("{:e}", self.compactness));
        kv("slic_iters", self.slic_iters.to_string());
        kv("split_ratio", format!("{:e}", self.split_ratio));
        kv("ga.enabled", self.ga_enabled.to_string());
        kv("ga.population", self.ga.population.to_string());
        kv("ga.generations", self.ga.generations.to_string());
        kv("ga.p_crossover", format!("{:e}", self.ga.p_crossover));
        kv("ga.p_mutation", format!("{:e}", self.ga.p_mutation));
        kv("ga.alpha", format!("{:e}", self.ga.alpha));
        kv("ga.beta", format!("{:e}", self.ga.beta));
        kv("ga.elitism", self.ga.elitism.to_string());
        kv("ga.val_fraction", format!("{:e}", self.ga_val_fraction));
        kv("ga.max_rows", self.ga_max_rows.to_string());
        kv("context.enabled", self.context_enabled.to_string());
        kv("ova.step", format!("{:e}", self.ova.step));
        kv("ova.max_iters", self.ova.max_iters.to_string());
        kv("ova.grad_tol", format!("{:e}", self.ova.grad_tol));
        kv("ova.l2", format!("{:e}", self.ova.l2));
        kv("mlp.hidden", self.mlp.hidden.to_string());
        kv("mlp.lr0", format!("{:e}", self.mlp.lr0));
        kv("mlp.decay", format!("{:e}", self.mlp.decay));
        kv("mlp.decay_every", self.mlp.decay_every.to_string());
        kv("mlp.batch", self.mlp.batch.to_string());
        kv("mlp.epochs", self.mlp.epochs.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_training_setup() {
        let c = RunConfig::default();
        assert_eq!((c.image_side, c.superpixels, c.blocks), (256, 256, 4));
        assert_eq!((c.ga.population, c.ga.generations), (10, 1000));
        assert_eq!((c.ga.p_crossover, c.ga.p_mutation, c.ga.alpha, c.ga.beta), (0.8, 0.1, 0.99, 0.01));
        assert_eq!((c.mlp.lr0, c.mlp.batch, c.mlp.decay_every), (1e-4, 4, 30));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.set("segmenter", "grid").unwrap();
        c.set("mlp.lr0", "0.003").unwrap();
        c.set("ga.enabled", "false").unwrap();
        c.seed = 77;
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::parse("bogus = 1").is_err());
        assert!(RunConfig::parse("superpixels = many").is_err());
        assert!(RunConfig::parse("superpixels = 2").is_err());
        assert!(RunConfig::parse("ga.p_mutation = 2").is_err());
        assert!(RunConfig::parse("segmenter = watershed").is_err());
        assert!(RunConfig::parse("just words").is_err());
        let mut c = RunConfig::default();
        assert!(c.apply_override("noequals").is_err());
        assert!(matches!(RunConfig::parse("blocks = 0"), Err(Error::Config(_))));
    }

    #[test]
    fn stage_seeds_differ() {
        let c = RunConfig::default();
        assert_ne!(c.ga_config().seed, c.mlp_schedule().seed);
    }
}
