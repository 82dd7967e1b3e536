//! Flat `key = value` run configuration with `#` comments.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::engine::EngineConfig;
use crate::error::{IdfError, Result};
use crate::model::ModelConfig;
use crate::noise::Noise;
use crate::train::TrainConfig;

/// The noise columns of the default benchmark sweep.
pub const DEFAULT_SUITE: [Noise; 6] = [
    Noise::Gaussian { sigma255: 50.0 },
    Noise::SpatialGaussian { sigma255: 55.0 },
    Noise::Poisson { alpha: 3.5 },
    Noise::SaltPepper { density: 0.02 },
    Noise::Speckle { variance: 0.04 },
    Noise::Mixture { level: 4 },
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub engine: EngineConfig,
    pub train: TrainConfig,
    /// Noise used by `add-noise` when none is given on the command line.
    pub noise: Noise,
    pub noise_seed: u64,
    pub bench_suite: Vec<Noise>,
    pub bench_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            engine: EngineConfig::default(),
            train: TrainConfig::default(),
            noise: Noise::Gaussian { sigma255: 15.0 },
            noise_seed: 0,
            bench_suite: DEFAULT_SUITE.to_vec(),
            bench_seed: 0,
        }
    }
}

pub const CONFIG_KEYS: [&str; 27] = [
    "model.channels",
    "model.hidden_width",
    "model.kernel_size",
    "model.power",
    "model.lcm_window",
    "engine.max_iterations",
    "engine.stop_mode",
    "engine.kappa",
    "engine.confidence",
    "engine.trace_level",
    "train.steps",
    "train.learning_rate",
    "train.batch_size",
    "train.patch_size",
    "train.unroll",
    "train.noise",
    "train.seed",
    "train.clamp_adjoint",
    "train.checkpoint_every",
    "train.beta1",
    "train.beta2",
    "train.eps",
    "train.weight_decay",
    "noise.spec",
    "noise.seed",
    "bench.suite",
    "bench.seed",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| IdfError::Config(format!("bad value `{value}` for {key}")))
}

fn parse_suite(value: &str) -> Result<Vec<Noise>> {
    let suite = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(Noise::from_str)
        .collect::<Result<Vec<_>>>()?;
    if suite.is_empty() {
        return Err(IdfError::Config("bench.suite is empty".into()));
    }
    Ok(suite)
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (key, v) = (key.trim(), value.trim());
        match key {
            "model.channels" => self.model.channels = parse(key, v)?,
            "model.hidden_width" => self.model.hidden_width = parse(key, v)?,
            "model.kernel_size" => self.model.kernel_size = parse(key, v)?,
            "model.power" => self.model.power = parse(key, v)?,
            "model.lcm_window" => self.model.lcm_window = parse(key, v)?,
            "engine.max_iterations" => self.engine.max_iterations = parse(key, v)?,
            "engine.stop_mode" => self.engine.stop_mode = v.parse()?,
            "engine.kappa" => self.engine.kappa = parse(key, v)?,
            "engine.confidence" => self.engine.confidence = v.parse()?,
            "engine.trace_level" => self.engine.trace_level = v.parse()?,
            "train.steps" => self.train.steps = parse(key, v)?,
            "train.learning_rate" => self.train.learning_rate = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.patch_size" => self.train.patch_size = parse(key, v)?,
            "train.unroll" => self.train.unroll = parse(key, v)?,
            "train.noise" => self.train.noise = v.parse()?,
            "train.seed" => self.train.seed = parse(key, v)?,
            "train.clamp_adjoint" => self.train.clamp_adjoint = v.parse()?,
            "train.checkpoint_every" => self.train.checkpoint_every = parse(key, v)?,
            "train.beta1" => self.train.adamw.beta1 = parse(key, v)?,
            "train.beta2" => self.train.adamw.beta2 = parse(key, v)?,
            "train.eps" => self.train.adamw.eps = parse(key, v)?,
            "train.weight_decay" => self.train.adamw.weight_decay = parse(key, v)?,
            "noise.spec" => self.noise = v.parse()?,
            "noise.seed" => self.noise_seed = parse(key, v)?,
            "bench.suite" => self.bench_suite = parse_suite(v)?,
            "bench.seed" => self.bench_seed = parse(key, v)?,
            other => return Err(IdfError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults and validates the result.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                IdfError::Config(format!("line {}: expected `key = value`", no + 1))
            })?;
            if !seen.insert(key.trim().to_string()) {
                return Err(IdfError::Config(format!(
                    "line {}: duplicate key `{}`",
                    no + 1,
                    key.trim()
                )));
            }
            cfg.set(key, value)
                .map_err(|e| IdfError::Config(format!("line {}: {e}", no + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| IdfError::io(path, e))?;
        RunConfig::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: IdfError| IdfError::Config(e.to_string());
        self.model.validate().map_err(wrap)?;
        self.engine.validate().map_err(wrap)?;
        self.train.validate(self.model.kernel_size).map_err(wrap)?;
        self.noise.validate().map_err(wrap)?;
        if self.bench_suite.is_empty() {
            return Err(IdfError::Config("bench.suite is empty".into()));
        }
        Ok(())
    }

    /// Every key with its resolved value, in a stable order.
    pub fn render(&self) -> String {
        let m = &self.model;
        let e = &self.engine;
        let t = &self.train;
        let suite: Vec<String> = self.bench_suite.iter().map(|n| n.to_string()).collect();
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("model.channels", m.channels.to_string());
        kv("model.hidden_width", m.hidden_width.to_string());
        kv("model.kernel_size", m.kernel_size.to_string());
        kv("model.power", format!("{:?}", m.power));
        kv("model.lcm_window", m.lcm_window.to_string());
        kv("engine.max_iterations", e.max_iterations.to_string());
        kv("engine.stop_mode", e.stop_mode.to_string());
        kv("engine.kappa", format!("{:?}", e.kappa));
        kv("engine.confidence", e.confidence.to_string());
        kv("engine.trace_level", e.trace_level.to_string());
        kv("train.steps", t.steps.to_string());
        kv("train.learning_rate", format!("{:?}", t.learning_rate));
        kv("train.batch_size", t.batch_size.to_string());
        kv("train.patch_size", t.patch_size.to_string());
        kv("train.unroll", t.unroll.to_string());
        kv("train.noise", t.noise.to_string());
        kv("train.seed", t.seed.to_string());
        kv("train.clamp_adjoint", t.clamp_adjoint.to_string());
        kv("train.checkpoint_every", t.checkpoint_every.to_string());
        kv("train.beta1", format!("{:?}", t.adamw.beta1));
        kv("train.beta2", format!("{:?}", t.adamw.beta2));
        kv("train.eps", format!("{:?}", t.adamw.eps));
        kv("train.weight_decay", format!("{:?}", t.adamw.weight_decay));
        kv("noise.spec", self.noise.to_string());
        kv("noise.seed", self.noise_seed.to_string());
        kv("bench.suite", suite.join(", "));
        kv("bench.seed", self.bench_seed.to_string());
        s
    }
}
