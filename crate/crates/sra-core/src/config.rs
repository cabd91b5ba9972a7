//! Flat `key = value` run configuration.
//!
//! Precedence: built-in defaults, then file values, then command-line
//! overrides. Unknown keys are a hard error.

use crate::error::{Error, Result};
use crate::ops::{OpKind, ALL_OPS};
use crate::trainer::{TrainConfig, TrainMode};
use crate::mis::ScorerKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Synthetic,
    Cifar10,
    Cifar100,
    PpmDir,
}

impl DataSource {
    pub fn name(self) -> &'static str {
        match self {
            DataSource::Synthetic => "synthetic",
            DataSource::Cifar10 => "cifar10",
            DataSource::Cifar100 => "cifar100",
            DataSource::PpmDir => "ppm_dir",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        match s {
            "synthetic" => Some(DataSource::Synthetic),
            "cifar10" => Some(DataSource::Cifar10),
            "cifar100" => Some(DataSource::Cifar100),
            "ppm_dir" => Some(DataSource::PpmDir),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub classes: usize,
    pub samples_per_class: usize,
    pub test_samples_per_class: usize,
    pub size: usize,
    pub train_path: String,
    pub test_path: String,
    /// Cap on loaded samples; 0 = no cap.
    pub train_limit: usize,
    pub test_limit: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Synthetic,
            classes: 4,
            samples_per_class: 50,
            test_samples_per_class: 25,
            size: 32,
            train_path: String::new(),
            test_path: String::new(),
            train_limit: 0,
            test_limit: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: DataConfig,
}

fn bad(key: &str, line: usize, msg: &str) -> Error {
    Error::Config(format!("key `{key}` (line {line}): {msg}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, line: usize, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| bad(key, line, &format!("cannot parse `{value}`")))
}

fn parse_triple(key: &str, line: usize, value: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [one] => {
            let v: f64 = parse_num(key, line, one)?;
            Ok([v; 3])
        }
        [a, b, c] => Ok([
            parse_num(key, line, a)?,
            parse_num(key, line, b)?,
            parse_num(key, line, c)?,
        ]),
        _ => Err(bad(key, line, "expected one value or a comma-separated triple")),
    }
}

fn parse_fill(key: &str, line: usize, value: &str) -> Result<[u8; 3]> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(bad(key, line, "expected three comma-separated bytes"));
    }
    Ok([
        parse_num(key, line, parts[0])?,
        parse_num(key, line, parts[1])?,
        parse_num(key, line, parts[2])?,
    ])
}

fn parse_subset(key: &str, line: usize, value: &str) -> Result<Vec<OpKind>> {
    if value == "all" {
        return Ok(ALL_OPS.to_vec());
    }
    let mut subset = Vec::new();
    for name in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let kind = OpKind::from_name(name)
            .ok_or_else(|| bad(key, line, &format!("unknown operator `{name}`")))?;
        if !subset.contains(&kind) {
            subset.push(kind);
        }
    }
    if subset.is_empty() {
        return Err(bad(key, line, "operator subset must be nonempty"));
    }
    Ok(subset)
}

fn apply(cfg: &mut RunConfig, key: &str, value: &str, line: usize) -> Result<()> {
    let t = &mut cfg.train;
    let d = &mut cfg.data;
    match key {
        "seed" => t.seed = parse_num(key, line, value)?,
        "threads" => {
            t.threads = parse_num(key, line, value)?;
            if t.threads == 0 {
                return Err(bad(key, line, "threads must be >= 1"));
            }
        }
        "trainer.mode" => {
            t.mode = TrainMode::from_name(value)
                .ok_or_else(|| bad(key, line, &format!("unknown mode `{value}`")))?
        }
        "trainer.epochs" => t.epochs = parse_num(key, line, value)?,
        "trainer.large_batch_size" => {
            t.large_batch_size = parse_num(key, line, value)?;
            if t.large_batch_size < 2 || !t.large_batch_size.is_multiple_of(2) {
                return Err(bad(key, line, "large_batch_size must be even and >= 2"));
            }
        }
        "trainer.repeat_factor" => {
            t.repeat_factor = parse_num(key, line, value)?;
            if t.repeat_factor < 1 {
                return Err(bad(key, line, "repeat_factor must be >= 1"));
            }
        }
        "trainer.eval_every" => t.eval_every = parse_num(key, line, value)?,
        "policy.depth" => {
            t.policy.depth = parse_num(key, line, value)?;
            if t.policy.depth < 1 {
                return Err(bad(key, line, "policy depth must be >= 1"));
            }
        }
        "policy.operator_subset" => t.policy.operator_subset = parse_subset(key, line, value)?,
        "policy.fill" => t.policy.fill = parse_fill(key, line, value)?,
        "ra.n_ops" => {
            t.ra.n_ops = parse_num(key, line, value)?;
            if t.ra.n_ops < 1 {
                return Err(bad(key, line, "ra.n_ops must be >= 1"));
            }
        }
        "ra.magnitude" => {
            t.ra.magnitude_level = parse_num(key, line, value)?;
            if !(0.0..=30.0).contains(&t.ra.magnitude_level) {
                return Err(bad(key, line, "ra.magnitude must be in [0,30]"));
            }
        }
        "ra.magnitude_std" => {
            t.ra.magnitude_std = parse_num(key, line, value)?;
            if t.ra.magnitude_std < 0.0 {
                return Err(bad(key, line, "ra.magnitude_std must be >= 0"));
            }
        }
        "mis.scorer" => {
            t.scorer = ScorerKind::from_name(value)
                .ok_or_else(|| bad(key, line, &format!("unknown scorer `{value}`")))?
        }
        "mis.epsilon" => {
            t.epsilon = parse_num(key, line, value)?;
            if t.epsilon < 0.0 {
                return Err(bad(key, line, "mis.epsilon must be >= 0"));
            }
        }
        "optim.base_lr" => t.base_lr = parse_num(key, line, value)?,
        "optim.momentum" => t.momentum = parse_num(key, line, value)?,
        "optim.weight_decay" => t.weight_decay = parse_num(key, line, value)?,
        "optim.label_smoothing" => {
            t.label_smoothing = parse_num(key, line, value)?;
            if !(0.0..1.0).contains(&t.label_smoothing) {
                return Err(bad(key, line, "label_smoothing must be in [0,1)"));
            }
        }
        "optim.warmup_epochs" => t.warmup_epochs = parse_num(key, line, value)?,
        "model.norm_mean" => t.normalization.mean = parse_triple(key, line, value)?,
        "model.norm_std" => {
            t.normalization.std = parse_triple(key, line, value)?;
            if t.normalization.std.iter().any(|&s| s <= 0.0) {
                return Err(bad(key, line, "norm_std entries must be > 0"));
            }
        }
        "data.source" => {
            d.source = DataSource::from_name(value)
                .ok_or_else(|| bad(key, line, &format!("unknown data source `{value}`")))?
        }
        "data.classes" => {
            d.classes = parse_num(key, line, value)?;
            if d.classes < 2 {
                return Err(bad(key, line, "data.classes must be >= 2"));
            }
        }
        "data.samples_per_class" => d.samples_per_class = parse_num(key, line, value)?,
        "data.test_samples_per_class" => d.test_samples_per_class = parse_num(key, line, value)?,
        "data.size" => {
            d.size = parse_num(key, line, value)?;
            if d.size < 4 {
                return Err(bad(key, line, "data.size must be >= 4"));
            }
        }
        "data.train_path" => d.train_path = value.to_owned(),
        "data.test_path" => d.test_path = value.to_owned(),
        "data.train_limit" => d.train_limit = parse_num(key, line, value)?,
        "data.test_limit" => d.test_limit = parse_num(key, line, value)?,
        _ => return Err(Error::Config(format!("unknown key `{key}` (line {line})"))),
    }
    Ok(())
}

/// Parse a config document, then apply `(key, value)` overrides on top.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`, got `{raw}`", lineno + 1))
        })?;
        apply(&mut cfg, key.trim(), value.trim(), lineno + 1)?;
    }
    for (key, value) in overrides {
        apply(&mut cfg, key, value, 0)?;
    }
    cfg.train.validate()?;
    Ok(cfg)
}

fn subset_to_string(subset: &[OpKind]) -> String {
    if subset.len() == ALL_OPS.len() && ALL_OPS.iter().all(|k| subset.contains(k)) {
        return "all".into();
    }
    subset.iter().map(|k| k.name()).collect::<Vec<_>>().join(",")
}

fn triple_to_string(t: [f64; 3]) -> String {
    format!("{},{},{}", t[0], t[1], t[2])
}

/// Emit every key with its current value; re-parses to an equal config.
pub fn dump_config(cfg: &RunConfig) -> String {
    let t = &cfg.train;
    let d = &cfg.data;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    kv("seed", t.seed.to_string());
    kv("threads", t.threads.to_string());
    kv("trainer.mode", t.mode.name().into());
    kv("trainer.epochs", t.epochs.to_string());
    kv("trainer.large_batch_size", t.large_batch_size.to_string());
    kv("trainer.repeat_factor", t.repeat_factor.to_string());
    kv("trainer.eval_every", t.eval_every.to_string());
    kv("policy.depth", t.policy.depth.to_string());
    kv("policy.operator_subset", subset_to_string(&t.policy.operator_subset));
    kv(
        "policy.fill",
        format!("{},{},{}", t.policy.fill[0], t.policy.fill[1], t.policy.fill[2]),
    );
    kv("ra.n_ops", t.ra.n_ops.to_string());
    kv("ra.magnitude", t.ra.magnitude_level.to_string());
    kv("ra.magnitude_std", t.ra.magnitude_std.to_string());
    kv("mis.scorer", t.scorer.name().into());
    kv("mis.epsilon", t.epsilon.to_string());
    kv("optim.base_lr", t.base_lr.to_string());
    kv("optim.momentum", t.momentum.to_string());
    kv("optim.weight_decay", t.weight_decay.to_string());
    kv("optim.label_smoothing", t.label_smoothing.to_string());
    kv("optim.warmup_epochs", t.warmup_epochs.to_string());
    kv("model.norm_mean", triple_to_string(t.normalization.mean));
    kv("model.norm_std", triple_to_string(t.normalization.std));
    kv("data.source", d.source.name().into());
    kv("data.classes", d.classes.to_string());
    kv("data.samples_per_class", d.samples_per_class.to_string());
    kv("data.test_samples_per_class", d.test_samples_per_class.to_string());
    kv("data.size", d.size.to_string());
    kv("data.train_path", d.train_path.clone());
    kv("data.test_path", d.test_path.clone());
    kv("data.train_limit", d.train_limit.to_string());
    kv("data.test_limit", d.test_limit.to_string());
    out
}
