//! Run configuration: a flat JSON object with dotted section keys.
//!
//! ```json
//! { "seed": 3, "buffer.mode": "ftd", "buffer.rho": 0.01, "nas.widths": [4, 8] }
//! ```
//!
//! Missing keys take their defaults, unknown keys are rejected, and every
//! error names the file line (or `--set`) the offending key came from.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ftd_core::buffer::{FtdConfig, TeacherMode};
use ftd_core::data::{NoiseSpec, SyntheticInit, ToyKind, ToySpec};
use ftd_core::distill::DistillConfig;
use ftd_core::models::{Activation, ArchSpec, Family, InputShape, Norm, Pooling};
use ftd_core::nas::{CandidateTraining, SearchSpace};
use ftd_core::rng;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// Where a configuration value came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    Default,
    File { path: String, line: usize },
    Override,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => f.write_str("default"),
            Origin::File { path, line } => write!(f, "{path}:{line}"),
            Origin::Override => f.write_str("--set"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{origin}: {message}")]
pub struct ConfigError {
    pub origin: Origin,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(origin: Origin, key: &str, message: impl Into<String>) -> Self {
        Self { origin, key: Some(key.to_string()), message: format!("`{key}`: {}", message.into()) }
    }
}

/// Which teacher kinds a phase works on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    Sgd,
    Ftd,
    Both,
}

impl Selection {
    pub fn modes(self) -> Vec<TeacherMode> {
        match self {
            Selection::Sgd => vec![TeacherMode::Sgd],
            Selection::Ftd => vec![TeacherMode::Ftd],
            Selection::Both => vec![TeacherMode::Sgd, TeacherMode::Ftd],
        }
    }
}

impl FromStr for Selection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "both" => Ok(Selection::Both),
            other => match other.parse::<TeacherMode>() {
                Ok(TeacherMode::Sgd) => Ok(Selection::Sgd),
                Ok(TeacherMode::Ftd) => Ok(Selection::Ftd),
                Err(e) => Err(e.to_string()),
            },
        }
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selection::Sgd => "sgd",
            Selection::Ftd => "ftd",
            Selection::Both => "both",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Toy(ToyKind),
    Idx,
    Csv,
}

impl FromStr for Source {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "idx" => Ok(Source::Idx),
            "csv" => Ok(Source::Csv),
            other => other.parse().map(Source::Toy).map_err(|e: ftd_core::Error| e.to_string()),
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Toy(k) => write!(f, "{k}"),
            Source::Idx => f.write_str("idx"),
            Source::Csv => f.write_str("csv"),
        }
    }
}

/// Conversion between a field and its JSON form.
trait Field: Sized {
    fn from_json(v: &Value) -> Result<Self, String>;
    fn to_json(&self) -> Value;
}

fn type_error(expected: &str, v: &Value) -> String {
    format!("expected {expected}, got {v}")
}

impl Field for u64 {
    fn from_json(v: &Value) -> Result<Self, String> {
        v.as_u64().ok_or_else(|| type_error("a non-negative integer", v))
    }
    fn to_json(&self) -> Value {
        Value::from(*self)
    }
}

impl Field for usize {
    fn from_json(v: &Value) -> Result<Self, String> {
        u64::from_json(v).map(|n| n as usize)
    }
    fn to_json(&self) -> Value {
        Value::from(*self as u64)
    }
}

impl Field for f64 {
    fn from_json(v: &Value) -> Result<Self, String> {
        v.as_f64().ok_or_else(|| type_error("a number", v))
    }
    fn to_json(&self) -> Value {
        Value::from(*self)
    }
}

impl Field for bool {
    fn from_json(v: &Value) -> Result<Self, String> {
        v.as_bool().ok_or_else(|| type_error("true or false", v))
    }
    fn to_json(&self) -> Value {
        Value::from(*self)
    }
}

impl Field for PathBuf {
    fn from_json(v: &Value) -> Result<Self, String> {
        v.as_str().map(PathBuf::from).ok_or_else(|| type_error("a path string", v))
    }
    fn to_json(&self) -> Value {
        Value::from(self.to_string_lossy().into_owned())
    }
}

impl<T: Field> Field for Option<T> {
    fn from_json(v: &Value) -> Result<Self, String> {
        if v.is_null() {
            Ok(None)
        } else {
            T::from_json(v).map(Some)
        }
    }
    fn to_json(&self) -> Value {
        self.as_ref().map_or(Value::Null, T::to_json)
    }
}

impl<T: Field> Field for Vec<T> {
    fn from_json(v: &Value) -> Result<Self, String> {
        v.as_array().ok_or_else(|| type_error("a list", v))?.iter().map(T::from_json).collect()
    }
    fn to_json(&self) -> Value {
        Value::Array(self.iter().map(T::to_json).collect())
    }
}

macro_rules! text_field {
    ($($t:ty),*) => {$(
        impl Field for $t {
            fn from_json(v: &Value) -> Result<Self, String> {
                v.as_str().ok_or_else(|| type_error("a string", v))?.parse().map_err(|e| format!("{e}"))
            }
            fn to_json(&self) -> Value {
                Value::from(self.to_string())
            }
        }
    )*};
}

text_field!(Family, Norm, Activation, Pooling, TeacherMode, Selection, Source);

impl Field for SyntheticInit {
    fn from_json(v: &Value) -> Result<Self, String> {
        v.as_str().ok_or_else(|| type_error("a string", v))?.parse().map_err(|e| format!("{e}"))
    }
    fn to_json(&self) -> Value {
        Value::from(match self {
            SyntheticInit::RealSample => "real-sample",
            SyntheticInit::Noise => "noise",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSection {
    pub source: Source,
    pub classes: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub dim: usize,
    pub separation: f64,
    /// `None` keeps the generator's own noise level.
    pub noise: Option<f64>,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub train_csv: Option<PathBuf>,
    pub test_csv: Option<PathBuf>,
    /// `[channels, height, width]` of CSV rows.
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSection {
    pub family: Family,
    pub width: usize,
    pub depth: usize,
    pub norm: Norm,
    pub activation: Activation,
    pub pooling: Pooling,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BufferSection {
    pub mode: Selection,
    pub count: usize,
    pub rho: f64,
    pub alpha: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub expert_epochs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistillSection {
    pub teacher: Selection,
    pub ipc: usize,
    pub init: SyntheticInit,
    pub syn_steps: usize,
    pub max_start_epoch: usize,
    pub lr_pixels: f64,
    pub lr_step_size: f64,
    pub iterations: usize,
    pub noise: bool,
    pub noise_sigma: f64,
    pub ema_decay: f64,
    pub batch_cap: usize,
    /// Initial student step size; `None` uses the teacher learning rate.
    pub step_size: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSection {
    pub seeds: usize,
    pub iterations: usize,
    pub use_ema: bool,
    pub baselines: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnoseSection {
    /// Re-anchoring interval in epochs; `None` uses the segment length.
    pub interval: Option<usize>,
    /// Ablation start epochs; empty means every segment boundary.
    pub starts: Vec<usize>,
    pub power_iters: usize,
    pub power_tol: f64,
    pub rho: f64,
    pub all_epochs: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NasSection {
    pub widths: Vec<usize>,
    pub depths: Vec<usize>,
    pub norms: Vec<Norm>,
    pub activations: Vec<Activation>,
    pub poolings: Vec<Pooling>,
    pub repeats: usize,
    pub epochs: usize,
    /// Epochs on the synthetic proxy, which holds only a handful of rows.
    pub proxy_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub topk: Vec<usize>,
    pub proxy: TeacherMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub buffer: BufferSection,
    pub distill: DistillSection,
    pub eval: EvalSection,
    pub diagnose: DiagnoseSection,
    pub nas: NasSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let desk = SearchSpace::desk();
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            threads: 0,
            dataset: DatasetSection {
                source: Source::Toy(ToyKind::TinyDigits),
                classes: 10,
                per_class: 30,
                test_per_class: 30,
                dim: 8,
                separation: 4.0,
                noise: None,
                train_images: None,
                train_labels: None,
                test_images: None,
                test_labels: None,
                train_csv: None,
                test_csv: None,
                shape: vec![1, 8, 8],
            },
            model: ModelSection {
                family: Family::ConvNet,
                width: 8,
                depth: 2,
                norm: Norm::Instance,
                activation: Activation::Relu,
                pooling: Pooling::Avg,
            },
            buffer: BufferSection {
                mode: Selection::Both,
                count: 5,
                rho: 0.01,
                alpha: 1.0,
                lr: 0.1,
                epochs: 10,
                batch_size: 32,
                expert_epochs: 2,
            },
            distill: DistillSection {
                teacher: Selection::Both,
                ipc: 1,
                init: SyntheticInit::RealSample,
                syn_steps: 10,
                max_start_epoch: 4,
                lr_pixels: 10.0,
                lr_step_size: 1e-4,
                iterations: 500,
                noise: false,
                noise_sigma: 0.01,
                ema_decay: 0.99,
                batch_cap: 256,
                step_size: None,
            },
            eval: EvalSection { seeds: 5, iterations: 300, use_ema: true, baselines: true },
            diagnose: DiagnoseSection {
                interval: None,
                starts: Vec::new(),
                power_iters: 20,
                power_tol: 1e-3,
                rho: 0.01,
                all_epochs: false,
            },
            nas: NasSection {
                widths: desk.widths,
                depths: desk.depths,
                norms: desk.norms,
                activations: desk.activations,
                poolings: desk.poolings,
                repeats: 3,
                epochs: 5,
                proxy_epochs: 300,
                batch_size: 32,
                lr: 0.1,
                topk: vec![5, 10, 20],
                proxy: TeacherMode::Ftd,
            },
        }
    }
}

macro_rules! fields {
    ($($key:literal => $($path:ident).+;)*) => {
        /// Every accepted key, in documentation order.
        pub const KEYS: &[&str] = &[$($key),*];

        impl RunConfig {
            fn set_value(&mut self, key: &str, v: &Value) -> Result<(), String> {
                match key {
                    $($key => self.$($path).+ = Field::from_json(v)?,)*
                    _ => return Err("unknown key".into()),
                }
                Ok(())
            }

            /// `(key, value)` for every field.
            pub fn entries(&self) -> Vec<(&'static str, Value)> {
                vec![$(($key, self.$($path).+.to_json())),*]
            }
        }
    };
}

fields! {
    "seed" => seed;
    "output_dir" => output_dir;
    "threads" => threads;
    "dataset.source" => dataset.source;
    "dataset.classes" => dataset.classes;
    "dataset.per_class" => dataset.per_class;
    "dataset.test_per_class" => dataset.test_per_class;
    "dataset.dim" => dataset.dim;
    "dataset.separation" => dataset.separation;
    "dataset.noise" => dataset.noise;
    "dataset.train_images" => dataset.train_images;
    "dataset.train_labels" => dataset.train_labels;
    "dataset.test_images" => dataset.test_images;
    "dataset.test_labels" => dataset.test_labels;
    "dataset.train_csv" => dataset.train_csv;
    "dataset.test_csv" => dataset.test_csv;
    "dataset.shape" => dataset.shape;
    "model.family" => model.family;
    "model.width" => model.width;
    "model.depth" => model.depth;
    "model.norm" => model.norm;
    "model.activation" => model.activation;
    "model.pooling" => model.pooling;
    "buffer.mode" => buffer.mode;
    "buffer.count" => buffer.count;
    "buffer.rho" => buffer.rho;
    "buffer.alpha" => buffer.alpha;
    "buffer.lr" => buffer.lr;
    "buffer.epochs" => buffer.epochs;
    "buffer.batch_size" => buffer.batch_size;
    "buffer.expert_epochs" => buffer.expert_epochs;
    "distill.teacher" => distill.teacher;
    "distill.ipc" => distill.ipc;
    "distill.init" => distill.init;
    "distill.syn_steps" => distill.syn_steps;
    "distill.max_start_epoch" => distill.max_start_epoch;
    "distill.lr_pixels" => distill.lr_pixels;
    "distill.lr_step_size" => distill.lr_step_size;
    "distill.iterations" => distill.iterations;
    "distill.noise" => distill.noise;
    "distill.noise_sigma" => distill.noise_sigma;
    "distill.ema_decay" => distill.ema_decay;
    "distill.batch_cap" => distill.batch_cap;
    "distill.step_size" => distill.step_size;
    "eval.seeds" => eval.seeds;
    "eval.iterations" => eval.iterations;
    "eval.use_ema" => eval.use_ema;
    "eval.baselines" => eval.baselines;
    "diagnose.interval" => diagnose.interval;
    "diagnose.starts" => diagnose.starts;
    "diagnose.power_iters" => diagnose.power_iters;
    "diagnose.power_tol" => diagnose.power_tol;
    "diagnose.rho" => diagnose.rho;
    "diagnose.all_epochs" => diagnose.all_epochs;
    "nas.widths" => nas.widths;
    "nas.depths" => nas.depths;
    "nas.norms" => nas.norms;
    "nas.activations" => nas.activations;
    "nas.poolings" => nas.poolings;
    "nas.repeats" => nas.repeats;
    "nas.epochs" => nas.epochs;
    "nas.proxy_epochs" => nas.proxy_epochs;
    "nas.batch_size" => nas.batch_size;
    "nas.lr" => nas.lr;
    "nas.topk" => nas.topk;
    "nas.proxy" => nas.proxy;
}

/// Keys that only affect where and how fast a run happens, not its results.
const UNHASHED: &[&str] = &["output_dir", "threads"];

/// 1-based line of the first `"key":` in `text`.
fn key_line(text: &str, key: &str) -> Option<usize> {
    let quoted = format!("\"{key}\"");
    text.lines().position(|line| {
        line.match_indices(&quoted).any(|(i, _)| line[i + quoted.len()..].trim_start().starts_with(':'))
    })
    .map(|i| i + 1)
}

pub fn hash_hex(hash: u64) -> String {
    format!("{hash:016x}")
}

impl RunConfig {
    /// Builds a configuration from an optional JSON file and `key=value`
    /// overrides, then validates it.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| ConfigError {
                origin: Origin::File { path: p.display().to_string(), line: 0 },
                key: None,
                message: e.to_string(),
            })?),
            None => None,
        };
        let name = path.map(|p| p.display().to_string()).unwrap_or_default();
        Self::from_parts(text.as_deref().map(|t| (name.as_str(), t)), overrides)
    }

    /// [`RunConfig::load`] with the file contents supplied directly.
    pub fn from_parts(file: Option<(&str, &str)>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut origins = BTreeMap::new();
        if let Some((name, text)) = file {
            let map: Map<String, Value> = serde_json::from_str(text).map_err(|e| ConfigError {
                origin: Origin::File { path: name.to_string(), line: e.line() },
                key: None,
                message: format!("invalid JSON: {e}"),
            })?;
            for (key, value) in &map {
                let origin = Origin::File { path: name.to_string(), line: key_line(text, key).unwrap_or(0) };
                cfg.apply(key, value, origin.clone())?;
                origins.insert(key.clone(), origin);
            }
        }
        for item in overrides {
            let (key, raw) = item.split_once('=').ok_or_else(|| ConfigError {
                origin: Origin::Override,
                key: None,
                message: format!("expected key=value, got `{item}`"),
            })?;
            let key = key.trim();
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            cfg.apply(key, &value, Origin::Override)?;
            origins.insert(key.to_string(), Origin::Override);
        }
        if let Err((key, message)) = cfg.check() {
            let origin = origins.get(key).cloned().unwrap_or(Origin::Default);
            return Err(ConfigError::at(origin, key, message));
        }
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &Value, origin: Origin) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            let hint = if value.is_object() { " (nested sections are not supported; use dotted keys)" } else { "" };
            return Err(ConfigError::at(origin, key, format!("unknown key{hint}")));
        }
        self.set_value(key, value).map_err(|m| ConfigError::at(origin, key, m))
    }

    /// First out-of-range field, as `(key, message)`.
    fn check(&self) -> Result<(), (&'static str, String)> {
        fn at_least(key: &'static str, v: usize, min: usize) -> Result<(), (&'static str, String)> {
            if v < min {
                return Err((key, format!("must be at least {min}, got {v}")));
            }
            Ok(())
        }
        fn within(key: &'static str, v: f64, lo: f64, hi: f64) -> Result<(), (&'static str, String)> {
            if !(lo..=hi).contains(&v) {
                return Err((key, format!("must lie in [{lo}, {hi}], got {v}")));
            }
            Ok(())
        }
        fn positive(key: &'static str, v: f64) -> Result<(), (&'static str, String)> {
            if !(v > 0.0 && v.is_finite()) {
                return Err((key, format!("must be a positive number, got {v}")));
            }
            Ok(())
        }
        let d = &self.dataset;
        at_least("dataset.classes", d.classes, 2)?;
        at_least("dataset.per_class", d.per_class, 1)?;
        at_least("dataset.test_per_class", d.test_per_class, 1)?;
        at_least("dataset.dim", d.dim, 1)?;
        positive("dataset.separation", d.separation)?;
        if let Some(n) = d.noise {
            within("dataset.noise", n, 0.0, f64::MAX)?;
        }
        match d.source {
            Source::Toy(ToyKind::TinyDigits) if d.classes > 10 => {
                return Err(("dataset.classes", format!("tinydigits has 10 glyphs, got {}", d.classes)));
            }
            Source::Idx => {
                for (k, v) in [
                    ("dataset.train_images", &d.train_images),
                    ("dataset.train_labels", &d.train_labels),
                    ("dataset.test_images", &d.test_images),
                    ("dataset.test_labels", &d.test_labels),
                ] {
                    if v.is_none() {
                        return Err((k, "required when dataset.source is idx".into()));
                    }
                }
            }
            Source::Csv => {
                for (k, v) in [("dataset.train_csv", &d.train_csv), ("dataset.test_csv", &d.test_csv)] {
                    if v.is_none() {
                        return Err((k, "required when dataset.source is csv".into()));
                    }
                }
                if d.shape.len() != 3 || d.shape.contains(&0) {
                    return Err(("dataset.shape", format!("must be three positive sizes, got {:?}", d.shape)));
                }
            }
            _ => {}
        }
        at_least("model.width", self.model.width, 1)?;
        at_least("model.depth", self.model.depth, 1)?;

        let b = &self.buffer;
        at_least("buffer.count", b.count, 1)?;
        within("buffer.rho", b.rho, 0.0, f64::MAX)?;
        within("buffer.alpha", b.alpha, 0.0, 1.0)?;
        positive("buffer.lr", b.lr)?;
        at_least("buffer.epochs", b.epochs, 1)?;
        at_least("buffer.batch_size", b.batch_size, 1)?;
        at_least("buffer.expert_epochs", b.expert_epochs, 1)?;
        if b.expert_epochs > b.epochs {
            return Err(("buffer.expert_epochs", format!("exceeds buffer.epochs = {}", b.epochs)));
        }

        let s = &self.distill;
        at_least("distill.ipc", s.ipc, 1)?;
        at_least("distill.syn_steps", s.syn_steps, 1)?;
        at_least("distill.iterations", s.iterations, 1)?;
        if s.max_start_epoch + b.expert_epochs > b.epochs {
            return Err((
                "distill.max_start_epoch",
                format!("start {} plus {} expert epochs passes buffer.epochs = {}", s.max_start_epoch, b.expert_epochs, b.epochs),
            ));
        }
        within("distill.lr_pixels", s.lr_pixels, 0.0, f64::MAX)?;
        within("distill.lr_step_size", s.lr_step_size, 0.0, f64::MAX)?;
        within("distill.noise_sigma", s.noise_sigma, 0.0, f64::MAX)?;
        within("distill.ema_decay", s.ema_decay, 0.0, 1.0)?;
        at_least("distill.batch_cap", s.batch_cap, 1)?;
        if let Some(eta) = s.step_size {
            positive("distill.step_size", eta)?;
        }

        at_least("eval.seeds", self.eval.seeds, 1)?;
        at_least("eval.iterations", self.eval.iterations, 1)?;

        let g = &self.diagnose;
        if let Some(i) = g.interval {
            at_least("diagnose.interval", i, 1)?;
        }
        if let Some(&e) = g.starts.iter().find(|&&e| e > b.epochs) {
            return Err(("diagnose.starts", format!("epoch {e} is beyond buffer.epochs = {}", b.epochs)));
        }
        at_least("diagnose.power_iters", g.power_iters, 1)?;
        positive("diagnose.power_tol", g.power_tol)?;
        within("diagnose.rho", g.rho, 0.0, f64::MAX)?;

        let n = &self.nas;
        for (key, len) in [
            ("nas.widths", n.widths.len()),
            ("nas.depths", n.depths.len()),
            ("nas.norms", n.norms.len()),
            ("nas.activations", n.activations.len()),
            ("nas.poolings", n.poolings.len()),
        ] {
            if len == 0 {
                return Err((key, "must not be empty".into()));
            }
        }
        if n.widths.contains(&0) {
            return Err(("nas.widths", "widths must be at least 1".into()));
        }
        if n.depths.contains(&0) {
            return Err(("nas.depths", "depths must be at least 1".into()));
        }
        at_least("nas.repeats", n.repeats, 1)?;
        at_least("nas.epochs", n.epochs, 1)?;
        at_least("nas.proxy_epochs", n.proxy_epochs, 1)?;
        at_least("nas.batch_size", n.batch_size, 1)?;
        positive("nas.lr", n.lr)?;
        if let Some(&k) = n.topk.iter().find(|&&k| k < 2) {
            return Err(("nas.topk", format!("k must be at least 2, got {k}")));
        }
        Ok(())
    }

    /// Fully resolved configuration as a flat JSON object.
    pub fn to_json(&self) -> Value {
        Value::Object(self.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }

    /// First 8 bytes (big-endian) of the SHA-256 of the canonical JSON of
    /// every result-affecting key.
    pub fn hash(&self) -> u64 {
        let canonical: Map<String, Value> = self
            .entries()
            .into_iter()
            .filter(|(k, _)| !UNHASHED.contains(k))
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let digest = Sha256::digest(Value::Object(canonical).to_string().as_bytes());
        u64::from_be_bytes(digest[..8].try_into().unwrap())
    }

    pub fn toy_spec(&self, kind: ToyKind) -> ToySpec {
        let d = &self.dataset;
        let mut spec = ToySpec::new(kind, d.classes, d.per_class, rng::derive_seed(self.seed, "dataset"));
        spec.test_per_class = d.test_per_class;
        spec.dim = d.dim;
        spec.separation = d.separation;
        if let Some(n) = d.noise {
            spec.noise = n;
        }
        spec
    }

    pub fn arch(&self, input: InputShape, classes: usize) -> ArchSpec {
        let m = &self.model;
        ArchSpec {
            family: m.family,
            width: m.width,
            depth: m.depth,
            norm: m.norm,
            activation: m.activation,
            pooling: m.pooling,
            input,
            classes,
        }
    }

    /// Teacher `index` in `count`; the seed does not depend on the mode so
    /// that sgd and ftd teachers are paired.
    pub fn teacher(&self, index: usize) -> FtdConfig {
        let b = &self.buffer;
        FtdConfig {
            rho: b.rho,
            alpha: b.alpha,
            lr: b.lr,
            epochs: b.epochs,
            batch_size: b.batch_size,
            seed: rng::derive_indexed(self.seed, "buffer", index as u64),
        }
    }

    pub fn distillation(&self) -> DistillConfig {
        let s = &self.distill;
        DistillConfig {
            syn_steps: s.syn_steps,
            expert_epochs: self.buffer.expert_epochs,
            max_start_epoch: s.max_start_epoch,
            lr_pixels: s.lr_pixels,
            lr_step_size: s.lr_step_size,
            iterations: s.iterations,
            noise: if s.noise { NoiseSpec::relative(s.noise_sigma) } else { NoiseSpec::disabled() },
            ema_decay: s.ema_decay,
            batch_cap: s.batch_cap,
            seed: rng::derive_seed(self.seed, "distill"),
        }
    }

    pub fn synthetic_seed(&self) -> u64 {
        rng::derive_seed(self.seed, "synthetic-init")
    }

    pub fn initial_step_size(&self) -> f64 {
        self.distill.step_size.unwrap_or(self.buffer.lr)
    }

    pub fn eval_seeds(&self) -> Vec<u64> {
        (0..self.eval.seeds as u64).map(|k| rng::derive_indexed(self.seed, "eval", k)).collect()
    }

    pub fn ablation_starts(&self) -> Vec<usize> {
        if self.diagnose.starts.is_empty() {
            (0..=self.buffer.epochs).step_by(self.buffer.expert_epochs).collect()
        } else {
            self.diagnose.starts.clone()
        }
    }

    pub fn search_space(&self) -> SearchSpace {
        let n = &self.nas;
        SearchSpace {
            widths: n.widths.clone(),
            depths: n.depths.clone(),
            norms: n.norms.clone(),
            activations: n.activations.clone(),
            poolings: n.poolings.clone(),
        }
    }

    /// Training used on real data, or on the synthetic proxy when `proxy`.
    pub fn candidate_training(&self, proxy: bool) -> CandidateTraining {
        let epochs = if proxy { self.nas.proxy_epochs } else { self.nas.epochs };
        CandidateTraining { epochs, batch_size: self.nas.batch_size, lr: self.nas.lr }
    }

    pub fn nas_seed(&self) -> u64 {
        rng::derive_seed(self.seed, "nas")
    }
}
