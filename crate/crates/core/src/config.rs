//! Flat `key = value` text files: experiment configuration and task files.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::coding::L1Config;
use crate::error::{Error, Result};
use crate::image::{load_pgm_sequence, Point};
use crate::ndp::{FeatureKind, FeatureSpec, TrainConfig};
use crate::tracking::TrackingTask;

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped;
/// a repeated key is an error.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Line { line: i + 1, message: format!("expected `key = value`, found `{line}`") })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k.contains(char::is_whitespace) {
            return Err(Error::Line { line: i + 1, message: format!("invalid key `{k}`") });
        }
        if !seen.insert(k.to_string()) {
            return Err(Error::Line { line: i + 1, message: format!("duplicate key `{k}`") });
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

fn value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::invalid(format!("invalid value `{v}` for `{key}`")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).map(|s| value(key, s)).collect()
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        _ => Err(Error::invalid(format!("invalid value `{v}` for `{key}` (expected true/false)"))),
    }
}

/// Shared settings for data generation, training and the experiment drivers.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub kinds: Vec<FeatureKind>,
    pub tasks: usize,
    pub frames: usize,
    pub image_size: usize,
    pub spectral_exponent: f64,
    pub target_speed: f64,
    pub region: usize,
    pub patch: usize,
    pub lambda: f64,
    pub l1_max_iter: usize,
    pub accelerated: bool,
    pub normalize_atoms: bool,
    pub whitening_cutoff: f64,
    pub partitions: Vec<usize>,
    pub eta: Option<f64>,
    pub max_epochs: usize,
    pub tol: f64,
    pub max_samples: Option<usize>,
    /// Patches drawn for capacity, correlation and entropy statistics.
    pub patches: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            kinds: FeatureKind::ALL.to_vec(),
            tasks: 4,
            frames: 5,
            image_size: 96,
            spectral_exponent: 2.0,
            target_speed: 12.0,
            region: 16,
            patch: 8,
            lambda: 0.05,
            l1_max_iter: 10_000,
            accelerated: true,
            normalize_atoms: false,
            whitening_cutoff: crate::coding::DEFAULT_WHITENING_CUTOFF,
            partitions: vec![8, 16, 32, 64],
            eta: None,
            max_epochs: 100_000,
            tol: 1e-8,
            max_samples: None,
            patches: 1000,
        }
    }
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 20] = [
        "seed",
        "kinds",
        "tasks",
        "frames",
        "image_size",
        "spectral_exponent",
        "target_speed",
        "region",
        "patch",
        "lambda",
        "l1_max_iter",
        "accelerated",
        "normalize_atoms",
        "whitening_cutoff",
        "partitions",
        "eta",
        "max_epochs",
        "tol",
        "max_samples",
        "patches",
    ];

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        c.apply(&parse_key_values(text)?)?;
        Ok(c)
    }

    /// Overrides fields in order; later pairs win.
    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        self.validate()
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = value(key, v)?,
            "kinds" => {
                self.kinds = v
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(FeatureKind::parse)
                    .collect::<Result<_>>()?
            }
            "tasks" => self.tasks = value(key, v)?,
            "frames" => self.frames = value(key, v)?,
            "image_size" => self.image_size = value(key, v)?,
            "spectral_exponent" => self.spectral_exponent = value(key, v)?,
            "target_speed" => self.target_speed = value(key, v)?,
            "region" => self.region = value(key, v)?,
            "patch" => self.patch = value(key, v)?,
            "lambda" => self.lambda = value(key, v)?,
            "l1_max_iter" => self.l1_max_iter = value(key, v)?,
            "accelerated" => self.accelerated = flag(key, v)?,
            "normalize_atoms" => self.normalize_atoms = flag(key, v)?,
            "whitening_cutoff" => self.whitening_cutoff = value(key, v)?,
            "partitions" => self.partitions = list(key, v)?,
            "eta" => self.eta = if v == "auto" { None } else { Some(value(key, v)?) },
            "max_epochs" => self.max_epochs = value(key, v)?,
            "tol" => self.tol = value(key, v)?,
            "max_samples" => self.max_samples = if v == "all" { None } else { Some(value(key, v)?) },
            "patches" => self.patches = value(key, v)?,
            _ => return Err(Error::invalid(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tasks", self.tasks),
            ("frames", self.frames),
            ("image_size", self.image_size),
            ("region", self.region),
            ("patch", self.patch),
            ("max_epochs", self.max_epochs),
            ("patches", self.patches),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("`{k}` must be positive")));
        }
        if self.region % self.patch != 0 {
            return Err(Error::invalid(format!("region {} is not divisible by patch {}", self.region, self.patch)));
        }
        if self.region > self.image_size {
            return Err(Error::invalid("region is larger than the image"));
        }
        if self.kinds.is_empty() {
            return Err(Error::invalid("`kinds` is empty"));
        }
        if self.partitions.contains(&0) {
            return Err(Error::invalid("partition counts must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("`lambda` must be finite and non-negative"));
        }
        if self.eta.is_some_and(|e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::invalid("`eta` must be positive"));
        }
        if !(self.tol > 0.0) || !(self.target_speed >= 0.0) || !(self.whitening_cutoff > 0.0) {
            return Err(Error::invalid("`tol`, `target_speed` and `whitening_cutoff` must be positive"));
        }
        Ok(())
    }

    pub fn l1(&self) -> L1Config {
        L1Config { lambda: self.lambda, max_iter: self.l1_max_iter, accelerated: self.accelerated, ..L1Config::default() }
    }

    pub fn feature_spec(&self, kind: FeatureKind) -> FeatureSpec {
        FeatureSpec {
            kind,
            patch_side: self.patch,
            dict_seed: self.seed,
            normalize_atoms: self.normalize_atoms,
            l1: self.l1(),
            whitening_cutoff: self.whitening_cutoff,
            ..FeatureSpec::new(kind)
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig { eta: self.eta, max_epochs: self.max_epochs, tol: self.tol, max_samples: self.max_samples }
    }
}

/// A tracking task on disk: frame files, a targets file, region side and
/// start state. Relative paths resolve against the task file's directory.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskFile {
    pub frames: Vec<PathBuf>,
    pub targets: PathBuf,
    pub a: usize,
    pub x1: Point,
}

pub fn parse_task_file(text: &str, base: &Path) -> Result<TaskFile> {
    let (mut frames, mut targets, mut a, mut x1) = (None, None, None, None);
    for (k, v) in parse_key_values(text)? {
        match k.as_str() {
            "frames" => frames = Some(v.split_whitespace().map(|f| base.join(f)).collect::<Vec<_>>()),
            "targets" => targets = Some(base.join(&v)),
            "a" => a = Some(value::<usize>("a", &v)?),
            "x1" => {
                let xy: Vec<i64> = list("x1", &v)?;
                match xy[..] {
                    [x, y] => x1 = Some(Point::new(x, y)),
                    _ => return Err(Error::invalid("`x1` needs two coordinates")),
                }
            }
            _ => return Err(Error::invalid(format!("unknown task key `{k}`"))),
        }
    }
    let missing = |k: &str| Error::invalid(format!("task file is missing `{k}`"));
    let frames = frames.ok_or_else(|| missing("frames"))?;
    if frames.is_empty() {
        return Err(Error::EmptySequence);
    }
    let a = a.ok_or_else(|| missing("a"))?;
    if a == 0 {
        return Err(Error::invalid("`a` must be positive"));
    }
    Ok(TaskFile { frames, targets: targets.ok_or_else(|| missing("targets"))?, a, x1: x1.ok_or_else(|| missing("x1"))? })
}

/// Writes paths as given; callers pass names relative to the task file.
pub fn format_task_file(frames: &[impl AsRef<Path>], targets: impl AsRef<Path>, a: usize, x1: Point) -> String {
    let names: Vec<String> = frames.iter().map(|f| f.as_ref().display().to_string()).collect();
    format!(
        "frames = {}\ntargets = {}\na = {a}\nx1 = {} {}\n",
        names.join(" "),
        targets.as_ref().display(),
        x1.x,
        x1.y
    )
}

pub fn load_task(path: &Path) -> Result<TrackingTask> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let tf = parse_task_file(&text, base)?;
    let seq = load_pgm_sequence(&tf.frames, &tf.targets)?;
    TrackingTask::new(seq, tf.a, tf.x1)
}
