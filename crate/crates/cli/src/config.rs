//! Flat `section.key=value` configuration shared by every subcommand.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use stgc_core::analysis::BenchConfig;
use stgc_core::data::SyntheticSpec;
use stgc_core::graphs::SkeletonSpec;
use stgc_core::model::ModelConfig;
use stgc_core::train_eval::{HorizonMode, TrainConfig, DEFAULT_HORIZONS_MS};

/// Where samples come from: a manifest, or synthesized in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub manifest: Option<PathBuf>,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
    pub chains: usize,
    pub links: usize,
    pub fps: f64,
    pub noise: f64,
    pub jitter: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let s = SyntheticSpec::default();
        DataConfig {
            manifest: None,
            train: 200,
            val: 0,
            test: 50,
            seed: s.seed,
            chains: s.chains.len(),
            links: s.chains[0].len(),
            fps: s.fps,
            noise: s.noise,
            jitter: s.jitter,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub horizons: Vec<f64>,
    pub horizon_mode: HorizonMode,
    pub checkpoint: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            horizons: DEFAULT_HORIZONS_MS.to_vec(),
            horizon_mode: HorizonMode::AtFrame,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    pub model: ModelConfig,
    pub skeleton_path: Option<PathBuf>,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
    pub bench: BenchConfig,
    /// Keys given explicitly, e.g. `model.joints`.
    pub explicit: BTreeSet<String>,
}

impl Default for Config {
    fn default() -> Self {
        let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
        Config {
            model: ModelConfig::default(),
            skeleton_path: None,
            train: TrainConfig { threads, ..TrainConfig::default() },
            data: DataConfig::default(),
            eval: EvalConfig::default(),
            bench: BenchConfig::default(),
            explicit: BTreeSet::new(),
        }
    }
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| v.trim().parse().map_err(|_| anyhow!("{key}: bad list entry {v:?}")))
        .collect()
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| anyhow!("{key}: cannot parse {value:?}"))
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (section, name) = key
            .split_once('.')
            .ok_or_else(|| anyhow!("config key {key:?} needs a section prefix (model., train., data., eval., bench.)"))?;
        let value = value.trim();
        match (section, name) {
            ("model", "skeleton") => self.skeleton_path = Some(PathBuf::from(value)),
            ("model", _) => self.model.set(name, value)?,
            ("train", _) => self.train.set(name, value)?,
            ("data", "manifest") => self.data.manifest = Some(PathBuf::from(value)),
            ("data", "train") => self.data.train = parse(key, value)?,
            ("data", "val") => self.data.val = parse(key, value)?,
            ("data", "test") => self.data.test = parse(key, value)?,
            ("data", "seed") => self.data.seed = parse(key, value)?,
            ("data", "chains") => self.data.chains = parse(key, value)?,
            ("data", "links") => self.data.links = parse(key, value)?,
            ("data", "fps") => self.data.fps = parse(key, value)?,
            ("data", "noise") => self.data.noise = parse(key, value)?,
            ("data", "jitter") => self.data.jitter = parse(key, value)?,
            ("eval", "horizons") => self.eval.horizons = list(key, value)?,
            ("eval", "horizon_mode") => {
                self.eval.horizon_mode =
                    HorizonMode::parse(value).ok_or_else(|| anyhow!("{key}: expected at_frame or up_to, got {value:?}"))?
            }
            ("eval", "checkpoint") => self.eval.checkpoint = Some(PathBuf::from(value)),
            ("bench", "frames") => self.bench.frames = list(key, value)?,
            ("bench", "channels") => self.bench.channels = parse(key, value)?,
            ("bench", "repetitions") => self.bench.repetitions = parse(key, value)?,
            ("bench", "warmup") => self.bench.warmup = parse(key, value)?,
            ("bench", "seed") => self.bench.seed = parse(key, value)?,
            _ => bail!("unknown config key {key:?}"),
        }
        self.explicit.insert(key.to_string());
        Ok(())
    }

    /// `key=value` lines; blank lines and `#` comments are skipped.
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected key=value", path.display(), i + 1))?;
            self.set(k.trim(), v).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        }
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) -> Result<()> {
        for key in ["model.seed", "train.seed", "data.seed", "bench.seed"] {
            self.set(key, &seed.to_string())?;
        }
        Ok(())
    }

    /// Applies `STGC_THREADS` as an upper bound on training workers.
    pub fn cap_threads(&mut self, cap: Option<&str>) -> Result<()> {
        if let Some(cap) = cap {
            let n: usize = parse("STGC_THREADS", cap)?;
            if n == 0 {
                bail!("STGC_THREADS must be at least 1");
            }
            self.train.threads = self.train.threads.min(n);
        }
        Ok(())
    }

    pub fn synthetic(&self) -> SyntheticSpec {
        let d = &self.data;
        let base = SyntheticSpec::default();
        let cycle = |xs: &[f64]| (0..d.chains).map(|i| xs[i % xs.len()]).collect();
        SyntheticSpec {
            joints: d.chains * d.links,
            observed: self.model.observed,
            future: self.model.future,
            fps: d.fps,
            chains: (0..d.chains).map(|c| (c * d.links..(c + 1) * d.links).collect()).collect(),
            frequencies: cycle(&base.frequencies),
            amplitudes: cycle(&base.amplitudes),
            lag: base.lag,
            jitter: d.jitter,
            noise: d.noise,
            seed: d.seed,
        }
    }

    pub fn load_skeleton(&mut self) -> Result<()> {
        if let Some(p) = &self.skeleton_path {
            self.model.skeleton = Some(SkeletonSpec::read(p)?);
        }
        Ok(())
    }

    /// Resolved settings, one `key=value` per line, sections in fixed order.
    pub fn to_kv(&self) -> String {
        let mut lines = Vec::new();
        for (k, v) in self.model.to_kv() {
            lines.push(format!("model.{k}={v}"));
        }
        if let Some(p) = &self.skeleton_path {
            lines.push(format!("model.skeleton={}", p.display()));
        }
        for (k, v) in self.train.to_kv() {
            lines.push(format!("train.{k}={v}"));
        }
        let d = &self.data;
        if let Some(p) = &d.manifest {
            lines.push(format!("data.manifest={}", p.display()));
        }
        lines.extend([
            format!("data.train={}", d.train),
            format!("data.val={}", d.val),
            format!("data.test={}", d.test),
            format!("data.seed={}", d.seed),
            format!("data.chains={}", d.chains),
            format!("data.links={}", d.links),
            format!("data.fps={}", d.fps),
            format!("data.noise={}", d.noise),
            format!("data.jitter={}", d.jitter),
            format!("eval.horizons={}", join(&self.eval.horizons)),
            format!("eval.horizon_mode={}", self.eval.horizon_mode.name()),
        ]);
        if let Some(p) = &self.eval.checkpoint {
            lines.push(format!("eval.checkpoint={}", p.display()));
        }
        let b = &self.bench;
        lines.extend([
            format!("bench.frames={}", join(&b.frames)),
            format!("bench.channels={}", b.channels),
            format!("bench.repetitions={}", b.repetitions),
            format!("bench.warmup={}", b.warmup),
            format!("bench.seed={}", b.seed),
        ]);
        lines.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_unknown_keys_rejected() {
        let mut c = Config::default();
        assert!(c.set("model.nope", "1").is_err());
        assert!(c.set("joints", "12").is_err());
        assert!(c.set("other.joints", "12").is_err());
        assert!(c.set("train.epochs", "x").is_err());
    }

    #[test]
    fn test_kv_round_trip() {
        let mut c = Config::default();
        c.set("model.kind", "dtsd").unwrap();
        c.set("eval.horizons", "80, 160").unwrap();
        c.set("eval.horizon_mode", "up_to").unwrap();
        c.set("bench.frames", "8,12,16,24").unwrap();
        c.set_seed(9).unwrap();
        let text = c.to_kv();
        let mut d = Config::default();
        for line in text.lines() {
            let (k, v) = line.split_once('=').unwrap();
            d.set(k, v).unwrap();
        }
        assert_eq!(d.to_kv(), text);
        assert_eq!(d.eval.horizons, vec![80.0, 160.0]);
        assert_eq!(d.model.seed, 9);
    }

    #[test]
    fn test_thread_cap() {
        let mut c = Config::default();
        c.set("train.threads", "8").unwrap();
        c.cap_threads(Some("2")).unwrap();
        assert_eq!(c.train.threads, 2);
        c.cap_threads(None).unwrap();
        assert_eq!(c.train.threads, 2);
        assert!(c.cap_threads(Some("0")).is_err());
    }

    #[test]
    fn test_synthetic_layout() {
        let mut c = Config::default();
        c.set("data.chains", "5").unwrap();
        c.set("data.links", "2").unwrap();
        let s = c.synthetic();
        assert_eq!(s.joints, 10);
        assert_eq!(s.frequencies.len(), 5);
        s.validate().unwrap();
    }
}
