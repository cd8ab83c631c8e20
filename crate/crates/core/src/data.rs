//! Motion sequences, their text format and synthetic kinematic data.
//!
//! `.mseq` files hold a header line `mseq v1 J T D fps` followed by `T`
//! lines of `J·D` floats (joint-major within a frame). Values are printed
//! with 17 significant digits so a write/read cycle is exact.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graphs::SkeletonSpec;
use crate::numerics::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    pub fps: f64,
    /// `[J, T, D]`
    pub values: Tensor,
}

impl MotionSequence {
    pub fn new(values: Tensor, fps: f64) -> Result<Self> {
        if values.rank() != 3 {
            return Err(Error::Domain(format!("motion values must be [J, T, D], got {:?}", values.shape())));
        }
        if !values.is_finite() {
            return Err(Error::Numeric("motion values must be finite".into()));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::Domain(format!("fps must be positive, got {fps}")));
        }
        Ok(MotionSequence { fps, values })
    }

    pub fn joints(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn dims(&self) -> usize {
        self.values.shape()[2]
    }

    /// Frames `range` as a new sequence.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        let (j, t, d) = (self.joints(), self.frames(), self.dims());
        if range.is_empty() || range.end > t {
            return Err(Error::Domain(format!("frame range {range:?} invalid for {t} frames")));
        }
        let n = range.len();
        let mut data = Vec::with_capacity(j * n * d);
        for jj in 0..j {
            data.extend_from_slice(&self.values.data()[(jj * t + range.start) * d..(jj * t + range.end) * d]);
        }
        Ok(MotionSequence {
            fps: self.fps,
            values: Tensor::new(&[j, n, d], data)?,
        })
    }

    /// Frames of `self` followed by frames of `next`.
    pub fn concat(&self, next: &MotionSequence) -> Result<Self> {
        let (j, d) = (self.joints(), self.dims());
        if next.joints() != j || next.dims() != d {
            return Err(Error::shape("MotionSequence::concat", self.values.shape(), next.values.shape()));
        }
        let (t1, t2) = (self.frames(), next.frames());
        let mut data = Vec::with_capacity(j * (t1 + t2) * d);
        for jj in 0..j {
            data.extend_from_slice(&self.values.data()[jj * t1 * d..(jj + 1) * t1 * d]);
            data.extend_from_slice(&next.values.data()[jj * t2 * d..(jj + 1) * t2 * d]);
        }
        Ok(MotionSequence {
            fps: self.fps,
            values: Tensor::new(&[j, t1 + t2, d], data)?,
        })
    }

    pub fn to_text(&self) -> String {
        let (j, t, d) = (self.joints(), self.frames(), self.dims());
        let mut s = String::new();
        writeln!(s, "mseq v1 {j} {t} {d} {}", self.fps).unwrap();
        for tt in 0..t {
            for jj in 0..j {
                for c in 0..d {
                    if jj + c > 0 {
                        s.push(' ');
                    }
                    write!(s, "{:.16e}", self.values.get(&[jj, tt, c])).unwrap();
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: source.to_string(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty file, expected mseq header".into()))?;
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() != 6 || tok[0] != "mseq" || tok[1] != "v1" {
            return Err(err(1, format!("malformed header {header:?}, expected `mseq v1 J T D fps`")));
        }
        let dim = |s: &str| match s.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(err(1, format!("expected a positive extent, got {s:?}"))),
        };
        let (j, t, d) = (dim(tok[2])?, dim(tok[3])?, dim(tok[4])?);
        let fps: f64 = tok[5]
            .parse()
            .ok()
            .filter(|f: &f64| *f > 0.0 && f.is_finite())
            .ok_or_else(|| err(1, format!("expected a positive fps, got {:?}", tok[5])))?;
        let mut values = Tensor::zeros(&[j, t, d]);
        for tt in 0..t {
            let lineno = tt + 2;
            let (_, line) = lines
                .next()
                .ok_or_else(|| err(lineno, format!("missing frame line {lineno} of {}", t + 1)))?;
            let nums: Vec<&str> = line.split_whitespace().collect();
            if nums.len() != j * d {
                return Err(err(lineno, format!("expected {} values, found {}", j * d, nums.len())));
            }
            for (k, s) in nums.iter().enumerate() {
                let v: f64 = s.parse().map_err(|_| err(lineno, format!("bad number {s:?}")))?;
                if !v.is_finite() {
                    return Err(err(lineno, format!("non-finite value {s:?}")));
                }
                values.set(&[k / d, tt, k % d], v);
            }
        }
        if let Some((i, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(err(i + 1, format!("unexpected trailing line {extra:?}")));
        }
        Ok(MotionSequence { fps, values })
    }
}

pub fn read_mseq(path: impl AsRef<Path>) -> Result<MotionSequence> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MotionSequence::parse(&text, &path.display().to_string())
}

pub fn write_mseq(seq: &MotionSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, seq.to_text()).map_err(|e| Error::io(path, e))
}

/// Repeats the last frame of a `[J, K, D]` tensor `extra` more times.
pub fn duplicate_last_pose(observed: &Tensor, extra: usize) -> Result<Tensor> {
    if observed.rank() != 3 {
        return Err(Error::Domain(format!("expected [J, K, D], got {:?}", observed.shape())));
    }
    let (j, k, d) = (observed.shape()[0], observed.shape()[1], observed.shape()[2]);
    let t = k + extra;
    let mut data = Vec::with_capacity(j * t * d);
    for jj in 0..j {
        let row = &observed.data()[jj * k * d..(jj + 1) * k * d];
        data.extend_from_slice(row);
        let last = &row[(k - 1) * d..];
        for _ in 0..extra {
            data.extend_from_slice(last);
        }
    }
    Tensor::new(&[j, t, d], data)
}

/// 1-based future frame closest to `ms` milliseconds.
pub fn ms_to_frame(ms: f64, fps: f64) -> Result<usize> {
    if !(ms > 0.0 && fps > 0.0) {
        return Err(Error::Domain(format!("horizon {ms} ms at {fps} fps must be positive")));
    }
    let f = (ms * fps / 1000.0).round();
    if f < 1.0 {
        return Err(Error::Domain(format!("horizon {ms} ms is shorter than one frame at {fps} fps")));
    }
    Ok(f as usize)
}

/// Observed frames and the frames that follow them.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub observed: MotionSequence,
    pub future: MotionSequence,
}

impl Sample {
    pub fn full(&self) -> MotionSequence {
        self.observed.concat(&self.future).expect("matching extents")
    }

    pub fn split(seq: &MotionSequence, observed: usize) -> Result<Self> {
        if observed == 0 || observed >= seq.frames() {
            return Err(Error::Domain(format!(
                "cannot split {} frames after frame {observed}",
                seq.frames()
            )));
        }
        Ok(Sample {
            observed: seq.slice(0..observed)?,
            future: seq.slice(observed..seq.frames())?,
        })
    }
}

/// Seeded sine-driven kinematic chains.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub joints: usize,
    pub observed: usize,
    pub future: usize,
    pub fps: f64,
    pub chains: Vec<Vec<usize>>,
    /// Hz, one per chain.
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
    /// Phase offset added per link along a chain, radians.
    pub lag: f64,
    /// Relative per-sample frequency perturbation, uniform in `±jitter`.
    pub jitter: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// Twelve joints as four three-link chains.
    fn default() -> Self {
        SyntheticSpec {
            joints: 12,
            observed: 10,
            future: 25,
            fps: 25.0,
            chains: (0..4).map(|c| (3 * c..3 * c + 3).collect()).collect(),
            frequencies: vec![0.6, 0.8, 1.0, 1.2],
            amplitudes: vec![1.0, 0.8, 1.2, 0.9],
            lag: 0.6,
            jitter: 0.25,
            noise: 0.01,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.chains.is_empty() || self.chains.iter().any(|c| c.is_empty()) {
            return Err(Error::Config("synthetic chains must be non-empty".into()));
        }
        if self.frequencies.len() != self.chains.len() || self.amplitudes.len() != self.chains.len() {
            return Err(Error::Config("need one frequency and one amplitude per chain".into()));
        }
        if self.amplitudes.iter().any(|&a| !(a >= 0.0)) || !(self.noise >= 0.0) || !(self.jitter >= 0.0) {
            return Err(Error::Config("amplitudes, noise and jitter must be non-negative".into()));
        }
        if self.observed == 0 || self.joints == 0 || !(self.fps > 0.0) {
            return Err(Error::Config("joints, observed frames and fps must be positive".into()));
        }
        let mut seen = vec![false; self.joints];
        for &j in self.chains.iter().flatten() {
            if j >= self.joints || seen[j] {
                return Err(Error::Config(format!("chain joint {j} out of range or repeated")));
            }
            seen[j] = true;
        }
        Ok(())
    }

    /// Rest position of joint `j`: chain `c` link `k` sits at `(c, k, 0)`.
    fn center(&self, j: usize) -> [f64; 3] {
        for (c, chain) in self.chains.iter().enumerate() {
            if let Some(k) = chain.iter().position(|&x| x == j) {
                return [c as f64, k as f64, 0.0];
            }
        }
        [0.0, 0.0, 0.0]
    }
}

impl SyntheticSpec {
    /// Bones along each chain plus every chain root tied to the first one;
    /// chains become limbs `chain{i}`, mirrored in consecutive pairs.
    pub fn skeleton(&self) -> SkeletonSpec {
        let mut bones = Vec::new();
        for chain in &self.chains {
            bones.extend(chain.windows(2).map(|w| (w[0], w[1])));
        }
        let root = self.chains[0][0];
        bones.extend(self.chains[1..].iter().map(|c| (root, c[0])));
        let limbs: Vec<(String, Vec<usize>)> =
            self.chains.iter().enumerate().map(|(i, c)| (format!("chain{i}"), c.clone())).collect();
        let mirrors = limbs.chunks_exact(2).map(|p| (p[0].0.clone(), p[1].0.clone())).collect();
        SkeletonSpec {
            joint_count: self.joints,
            bones,
            limbs,
            mirrors,
        }
    }
}

/// `count` sequences of `observed + future` frames, split at `observed`.
pub fn synth_dataset(spec: &SyntheticSpec, count: usize) -> Result<Vec<Sample>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let t = spec.observed + spec.future;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut values = Tensor::zeros(&[spec.joints, t, 3]);
        for j in 0..spec.joints {
            values.data_mut()[j * t * 3..(j + 1) * t * 3]
                .chunks_mut(3)
                .for_each(|p| p.copy_from_slice(&spec.center(j)));
        }
        for (c, chain) in spec.chains.iter().enumerate() {
            let f = spec.frequencies[c] * (1.0 + rng.random_range(-1.0..=1.0) * spec.jitter);
            let phase = rng.random_range(0.0..2.0 * PI);
            let a = spec.amplitudes[c];
            for (link, &j) in chain.iter().enumerate() {
                for tt in 0..t {
                    let arg = 2.0 * PI * f * tt as f64 / spec.fps + phase + link as f64 * spec.lag;
                    for d in 0..3 {
                        let w = arg + d as f64 * PI / 3.0;
                        let v = values.get(&[j, tt, d]) + a * w.sin();
                        values.set(&[j, tt, d], v);
                    }
                }
            }
        }
        if spec.noise > 0.0 {
            for v in values.data_mut() {
                *v += spec.noise * normal.sample(&mut rng);
            }
        }
        let seq = MotionSequence::new(values, spec.fps)?;
        out.push(Sample::split(&seq, spec.observed)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Split::Train, Split::Val, Split::Test].into_iter().find(|x| x.name() == s)
    }
}

/// `split path` lines; relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub entries: Vec<(Split, PathBuf)>,
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg,
            };
            let (split, file) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| err(format!("expected `train|val|test PATH`, got {line:?}")))?;
            let split = Split::parse(split).ok_or_else(|| err(format!("unknown split {split:?}")))?;
            entries.push((split, base.join(file.trim())));
        }
        Ok(Manifest { entries })
    }

    /// Paths below the manifest's directory are written relative to it.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        let mut s = String::new();
        for (split, p) in &self.entries {
            let shown = p.strip_prefix(base).unwrap_or(p);
            writeln!(s, "{} {}", split.name(), shown.display()).unwrap();
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn paths(&self, split: Split) -> impl Iterator<Item = &Path> {
        self.entries.iter().filter(move |(s, _)| *s == split).map(|(_, p)| p.as_path())
    }

    /// Loads every sequence of `split`, divided after `observed` frames.
    pub fn load(&self, split: Split, observed: usize) -> Result<Vec<Sample>> {
        self.paths(split).map(|p| Sample::split(&read_mseq(p)?, observed)).collect()
    }
}

/// Writes each sample as `{split}_{index:04}.mseq` under `dir` plus `manifest.txt`.
pub fn write_dataset(dir: impl AsRef<Path>, splits: &[(Split, &[Sample])]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Manifest::default();
    for (split, samples) in splits {
        for (i, s) in samples.iter().enumerate() {
            let p = dir.join(format!("{}_{i:04}.mseq", split.name()));
            write_mseq(&s.full(), &p)?;
            manifest.entries.push((*split, p));
        }
    }
    let path = dir.join("manifest.txt");
    manifest.write(&path)?;
    Ok(path)
}
