//! Position error metric, zero-velocity baseline, training and evaluation.

use std::fmt::Write as _;
use std::ops::Range;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{duplicate_last_pose, ms_to_frame, Sample};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::{ParamId, Tape, Tensor};

/// Mean over `frames` and joints of the Euclidean distance between poses.
pub fn mpjpe(pred: &Tensor, truth: &Tensor, frames: Range<usize>) -> Result<f64> {
    mpjpe_tensor(pred, truth, frames)
}

pub(crate) fn mpjpe_tensor(pred: &Tensor, truth: &Tensor, frames: Range<usize>) -> Result<f64> {
    if pred.shape() != truth.shape() || pred.rank() != 3 {
        return Err(Error::shape("mpjpe", pred.shape(), truth.shape()));
    }
    let (j, t, d) = (pred.shape()[0], pred.shape()[1], pred.shape()[2]);
    if frames.is_empty() || frames.end > t {
        return Err(Error::Domain(format!("frame range {frames:?} invalid for {t} frames")));
    }
    let mut total = 0.0;
    for jj in 0..j {
        for tt in frames.clone() {
            let o = (jj * t + tt) * d;
            let s: f64 = (0..d).map(|c| (pred.data()[o + c] - truth.data()[o + c]).powi(2)).sum();
            total += s.sqrt();
        }
    }
    Ok(total / (j * frames.len()) as f64)
}

/// The last observed pose repeated for `future` frames, `[J, L, D]`.
pub fn zero_velocity(observed: &Tensor, future: usize) -> Result<Tensor> {
    let full = duplicate_last_pose(observed, future)?;
    let (j, k, d) = (observed.shape()[0], observed.shape()[1], observed.shape()[2]);
    let t = k + future;
    let mut data = Vec::with_capacity(j * future * d);
    for jj in 0..j {
        data.extend_from_slice(&full.data()[(jj * t + k) * d..(jj + 1) * t * d]);
    }
    Tensor::new(&[j, future, d], data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossSpan {
    FullSequence,
    FutureOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub decay: f64,
    pub decay_every: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss_span: LossSpan,
    /// Workers for per-sample passes within a batch.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 3e-3,
            decay: 0.9,
            decay_every: 5,
            batch_size: 32,
            epochs: 50,
            seed: 0,
            loss_span: LossSpan::FullSequence,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.decay > 0.0) {
            return Err(Error::Config("lr and decay must be positive".into()));
        }
        if self.decay_every == 0 || self.batch_size == 0 || self.threads == 0 {
            return Err(Error::Config("decay_every, batch_size and threads must be at least 1".into()));
        }
        Ok(())
    }

    /// Learning rate used throughout 0-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.decay.powi((epoch / self.decay_every) as i32)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("{key}: expected {what}, got {value:?}"));
        match key {
            "lr" => self.lr = value.parse().map_err(|_| bad("a number"))?,
            "decay" => self.decay = value.parse().map_err(|_| bad("a number"))?,
            "decay_every" => self.decay_every = value.parse().map_err(|_| bad("an integer"))?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad("an integer"))?,
            "epochs" => self.epochs = value.parse().map_err(|_| bad("an integer"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("an integer"))?,
            "threads" => self.threads = value.parse().map_err(|_| bad("an integer"))?,
            "loss_span" => {
                self.loss_span = match value {
                    "full" => LossSpan::FullSequence,
                    "future" => LossSpan::FutureOnly,
                    _ => return Err(bad("full or future")),
                }
            }
            _ => return Err(Error::Config(format!("unknown train key {key:?}"))),
        }
        Ok(())
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let span = match self.loss_span {
            LossSpan::FullSequence => "full",
            LossSpan::FutureOnly => "future",
        };
        vec![
            ("lr".into(), self.lr.to_string()),
            ("decay".into(), self.decay.to_string()),
            ("decay_every".into(), self.decay_every.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("epochs".into(), self.epochs.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("loss_span".into(), span.into()),
            ("threads".into(), self.threads.to_string()),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean sample loss over the epoch.
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,lr\n");
        for r in &self.epochs {
            writeln!(s, "{},{},{}", r.epoch, r.loss, r.lr).unwrap();
        }
        s
    }
}

struct Adam {
    m: Vec<Option<Tensor>>,
    v: Vec<Option<Tensor>>,
    step: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![None; n],
            v: vec![None; n],
            step: 0,
        }
    }

    fn update(&mut self, model: &mut Model, grads: &[Option<Tensor>], lr: f64) {
        self.step += 1;
        let (c1, c2) = (1.0 - BETA1.powi(self.step), 1.0 - BETA2.powi(self.step));
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let m = self.m[i].get_or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self.v[i].get_or_insert_with(|| Tensor::zeros(g.shape()));
            let p = &mut model.store.get_mut(ParamId(i)).value;
            for (((p, m), v), &g) in p
                .data_mut()
                .iter_mut()
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
                .zip(g.data())
            {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
            }
        }
    }
}

fn loss_frames(model: &Model, span: LossSpan) -> Range<usize> {
    let c = &model.config;
    match span {
        LossSpan::FullSequence => 0..c.frames(),
        LossSpan::FutureOnly => c.observed..c.frames(),
    }
}

/// Loss and per-parameter gradients (trainable tensors only) for one sample.
pub fn sample_gradients(model: &Model, sample: &Sample, span: LossSpan) -> Result<(f64, Vec<Option<Tensor>>)> {
    let mut tape = Tape::new();
    let y = model.forward(&mut tape, &sample.observed.values)?;
    let truth = sample.full().values;
    let loss = tape.mpjpe(y, &truth, loss_frames(model, span))?;
    let value = tape.value(loss).data()[0];
    let grads = tape.backward(loss)?;
    let out = model
        .store
        .iter()
        .map(|(id, p)| {
            if !p.trainable {
                return None;
            }
            tape.bound_param(id).and_then(|v| grads.get(v)).cloned()
        })
        .collect();
    Ok((value, out))
}

fn accumulate(acc: &mut [Option<Tensor>], grads: Vec<Option<Tensor>>) -> Result<()> {
    for (a, g) in acc.iter_mut().zip(grads) {
        if let Some(g) = g {
            *a = Some(match a.take() {
                Some(t) => t.add(&g)?,
                None => g,
            });
        }
    }
    Ok(())
}

/// Adam over shuffled mini-batches; returns the per-epoch mean loss.
pub fn train(model: &mut Model, data: &[Sample], cfg: &TrainConfig) -> Result<History> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Domain("training set is empty".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.store.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = History::default();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let model_ref = &*model;
            let results: Vec<Result<(f64, Vec<Option<Tensor>>)>> = if cfg.threads == 1 {
                batch.iter().map(|&i| sample_gradients(model_ref, &data[i], cfg.loss_span)).collect()
            } else {
                pool.install(|| {
                    batch
                        .par_iter()
                        .map(|&i| sample_gradients(model_ref, &data[i], cfg.loss_span))
                        .collect()
                })
            };
            let mut acc = vec![None; model.store.len()];
            let mut batch_loss = 0.0;
            // fixed reduction order keeps runs bit-identical for any thread count
            for r in results {
                let (l, g) = r?;
                batch_loss += l;
                accumulate(&mut acc, g)?;
            }
            let finite = batch_loss.is_finite() && acc.iter().flatten().all(|g| g.is_finite());
            if !finite {
                return Err(Error::Numeric(format!(
                    "non-finite loss or gradient at epoch {}, batch {}",
                    epoch + 1,
                    b + 1
                )));
            }
            let n = batch.len() as f64;
            for g in acc.iter_mut().flatten() {
                *g = g.scale(1.0 / n);
            }
            adam.update(model, &acc, lr);
            epoch_loss += batch_loss;
        }
        history.epochs.push(EpochRecord {
            epoch: epoch + 1,
            loss: epoch_loss / data.len() as f64,
            lr,
        });
    }
    Ok(history)
}

/// Shared horizons, in milliseconds.
pub const DEFAULT_HORIZONS_MS: [f64; 6] = [80.0, 160.0, 320.0, 400.0, 560.0, 1000.0];

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonError {
    pub ms: f64,
    /// 1-based future frame.
    pub frame: usize,
    pub mpjpe: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub horizons: Vec<HorizonError>,
    pub average: f64,
    /// Mean wall time of one forward pass.
    pub forward_seconds: f64,
}

impl EvalReport {
    /// Aligned table; timing is left out so reruns compare byte for byte.
    pub fn to_table(&self) -> String {
        let mut s = format!("{:>10}  {:>6}  {:>14}\n", "horizon_ms", "frame", "mpjpe");
        for h in &self.horizons {
            writeln!(s, "{:>10}  {:>6}  {:>14.6}", h.ms, h.frame, h.mpjpe).unwrap();
        }
        writeln!(s, "{:>10}  {:>6}  {:>14.6}", "average", "", self.average).unwrap();
        s
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for h in &self.horizons {
            writeln!(s, "mpjpe_{}ms={}", h.ms, h.mpjpe).unwrap();
        }
        writeln!(s, "average={}", self.average).unwrap();
        writeln!(s, "forward_seconds={}", self.forward_seconds).unwrap();
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("horizon_ms,mpjpe\n");
        for h in &self.horizons {
            writeln!(s, "{},{}", h.ms, h.mpjpe).unwrap();
        }
        s
    }
}

/// Which future frames a horizon's error covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HorizonMode {
    /// Only the horizon's own frame.
    #[default]
    AtFrame,
    /// Mean over future frames `1..=frame`.
    UpTo,
}

impl HorizonMode {
    pub fn name(self) -> &'static str {
        match self {
            HorizonMode::AtFrame => "at_frame",
            HorizonMode::UpTo => "up_to",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [HorizonMode::AtFrame, HorizonMode::UpTo].into_iter().find(|m| m.name() == s)
    }
}

/// Per-horizon errors for any predictor returning full `[J, K + L, D]` sequences.
pub fn evaluate_with(
    data: &[Sample],
    horizons_ms: &[f64],
    mode: HorizonMode,
    mut predict: impl FnMut(&Tensor) -> Result<Tensor>,
) -> Result<EvalReport> {
    if data.is_empty() || horizons_ms.is_empty() {
        return Err(Error::Domain("evaluation needs samples and horizons".into()));
    }
    let (k, l, fps) = (data[0].observed.frames(), data[0].future.frames(), data[0].observed.fps);
    let frames = horizons_ms
        .iter()
        .map(|&ms| {
            let f = ms_to_frame(ms, fps)?;
            if f > l {
                return Err(Error::Domain(format!("horizon {ms} ms (frame {f}) exceeds {l} future frames")));
            }
            Ok(f)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sums = vec![0.0; frames.len()];
    let mut seconds = 0.0;
    for s in data {
        let start = Instant::now();
        let pred = predict(&s.observed.values)?;
        seconds += start.elapsed().as_secs_f64();
        let truth = s.full().values;
        for (sum, &f) in sums.iter_mut().zip(&frames) {
            let first = match mode {
                HorizonMode::AtFrame => k + f - 1,
                HorizonMode::UpTo => k,
            };
            *sum += mpjpe(&pred, &truth, first..k + f)?;
        }
    }
    let n = data.len() as f64;
    let horizons: Vec<HorizonError> = horizons_ms
        .iter()
        .zip(&frames)
        .zip(&sums)
        .map(|((&ms, &frame), &sum)| HorizonError {
            ms,
            frame,
            mpjpe: sum / n,
        })
        .collect();
    let average = horizons.iter().map(|h| h.mpjpe).sum::<f64>() / horizons.len() as f64;
    Ok(EvalReport {
        horizons,
        average,
        forward_seconds: seconds / n,
    })
}

pub fn evaluate(model: &Model, data: &[Sample], horizons_ms: &[f64]) -> Result<EvalReport> {
    evaluate_with(data, horizons_ms, HorizonMode::AtFrame, |x| model.predict(x))
}

pub fn evaluate_zero_velocity(data: &[Sample], horizons_ms: &[f64]) -> Result<EvalReport> {
    let l = data.first().map_or(0, |s| s.future.frames());
    evaluate_with(data, horizons_ms, HorizonMode::AtFrame, |x| duplicate_last_pose(x, l))
}
