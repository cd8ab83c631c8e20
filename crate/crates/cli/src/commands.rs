use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use stgc_core::analysis::{
    bench_scaling, check_constraints, dynamic_static_gap, verify_factorization, verify_std_sts_equivalence,
    ConstraintStatus,
};
use stgc_core::data::{duplicate_last_pose, synth_dataset, write_dataset, Manifest, Sample, Split};
use stgc_core::graphs::{IndexConvention, SkeletonSpec};
use stgc_core::model::{checkpoint, count_params, expected_params, Model, ModelConfig};
use stgc_core::static_gc::GcKind;
use stgc_core::train_eval::{evaluate_with, train};

use crate::config::Config;
use crate::{Command, Common};

const SKELETON_FILE: &str = "skeleton.txt";

pub fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Synth(c) => synth(&c),
        Command::Train(c) => train_cmd(&c),
        Command::Eval { common, checkpoint, zero_velocity } => eval(&common, checkpoint, zero_velocity),
        Command::Verify { common, instances } => verify(&common, instances),
        Command::Params { common, kind, joints, frames, channels, units } => {
            params(&common, kind, joints, frames, channels, units)
        }
        Command::Bench(c) => bench(&c),
    }
}

fn resolve(common: &Common, base: Config) -> Result<Config> {
    let mut cfg = base;
    if let Some(p) = &common.config {
        cfg.load_file(p)?;
    }
    for kv in &common.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(seed) = common.seed {
        cfg.set_seed(seed)?;
    }
    cfg.cap_threads(std::env::var("STGC_THREADS").ok().as_deref())?;
    cfg.load_skeleton()?;
    Ok(cfg)
}

/// Logs the resolved config to stderr and `config.txt`.
fn start(name: &str, common: &Common, cfg: &Config) -> Result<()> {
    let text = cfg.to_kv();
    eprintln!("# stgc {name}\n{text}");
    std::fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    write(&common.out.join("config.txt"), &text)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Test and validation splits are drawn from `seed + 1` and `seed + 2`.
fn synth_splits(cfg: &Config) -> Result<Vec<(Split, Vec<Sample>)>> {
    let spec = cfg.synthetic();
    let d = &cfg.data;
    let mut out = Vec::new();
    for (split, n, offset) in [(Split::Train, d.train, 0), (Split::Test, d.test, 1), (Split::Val, d.val, 2)] {
        if n > 0 {
            let s = stgc_core::data::SyntheticSpec { seed: spec.seed.wrapping_add(offset), ..spec.clone() };
            out.push((split, synth_dataset(&s, n)?));
        }
    }
    Ok(out)
}

fn synth(common: &Common) -> Result<ExitCode> {
    let cfg = resolve(common, Config::default())?;
    start("synth", common, &cfg)?;
    let splits = synth_splits(&cfg)?;
    let refs: Vec<(Split, &[Sample])> = splits.iter().map(|(s, v)| (*s, v.as_slice())).collect();
    let manifest = write_dataset(&common.out, &refs)?;
    cfg.synthetic().skeleton().write(common.out.join(SKELETON_FILE))?;
    let counts: Vec<String> = splits.iter().map(|(s, v)| format!("{} {}", s.name(), v.len())).collect();
    println!("wrote {} ({})", manifest.display(), counts.join(", "));
    Ok(ExitCode::SUCCESS)
}

/// Loads `split`, then fills in joints, frames and skeleton from the data
/// where the config leaves them unset.
fn load_split(cfg: &mut Config, split: Split) -> Result<Vec<Sample>> {
    let (samples, skeleton) = match &cfg.data.manifest {
        Some(path) => {
            let manifest = Manifest::read(path)?;
            let samples = manifest.load(split, cfg.model.observed)?;
            let side = path.parent().unwrap_or(Path::new("")).join(SKELETON_FILE);
            let skeleton = if side.exists() { Some(SkeletonSpec::read(&side)?) } else { None };
            (samples, skeleton)
        }
        None => {
            let skeleton = cfg.synthetic().skeleton();
            let samples = synth_splits(cfg)?.into_iter().find(|(s, _)| *s == split).map(|(_, v)| v);
            (samples.unwrap_or_default(), Some(skeleton))
        }
    };
    let Some(first) = samples.first() else {
        bail!("no {} samples", split.name());
    };
    let (j, l) = (first.observed.joints(), first.future.frames());
    for (key, have, want) in [("model.joints", &mut cfg.model.joints, j), ("model.future", &mut cfg.model.future, l)] {
        if !cfg.explicit.contains(key) {
            *have = want;
        } else if *have != want {
            bail!("{key}={have} but the {} data has {want}", split.name());
        }
    }
    if cfg.model.skeleton.is_none() {
        cfg.model.skeleton = skeleton.filter(|s| s.joint_count == j);
    }
    Ok(samples)
}

fn train_cmd(common: &Common) -> Result<ExitCode> {
    let mut cfg = resolve(common, Config::default())?;
    let data = load_split(&mut cfg, Split::Train)?;
    start("train", common, &cfg)?;
    let mut model = Model::build(&cfg.model)?;
    let history = train(&mut model, &data, &cfg.train)?;
    write(&common.out.join("loss.csv"), &history.to_csv())?;
    let ckpt = common.out.join("model.ckpt");
    checkpoint::save(&model, &ckpt)?;
    let (first, last) = (history.epochs.first(), history.epochs.last());
    if let (Some(a), Some(b)) = (first, last) {
        println!("epochs {} loss {:.6} -> {:.6}", history.epochs.len(), a.loss, b.loss);
    }
    println!("wrote {}", ckpt.display());
    Ok(ExitCode::SUCCESS)
}

fn eval(common: &Common, flag_ckpt: Option<PathBuf>, zero_velocity: bool) -> Result<ExitCode> {
    let mut cfg = resolve(common, Config::default())?;
    if let Some(p) = flag_ckpt {
        cfg.set("eval.checkpoint", &p.display().to_string())?;
    }
    let model = match &cfg.eval.checkpoint {
        Some(p) => {
            let model = checkpoint::load(p)?;
            // the checkpoint's layout wins over anything configured
            for (k, v) in model.config.to_kv() {
                cfg.set(&format!("model.{k}"), &v)?;
            }
            cfg.model.skeleton = model.config.skeleton.clone();
            Some(model)
        }
        None => None,
    };
    let data = load_split(&mut cfg, Split::Test)?;
    start("eval", common, &cfg)?;
    let (horizons, mode) = (&cfg.eval.horizons, cfg.eval.horizon_mode);
    let report = if zero_velocity {
        let l = cfg.model.future;
        evaluate_with(&data, horizons, mode, |x| duplicate_last_pose(x, l))?
    } else {
        let model = match model {
            Some(m) => m,
            None => Model::build(&cfg.model)?,
        };
        evaluate_with(&data, horizons, mode, |x| model.predict(x))?
    };
    write(&common.out.join("eval.csv"), &report.to_csv())?;
    write(&common.out.join("eval.txt"), &report.to_table())?;
    print!("{}", report.to_table());
    eprintln!("forward_seconds={:e}", report.forward_seconds);
    Ok(ExitCode::SUCCESS)
}

struct Suite {
    lines: String,
    failures: usize,
}

impl Suite {
    fn check(&mut self, ok: bool, msg: String) {
        if !ok {
            self.failures += 1;
        }
        writeln!(self.lines, "[{}] {msg}", if ok { "PASS" } else { "FAIL" }).unwrap();
    }
}

fn verify(common: &Common, instances: u64) -> Result<ExitCode> {
    let cfg = resolve(common, Config::default())?;
    start("verify", common, &cfg)?;
    let seed = cfg.model.seed;
    let mut suite = Suite { lines: String::new(), failures: 0 };
    let shape = |i: u64| (2 + (i % 7) as usize, 2 + (i / 7 % 7) as usize, 1 + (i % 4) as usize);

    let mut worst = 0.0f64;
    for i in 0..instances {
        let (j, t, c) = shape(i);
        worst = worst.max(verify_factorization(seed.wrapping_add(i), j, t, c)?);
    }
    suite.check(worst <= 1e-10, format!("factorization: {instances} instances, max |diff| {worst:.3e} (<= 1e-10)"));

    let (mut source, mut output) = (0.0f64, 0.0f64);
    for i in 0..instances {
        let (j, t, c) = shape(i);
        for (conv, dev) in verify_std_sts_equivalence(seed.wrapping_add(i), j, t, c, false)? {
            match conv {
                IndexConvention::SourceFrame => source = source.max(dev),
                IndexConvention::OutputFrame => output = output.max(dev),
                IndexConvention::OutputJointTemporal => {}
            }
        }
    }
    suite.check(source <= 1e-11, format!("std/sts source_frame: max deviation {source:.3e} (<= 1e-11)"));
    suite.check(output > 1e-6, format!("std/sts output_frame counterexample: {output:.3e} (> 1e-6)"));

    let unit = |kind| ModelConfig { observed: 3, future: 3, seed, ..ModelConfig::comparison(kind, 5, 6, 4) };
    let exact = |s: &ConstraintStatus| matches!(s, ConstraintStatus::Holds { deviation } if *deviation == 0.0);
    let violated = |s: &ConstraintStatus| s.violated();
    let r = check_constraints(&unit(GcKind::Vstd), 3, None)?;
    suite.check(exact(&r.status[1]) && exact(&r.status[2]), format!("constraints vstd: c2 {} c3 {}", r.status[1].label(), r.status[2].label()));
    for kind in [GcKind::Std, GcKind::Tsd, GcKind::Sts] {
        let r = check_constraints(&unit(kind), 3, None)?;
        suite.check(
            violated(&r.status[1]) && exact(&r.status[2]),
            format!("constraints {}: c2 {} c3 {}", kind.name(), r.status[1].label(), r.status[2].label()),
        );
    }
    let r = check_constraints(&unit(GcKind::Dstd), 3, Some(0.5))?;
    suite.check(
        violated(&r.status[1]) && violated(&r.status[2]),
        format!("constraints dstd alpha=0.5: c2 {} c3 {}", r.status[1].label(), r.status[2].label()),
    );
    let gap = dynamic_static_gap(&unit(GcKind::Dstd))?;
    suite.check(gap <= 1e-12, format!("dstd alpha=0 vs static counterpart: {gap:.3e} (<= 1e-12)"));

    print!("{}", suite.lines);
    write(&common.out.join("verify.txt"), &suite.lines)?;
    if suite.failures > 0 {
        eprintln!("{} check(s) failed", suite.failures);
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn params(
    common: &Common,
    kind: Option<String>,
    joints: Option<usize>,
    frames: Option<usize>,
    channels: Option<usize>,
    units: Option<usize>,
) -> Result<ExitCode> {
    let mut base = Config::default();
    if kind.is_some() || joints.is_some() || frames.is_some() || channels.is_some() {
        let d = &base.model;
        let t = frames.unwrap_or(d.frames());
        base.model = ModelConfig::comparison(d.kind, d.joints, t, d.channels);
    }
    let mut cfg = resolve(common, base)?;
    let mut flag = |key: &str, v: Option<String>| v.map_or(Ok(()), |v| cfg.set(key, &v));
    flag("model.kind", kind)?;
    flag("model.joints", joints.map(|v| v.to_string()))?;
    flag("model.channels", channels.map(|v| v.to_string()))?;
    if let Some(u) = units {
        if u < 2 || (u - 2) % cfg.model.units_per_block != 0 {
            bail!("--units {u}: need encode, decode and whole blocks of {} unit(s)", cfg.model.units_per_block);
        }
        cfg.set("model.blocks", &((u - 2) / cfg.model.units_per_block).to_string())?;
    }
    if let Some(t) = frames {
        let k = t.min(cfg.model.observed).max(1);
        cfg.set("model.observed", &k.to_string())?;
        cfg.set("model.future", &(t - k).to_string())?;
    }
    start("params", common, &cfg)?;
    let model = Model::build(&cfg.model)?;
    let count = count_params(&model);
    let closed = expected_params(&cfg.model);
    if closed != count.all {
        bail!("closed-form count {closed} disagrees with the built model ({})", count.all);
    }
    let table = count.to_table();
    print!("{table}");
    write(&common.out.join("params.txt"), &table)?;
    Ok(ExitCode::SUCCESS)
}

fn bench(common: &Common) -> Result<ExitCode> {
    let cfg = resolve(common, Config::default())?;
    start("bench", common, &cfg)?;
    let report = bench_scaling(&cfg.bench)?;
    write(&common.out.join("bench.csv"), &report.to_csv())?;
    print!("{}{}", report.to_csv(), report.to_kv());
    Ok(ExitCode::SUCCESS)
}
