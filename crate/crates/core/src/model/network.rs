use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::unit::{register_unit, GcUnit, Init, UnitFactory};
use crate::data::duplicate_last_pose;
use crate::dynamic_gc::PairPath;
use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var, PRELU_INIT};

/// A unit together with the slope of the PReLU that follows it.
#[derive(Debug, Clone)]
pub struct NamedUnit {
    pub name: String,
    pub unit: GcUnit<ParamId>,
    /// `None` for the decode unit.
    pub act: Option<ParamId>,
}

/// Residual prediction network: encode, residual blocks, decode.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub path: PairPath,
    encode: NamedUnit,
    blocks: Vec<Vec<NamedUnit>>,
    decode: NamedUnit,
}

fn named(store: &mut ParamStore, name: String, unit: GcUnit<Init>, act: bool) -> NamedUnit {
    let unit = register_unit(store, &name, &unit);
    let act = act.then(|| store.add(format!("{name}.act"), Tensor::scalar(PRELU_INIT)));
    NamedUnit { name, unit, act }
}

impl Model {
    pub fn build(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let (d, c) = (config.dims, config.channels);
        let mut f = UnitFactory { cfg: config, rng: &mut rng };
        let encode = named(&mut store, "encode".into(), f.unit(d, c, false), true);
        let mut blocks = Vec::with_capacity(config.blocks);
        for b in 0..config.blocks {
            let units = (0..config.units_per_block)
                .map(|u| named(&mut store, format!("block{b}.unit{u}"), f.unit(c, c, false), true))
                .collect();
            blocks.push(units);
        }
        let decode = named(&mut store, "decode".into(), f.unit(c, d, true), false);
        Ok(Model {
            config: config.clone(),
            store,
            path: PairPath::Factorized,
            encode,
            blocks,
            decode,
        })
    }

    /// Every unit in forward order.
    pub fn units(&self) -> impl Iterator<Item = &NamedUnit> {
        std::iter::once(&self.encode)
            .chain(self.blocks.iter().flatten())
            .chain(std::iter::once(&self.decode))
    }

    fn apply(&self, tape: &mut Tape, u: &NamedUnit, x: Var) -> Result<Var> {
        let store = &self.store;
        let bound = u.unit.map(&mut |id| tape.param(store, *id));
        let y = bound.forward(tape, x, self.path)?;
        match u.act {
            Some(a) => {
                let a = tape.param(store, a);
                tape.prelu(y, a)
            }
            None => Ok(y),
        }
    }

    /// Records the full `[J, K + L, D]` prediction for `observed` (`[J, K, D]`).
    pub fn forward(&self, tape: &mut Tape, observed: &Tensor) -> Result<Var> {
        let cfg = &self.config;
        let want = [cfg.joints, cfg.observed, cfg.dims];
        if observed.shape() != want {
            return Err(Error::shape("Model::forward", &want, observed.shape()));
        }
        let x = tape.input(duplicate_last_pose(observed, cfg.future)?);
        let mut h = self.apply(tape, &self.encode, x)?;
        for block in &self.blocks {
            let mut inner = h;
            for u in block {
                inner = self.apply(tape, u, inner)?;
            }
            h = tape.add(h, inner)?;
        }
        let r = self.apply(tape, &self.decode, h)?;
        tape.add(x, r)
    }

    pub fn predict(&self, observed: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let y = self.forward(&mut tape, observed)?;
        Ok(tape.value(y).clone())
    }

    /// Sets every parameter whose name starts with `prefix` to zero.
    pub fn zero_params(&mut self, prefix: &str) -> usize {
        let ids: Vec<ParamId> = self
            .store
            .iter()
            .filter(|(_, p)| p.name.starts_with(prefix))
            .map(|(id, _)| id)
            .collect();
        for &id in &ids {
            let shape = self.store.value(id).shape().to_vec();
            self.store.get_mut(id).value = Tensor::zeros(&shape);
        }
        ids.len()
    }

    /// Names and values of parameters matching `suffix`, e.g. `.alpha`.
    pub fn params_ending(&self, suffix: &str) -> Vec<(&str, &crate::numerics::Param)> {
        self.store
            .iter()
            .filter(|(_, p)| p.name.ends_with(suffix))
            .map(|(_, p)| (p.name.as_str(), p))
            .collect()
    }
}

/// A single unit registered into its own store, used to check one layer kind.
pub fn build_unit(config: &ModelConfig, c_in: usize, c_out: usize) -> Result<(ParamStore, GcUnit<ParamId>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = UnitFactory { cfg: config, rng: &mut rng }.unit(c_in, c_out, false);
    let mut store = ParamStore::new();
    let unit = register_unit(&mut store, "unit", &init);
    Ok((store, unit))
}
