//! Fixtures shared by the criterion benches: one `C → C` unit of a given
//! kind with joints tied to the sequence length.

use stgc_core::analysis::tied_joints;
use stgc_core::dynamic_gc::PairPath;
use stgc_core::model::{build_unit, GcUnit, ModelConfig};
use stgc_core::numerics::ParamId;
use stgc_core::static_gc::GcKind;
use stgc_core::{ParamStore, Result, Tape, Tensor};

pub struct UnitFixture {
    pub config: ModelConfig,
    store: ParamStore,
    unit: GcUnit<ParamId>,
    input: Tensor,
}

impl UnitFixture {
    pub fn new(kind: GcKind, frames: usize, channels: usize) -> Result<Self> {
        let config = ModelConfig::comparison(kind, tied_joints(frames), frames, channels);
        let (store, unit) = build_unit(&config, channels, channels)?;
        let shape = [config.joints, frames, channels];
        // cheap deterministic input in [-1, 1)
        let input = Tensor::from_fn(&shape, |i| (((i[0] * 31 + i[1] * 17 + i[2] * 7) % 97) as f64) / 48.5 - 1.0);
        Ok(UnitFixture { config, store, unit, input })
    }

    /// One forward pass on a fresh tape; returns the output element count.
    pub fn forward(&self) -> Result<usize> {
        let mut tape = Tape::new();
        let x = tape.input(self.input.clone());
        let u = self.unit.map(&mut |id| tape.input(self.store.value(*id).clone()));
        let y = u.forward(&mut tape, x, PairPath::Factorized)?;
        Ok(tape.value(y).len())
    }

    /// Forward and reverse pass against a fixed linear probe.
    pub fn forward_backward(&self) -> Result<usize> {
        let mut tape = Tape::new();
        let x = tape.input(self.input.clone());
        let u = self.unit.map(&mut |id| tape.variable(self.store.value(*id).clone()));
        let y = u.forward(&mut tape, x, PairPath::Factorized)?;
        let probe = Tensor::full(tape.shape(y), 1.0);
        let loss = tape.dot_const(y, probe)?;
        let grads = tape.backward(loss)?;
        Ok(grads.get(loss).map_or(0, |g| g.len()))
    }
}
