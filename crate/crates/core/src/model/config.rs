use crate::error::{Error, Result};
use crate::graphs::{IndexConvention, SkeletonSpec};
use crate::static_gc::GcKind;

/// Ablation switches for the dynamic network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Full,
    /// Adjustment intensity frozen at zero.
    ConstrainedOnly,
    /// Shared matrices frozen at zero.
    DynamicOnly,
    /// `M + α·C` instead of `C + α·M`.
    ReversedUpdate,
    /// Random shared matrices instead of skeleton priors.
    NoPrior,
    /// Static unshared per-axis convolutions in place of the dynamic ones.
    StaticGc,
    /// Spatial layers in both stages.
    DsOnly,
    /// Temporal layers in both stages.
    DtOnly,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Full,
        Variant::ConstrainedOnly,
        Variant::DynamicOnly,
        Variant::ReversedUpdate,
        Variant::NoPrior,
        Variant::StaticGc,
        Variant::DsOnly,
        Variant::DtOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::ConstrainedOnly => "a",
            Variant::DynamicOnly => "b",
            Variant::ReversedUpdate => "c",
            Variant::NoPrior => "d",
            Variant::StaticGc => "e",
            Variant::DsOnly => "f",
            Variant::DtOnly => "g",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.to_ascii_lowercase();
        let alias = match s.as_str() {
            "constrained_only" => Some(Variant::ConstrainedOnly),
            "dynamic_only" => Some(Variant::DynamicOnly),
            "reversed_update" => Some(Variant::ReversedUpdate),
            "no_prior" => Some(Variant::NoPrior),
            "static_gc" => Some(Variant::StaticGc),
            "ds_only" => Some(Variant::DsOnly),
            "dt_only" => Some(Variant::DtOnly),
            _ => None,
        };
        alias.or_else(|| Self::ALL.into_iter().find(|v| v.name() == s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub joints: usize,
    /// Observed frames `K`.
    pub observed: usize,
    /// Predicted frames `L`.
    pub future: usize,
    /// Coordinates per joint.
    pub dims: usize,
    pub channels: usize,
    pub reduction: usize,
    pub blocks: usize,
    pub units_per_block: usize,
    pub kind: GcKind,
    pub variant: Variant,
    pub convention: IndexConvention,
    /// Parallel first-stage branches of dynamic units, summed.
    pub spatial_branches: usize,
    /// Column-normalise prior-initialised shared matrices.
    pub normalize_prior: bool,
    pub skeleton: Option<SkeletonSpec>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            joints: 22,
            observed: 10,
            future: 25,
            dims: 3,
            channels: 64,
            reduction: 32,
            blocks: 5,
            units_per_block: 1,
            kind: GcKind::Dstd,
            variant: Variant::Full,
            convention: IndexConvention::SourceFrame,
            spatial_branches: 2,
            normalize_prior: true,
            skeleton: None,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Single-branch layout used when comparing convolution kinds.
    pub fn comparison(kind: GcKind, joints: usize, frames: usize, channels: usize) -> Self {
        ModelConfig {
            joints,
            observed: frames.clamp(1, 10),
            future: frames - frames.clamp(1, 10),
            channels,
            kind,
            spatial_branches: 1,
            ..Default::default()
        }
    }

    pub fn frames(&self) -> usize {
        self.observed + self.future
    }

    /// Total graph convolution units: encode, blocks, decode.
    pub fn unit_count(&self) -> usize {
        self.blocks * self.units_per_block + 2
    }

    pub fn skeleton(&self) -> SkeletonSpec {
        match &self.skeleton {
            Some(s) => s.clone(),
            None if self.joints == 22 => SkeletonSpec::default_22(),
            None => SkeletonSpec::chain(self.joints),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("joints", self.joints),
            ("observed", self.observed),
            ("dims", self.dims),
            ("channels", self.channels),
            ("reduction", self.reduction),
            ("units_per_block", self.units_per_block),
            ("spatial_branches", self.spatial_branches),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if let Some(s) = &self.skeleton {
            if s.joint_count != self.joints {
                return Err(Error::Config(format!(
                    "skeleton has {} joints but the model expects {}",
                    s.joint_count, self.joints
                )));
            }
            s.validate()?;
        }
        if self.variant != Variant::Full && !matches!(self.kind, GcKind::Dstd | GcKind::Dtsd) {
            return Err(Error::Config(format!(
                "variant {} applies to dstd/dtsd models, not {}",
                self.variant.name(),
                self.kind.name()
            )));
        }
        Ok(())
    }

    /// Applies one `key=value` setting; keys are the field names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = || {
            value
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got {value:?}")))
        };
        let flag = || match value {
            "true" | "1" => Ok(true),
            "false" | "0" => Ok(false),
            _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
        };
        match key {
            "joints" => self.joints = num()?,
            "observed" => self.observed = num()?,
            "future" => self.future = num()?,
            "dims" => self.dims = num()?,
            "channels" => self.channels = num()?,
            "reduction" => self.reduction = num()?,
            "blocks" => self.blocks = num()?,
            "units_per_block" => self.units_per_block = num()?,
            "spatial_branches" => self.spatial_branches = num()?,
            "normalize_prior" => self.normalize_prior = flag()?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| Error::Config(format!("seed: expected an integer, got {value:?}")))?
            }
            "kind" => {
                self.kind = GcKind::parse(value).ok_or_else(|| Error::Config(format!("unknown kind {value:?}")))?
            }
            "variant" => {
                self.variant =
                    Variant::parse(value).ok_or_else(|| Error::Config(format!("unknown variant {value:?}")))?
            }
            "convention" => {
                self.convention = IndexConvention::parse(value)
                    .ok_or_else(|| Error::Config(format!("unknown convention {value:?}")))?
            }
            _ => return Err(Error::Config(format!("unknown model key {key:?}"))),
        }
        Ok(())
    }

    /// Settings in `key=value` form, one per line, in a fixed order.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        vec![
            ("joints".into(), self.joints.to_string()),
            ("observed".into(), self.observed.to_string()),
            ("future".into(), self.future.to_string()),
            ("dims".into(), self.dims.to_string()),
            ("channels".into(), self.channels.to_string()),
            ("reduction".into(), self.reduction.to_string()),
            ("blocks".into(), self.blocks.to_string()),
            ("units_per_block".into(), self.units_per_block.to_string()),
            ("kind".into(), self.kind.name().into()),
            ("variant".into(), self.variant.name().into()),
            ("convention".into(), self.convention.name().into()),
            ("spatial_branches".into(), self.spatial_branches.to_string()),
            ("normalize_prior".into(), self.normalize_prior.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}
