use crate::data::{CifarKind, Dataset, SyntheticSpec, DATA_DIR_ENV};
use crate::error::{Error, Result};
use crate::net::{desk_arch, ArchSpec, Pipeline};
use crate::views::{ViewSet, ViewSetSpec};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::path::{Path, PathBuf};

/// How the per-view losses of the multi-view pipeline are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossNormalization {
    /// Plain sum over views.
    #[default]
    AsWritten,
    /// Sum divided by the number of views.
    MeanOverViews,
}

/// How per-view predictions are combined at test time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Arithmetic mean of per-view softmax vectors.
    #[default]
    MeanSoftmax,
    /// Softmax of the summed logits.
    LogitSum,
    /// Fraction of views voting for each class.
    MajorityVote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSpec {
    Cifar10 {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dir: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_per_class: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_per_class: Option<usize>,
        #[serde(default)]
        subset_seed: u64,
    },
    Cifar100 {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dir: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_per_class: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_per_class: Option<usize>,
        #[serde(default)]
        subset_seed: u64,
    },
    Synthetic {
        seed: u64,
        classes: usize,
        height: usize,
        width: usize,
        separability: f64,
        train: usize,
        test: usize,
    },
}

impl DataSpec {
    /// Loads `(train, test)`. Archive directories come from the spec, then
    /// `data_dir`, then the environment.
    pub fn load(&self, data_dir: Option<&Path>) -> Result<(Dataset, Dataset)> {
        let (kind, dir, train_pc, test_pc, subset_seed) = match self {
            DataSpec::Synthetic {
                seed,
                classes,
                height,
                width,
                separability,
                train,
                test,
            } => {
                if *classes == 0 || *height == 0 || *width == 0 {
                    return Err(Error::Config(
                        "synthetic data needs positive classes and extents".into(),
                    ));
                }
                let spec = SyntheticSpec {
                    seed: *seed,
                    classes: *classes,
                    height: *height,
                    width: *width,
                    separability: *separability,
                };
                return Ok((spec.generate(*train, 0), spec.generate(*test, 1)));
            }
            DataSpec::Cifar10 {
                dir,
                train_per_class,
                test_per_class,
                subset_seed,
            } => (
                CifarKind::Cifar10,
                dir,
                train_per_class,
                test_per_class,
                subset_seed,
            ),
            DataSpec::Cifar100 {
                dir,
                train_per_class,
                test_per_class,
                subset_seed,
            } => (
                CifarKind::Cifar100,
                dir,
                train_per_class,
                test_per_class,
                subset_seed,
            ),
        };
        let root = match (dir, data_dir) {
            (Some(d), _) => d.clone(),
            (None, Some(d)) => d.to_path_buf(),
            (None, None) => std::env::var_os(DATA_DIR_ENV)
                .map(PathBuf::from)
                .ok_or_else(|| {
                    Error::Data(format!(
                        "no data directory for {}: pass --data-dir or set {DATA_DIR_ENV}",
                        kind.meta().name
                    ))
                })?,
        };
        let (mut train, mut test) = kind.load(&root)?;
        if let Some(n) = train_pc {
            train = train.subset(*n, *subset_seed);
        }
        if let Some(n) = test_pc {
            test = test.subset(*n, subset_seed.wrapping_add(1));
        }
        Ok((train, test))
    }

    pub fn num_classes(&self) -> usize {
        match self {
            DataSpec::Cifar10 { .. } => 10,
            DataSpec::Cifar100 { .. } => 100,
            DataSpec::Synthetic { classes, .. } => *classes,
        }
    }
}

/// View specs are written in their compact text form and accepted either
/// as text or as the structured object.
pub(crate) mod view_spec_serde {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Either {
        Text(String),
        Full(ViewSetSpec),
    }

    pub fn serialize<S: Serializer>(
        spec: &ViewSetSpec,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&spec.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<ViewSetSpec, D::Error> {
        match Either::deserialize(d)? {
            Either::Text(t) => t.parse().map_err(serde::de::Error::custom),
            Either::Full(f) => Ok(f),
        }
    }
}

fn default_views() -> ViewSetSpec {
    ViewSetSpec::identity()
}
fn default_lr() -> f64 {
    0.1
}
fn default_momentum() -> f64 {
    0.9
}
fn default_weight_decay() -> f64 {
    5e-4
}
fn default_batch() -> usize {
    128
}
fn default_lambda() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}

/// One training run. Optional fields fall back to the desk recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub pipeline: Pipeline,
    /// Ignored by the supervised pipeline.
    #[serde(with = "view_spec_serde", default = "default_views")]
    pub views: ViewSetSpec,
    /// Defaults to the desk architecture for the dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<ArchSpec>,
    /// Overrides the split point of `arch`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared_blocks: Option<usize>,
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    /// Weight of the view-label term of the multi-task loss.
    #[serde(default = "default_lambda")]
    pub pretext_weight: f64,
    #[serde(default)]
    pub view_loss_normalization: LossNormalization,
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default)]
    pub seed: u64,
    pub data: DataSpec,
    #[serde(default = "default_true")]
    pub augment: bool,
    /// Record wall-clock milliseconds; off keeps metrics files reproducible.
    #[serde(default)]
    pub timing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return bad(format!(
                "run_id `{}` must be a non-empty file name",
                self.run_id
            ));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.pretext_weight >= 0.0 && self.pretext_weight.is_finite()) {
            return bad(format!(
                "pretext_weight must be nonnegative, got {}",
                self.pretext_weight
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            ));
        }
        self.view_set()?;
        self.resolved_arch()?.validate()
    }

    /// Views used by the run; the supervised pipeline always sees only the
    /// identity.
    pub fn view_set(&self) -> Result<ViewSet> {
        match self.pipeline {
            Pipeline::Supervised => Ok(ViewSet::identity()),
            _ => ViewSet::build(&self.views),
        }
    }

    pub fn resolved_arch(&self) -> Result<ArchSpec> {
        let classes = self.data.num_classes();
        let mut arch = self.arch.clone().unwrap_or_else(|| desk_arch(3, classes));
        if let Some(k) = self.shared_blocks {
            arch = arch.with_shared_blocks(k);
        }
        if arch.num_classes != classes {
            return Err(Error::Config(format!(
                "arch has {} classes but the dataset has {classes}",
                arch.num_classes
            )));
        }
        Ok(arch)
    }
}
