use crate::error::{Error, Result};
use crate::net::Pipeline;
use crate::train::{view_spec_serde, RunConfig};
use crate::views::ViewSetSpec;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::PathBuf;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ViewAxis(#[serde(with = "view_spec_serde")] pub ViewSetSpec);

/// Axes crossed with the plan's base config. An empty axis keeps the base
/// value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pipelines: Vec<Pipeline>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shared_blocks: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub views: Vec<ViewAxis>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub output_dir: PathBuf,
    /// Runs executed as given.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<RunConfig>,
    /// Template expanded over `sweep`; its `run_id` is the prefix of every
    /// generated id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<RunConfig>,
    #[serde(default)]
    pub sweep: SweepAxes,
}

/// Where a run sits in the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coords {
    pub pipeline: Pipeline,
    pub shared_blocks: usize,
    pub views: String,
    pub view_count: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannedRun {
    pub config: RunConfig,
    pub coords: Coords,
}

fn axis<T: Clone>(values: &[T], base: T) -> Vec<(Option<usize>, T)> {
    if values.is_empty() {
        vec![(None, base)]
    } else {
        values
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, v)| (Some(i), v))
            .collect()
    }
}

impl ExperimentPlan {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    /// Every concrete run, explicit runs first, then the base crossed with
    /// the axes (pipelines slowest, seeds fastest).
    pub fn expand(&self) -> Result<Vec<PlannedRun>> {
        let mut configs = self.runs.clone();
        if let Some(base) = &self.base {
            let s = &self.sweep;
            let ks: Vec<Option<usize>> = s.shared_blocks.iter().map(|&k| Some(k)).collect();
            for (_, p) in axis(&s.pipelines, base.pipeline) {
                for (ki, k) in axis(&ks, base.shared_blocks) {
                    for (vi, v) in axis(&s.views, ViewAxis(base.views.clone())) {
                        for (si, seed) in axis(&s.seeds, base.seed) {
                            let mut c = base.clone();
                            let mut id = base.run_id.clone();
                            if !s.pipelines.is_empty() {
                                id += &format!("-{p}");
                            }
                            c.pipeline = p;
                            if ki.is_some() {
                                id += &format!("-k{}", k.unwrap_or(0));
                                c.shared_blocks = k;
                            }
                            if let Some(vi) = vi {
                                id += &format!("-v{vi}");
                                c.views = v.0.clone();
                            }
                            if si.is_some() {
                                id += &format!("-s{seed}");
                            }
                            c.seed = seed;
                            c.run_id = id;
                            configs.push(c);
                        }
                    }
                }
            }
        }
        let mut seen = HashSet::new();
        configs
            .into_iter()
            .map(|config| {
                if !seen.insert(config.run_id.clone()) {
                    return Err(Error::Config(format!(
                        "duplicate run_id `{}`",
                        config.run_id
                    )));
                }
                config.validate()?;
                let views = config.view_set()?;
                let coords = Coords {
                    pipeline: config.pipeline,
                    shared_blocks: config.resolved_arch()?.shared_blocks,
                    views: match config.pipeline {
                        Pipeline::Supervised => "identity".into(),
                        _ => config.views.to_string(),
                    },
                    view_count: views.len(),
                    seed: config.seed,
                };
                Ok(PlannedRun { config, coords })
            })
            .collect()
    }
}

/// Sweep CSV row: coordinates plus one metrics row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub run_id: String,
    pub pipeline: Pipeline,
    pub shared_blocks: usize,
    pub views: String,
    pub view_count: usize,
    pub seed: u64,
    pub epoch: usize,
    pub split: crate::train::Split,
    pub loss: f64,
    pub acc_single: f64,
    pub acc_agg: Option<f64>,
    pub lr: f64,
    pub wall_ms: u64,
}

/// Final test accuracy of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalRow {
    pub run_id: String,
    pub pipeline: Pipeline,
    pub shared_blocks: usize,
    pub views: String,
    pub view_count: usize,
    pub seed: u64,
    pub epochs: usize,
    pub acc_single: Option<f64>,
    pub acc_agg: Option<f64>,
}

pub const SWEEP_HEADER: [&str; 13] = [
    "run_id",
    "pipeline",
    "shared_blocks",
    "views",
    "view_count",
    "seed",
    "epoch",
    "split",
    "loss",
    "acc_single",
    "acc_agg",
    "lr",
    "wall_ms",
];

pub const FINAL_HEADER: [&str; 9] = [
    "run_id",
    "pipeline",
    "shared_blocks",
    "views",
    "view_count",
    "seed",
    "epochs",
    "acc_single",
    "acc_agg",
];
