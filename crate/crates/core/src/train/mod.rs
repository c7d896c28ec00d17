//! Supervised, multi-task and multi-view training loops and inference.

mod config;
mod loss;
mod predict;
mod schedule;

pub(crate) use config::view_spec_serde;
pub use config::{Aggregation, DataSpec, LossNormalization, RunConfig};
pub use loss::{loss_mt, loss_mv, loss_supervised, stack_images, view_batch, LossTerms, ViewBatch};
pub use predict::{
    accuracy, aggregate, argmax, evaluate, predict_aggregated, predict_single, single_branch,
    softmax, EvalResult,
};
pub use schedule::lr_at;

use crate::autodiff::{SgdState, Tape};
use crate::data::{make_batches, ChannelNorm, Dataset};
use crate::error::{Error, Result};
use crate::net::{checkpoint, ArchSpec, Pipeline, SplitNetwork};
use crate::views::ViewSet;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.vadl";
pub const CHECKPOINT_META_FILE: &str = "checkpoint.json";
pub const RUN_META_FILE: &str = "run.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// One epoch's record. Train rows carry the mean step loss and the
/// single-head accuracy on the (augmented) training batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub epoch: usize,
    pub split: Split,
    pub pipeline: Pipeline,
    pub loss: f64,
    pub acc_single: f64,
    pub acc_agg: Option<f64>,
    pub lr: f64,
    pub wall_ms: u64,
}

pub struct TrainOutput {
    pub net: SplitNetwork<f32>,
    pub rows: Vec<MetricsRow>,
    /// Loss of every optimization step, in order.
    pub step_losses: Vec<f32>,
    pub norm: ChannelNorm,
    pub views: ViewSet,
}

fn correct(logits: &crate::autodiff::Tensor<f32>, labels: &[usize]) -> usize {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks(k)
        .zip(labels)
        .filter(|(r, &y)| argmax(&r.iter().map(|&v| v as f64).collect::<Vec<_>>()) == y)
        .count()
}

/// Trains per `cfg` on `train`, evaluating on `test` after every epoch.
pub fn train(cfg: &RunConfig, train: &Dataset, test: &Dataset) -> Result<TrainOutput> {
    cfg.validate()?;
    train.validate()?;
    test.validate()?;
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if train.num_classes != cfg.data.num_classes() {
        return Err(Error::Data(format!(
            "dataset has {} classes, config expects {}",
            train.num_classes,
            cfg.data.num_classes()
        )));
    }
    let views = cfg.view_set()?;
    let arch = cfg.resolved_arch()?;
    let norm = ChannelNorm::fit(train)?;
    let mut net = SplitNetwork::<f32>::build(&arch, cfg.pipeline, views.m(), cfg.seed)?;
    let mut sgd = SgdState::new(&net.store, cfg.lr, cfg.momentum, cfg.weight_decay)?;
    let mut rows = Vec::with_capacity(2 * cfg.epochs);
    let mut step_losses = Vec::new();
    let started = Instant::now();
    let wall = |t: &Instant| {
        if cfg.timing {
            t.elapsed().as_millis() as u64
        } else {
            0
        }
    };

    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg.epochs, cfg.lr);
        sgd.learning_rate = lr;
        let (mut loss_sum, mut hits) = (0.0f64, 0usize);
        for (step, mut batch) in
            make_batches(train, cfg.batch_size, cfg.seed, epoch, true, cfg.augment).enumerate()
        {
            let vb = view_batch::<f32>(&mut batch, &views, &norm)?;
            let mut tape = Tape::new();
            let terms = match cfg.pipeline {
                Pipeline::Supervised => loss_supervised(&mut tape, &mut net, &vb)?,
                Pipeline::SslMt => loss_mt(&mut tape, &mut net, &vb, cfg.pretext_weight)?,
                Pipeline::SslMv => loss_mv(&mut tape, &mut net, &vb, cfg.view_loss_normalization)?,
            };
            let loss = tape.value(terms.loss).item();
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    step,
                    loss: loss as f64,
                });
            }
            net.store.zero_grad();
            tape.backward(terms.loss, &mut net.store)?;
            sgd.step(&mut net.store)?;
            step_losses.push(loss);
            loss_sum += loss as f64 * vb.len() as f64;
            hits += correct(tape.value(terms.single_logits), &vb.labels);
        }
        let n = train.len() as f64;
        rows.push(MetricsRow {
            run_id: cfg.run_id.clone(),
            epoch,
            split: Split::Train,
            pipeline: cfg.pipeline,
            loss: loss_sum / n,
            acc_single: hits as f64 / n,
            acc_agg: None,
            lr,
            wall_ms: wall(&started),
        });
        if !test.is_empty() {
            let r = evaluate(&mut net, test, &views, &norm, cfg.aggregation)?;
            rows.push(MetricsRow {
                run_id: cfg.run_id.clone(),
                epoch,
                split: Split::Test,
                pipeline: cfg.pipeline,
                loss: r.loss,
                acc_single: r.acc_single,
                acc_agg: r.acc_agg,
                lr,
                wall_ms: wall(&started),
            });
        }
    }
    Ok(TrainOutput {
        net,
        rows,
        step_losses,
        norm,
        views,
    })
}

pub fn write_metrics<W: std::io::Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record([
        "run_id",
        "epoch",
        "split",
        "pipeline",
        "loss",
        "acc_single",
        "acc_agg",
        "lr",
        "wall_ms",
    ])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Sidecar describing how to rebuild the network a checkpoint belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub arch: ArchSpec,
    pub pipeline: Pipeline,
    pub m: usize,
    pub views: String,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetStats {
    pub name: String,
    pub num_classes: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub input_dim: Option<(usize, usize, usize)>,
    pub channel_norm: ChannelNorm,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMeta {
    pub version: String,
    pub config: RunConfig,
    pub dataset: DatasetStats,
}

pub struct RunOutput {
    pub dir: PathBuf,
    pub rows: Vec<MetricsRow>,
}

/// Loads data, trains and writes metrics, checkpoint and metadata under
/// `out_dir`.
pub fn run(cfg: &RunConfig, data_dir: Option<&Path>, out_dir: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    let (train_set, test_set) = cfg.data.load(data_dir)?;
    let out = train(cfg, &train_set, &test_set)?;
    std::fs::create_dir_all(out_dir)?;
    write_metrics(
        std::fs::File::create(out_dir.join(METRICS_FILE))?,
        &out.rows,
    )?;
    std::fs::write(
        out_dir.join(CHECKPOINT_FILE),
        checkpoint::encode(&out.net.store)?,
    )?;
    let ck = CheckpointMeta {
        arch: out.net.layout.arch.clone(),
        pipeline: cfg.pipeline,
        m: out.net.layout.m,
        views: out.views_text(cfg),
        seed: cfg.seed,
    };
    std::fs::write(
        out_dir.join(CHECKPOINT_META_FILE),
        serde_json::to_string_pretty(&ck)?,
    )?;
    let meta = RunMeta {
        version: format!("vadlab {}", env!("CARGO_PKG_VERSION")),
        config: cfg.clone(),
        dataset: DatasetStats {
            name: train_set.name.clone(),
            num_classes: train_set.num_classes,
            train_count: train_set.len(),
            test_count: test_set.len(),
            input_dim: train_set.input_dim(),
            channel_norm: out.norm.clone(),
        },
    };
    std::fs::write(
        out_dir.join(RUN_META_FILE),
        serde_json::to_string_pretty(&meta)?,
    )?;
    Ok(RunOutput {
        dir: out_dir.to_path_buf(),
        rows: out.rows,
    })
}

impl TrainOutput {
    fn views_text(&self, cfg: &RunConfig) -> String {
        match cfg.pipeline {
            Pipeline::Supervised => "identity".into(),
            _ => cfg.views.to_string(),
        }
    }
}
