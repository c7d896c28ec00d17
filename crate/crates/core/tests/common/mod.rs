#![allow(dead_code)]

use vadlab::net::{ArchSpec, BlockSpec, Pipeline};
use vadlab::train::{DataSpec, RunConfig};
use vadlab::views::ViewSetSpec;

pub fn tiny_arch(k: usize, classes: usize) -> ArchSpec {
    let block = |width, pool| BlockSpec {
        width,
        convs: 1,
        pool,
    };
    ArchSpec {
        in_channels: 3,
        blocks: vec![block(8, true), block(8, false), block(12, false)],
        shared_blocks: k,
        embed_dim: 12,
        num_classes: classes,
    }
}

pub fn synthetic(classes: usize, side: usize, train: usize, test: usize) -> DataSpec {
    DataSpec::Synthetic {
        seed: 3,
        classes,
        height: side,
        width: side,
        separability: 0.8,
        train,
        test,
    }
}

pub fn config(pipeline: Pipeline, views: &str) -> RunConfig {
    RunConfig {
        run_id: format!("{pipeline}"),
        pipeline,
        views: views.parse::<ViewSetSpec>().unwrap(),
        arch: Some(tiny_arch(1, 3)),
        shared_blocks: None,
        epochs: 2,
        batch_size: 8,
        lr: 0.05,
        momentum: 0.9,
        weight_decay: 5e-4,
        pretext_weight: 1.0,
        view_loss_normalization: Default::default(),
        aggregation: Default::default(),
        seed: 17,
        data: synthetic(3, 8, 24, 12),
        augment: true,
        timing: false,
        output_dir: None,
    }
}
