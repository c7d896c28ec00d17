use crate::data::DatasetMeta;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One stage: `convs` 3x3 convolutions (each followed by batch norm and
/// ReLU), then an optional 2x2 max pool.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub width: usize,
    pub convs: usize,
    pub pool: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub in_channels: usize,
    pub blocks: Vec<BlockSpec>,
    /// Leading blocks owned by the shared trunk.
    pub shared_blocks: usize,
    /// Width of the pooled embedding fed to every head; equals the last
    /// block's width.
    pub embed_dim: usize,
    pub num_classes: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchScale {
    Desk,
    Paper,
}

impl ArchSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.blocks.len();
        if n == 0 {
            return Err(Error::Arch("at least one block is required".into()));
        }
        if self.shared_blocks < 1 || self.shared_blocks > n {
            return Err(Error::Arch(format!(
                "shared_blocks {} out of range 1..={n}",
                self.shared_blocks
            )));
        }
        if self.in_channels == 0 || self.num_classes == 0 {
            return Err(Error::Arch(
                "in_channels and num_classes must be positive".into(),
            ));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.width == 0 || b.convs == 0 {
                return Err(Error::Arch(format!(
                    "block {i} needs positive width and conv count"
                )));
            }
        }
        let last = self.blocks[n - 1].width;
        if self.embed_dim != last {
            return Err(Error::Arch(format!(
                "embed_dim {} must equal the last block width {last}",
                self.embed_dim
            )));
        }
        Ok(())
    }

    /// Same architecture with a different split point.
    pub fn with_shared_blocks(&self, k: usize) -> Self {
        ArchSpec {
            shared_blocks: k,
            ..self.clone()
        }
    }

    /// Input channel count of block `i`.
    pub(crate) fn block_input(&self, i: usize) -> usize {
        if i == 0 {
            self.in_channels
        } else {
            self.blocks[i - 1].width
        }
    }
}

/// Desk scale: three blocks of two 3x3 convolutions with widths 32, 64 and
/// 128, pooling after the first two, global average pooling and a dense head.
pub fn default_arch(meta: &DatasetMeta, scale: ArchScale) -> Result<ArchSpec> {
    match scale {
        ArchScale::Paper => Err(Error::Unsupported(
            "paper-scale architecture (32-layer ResNet) is not implemented".into(),
        )),
        ArchScale::Desk => Ok(desk_arch(meta.input_dim.0, meta.num_classes)),
    }
}

pub fn desk_arch(in_channels: usize, num_classes: usize) -> ArchSpec {
    let block = |width, pool| BlockSpec {
        width,
        convs: 2,
        pool,
    };
    ArchSpec {
        in_channels,
        blocks: vec![block(32, true), block(64, true), block(128, false)],
        shared_blocks: 1,
        embed_dim: 128,
        num_classes,
    }
}
