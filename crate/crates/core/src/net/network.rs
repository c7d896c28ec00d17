use super::arch::{ArchSpec, BlockSpec};
use crate::autodiff::{
    BatchNormConfig, Initializer, Mode, ParamId, ParamStore, Real, StatsId, Tape, Tensor, Var,
};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Supervised,
    SslMt,
    SslMv,
}

impl Pipeline {
    /// Branches the pipeline owns for `m` non-identity views.
    pub fn branch_ids(self, m: usize) -> Vec<BranchId> {
        match self {
            Pipeline::Supervised => vec![BranchId::Downstream],
            Pipeline::SslMt => vec![BranchId::Downstream, BranchId::Pretext],
            Pipeline::SslMv => (0..=m).map(BranchId::View).collect(),
        }
    }

    fn head_width(self, branch: BranchId, classes: usize, m: usize) -> usize {
        match branch {
            BranchId::Pretext => m + 1,
            _ => classes,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Supervised => "supervised",
            Pipeline::SslMt => "ssl_mt",
            Pipeline::SslMv => "ssl_mv",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supervised" => Ok(Pipeline::Supervised),
            "ssl_mt" => Ok(Pipeline::SslMt),
            "ssl_mv" => Ok(Pipeline::SslMv),
            other => Err(Error::Config(format!("unknown pipeline `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BranchId {
    Downstream,
    Pretext,
    View(usize),
}

impl fmt::Display for BranchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BranchId::Downstream => f.write_str("downstream"),
            BranchId::Pretext => f.write_str("pretext"),
            BranchId::View(j) => write!(f, "view_{j}"),
        }
    }
}

#[derive(Clone, Debug)]
struct ConvUnit {
    weight: ParamId,
    gamma: ParamId,
    beta: ParamId,
    stats: StatsId,
}

#[derive(Clone, Debug)]
struct Block {
    convs: Vec<ConvUnit>,
    pool: bool,
}

#[derive(Clone, Debug)]
struct Branch {
    id: BranchId,
    tail: Vec<Block>,
    head_weight: ParamId,
    head_bias: ParamId,
    width: usize,
}

/// Parameter handles and wiring of a [`SplitNetwork`], separate from the
/// store so forward passes can run against any compatible store.
#[derive(Clone, Debug)]
pub struct NetLayout {
    pub arch: ArchSpec,
    pub pipeline: Pipeline,
    pub m: usize,
    trunk: Vec<Block>,
    branches: Vec<Branch>,
    bn: BatchNormConfig,
}

fn conv_scalars(cin: usize, cout: usize) -> usize {
    cin * cout * 9 + 2 * cout
}

fn block_scalars(arch: &ArchSpec, i: usize) -> usize {
    let b = &arch.blocks[i];
    (0..b.convs)
        .map(|j| conv_scalars(if j == 0 { arch.block_input(i) } else { b.width }, b.width))
        .sum()
}

/// Trainable scalar count implied by the architecture alone.
pub fn param_count(arch: &ArchSpec, pipeline: Pipeline, m: usize) -> usize {
    let k = arch.shared_blocks;
    let trunk: usize = (0..k).map(|i| block_scalars(arch, i)).sum();
    let tail: usize = (k..arch.blocks.len()).map(|i| block_scalars(arch, i)).sum();
    let branches: usize = pipeline
        .branch_ids(m)
        .into_iter()
        .map(|b| {
            let c = pipeline.head_width(b, arch.num_classes, m);
            tail + arch.embed_dim * c + c
        })
        .sum();
    trunk + branches
}

fn build_block<T: Real>(
    store: &mut ParamStore<T>,
    init: &mut Initializer,
    prefix: &str,
    cin: usize,
    spec: &BlockSpec,
) -> Block {
    let mut cin = cin;
    let convs = (0..spec.convs)
        .map(|j| {
            let name = format!("{prefix}.conv{j}");
            let w = init.he_normal(&[spec.width, cin, 3, 3], cin * 9);
            let unit = ConvUnit {
                weight: store.add(format!("{name}.weight"), w),
                gamma: store.add(
                    format!("{name}.bn.gamma"),
                    Tensor::full([spec.width], T::one()),
                ),
                beta: store.add(format!("{name}.bn.beta"), Tensor::zeros([spec.width])),
                stats: store.add_stats(format!("{name}.bn"), spec.width),
            };
            cin = spec.width;
            unit
        })
        .collect();
    Block {
        convs,
        pool: spec.pool,
    }
}

impl NetLayout {
    pub fn branch_ids(&self) -> Vec<BranchId> {
        self.branches.iter().map(|b| b.id).collect()
    }

    fn branch(&self, id: BranchId) -> Result<&Branch> {
        self.branches.iter().find(|b| b.id == id).ok_or_else(|| {
            Error::UnknownBranch(format!(
                "{id} (pipeline {} has {:?})",
                self.pipeline,
                self.branch_ids()
            ))
        })
    }

    pub fn head_width(&self, id: BranchId) -> Result<usize> {
        Ok(self.branch(id)?.width)
    }

    fn block_params(block: &Block) -> Vec<ParamId> {
        block
            .convs
            .iter()
            .flat_map(|c| [c.weight, c.gamma, c.beta])
            .collect()
    }

    pub fn trunk_params(&self) -> Vec<ParamId> {
        self.trunk.iter().flat_map(Self::block_params).collect()
    }

    /// Parameters private to one branch: tail blocks and head.
    pub fn branch_params(&self, id: BranchId) -> Result<Vec<ParamId>> {
        let b = self.branch(id)?;
        let mut ids: Vec<ParamId> = b.tail.iter().flat_map(Self::block_params).collect();
        ids.extend([b.head_weight, b.head_bias]);
        Ok(ids)
    }

    fn run_block<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &mut ParamStore<T>,
        block: &Block,
        mut x: Var,
        mode: Mode,
    ) -> Result<Var> {
        for c in &block.convs {
            let w = tape.param(store, c.weight);
            let g = tape.param(store, c.gamma);
            let b = tape.param(store, c.beta);
            let y = tape.conv2d(x, w, 1, 1)?;
            let y = tape.batch_norm(y, g, b, store.stats_mut(c.stats), mode, self.bn)?;
            x = tape.relu(y);
        }
        if block.pool {
            x = tape.max_pool2(x)?;
        }
        Ok(x)
    }

    /// Shared feature extractor on an `N x C x H x W` input.
    pub fn trunk<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &mut ParamStore<T>,
        x: Var,
        mode: Mode,
    ) -> Result<Var> {
        let c = tape.value(x).shape().get(1).copied();
        if tape.value(x).shape().len() != 4 || c != Some(self.arch.in_channels) {
            return Err(Error::shape(
                "forward",
                format!(
                    "expected N x {} x H x W input, got {:?}",
                    self.arch.in_channels,
                    tape.value(x).shape()
                ),
            ));
        }
        let mut x = x;
        for block in &self.trunk {
            x = self.run_block(tape, store, block, x, mode)?;
        }
        Ok(x)
    }

    /// Branch tail, global average pool and head on trunk features.
    pub fn head<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &mut ParamStore<T>,
        id: BranchId,
        features: Var,
        mode: Mode,
    ) -> Result<Var> {
        let b = self.branch(id)?;
        let mut x = features;
        for block in &b.tail {
            x = self.run_block(tape, store, block, x, mode)?;
        }
        let pooled = tape.global_avg_pool(x)?;
        let w = tape.param(store, b.head_weight);
        let bias = tape.param(store, b.head_bias);
        tape.dense(pooled, w, bias)
    }
}

/// Trunk plus named branches over a single parameter store.
#[derive(Clone, Debug)]
pub struct SplitNetwork<T> {
    pub layout: NetLayout,
    pub store: ParamStore<T>,
}

impl<T: Real> SplitNetwork<T> {
    /// Parameters are drawn in a fixed order (trunk, then branches in
    /// [`Pipeline::branch_ids`] order), so the first branch of every
    /// pipeline starts from the same values for a given seed.
    pub fn build(arch: &ArchSpec, pipeline: Pipeline, m: usize, seed: u64) -> Result<Self> {
        arch.validate()?;
        if pipeline == Pipeline::Supervised && m != 0 {
            return Err(Error::Arch(format!(
                "supervised pipeline takes no extra views, got M = {m}"
            )));
        }
        let mut store = ParamStore::new();
        let mut init = Initializer::new(seed);
        let k = arch.shared_blocks;
        let trunk = (0..k)
            .map(|i| {
                build_block(
                    &mut store,
                    &mut init,
                    &format!("trunk.block{i}"),
                    arch.block_input(i),
                    &arch.blocks[i],
                )
            })
            .collect();
        let branches = pipeline
            .branch_ids(m)
            .into_iter()
            .map(|id| {
                let tail = (k..arch.blocks.len())
                    .map(|i| {
                        build_block(
                            &mut store,
                            &mut init,
                            &format!("{id}.block{i}"),
                            arch.block_input(i),
                            &arch.blocks[i],
                        )
                    })
                    .collect();
                let width = pipeline.head_width(id, arch.num_classes, m);
                let w = init.he_normal(&[arch.embed_dim, width], arch.embed_dim);
                Branch {
                    id,
                    tail,
                    head_weight: store.add(format!("{id}.head.weight"), w),
                    head_bias: store.add(format!("{id}.head.bias"), Tensor::zeros([width])),
                    width,
                }
            })
            .collect();
        Ok(SplitNetwork {
            layout: NetLayout {
                arch: arch.clone(),
                pipeline,
                m,
                trunk,
                branches,
                bn: BatchNormConfig::default(),
            },
            store,
        })
    }

    pub fn pipeline(&self) -> Pipeline {
        self.layout.pipeline
    }

    pub fn branch_ids(&self) -> Vec<BranchId> {
        self.layout.branch_ids()
    }

    pub fn param_count(&self) -> usize {
        self.store.num_scalars()
    }

    /// Logits of one branch for an `N x C x H x W` batch.
    pub fn forward(
        &mut self,
        branch: BranchId,
        input: &Tensor<T>,
        mode: Mode,
    ) -> Result<Tensor<T>> {
        Ok(self.forward_traced(branch, input, mode)?.1)
    }

    /// Like [`forward`](Self::forward) but also returns the trunk output.
    pub fn forward_traced(
        &mut self,
        branch: BranchId,
        input: &Tensor<T>,
        mode: Mode,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        self.layout.branch(branch)?;
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let f = self.layout.trunk(&mut tape, &mut self.store, x, mode)?;
        let logits = self
            .layout
            .head(&mut tape, &mut self.store, branch, f, mode)?;
        Ok((tape.value(f).clone(), tape.value(logits).clone()))
    }

    pub fn cast<U: Real>(&self) -> SplitNetwork<U> {
        SplitNetwork {
            layout: self.layout.clone(),
            store: self.store.cast(),
        }
    }
}
