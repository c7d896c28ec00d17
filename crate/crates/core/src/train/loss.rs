use super::config::LossNormalization;
use crate::autodiff::{Mode, Real, Tape, Tensor, Var};
use crate::data::{ChannelNorm, LabeledBatch};
use crate::error::{Error, Result};
use crate::net::{BranchId, Pipeline, SplitNetwork};
use crate::views::{Image, ViewSet};

/// Normalized inputs of every view of a batch, one `B x C x H x W` tensor
/// per view label.
#[derive(Clone, Debug)]
pub struct ViewBatch<T> {
    pub inputs: Vec<Tensor<T>>,
    pub labels: Vec<usize>,
}

impl<T: Real> ViewBatch<T> {
    pub fn num_views(&self) -> usize {
        self.inputs.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Stacks normalized images into an `N x C x H x W` tensor.
pub fn stack_images<T: Real>(images: &[Image], norm: &ChannelNorm) -> Result<Tensor<T>> {
    let Some(first) = images.first() else {
        return Err(Error::Data("cannot stack an empty image list".into()));
    };
    let (c, h, w) = first.dims();
    let mut buf = vec![0.0f32; c * h * w];
    let mut data = Vec::with_capacity(images.len() * buf.len());
    for img in images {
        if img.dims() != (c, h, w) {
            return Err(Error::Data(format!(
                "image {:?} in a {:?} batch",
                img.dims(),
                (c, h, w)
            )));
        }
        norm.apply_into(img, &mut buf);
        data.extend(buf.iter().map(|&v| T::lit(v as f64)));
    }
    Tensor::new([images.len(), c, h, w], data)
}

/// Applies every view transform to every (already augmented) base image of
/// the batch, then normalizes. Also records the view label of each stacked
/// row on the batch.
pub fn view_batch<T: Real>(
    batch: &mut LabeledBatch,
    views: &ViewSet,
    norm: &ChannelNorm,
) -> Result<ViewBatch<T>> {
    let base: Vec<Image> = (0..batch.len()).map(|i| batch.image(i)).collect();
    let mut inputs = Vec::with_capacity(views.len());
    for v in views.views() {
        let imgs = base
            .iter()
            .map(|img| v.transform.apply(img))
            .collect::<Result<Vec<_>>>()?;
        inputs.push(stack_images(&imgs, norm)?);
    }
    batch.view_labels = Some(
        views
            .labels()
            .iter()
            .flat_map(|&j| std::iter::repeat_n(j, batch.len()))
            .collect(),
    );
    Ok(ViewBatch {
        inputs,
        labels: batch.labels.clone(),
    })
}

/// Scalar loss plus the logits used for single-inference accuracy.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub loss: Var,
    pub single_logits: Var,
}

fn expect_pipeline<T: Real>(
    net: &SplitNetwork<T>,
    want: Pipeline,
    vb: &ViewBatch<T>,
    views: usize,
) -> Result<()> {
    if net.pipeline() != want {
        return Err(Error::Unsupported(format!(
            "{want} loss on a {} network",
            net.pipeline()
        )));
    }
    if vb.num_views() != views {
        return Err(Error::shape(
            "loss",
            format!(
                "network expects {views} views, batch has {}",
                vb.num_views()
            ),
        ));
    }
    Ok(())
}

/// Cross-entropy of the downstream head on the identity view.
pub fn loss_supervised<T: Real>(
    tape: &mut Tape<T>,
    net: &mut SplitNetwork<T>,
    vb: &ViewBatch<T>,
) -> Result<LossTerms> {
    let x0 = vb
        .inputs
        .first()
        .ok_or_else(|| Error::shape("loss", "batch has no views"))?;
    if !net.branch_ids().contains(&BranchId::Downstream) {
        return Err(Error::Unsupported(format!(
            "supervised loss on a {} network",
            net.pipeline()
        )));
    }
    let layout = net.layout.clone();
    let x = tape.constant(x0.clone());
    let f = layout.trunk(tape, &mut net.store, x, Mode::Train)?;
    let logits = layout.head(tape, &mut net.store, BranchId::Downstream, f, Mode::Train)?;
    let loss = tape.softmax_cross_entropy(logits, &vb.labels)?;
    Ok(LossTerms {
        loss,
        single_logits: logits,
    })
}

/// Downstream cross-entropy on view 0 plus `lambda` times the per-sample
/// sum over views of the view-label cross-entropy. Each view runs through
/// the trunk as its own batch.
pub fn loss_mt<T: Real>(
    tape: &mut Tape<T>,
    net: &mut SplitNetwork<T>,
    vb: &ViewBatch<T>,
    lambda: f64,
) -> Result<LossTerms> {
    expect_pipeline(net, Pipeline::SslMt, vb, net.layout.m + 1)?;
    let layout = net.layout.clone();
    let mut down = None;
    let mut pretext: Option<Var> = None;
    for (j, input) in vb.inputs.iter().enumerate() {
        let x = tape.constant(input.clone());
        let f = layout.trunk(tape, &mut net.store, x, Mode::Train)?;
        if j == 0 {
            let logits = layout.head(tape, &mut net.store, BranchId::Downstream, f, Mode::Train)?;
            down = Some((tape.softmax_cross_entropy(logits, &vb.labels)?, logits));
        }
        let p = layout.head(tape, &mut net.store, BranchId::Pretext, f, Mode::Train)?;
        let ce = tape.softmax_cross_entropy(p, &vec![j; vb.len()])?;
        pretext = Some(match pretext {
            None => ce,
            Some(acc) => tape.add(acc, ce)?,
        });
    }
    let (ce_down, logits) = down.expect("at least one view");
    let weighted = tape.scale(pretext.expect("at least one view"), T::lit(lambda));
    Ok(LossTerms {
        loss: tape.add(ce_down, weighted)?,
        single_logits: logits,
    })
}

/// Sum over views of each view head's cross-entropy on its own view,
/// optionally divided by the number of views.
pub fn loss_mv<T: Real>(
    tape: &mut Tape<T>,
    net: &mut SplitNetwork<T>,
    vb: &ViewBatch<T>,
    normalization: LossNormalization,
) -> Result<LossTerms> {
    expect_pipeline(net, Pipeline::SslMv, vb, net.layout.m + 1)?;
    let layout = net.layout.clone();
    let mut total: Option<Var> = None;
    let mut single = None;
    for (j, input) in vb.inputs.iter().enumerate() {
        let x = tape.constant(input.clone());
        let f = layout.trunk(tape, &mut net.store, x, Mode::Train)?;
        let logits = layout.head(tape, &mut net.store, BranchId::View(j), f, Mode::Train)?;
        if j == 0 {
            single = Some(logits);
        }
        let ce = tape.softmax_cross_entropy(logits, &vb.labels)?;
        total = Some(match total {
            None => ce,
            Some(acc) => tape.add(acc, ce)?,
        });
    }
    let mut loss = total.expect("at least one view");
    if normalization == LossNormalization::MeanOverViews && vb.num_views() > 1 {
        loss = tape.scale(loss, T::lit(1.0 / vb.num_views() as f64));
    }
    Ok(LossTerms {
        loss,
        single_logits: single.expect("at least one view"),
    })
}
