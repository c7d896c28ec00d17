use super::config::Aggregation;
use super::loss::stack_images;
use crate::autodiff::Mode;
use crate::data::{ChannelNorm, Dataset};
use crate::error::{Error, Result};
use crate::net::{BranchId, Pipeline, SplitNetwork};
use crate::views::{Image, ViewSet};

const EVAL_BATCH: usize = 250;

/// Max-stabilized softmax of one logit row, in f64.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / z).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Combines per-view logit rows (in view order) into one probability
/// vector.
pub fn aggregate(per_view_logits: &[Vec<f64>], method: Aggregation) -> Vec<f64> {
    let k = per_view_logits.first().map_or(0, Vec::len);
    let n = per_view_logits.len() as f64;
    match method {
        Aggregation::MeanSoftmax => {
            let mut p = vec![0.0; k];
            for row in per_view_logits {
                for (acc, v) in p.iter_mut().zip(softmax(row)) {
                    *acc += v;
                }
            }
            p.into_iter().map(|v| v / n).collect()
        }
        Aggregation::LogitSum => {
            let mut s = vec![0.0; k];
            for row in per_view_logits {
                for (acc, &v) in s.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            softmax(&s)
        }
        Aggregation::MajorityVote => {
            let mut votes = vec![0.0; k];
            for row in per_view_logits {
                votes[argmax(row)] += 1.0;
            }
            votes.into_iter().map(|v| v / n).collect()
        }
    }
}

/// Branch answering single inference: view 0's head for the multi-view
/// pipeline, the downstream head otherwise.
pub fn single_branch(net: &SplitNetwork<f32>) -> BranchId {
    match net.pipeline() {
        Pipeline::SslMv => BranchId::View(0),
        _ => BranchId::Downstream,
    }
}

fn rows(t: &crate::autodiff::Tensor<f32>) -> Vec<Vec<f64>> {
    let k = t.shape()[1];
    t.data()
        .chunks(k)
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect()
}

/// Eval-mode logits of `branch` for each image.
fn logits_of(
    net: &mut SplitNetwork<f32>,
    branch: BranchId,
    images: &[Image],
    norm: &ChannelNorm,
) -> Result<Vec<Vec<f64>>> {
    let x = stack_images(images, norm)?;
    Ok(rows(&net.forward(branch, &x, Mode::Eval)?))
}

fn require_views(net: &SplitNetwork<f32>, views: &ViewSet) -> Result<()> {
    if net.pipeline() != Pipeline::SslMv {
        return Err(Error::Unsupported(format!(
            "aggregated inference needs per-view heads; a {} network has none",
            net.pipeline()
        )));
    }
    if views.len() != net.layout.m + 1 {
        return Err(Error::ViewSet(format!(
            "network has {} view heads, view set has {} views",
            net.layout.m + 1,
            views.len()
        )));
    }
    Ok(())
}

/// Prediction from the identity view alone.
pub fn predict_single(
    net: &mut SplitNetwork<f32>,
    image: &Image,
    norm: &ChannelNorm,
) -> Result<(usize, Vec<f64>)> {
    let logits = logits_of(net, single_branch(net), std::slice::from_ref(image), norm)?;
    let p = softmax(&logits[0]);
    Ok((argmax(&p), p))
}

/// Prediction combining every view `T_j(x)` through its own head.
pub fn predict_aggregated(
    net: &mut SplitNetwork<f32>,
    image: &Image,
    views: &ViewSet,
    norm: &ChannelNorm,
    method: Aggregation,
) -> Result<(usize, Vec<f64>)> {
    require_views(net, views)?;
    let mut per_view = Vec::with_capacity(views.len());
    for v in views.views() {
        let img = v.transform.apply(image)?;
        per_view.push(logits_of(net, BranchId::View(v.label), &[img], norm)?.remove(0));
    }
    let p = aggregate(&per_view, method);
    Ok((argmax(&p), p))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult {
    /// Mean cross-entropy of the single-inference head.
    pub loss: f64,
    pub acc_single: f64,
    /// Present for multi-view networks.
    pub acc_agg: Option<f64>,
}

/// Fraction of rows whose arg-max equals the label.
pub fn accuracy(logit_rows: &[Vec<f64>], labels: &[usize]) -> f64 {
    let correct = logit_rows
        .iter()
        .zip(labels)
        .filter(|(r, &y)| argmax(r) == y)
        .count();
    correct as f64 / labels.len() as f64
}

/// Accuracy over a labeled set in eval mode, batched in index order.
pub fn evaluate(
    net: &mut SplitNetwork<f32>,
    data: &Dataset,
    views: &ViewSet,
    norm: &ChannelNorm,
    method: Aggregation,
) -> Result<EvalResult> {
    if data.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty set".into()));
    }
    let agg = net.pipeline() == Pipeline::SslMv;
    if agg {
        require_views(net, views)?;
    }
    let single = single_branch(net);
    let (mut loss, mut hit_single, mut hit_agg) = (0.0, 0usize, 0usize);
    for chunk in data.samples.chunks(EVAL_BATCH) {
        let base: Vec<Image> = chunk.iter().map(|s| s.image.clone()).collect();
        let labels: Vec<usize> = chunk.iter().map(|s| s.label).collect();
        let single_rows = logits_of(net, single, &base, norm)?;
        for (r, &y) in single_rows.iter().zip(&labels) {
            loss -= softmax(r)[y].max(f64::MIN_POSITIVE).ln();
            hit_single += (argmax(r) == y) as usize;
        }
        if agg {
            let mut per_view: Vec<Vec<Vec<f64>>> = Vec::with_capacity(views.len());
            for v in views.views() {
                let imgs = base
                    .iter()
                    .map(|img| v.transform.apply(img))
                    .collect::<Result<Vec<_>>>()?;
                per_view.push(logits_of(net, BranchId::View(v.label), &imgs, norm)?);
            }
            for (i, &y) in labels.iter().enumerate() {
                let sample: Vec<Vec<f64>> = per_view.iter().map(|rows| rows[i].clone()).collect();
                hit_agg += (argmax(&aggregate(&sample, method)) == y) as usize;
            }
        }
    }
    let n = data.len() as f64;
    Ok(EvalResult {
        loss: loss / n,
        acc_single: hit_single as f64 / n,
        acc_agg: agg.then(|| hit_agg as f64 / n),
    })
}
