mod common;

use common::{config, tiny_arch};
use proptest::prelude::*;
use vadlab::autodiff::{Tape, Tensor};
use vadlab::data::{generate_synthetic, make_batches, ChannelNorm, Dataset, LabeledBatch};
use vadlab::net::{BranchId, Pipeline, SplitNetwork};
use vadlab::train::{
    aggregate, evaluate, loss_mt, loss_mv, loss_supervised, predict_aggregated, predict_single,
    read_metrics, train, view_batch, write_metrics, Aggregation, LossNormalization, RunConfig,
    ViewBatch,
};
use vadlab::views::{View, ViewSet, ViewSetSpec, ViewTransform};
use vadlab::Error;

fn dataset() -> Dataset {
    generate_synthetic(5, 16, 3, 8, 8, 0.8)
}

fn first_batch(data: &Dataset) -> LabeledBatch {
    make_batches(data, 8, 1, 0, true, true).next().unwrap()
}

fn prepared(views: &ViewSet) -> ViewBatch<f32> {
    let data = dataset();
    let norm = ChannelNorm::fit(&data).unwrap();
    view_batch(&mut first_batch(&data), views, &norm).unwrap()
}

fn net(p: Pipeline, m: usize) -> SplitNetwork<f32> {
    SplitNetwork::build(&tiny_arch(1, 3), p, m, 99).unwrap()
}

fn supervised_loss() -> f32 {
    let vb = prepared(&ViewSet::identity());
    let mut tape = Tape::new();
    let t = loss_supervised(&mut tape, &mut net(Pipeline::Supervised, 0), &vb).unwrap();
    tape.value(t.loss).item()
}

fn mt_loss(views: &ViewSet, lambda: f64, tweak: impl FnOnce(&mut SplitNetwork<f32>)) -> f32 {
    let vb = prepared(views);
    let mut n = net(Pipeline::SslMt, views.m());
    tweak(&mut n);
    let mut tape = Tape::new();
    let t = loss_mt(&mut tape, &mut n, &vb, lambda).unwrap();
    tape.value(t.loss).item()
}

fn mv_loss(n: &mut SplitNetwork<f32>, views: &ViewSet, norm: LossNormalization) -> f32 {
    let vb = prepared(views);
    let mut tape = Tape::new();
    let t = loss_mv(&mut tape, n, &vb, norm).unwrap();
    tape.value(t.loss).item()
}

fn rotations() -> ViewSet {
    ViewSet::build(&ViewSetSpec::rotations()).unwrap()
}

#[test]
fn view_batch_records_labels() {
    let data = dataset();
    let norm = ChannelNorm::fit(&data).unwrap();
    let mut b = first_batch(&data);
    let vb: ViewBatch<f32> = view_batch(&mut b, &rotations(), &norm).unwrap();
    assert_eq!(vb.num_views(), 4);
    let vl = b.view_labels.unwrap();
    assert_eq!(vl.len(), 32);
    assert_eq!(&vl[8..16], &[1; 8]);
}

#[test]
fn mt_with_identity_only_is_supervised() {
    assert_eq!(
        mt_loss(&ViewSet::identity(), 1.0, |_| {}),
        supervised_loss()
    );
}

#[test]
fn mt_with_zero_weight_is_supervised() {
    assert_eq!(mt_loss(&rotations(), 0.0, |_| {}), supervised_loss());
}

#[test]
fn uniform_pretext_head_costs_four_ln_four() {
    let zero_pretext = |n: &mut SplitNetwork<f32>| {
        for id in n.layout.branch_params(BranchId::Pretext).unwrap() {
            n.store.param_mut(id).value.data_mut().fill(0.0);
        }
    };
    let with = mt_loss(&rotations(), 1.0, zero_pretext);
    let without = mt_loss(&rotations(), 0.0, zero_pretext);
    let expect = 4.0 * 4f64.ln();
    assert!(
        ((with - without) as f64 - expect).abs() < 1e-5,
        "{} vs {expect}",
        with - without
    );
}

#[test]
fn mv_with_identity_only_is_supervised() {
    let mv = mv_loss(
        &mut net(Pipeline::SslMv, 0),
        &ViewSet::identity(),
        LossNormalization::AsWritten,
    );
    assert_eq!(mv, supervised_loss());
}

#[test]
fn duplicated_identity_view_doubles_the_loss() {
    let id = ViewTransform::Rotation { quarter_turns: 0 };
    let views = ViewSet::from_views(vec![
        View {
            label: 0,
            transform: id.clone(),
        },
        View {
            label: 1,
            transform: id,
        },
    ])
    .unwrap();
    let mut n = net(Pipeline::SslMv, 1);
    let src = n.layout.branch_params(BranchId::View(0)).unwrap();
    let dst = n.layout.branch_params(BranchId::View(1)).unwrap();
    for (s, d) in src.into_iter().zip(dst) {
        n.store.param_mut(d).value = n.store.param(s).value.clone();
    }
    let two = mv_loss(&mut n, &views, LossNormalization::AsWritten);
    assert_eq!(two, 2.0 * supervised_loss());
}

#[test]
fn mean_over_views_divides_by_view_count() {
    let mut n = net(Pipeline::SslMv, 3);
    let written = mv_loss(&mut n.clone(), &rotations(), LossNormalization::AsWritten);
    let mean = mv_loss(&mut n, &rotations(), LossNormalization::MeanOverViews);
    assert_eq!(mean, written / 4.0);
}

#[test]
fn loss_arity_is_checked() {
    let vb = prepared(&rotations());
    let mut tape = Tape::new();
    assert!(loss_mv(
        &mut tape,
        &mut net(Pipeline::SslMv, 2),
        &vb,
        LossNormalization::AsWritten
    )
    .is_err());
    assert!(loss_mt(&mut tape, &mut net(Pipeline::SslMt, 1), &vb, 1.0).is_err());
    assert!(loss_mt(&mut tape, &mut net(Pipeline::SslMv, 3), &vb, 1.0).is_err());
}

#[test]
fn mv_without_extra_views_reproduces_supervised_training() {
    let data = dataset();
    let mut sup = config(Pipeline::Supervised, "identity");
    sup.epochs = 3;
    let mut mv = sup.clone();
    mv.pipeline = Pipeline::SslMv;
    let a = train(&sup, &data, &data).unwrap();
    let b = train(&mv, &data, &data).unwrap();
    assert!(a.step_losses.len() >= 5);
    assert_eq!(a.step_losses, b.step_losses);
    for (pa, pb) in a.net.store.params().iter().zip(b.net.store.params()) {
        assert_eq!(pa.value, pb.value);
    }
    for (sa, sb) in a.net.store.all_stats().iter().zip(b.net.store.all_stats()) {
        assert_eq!((&sa.mean, &sa.var), (&sb.mean, &sb.var));
    }
}

#[test]
fn training_is_deterministic() {
    let data = dataset();
    for (p, v) in [
        (Pipeline::SslMt, "rot=0,90,180,270"),
        (Pipeline::SslMv, "perm=RGB,GBR"),
    ] {
        let cfg = config(p, v);
        let a = train(&cfg, &data, &data).unwrap();
        let b = train(&cfg, &data, &data).unwrap();
        assert_eq!(a.rows, b.rows);
        assert!(a.step_losses.iter().all(|l| l.is_finite() && *l >= 0.0));
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        write_metrics(&mut ca, &a.rows).unwrap();
        write_metrics(&mut cb, &b.rows).unwrap();
        assert_eq!(ca, cb);
    }
}

#[test]
fn divergence_aborts_with_location() {
    let data = dataset();
    let mut cfg = config(Pipeline::Supervised, "identity");
    cfg.lr = 1e30;
    cfg.momentum = 0.0;
    match train(&cfg, &data, &data) {
        Err(e @ Error::NonFinite { .. }) => {
            assert_eq!(e.exit_code(), 3);
            assert!(e.to_string().contains("epoch"));
        }
        other => panic!(
            "expected a non-finite abort, got {:?}",
            other.map(|o| o.rows)
        ),
    }
}

#[test]
fn metrics_rows_and_csv() {
    let data = dataset();
    let out = train(&config(Pipeline::SslMv, "rot=0,180"), &data, &data).unwrap();
    assert_eq!(out.rows.len(), 4);
    for r in &out.rows {
        assert!(r.loss.is_finite());
        assert!((0.0..=1.0).contains(&r.acc_single));
        assert_eq!(r.wall_ms, 0);
    }
    assert!(out.rows[1].acc_agg.is_some() && out.rows[0].acc_agg.is_none());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    write_metrics(std::fs::File::create(&path).unwrap(), &out.rows).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("run_id,epoch,split,pipeline,loss,acc_single,acc_agg,lr,wall_ms\n"));
    assert!(text.lines().nth(1).unwrap().contains(",train,ssl_mv,"));
    assert_eq!(read_metrics(&path).unwrap(), out.rows);
}

#[test]
fn single_prediction_paths() {
    let data = dataset();
    let norm = ChannelNorm::fit(&data).unwrap();
    let img = &data.samples[3].image;
    let (c, p) = predict_single(&mut net(Pipeline::Supervised, 0), img, &norm).unwrap();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    assert_eq!(p.len(), 3);
    assert!(c < 3);
    let mut mv = net(Pipeline::SslMv, 0);
    assert_eq!(predict_single(&mut mv, img, &norm).unwrap(), (c, p.clone()));
    let agg = predict_aggregated(
        &mut mv,
        img,
        &ViewSet::identity(),
        &norm,
        Aggregation::MeanSoftmax,
    )
    .unwrap();
    assert_eq!(agg.0, c);
    assert!(agg.1.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn aggregated_inference_requires_view_heads() {
    let data = dataset();
    let norm = ChannelNorm::fit(&data).unwrap();
    let img = &data.samples[0].image;
    for p in [Pipeline::Supervised, Pipeline::SslMt] {
        let m = if p == Pipeline::SslMt { 3 } else { 0 };
        let r = predict_aggregated(
            &mut net(p, m),
            img,
            &rotations(),
            &norm,
            Aggregation::MeanSoftmax,
        );
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }
    let r = predict_aggregated(
        &mut net(Pipeline::SslMv, 1),
        img,
        &rotations(),
        &norm,
        Aggregation::MeanSoftmax,
    );
    assert!(r.is_err());
}

#[test]
fn identical_heads_and_identity_views_aggregate_to_single() {
    let data = dataset();
    let norm = ChannelNorm::fit(&data).unwrap();
    let id = ViewTransform::Rotation { quarter_turns: 0 };
    let views = ViewSet::from_views(
        (0..3)
            .map(|label| View {
                label,
                transform: id.clone(),
            })
            .collect(),
    )
    .unwrap();
    let mut n = net(Pipeline::SslMv, 2);
    let src = n.layout.branch_params(BranchId::View(0)).unwrap();
    for j in 1..3 {
        for (s, d) in src
            .iter()
            .zip(n.layout.branch_params(BranchId::View(j)).unwrap())
        {
            n.store.param_mut(d).value = n.store.param(*s).value.clone();
        }
    }
    for s in &data.samples {
        let single = predict_single(&mut n, &s.image, &norm).unwrap();
        let agg =
            predict_aggregated(&mut n, &s.image, &views, &norm, Aggregation::MeanSoftmax).unwrap();
        assert_eq!(single.0, agg.0);
        assert!(single
            .1
            .iter()
            .zip(&agg.1)
            .all(|(a, b)| (a - b).abs() < 1e-6));
    }
}

#[test]
fn evaluate_rejects_empty_set() {
    let empty = Dataset::new("e", 3, vec![]);
    let r = evaluate(
        &mut net(Pipeline::Supervised, 0),
        &empty,
        &ViewSet::identity(),
        &ChannelNorm::identity(3),
        Aggregation::MeanSoftmax,
    );
    assert!(r.is_err());
}

#[test]
fn config_round_trips_through_json() {
    let cfg = config(Pipeline::SslMt, "rot=0,90,180,270*sharp=1,0,0.5,1.5");
    let text = cfg.to_json();
    let back = RunConfig::from_json(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.to_json(), text);
    let minimal = r#"{"run_id":"a","pipeline":"ssl_mv","views":{"families":[{"rotation":[0,90]}]},"epochs":1,
        "data":{"kind":"synthetic","seed":1,"classes":2,"height":8,"width":8,"separability":1.0,"train":4,"test":2}}"#;
    let m = RunConfig::from_json(minimal).unwrap();
    assert_eq!(
        (m.batch_size, m.lr, m.momentum, m.weight_decay),
        (128, 0.1, 0.9, 5e-4)
    );
    assert_eq!(m.view_set().unwrap().len(), 2);
    assert!(RunConfig::from_json(r#"{"run_id":"a"}"#).is_err());
}

#[test]
fn config_validation() {
    let ok = config(Pipeline::SslMv, "rot=0,90");
    ok.validate().unwrap();
    let mut bad = ok.clone();
    bad.epochs = 0;
    assert!(bad.validate().is_err());
    let mut bad = ok.clone();
    bad.pretext_weight = -1.0;
    assert!(bad.validate().is_err());
    let mut bad = ok.clone();
    bad.shared_blocks = Some(4);
    assert!(bad.validate().is_err());
    let mut bad = ok;
    bad.views = "rot=90".parse().unwrap();
    assert!(bad.validate().is_err());
}

proptest! {
    #[test]
    fn aggregation_sums_to_one_and_ignores_view_order(
        rows in proptest::collection::vec(proptest::collection::vec(-20.0f64..20.0, 4), 1..7),
        rot in 0usize..7,
    ) {
        let p = aggregate(&rows, Aggregation::MeanSoftmax);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let mut shuffled = rows.clone();
        shuffled.rotate_left(rot % rows.len());
        shuffled.reverse();
        let q = aggregate(&shuffled, Aggregation::MeanSoftmax);
        prop_assert!(p.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-6));
    }
}

#[test]
fn tensors_used_by_losses_are_finite() {
    let vb = prepared(&rotations());
    assert!(vb.inputs.iter().all(Tensor::all_finite));
}
