use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vadlab::autodiff::{GradCheck, Mode, SgdState, Tape, Tensor};
use vadlab::data::cifar::CifarKind;
use vadlab::net::{
    checkpoint, default_arch, ArchScale, ArchSpec, BlockSpec, BranchId, Pipeline, SplitNetwork,
};
use vadlab::Error;

fn tiny_arch(k: usize, classes: usize) -> ArchSpec {
    let block = |width, pool| BlockSpec {
        width,
        convs: 1,
        pool,
    };
    ArchSpec {
        in_channels: 3,
        blocks: vec![block(4, true), block(5, false), block(6, false)],
        shared_blocks: k,
        embed_dim: 6,
        num_classes: classes,
    }
}

fn random_input(seed: u64, shape: [usize; 4]) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn outputs(net: &mut SplitNetwork<f32>, x: &Tensor<f32>) -> Vec<Tensor<f32>> {
    net.branch_ids()
        .into_iter()
        .map(|b| net.forward(b, x, Mode::Eval).unwrap())
        .collect()
}

#[test]
fn default_arch_scales() {
    let a = default_arch(&CifarKind::Cifar10.meta(), ArchScale::Desk).unwrap();
    assert_eq!(a.blocks.len(), 3);
    assert_eq!(
        a.blocks.iter().map(|b| b.width).collect::<Vec<_>>(),
        vec![32, 64, 128]
    );
    assert_eq!(
        a.blocks.iter().map(|b| b.pool).collect::<Vec<_>>(),
        vec![true, true, false]
    );
    assert_eq!((a.num_classes, a.shared_blocks), (10, 1));
    let net = SplitNetwork::<f32>::build(&a, Pipeline::Supervised, 0, 0).unwrap();
    let y = net
        .clone()
        .forward(
            BranchId::Downstream,
            &random_input(1, [2, 3, 32, 32]),
            Mode::Eval,
        )
        .unwrap();
    assert_eq!(y.shape(), &[2, 10]);
    assert_eq!(
        default_arch(&CifarKind::Cifar100.meta(), ArchScale::Desk)
            .unwrap()
            .num_classes,
        100
    );
    let err = default_arch(&CifarKind::Cifar10.meta(), ArchScale::Paper).unwrap_err();
    assert!(err.to_string().contains("not implemented"));
}

#[test]
fn unknown_branch_rejected() {
    let mut net = SplitNetwork::<f32>::build(&tiny_arch(1, 3), Pipeline::SslMt, 3, 0).unwrap();
    let x = random_input(0, [1, 3, 8, 8]);
    assert!(matches!(
        net.forward(BranchId::View(0), &x, Mode::Eval),
        Err(Error::UnknownBranch(_))
    ));
}

#[test]
fn branches_see_identical_trunk_activations() {
    let mut net = SplitNetwork::<f32>::build(&tiny_arch(2, 3), Pipeline::SslMv, 2, 5).unwrap();
    let x = random_input(2, [3, 3, 8, 8]);
    let (f0, _) = net
        .forward_traced(BranchId::View(0), &x, Mode::Eval)
        .unwrap();
    let (f2, _) = net
        .forward_traced(BranchId::View(2), &x, Mode::Eval)
        .unwrap();
    assert_eq!(f0, f2);
}

#[test]
fn eval_forward_is_deterministic() {
    let mut net = SplitNetwork::<f32>::build(&tiny_arch(1, 4), Pipeline::SslMt, 3, 9).unwrap();
    let x = random_input(3, [2, 3, 8, 8]);
    assert_eq!(outputs(&mut net, &x), outputs(&mut net, &x));
    let mut again = SplitNetwork::<f32>::build(&tiny_arch(1, 4), Pipeline::SslMt, 3, 9).unwrap();
    assert_eq!(outputs(&mut net, &x), outputs(&mut again, &x));
}

#[test]
fn perturbation_probe() {
    for k in 1..=3 {
        let mut net = SplitNetwork::<f32>::build(&tiny_arch(k, 3), Pipeline::SslMv, 2, 4).unwrap();
        let x = random_input(4, [2, 3, 8, 8]);
        let base = outputs(&mut net, &x);

        let trunk_w = net.layout.trunk_params()[0];
        let mut moved = net.clone();
        moved.store.param_mut(trunk_w).value.data_mut()[0] += 0.5;
        let after = outputs(&mut moved, &x);
        assert!(
            base.iter().zip(&after).all(|(a, b)| a != b),
            "k={k}: trunk edit must reach every branch"
        );

        for (j, id) in net.branch_ids().into_iter().enumerate() {
            let private = net.layout.branch_params(id).unwrap()[0];
            let mut moved = net.clone();
            moved.store.param_mut(private).value.data_mut()[0] += 0.5;
            let after = outputs(&mut moved, &x);
            for (i, (a, b)) in base.iter().zip(&after).enumerate() {
                assert_eq!(
                    a != b,
                    i == j,
                    "k={k}: private edit of branch {j} seen by branch {i}"
                );
            }
        }
    }
}

#[test]
fn fully_shared_mv_branches_differ_only_in_heads() {
    let mut net = SplitNetwork::<f32>::build(&tiny_arch(3, 3), Pipeline::SslMv, 3, 4).unwrap();
    for id in net.branch_ids() {
        assert_eq!(net.layout.branch_params(id).unwrap().len(), 2);
    }
    let heads: Vec<_> = net.layout.branch_params(BranchId::View(0)).unwrap();
    let (w0, b0) = (
        net.store.param(heads[0]).value.clone(),
        net.store.param(heads[1]).value.clone(),
    );
    for id in net.branch_ids() {
        let p = net.layout.branch_params(id).unwrap();
        net.store.param_mut(p[0]).value = w0.clone();
        net.store.param_mut(p[1]).value = b0.clone();
    }
    let x = random_input(6, [2, 3, 8, 8]);
    let outs = outputs(&mut net, &x);
    assert!(outs.iter().all(|o| *o == outs[0]));
}

fn step_through(net: &mut SplitNetwork<f32>, branch: BranchId, x: &Tensor<f32>, labels: &[usize]) {
    let layout = net.layout.clone();
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let f = layout
        .trunk(&mut tape, &mut net.store, xv, Mode::Train)
        .unwrap();
    let logits = layout
        .head(&mut tape, &mut net.store, branch, f, Mode::Train)
        .unwrap();
    let loss = tape.softmax_cross_entropy(logits, labels).unwrap();
    net.store.zero_grad();
    tape.backward(loss, &mut net.store).unwrap();
    SgdState::new(&net.store, 0.1, 0.0, 0.0)
        .unwrap()
        .step(&mut net.store)
        .unwrap();
}

#[test]
fn gradient_step_on_one_branch_moves_the_other_through_the_trunk() {
    let mut net = SplitNetwork::<f32>::build(&tiny_arch(1, 3), Pipeline::SslMt, 3, 8).unwrap();
    let probe = random_input(7, [2, 3, 8, 8]);
    let x = random_input(8, [4, 3, 8, 8]);
    let before = outputs(&mut net, &probe);
    // Freeze running statistics so only the gradient step can move outputs.
    let stats = net.store.all_stats().to_vec();
    step_through(&mut net, BranchId::Downstream, &x, &[0, 1, 2, 0]);
    net.store.all_stats_mut().clone_from_slice(&stats);
    let after = outputs(&mut net, &probe);
    assert_ne!(
        before[1], after[1],
        "pretext output must move with the shared trunk"
    );
    let pretext_private = net.layout.branch_params(BranchId::Pretext).unwrap();
    for id in pretext_private {
        assert!(net
            .store
            .param(id)
            .grad
            .as_ref()
            .unwrap()
            .data()
            .iter()
            .all(|&g| g == 0.0));
    }
}

#[test]
fn composite_three_block_gradcheck() {
    let arch = tiny_arch(1, 3);
    let mut net = SplitNetwork::<f32>::build(&arch, Pipeline::SslMt, 1, 21)
        .unwrap()
        .cast::<f64>();
    let layout = net.layout.clone();
    let x: Tensor<f64> = random_input(9, [4, 3, 6, 6]).cast();
    let report = GradCheck::default()
        .params(&mut net.store, |tape, store| {
            let xv = tape.constant(x.clone());
            let f = layout.trunk(tape, store, xv, Mode::Train)?;
            let d = layout.head(tape, store, BranchId::Downstream, f, Mode::Train)?;
            let p = layout.head(tape, store, BranchId::Pretext, f, Mode::Train)?;
            let ld = tape.softmax_cross_entropy(d, &[0, 1, 2, 1])?;
            let lp = tape.softmax_cross_entropy(p, &[0, 1, 1, 0])?;
            tape.add(ld, lp)
        })
        .unwrap();
    assert!(report.passed(), "{report:?}");
    assert!(report.max_rel_err < 1e-4);
    assert!(
        report.skipped * 10 < report.checked,
        "{} skipped of {}",
        report.skipped,
        report.checked
    );
}

#[test]
fn checkpoint_round_trip_restores_outputs() {
    let mut a = SplitNetwork::<f32>::build(&tiny_arch(2, 3), Pipeline::SslMv, 1, 1).unwrap();
    let x = random_input(10, [4, 3, 8, 8]);
    step_through(&mut a, BranchId::View(1), &x, &[0, 1, 2, 0]);
    let bytes = checkpoint::encode(&a.store).unwrap();
    let mut b = SplitNetwork::<f32>::build(&tiny_arch(2, 3), Pipeline::SslMv, 1, 2).unwrap();
    assert_ne!(outputs(&mut a, &x), outputs(&mut b, &x));
    checkpoint::restore(&mut b.store, &bytes).unwrap();
    assert_eq!(outputs(&mut a, &x), outputs(&mut b, &x));
    let mut wrong = SplitNetwork::<f32>::build(&tiny_arch(1, 3), Pipeline::SslMv, 1, 2).unwrap();
    assert!(checkpoint::restore(&mut wrong.store, &bytes).is_err());
}
