//! Built-in verification suites run by `vadlab selftest`.

use crate::autodiff::{BatchNormConfig, GradCheck, GradCheckReport, Mode, ParamStore, Tensor};
use crate::data::cifar::{encode_cifar10, encode_cifar100, CIFAR100_RECORD, CIFAR10_RECORD};
use crate::data::{generate_synthetic, parse_cifar10, parse_cifar100};
use crate::error::Result;
use crate::net::{ArchSpec, BlockSpec, BranchId, Pipeline, SplitNetwork};
use crate::train::{train, DataSpec, RunConfig};
use crate::views::{ppm, rotate, sharpness, Image, Permutation, ViewSetSpec, ViewTransform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Environment variable adding a constant to every analytic gradient
/// checked by the gradient suite.
pub const GRAD_OFFSET_ENV: &str = "VADLAB_SELFTEST_GRAD_OFFSET";

#[derive(Clone, Debug, Default)]
pub struct Suite {
    pub name: &'static str,
    pub passed: usize,
    pub total: usize,
    pub failures: Vec<String>,
    /// Largest relative gradient error seen (gradient suite only).
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Suite {
            name,
            ..Default::default()
        }
    }

    fn check(&mut self, what: impl Into<String>, ok: bool) {
        self.total += 1;
        if ok {
            self.passed += 1;
        } else {
            self.failures.push(what.into());
        }
    }

    fn result(&mut self, what: &str, r: Result<bool>) {
        match r {
            Ok(ok) => self.check(what, ok),
            Err(e) => self.check(format!("{what}: {e}"), false),
        }
    }

    pub fn ok(&self) -> bool {
        self.failures.is_empty() && self.total > 0
    }
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .expect("shape")
}

fn random_image(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Image {
    Image::new(
        3,
        h,
        w,
        (0..3 * h * w).map(|_| rng.random::<f32>()).collect(),
    )
    .expect("in range")
}

pub(crate) fn tiny_arch(k: usize, classes: usize) -> ArchSpec {
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

/// Finite-difference checks of every differentiable op and of a 3-block
/// two-branch network.
pub fn gradcheck_suite(analytic_offset: f64) -> Suite {
    let gc = GradCheck {
        analytic_offset,
        ..GradCheck::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5E1F);
    let mut s = Suite::new("gradcheck");
    let record = |s: &mut Suite, name: &str, r: Result<GradCheckReport>| match r {
        Ok(rep) => {
            s.max_rel_err = s.max_rel_err.max(rep.max_rel_err);
            s.max_abs_err = s.max_abs_err.max(rep.max_abs_err);
            s.check(
                format!(
                    "{name}: {} of {} elements off, max rel {:.2e}",
                    rep.failures.len(),
                    rep.checked,
                    rep.max_rel_err
                ),
                rep.passed() && rep.checked > 0,
            )
        }
        Err(e) => s.check(format!("{name}: {e}"), false),
    };

    let (x, w) = (
        random(&[2, 2, 5, 5], &mut rng),
        random(&[3, 2, 3, 3], &mut rng),
    );
    let r = gc.inputs(&[x, w], |t, v| {
        let y = t.conv2d(v[0], v[1], 1, 1)?;
        let yy = t.mul(y, y)?;
        Ok(t.sum(yy))
    });
    record(&mut s, "conv2d", r);

    let (x, w) = (
        random(&[1, 2, 6, 5], &mut rng),
        random(&[2, 2, 3, 3], &mut rng),
    );
    let r = gc.inputs(&[x, w], |t, v| {
        let y = t.conv2d(v[0], v[1], 2, 0)?;
        let yy = t.mul(y, y)?;
        Ok(t.sum(yy))
    });
    record(&mut s, "conv2d stride 2", r);

    for mode in [Mode::Train, Mode::Eval] {
        let weights = random(&[3, 2, 3, 3], &mut rng);
        let inputs = [
            random(&[3, 2, 3, 3], &mut rng),
            random(&[2], &mut rng),
            random(&[2], &mut rng),
        ];
        let r = gc.inputs(&inputs, |t, v| {
            let mut store = ParamStore::<f64>::new();
            let id = store.add_stats("bn", 2);
            let rs = store.stats_mut(id);
            rs.mean = Tensor::from_f64([2], &[0.1, -0.2])?;
            rs.var = Tensor::from_f64([2], &[0.5, 2.0])?;
            let y = t.batch_norm(v[0], v[1], v[2], rs, mode, BatchNormConfig::default())?;
            let wv = t.constant(weights.clone());
            let yw = t.mul(y, wv)?;
            Ok(t.sum(yw))
        });
        record(&mut s, &format!("batch_norm {mode:?}"), r);
    }

    let inputs = [
        random(&[4, 5], &mut rng),
        random(&[5, 3], &mut rng),
        random(&[3], &mut rng),
    ];
    let r = gc.inputs(&inputs, |t, v| {
        let y = t.dense(v[0], v[1], v[2])?;
        t.softmax_cross_entropy(y, &[0, 2, 1, 2])
    });
    record(&mut s, "dense + softmax_cross_entropy", r);

    let inputs = [
        random(&[2, 2, 4, 6], &mut rng),
        random(&[2, 2, 2, 3], &mut rng),
    ];
    let r = gc.inputs(&inputs, |t, v| {
        let r = t.relu(v[0]);
        let p = t.max_pool2(r)?;
        let pw = t.mul(p, v[1])?;
        let g = t.global_avg_pool(pw)?;
        let both = t.concat(&[g, g])?;
        let tail = t.narrow(both, 1, 2)?;
        let sc = t.scale(tail, 1.7);
        let sq = t.mul(sc, sc)?;
        let a = t.add(sq, sq)?;
        Ok(t.sum(a))
    });
    record(
        &mut s,
        "relu/max_pool2/global_avg_pool/concat/narrow/scale/mul/add/sum",
        r,
    );

    let r = (|| {
        let mut net =
            SplitNetwork::<f32>::build(&tiny_arch(1, 3), Pipeline::SslMt, 1, 21)?.cast::<f64>();
        let layout = net.layout.clone();
        let x = random(&[4, 3, 6, 6], &mut rng);
        gc.params(&mut net.store, |tape, store| {
            let xv = tape.constant(x.clone());
            let f = layout.trunk(tape, store, xv, Mode::Train)?;
            let d = layout.head(tape, store, BranchId::Downstream, f, Mode::Train)?;
            let p = layout.head(tape, store, BranchId::Pretext, f, Mode::Train)?;
            let ld = tape.softmax_cross_entropy(d, &[0, 1, 2, 1])?;
            let lp = tape.softmax_cross_entropy(p, &[0, 1, 1, 0])?;
            tape.add(ld, lp)
        })
    })();
    record(&mut s, "3-block split network", r);
    s
}

/// Rotation and permutation group laws, sharpness identities and range.
pub fn group_law_suite(images: usize) -> Suite {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6A0);
    let mut s = Suite::new("group-law");
    for i in 0..images {
        let img = random_image(5, 7, &mut rng);
        for a in 0..4u8 {
            for b in 0..4u8 {
                s.check(
                    format!("image {i}: rot {a} then {b}"),
                    rotate(&rotate(&img, a), b) == rotate(&img, (a + b) % 4),
                );
            }
        }
        for p in Permutation::all() {
            for q in Permutation::all() {
                let two = ViewTransform::ChannelPermutation { perm: p }
                    .apply(&img)
                    .and_then(|x| ViewTransform::ChannelPermutation { perm: q }.apply(&x));
                let one = ViewTransform::ChannelPermutation { perm: p.then(&q) }.apply(&img);
                s.check(
                    format!("image {i}: perm {p} then {q}"),
                    matches!((two, one), (Ok(a), Ok(b)) if a == b),
                );
            }
        }
        s.check(
            format!("image {i}: sharpness 1"),
            sharpness(&img, 1.0) == img,
        );
        let g = rng.random_range(0.0..3.0);
        let out = sharpness(&img, g);
        s.check(
            format!("image {i}: sharpness {g} range"),
            out.dims() == img.dims() && out.pixels().iter().all(|v| (0.0..=1.0).contains(v)),
        );
        let v: f32 = rng.random();
        let flat = Image::new(3, 4, 4, vec![v; 48]).expect("in range");
        s.check(
            format!("image {i}: constant fixpoint"),
            sharpness(&flat, g) == flat,
        );
    }
    s
}

fn reduction_config(pipeline: Pipeline, views: &str) -> RunConfig {
    RunConfig {
        run_id: "selftest".into(),
        pipeline,
        views: views.parse::<ViewSetSpec>().expect("valid"),
        arch: Some(tiny_arch(1, 3)),
        shared_blocks: None,
        epochs: 2,
        batch_size: 6,
        lr: 0.05,
        momentum: 0.9,
        weight_decay: 5e-4,
        pretext_weight: 1.0,
        view_loss_normalization: Default::default(),
        aggregation: Default::default(),
        seed: 3,
        data: DataSpec::Synthetic {
            seed: 1,
            classes: 3,
            height: 8,
            width: 8,
            separability: 0.8,
            train: 18,
            test: 6,
        },
        augment: true,
        timing: false,
        output_dir: None,
    }
}

/// Identity-only multi-view and multi-task runs against the supervised run.
pub fn reduction_suite() -> Suite {
    let mut s = Suite::new("reduction-law");
    let r = (|| {
        let sup = reduction_config(Pipeline::Supervised, "identity");
        let (tr, te) = sup.data.load(None)?;
        let base = train(&sup, &tr, &te)?;
        let mut out = Vec::new();
        for p in [Pipeline::SslMv, Pipeline::SslMt] {
            let mut cfg = sup.clone();
            cfg.pipeline = p;
            let o = train(&cfg, &tr, &te)?;
            let same_params = base
                .net
                .store
                .params()
                .iter()
                .zip(o.net.store.params())
                .all(|(a, b)| a.value == b.value);
            out.push((p, o.step_losses == base.step_losses, same_params));
        }
        Ok(out)
    })();
    match r {
        Ok(out) => {
            for (p, losses, params) in out {
                s.check(format!("{p} step losses"), losses);
                s.check(format!("{p} final parameters"), params);
            }
        }
        Err(e) => s.result("reduction runs", Err(e)),
    }
    s
}

/// Archive and image codec fixtures.
pub fn parser_suite() -> Suite {
    let mut s = Suite::new("parser-fixtures");
    let d10 = generate_synthetic(2, 12, 10, 32, 32, 0.7);
    s.result(
        "cifar10 round trip",
        encode_cifar10(&d10.samples).and_then(|b| Ok(encode_cifar10(&parse_cifar10(&b)?)? == b)),
    );
    let d100 = generate_synthetic(3, 12, 100, 32, 32, 0.7);
    s.result(
        "cifar100 round trip",
        encode_cifar100(&d100.samples, |y| (y % 20) as u8)
            .and_then(|b| Ok(encode_cifar100(&parse_cifar100(&b)?, |y| (y % 20) as u8)? == b)),
    );
    s.check(
        "cifar10 truncated rejected",
        parse_cifar10(&vec![0; CIFAR10_RECORD - 1]).is_err_and(|e| e.exit_code() == 2),
    );
    let mut bad = vec![0u8; CIFAR10_RECORD];
    bad[0] = 10;
    s.check(
        "cifar10 label 10 rejected",
        parse_cifar10(&bad).is_err_and(|e| e.exit_code() == 2),
    );
    let mut bad = vec![0u8; CIFAR100_RECORD];
    bad[1] = 100;
    s.check(
        "cifar100 label 100 rejected",
        parse_cifar100(&bad).is_err_and(|e| e.exit_code() == 2),
    );
    let img = &d10.samples[0].image;
    s.result(
        "ppm round trip",
        ppm::encode(img).and_then(|b| Ok(ppm::decode(&b)?.to_bytes() == img.to_bytes())),
    );
    s
}

pub fn run_all(analytic_offset: f64) -> Vec<Suite> {
    vec![
        gradcheck_suite(analytic_offset),
        group_law_suite(10),
        reduction_suite(),
        parser_suite(),
    ]
}
