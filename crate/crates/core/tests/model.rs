use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use somnus::autodiff::Graph;
use somnus::autoencoder::{identity_stub, make_stub, visual_stub, AutoencoderArch, AutoencoderBundle, StubKind};
use somnus::model::{Block, BlockGraph, Merge, ModelConfig, ModelInput, Task, Variant};
use somnus::{Error, IdTensor, Tensor};

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(0.0..1.0))
}

fn random_ids(b: usize, t: usize, vocab: usize, seed: u64) -> IdTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    IdTensor::new(vec![b, t], (0..b * t).map(|_| rng.gen_range(0..vocab)).collect()).unwrap()
}

fn visual(variant: Variant, m: usize) -> ModelConfig {
    ModelConfig {
        task: Task::Visual,
        variant,
        blocks: m,
        classes: 3,
        widths: vec![4],
        image_shape: vec![1, 8, 8],
        stem_channels: 4,
        head_grid: 2,
        branch_width: 3,
        branch_grid: 2,
        ..ModelConfig::default()
    }
}

fn textual(variant: Variant, m: usize) -> ModelConfig {
    ModelConfig {
        task: Task::Textual,
        variant,
        blocks: m,
        classes: 3,
        widths: vec![5],
        vocab: 9,
        seq_len: 4,
        embed_dim: 3,
        branch_width: 4,
        ..ModelConfig::default()
    }
}

fn visual_ae() -> AutoencoderArch {
    AutoencoderArch::VisualConv {
        input_shape: vec![1, 8, 8],
        channels: [2, 3],
        latent_dim: 5,
    }
}

fn textual_ae() -> AutoencoderArch {
    AutoencoderArch::TextualLstm {
        vocab: 9,
        seq_len: 4,
        embed_dim: 3,
        hidden: 4,
        latent_dim: 3,
    }
}

fn bundle_for(task: Task, seed: u64) -> AutoencoderBundle {
    match task {
        Task::Visual => AutoencoderBundle::new(visual_ae(), seed).unwrap(),
        Task::Textual => AutoencoderBundle::new(textual_ae(), seed).unwrap(),
    }
}

fn zero_stub(task: Task) -> AutoencoderBundle {
    match task {
        Task::Visual => visual_stub(StubKind::Zero, &[1, 8, 8], 5).unwrap(),
        Task::Textual => make_stub(AutoencoderArch::TextualStub {
            stub: StubKind::Zero,
            vocab: 9,
            seq_len: 4,
            embed_dim: 3,
            latent_dim: 3,
        })
        .unwrap(),
    }
}

fn logits(model: &BlockGraph, seed: u64) -> Tensor {
    let mut g = Graph::new();
    let l = match model.config().task {
        Task::Visual => {
            let x = g.constant(random(&[3, 1, 8, 8], seed));
            model.forward(&mut g, ModelInput::Images(x)).unwrap()
        }
        Task::Textual => {
            let ids = random_ids(3, 4, 9, seed);
            model.forward(&mut g, ModelInput::Tokens(&ids)).unwrap()
        }
    };
    g.value(l).clone()
}

#[test]
fn structure_and_naming() {
    let chain = BlockGraph::build(&visual(Variant::Chain, 3), None, 0).unwrap();
    assert_eq!(chain.blocks().len(), 3);
    assert!(chain.blocks().iter().all(|b| matches!(b, Block::Chain(_))));
    assert!(chain.bundle().is_none());
    assert_eq!(chain.model_id(), "Chain-3");

    let cfg = visual(Variant::Dream, 2);
    let dream = BlockGraph::build(&cfg, Some(bundle_for(Task::Visual, 1)), 0).unwrap();
    let mut g = Graph::new();
    let x = g.constant(random(&[2, 1, 8, 8], 0));
    let t = dream.trace(&mut g, ModelInput::Images(x)).unwrap();
    assert_eq!(t.dreams.len(), 2);
    assert!(t.branch.is_some());
    for d in &t.dreams {
        assert_eq!(g.shape(*d), &[2, 1, 8, 8]);
    }
    assert_eq!(dream.model_id(), "DreamNet-2");

    let sleep = ModelConfig { blocks: 3, ..visual(Variant::Sleep, 3) };
    assert_eq!(sleep.model_id(), "SleepNet-3");
}

#[test]
fn build_errors() {
    assert!(matches!(
        BlockGraph::build(&visual(Variant::Sleep, 1), None, 0),
        Err(Error::MissingBundle(id)) if id == "SleepNet-1"
    ));
    assert!(matches!(
        BlockGraph::build(&visual(Variant::Chain, 1), Some(bundle_for(Task::Visual, 0)), 0),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        BlockGraph::build(&visual(Variant::Sleep, 1), Some(bundle_for(Task::Textual, 0)), 0),
        Err(Error::Build { boundary, .. }) if boundary == "bundle"
    ));
    // Bundle sequence length disagrees with the model's.
    let short = AutoencoderBundle::new(
        AutoencoderArch::TextualLstm { vocab: 9, seq_len: 3, embed_dim: 3, hidden: 4, latent_dim: 3 },
        0,
    )
    .unwrap();
    assert!(matches!(
        BlockGraph::build(&textual(Variant::Sleep, 2), Some(short), 0),
        Err(Error::Build { boundary, .. }) if boundary == "block1.pre"
    ));
    // The head grid does not divide the last map.
    let cfg = ModelConfig { head_grid: 3, ..visual(Variant::Chain, 1) };
    assert!(matches!(
        BlockGraph::build(&cfg, None, 0),
        Err(Error::Build { boundary, .. }) if boundary == "head"
    ));
    let cfg = ModelConfig { merge: Merge::Add, ..visual(Variant::Dream, 1) };
    assert!(matches!(
        BlockGraph::build(&cfg, Some(bundle_for(Task::Visual, 0)), 0),
        Err(Error::Build { boundary, .. }) if boundary == "head"
    ));
    let cfg = ModelConfig { widths: vec![1, 2, 3], ..visual(Variant::Chain, 2) };
    assert!(matches!(BlockGraph::build(&cfg, None, 0), Err(Error::Config(_))));
    assert!(visual(Variant::Chain, 5).warnings().len() == 1);
}

#[test]
fn logits_shape_for_every_variant_and_task() {
    for task in [Task::Visual, Task::Textual] {
        for variant in [Variant::Chain, Variant::Sleep, Variant::Dream] {
            let cfg = match task {
                Task::Visual => visual(variant, 2),
                Task::Textual => textual(variant, 2),
            };
            let bundle = (variant != Variant::Chain).then(|| bundle_for(task, 3));
            let model = BlockGraph::build(&cfg, bundle, 7).unwrap();
            let l = logits(&model, 1);
            assert_eq!(l.shape(), &[3, 3], "{task:?} {variant:?}");
            assert!(l.data().iter().all(|v| v.is_finite()));
            // Same seed, same input: same bits.
            let again = BlockGraph::build(&cfg, (variant != Variant::Chain).then(|| bundle_for(task, 3)), 7).unwrap();
            assert!(logits(&again, 1).bits_eq(&l));
        }
    }
}

#[test]
fn merge_add_joins_equal_widths() {
    // Main path 4 channels on a 2×2 grid = 16; branch 4 channels on 2×2 = 16.
    let cfg = ModelConfig { merge: Merge::Add, branch_width: 4, ..visual(Variant::Dream, 2) };
    let model = BlockGraph::build(&cfg, Some(bundle_for(Task::Visual, 0)), 0).unwrap();
    assert_eq!(logits(&model, 0).shape(), &[3, 3]);
}

#[test]
fn zero_stub_sleepnet_equals_chain_bitwise() {
    for task in [Task::Visual, Task::Textual] {
        for m in 1..=4 {
            let (chain_cfg, sleep_cfg) = match task {
                Task::Visual => (visual(Variant::Chain, m), visual(Variant::Sleep, m)),
                Task::Textual => (textual(Variant::Chain, m), textual(Variant::Sleep, m)),
            };
            let chain = BlockGraph::build(&chain_cfg, None, 11).unwrap();
            let sleep = BlockGraph::build(&sleep_cfg, Some(zero_stub(task)), 11).unwrap();
            for seed in 0..3 {
                assert!(logits(&chain, seed).bits_eq(&logits(&sleep, seed)), "{task:?} M={m}");
            }
        }
    }
}

#[test]
fn identity_stub_dreamnet_blocks_are_residual() {
    for m in 1..=4 {
        let cfg = ModelConfig { identity_adapters: true, ..visual(Variant::Dream, m) };
        let model = BlockGraph::build(&cfg, Some(identity_stub(&[4, 4, 4]).unwrap()), 2).unwrap();
        let p = model.params();
        let mut g = Graph::new();
        let x = g.constant(random(&[2, 1, 8, 8], m as u64));
        let t = model.trace(&mut g, ModelInput::Images(x)).unwrap();
        for (step, block) in t.steps.iter().zip(model.blocks()) {
            let c = block.chain().forward(&mut g, &p, step.input).unwrap();
            let residual = g.add(c, step.input).unwrap();
            assert!(g.value(step.out).bits_eq(g.value(residual)), "M={m}");
        }
        for (d, step) in t.dreams.iter().zip(&t.steps) {
            assert!(g.value(*d).bits_eq(g.value(step.input)));
        }
    }
}

#[test]
fn cost_report_structure() {
    for variant in [Variant::Chain, Variant::Sleep, Variant::Dream] {
        let bundle = (variant != Variant::Chain).then(|| bundle_for(Task::Visual, 0));
        let model = BlockGraph::build(&visual(variant, 2), bundle, 0).unwrap();
        let r = model.cost_report();
        assert_eq!(r.param_count, r.per_block.iter().map(|e| e.params).sum::<u64>());
        assert_eq!(r.flops_per_forward, r.per_block.iter().map(|e| e.flops).sum::<u64>());
        let registered = model.store().numel() + model.bundle().map_or(0, |b| b.store().numel());
        assert_eq!(r.param_count as usize, registered, "{variant:?}");
        let bundle_params = model.bundle().map_or(0, |b| b.store().numel()) as u64;
        assert_eq!(r.frozen_params, bundle_params);
        assert_eq!(r.trainable_params, r.param_count - bundle_params);
        assert_eq!(model.count_flops(&[1, 8, 8]).unwrap(), r);
        assert!(model.count_flops(&[1, 8, 9]).is_err());
        // Counts do not depend on forward passes.
        logits(&model, 0);
        assert_eq!(model.count_params(), r);
    }
}

#[test]
fn second_block_adds_exactly_one_block() {
    for variant in [Variant::Chain, Variant::Sleep, Variant::Dream] {
        let bundle = || (variant != Variant::Chain).then(|| bundle_for(Task::Visual, 0));
        let one = BlockGraph::build(&visual(variant, 1), bundle(), 0).unwrap().cost_report();
        let two = BlockGraph::build(&visual(variant, 2), bundle(), 0).unwrap().cost_report();
        let block = |r: &somnus::cost::CostReport, name: &str| r.per_block.iter().find(|e| e.name == name).cloned().unwrap();
        let (b1, b2) = (block(&one, "block1"), block(&two, "block2"));
        assert_eq!((b2.params, b2.flops), (b1.params, b1.flops));
        assert_eq!(two.param_count - one.param_count, block(&one, "block1").params, "{variant:?}");
        for shared in ["stem", "head"] {
            assert_eq!(block(&two, shared), block(&one, shared));
        }
    }
    // Chain-only: doubling M doubles the block FLOPs.
    let blocks = |m| {
        let r = BlockGraph::build(&visual(Variant::Chain, m), None, 0).unwrap().cost_report();
        r.per_block.iter().filter(|e| e.name.starts_with("block")).map(|e| e.flops).sum::<u64>()
    };
    assert_eq!(blocks(4), 2 * blocks(2));
    assert_eq!(blocks(2), 2 * blocks(1));
}

fn bump(t: &Tensor) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(t.numel() as u64);
    Tensor::from_fn(t.shape(), |i| t.data()[i] + rng.gen_range(-2.0..2.0))
}

#[test]
fn every_registered_parameter_reaches_the_logits() {
    for task in [Task::Visual, Task::Textual] {
        for variant in [Variant::Chain, Variant::Sleep, Variant::Dream] {
            let cfg = match task {
                Task::Visual => visual(variant, 2),
                Task::Textual => textual(variant, 2),
            };
            let bundle = (variant != Variant::Chain).then(|| bundle_for(task, 3));
            let mut model = BlockGraph::build(&cfg, bundle, 5).unwrap();
            let base = logits(&model, 4);
            let names: Vec<String> = model.store().iter().map(|p| p.name.clone()).collect();
            for name in names {
                let id = model.store().id_of(&name).unwrap();
                let orig = model.store().get(id).value.clone();
                let bumped = bump(&orig);
                model.store_mut().set_value(id, bumped).unwrap();
                assert!(!logits(&model, 4).bits_eq(&base), "{task:?} {variant:?}: `{name}` is unreachable");
                model.store_mut().set_value(id, orig).unwrap();
            }
            // Sleep blocks use only the encoder; dream blocks use everything
            // but the textual vocabulary head, which serves pretraining only.
            if let Some(b) = model.bundle() {
                let names: Vec<String> = b.store().iter().map(|p| p.name.clone()).collect();
                for name in names {
                    let store = model.bundle_mut().unwrap().store_mut();
                    let id = store.id_of(&name).unwrap();
                    let orig = store.get(id).value.clone();
                    let bumped = bump(&orig);
                    store.set_value(id, bumped).unwrap();
                    let changed = !logits(&model, 4).bits_eq(&base);
                    let expected = name.starts_with("enc.") || (variant == Variant::Dream && !name.starts_with("dec.vocab"));
                    assert_eq!(changed, expected, "{task:?} {variant:?}: bundle `{name}`");
                    model.bundle_mut().unwrap().store_mut().set_value(id, orig).unwrap();
                }
            }
        }
    }
}

/// A random configuration that should build.
fn random_config(rng: &mut ChaCha8Rng) -> (ModelConfig, Option<AutoencoderBundle>) {
    let variant = [Variant::Chain, Variant::Sleep, Variant::Dream][rng.gen_range(0..3)];
    let m = rng.gen_range(1..=4);
    let widths: Vec<usize> = (0..m).map(|_| rng.gen_range(1..5)).collect();
    if rng.gen_bool(0.5) {
        let size = [8, 16][rng.gen_range(0..2)];
        let c = rng.gen_range(1..3);
        let stride = rng.gen_range(1..=2);
        let branch_stride = rng.gen_range(1..=2);
        let cfg = ModelConfig {
            task: Task::Visual,
            variant,
            blocks: m,
            classes: rng.gen_range(2..5),
            widths,
            layers_per_block: rng.gen_range(1..3),
            kernel: [1, 3][rng.gen_range(0..2)],
            norm: rng.gen(),
            image_shape: vec![c, size, size],
            stem_channels: rng.gen_range(1..4),
            stem_stride: stride,
            head_grid: [1, 2][rng.gen_range(0..2)],
            branch_width: rng.gen_range(1..4),
            branch_depth: rng.gen_range(1..3),
            branch_stride,
            branch_grid: [1, 2][rng.gen_range(0..2)],
            ..ModelConfig::default()
        };
        let bundle = (variant != Variant::Chain).then(|| {
            if rng.gen_bool(0.3) {
                visual_stub(StubKind::Zero, &[c, size, size], 3).unwrap()
            } else {
                let arch = AutoencoderArch::VisualConv { input_shape: vec![c, size, size], channels: [2, 2], latent_dim: 3 };
                AutoencoderBundle::new(arch, 1).unwrap()
            }
        });
        (cfg, bundle)
    } else {
        let t = rng.gen_range(2..6);
        let vocab = rng.gen_range(4..10);
        let cfg = ModelConfig {
            task: Task::Textual,
            variant,
            blocks: m,
            classes: rng.gen_range(2..5),
            widths,
            vocab,
            seq_len: t,
            embed_dim: rng.gen_range(1..4),
            branch_width: rng.gen_range(1..4),
            branch_depth: rng.gen_range(1..3),
            ..ModelConfig::default()
        };
        let arch = AutoencoderArch::TextualLstm {
            vocab: rng.gen_range(4..10),
            seq_len: t,
            embed_dim: rng.gen_range(1..4),
            hidden: 2,
            latent_dim: rng.gen_range(1..4),
        };
        let bundle = (variant != Variant::Chain).then(|| AutoencoderBundle::new(arch, 1).unwrap());
        (cfg, bundle)
    }
}

#[test]
fn shape_closure_over_random_configs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100u64 {
        let (cfg, bundle) = random_config(&mut rng);
        let model = BlockGraph::build(&cfg, bundle, case).unwrap_or_else(|e| panic!("case {case}: {e}\n{cfg:?}"));
        let b = rng.gen_range(1..3);
        let mut g = Graph::new();
        let ids;
        let input = match cfg.task {
            Task::Visual => {
                let mut s = vec![b];
                s.extend(&cfg.image_shape);
                ModelInput::Images(g.constant(random(&s, case)))
            }
            Task::Textual => {
                ids = random_ids(b, cfg.seq_len, cfg.vocab, case);
                ModelInput::Tokens(&ids)
            }
        };
        let t = model.trace(&mut g, input).unwrap();
        let stat = model.boundary_shapes();
        let mut seen = vec![g.shape(t.stem)[1..].to_vec()];
        seen.extend(t.steps.iter().map(|s| g.shape(s.out)[1..].to_vec()));
        assert_eq!(seen, stat, "case {case}");
        assert_eq!(g.shape(t.logits), &[b, cfg.classes]);
    }
}

#[test]
fn frozen_bundle_receives_no_gradient_in_a_model() {
    for task in [Task::Visual, Task::Textual] {
        let cfg = match task {
            Task::Visual => visual(Variant::Dream, 2),
            Task::Textual => textual(Variant::Dream, 2),
        };
        let model = BlockGraph::build(&cfg, Some(bundle_for(task, 0)), 0).unwrap();
        assert!(model.bundle().unwrap().store().iter().all(|p| !p.trainable));
        let mut g = Graph::new();
        let ids = random_ids(3, 4, 9, 0);
        let input = match task {
            Task::Visual => ModelInput::Images(g.constant(random(&[3, 1, 8, 8], 0))),
            Task::Textual => ModelInput::Tokens(&ids),
        };
        let l = model.forward(&mut g, input).unwrap();
        let loss = g.cross_entropy(l, &[0, 1, 2]).unwrap();
        g.backward(loss).unwrap();
        let mut bs = model.bundle().unwrap().store().clone();
        bs.accumulate_grads(&g);
        assert!(bs.iter().all(|p| p.grad.iter().all(|&v| v == 0.0)));
        let mut ms = model.store().clone();
        ms.accumulate_grads(&g);
        let chain = if task == Task::Visual { "block1.conv1.w" } else { "block1.lstm.wx" };
        let adapter = if task == Task::Visual { "block2.post.conv.w" } else { "block2.post.w" };
        for name in [chain, adapter, "branch.norm1.gain", "head.dense.w"] {
            let Some(p) = ms.by_name(name) else {
                if name.starts_with("branch.norm") && task == Task::Textual {
                    continue;
                }
                panic!("no parameter {name}");
            };
            assert!(p.grad.iter().any(|&v| v != 0.0), "{task:?}: {name}");
        }
    }
}

#[test]
fn model_save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for (cfg, bundle) in [
        (visual(Variant::Dream, 2), Some(bundle_for(Task::Visual, 4))),
        (textual(Variant::Sleep, 1), Some(bundle_for(Task::Textual, 4))),
        (visual(Variant::Chain, 1), None),
    ] {
        let model = BlockGraph::build(&cfg, bundle, 9).unwrap();
        let p1 = dir.path().join("m1.slpn");
        let p2 = dir.path().join("m2.slpn");
        model.save(&p1).unwrap();
        let back = BlockGraph::load(&p1).unwrap();
        back.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert!(logits(&back, 2).bits_eq(&logits(&model, 2)));
        assert_eq!(back.cost_report(), model.cost_report());
    }
    let bundle_file = dir.path().join("b.slpn");
    bundle_for(Task::Visual, 0).save(&bundle_file).unwrap();
    assert!(matches!(BlockGraph::load(&bundle_file), Err(Error::Format { .. }) | Err(Error::Json(_))));
}
