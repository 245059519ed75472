use comask_core::autodiff::gradcheck::{central_difference, max_relative_error, RELATIVE_FLOOR};
use comask_core::datagen::{DomainSpec, SegSample};
use comask_core::masking::PatchMask;
use comask_core::trainer::*;
use comask_core::{Error, Graph, Tensor};

fn small_arch() -> Architecture {
    Architecture {
        in_channels: 1,
        widths: vec![2, 3, 3],
        classes: 3,
    }
}

fn sample(seed: u64, size: usize) -> SegSample {
    let spec = DomainSpec {
        size,
        radius: (2, 4),
        side: (3, 8),
        seed,
        ..DomainSpec::default()
    };
    comask_core::datagen::gen_domain(&spec, 1).unwrap().remove(0)
}

fn probs(values: &[f64]) -> Tensor {
    Tensor::new(vec![1, values.len(), 1, 1], values.to_vec()).unwrap()
}

#[test]
fn forward_shapes_and_normalization() {
    let arch = Architecture::default();
    let params = arch.init(3).unwrap();
    let s = sample(1, 32);
    let p = forward_segment(&arch, &params, &s.image).unwrap();
    assert_eq!(p.shape(), &[1, 3, 32, 32]);
    let plane = 32 * 32;
    for i in 0..plane {
        let total: f64 = (0..3).map(|c| p.data()[c * plane + i]).sum();
        assert!((total - 1.0).abs() <= 1e-9);
    }
    assert_eq!(p, forward_segment(&arch, &params, &s.image).unwrap());
    let odd = Tensor::zeros(&[1, 20, 20]);
    assert!(forward_segment(&arch, &params, &odd).is_err());
}

#[test]
fn pseudo_label_threshold_and_ties() {
    let a = pseudo_label(&probs(&[0.9, 0.05, 0.05]), 0.7).unwrap();
    assert_eq!((a.classes[0], a.keep[0]), (0, true));
    let b = pseudo_label(&probs(&[0.6, 0.3, 0.1]), 0.7).unwrap();
    assert_eq!((b.classes[0], b.keep[0]), (0, false));
    let c = pseudo_label(&probs(&[0.5, 0.5, 0.0]), 0.5).unwrap();
    assert_eq!((c.classes[0], c.keep[0]), (0, true));
    assert!(pseudo_label(&probs(&[1.0, 0.0]), 0.0).is_err());
}

#[test]
fn supervised_loss_reference_values() {
    let mut g = Graph::new();
    let uniform = g.leaf(Tensor::zeros(&[1, 3, 2, 2]));
    let l = sup_loss(&mut g, uniform, &[0, 1, 2, 1]).unwrap();
    assert!((g.value(l).item() - 3f64.ln()).abs() < 1e-15);

    let labels = [2, 0, 1, 1];
    let sharp = Tensor::from_fn(&[1, 3, 2, 2], |i| if labels[i % 4] == i / 4 { 40.0 } else { -40.0 });
    let s = g.leaf(sharp);
    let l = sup_loss(&mut g, s, &labels).unwrap();
    assert!(g.value(l).item() < 1e-9);
}

fn view_logits(g: &mut Graph, a: &[f64], b: &[f64]) -> (comask_core::autodiff::Var, comask_core::autodiff::Var) {
    let n = a.len() / 2;
    let ta = Tensor::new(vec![1, 2, n], a.to_vec()).unwrap();
    let tb = Tensor::new(vec![1, 2, n], b.to_vec()).unwrap();
    (g.param(ta), g.param(tb))
}

#[test]
fn consistency_loss_endpoints() {
    let pseudo = PseudoLabel {
        classes: vec![0, 1, 1],
        keep: vec![true, true, false],
    };
    let a = [1.0, -0.5, 2.0, 0.3, 0.1, -1.0];
    let b = [0.2, 0.7, -0.4, 1.1, 0.0, 0.5];

    let mut g = Graph::new();
    let (la, lb) = view_logits(&mut g, &a, &b);
    let l = cl_loss(&mut g, la, lb, &pseudo, 1.0).unwrap();
    let mut h = Graph::new();
    let (ha, _) = view_logits(&mut h, &a, &b);
    let ce = h.softmax_cross_entropy(ha, &pseudo.classes, Some(&pseudo.weights())).unwrap();
    assert_eq!(g.value(l).item(), h.value(ce).item());

    let dropped = PseudoLabel {
        classes: vec![0, 1, 1],
        keep: vec![false; 3],
    };
    let mut g = Graph::new();
    let (la, lb) = view_logits(&mut g, &a, &b);
    let l = cl_loss(&mut g, la, lb, &dropped, 0.5).unwrap();
    assert_eq!(g.value(l).item(), 0.0);
    let grads = g.backward(l).unwrap().collect(&[la, lb]);
    assert!(grads.iter().all(|t| t.data().iter().all(|v| *v == 0.0)));

    let sharp = [40.0, -40.0, -40.0, -40.0, 40.0, 40.0];
    let mut g = Graph::new();
    let (la, lb) = view_logits(&mut g, &sharp, &sharp);
    let l = cl_loss(&mut g, la, lb, &pseudo, 0.5).unwrap();
    assert!(g.value(l).item() < 1e-9);
}

#[test]
fn complementary_loss_reference_values() {
    let a = probs(&[0.6, 0.4]);
    let b = probs(&[0.4, 0.6]);
    assert_eq!(loss_cm(&a, &a).unwrap(), 0.0);
    assert!((loss_cm(&a, &b).unwrap() - 0.04).abs() < 1e-15);
    assert_eq!(loss_cm(&a, &b).unwrap(), loss_cm(&b, &a).unwrap());
}

#[test]
fn ema_reference_values() {
    let theta = vec![Tensor::from_fn(&[4], |i| i as f64 * 0.3 - 0.2)];
    let phi0 = vec![Tensor::from_fn(&[4], |i| 1.0 / (i as f64 + 1.0))];

    let mut phi = phi0.clone();
    ema_update(&mut phi, &theta, 0.0).unwrap();
    assert_eq!(phi, theta);
    let mut phi = phi0.clone();
    ema_update(&mut phi, &theta, 1.0).unwrap();
    assert_eq!(phi, phi0);

    let mut phi = vec![Tensor::scalar(0.0)];
    let one = vec![Tensor::scalar(1.0)];
    ema_update(&mut phi, &one, 0.9).unwrap();
    ema_update(&mut phi, &one, 0.9).unwrap();
    assert!((phi[0].item() - 0.19).abs() < 1e-15);
    assert!(ema_update(&mut phi, &one, 1.5).is_err());
}

#[test]
fn adain_alignment() {
    let src = Tensor::from_fn(&[2, 3, 4, 4], |i| ((i * 7 % 11) as f64).sin() * (1.0 + (i / 32) as f64));
    let same = adain_align(&src, &src).unwrap();
    for (a, b) in same.data().iter().zip(src.data()) {
        assert!((a - b).abs() < 1e-9);
    }
    let tgt = Tensor::from_fn(&[1, 3, 4, 4], |i| ((i * 3 % 5) as f64) * 0.7 + 2.0);
    let out = adain_align(&src, &tgt).unwrap();
    let (m_out, s_out) = comask_core::autodiff::channel_stats(&out).unwrap();
    let (m_t, s_t) = comask_core::autodiff::channel_stats(&tgt).unwrap();
    for c in 0..3 {
        assert!((m_out[c] - m_t[c]).abs() < 1e-9 && (s_out[c] - s_t[c]).abs() < 1e-9);
    }
}

fn toy_config(variant: Variant) -> TrainConfig {
    TrainConfig {
        arch: small_arch(),
        variant,
        patch: 4,
        lr: 1e-2,
        warmup_steps: 0,
        ..TrainConfig::default()
    }
}

#[test]
fn source_only_gates_target_losses() {
    let mut t = Trainer::new(toy_config(Variant::SourceOnly)).unwrap();
    let (s, x) = (sample(1, 16), sample(2, 16));
    let l = t.train_step(&[&s], &[&x], 0).unwrap();
    assert_eq!((l.cl, l.cm), (0.0, 0.0));
    assert_eq!(l.total, l.sup);
}

#[test]
fn zero_cm_weight_gives_sup_plus_cl() {
    let cfg = TrainConfig {
        lambda_cm: 0.0,
        delta: 0.34,
        ..toy_config(Variant::Complementary)
    };
    let mut t = Trainer::new(cfg).unwrap();
    let (s, x) = (sample(3, 16), sample(4, 16));
    for step in 0..3 {
        let l = t.train_step(&[&s], &[&x], step).unwrap();
        assert!(l.cm > 0.0);
        assert_eq!(l.total, l.sup + l.cl);
    }
}

#[test]
fn scripted_step_matches_composed_losses() {
    let cfg = TrainConfig {
        delta: 0.34,
        lambda: 0.3,
        lambda_cm: 0.7,
        ..toy_config(Variant::Complementary)
    };
    let arch = cfg.arch.clone();
    let t = Trainer::new(cfg.clone()).unwrap();
    let (s, x) = (sample(5, 16), sample(6, 16));
    let blocks: Vec<bool> = (0..16).map(|i| (i * 5) % 3 == 0).collect();
    let d = PatchMask::from_blocks(&[16, 16], 4, &blocks).unwrap();
    let first = comask_core::masking::apply_mask(&x.image, &d).unwrap();
    let second = comask_core::masking::apply_mask(&x.image, &d.complement()).unwrap();
    let teacher_p = forward_segment(&arch, &t.pair.teacher, &x.image).unwrap();
    let pseudo = pseudo_label(&teacher_p, cfg.delta).unwrap();
    assert!(pseudo.kept() > 0);
    let views = TargetViews {
        pseudo: pseudo.clone(),
        first: stack(&[&first]).unwrap(),
        second: stack(&[&second]).unwrap(),
        stats: FeatureStats {
            mean: vec![0.0; 2],
            std: vec![1.0; 2],
        },
    };

    // Each term evaluated on its own tape.
    let student = &t.pair.student;
    let logits = |img: &Tensor| {
        let mut g = Graph::new();
        let vars = place_params(&mut g, student, false);
        let xv = g.leaf(stack(&[img]).unwrap());
        let f = forward_graph(&mut g, &arch, &vars, xv, None).unwrap();
        g.value(f.logits).clone()
    };
    let mut g = Graph::new();
    let ls = g.leaf(logits(&s.image));
    let sup = sup_loss(&mut g, ls, &s.label).unwrap();
    let (ld, lc) = (g.leaf(logits(&first)), g.leaf(logits(&second)));
    let cl = cl_loss(&mut g, ld, lc, &pseudo, cfg.lambda).unwrap();
    let pd = forward_segment(&arch, student, &first).unwrap();
    let pc = forward_segment(&arch, student, &second).unwrap();
    let cm = loss_cm(&pd, &pc).unwrap();
    let want = g.value(sup).item() + g.value(cl).item() + cfg.lambda_cm * cm;

    let mut t = t;
    let got = t.step_with_views(&[&s], Some(&views), 0).unwrap();
    assert!((got.total - want).abs() < 1e-9, "{} vs {want}", got.total);
    assert!((got.cm - cm).abs() < 1e-12);
}

#[test]
fn complementary_views_partition_each_target_image() {
    let t = Trainer::new(toy_config(Variant::Complementary)).unwrap();
    let mut x = sample(7, 16);
    x.image = x.image.map(|v| v.abs() + 0.5);
    for step in 0..20 {
        let v = t.target_views(&[&x], step).unwrap().unwrap();
        for ((a, b), orig) in v.first.data().iter().zip(v.second.data()).zip(x.image.data()) {
            assert!((*a == 0.0) != (*b == 0.0));
            assert_eq!(a + b, *orig);
        }
    }
}

#[test]
fn teacher_only_moves_by_ema() {
    let cfg = TrainConfig {
        delta: 0.34,
        ema_warmup: false,
        alpha: 0.8,
        ..toy_config(Variant::RandomMask)
    };
    let mut t = Trainer::new(cfg).unwrap();
    let (s, x) = (sample(8, 16), sample(9, 16));
    for step in 0..3 {
        let before = t.pair.teacher.clone();
        t.train_step(&[&s], &[&x], step).unwrap();
        let mut want = before;
        ema_update(&mut want, &t.pair.student, 0.8).unwrap();
        assert_eq!(t.pair.teacher, want);
    }
}

#[test]
fn ema_warmup_schedule() {
    let cfg = TrainConfig::default();
    assert_eq!(cfg.ema_decay(0), 0.5);
    assert_eq!(cfg.ema_decay(10_000), 0.999);
    let off = TrainConfig {
        ema_warmup: false,
        ..cfg
    };
    assert_eq!(off.ema_decay(0), 0.999);
}

#[test]
fn adain_toggle_off_ignores_target_statistics() {
    let (s, x) = (sample(10, 16), sample(11, 16));
    let t = Trainer::new(toy_config(Variant::Complementary)).unwrap();
    let mut v = t.target_views(&[&x], 0).unwrap().unwrap();
    let (_, _, [.., base]) = t.loss_graph(&[&s], Some(&v)).unwrap();
    let (g0, ..) = t.loss_graph(&[&s], Some(&v)).unwrap();
    v.stats.mean.iter_mut().for_each(|m| *m += 5.0);
    let (g1, ..) = t.loss_graph(&[&s], Some(&v)).unwrap();
    assert_eq!(g0.value(base).item(), g1.value(base).item());

    let on = Trainer::new(TrainConfig {
        adain_align: true,
        ..toy_config(Variant::Complementary)
    })
    .unwrap();
    let (g2, ..) = on.loss_graph(&[&s], Some(&v)).unwrap();
    assert_ne!(g2.value(base).item(), g1.value(base).item());
}

#[test]
fn non_finite_loss_aborts_with_step() {
    let cfg = toy_config(Variant::SourceOnly);
    let mut params = cfg.arch.init(0).unwrap();
    params.last_mut().unwrap().data_mut()[1] = f64::NAN;
    let mut t = Trainer::with_params(cfg, params).unwrap();
    let s = sample(12, 16);
    match t.train_step(&[&s], &[], 7) {
        Err(Error::NonFiniteLoss { step, .. }) => assert_eq!(step, 7),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn full_loss_gradient_matches_finite_differences() {
    let cfg = TrainConfig {
        delta: 0.34,
        lambda_cm: 0.5,
        adain_align: true,
        ..toy_config(Variant::Complementary)
    };
    assert!(cfg.arch.param_count() < 1000);
    // Zero biases put every pre-activation inside a hidden block exactly on
    // the rectifier kink, where central differences are meaningless.
    let mut params = cfg.arch.init(21).unwrap();
    for p in params.iter_mut().filter(|p| p.rank() == 1) {
        *p = Tensor::from_fn(p.shape(), |i| 0.05 + 0.03 * (i as f64 * 1.7).sin());
    }
    let t = Trainer::with_params(cfg, params).unwrap();
    let (s, x) = (sample(13, 16), sample(14, 16));
    let views = t.target_views(&[&x], 0).unwrap().unwrap();
    assert!(views.pseudo.kept() > 0);
    let (mut g, vars, [.., total]) = t.loss_graph(&[&s], Some(&views)).unwrap();
    let analytic = g.backward(total).unwrap().collect(&vars);
    let numeric = central_difference(&t.pair.student, 1e-5, |p| {
        let probe = Trainer::with_params(t.config.clone(), p.to_vec())?;
        let (g, _, [.., total]) = probe.loss_graph(&[&s], Some(&views))?;
        Ok(g.value(total).item())
    })
    .unwrap();
    let err = max_relative_error(&analytic, &numeric, RELATIVE_FLOOR);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn source_only_ignores_target_data_order() {
    let cfg = DataConfig {
        base: DomainSpec {
            size: 16,
            radius: (2, 4),
            side: (3, 8),
            ..DomainSpec::default()
        },
        train_count: 8,
        val_count: 2,
        ..DataConfig::default()
    };
    let data = UdaData::generate(&cfg).unwrap();
    let mut shuffled = data.clone();
    shuffled.target_train.reverse();
    shuffled.target_train.rotate_left(3);
    let tc = TrainConfig {
        iterations: 15,
        ..toy_config(Variant::SourceOnly)
    };
    let a = run(&tc, &data).unwrap();
    let b = run(&tc, &shuffled).unwrap();
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.target, b.target);
}

#[test]
fn full_run_is_deterministic() {
    let cfg = DataConfig {
        base: DomainSpec {
            size: 16,
            radius: (2, 4),
            side: (3, 8),
            ..DomainSpec::default()
        },
        train_count: 6,
        val_count: 2,
        ..DataConfig::default()
    };
    let data = UdaData::generate(&cfg).unwrap();
    let tc = TrainConfig {
        iterations: 10,
        ..toy_config(Variant::RandomMask)
    };
    assert_eq!(run(&tc, &data).unwrap(), run(&tc, &data).unwrap());
}

