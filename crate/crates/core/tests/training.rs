use emochat::corpus::{encode_corpus, generate_synthetic_corpus, ConversationPair, SyntheticSpec, Vocabulary};
use emochat::training::{
    gradient_check, load_model, pretrain_seq2seq, read_checkpoint, read_metrics, save_checkpoint, sgd_step, train, warm_start, CheckpointKind,
    CheckpointMeta, MetricsLog, StepRecord, TrainConfig,
};
use emochat::{EmotionVector, Error, Model, ModelConfig, Preset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus(pairs: usize, seed: u64) -> (Vocabulary, Vec<ConversationPair>) {
    let spec = SyntheticSpec::deterministic([4, 0, 3, 2, 1, 5], pairs, 0.1);
    let recs = generate_synthetic_corpus(&spec, seed).unwrap();
    let vocab = Vocabulary::from_records(&recs, 32).unwrap();
    let pairs = encode_corpus(&recs, &vocab, 30).unwrap();
    (vocab, pairs)
}

fn tiny(vocab: &Vocabulary, seed: u64) -> Model {
    Model::new(ModelConfig::preset(Preset::Tiny, vocab.len()), seed).unwrap()
}

fn small_run(max_steps: usize) -> TrainConfig {
    TrainConfig {
        max_steps,
        batch_size: 4,
        eval_every: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let (vocab, pairs) = corpus(20, 1);
    let mut model = tiny(&vocab, 2);
    train(&mut model, &pairs, None, &small_run(3), &mut ()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt");
    save_checkpoint(&path, &model, Some(&vocab), CheckpointMeta::new(CheckpointKind::Full, 3, 2)).unwrap();
    let (back, ckpt) = load_model(&path).unwrap();
    assert_eq!(back.params, model.params);
    assert_eq!(ckpt.vocab.as_ref(), Some(&vocab));
    assert_eq!(ckpt.manifest.step, 3);
    let a = model.total_loss(&pairs[..5], 0.5).unwrap();
    let b = back.total_loss(&pairs[..5], 0.5).unwrap();
    assert_eq!(a, b);

    // a truncated payload is rejected
    let payload = path.join("params.bin");
    let bytes = std::fs::read(&payload).unwrap();
    std::fs::write(&payload, &bytes[..bytes.len() - 4]).unwrap();
    assert!(matches!(read_checkpoint(&path), Err(Error::Integrity(_))));
}

#[test]
fn sgd_moves_against_the_gradient() {
    let (vocab, pairs) = corpus(8, 3);
    let mut model = tiny(&vocab, 4);
    let before = model.params.clone();
    let (loss0, grads) = model.loss_and_grads(&pairs[..4], 0.5).unwrap();
    let norm = sgd_step(&mut model.params, &grads, 0.1, None).unwrap();
    assert!((norm - grads.global_norm()).abs() < 1e-15);
    for ((id, t), g) in before.iter().zip(grads.tensors()) {
        for ((&p0, &p1), &gi) in t.data.iter().zip(&model.params.get(id).data).zip(g) {
            assert_eq!(p1, (p0 - 0.1 * gi) as f32 as f64);
        }
    }
    let loss1 = model.total_loss(&pairs[..4], 0.5).unwrap();
    assert!(loss1.total < loss0.total);

    // clipping rescales the whole step to the threshold
    let mut clipped = before.clone();
    let tiny_norm = norm / 10.0;
    sgd_step(&mut clipped, &grads, 1.0, Some(tiny_norm)).unwrap();
    let mut moved = 0.0;
    for ((id, t), _) in before.iter().zip(grads.tensors()) {
        for (&p0, &p1) in t.data.iter().zip(&clipped.get(id).data) {
            moved += (p1 - p0) * (p1 - p0);
        }
    }
    assert!((moved.sqrt() - tiny_norm).abs() < 1e-5 * tiny_norm.max(1.0));
}

#[test]
fn training_is_deterministic() {
    let (vocab, pairs) = corpus(30, 5);
    let run = || {
        let mut m = tiny(&vocab, 6);
        let recs = train(&mut m, &pairs, Some(&pairs[..10]), &small_run(12), &mut ()).unwrap();
        (m.params, recs)
    };
    let (pa, ra) = run();
    let (pb, rb) = run();
    assert_eq!(pa, pb);
    assert_eq!(ra, rb);
    assert_eq!(ra.len(), 12);
    assert!(ra[0].acc_prior.is_none() && ra[4].acc_prior.is_some());
}

#[test]
fn metrics_log_round_trips() {
    let (vocab, pairs) = corpus(10, 7);
    let mut m = tiny(&vocab, 8);
    let recs = train(&mut m, &pairs, None, &small_run(5), &mut ()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.jsonl");
    let mut log = MetricsLog::create(&path).unwrap();
    for r in &recs {
        log.append(r).unwrap();
    }
    log.flush().unwrap();
    let back: Vec<StepRecord> = read_metrics(&path).unwrap();
    assert_eq!(back, recs);
    let first: serde_json::Value = serde_json::from_str(std::fs::read_to_string(&path).unwrap().lines().next().unwrap()).unwrap();
    for key in ["step", "L_total", "L_p", "L_r", "L_r'", "L_KL", "L_NLL", "acc_prior", "acc_recognition"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let (vocab, pairs) = corpus(4, 9);
    let model = tiny(&vocab, 10);
    let report = gradient_check(&model, &pairs[..2], 0.5, 1e-3).unwrap();
    assert_eq!(report.checked, model.params.numel());
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn warm_start_reproduces_the_pretrained_route() {
    let (vocab, pairs) = corpus(16, 11);
    let mut base = tiny(&vocab, 12);
    let cfg = TrainConfig {
        pretrain_steps: 150,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let curve = pretrain_seq2seq(&mut base, &pairs, &cfg, &mut |_, _| {}).unwrap();
    assert_eq!(curve.len(), 150);
    let head: f64 = curve[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = curve[140..].iter().sum::<f64>() / 10.0;
    assert!(tail < head, "pretraining did not reduce NLL: {head} -> {tail}");

    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(dir.path(), &base, None, CheckpointMeta::new(CheckpointKind::Seq2seq, 150, 12)).unwrap();
    let ckpt = read_checkpoint(dir.path()).unwrap();
    assert!(ckpt.to_model().is_err());
    let mut model = tiny(&vocab, 99);
    warm_start(&mut model, &ckpt).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for p in &pairs {
        let a = base.decoder_trace(p.post.ids(), p.response.ids(), None).unwrap();
        let b = model
            .decoder_trace(p.post.ids(), p.response.ids(), Some(&EmotionVector::zeros()))
            .unwrap();
        assert_eq!(a, b);
        let e = EmotionVector::from_slice(&(0..6).map(|_| rng.gen_range(0.1..0.9)).collect::<Vec<_>>()).unwrap();
        assert_ne!(a, model.decoder_trace(p.post.ids(), p.response.ids(), Some(&e)).unwrap());
    }
}

#[test]
fn invalid_configuration_is_rejected() {
    let (vocab, pairs) = corpus(4, 14);
    let mut m = tiny(&vocab, 15);
    for bad in [
        TrainConfig {
            alpha: 1.2,
            ..TrainConfig::default()
        },
        TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        },
        TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        },
    ] {
        assert!(matches!(train(&mut m, &pairs, None, &bad, &mut ()), Err(Error::Config(_))));
    }
    assert!(train(&mut m, &[], None, &small_run(1), &mut ()).is_err());
}
