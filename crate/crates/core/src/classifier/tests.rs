use super::*;
use super::Strategy;
use crate::lm::BigramLm;
use crate::retrieval::{select_evidence, Corpus, SplitMode, Stopwords};
use proptest::prelude::*;

fn tiny_config(seed: u64) -> ClassifierConfig {
    ClassifierConfig {
        encoder_layers: 1,
        encoder_heads: 2,
        hidden_dim: 8,
        ffn_dim: 16,
        max_positions: 48,
        pool_heads: 2,
        k: 3,
        learning_rate: 1e-2,
        train_steps: 0,
        batch_size: 4,
        clip_norm: None,
        seed,
    }
}

const TEXT: &str = "\
the whale swims in the deep ocean indeed.
a whale never sleeps in a desert.
fish swim in the ocean surely.
the camel walks across the desert truly.
a camel hardly swims in the ocean.
";

fn data() -> (Vec<(EvidenceSet, Label)>, WordVocab) {
    let corpus = Corpus::ingest(TEXT, SplitMode::Lines);
    let sw = Stopwords::english();
    let triples = [
        ("whale", "ocean", Label::Valid),
        ("whale", "desert", Label::Fictitious),
        ("camel", "desert", Label::Valid),
        ("camel", "ocean", Label::Fictitious),
    ];
    let sets: Vec<(EvidenceSet, Label)> = triples
        .iter()
        .map(|&(h, t, l)| {
            let triple = LabeledTriple::new(h, "AtLocation", t).unwrap();
            (select_evidence(&triple, &corpus, 3, &sw).unwrap(), l)
        })
        .collect();
    let vocab = training_vocab(&sets.iter().map(|(s, _)| s.clone()).collect::<Vec<_>>());
    (sets, vocab)
}

/// Encoder whose output is the embedding row of each token.
fn lookup_encoder() -> TransformerEncoder<f64> {
    let vocab = WordVocab::new(["a", "r", "b"]);
    let mut table = Matrix::zeros(vocab.len(), 2);
    let rows = [
        ("a", [0.0, 1.0]),
        ("r", [1.0, 1.0]),
        ("b", [2.0, 0.0]),
        ("<cls>", [1.0, 0.0]),
        ("<sep>", [0.0, -1.0]),
    ];
    for (w, v) in rows {
        table.row_mut(vocab.id(w).unwrap() as usize).copy_from_slice(&v);
    }
    TransformerEncoder::embedding_only(vocab, table, 16)
}

fn assembled(enc: &TransformerEncoder<f64>) -> AssembledInput {
    let s = enc.descriptor().special;
    let id = |w: &str| enc.vocab().id(w).unwrap();
    AssembledInput {
        ids: vec![s.cls, id("a"), s.sep, id("r"), s.sep, id("b")],
        span_cls: 0..1,
        span_h: 1..2,
        span_r: 3..4,
        span_t: 5..6,
        truncated: 0,
    }
}

/// Zero query/key projections give uniform attention; identity value and
/// output projections then make every pooled row the mean of `Ê`.
fn averaging_head(w: [[f64; 2]; 2]) -> PoolingHead<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut head = PoolingHead::new(2, 1, &mut rng).unwrap();
    let (attn, out) = head.layout();
    let p = head.params_mut();
    for (i, &slot) in attn.iter().enumerate() {
        *p.get_mut(slot) = match i {
            4 | 6 => Matrix::identity(2),
            0 | 2 => Matrix::zeros(2, 2),
            _ => Matrix::zeros(1, 2),
        };
    }
    *p.get_mut(out) = Matrix::from_rows(&[w[0].to_vec(), w[1].to_vec()]);
    head
}

#[test]
fn zero_output_matrix_is_uninformative() {
    let enc = lookup_encoder();
    let p = forward(&assembled(&enc), &enc, &averaging_head([[0.0; 2]; 2])).unwrap();
    assert_eq!(p, [0.5, 0.5]);
}

#[test]
fn hand_evaluated_pooling_forward() {
    let enc = lookup_encoder();
    // Ê rows: <cls> (1,0), a (0,1), r (1,1), b (2,0); mean (1, 0.5)
    // logits W·mean = (1, 1.5); p_1 = sigmoid(0.5)
    let p = forward(&assembled(&enc), &enc, &averaging_head([[1.0, 0.0], [0.0, 3.0]])).unwrap();
    assert!((p[1] - 0.622_459_331_201_854_6).abs() < 1e-12);
    assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
}

#[test]
fn hand_evaluated_baseline() {
    let enc = lookup_encoder();
    let head = LinearHead::from_weights(Matrix::identity(2), Matrix::from_vec(1, 2, vec![0.0, 0.5]));
    // <cls> row (1, 0) → logits (1, 0.5); p_1 = sigmoid(-0.5)
    let t = LabeledTriple::new("a", "R", "b").unwrap();
    let p = baseline_triple_classify(&t, &enc, &head).unwrap();
    assert!((p[1] - 0.377_540_668_798_145_4).abs() < 1e-12);

    let zero = LinearHead::from_weights(Matrix::zeros(2, 2), Matrix::zeros(1, 2));
    assert_eq!(baseline_triple_classify(&t, &enc, &zero).unwrap(), [0.5, 0.5]);
}

#[test]
fn scoring_backends_cannot_classify() {
    let lm = BigramLm::<f64>::uniform(WordVocab::new(["a", "r", "b"]));
    let enc = lookup_encoder();
    let err = forward(&assembled(&enc), &lm, &averaging_head([[1.0, 0.0], [0.0, 1.0]])).unwrap_err();
    assert!(matches!(err, Error::Capability { .. }));
}

#[test]
fn pooling_gradients_match_finite_differences() {
    let (sets, vocab) = data();
    let mut model = ContextClassifier::<f64>::new(tiny_config(3), InputMode::Evidence, vocab).unwrap();
    let (set, gold) = &sets[0];
    let (_, grads) = model.loss_and_gradients(set, *gold).unwrap();
    let offset = model.encoder().params().len();
    let h = 1e-4;
    let n_params = model.head().params().len();
    for slot in 0..n_params {
        let n = model.head().params().get(slot).as_slice().len();
        for e in 0..n {
            let mut eval = |delta: f64| {
                model.head_mut().params_mut().get_mut(slot).as_mut_slice()[e] += delta;
                let l = model.loss_and_gradients(set, *gold).unwrap().0.value;
                model.head_mut().params_mut().get_mut(slot).as_mut_slice()[e] -= delta;
                l
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let an = grads.get(offset + slot).map_or(0.0, |g| g.as_slice()[e]);
            let scale = fd.abs().max(an.abs());
            assert!(
                (fd - an).abs() <= 1e-3 * scale || (fd - an).abs() < 1e-8,
                "head slot {slot} entry {e}: analytic {an} vs numeric {fd}"
            );
        }
    }
}

#[test]
fn zero_steps_leave_the_model_unchanged() {
    let (sets, vocab) = data();
    let mut model = ContextClassifier::<f64>::new(tiny_config(1), InputMode::Evidence, vocab).unwrap();
    let before: Vec<_> = sets.iter().map(|(s, _)| model.probabilities(s).unwrap()).collect();
    let report = model.train(&sets).unwrap();
    assert!(report.loss_curve.is_empty());
    let after: Vec<_> = sets.iter().map(|(s, _)| model.probabilities(s).unwrap()).collect();
    assert_eq!(before, after);
}

#[test]
fn empty_training_set_is_an_error() {
    let (_, vocab) = data();
    let mut model = ContextClassifier::<f64>::new(tiny_config(1), InputMode::Evidence, vocab).unwrap();
    assert!(model.train(&[]).is_err());
}

#[test]
fn training_fits_a_toy_set_deterministically() {
    let (sets, vocab) = data();
    let config = ClassifierConfig {
        train_steps: 60,
        ..tiny_config(7)
    };
    let mut a = ContextClassifier::<f64>::new(config, InputMode::Evidence, vocab.clone()).unwrap();
    let mut b = ContextClassifier::<f64>::new(config, InputMode::Evidence, vocab).unwrap();
    let ra = a.train(&sets).unwrap();
    let rb = b.train(&sets).unwrap();
    assert_eq!(ra, rb);
    assert!(ra.loss_curve.last().unwrap() < &ra.loss_curve[0]);
    for (s, gold) in &sets {
        assert_eq!(a.predict(s, Strategy::Avg).unwrap().label, *gold);
    }
}

#[test]
fn triple_mode_trains() {
    let (sets, vocab) = data();
    let config = ClassifierConfig {
        train_steps: 60,
        ..tiny_config(2)
    };
    let mut model = ContextClassifier::<f32>::new(config, InputMode::Triple, vocab).unwrap();
    let report = model.train(&sets).unwrap();
    assert!(report.loss_curve.last().unwrap() < &report.loss_curve[0]);
    assert_eq!(model.probabilities(&sets[0].0).unwrap().len(), 1);
}

#[test]
fn checkpoint_round_trip() {
    let (sets, vocab) = data();
    let config = ClassifierConfig {
        train_steps: 5,
        ..tiny_config(4)
    };
    let mut model = ContextClassifier::<f32>::new(config, InputMode::Evidence, vocab).unwrap();
    model.train(&sets).unwrap();
    let dir = tempfile::tempdir().unwrap();
    model.save(dir.path()).unwrap();
    let back = ContextClassifier::<f32>::load(dir.path()).unwrap();
    for (s, _) in &sets {
        assert_eq!(model.probabilities(s).unwrap(), back.probabilities(s).unwrap());
    }
    let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 4"));
}

#[test]
fn k_limits_the_pairs_used() {
    let (sets, vocab) = data();
    let mut model = ContextClassifier::<f64>::new(tiny_config(0), InputMode::Evidence, vocab).unwrap();
    let set = &sets[0].0;
    assert!(set.pairs.len() >= 2);
    model.set_k(1).unwrap();
    assert_eq!(model.probabilities(set).unwrap().len(), 1);
    assert!(model.set_k(0).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = ClassifierConfig {
        pool_heads: 3,
        ..tiny_config(0)
    };
    assert!(bad.validate().is_err());
    assert!(ClassifierConfig { k: 0, ..tiny_config(0) }.validate().is_err());
    assert!(ClassifierConfig::default().validate().is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn outputs_are_distributions(seed in any::<u64>(), scale in 0.1f64..20.0) {
        let (sets, vocab) = data();
        let mut model = ContextClassifier::<f64>::new(tiny_config(seed), InputMode::Evidence, vocab).unwrap();
        for m in model.head_mut().params_mut().values_mut() {
            m.scale_assign(scale);
        }
        for (s, _) in &sets {
            for p in model.probabilities(s).unwrap() {
                prop_assert!(p.iter().all(|x| x.is_finite() && *x >= 0.0));
                prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-6);
            }
        }
    }
}
