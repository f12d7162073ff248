use ndarray::{array, Array1};
use proptest::prelude::*;

use super::*;
use crate::confusion::{extract_confusions_med, ConfusionPair, ConfusionSet, Occurrence, OccurrenceContexts, OccurrenceSource};
use crate::corpus::{Dataset, LabeledExample, Split};
use crate::nn::gradcheck::check_gradients;
use crate::nn::{Graph, Grads, ParamStore};

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn tiny_vocab() -> Vocab {
    Vocab::from_words(["a", "b", "c", "d", "e", "f", "g", "h", "i"])
}

fn tiny_model(seed: u64) -> BiLm {
    BiLm::new(tiny_vocab(), 4, 4, seed)
}

fn occ(word: &str, utt: &str, pos: usize, source: OccurrenceSource) -> Occurrence {
    Occurrence {
        word: word.into(),
        utterance_id: utt.into(),
        position: pos,
        source,
    }
}

#[test]
fn vocab_reserves_unknown() {
    let v = tiny_vocab();
    assert_eq!(v.len(), 10);
    assert_eq!(v.words()[0], UNK);
    assert_eq!(v.id("zzz"), 0);
    assert_eq!(v.id("a"), 1);
}

#[test]
fn perfect_predictions_cost_nothing() {
    assert_eq!(task_adaptive_loss(&[0.0; 3], &[0.0; 3]), 0.0);
}

#[test]
fn uniform_predictions_cost_two_log_v() {
    let v: f64 = 17.0;
    let lp = vec![-v.ln(); 5];
    assert!((task_adaptive_loss(&lp, &lp) - 2.0 * v.ln()).abs() < 1e-12);
}

#[test]
fn hand_computed_task_loss() {
    let f = [0.5f64.ln(), 0.25f64.ln()];
    let b = [0.1f64.ln(), 0.2f64.ln()];
    let expected = 0.5 * (-(0.5f64.ln()) - 0.25f64.ln() - 0.1f64.ln() - 0.2f64.ln());
    let got = task_adaptive_loss(&f, &b);
    assert!((got - expected).abs() < 1e-12);
    assert!((got - 2.9957).abs() < 1e-4);
}

#[test]
fn distributions_are_normalised() {
    let m = tiny_model(1);
    let out = lm_forward(&m, &toks("a b c d e")).unwrap();
    for t in 0..5 {
        let fs: f64 = out.fwd_log_dist.row(t).iter().map(|x| x.exp()).sum();
        let bs: f64 = out.bwd_log_dist.row(t).iter().map(|x| x.exp()).sum();
        assert!((fs - 1.0).abs() < 1e-12);
        assert!((bs - 1.0).abs() < 1e-12);
    }
    assert_eq!(out.reps.len(), 5);
    assert_eq!(out.reps.layers[0].ncols(), 8);
}

#[test]
fn sentence_rep_is_mean_of_top_layer() {
    let m = tiny_model(2);
    let out = lm_forward(&m, &toks("a b c")).unwrap();
    let mean = out.reps.layers[1].mean_axis(ndarray::Axis(0)).unwrap();
    for (x, y) in mean.iter().zip(out.sentence.0.iter()) {
        assert!((x - y).abs() < 1e-15);
    }
}

#[test]
fn single_token_uses_boundary_states() {
    let m = tiny_model(3);
    let out = lm_forward(&m, &toks("c")).unwrap();
    assert_eq!(out.fwd_logp.len(), 1);
    assert_eq!(out.reps.get(0, 0).len(), 8);
    assert_eq!(out.reps.get(0, 1).len(), 8);
    // forward prediction at t = 0 ignores the token itself
    let other = lm_forward(&m, &toks("d")).unwrap();
    assert_eq!(out.fwd_log_dist.row(0), other.fwd_log_dist.row(0));
    assert_eq!(out.bwd_log_dist.row(0), other.bwd_log_dist.row(0));
}

#[test]
fn empty_input_is_rejected() {
    let m = tiny_model(0);
    assert!(matches!(lm_forward(&m, &Vec::<String>::new()), Err(crate::Error::Argument(_))));
    assert!(m.embed(&Vec::<String>::new()).is_err());
}

#[test]
fn forward_stream_is_causal() {
    let m = tiny_model(4);
    let base = lm_forward(&m, &toks("a b c d")).unwrap();
    for changed in 1..4 {
        let mut t = toks("a b c d");
        t[changed] = "h".into();
        let out = lm_forward(&m, &t).unwrap();
        for pos in 0..changed {
            assert_eq!(out.fwd_logp[pos], base.fwd_logp[pos], "position {pos} saw token {changed}");
        }
        assert_ne!(out.fwd_logp[changed], base.fwd_logp[changed]);
    }
}

#[test]
fn backward_stream_ignores_the_past() {
    let m = tiny_model(5);
    let base = lm_forward(&m, &toks("a b c d")).unwrap();
    for changed in 0..3 {
        let mut t = toks("a b c d");
        t[changed] = "h".into();
        let out = lm_forward(&m, &t).unwrap();
        for pos in changed + 1..4 {
            assert_eq!(out.bwd_logp[pos], base.bwd_logp[pos]);
        }
    }
}

#[test]
fn embed_is_pure_and_shaped() {
    let m = tiny_model(6);
    let before = m.params.checksum();
    let a = m.embed(&toks("a b zzz")).unwrap();
    let b = m.embed(&toks("a b zzz")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.dim(), (3, 8));
    assert_eq!(m.params.checksum(), before);
}

fn rep(l0: Array1<f64>, l1: Array1<f64>, s: Array1<f64>) -> OccurrenceRep {
    OccurrenceRep {
        layers: [l0, l1],
        sentence: s,
    }
}

fn one_pair(a: OccurrenceRep, b: OccurrenceRep) -> (ConfusionSet, RepTable) {
    let oa = occ("find", "u1", 0, OccurrenceSource::Manual);
    let ob = occ("fined", "u1", 0, OccurrenceSource::Asr);
    let set: ConfusionSet = [ConfusionPair::new(oa.clone(), ob.clone()).unwrap()].into_iter().collect();
    let mut t = RepTable::new();
    t.insert(oa, a);
    t.insert(ob, b);
    (set, t)
}

fn builtin(name: &str) -> Box<dyn ConfusionDistance> {
    DistanceRegistry::with_builtins().build(name, &DistanceOptions::default()).unwrap()
}

#[test]
fn mse_pair_example() {
    let h1 = array![1.0, 0.0];
    let h2 = array![0.0, 1.0];
    let (set, t) = one_pair(rep(h1.clone(), h1.clone(), h1), rep(h2.clone(), h2.clone(), h2));
    assert_eq!(confusion_loss(&set, &t, builtin("mse").as_ref(), 0).unwrap(), 3.0);
}

#[test]
fn identical_reps_have_zero_loss() {
    let h = array![0.3, -1.2, 2.5];
    let (set, t) = one_pair(rep(h.clone(), h.clone(), h.clone()), rep(h.clone(), h.clone(), h));
    for name in ["mse", "cosine", "l1"] {
        assert_eq!(confusion_loss(&set, &t, builtin(name).as_ref(), 0).unwrap(), 0.0, "{name}");
    }
}

#[test]
fn cosine_ignores_positive_scale() {
    let h = array![0.3, -1.2, 2.5];
    let s = &h * 4.0;
    let (set, t) = one_pair(rep(h.clone(), h.clone(), h), rep(s.clone(), s.clone(), s));
    assert!(confusion_loss(&set, &t, &Cosine, 0).unwrap().abs() < 1e-15);
}

#[test]
fn empty_set_has_zero_loss() {
    let t = RepTable::new();
    for name in DistanceRegistry::with_builtins().names() {
        assert_eq!(confusion_loss(&ConfusionSet::new(), &t, builtin(name).as_ref(), 0).unwrap(), 0.0);
    }
}

#[test]
fn missing_representation_is_an_error() {
    let h = array![1.0];
    let (set, mut t) = one_pair(rep(h.clone(), h.clone(), h.clone()), rep(h.clone(), h.clone(), h));
    t.remove(&occ("fined", "u1", 0, OccurrenceSource::Asr));
    assert!(matches!(confusion_loss(&set, &t, &Mse, 0), Err(crate::Error::Argument(_))));
}

#[test]
fn satisfied_triplet_margin_is_free() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let a = g.constant(array![[1.0, 2.0]]);
    let n = g.constant(array![[1.0, 4.0]]);
    let tri = Triplet::default();
    let d = tri.distance(&mut g, a, a, Some(n));
    assert_eq!(g.scalar(d), 0.0);
    let close = g.constant(array![[1.0, 2.5]]);
    let d = tri.distance(&mut g, a, a, Some(close));
    assert!(g.scalar(d) > 0.0);
}

#[test]
fn triplet_samples_a_distinct_word() {
    let a = occ("book", "u1", 1, OccurrenceSource::Manual);
    let b = occ("hook", "u1", 1, OccurrenceSource::Asr);
    let c = occ("cook", "u2", 1, OccurrenceSource::Asr);
    let d = occ("look", "u2", 1, OccurrenceSource::Manual);
    let p1 = ConfusionPair::new(a.clone(), b.clone()).unwrap();
    let p2 = ConfusionPair::new(c.clone(), d.clone()).unwrap();
    let pool = occurrences_of(&[&p1, &p2]);
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(9);
    let neg = sample_negatives(&[&p1, &p2], &pool, &[], &mut rng);
    let n1 = neg[0].as_ref().unwrap();
    assert!(n1.word == "cook" || n1.word == "look");
    let n2 = neg[1].as_ref().unwrap();
    assert!(n2.word == "book" || n2.word == "hook");
    let lonely = sample_negatives(&[&p1], &occurrences_of(&[&p1]), &[], &mut rng);
    assert_eq!(lonely, vec![None]);
    let fallback = sample_negatives(&[&p1], &occurrences_of(&[&p1]), &[c.clone()], &mut rng);
    assert_eq!(fallback, vec![Some(c)]);
}

#[test]
fn registry_rejects_unknown_names() {
    let r = DistanceRegistry::with_builtins();
    assert_eq!(r.names(), vec!["cosine", "l1", "mse", "triplet"]);
    assert!(matches!(r.build("euclid", &DistanceOptions::default()), Err(crate::Error::Config(_))));
}

fn vec3() -> impl Strategy<Value = Array1<f64>> {
    prop::collection::vec(-3.0f64..3.0, 3).prop_map(Array1::from)
}

fn occ_rep() -> impl Strategy<Value = OccurrenceRep> {
    (vec3(), vec3(), vec3()).prop_map(|(a, b, c)| rep(a, b, c))
}

proptest! {
    #[test]
    fn loss_is_symmetric_and_non_negative(a in occ_rep(), b in occ_rep()) {
        let (set, t) = one_pair(a.clone(), b.clone());
        let (set2, t2) = one_pair(b, a);
        for name in ["mse", "cosine", "l1"] {
            let d = builtin(name);
            let x = confusion_loss(&set, &t, d.as_ref(), 0).unwrap();
            let y = confusion_loss(&set2, &t2, d.as_ref(), 0).unwrap();
            prop_assert!(x >= 0.0);
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()), "{name}: {x} vs {y}");
        }
    }

    #[test]
    fn triplet_is_non_negative(a in occ_rep(), b in occ_rep(), n in occ_rep()) {
        let oa = occ("x", "u", 0, OccurrenceSource::Manual);
        let ob = occ("y", "u", 0, OccurrenceSource::Asr);
        let on = occ("z", "v", 0, OccurrenceSource::Manual);
        let on2 = occ("w", "v", 0, OccurrenceSource::Asr);
        let set: ConfusionSet = [
            ConfusionPair::new(oa.clone(), ob.clone()).unwrap(),
            ConfusionPair::new(on.clone(), on2.clone()).unwrap(),
        ].into_iter().collect();
        let mut t = RepTable::new();
        t.insert(oa, a);
        t.insert(ob, b.clone());
        t.insert(on, n);
        t.insert(on2, b);
        let d = builtin("triplet");
        prop_assert!(confusion_loss(&set, &t, d.as_ref(), 3).unwrap() >= 0.0);
    }
}

fn lm_loss(store: &ParamStore, grads: Option<&mut Grads>, body: &dyn Fn(&mut Graph, &BiLm) -> crate::nn::Var) -> f64 {
    let m = BiLm::from_params(tiny_vocab(), store.clone()).unwrap();
    let mut g = Graph::new(store);
    let l = body(&mut g, &m);
    if let Some(gr) = grads {
        g.backward(l, gr);
    }
    g.scalar(l)
}

#[test]
fn task_loss_gradients_match_finite_differences() {
    let m = tiny_model(11);
    let sents = [m.vocab.ids(&toks("a b c d")), m.vocab.ids(&toks("e")), m.vocab.ids(&toks("f g"))];
    let body = |g: &mut Graph, m: &BiLm| {
        let mut acc = None;
        for s in &sents {
            let v = m.encode(g, s);
            let l = task_adaptive_var(g, &v);
            acc = Some(match acc {
                Some(a) => g.add(a, l),
                None => l,
            });
        }
        acc.unwrap()
    };
    let r = check_gradients(&m.params, |s, gr| lm_loss(s, gr, &body), 1e-4).unwrap();
    assert!(r.checked > 500);
}

#[test]
fn confusion_gradients_match_finite_differences() {
    let m = tiny_model(12);
    let s1 = m.vocab.ids(&toks("a b c"));
    let s2 = m.vocab.ids(&toks("a d c i"));
    let s3 = m.vocab.ids(&toks("e f"));
    let registry = DistanceRegistry::with_builtins();
    for name in registry.names() {
        let dist = registry.build(name, &DistanceOptions::default()).unwrap();
        let body = |g: &mut Graph, m: &BiLm| {
            let v1 = m.encode(g, &s1);
            let v2 = m.encode(g, &s2);
            let v3 = m.encode(g, &s3);
            let at = |g: &mut Graph, v: &LmVars, p: usize| OccurrenceVars {
                layers: [g.row(v.layer0, p), g.row(v.layer1, p)],
                sentence: v.sentence,
            };
            let a = at(g, &v1, 1);
            let b = at(g, &v2, 1);
            let n = at(g, &v3, 0);
            let a2 = at(g, &v1, 2);
            let b2 = at(g, &v2, 3);
            confusion_loss_var(g, dist.as_ref(), &[(a, b, Some(n)), (a2, b2, Some(n))])
        };
        let r = check_gradients(&m.params, |s, gr| lm_loss(s, gr, &body), 1e-4);
        assert!(r.is_ok(), "{name}: {:?}", r.err());
    }
}

#[test]
fn triplet_gradients_with_l1_norm() {
    let m = tiny_model(13);
    let s1 = m.vocab.ids(&toks("a b"));
    let s2 = m.vocab.ids(&toks("c d"));
    let tri = Triplet {
        config: TripletConfig { margin: 5.0, norm_p: 3 },
    };
    let body = |g: &mut Graph, m: &BiLm| {
        let v1 = m.encode(g, &s1);
        let v2 = m.encode(g, &s2);
        let a = OccurrenceVars { layers: [g.row(v1.layer0, 0), g.row(v1.layer1, 0)], sentence: v1.sentence };
        let b = OccurrenceVars { layers: [g.row(v2.layer0, 0), g.row(v2.layer1, 0)], sentence: v2.sentence };
        let n = OccurrenceVars { layers: [g.row(v2.layer0, 1), g.row(v2.layer1, 1)], sentence: v1.sentence };
        confusion_loss_var(g, &tri, &[(a, b, Some(n))])
    };
    check_gradients(&m.params, |s, gr| lm_loss(s, gr, &body), 1e-4).unwrap();
}

fn toy_corpus() -> Vec<Vec<String>> {
    let subjects = ["i", "we", "you", "they", "she"];
    let verbs = ["book", "want", "need", "like", "see"];
    let objects = ["a table", "the song", "a seat", "the weather", "an alarm"];
    let mut out = Vec::new();
    for (i, s) in subjects.iter().enumerate() {
        for (j, v) in verbs.iter().enumerate() {
            if (i + j) % 2 == 0 {
                out.push(toks(&format!("{s} {v} {}", objects[(i + 2 * j) % 5])));
            }
        }
    }
    while out.len() < 50 {
        let k = out.len();
        out.push(toks(&format!("{} {} now", subjects[k % 5], verbs[(k / 5) % 5])));
    }
    out
}

fn toy_vocab(corpus: &[Vec<String>]) -> Vocab {
    Vocab::from_words(corpus.iter().flatten().chain(["hook".to_string()].iter()))
}

#[test]
fn pretraining_is_deterministic() {
    let corpus = toy_corpus();
    let cfg = PretrainConfig { epochs: 2, seed: 5, ..Default::default() };
    let mut a = BiLm::new(toy_vocab(&corpus), 8, 8, 1);
    let mut b = BiLm::new(toy_vocab(&corpus), 8, 8, 1);
    let ha = pretrain_lm(&mut a, &corpus, &cfg).unwrap();
    let hb = pretrain_lm(&mut b, &corpus, &cfg).unwrap();
    assert_eq!(ha, hb);
    assert_eq!(a.params.checksum(), b.params.checksum());
}

#[test]
fn single_sentence_step_does_not_increase_loss() {
    let s = vec![toks("i book a table")];
    let mut m = BiLm::new(toy_vocab(&s), 8, 8, 2);
    let before = lm_loss_of(&m, &s);
    pretrain_lm(&mut m, &s, &PretrainConfig { epochs: 1, ..Default::default() }).unwrap();
    assert!(lm_loss_of(&m, &s) <= before);
}

fn lm_loss_of(m: &BiLm, corpus: &[Vec<String>]) -> f64 {
    corpus
        .iter()
        .map(|s| {
            let f = lm_forward(m, s).unwrap();
            task_adaptive_loss(&f.fwd_logp, &f.bwd_logp)
        })
        .sum::<f64>()
        / corpus.len() as f64
}

#[test]
fn pretraining_beats_uniform_perplexity() {
    let corpus = toy_corpus();
    let mut m = BiLm::new(toy_vocab(&corpus), 16, 16, 3);
    pretrain_lm(&mut m, &corpus, &PretrainConfig { epochs: 30, seed: 1, ..Default::default() }).unwrap();
    // per-direction perplexity from the two-stream loss
    let ppl = (lm_loss_of(&m, &corpus) / 2.0).exp();
    assert!(ppl < m.vocab.len() as f64, "perplexity {ppl} vs V={}", m.vocab.len());
}

fn book_hook_data() -> (Dataset, ConfusionSet, OccurrenceContexts) {
    let corpus = toy_corpus();
    let examples: Vec<LabeledExample> = corpus
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let asr: Vec<String> = t.iter().map(|w| if w == "book" { "hook".to_string() } else { w.clone() }).collect();
            LabeledExample {
                id: format!("u{i:02}"),
                manual_tokens: t.clone(),
                asr_tokens: Some(asr),
                intent: "x".into(),
            }
        })
        .collect();
    let ds = Dataset::new(examples, Split::Train).unwrap();
    let pairs = extract_confusions_med(&ds);
    let ctx = OccurrenceContexts::new(&ds, &[]);
    (ds, pairs, ctx)
}

#[test]
fn lambda_zero_total_is_task_loss() {
    let (ds, pairs, ctx) = book_hook_data();
    let data = CalibrationData::from_dataset(&ds, pairs, ctx, true);
    let mut m = BiLm::new(toy_vocab(&data.sentences), 8, 8, 4);
    let cfg = CalibrationConfig { lambda: 0.0, epochs: 2, ..Default::default() };
    let trace = joint_finetune(&mut m, &data, &cfg).unwrap();
    assert_eq!(trace.len(), 2);
    for t in &trace {
        assert_eq!(t.l_total, t.l_ta);
        assert!(t.l_ca > 0.0);
    }
}

#[test]
fn empty_pair_set_has_zero_confusion_term() {
    let (ds, _, ctx) = book_hook_data();
    let data = CalibrationData::from_dataset(&ds, ConfusionSet::new(), ctx, false);
    let mut m = BiLm::new(toy_vocab(&data.sentences), 8, 8, 4);
    let trace = joint_finetune(&mut m, &data, &CalibrationConfig { epochs: 2, ..Default::default() }).unwrap();
    assert!(trace.iter().all(|t| t.l_ca == 0.0 && t.l_total == t.l_ta));
}

#[test]
fn lambda_zero_matches_empty_pair_set() {
    let (ds, pairs, ctx) = book_hook_data();
    let with = CalibrationData::from_dataset(&ds, pairs, ctx.clone(), true);
    let without = CalibrationData { pairs: ConfusionSet::new(), ..with.clone() };
    let cfg = CalibrationConfig { lambda: 0.0, epochs: 2, ..Default::default() };
    let mut a = BiLm::new(toy_vocab(&with.sentences), 8, 8, 4);
    let mut b = a.clone();
    joint_finetune(&mut a, &with, &cfg).unwrap();
    joint_finetune(&mut b, &without, &cfg).unwrap();
    assert_eq!(a.params.checksum(), b.params.checksum());
}

#[test]
fn joint_loss_is_linear_in_lambda() {
    let (ds, pairs, ctx) = book_hook_data();
    let data = CalibrationData::from_dataset(&ds, pairs, ctx, true);
    let m = BiLm::new(toy_vocab(&data.sentences), 8, 8, 6);
    for lambda in [0.0, 0.1, 10.0, 50.0] {
        for distance in ["mse", "triplet"] {
            let cfg = CalibrationConfig { lambda, distance: distance.into(), ..Default::default() };
            let p = joint_loss(&m, &data, &cfg).unwrap();
            assert_eq!(p.l_total, p.l_ta + lambda * p.l_ca);
        }
    }
}

#[test]
fn finetuning_reduces_task_loss() {
    let (ds, _, ctx) = book_hook_data();
    let data = CalibrationData::from_dataset(&ds, ConfusionSet::new(), ctx, false);
    assert_eq!(data.sentences.len(), 50);
    let mut m = BiLm::new(toy_vocab(&data.sentences), 16, 16, 7);
    let trace = joint_finetune(&mut m, &data, &CalibrationConfig::default()).unwrap();
    assert!(trace.last().unwrap().l_ta < trace[0].l_ta);
}

fn book_hook_gap(m: &BiLm, ds: &Dataset) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for ex in &ds.examples {
        let asr = ex.asr_tokens.as_ref().unwrap();
        if let Some(p) = ex.manual_tokens.iter().position(|w| w == "book") {
            let a = m.embed(&ex.manual_tokens).unwrap();
            let b = m.embed(asr).unwrap();
            total += (&a.row(p) - &b.row(p)).mapv(|x| x * x).sum().sqrt();
            n += 1;
        }
    }
    total / n as f64
}

#[test]
fn calibration_pulls_confused_words_together() {
    let (ds, pairs, ctx) = book_hook_data();
    assert!(pairs.word_pair_counts().keys().all(|(a, b)| a == "book" && b == "hook"));
    let data = CalibrationData::from_dataset(&ds, pairs, ctx, true);
    let mut m = BiLm::new(toy_vocab(&data.sentences), 16, 16, 8);
    let before = book_hook_gap(&m, &ds);
    let cfg = CalibrationConfig { epochs: 3, learning_rate: 1e-3, seed: 8, ..Default::default() };
    joint_finetune(&mut m, &data, &cfg).unwrap();
    let after = book_hook_gap(&m, &ds);
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn trace_serialises_one_record_per_line() {
    let t = [EpochTrace { epoch: 1, l_ta: 1.5, l_ca: 0.25, l_total: 4.0 }];
    let s = trace_to_jsonl(&t);
    assert_eq!(s, "{\"epoch\":1,\"l_ta\":1.5,\"l_ca\":0.25,\"l_total\":4.0}\n");
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lm.json");
    let m = tiny_model(21);
    m.save(&path, serde_json::to_value(CalibrationConfig::default()).unwrap()).unwrap();
    let back = BiLm::load(&path).unwrap();
    assert_eq!(back.params.checksum(), m.params.checksum());
    assert_eq!(back.vocab, m.vocab);
    assert_eq!(back.embed(&toks("a b")).unwrap(), m.embed(&toks("a b")).unwrap());
}
