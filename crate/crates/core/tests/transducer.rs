use csrnnt::nn::{adam_step, log_softmax, AdamConfig, AdamState, ParameterSet, Tensor2};
use csrnnt::transducer::{
    alignment_log_prob, enumerate_alignments, enumerate_alignments_oracle, model_forward, rnnt_lattice_loss, rnnt_loss,
    LatticeLogProbs, ModelConfig, TransducerModel,
};
use csrnnt::vocab::{LanguageAttr, SymbolClass, SymbolKind, BLANK};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_lattice(rng: &mut ChaCha8Rng, frames: usize, tlen: usize, vocab: usize) -> LatticeLogProbs {
    let mut data = Vec::new();
    for _ in 0..frames * (tlen + 1) {
        let logits: Vec<f64> = (0..vocab).map(|_| rng.gen_range(-3.0..3.0)).collect();
        data.extend(log_softmax(&logits).unwrap());
    }
    LatticeLogProbs::new(frames, tlen, vocab, data).unwrap()
}

fn random_target(rng: &mut ChaCha8Rng, tlen: usize, vocab: usize) -> Vec<usize> {
    (0..tlen).map(|_| rng.gen_range(1..vocab)).collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[test]
fn two_frames_one_label_by_hand() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lp = random_lattice(&mut rng, 2, 1, 3);
    let y = 2;
    let p = |t, u, k| lp.get(t, u, k).exp();
    let by_hand = p(0, 0, y) * p(0, 1, BLANK) * p(1, 1, BLANK) + p(0, 0, BLANK) * p(1, 0, y) * p(1, 1, BLANK);
    let loss = rnnt_loss(&lp, &[y]).unwrap().neg_log_likelihood;
    assert!((loss + by_hand.ln()).abs() < 1e-12);
    assert!((enumerate_alignments_oracle(&lp, &[y]).unwrap() - loss).abs() < 1e-12);
}

#[test]
fn loss_matches_enumeration_on_larger_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let frames = rng.gen_range(1..=6);
        let tlen = rng.gen_range(0..=4);
        let vocab = rng.gen_range(2..=6);
        let lp = random_lattice(&mut rng, frames, tlen, vocab);
        let target = random_target(&mut rng, tlen, vocab);
        let dp = rnnt_loss(&lp, &target).unwrap().neg_log_likelihood;
        let brute = enumerate_alignments_oracle(&lp, &target).unwrap();
        assert!((dp - brute).abs() <= 1e-10, "{dp} vs {brute}");
    }
}

#[test]
fn node_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let eps = 1e-5;
    for frames in 1..=4 {
        for tlen in 0..=3 {
            let vocab = 4;
            let lp = random_lattice(&mut rng, frames, tlen, vocab);
            let target = random_target(&mut rng, tlen, vocab);
            let grad = rnnt_loss(&lp, &target).unwrap().grad;
            for i in 0..lp.data().len() {
                let mut plus = lp.clone();
                plus.data_mut()[i] += eps;
                let mut minus = lp.clone();
                minus.data_mut()[i] -= eps;
                let fp = rnnt_lattice_loss(&plus, &target).unwrap().neg_log_likelihood;
                let fm = rnnt_lattice_loss(&minus, &target).unwrap().neg_log_likelihood;
                let fd = (fp - fm) / (2.0 * eps);
                let a = grad.data()[i];
                assert!(rel_err(a, fd) <= 1e-6, "T={frames} U={tlen} i={i}: {a} vs {fd}");
            }
        }
    }
}

#[test]
fn occupancies_match_enumerated_posteriors() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let (frames, tlen, vocab) = (4, 3, 5);
    let lp = random_lattice(&mut rng, frames, tlen, vocab);
    let target = random_target(&mut rng, tlen, vocab);
    let loss = rnnt_loss(&lp, &target).unwrap();
    let total = (-loss.neg_log_likelihood).exp();
    let mut blank = vec![0.0; frames * (tlen + 1)];
    let mut label = vec![0.0; frames * tlen];
    for a in enumerate_alignments(frames, &target) {
        let w = alignment_log_prob(&lp, &a).exp() / total;
        let (mut t, mut u) = (0, 0);
        for &k in &a {
            if k == BLANK {
                blank[t * (tlen + 1) + u] += w;
                t += 1;
            } else {
                label[t * tlen + u] += w;
                u += 1;
            }
        }
    }
    for t in 0..frames {
        let mut frame_sum = 0.0;
        for u in 0..=tlen {
            let occ = loss.lattice.blank_occupancy(t, u);
            assert!((occ - blank[t * (tlen + 1) + u]).abs() < 1e-12);
            frame_sum += occ;
            if u < tlen {
                assert!((loss.lattice.label_occupancy(t, u) - label[t * tlen + u]).abs() < 1e-12);
            }
        }
        assert!((frame_sum - 1.0).abs() < 1e-12);
    }
}

fn classes() -> Vec<SymbolClass> {
    let c = |lang, kind| SymbolClass { lang, kind };
    vec![
        c(LanguageAttr::Neutral, SymbolKind::Blank),
        c(LanguageAttr::Mandarin, SymbolKind::LanguageId),
        c(LanguageAttr::English, SymbolKind::LanguageId),
        c(LanguageAttr::Mandarin, SymbolKind::MandarinChar),
        c(LanguageAttr::English, SymbolKind::EnglishWordpiece),
    ]
}

fn tiny_config() -> ModelConfig {
    ModelConfig {
        input_dim: 3,
        encoder_layers: 2,
        encoder_dim: 3,
        prediction_layers: 2,
        prediction_dim: 3,
        joint_dim: 4,
        embedding_dim: 2,
        lid_dim: 2,
        dropout: 0.0,
    }
}

#[test]
fn model_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let model = TransducerModel::new(tiny_config(), classes(), &mut rng).unwrap();
    let x = Tensor2::uniform(4, 3, 1.0, &mut rng);
    let target = [1, 3, 2, 4];
    let analytic = model_forward(&model, &x, &target, false, &mut rng).unwrap().grads;
    let eps = 1e-5;
    let mut checked = 0;
    let n_tensors = model.params.tensors().len();
    for ti in 0..n_tensors {
        let len = model.params.tensors()[ti].len();
        for i in 0..len {
            let eval = |delta: f64| {
                let mut m = model.clone();
                m.params.tensors_mut()[ti].data_mut()[i] += delta;
                model_forward(&m, &x, &target, false, &mut ChaCha8Rng::seed_from_u64(0))
                    .unwrap()
                    .loss
            };
            let fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
            let a = analytic.tensors()[ti].data()[i];
            assert!(rel_err(a, fd) <= 1e-4, "tensor {ti} entry {i}: {a} vs {fd}");
            checked += 1;
        }
    }
    assert_eq!(checked, model.params.num_values());
}

#[test]
fn fifty_adam_steps_overfit_one_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let config = ModelConfig {
        input_dim: 4,
        encoder_layers: 1,
        encoder_dim: 16,
        prediction_layers: 1,
        prediction_dim: 16,
        joint_dim: 16,
        embedding_dim: 8,
        lid_dim: 2,
        dropout: 0.0,
    };
    let mut model = TransducerModel::new(config, classes(), &mut rng).unwrap();
    let x = Tensor2::uniform(6, 4, 1.0, &mut rng);
    let target = [1, 3, 2, 4];
    let adam_config = AdamConfig {
        learning_rate: 0.05,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(adam_config, &model.params.tensors());
    let mut losses = Vec::new();
    for _ in 0..50 {
        let out = model_forward(&model, &x, &target, false, &mut rng).unwrap();
        losses.push(out.loss);
        let grads = out.grads;
        adam_step(&mut adam, &mut model.params.tensors_mut(), &grads.tensors()).unwrap();
    }
    let last = model_forward(&model, &x, &target, false, &mut rng).unwrap().loss;
    assert!(last < losses[0]);
    assert!(last < 0.1, "final loss {last}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_backward_agree_and_match_oracle(seed in any::<u64>(), frames in 1usize..=4, tlen in 0usize..=3, vocab in 2usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = random_lattice(&mut rng, frames, tlen, vocab);
        let target = random_target(&mut rng, tlen, vocab);
        let loss = rnnt_loss(&lp, &target).unwrap();
        let l = &loss.lattice;
        prop_assert!((l.log_likelihood_forward() - l.log_likelihood_backward()).abs() <= 1e-10);
        let brute = enumerate_alignments_oracle(&lp, &target).unwrap();
        prop_assert!((loss.neg_log_likelihood - brute).abs() <= 1e-10);
    }

    #[test]
    fn same_language_symbols_share_constraint(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = TransducerModel::new(tiny_config(), classes(), &mut rng).unwrap();
        let cls = classes();
        let lid = model.config.lid_dim;
        let emb = model.config.embedding_dim;
        for a in 0..cls.len() {
            for b in 0..cls.len() {
                if cls[a].lang == cls[b].lang {
                    let ea = model.embed_with_language_constraint(a).unwrap();
                    let eb = model.embed_with_language_constraint(b).unwrap();
                    prop_assert_eq!(&ea[emb..emb + lid], &eb[emb..emb + lid]);
                }
            }
        }
    }
}
