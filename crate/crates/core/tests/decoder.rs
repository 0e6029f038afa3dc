use csrnnt::decoder::{beam_search_decode, exhaustive_decode, reweight_posteriors, DecodeConfig, LambdaMode};
use csrnnt::nn::{log_softmax, Tensor2};
use csrnnt::transducer::{ModelConfig, TransducerModel};
use csrnnt::vocab::{LanguageAttr, SymbolClass, SymbolKind, BLANK};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn class(lang: LanguageAttr, kind: SymbolKind) -> SymbolClass {
    SymbolClass { lang, kind }
}

fn three_symbols() -> Vec<SymbolClass> {
    vec![
        class(LanguageAttr::Neutral, SymbolKind::Blank),
        class(LanguageAttr::English, SymbolKind::LanguageId),
        class(LanguageAttr::English, SymbolKind::EnglishWordpiece),
    ]
}

fn five_symbols() -> Vec<SymbolClass> {
    vec![
        class(LanguageAttr::Neutral, SymbolKind::Blank),
        class(LanguageAttr::Mandarin, SymbolKind::LanguageId),
        class(LanguageAttr::English, SymbolKind::LanguageId),
        class(LanguageAttr::Mandarin, SymbolKind::MandarinChar),
        class(LanguageAttr::English, SymbolKind::EnglishWordpiece),
    ]
}

fn small_config(lid_dim: usize) -> ModelConfig {
    ModelConfig {
        input_dim: 2,
        encoder_layers: 1,
        encoder_dim: 4,
        prediction_layers: 1,
        prediction_dim: 4,
        joint_dim: 4,
        embedding_dim: 3,
        lid_dim,
        dropout: 0.0,
    }
}

fn saturating(mode: LambdaMode) -> DecodeConfig {
    DecodeConfig {
        beam_size: 10_000,
        lambda_mode: mode,
        lambda: 0.2,
        max_symbols_per_frame: 1,
    }
}

#[test]
fn saturated_beam_finds_exhaustive_argmax() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = TransducerModel::new(small_config(2), three_symbols(), &mut rng).unwrap();
        let x = Tensor2::uniform(3, 2, 2.0, &mut rng);
        for mode in [LambdaMode::Off, LambdaMode::Fixed] {
            let config = saturating(mode);
            let hyps = beam_search_decode(&model, &x, &config).unwrap();
            let (best, score) = exhaustive_decode(&model, &x, &config).unwrap();
            assert_eq!(hyps[0].tokens, best, "seed {seed}");
            assert!((hyps[0].log_prob - score).abs() < 1e-10);
        }
    }
}

#[test]
fn zero_frames_give_empty_hypothesis() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = TransducerModel::new(small_config(2), five_symbols(), &mut rng).unwrap();
    let hyps = beam_search_decode(&model, &Tensor2::zeros(0, 2), &DecodeConfig::default()).unwrap();
    assert_eq!(hyps.len(), 1);
    assert!(hyps[0].tokens.is_empty());
    assert_eq!(hyps[0].log_prob, 0.0);
}

#[test]
fn off_mode_ignores_language_metadata() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = TransducerModel::new(small_config(0), five_symbols(), &mut rng).unwrap();
    let mut plain = model.clone();
    for c in plain.classes.iter_mut().skip(1) {
        *c = class(LanguageAttr::Neutral, SymbolKind::MandarinChar);
    }
    let x = Tensor2::uniform(6, 2, 2.0, &mut rng);
    let config = DecodeConfig::default();
    let a = beam_search_decode(&model, &x, &config).unwrap();
    let b = beam_search_decode(&plain, &x, &config).unwrap();
    assert_eq!(a.len(), b.len());
    for (ha, hb) in a.iter().zip(&b) {
        assert_eq!(ha.tokens, hb.tokens);
        assert_eq!(ha.log_prob.to_bits(), hb.log_prob.to_bits());
    }
}

#[test]
fn language_state_follows_last_id() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let model = TransducerModel::new(small_config(2), five_symbols(), &mut rng).unwrap();
    let x = Tensor2::uniform(5, 2, 2.0, &mut rng);
    let config = DecodeConfig {
        beam_size: 16,
        lambda_mode: LambdaMode::Prob,
        ..DecodeConfig::default()
    };
    for h in beam_search_decode(&model, &x, &config).unwrap() {
        assert!(h.log_prob <= 0.0);
        let last = h.tokens.iter().rev().find(|&&k| k == 1 || k == 2);
        let expected = match last {
            Some(1) => LanguageAttr::Mandarin,
            Some(_) => LanguageAttr::English,
            None => LanguageAttr::Neutral,
        };
        assert_eq!(h.current_language, expected);
        assert_eq!(h.id_posterior.is_some(), last.is_some());
        assert!(h.tokens.iter().all(|&k| k != BLANK));
    }
}

#[test]
fn wider_beam_never_lowers_top_score() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let model = TransducerModel::new(small_config(2), five_symbols(), &mut rng).unwrap();
        let x = Tensor2::uniform(6, 2, 2.0, &mut rng);
        let mut last = f64::NEG_INFINITY;
        for beam in [1, 2, 4, 8, 16] {
            let config = DecodeConfig {
                beam_size: beam,
                max_symbols_per_frame: 2,
                ..DecodeConfig::default()
            };
            let top = beam_search_decode(&model, &x, &config).unwrap()[0].log_prob;
            assert!(top >= last - 1e-12, "seed {seed} beam {beam}: {top} < {last}");
            last = top;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reweighting_keeps_order_and_mass(logits in proptest::collection::vec(-4.0f64..4.0, 5), lambda in 0.0f64..3.0, eng in any::<bool>()) {
        let lp = log_softmax(&logits).unwrap();
        let lang = if eng { LanguageAttr::English } else { LanguageAttr::Mandarin };
        let classes = vec![
            class(LanguageAttr::Neutral, SymbolKind::Blank),
            class(LanguageAttr::English, SymbolKind::LanguageId),
            class(LanguageAttr::English, SymbolKind::EnglishWordpiece),
            class(LanguageAttr::English, SymbolKind::EnglishWordpiece),
            class(LanguageAttr::Mandarin, SymbolKind::MandarinChar),
        ];
        let out = reweight_posteriors(&lp, &classes, lang, lambda).unwrap();
        let total: f64 = out.iter().map(|v| v.exp()).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        for i in 0..5 {
            for j in 0..5 {
                if classes[i].lang == classes[j].lang && classes[i].kind == classes[j].kind && lp[i] < lp[j] {
                    prop_assert!(out[i] <= out[j]);
                }
            }
        }
    }
}
