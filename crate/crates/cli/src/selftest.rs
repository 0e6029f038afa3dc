//! Quick oracle checks runnable from the binary.

use csrnnt::decoder::{beam_search_decode, exhaustive_decode, DecodeConfig, LambdaMode};
use csrnnt::lm::ngram_train;
use csrnnt::metrics::mer_score;
use csrnnt::nn::{log_softmax, Tensor2};
use csrnnt::transducer::{
    enumerate_alignments_oracle, rnnt_lattice_loss, rnnt_loss, LatticeLogProbs, ModelConfig, TransducerModel,
};
use csrnnt::vocab::{LanguageAttr, SymbolClass, SymbolKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, worst: f64, tol: f64) -> CheckResult {
    CheckResult {
        name,
        passed: worst <= tol,
        detail: format!("worst {worst:.3e}, tolerance {tol:.0e}"),
    }
}

fn random_lattice(rng: &mut ChaCha8Rng, frames: usize, tlen: usize, vocab: usize) -> LatticeLogProbs {
    let mut data = Vec::with_capacity(frames * (tlen + 1) * vocab);
    for _ in 0..frames * (tlen + 1) {
        let logits: Vec<f64> = (0..vocab).map(|_| rng.gen_range(-3.0..3.0)).collect();
        data.extend(log_softmax(&logits).expect("finite logits"));
    }
    LatticeLogProbs::new(frames, tlen, vocab, data).expect("consistent lattice")
}

fn loss_oracle(rng: &mut ChaCha8Rng) -> csrnnt::Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (frames, tlen, vocab) = (rng.gen_range(1..=4), rng.gen_range(0..=3), rng.gen_range(2..=5));
        let lp = random_lattice(rng, frames, tlen, vocab);
        let target: Vec<usize> = (0..tlen).map(|_| rng.gen_range(1..vocab)).collect();
        let dp = rnnt_loss(&lp, &target)?.neg_log_likelihood;
        worst = worst.max((dp - enumerate_alignments_oracle(&lp, &target)?).abs());
    }
    Ok(check("loss matches alignment enumeration", worst, 1e-10))
}

fn node_gradients(rng: &mut ChaCha8Rng) -> csrnnt::Result<CheckResult> {
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let (frames, tlen, vocab) = (rng.gen_range(1..=4), rng.gen_range(0..=3), 4);
        let lp = random_lattice(rng, frames, tlen, vocab);
        let target: Vec<usize> = (0..tlen).map(|_| rng.gen_range(1..vocab)).collect();
        let grad = rnnt_loss(&lp, &target)?.grad;
        for i in 0..lp.data().len() {
            let mut plus = lp.clone();
            plus.data_mut()[i] += eps;
            let mut minus = lp.clone();
            minus.data_mut()[i] -= eps;
            let fd = (rnnt_lattice_loss(&plus, &target)?.neg_log_likelihood
                - rnnt_lattice_loss(&minus, &target)?.neg_log_likelihood)
                / (2.0 * eps);
            let a = grad.data()[i];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-8));
        }
    }
    Ok(check("lattice gradients match finite differences", worst, 1e-6))
}

fn tiny_model(rng: &mut ChaCha8Rng) -> csrnnt::Result<TransducerModel> {
    let c = |lang, kind| SymbolClass { lang, kind };
    let classes = vec![
        c(LanguageAttr::Neutral, SymbolKind::Blank),
        c(LanguageAttr::English, SymbolKind::LanguageId),
        c(LanguageAttr::English, SymbolKind::EnglishWordpiece),
    ];
    let config = ModelConfig {
        input_dim: 2,
        encoder_layers: 1,
        encoder_dim: 4,
        prediction_layers: 1,
        prediction_dim: 4,
        joint_dim: 4,
        embedding_dim: 3,
        lid_dim: 2,
        dropout: 0.0,
    };
    TransducerModel::new(config, classes, rng)
}

fn decoder_oracle(rng: &mut ChaCha8Rng) -> csrnnt::Result<CheckResult> {
    let mut failures = 0;
    for _ in 0..10 {
        let model = tiny_model(rng)?;
        let x = Tensor2::uniform(3, 2, 2.0, rng);
        let config = DecodeConfig {
            beam_size: 10_000,
            lambda_mode: LambdaMode::Fixed,
            lambda: 0.2,
            max_symbols_per_frame: 1,
        };
        let (best, _) = exhaustive_decode(&model, &x, &config)?;
        if beam_search_decode(&model, &x, &config)?[0].tokens != best {
            failures += 1;
        }
    }
    Ok(CheckResult {
        name: "saturated beam finds the exhaustive argmax",
        passed: failures == 0,
        detail: format!("{failures} of 10 instances differ"),
    })
}

fn lambda_zero(rng: &mut ChaCha8Rng) -> csrnnt::Result<CheckResult> {
    let mut failures = 0;
    for _ in 0..5 {
        let model = tiny_model(rng)?;
        let x = Tensor2::uniform(6, 2, 2.0, rng);
        let off = DecodeConfig::default();
        let zero = DecodeConfig {
            lambda_mode: LambdaMode::Fixed,
            lambda: 0.0,
            ..DecodeConfig::default()
        };
        let a = beam_search_decode(&model, &x, &off)?;
        let b = beam_search_decode(&model, &x, &zero)?;
        let same = a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|(p, q)| p.tokens == q.tokens && p.log_prob.to_bits() == q.log_prob.to_bits());
        if !same {
            failures += 1;
        }
    }
    Ok(CheckResult {
        name: "lambda 0 matches decoding without re-weighting",
        passed: failures == 0,
        detail: format!("{failures} of 5 instances differ"),
    })
}

fn mer_fixture() -> csrnnt::Result<CheckResult> {
    let r = |s: &str| {
        vec![(
            "u".to_string(),
            s.split_whitespace().map(str::to_string).collect::<Vec<_>>(),
        )]
    };
    let report = mer_score(&r("<chn> 我们 去 <eng> school"), &r("我们 去 skool"))?;
    let mer = report.mer();
    Ok(CheckResult {
        name: "mixed error rate fixture",
        passed: (mer - 100.0 / 4.0).abs() < 1e-12,
        detail: format!("MER {mer:.4}, expected 25.0000"),
    })
}

fn ngram_normalization() -> csrnnt::Result<CheckResult> {
    let corpus: Vec<Vec<&str>> = vec![vec!["a", "b", "a"], vec!["b", "a", "c"], vec!["a", "a"]];
    let lm = ngram_train(&corpus, 3, 0.75)?;
    let mut words: Vec<String> = lm.vocab().iter().cloned().collect();
    words.retain(|w| w != csrnnt::lm::SENT_START);
    let mut worst: f64 = 0.0;
    for ctx in lm.contexts() {
        let total: f64 = words.iter().map(|w| lm.prob(&ctx, w)).sum();
        worst = worst.max((total - 1.0).abs());
    }
    Ok(check("n-gram conditionals sum to one", worst, 1e-9))
}

/// Runs every check; an `Err` means a check could not run at all.
pub fn run_selftest(seed: u64) -> csrnnt::Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(vec![
        loss_oracle(&mut rng)?,
        node_gradients(&mut rng)?,
        decoder_oracle(&mut rng)?,
        lambda_zero(&mut rng)?,
        mer_fixture()?,
        ngram_normalization()?,
    ])
}
