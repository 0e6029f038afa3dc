//! One function per subcommand. Each writes the resolved configuration into
//! its output directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use csrnnt::decoder::{format_nbest, read_nbest, strip_language_ids, NbestList};
use csrnnt::lm::{ngram_train, rescore_nbest, LanguageModel, NgramModel, RnnLm};
use csrnnt::metrics::{lid_accuracy, mer_score, LidAccuracy, MerReport};
use csrnnt::nn::Tensor2;
use csrnnt::pipeline::{build_lexicon, decode_all, one_best, transcript_tokens, Lexicon};
use csrnnt::synth::{
    augment_speed, derive_seed, format_manifest, gen_split, read_features, read_manifest, write_features, Split,
};
use csrnnt::train::{EpochStats, TrainExample, Trainer};
use csrnnt::transducer::{Checkpoint, TransducerModel};
use csrnnt::vocab::corpus::{read_corpus, write_corpus, Utterance};
use csrnnt::vocab::{tag_transcript, BpeModel, Vocabulary};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::{CliError, Result};

pub const FEATS_DIR: &str = "feats";
pub const AUGMENTED_SPLIT: &str = "train-sp";
pub const BPE_FILE: &str = "bpe.txt";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const TRAIN_LOG: &str = "train.log";
pub const NBEST_FILE: &str = "nbest.txt";
pub const HYP_FILE: &str = "hyp.txt";
pub const HYP_TAGGED_FILE: &str = "hyp.tagged.txt";
pub const NGRAM_FILE: &str = "lm.arpa";
pub const RNNLM_FILE: &str = "lm.cslm";

pub fn manifest_path(data: &Path, split: &str) -> PathBuf {
    data.join(format!("{split}.manifest"))
}

/// Word transcripts, with or without language-ID tags.
pub fn transcript_path(data: &Path, split: &str, tagged: bool) -> PathBuf {
    if tagged {
        data.join(format!("{split}.tagged.txt"))
    } else {
        data.join(format!("{split}.txt"))
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn to_utterances(pairs: Vec<(String, Vec<String>)>) -> Vec<Utterance> {
    pairs.into_iter().map(|(id, tokens)| Utterance { id, tokens }).collect()
}

fn to_pairs(utts: Vec<Utterance>) -> Vec<(String, Vec<String>)> {
    utts.into_iter().map(|u| (u.id, u.tokens)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSummary {
    /// `(split, utterances)` in the order written.
    pub splits: Vec<(String, usize)>,
}

/// Writes features, manifests and tagged/untagged transcripts for the train,
/// dev and test splits, plus the speed-perturbed training split on request.
pub fn cmd_synth(cfg: &RunConfig, out: &Path, speed_perturb: bool) -> Result<SynthSummary> {
    cfg.synth.validate()?;
    create_dir(&out.join(FEATS_DIR))?;
    let mut summary = SynthSummary { splits: Vec::new() };
    for split in [Split::Train, Split::Dev, Split::Test] {
        let utts = gen_split(&cfg.synth, split)?;
        write_split(out, split.name(), &utts)?;
        summary.splits.push((split.name().to_string(), utts.len()));
        if speed_perturb && split == Split::Train {
            let aug = augment_speed(&utts, &cfg.speed_rates)?;
            write_split(out, AUGMENTED_SPLIT, &aug)?;
            summary.splits.push((AUGMENTED_SPLIT.to_string(), aug.len()));
        }
    }
    cfg.echo(out)?;
    Ok(summary)
}

fn write_split(out: &Path, split: &str, utts: &[csrnnt::synth::SynthUtterance]) -> Result<()> {
    let mut manifest = Vec::with_capacity(utts.len());
    let mut tagged = Vec::with_capacity(utts.len());
    let mut plain = Vec::with_capacity(utts.len());
    for u in utts {
        let id = &u.transcript.id;
        let rel = format!("{FEATS_DIR}/{id}.csft");
        write_features(&out.join(&rel), &u.features)?;
        manifest.push((id.clone(), rel));
        tagged.push((id.clone(), transcript_tokens(&u.transcript, true)));
        plain.push((id.clone(), transcript_tokens(&u.transcript, false)));
    }
    write_file(&manifest_path(out, split), format_manifest(&manifest))?;
    write_corpus(&transcript_path(out, split, true), &to_utterances(tagged))?;
    write_corpus(&transcript_path(out, split, false), &to_utterances(plain))?;
    Ok(())
}

/// Inserts language-ID tags into a word-level corpus file.
pub fn cmd_tag(input: &Path, output: &Path) -> Result<usize> {
    let utts = read_corpus(input)?;
    let tagged = utts
        .into_iter()
        .map(|u| {
            Ok(Utterance {
                tokens: tag_transcript(&u.tokens)?,
                id: u.id,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_corpus(output, &tagged)?;
    Ok(tagged.len())
}

/// Learns BPE on the English words of a tagged corpus and writes the merges
/// and the full vocabulary.
pub fn cmd_bpe_train(cfg: &RunConfig, tagged_corpus: &Path, out: &Path) -> Result<Lexicon> {
    let utts = read_corpus(tagged_corpus)?;
    let corpus: Vec<Vec<String>> = utts.into_iter().map(|u| u.tokens).collect();
    let lex = build_lexicon(&corpus, cfg.bpe_merges)?;
    create_dir(out)?;
    save_lexicon(&lex, out)?;
    cfg.echo(out)?;
    Ok(lex)
}

pub fn save_lexicon(lex: &Lexicon, dir: &Path) -> Result<()> {
    write_file(&dir.join(BPE_FILE), lex.bpe.to_text())?;
    write_file(&dir.join(VOCAB_FILE), lex.vocab.to_text())
}

pub fn load_lexicon(dir: &Path) -> Result<Lexicon> {
    let bpe_path = dir.join(BPE_FILE);
    let vocab_path = dir.join(VOCAB_FILE);
    if !bpe_path.exists() || !vocab_path.exists() {
        return Err(CliError::Core(csrnnt::Error::Domain(format!(
            "no lexicon in {}; run `csrnnt bpe-train` first",
            dir.display()
        ))));
    }
    Ok(Lexicon {
        bpe: BpeModel::from_text(&read_file(&bpe_path)?)?,
        vocab: Vocabulary::from_text(&read_file(&vocab_path)?)?,
    })
}

/// Features of every manifest entry, in manifest order.
pub fn load_features(data: &Path, split: &str) -> Result<Vec<(String, Tensor2)>> {
    read_manifest(&manifest_path(data, split))?
        .into_iter()
        .map(|(id, path)| Ok((id, read_features(&path)?)))
        .collect()
}

fn load_examples(data: &Path, split: &str, tagged: bool, lex: &Lexicon) -> Result<Vec<TrainExample>> {
    let mut features: BTreeMap<String, Tensor2> = load_features(data, split)?.into_iter().collect();
    read_corpus(&transcript_path(data, split, tagged))?
        .into_iter()
        .map(|u| {
            let features = features
                .remove(&u.id)
                .ok_or_else(|| csrnnt::Error::Domain(format!("utterance {} of split {split} has no features", u.id)))?;
            Ok(TrainExample {
                target: lex.vocab.encode_transcript(&u.tokens, &lex.bpe)?,
                id: u.id,
                features,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusKind {
    Tagged,
    Untagged,
}

impl std::str::FromStr for CorpusKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tagged" => Ok(CorpusKind::Tagged),
            "untagged" => Ok(CorpusKind::Untagged),
            other => Err(CliError::Usage(format!(
                "corpus must be tagged or untagged, got {other:?}"
            ))),
        }
    }
}

pub struct TrainRequest<'a> {
    pub data: &'a Path,
    pub lexicon: &'a Path,
    pub corpus: CorpusKind,
    pub train_split: &'a str,
    pub valid_split: &'a str,
    pub out: &'a Path,
    pub resume: bool,
}

/// Trains until `train.epochs` epochs are complete. The untagged corpus
/// trains a plain transducer, so its embedding constraint is disabled.
/// Writes `last.ckpt` every epoch and `best.ckpt` whenever the validation
/// loss improves.
pub fn cmd_train(
    cfg: &RunConfig,
    req: &TrainRequest,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<Vec<EpochStats>> {
    let mut cfg = cfg.clone();
    let tagged = req.corpus == CorpusKind::Tagged;
    if !tagged {
        cfg.model.lid_dim = 0;
    }
    let lex = load_lexicon(req.lexicon)?;
    let train = load_examples(req.data, req.train_split, tagged, &lex)?;
    let valid = load_examples(req.data, req.valid_split, tagged, &lex)?;
    create_dir(req.out)?;
    save_lexicon(&lex, req.out)?;
    cfg.echo(req.out)?;
    let config_json = serde_json::to_value(&cfg).expect("config serializes");
    let vocab_hash = lex.vocab.hash();

    let last = req.out.join(LAST_CHECKPOINT);
    let mut trainer = if req.resume {
        let ck = Checkpoint::load(&last)?;
        ck.check_vocab(&vocab_hash)?;
        Trainer::resume(ck, cfg.train.clone())?
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.train.seed, 0x1417]));
        let model = TransducerModel::new(cfg.model.clone(), lex.vocab.classes(), &mut rng)?;
        Trainer::new(model, cfg.train.clone())?
    };
    while !trainer.finished() {
        let stats = trainer.run_epoch(&train, &valid)?;
        trainer.checkpoint(&vocab_hash, config_json.clone()).save(&last)?;
        if stats.improved {
            let best = Checkpoint {
                model: trainer.best_model().expect("improved epoch records its parameters"),
                vocab_hash: vocab_hash.clone(),
                config: config_json.clone(),
                training: None,
            };
            best.save(&req.out.join(BEST_CHECKPOINT))?;
        }
        write_file(&req.out.join(TRAIN_LOG), format_train_log(&trainer.state.history))?;
        on_epoch(&stats);
    }
    Ok(trainer.state.history.clone())
}

pub fn format_train_log(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch\ttrain_loss\tvalid_loss\tlearning_rate\timproved\n");
    for s in history {
        out.push_str(&format!(
            "{}\t{:.6}\t{:.6}\t{}\t{}\n",
            s.epoch, s.train_loss, s.valid_loss, s.learning_rate, s.improved
        ));
    }
    out
}

pub struct DecodeRequest<'a> {
    pub checkpoint: &'a Path,
    pub vocab: &'a Path,
    pub data: &'a Path,
    pub split: &'a str,
    pub out: &'a Path,
}

/// Beam-searches every utterance of a split. Writes the N-best list, the
/// stripped 1-best transcripts and the 1-best with tags kept.
pub fn cmd_decode(cfg: &RunConfig, req: &DecodeRequest) -> Result<NbestList> {
    cfg.decode.validate()?;
    let vocab = Vocabulary::from_text(&read_file(req.vocab)?)?;
    let ck = Checkpoint::load(req.checkpoint)?;
    ck.check_vocab(&vocab.hash())?;
    let feats = load_features(req.data, req.split)?;
    let refs: Vec<(String, &Tensor2)> = feats.iter().map(|(id, f)| (id.clone(), f)).collect();
    let nbest = decode_all(&ck.model, &vocab, &refs, &cfg.decode)?;
    create_dir(req.out)?;
    write_file(&req.out.join(NBEST_FILE), format_nbest(&nbest))?;
    write_hypotheses(req.out, one_best(&nbest))?;
    cfg.echo(req.out)?;
    Ok(nbest)
}

fn write_hypotheses(out: &Path, best: Vec<(String, Vec<String>)>) -> Result<()> {
    let stripped = best.iter().map(|(id, t)| (id.clone(), strip_language_ids(t))).collect();
    write_corpus(&out.join(HYP_TAGGED_FILE), &to_utterances(best))?;
    write_corpus(&out.join(HYP_FILE), &to_utterances(stripped))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmKind {
    Ngram,
    Rnn,
}

impl std::str::FromStr for LmKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ngram" => Ok(LmKind::Ngram),
            "rnn" => Ok(LmKind::Rnn),
            other => Err(CliError::Usage(format!("lm kind must be ngram or rnn, got {other:?}"))),
        }
    }
}

/// Trains a word-level LM on a corpus file, tags included; returns the
/// model path.
pub fn cmd_lm_train(cfg: &RunConfig, corpus: &Path, kind: LmKind, out: &Path) -> Result<PathBuf> {
    let sentences: Vec<Vec<String>> = read_corpus(corpus)?.into_iter().map(|u| u.tokens).collect();
    create_dir(out)?;
    let path = match kind {
        LmKind::Ngram => {
            let lm = ngram_train(&sentences, cfg.lm.order, cfg.lm.discount)?;
            let path = out.join(NGRAM_FILE);
            lm.save(&path)?;
            path
        }
        LmKind::Rnn => {
            let rc = &cfg.lm.rnn;
            let mut rng = ChaCha8Rng::seed_from_u64(rc.seed);
            let mut lm = RnnLm::new(&sentences, rc.embedding_dim, rc.hidden_dim, Some(&mut rng))?;
            lm.train(&sentences, rc.epochs, rc.learning_rate)?;
            let path = out.join(RNNLM_FILE);
            lm.save(&path)?;
            path
        }
    };
    cfg.echo(out)?;
    Ok(path)
}

/// Loads either LM format, recognized by the recurrent model's magic bytes.
pub fn load_lm(path: &Path) -> Result<Box<dyn LanguageModel + Send + Sync>> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.starts_with(csrnnt::lm::RNNLM_MAGIC) {
        Ok(Box::new(RnnLm::from_bytes(&bytes)?))
    } else {
        let text = String::from_utf8(bytes).map_err(|_| csrnnt::Error::Format {
            what: "language model".into(),
            detail: "not UTF-8 text".into(),
        })?;
        Ok(Box::new(NgramModel::from_arpa(&text)?))
    }
}

pub struct RescoreRequest<'a> {
    pub nbest: &'a Path,
    pub lm: &'a Path,
    /// When given, every utterance listed must appear in the N-best file.
    pub manifest: Option<&'a Path>,
    pub out: &'a Path,
}

/// Re-ranks each utterance's N-best list and writes the new 1-best.
pub fn cmd_rescore(cfg: &RunConfig, req: &RescoreRequest) -> Result<Vec<(String, Vec<String>)>> {
    let nbest = read_nbest(req.nbest)?;
    let lm = load_lm(req.lm)?;
    if let Some(manifest) = req.manifest {
        let present: std::collections::BTreeSet<&str> = nbest.utterances.iter().map(|(id, _)| id.as_str()).collect();
        let missing: Vec<String> = read_manifest(manifest)?
            .into_iter()
            .map(|(id, _)| id)
            .filter(|id| !present.contains(id.as_str()))
            .collect();
        if !missing.is_empty() {
            return Err(csrnnt::Error::IdMismatch {
                missing,
                extra: Vec::new(),
            }
            .into());
        }
    }
    let best = nbest
        .utterances
        .iter()
        .map(|(id, entries)| {
            let ranked = rescore_nbest(entries, lm.as_ref(), &cfg.rescore)?;
            Ok((id.clone(), ranked[0].entry.tokens.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    create_dir(req.out)?;
    write_hypotheses(req.out, best.clone())?;
    cfg.echo(req.out)?;
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub mer: MerReport,
    pub lid: Option<LidAccuracy>,
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.mer)?;
        if let Some(l) = &self.lid {
            writeln!(f, "LID_ACC {:.2} ({} / {})", 100.0 * l.rate(), l.correct, l.total)?;
        }
        Ok(())
    }
}

/// MER of a hypothesis file against a reference file; with `lid`, also the
/// language-ID accuracy (both files then need their tags).
pub fn cmd_score(refs: &Path, hyps: &Path, lid: bool) -> Result<ScoreReport> {
    let r = to_pairs(read_corpus(refs)?);
    let h = to_pairs(read_corpus(hyps)?);
    Ok(ScoreReport {
        mer: mer_score(&r, &h)?,
        lid: if lid { Some(lid_accuracy(&r, &h)?) } else { None },
    })
}
