//! Glue between the synthetic corpus, the vocabulary, training and decoding.

use rayon::prelude::*;

use crate::decoder::{beam_search_decode, DecodeConfig, NbestEntry, NbestList};
use crate::error::Result;
use crate::nn::Tensor2;
use crate::synth::{SynthTranscript, SynthUtterance};
use crate::train::TrainExample;
use crate::transducer::TransducerModel;
use crate::vocab::{
    bpe_learn, build_vocab, classify_token_language, insert_language_tags, is_language_tag, word_counts, BpeModel,
    LanguageAttr, Vocabulary,
};

pub const DEFAULT_BPE_MERGES: usize = 200;

/// Word tokens of a transcript, with language-ID tags at switch points when
/// `tagged` is set.
pub fn transcript_tokens(t: &SynthTranscript, tagged: bool) -> Vec<String> {
    if tagged {
        insert_language_tags(&t.tokens)
    } else {
        t.words()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    pub bpe: BpeModel,
    pub vocab: Vocabulary,
}

/// BPE over the English words of a tagged training corpus, then the full
/// symbol inventory. Tagged and untagged systems share this inventory.
pub fn build_lexicon<S: AsRef<str>>(tagged_corpus: &[Vec<S>], merges: usize) -> Result<Lexicon> {
    let mut english = Vec::new();
    for token in tagged_corpus.iter().flatten() {
        let token = token.as_ref();
        if !is_language_tag(token) && classify_token_language(token)? == LanguageAttr::English {
            english.push(token);
        }
    }
    let bpe = bpe_learn(&word_counts(english), merges)?;
    let vocab = build_vocab(tagged_corpus, &bpe)?;
    Ok(Lexicon { bpe, vocab })
}

pub fn make_examples(utts: &[SynthUtterance], lex: &Lexicon, tagged: bool) -> Result<Vec<TrainExample>> {
    utts.iter()
        .map(|u| {
            let tokens = transcript_tokens(&u.transcript, tagged);
            Ok(TrainExample {
                id: u.transcript.id.clone(),
                features: u.features.clone(),
                target: lex.vocab.encode_transcript(&tokens, &lex.bpe)?,
            })
        })
        .collect()
}

/// Beam search over every utterance, in parallel, keeping input order.
/// Hypotheses are rendered as word-level tokens (tags kept).
pub fn decode_all(
    model: &TransducerModel,
    vocab: &Vocabulary,
    utts: &[(String, &Tensor2)],
    config: &DecodeConfig,
) -> Result<NbestList> {
    let decoded: Vec<Result<Vec<NbestEntry>>> = utts
        .par_iter()
        .map(|(id, feats)| {
            beam_search_decode(model, feats, config)?
                .iter()
                .enumerate()
                .map(|(r, h)| {
                    Ok(NbestEntry {
                        utt_id: id.clone(),
                        rank: r + 1,
                        log_prob: h.log_prob,
                        tokens: vocab.decode_ids(&h.tokens)?,
                    })
                })
                .collect()
        })
        .collect();
    let mut list = NbestList::default();
    for entries in decoded {
        for e in entries? {
            list.push(e);
        }
    }
    Ok(list)
}

/// Top entry per utterance.
pub fn one_best(list: &NbestList) -> Vec<(String, Vec<String>)> {
    list.utterances
        .iter()
        .map(|(id, entries)| {
            (
                id.clone(),
                entries.first().map(|e| e.tokens.clone()).unwrap_or_default(),
            )
        })
        .collect()
}
