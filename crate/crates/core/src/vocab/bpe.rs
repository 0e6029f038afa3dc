//! Byte-pair-encoding subwords for English tokens.
//!
//! Words are split into characters followed by a separate end-of-word marker
//! unit, so `"go"` starts life as `["g", "o", "</w>"]`. Merges concatenate
//! the surface strings of the two units.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const END_OF_WORD: &str = "</w>";
const FILE_MAGIC: &str = "bpe-v1";

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    alphabet: BTreeSet<char>,
}

fn initial_units(word: &str) -> Vec<String> {
    word.chars()
        .map(String::from)
        .chain(std::iter::once(END_OF_WORD.to_string()))
        .collect()
}

fn apply_merge(units: &mut Vec<String>, left: &str, right: &str) {
    if units.len() < 2 {
        return;
    }
    let mut out = Vec::with_capacity(units.len());
    let mut i = 0;
    while i < units.len() {
        if i + 1 < units.len() && units[i] == left && units[i + 1] == right {
            out.push(format!("{left}{right}"));
            i += 2;
        } else {
            out.push(std::mem::take(&mut units[i]));
            i += 1;
        }
    }
    *units = out;
}

/// Learns up to `num_merges` merges from a word-frequency table.
///
/// Each round merges the most frequent adjacent pair (ties go to the
/// lexicographically smallest pair) and stops early once no pair occurs at
/// least twice.
pub fn bpe_learn(corpus: &BTreeMap<String, usize>, num_merges: usize) -> Result<BpeModel> {
    if corpus.values().all(|&c| c == 0) {
        return Err(Error::domain("cannot learn BPE from an empty corpus"));
    }
    let mut words: Vec<(Vec<String>, usize)> = corpus
        .iter()
        .filter(|(_, &c)| c > 0)
        .map(|(w, &c)| (initial_units(w), c))
        .collect();
    let alphabet = corpus.keys().flat_map(|w| w.chars()).collect();
    let mut merges = Vec::new();

    while merges.len() < num_merges {
        let mut pairs: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for (units, count) in &words {
            for w in units.windows(2) {
                *pairs.entry((w[0].as_str(), w[1].as_str())).or_default() += count;
            }
        }
        // BTreeMap iterates in lexicographic order, so the first maximum wins.
        let mut best: Option<((&str, &str), usize)> = None;
        for (pair, &count) in &pairs {
            if best.is_none_or(|(_, c)| count > c) {
                best = Some((*pair, count));
            }
        }
        let Some(((left, right), count)) = best else { break };
        if count < 2 {
            break;
        }
        let (left, right) = (left.to_string(), right.to_string());
        for (units, _) in &mut words {
            apply_merge(units, &left, &right);
        }
        merges.push((left, right));
    }

    Ok(BpeModel { merges, alphabet })
}

/// Word-frequency table from any token stream.
pub fn word_counts<'a>(tokens: impl IntoIterator<Item = &'a str>) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.to_string()).or_default() += 1;
    }
    counts
}

impl BpeModel {
    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn alphabet(&self) -> &BTreeSet<char> {
        &self.alphabet
    }

    /// Applies the merges, in learned order, to one word. Characters never
    /// seen in training simply stay single-character units.
    pub fn encode(&self, word: &str) -> Vec<String> {
        let mut units = initial_units(word);
        for (left, right) in &self.merges {
            apply_merge(&mut units, left, right);
        }
        units
    }

    /// Encodes a batch, caching repeated words.
    pub fn encode_all<'a>(&self, words: impl IntoIterator<Item = &'a str>) -> Vec<Vec<String>> {
        let mut cache: HashMap<&str, Vec<String>> = HashMap::new();
        words
            .into_iter()
            .map(|w| cache.entry(w).or_insert_with(|| self.encode(w)).clone())
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{FILE_MAGIC} {}\n", self.merges.len());
        for (l, r) in &self.merges {
            let _ = writeln!(out, "{l} {r}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::format("BPE model", "empty file"))?;
        let count: usize = header
            .strip_prefix(FILE_MAGIC)
            .and_then(|rest| rest.trim().parse().ok())
            .ok_or_else(|| Error::format("BPE model", format!("bad header {header:?}")))?;
        let mut merges = Vec::with_capacity(count);
        for (n, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let (l, r) = line
                .split_once(' ')
                .ok_or_else(|| Error::format("BPE model", format!("line {}: {line:?}", n + 2)))?;
            merges.push((l.to_string(), r.to_string()));
        }
        if merges.len() != count {
            return Err(Error::format(
                "BPE model",
                format!("header announces {count} merges, found {}", merges.len()),
            ));
        }
        let alphabet = merges
            .iter()
            .flat_map(|(l, r)| l.chars().chain(r.chars()))
            .filter(|c| !END_OF_WORD.contains(*c))
            .collect();
        Ok(BpeModel { merges, alphabet })
    }
}

/// Rebuilds words from a piece sequence: pieces are concatenated until one
/// ends with the end-of-word marker. A trailing unterminated run becomes a
/// final word.
pub fn bpe_decode<S: AsRef<str>>(pieces: &[S]) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    for p in pieces {
        let p = p.as_ref();
        if let Some(stem) = p.strip_suffix(END_OF_WORD) {
            current.push_str(stem);
            words.push(std::mem::take(&mut current));
        } else {
            current.push_str(p);
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(entries: &[(&str, usize)]) -> BTreeMap<String, usize> {
        entries.iter().map(|(w, c)| (w.to_string(), *c)).collect()
    }

    #[test]
    fn first_merge_counts_pairs_by_frequency() {
        let model = bpe_learn(&corpus(&[("low", 2), ("lower", 1)]), 1).unwrap();
        assert_eq!(model.merges(), &[("l".to_string(), "o".to_string())]);
    }

    #[test]
    fn zero_merges_gives_characters_and_marker() {
        let model = bpe_learn(&corpus(&[("go", 1)]), 0).unwrap();
        assert!(model.merges().is_empty());
        assert_eq!(model.encode("go"), vec!["g", "o", END_OF_WORD]);
    }

    #[test]
    fn stops_when_no_pair_repeats() {
        let model = bpe_learn(&corpus(&[("abc", 1)]), 10).unwrap();
        assert!(model.merges().is_empty());
        let model = bpe_learn(&corpus(&[("abab", 1)]), 10).unwrap();
        assert_eq!(model.merges().len(), 1);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(matches!(bpe_learn(&BTreeMap::new(), 5), Err(Error::Domain(_))));
    }

    #[test]
    fn encode_replays_learned_merges() {
        // Hand-derived merge history: (l,o)=3 beats (o,w)=3 lexicographically,
        // then (lo,w)=3, then (low,</w>)=2.
        let model = bpe_learn(&corpus(&[("low", 2), ("lower", 1)]), 3).unwrap();
        assert_eq!(
            model.merges(),
            &[
                ("l".to_string(), "o".to_string()),
                ("lo".to_string(), "w".to_string()),
                ("low".to_string(), END_OF_WORD.to_string()),
            ]
        );
        assert_eq!(model.encode("low"), vec!["low</w>"]);
        assert_eq!(model.encode("lower"), vec!["low", "e", "r", END_OF_WORD]);
        // Unseen characters fall back to single-character units.
        assert_eq!(model.encode("lowz"), vec!["low", "z", END_OF_WORD]);
    }

    #[test]
    fn file_round_trip() {
        let model = bpe_learn(&corpus(&[("hello", 3), ("help", 2), ("world", 2)]), 6).unwrap();
        let text = model.to_text();
        assert!(text.starts_with(&format!("bpe-v1 {}\n", model.merges().len())));
        let back = BpeModel::from_text(&text).unwrap();
        assert_eq!(back.merges(), model.merges());
        assert!(BpeModel::from_text("bpe-v1 2\na b\n").is_err());
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(
            training in prop::collection::vec("[a-z]{1,8}", 1..40),
            probes in prop::collection::vec("[a-zA-Z'-]{1,10}", 1..25),
            merges in 0usize..60,
        ) {
            let model = bpe_learn(&word_counts(training.iter().map(String::as_str)), merges).unwrap();
            for w in training.iter().chain(&probes) {
                prop_assert_eq!(bpe_decode(&model.encode(w)), vec![w.clone()]);
            }
        }
    }
}
