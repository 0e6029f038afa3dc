use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::bpe::{bpe_decode, BpeModel};
use super::language::{classify_token_language, tag_language, LanguageAttr, CHN_TAG, ENG_TAG};
use crate::error::{Error, Result};

pub const BLANK: usize = 0;
pub const CHN_ID: usize = 1;
pub const ENG_ID: usize = 2;
pub const BLANK_SURFACE: &str = "<blank>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SymbolKind {
    Blank,
    LanguageId,
    MandarinChar,
    EnglishWordpiece,
}

impl SymbolKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SymbolKind::Blank => "blank",
            SymbolKind::LanguageId => "language_id",
            SymbolKind::MandarinChar => "mandarin_char",
            SymbolKind::EnglishWordpiece => "english_wordpiece",
        }
    }
}

impl fmt::Display for SymbolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SymbolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blank" => Ok(SymbolKind::Blank),
            "language_id" => Ok(SymbolKind::LanguageId),
            "mandarin_char" => Ok(SymbolKind::MandarinChar),
            "english_wordpiece" => Ok(SymbolKind::EnglishWordpiece),
            other => Err(Error::format("symbol kind", other)),
        }
    }
}

/// Language and kind of one output symbol; what the model and decoder need
/// to know about a symbol besides its index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymbolClass {
    pub lang: LanguageAttr,
    pub kind: SymbolKind,
}

impl SymbolClass {
    /// Eligible for language re-weighting: real Mandarin/English units only.
    pub fn is_lexical(self) -> bool {
        matches!(self.kind, SymbolKind::MandarinChar | SymbolKind::EnglishWordpiece)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Symbol {
    pub surface: String,
    pub class: SymbolClass,
}

/// Output symbol table: blank at 0, `<chn>` at 1, `<eng>` at 2, then sorted
/// Mandarin characters, then sorted English wordpieces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<Symbol>,
    index: HashMap<String, usize>,
}

fn reserved() -> Vec<Symbol> {
    vec![
        Symbol {
            surface: BLANK_SURFACE.to_string(),
            class: SymbolClass {
                lang: LanguageAttr::Neutral,
                kind: SymbolKind::Blank,
            },
        },
        Symbol {
            surface: CHN_TAG.to_string(),
            class: SymbolClass {
                lang: LanguageAttr::Mandarin,
                kind: SymbolKind::LanguageId,
            },
        },
        Symbol {
            surface: ENG_TAG.to_string(),
            class: SymbolClass {
                lang: LanguageAttr::English,
                kind: SymbolKind::LanguageId,
            },
        },
    ]
}

/// Builds the augmented vocabulary from tagged utterances and a trained BPE
/// model. Tokens that are neither tags, Mandarin nor English are reported.
pub fn build_vocab<S: AsRef<str>>(tagged_corpus: &[Vec<S>], bpe: &BpeModel) -> Result<Vocabulary> {
    if tagged_corpus.iter().all(|u| u.is_empty()) {
        return Err(Error::domain("cannot build a vocabulary from an empty corpus"));
    }
    let mut chars = BTreeSet::new();
    let mut english = BTreeSet::new();
    let mut rejected = BTreeSet::new();
    for token in tagged_corpus.iter().flatten() {
        let token = token.as_ref();
        if tag_language(token).is_some() {
            continue;
        }
        match classify_token_language(token)? {
            LanguageAttr::Mandarin => chars.extend(token.chars().map(String::from)),
            LanguageAttr::English => {
                english.insert(token);
            }
            LanguageAttr::Neutral => {
                rejected.insert(token.to_string());
            }
        }
    }
    if !rejected.is_empty() {
        return Err(Error::Untaggable(rejected.into_iter().collect()));
    }
    let pieces: BTreeSet<String> = english.iter().flat_map(|w| bpe.encode(w)).collect();

    let mut symbols = reserved();
    symbols.extend(chars.into_iter().map(|c| Symbol {
        surface: c,
        class: SymbolClass {
            lang: LanguageAttr::Mandarin,
            kind: SymbolKind::MandarinChar,
        },
    }));
    symbols.extend(pieces.into_iter().map(|p| Symbol {
        surface: p,
        class: SymbolClass {
            lang: LanguageAttr::English,
            kind: SymbolKind::EnglishWordpiece,
        },
    }));
    Vocabulary::from_symbols(symbols)
}

impl Vocabulary {
    pub fn from_symbols(symbols: Vec<Symbol>) -> Result<Self> {
        let expected = reserved();
        if symbols.len() < expected.len() || symbols[..expected.len()] != expected[..] {
            return Err(Error::format(
                "vocabulary",
                "indices 0..3 must be <blank>, <chn>, <eng>",
            ));
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            let ok = match s.class.kind {
                SymbolKind::Blank => i == BLANK,
                SymbolKind::LanguageId => i == CHN_ID || i == ENG_ID,
                SymbolKind::MandarinChar => s.class.lang == LanguageAttr::Mandarin,
                SymbolKind::EnglishWordpiece => s.class.lang == LanguageAttr::English,
            };
            if !ok {
                return Err(Error::format(
                    "vocabulary",
                    format!("symbol {i} {:?} has inconsistent kind/language", s.surface),
                ));
            }
            if index.insert(s.surface.clone(), i).is_some() {
                return Err(Error::format(
                    "vocabulary",
                    format!("duplicate surface {:?}", s.surface),
                ));
            }
        }
        Ok(Vocabulary { symbols, index })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn symbol(&self, id: usize) -> Option<&Symbol> {
        self.symbols.get(id)
    }

    pub fn id(&self, surface: &str) -> Option<usize> {
        self.index.get(surface).copied()
    }

    pub fn classes(&self) -> Vec<SymbolClass> {
        self.symbols.iter().map(|s| s.class).collect()
    }

    /// Maps a tagged, word-level transcript to output ids: tags map to their
    /// ids, Mandarin tokens split into characters, English words go through
    /// BPE.
    pub fn encode_transcript<S: AsRef<str>>(&self, tokens: &[S], bpe: &BpeModel) -> Result<Vec<usize>> {
        let mut ids = Vec::new();
        let lookup = |s: &str| {
            self.id(s)
                .ok_or_else(|| Error::domain(format!("symbol {s:?} is not in the vocabulary")))
        };
        for token in tokens {
            let token = token.as_ref();
            if tag_language(token).is_some() {
                ids.push(lookup(token)?);
                continue;
            }
            match classify_token_language(token)? {
                LanguageAttr::Mandarin => {
                    for c in token.chars() {
                        ids.push(lookup(c.encode_utf8(&mut [0; 4]))?);
                    }
                }
                LanguageAttr::English => {
                    for piece in bpe.encode(token) {
                        ids.push(lookup(&piece)?);
                    }
                }
                LanguageAttr::Neutral => return Err(Error::Untaggable(vec![token.to_string()])),
            }
        }
        Ok(ids)
    }

    /// Inverse of `encode_transcript` for blank-free id sequences: wordpieces
    /// are joined back into words, tags and characters pass through.
    pub fn decode_ids(&self, ids: &[usize]) -> Result<Vec<String>> {
        let mut out = Vec::new();
        let mut pending: Vec<&str> = Vec::new();
        for &id in ids {
            let sym = self.symbol(id).ok_or(Error::Index {
                what: "vocabulary",
                index: id,
                len: self.len(),
            })?;
            if sym.class.kind == SymbolKind::EnglishWordpiece {
                pending.push(&sym.surface);
                if sym.surface.ends_with(super::bpe::END_OF_WORD) {
                    out.extend(bpe_decode(&pending));
                    pending.clear();
                }
                continue;
            }
            out.extend(bpe_decode(&pending));
            pending.clear();
            if sym.class.kind != SymbolKind::Blank {
                out.push(sym.surface.clone());
            }
        }
        out.extend(bpe_decode(&pending));
        Ok(out)
    }

    /// `index<TAB>surface<TAB>lang<TAB>kind` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.symbols.iter().enumerate() {
            let _ = writeln!(out, "{i}\t{}\t{}\t{}", s.surface, s.class.lang, s.class.kind);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut symbols = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = || Error::format("vocabulary file", format!("line {}: {line:?}", n + 1));
            if fields.len() != 4 {
                return Err(bad());
            }
            let idx: usize = fields[0].parse().map_err(|_| bad())?;
            if idx != symbols.len() {
                return Err(bad());
            }
            symbols.push(Symbol {
                surface: fields[1].to_string(),
                class: SymbolClass {
                    lang: fields[2].parse()?,
                    kind: fields[3].parse()?,
                },
            });
        }
        Vocabulary::from_symbols(symbols)
    }

    /// Hex SHA-256 of the vocabulary file contents.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::bpe::{bpe_learn, word_counts, END_OF_WORD};

    fn utt(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn trivial_bpe_vocabulary_enumerates_units() {
        let corpus = vec![utt("<chn> 我 <eng> go")];
        let bpe = bpe_learn(&word_counts(["go"]), 0).unwrap();
        let vocab = build_vocab(&corpus, &bpe).unwrap();
        let surfaces: Vec<&str> = vocab.symbols().iter().map(|s| s.surface.as_str()).collect();
        assert_eq!(
            surfaces,
            vec![BLANK_SURFACE, "<chn>", "<eng>", "我", END_OF_WORD, "g", "o"]
        );
        assert_eq!(vocab.symbol(3).unwrap().class.kind, SymbolKind::MandarinChar);
        assert_eq!(vocab.symbol(5).unwrap().class.lang, LanguageAttr::English);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let bpe = BpeModel::default();
        assert!(build_vocab::<String>(&[], &bpe).is_err());
        assert!(build_vocab::<String>(&[vec![]], &bpe).is_err());
    }

    #[test]
    fn neutral_tokens_are_reported_not_dropped() {
        let bpe = BpeModel::default();
        let err = build_vocab(&[utt("<chn> 我 42 , go")], &bpe).unwrap_err();
        match err {
            Error::Untaggable(list) => assert_eq!(list, vec![",".to_string(), "42".to_string()]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn transcript_encoding_round_trips() {
        let corpus = vec![utt("<chn> 我 去 <eng> school today <chn> 学校")];
        let english: Vec<&str> = corpus[0]
            .iter()
            .map(String::as_str)
            .filter(|t| t.is_ascii() && !t.starts_with('<'))
            .collect();
        let bpe = bpe_learn(&word_counts(english), 10).unwrap();
        let vocab = build_vocab(&corpus, &bpe).unwrap();
        let ids = vocab.encode_transcript(&corpus[0], &bpe).unwrap();
        assert_eq!(ids[0], CHN_ID);
        assert!(!ids.contains(&BLANK));
        let expanded = utt("<chn> 我 去 <eng> school today <chn> 学 校");
        assert_eq!(vocab.decode_ids(&ids).unwrap(), expanded);
    }

    #[test]
    fn file_round_trip_and_hash() {
        let corpus = vec![utt("<chn> 我 <eng> go")];
        let bpe = bpe_learn(&word_counts(["go"]), 0).unwrap();
        let vocab = build_vocab(&corpus, &bpe).unwrap();
        let text = vocab.to_text();
        assert!(text.starts_with("0\t<blank>\tneutral\tblank\n1\t<chn>\tman\tlanguage_id\n"));
        let back = Vocabulary::from_text(&text).unwrap();
        assert_eq!(back, vocab);
        assert_eq!(back.hash(), vocab.hash());
        assert_eq!(vocab.hash().len(), 64);
    }

    #[test]
    fn rejects_inconsistent_tables() {
        assert!(Vocabulary::from_text("0\t<chn>\tman\tlanguage_id\n").is_err());
        let bad = "0\t<blank>\tneutral\tblank\n1\t<chn>\tman\tlanguage_id\n2\t<eng>\teng\tlanguage_id\n3\tx\tman\tenglish_wordpiece\n";
        assert!(Vocabulary::from_text(bad).is_err());
    }
}
