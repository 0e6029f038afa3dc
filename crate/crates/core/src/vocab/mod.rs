//! Output vocabulary, language classification and language-ID tagging,
//! English BPE, and the plain-text corpus format.

mod bpe;
pub mod corpus;
mod language;
mod tagging;
mod vocabulary;

pub use bpe::{bpe_decode, bpe_learn, word_counts, BpeModel, END_OF_WORD};
pub use language::{
    classify_token_language, is_cjk_ideograph, is_language_tag, tag_language, LanguageAttr, CHN_TAG, ENG_TAG,
};
pub use tagging::{insert_language_tags, strip_language_ids, tag_transcript};
pub use vocabulary::{build_vocab, Symbol, SymbolClass, SymbolKind, Vocabulary, BLANK, BLANK_SURFACE, CHN_ID, ENG_ID};
