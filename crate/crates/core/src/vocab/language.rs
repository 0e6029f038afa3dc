use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHN_TAG: &str = "<chn>";
pub const ENG_TAG: &str = "<eng>";

/// Language identity carried by every vocabulary symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LanguageAttr {
    Mandarin,
    English,
    Neutral,
}

impl LanguageAttr {
    pub fn as_str(self) -> &'static str {
        match self {
            LanguageAttr::Mandarin => "man",
            LanguageAttr::English => "eng",
            LanguageAttr::Neutral => "neutral",
        }
    }

    /// The language-ID token announcing this language, if any.
    pub fn tag(self) -> Option<&'static str> {
        match self {
            LanguageAttr::Mandarin => Some(CHN_TAG),
            LanguageAttr::English => Some(ENG_TAG),
            LanguageAttr::Neutral => None,
        }
    }

    pub fn short_code(self) -> char {
        match self {
            LanguageAttr::Mandarin => 'M',
            LanguageAttr::English => 'E',
            LanguageAttr::Neutral => 'N',
        }
    }

    pub fn from_short_code(c: char) -> Option<Self> {
        match c {
            'M' => Some(LanguageAttr::Mandarin),
            'E' => Some(LanguageAttr::English),
            'N' => Some(LanguageAttr::Neutral),
            _ => None,
        }
    }
}

impl fmt::Display for LanguageAttr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LanguageAttr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "man" => Ok(LanguageAttr::Mandarin),
            "eng" => Ok(LanguageAttr::English),
            "neutral" => Ok(LanguageAttr::Neutral),
            other => Err(Error::format("language attribute", other)),
        }
    }
}

/// Language announced by a language-ID token, or `None` for any other token.
pub fn tag_language(token: &str) -> Option<LanguageAttr> {
    match token {
        CHN_TAG => Some(LanguageAttr::Mandarin),
        ENG_TAG => Some(LanguageAttr::English),
        _ => None,
    }
}

pub fn is_language_tag(token: &str) -> bool {
    tag_language(token).is_some()
}

/// CJK Unified Ideographs, extensions A through F, and the compatibility
/// ideograph blocks.
pub fn is_cjk_ideograph(c: char) -> bool {
    matches!(
        c as u32,
        0x4E00..=0x9FFF
            | 0x3400..=0x4DBF
            | 0x20000..=0x2A6DF
            | 0x2A700..=0x2B73F
            | 0x2B740..=0x2B81F
            | 0x2B820..=0x2CEAF
            | 0x2CEB0..=0x2EBEF
            | 0x30000..=0x3134F
            | 0xF900..=0xFAFF
            | 0x2F800..=0x2FA1F
    )
}

fn is_english_char(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '\'' || c == '-'
}

/// Mandarin if any character is a CJK ideograph, English if every character
/// is an ASCII letter, apostrophe or hyphen, Neutral otherwise.
pub fn classify_token_language(token: &str) -> Result<LanguageAttr> {
    if token.is_empty() {
        return Err(Error::domain("cannot classify an empty token"));
    }
    if token.chars().any(char::is_whitespace) {
        return Err(Error::domain(format!("token {token:?} contains whitespace")));
    }
    if token.chars().any(is_cjk_ideograph) {
        Ok(LanguageAttr::Mandarin)
    } else if token.chars().all(is_english_char) {
        Ok(LanguageAttr::English)
    } else {
        Ok(LanguageAttr::Neutral)
    }
}
