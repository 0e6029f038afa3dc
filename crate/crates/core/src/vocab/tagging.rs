//! Language-ID insertion at code-switch points.

use super::language::{classify_token_language, is_language_tag, LanguageAttr};
use crate::error::Result;

/// Inserts `<chn>`/`<eng>` before the first Mandarin or English token and
/// before every token whose language differs from the previous non-Neutral
/// token. Neutral tokens are transparent. Tags already present in the input
/// are dropped first, so re-tagging tagged text is a no-op.
pub fn insert_language_tags<S: AsRef<str>>(tokens: &[(S, LanguageAttr)]) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len() + 2);
    let mut current = None;
    for (token, attr) in tokens {
        let token = token.as_ref();
        if is_language_tag(token) {
            continue;
        }
        if let Some(tag) = attr.tag() {
            if current != Some(*attr) {
                out.push(tag.to_string());
                current = Some(*attr);
            }
        }
        out.push(token.to_string());
    }
    out
}

/// Classifies each token and tags the result; tags in the input are skipped.
pub fn tag_transcript<S: AsRef<str>>(tokens: &[S]) -> Result<Vec<String>> {
    let classified = tokens
        .iter()
        .filter(|t| !is_language_tag(t.as_ref()))
        .map(|t| Ok((t.as_ref().to_string(), classify_token_language(t.as_ref())?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(insert_language_tags(&classified))
}

/// Removes every language-ID token.
pub fn strip_language_ids<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| !is_language_tag(t))
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn monolingual_gets_one_leading_tag() {
        assert_eq!(tag_transcript(&words("我 去 学校")).unwrap(), words("<chn> 我 去 学校"));
    }

    #[test]
    fn tags_every_switch() {
        assert_eq!(
            tag_transcript(&words("我 喜欢 singing 和 dancing")).unwrap(),
            words("<chn> 我 喜欢 <eng> singing <chn> 和 <eng> dancing")
        );
    }

    #[test]
    fn empty_utterance() {
        assert!(tag_transcript::<String>(&[]).unwrap().is_empty());
    }

    #[test]
    fn neutral_tokens_are_transparent() {
        assert_eq!(
            tag_transcript(&words("123 我 42 去 go 7")).unwrap(),
            words("123 <chn> 我 42 去 <eng> go 7")
        );
        assert_eq!(tag_transcript(&words("1 2 3")).unwrap(), words("1 2 3"));
    }

    #[test]
    fn strip_examples() {
        assert_eq!(strip_language_ids(&words("<chn> 我 <eng> go")), words("我 go"));
        assert_eq!(strip_language_ids(&words("我 go")), words("我 go"));
        assert!(strip_language_ids(&words("<chn> <eng>")).is_empty());
    }

    fn token_strategy() -> impl Strategy<Value = String> {
        prop_oneof![
            prop::sample::select(vec!["我", "去", "学校", "和"]).prop_map(str::to_string),
            "[a-z]{1,6}",
            "[0-9]{1,3}",
        ]
    }

    proptest! {
        #[test]
        fn tagging_invariants(tokens in prop::collection::vec(token_strategy(), 0..20)) {
            let tagged = tag_transcript(&tokens).unwrap();
            // Stripping recovers the input.
            prop_assert_eq!(strip_language_ids(&tagged), tokens.clone());
            // Idempotent.
            prop_assert_eq!(tag_transcript(&tagged).unwrap(), tagged.clone());
            // Tag count = switches + leading tag.
            let langs: Vec<LanguageAttr> = tokens
                .iter()
                .map(|t| classify_token_language(t).unwrap())
                .filter(|a| *a != LanguageAttr::Neutral)
                .collect();
            let switches = langs.windows(2).filter(|w| w[0] != w[1]).count();
            let expected = if langs.is_empty() { 0 } else { switches + 1 };
            let tags = tagged.iter().filter(|t| is_language_tag(t)).count();
            prop_assert_eq!(tags, expected);
        }
    }
}
