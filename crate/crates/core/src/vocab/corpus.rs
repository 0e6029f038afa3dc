//! `utt_id<TAB>space-separated tokens`, one utterance per line.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub id: String,
    pub tokens: Vec<String>,
}

pub fn parse_corpus(text: &str) -> Result<Vec<Utterance>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, rest) = line.split_once('\t').unwrap_or((line, ""));
        if id.is_empty() {
            return Err(Error::format("corpus", format!("line {}: missing utterance id", n + 1)));
        }
        out.push(Utterance {
            id: id.to_string(),
            tokens: rest.split_whitespace().map(str::to_string).collect(),
        });
    }
    Ok(out)
}

pub fn format_corpus(utts: &[Utterance]) -> String {
    let mut out = String::new();
    for u in utts {
        let _ = writeln!(out, "{}\t{}", u.id, u.tokens.join(" "));
    }
    out
}

pub fn read_corpus(path: &Path) -> Result<Vec<Utterance>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text)
}

pub fn write_corpus(path: &Path, utts: &[Utterance]) -> Result<()> {
    std::fs::write(path, format_corpus(utts)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_agree() {
        let text = "u1\t<chn> 我 <eng> go\nu2\t\n\nu3\tschool\n";
        let utts = parse_corpus(text).unwrap();
        assert_eq!(utts.len(), 3);
        assert_eq!(utts[0].tokens, vec!["<chn>", "我", "<eng>", "go"]);
        assert!(utts[1].tokens.is_empty());
        assert_eq!(format_corpus(&utts), "u1\t<chn> 我 <eng> go\nu2\t\nu3\tschool\n");
    }
}
